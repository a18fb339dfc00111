import json

import numpy as np
import pytest

from multilabel_coco.coco import validate
from multilabel_coco.errors import GeometryError, IngestError
from multilabel_coco.fixtures import categories_fixture_text, jsonmin_fixture_text
from multilabel_coco.labelstudio import (
    CategorySpec,
    KeypointResult,
    LabelTask,
    PolygonResult,
    associate_keypoints,
    bbox_from_polygon,
    convert,
    parse_category_specs,
    parse_jsonmin,
    percent_to_pixels,
)

from oracles import brute_bbox
from strategies import star_polygon

ARM = CategorySpec("arm", ("a", "b", "c"))


def _pct(points, w=100, h=100):
    return tuple((x * 100 / w, y * 100 / h) for x, y in points)


def _record(**extra):
    rec = {
        "image": "/data/upload/1/img.png",
        "label": [{"points": [[10, 10], [20, 10], [20, 20], [10, 20]], "polygonlabels": ["arm"],
                   "original_width": 200, "original_height": 100}],
        "kp-1": [{"x": 15, "y": 15, "width": 0.5, "keypointlabels": ["a"],
                  "original_width": 200, "original_height": 100}],
    }
    rec.update(extra)
    return rec


# -- parse_jsonmin -------------------------------------------------------------


def test_parse_empty():
    assert parse_jsonmin("[]") == []


def test_parse_fixture_first_task():
    tasks = parse_jsonmin(jsonmin_fixture_text())
    assert len(tasks) == 2
    t = tasks[0]
    assert t.file_name == "8f2c1a0e-engine_001.png"
    assert (t.original_width, t.original_height) == (320, 240)
    assert len(t.polygon_results) == 2
    assert len(t.keypoint_results) == 6
    # percentages untouched
    assert t.polygon_results[0].points[0] == (12.5, 25.0)


def test_parse_one_polygon_three_keypoints():
    rec = _record()
    rec["kp-1"] = [dict(rec["kp-1"][0], keypointlabels=[n], x=x) for n, x in (("a", 11), ("b", 12), ("c", 13))]
    (task,) = parse_jsonmin(json.dumps([rec]))
    assert len(task.polygon_results) == 1
    assert len(task.polygon_results[0].points) == 4
    assert [k.label for k in task.keypoint_results] == ["a", "b", "c"]


def test_parse_coordinate_out_of_range():
    rec = _record()
    rec["kp-1"][0]["x"] = 120
    with pytest.raises(IngestError, match="coordinate out of range"):
        parse_jsonmin(json.dumps([rec]))


def test_parse_missing_image_names_record():
    rec = _record()
    del rec["image"]
    with pytest.raises(IngestError, match="record 1"):
        parse_jsonmin(json.dumps([_record(), rec]))


def test_parse_missing_dimensions():
    rec = _record()
    for r in rec["label"] + rec["kp-1"]:
        del r["original_width"]
    with pytest.raises(IngestError, match="record 0.*original_width"):
        parse_jsonmin(json.dumps([rec]))


def test_parse_record_level_dimensions_and_type_field():
    rec = {"image": "x.png", "original_width": 50, "original_height": 40,
           "poly": [{"type": "polygon", "points": [[0, 0], [10, 0], [0, 10]], "labels": ["arm"]}],
           "kp": [{"type": "keypoint", "x": 1, "y": 1, "labels": ["a"]}]}
    (task,) = parse_jsonmin(json.dumps([rec]))
    assert (task.original_width, task.original_height) == (50, 40)
    assert task.polygon_results[0].label == "arm"
    assert task.keypoint_results[0].label == "a"


def test_file_name_unquotes_urls():
    t = LabelTask("http://host/data/upload/2/my%20img.jpg", 1, 1)
    assert t.file_name == "my img.jpg"


# -- percent_to_pixels ----------------------------------------------------------


@pytest.mark.parametrize(
    "pt, size, expected",
    [((50, 50), (640, 480), (320, 240)), ((0, 100), (640, 480), (0, 480)), ((12.5, 25), (800, 400), (100, 100))],
)
def test_percent_to_pixels(pt, size, expected):
    assert percent_to_pixels([pt], *size) == [expected]


# -- bbox -----------------------------------------------------------------------


def test_bbox_random_polygons_match_oracle():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        poly = star_polygon(rng, rng.uniform(0, 500), rng.uniform(0, 500), 1, 80, rng.integers(3, 15))
        assert bbox_from_polygon(poly.ravel()) == pytest.approx(brute_bbox(poly.tolist()), abs=1e-9)


def test_bbox_too_few_vertices():
    with pytest.raises(GeometryError):
        bbox_from_polygon([0, 0, 1, 1])


# -- association ----------------------------------------------------------------


def _task(polys, kps, w=100, h=100):
    return LabelTask("img.png", w, h,
                     tuple(PolygonResult(label, _pct(pts, w, h)) for label, pts in polys),
                     tuple(KeypointResult(label, x * 100 / w, y * 100 / h) for label, x, y in kps))


SQUARE_A = [(10, 10), (30, 10), (30, 30), (10, 30)]
SQUARE_B = [(60, 10), (90, 10), (90, 30), (60, 30)]


def test_keypoint_inside_polygon_a():
    out = associate_keypoints(_task([("arm", SQUARE_A), ("arm", SQUARE_B)], [("a", 20, 20)]), [ARM])
    assert out[0][0].tolist() == [20, 20, 2]
    assert out[1].sum() == 0


def test_keypoint_nearest_boundary():
    # 2 px right of A's edge, 28 px left of B's edge
    out = associate_keypoints(_task([("arm", SQUARE_A), ("arm", SQUARE_B)], [("a", 32, 20)]), [ARM])
    assert out[0][0].tolist() == [32, 20, 2]
    # 2 px left of B, far from A
    out = associate_keypoints(_task([("arm", SQUARE_A), ("arm", SQUARE_B)], [("a", 58, 20)]), [ARM])
    assert out[1][0].tolist() == [58, 20, 2]


def test_unlabeled_slot_is_padded():
    task = _task([("arm", SQUARE_A)], [("a", 12, 12), ("c", 25, 25)])
    (kps,) = associate_keypoints(task, [ARM])
    assert kps.tolist() == [[12, 12, 2], [0, 0, 0], [25, 25, 2]]
    ds = convert([task], [ARM])
    assert ds.annotations[0].num_keypoints == 2


def test_unknown_keypoint_label():
    with pytest.raises(IngestError, match="not in any category"):
        associate_keypoints(_task([("arm", SQUARE_A)], [("zzz", 12, 12)]), [ARM])


def test_polygon_label_without_spec():
    with pytest.raises(IngestError, match="no category spec"):
        associate_keypoints(_task([("gear", SQUARE_A)], []), [ARM])


def test_duplicate_keypoint_on_instance():
    with pytest.raises(IngestError, match="twice"):
        associate_keypoints(_task([("arm", SQUARE_A)], [("a", 12, 12), ("a", 14, 14)]), [ARM])


def test_keypoint_only_goes_to_categories_that_know_it():
    rod = CategorySpec("rod", ("top",))
    task = _task([("arm", SQUARE_A), ("rod", SQUARE_B)], [("top", 20, 20)])
    out = associate_keypoints(task, [ARM, rod])
    assert out[0].sum() == 0
    assert out[1].tolist() == [[20, 20, 2]]


def test_association_is_permutation_invariant():
    rng = np.random.default_rng(5)
    polys = [("arm", SQUARE_A), ("arm", SQUARE_B), ("arm", [(40, 50), (70, 50), (55, 90)])]
    kps = [("a", 20, 20), ("b", 32, 12), ("c", 88, 28), ("a", 55, 70), ("b", 61, 20), ("c", 50, 95), ("a", 75, 25)]
    base = associate_keypoints(_task(polys, kps), [ARM])
    for _ in range(20):
        perm = rng.permutation(len(kps))
        other = associate_keypoints(_task(polys, [kps[i] for i in perm]), [ARM])
        assert all(np.array_equal(x, y) for x, y in zip(base, other))


# -- convert --------------------------------------------------------------------


def test_convert_two_polygons_three_keypoints_each():
    task = _task([("arm", SQUARE_A), ("arm", SQUARE_B)],
                 [("a", 12, 12), ("b", 20, 20), ("c", 28, 28), ("a", 62, 12), ("b", 75, 20), ("c", 88, 28)])
    ds = convert([task], [ARM])
    assert len(ds.images) == 1
    assert [a.num_keypoints for a in ds.annotations] == [3, 3]
    assert ds.annotations[0].bbox == (10, 10, 20, 20)
    assert ds.annotations[0].area == 400
    assert validate(ds) == []


def test_convert_polygon_without_keypoints():
    ds = convert([_task([("arm", SQUARE_A)], [])], [ARM])
    assert ds.annotations[0].keypoints == (0,) * 9
    assert ds.annotations[0].num_keypoints == 0


def test_convert_empty():
    ds = convert([], [ARM])
    assert ds.images == () and ds.annotations == ()
    assert validate(ds) == []


def test_convert_fixture_counts():
    ds = convert(parse_jsonmin(jsonmin_fixture_text()), parse_category_specs(categories_fixture_text()))
    assert validate(ds) == []
    assert len(ds.images) == 2
    assert [a.num_keypoints for a in ds.annotations] == [3, 3, 3, 1]
    assert [c.name for c in ds.categories] == ["rocker_arm", "pushrod"]
    # hand-computed from the authored pixel geometry
    assert ds.annotations[0].bbox == (40, 50, 110, 35)
    assert ds.annotations[0].area == 2375
    # the outside-the-polygon keypoint lands on the nearest instance
    assert ds.annotations[1].keypoints[6:9] == (297, 152, 2)


def test_category_spec_file_errors():
    with pytest.raises(IngestError):
        parse_category_specs('{"name": "x"}')
    with pytest.raises(IngestError):
        parse_category_specs('[{"keypoints": []}]')
    with pytest.raises(IngestError, match="duplicate"):
        parse_category_specs('[{"name": "x", "keypoints": ["a", "a"]}]')
