import json
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multilabel_coco.coco import (
    RLE,
    CocoCategory,
    CocoDataset,
    CocoImage,
    dataset_to_json,
    make_annotation,
    parse_dataset,
    serialize_dataset,
    validate,
)
from multilabel_coco.geometry import bbox_from_polygon
from multilabel_coco.errors import CocoParseError, CocoSchemaError, CocoValidationError

CAT = CocoCategory(1, "rocker_arm", ("pivot", "valve_end", "pushrod_end"), ((1, 2), (1, 3)), "engine_part")
IMG = CocoImage(1, "a.png", 64, 48)


def _ann(**kw):
    base = make_annotation(1, 1, 1, [[10, 10, 30, 10, 30, 20, 10, 20]], [12, 12, 2, 0, 0, 0, 28, 18, 1])
    return replace(base, **kw)


def _ds(*anns, images=(IMG,), categories=(CAT,)):
    return CocoDataset(images, anns or (_ann(),), categories)


def _rules(ds):
    return {v.rule for v in validate(ds)}


# -- parsing ------------------------------------------------------------------


def test_parse_minimal():
    doc = {"images": [{"id": 1, "file_name": "a.png", "width": 4, "height": 4}],
           "categories": [{"id": 1, "name": "x"}], "annotations": []}
    ds = parse_dataset(json.dumps(doc))
    assert ds.annotations == ()
    assert ds.images == (CocoImage(1, "a.png", 4, 4),)


def test_parse_dangling_image_id():
    doc = {"images": [{"id": 1, "file_name": "a.png", "width": 4, "height": 4}],
           "categories": [{"id": 1, "name": "x"}],
           "annotations": [{"id": 5, "image_id": 99, "category_id": 1, "bbox": [0, 0, 1, 1],
                            "segmentation": [[0, 0, 1, 0, 1, 1]]}]}
    with pytest.raises(CocoSchemaError, match="dangling image_id"):
        parse_dataset(json.dumps(doc))


def test_parse_missing_field_names_field_and_record():
    doc = {"images": [{"id": 7, "file_name": "a.png", "width": 4}], "categories": [], "annotations": []}
    with pytest.raises(CocoSchemaError, match=r"image 7.*'height'"):
        parse_dataset(json.dumps(doc))


def test_parse_malformed_json_reports_byte_offset():
    text = '{"images": [ ], "é": [}'
    with pytest.raises(CocoParseError) as info:
        parse_dataset(text)
    # 'é' is two bytes in UTF-8, so the byte offset is one past the char offset
    assert info.value.offset == len(text[:text.index("}")].encode())


def test_parse_unknown_top_level_key_goes_to_info():
    doc = {"images": [], "categories": [], "annotations": [], "licenses": [{"id": 1}],
           "info": {"year": 2023}}
    ds = parse_dataset(json.dumps(doc))
    assert ds.info == {"year": 2023, "licenses": [{"id": 1}]}


def test_parse_unknown_record_key_dropped_with_warning():
    doc = {"images": [{"id": 1, "file_name": "a.png", "width": 4, "height": 4, "foo": 1}],
           "categories": [], "annotations": []}
    with pytest.warns(UserWarning, match="foo"):
        ds = parse_dataset(json.dumps(doc))
    assert ds.images[0] == CocoImage(1, "a.png", 4, 4)


def test_parse_assigns_missing_ids_in_encounter_order():
    doc = {"images": [{"file_name": "a.png", "width": 4, "height": 4},
                      {"id": 1, "file_name": "b.png", "width": 4, "height": 4},
                      {"file_name": "c.png", "width": 4, "height": 4}],
           "categories": [], "annotations": []}
    ds = parse_dataset(json.dumps(doc))
    assert [(i.id, i.file_name) for i in ds.images] == [(2, "a.png"), (1, "b.png"), (3, "c.png")]


def test_parse_derives_optional_annotation_fields():
    doc = {"images": [{"id": 1, "file_name": "a.png", "width": 40, "height": 40}],
           "categories": [{"id": 1, "name": "x", "keypoints": ["p"]}],
           "annotations": [{"id": 1, "image_id": 1, "category_id": 1, "bbox": [0, 0, 4, 3],
                            "segmentation": [[0, 0, 4, 0, 0, 3]], "keypoints": [1, 1, 2]}]}
    ann = parse_dataset(json.dumps(doc)).annotations[0]
    assert ann.area == 6.0
    assert ann.num_keypoints == 1
    assert ann.iscrowd == 0


def test_parse_rle_segmentation():
    doc = {"images": [{"id": 1, "file_name": "a.png", "width": 2, "height": 2}],
           "categories": [{"id": 1, "name": "x"}],
           "annotations": [{"id": 1, "image_id": 1, "category_id": 1, "bbox": [1, 0, 1, 1],
                            "segmentation": {"size": [2, 2], "counts": [2, 1, 1]}, "iscrowd": 1}]}
    ds = parse_dataset(json.dumps(doc))
    assert ds.annotations[0].segmentation == RLE((2, 2), (2, 1, 1))
    assert ds.annotations[0].area == 1
    assert validate(ds) == []


def test_parse_rejects_compressed_rle():
    doc = {"images": [{"id": 1, "file_name": "a.png", "width": 2, "height": 2}],
           "categories": [{"id": 1, "name": "x"}],
           "annotations": [{"id": 1, "image_id": 1, "category_id": 1, "bbox": [0, 0, 1, 1],
                            "segmentation": {"size": [2, 2], "counts": "0`1"}, "iscrowd": 1}]}
    with pytest.raises(CocoSchemaError, match="compressed"):
        parse_dataset(json.dumps(doc))


# -- serialization --------------------------------------------------------------


def test_serialize_empty():
    assert json.loads(serialize_dataset(CocoDataset())) == {"images": [], "annotations": [], "categories": []}


def test_serialize_invisible_keypoint_triple():
    doc = json.loads(serialize_dataset(_ds()))
    assert doc["annotations"][0]["keypoints"][3:6] == [0, 0, 0]


def test_serialize_annotation_keys_and_order():
    doc = json.loads(serialize_dataset(_ds(_ann(id=3), _ann(id=2))))
    assert [a["id"] for a in doc["annotations"]] == [2, 3]
    assert list(doc["annotations"][0]) == ["id", "image_id", "category_id", "bbox", "area",
                                          "segmentation", "keypoints", "num_keypoints", "iscrowd"]


def test_serialize_rounds_to_two_decimals():
    ann = make_annotation(1, 1, 1, [[1.23456, 2, 10.0049, 2, 10, 8.996]], [])
    ds = CocoDataset([IMG], [ann], [CocoCategory(1, "x")])
    doc = json.loads(serialize_dataset(ds))
    assert doc["annotations"][0]["segmentation"] == [[1.23, 2, 10, 2, 10, 9]]
    assert doc["annotations"][0]["bbox"] == [1.23, 2, 8.77, 7]


def test_serialize_refuses_invalid():
    with pytest.raises(CocoValidationError) as info:
        serialize_dataset(_ds(_ann(bbox=(-1, 0, 5, 5))))
    assert info.value.violations[0].rule == "bbox outside image"


def test_round_trip_fixture():
    ds = _ds(_ann(), replace(_ann(id=2), segmentation=RLE((48, 64), (10, 5, 48 * 64 - 15)), iscrowd=1,
                             area=5.0))
    assert validate(ds) == []
    text = serialize_dataset(ds)
    assert parse_dataset(text) == ds
    assert serialize_dataset(parse_dataset(text)) == text


two_dec = st.integers(0, 6000).map(lambda v: v / 100)


@st.composite
def datasets(draw):
    n_img = draw(st.integers(0, 3))
    images = [CocoImage(i + 1, f"img_{i}.png", 64, 64) for i in range(n_img)]
    k = draw(st.integers(0, 4))
    cats = [CocoCategory(1, "c", tuple(f"k{i}" for i in range(k)),
                         tuple((1, j) for j in range(2, k + 1)))]
    anns = []
    if images:
        for aid in range(1, draw(st.integers(0, 5)) + 1):
            n = draw(st.integers(3, 8))
            ring = [draw(two_dec) for _ in range(2 * n)]
            kps = []
            for _ in range(k):
                v = draw(st.sampled_from([0, 1, 2]))
                kps += [0, 0, 0] if v == 0 else [draw(two_dec), draw(two_dec), v]
            bbox = [round(b, 2) for b in bbox_from_polygon(ring)]
            anns.append(make_annotation(aid, draw(st.sampled_from(images)).id, 1, [ring], kps, bbox=bbox))
    info = draw(st.sampled_from([{}, {"description": "synthetic"}]))
    return CocoDataset(images, anns, cats, info)


@given(datasets())
@settings(max_examples=80, deadline=None)
def test_parse_serialize_identity(ds):
    assert validate(ds) == []
    text = serialize_dataset(ds)
    again = parse_dataset(text)
    assert again == ds
    assert serialize_dataset(again) == text


# -- validation -----------------------------------------------------------------


def test_valid_fixture():
    assert validate(_ds()) == []


@pytest.mark.parametrize(
    "mutate, rule",
    [
        (lambda d: replace(d, images=d.images + (CocoImage(1, "b.png", 5, 5),)), "duplicate id"),
        (lambda d: replace(d, images=(CocoImage(0, "a.png", 64, 48),)), "invalid id"),
        (lambda d: replace(d, images=(CocoImage(1, "a.png", 0, 48),)), "image dimensions"),
        (lambda d: replace(d, images=(CocoImage(1, "a.png", 64.5, 48),)), "image dimensions"),
        (lambda d: replace(d, annotations=(_ann(image_id=9),)), "dangling image_id"),
        (lambda d: replace(d, annotations=(_ann(category_id=9),)), "dangling category_id"),
        (lambda d: replace(d, annotations=(_ann(bbox=(-1, 0, 5, 5)),)), "bbox outside image"),
        (lambda d: replace(d, annotations=(_ann(bbox=(60, 0, 5, 5)),)), "bbox outside image"),
        (lambda d: replace(d, annotations=(_ann(bbox=(0, 0, 5)),)), "bbox arity"),
        (lambda d: replace(d, annotations=(_ann(area=-1.0),)), "area negative"),
        (lambda d: replace(d, annotations=(_ann(segmentation=((1, 1, 2, 2),)),)), "polygon ring"),
        (lambda d: replace(d, annotations=(_ann(segmentation=((1, 1, 2, 2, 3, 3, 4),)),)), "polygon ring"),
        (lambda d: replace(d, annotations=(_ann(keypoints=(1, 1, 2, 0, 0, 0, 5, 5)),)), "keypoint arity"),
        (lambda d: replace(d, annotations=(_ann(keypoints=(1, 1, 3, 0, 0, 0, 5, 5, 2), num_keypoints=3),)),
         "keypoint visibility"),
        (lambda d: replace(d, annotations=(_ann(keypoints=(1, 1, 2, 4, 4, 0, 5, 5, 2), num_keypoints=2),)),
         "invisible keypoint coordinates"),
        (lambda d: replace(d, annotations=(_ann(num_keypoints=3),)), "num_keypoints mismatch"),
        (lambda d: replace(d, annotations=(_ann(iscrowd=1),)), "iscrowd segmentation"),
        (lambda d: replace(d, annotations=(_ann(segmentation=RLE((48, 64), (48 * 64,))),)), "iscrowd segmentation"),
        (lambda d: replace(d, annotations=(_ann(iscrowd=2),)), "iscrowd value"),
        (lambda d: replace(d, annotations=(_ann(iscrowd=1, segmentation=RLE((48, 64), (5,))),)), "rle sum"),
        (lambda d: replace(d, annotations=(_ann(iscrowd=1, segmentation=RLE((48, 64), (5, 0, 48 * 64 - 5))),)),
         "rle zero run"),
        (lambda d: replace(d, annotations=(_ann(iscrowd=1, segmentation=RLE((2, 2), (4,))),)), "rle size"),
        (lambda d: replace(d, categories=(replace(CAT, skeleton=((1, 4),)),)), "skeleton index"),
        (lambda d: replace(d, categories=(replace(CAT, keypoint_names=("a", "a", "b")),)), "duplicate keypoint name"),
    ],
)
def test_each_invariant_has_a_mutation(mutate, rule):
    assert rule in _rules(mutate(_ds()))


def test_violation_example_keypoint_arity_eight_for_k3():
    ds = _ds(_ann(keypoints=(1, 1, 2, 0, 0, 0, 5, 5)))
    v = [v for v in validate(ds) if v.rule == "keypoint arity"]
    assert v and v[0].record_kind == "annotation" and v[0].record_id == 1


def test_dataset_to_json_skips_empty_info():
    assert "info" not in dataset_to_json(_ds())
