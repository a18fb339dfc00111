"""Label Studio JSON-min ingestion into a combined COCO dataset.

A JSON-min export is an array of task records.  Each record holds the image
reference, and one list per labeling control whose entries are either polygon
results (``points`` given as percent pairs plus ``polygonlabels``) or keypoint
results (percent ``x``/``y`` plus ``keypointlabels``).

Bounding boxes are the outer bounds of each polygon.  Keypoints are attached
to a polygon instance by containment first, then by distance to the polygon
boundary.  This association rule is an assumption: JSON-min carries no
explicit link between a keypoint and the object it belongs to.
"""

from __future__ import annotations

import json
import math
import posixpath
from dataclasses import dataclass
from typing import Sequence
from urllib.parse import unquote, urlparse

import numpy as np

from .coco import CocoCategory, CocoDataset, CocoImage, make_annotation
from .errors import IngestError
from .geometry import bbox_from_polygon, distance_to_boundary, rasterize_polygon, shoelace_area

__all__ = [
    "CategorySpec",
    "KeypointResult",
    "LabelTask",
    "PolygonResult",
    "associate_keypoints",
    "bbox_from_polygon",
    "convert",
    "load_category_specs",
    "parse_category_specs",
    "parse_jsonmin",
    "percent_to_pixels",
]

_IMAGE_KEYS = ("image", "img", "image_url")
_PIXEL_DECIMALS = 2


@dataclass(frozen=True)
class PolygonResult:
    label: str
    points: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class KeypointResult:
    label: str
    x: float
    y: float


@dataclass(frozen=True)
class LabelTask:
    """One JSON-min record. Coordinates stay in Label Studio percent units."""

    image_ref: str
    original_width: int
    original_height: int
    polygon_results: tuple[PolygonResult, ...] = ()
    keypoint_results: tuple[KeypointResult, ...] = ()

    @property
    def file_name(self) -> str:
        """Basename of the image reference, with URL quoting removed."""
        path = urlparse(self.image_ref).path or self.image_ref
        return posixpath.basename(unquote(path))


@dataclass(frozen=True)
class CategorySpec:
    name: str
    keypoint_names: tuple[str, ...] = ()
    skeleton: tuple[tuple[int, int], ...] = ()
    supercategory: str | None = None

    def __post_init__(self):
        if len(set(self.keypoint_names)) != len(self.keypoint_names):
            raise IngestError(f"category {self.name!r}: duplicate keypoint names")


def parse_category_specs(text: str) -> list[CategorySpec]:
    """Parse a category schema file: ``[{name, keypoints, skeleton}, ...]``."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IngestError(f"category file is not valid JSON: {exc}") from None
    if not isinstance(raw, list):
        raise IngestError("category file must be a JSON list")
    specs = []
    for i, r in enumerate(raw):
        if not isinstance(r, dict) or "name" not in r:
            raise IngestError(f"category entry {i}: missing 'name'")
        specs.append(CategorySpec(
            name=str(r["name"]),
            keypoint_names=tuple(r.get("keypoints") or ()),
            skeleton=tuple(tuple(int(i) for i in e) for e in (r.get("skeleton") or ())),
            supercategory=r.get("supercategory"),
        ))
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise IngestError("category names must be unique")
    return specs


def load_category_specs(path) -> list[CategorySpec]:
    with open(path, encoding="utf-8") as fh:
        return parse_category_specs(fh.read())


def _check_percent(value, idx, what) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise IngestError(f"record {idx}: {what} is not a number") from None
    if not (0.0 <= v <= 100.0) or math.isnan(v):
        raise IngestError(f"record {idx}: coordinate out of range ({what}={value})")
    return v


def _first_label(result: dict, *keys) -> str | None:
    for key in keys:
        labels = result.get(key)
        if isinstance(labels, list) and labels:
            return str(labels[0])
        if isinstance(labels, str):
            return labels
    return None


def _is_polygon(result: dict) -> bool:
    return "points" in result or result.get("type") in ("polygon", "polygonlabels")


def _is_keypoint(result: dict) -> bool:
    return "keypointlabels" in result or result.get("type") in ("keypoint", "keypointlabels")


def _parse_record(idx: int, rec) -> LabelTask:
    if not isinstance(rec, dict):
        raise IngestError(f"record {idx}: expected an object")
    image_ref = next((rec[k] for k in _IMAGE_KEYS if isinstance(rec.get(k), str)), None)
    if image_ref is None:
        raise IngestError(f"record {idx}: missing image reference")

    results = []
    for key, value in rec.items():
        if isinstance(value, list):
            results.extend(r for r in value if isinstance(r, dict) and (_is_polygon(r) or _is_keypoint(r)))

    width = rec.get("original_width")
    height = rec.get("original_height")
    for r in results:
        width = width if width is not None else r.get("original_width")
        height = height if height is not None else r.get("original_height")
    if width is None or height is None:
        raise IngestError(f"record {idx}: missing original_width/original_height")
    if not (int(width) > 0 and int(height) > 0):
        raise IngestError(f"record {idx}: original dimensions must be positive")

    polygons, keypoints = [], []
    for r in results:
        if _is_polygon(r):
            label = _first_label(r, "polygonlabels", "labels")
            if label is None:
                raise IngestError(f"record {idx}: polygon result without a label")
            pts = tuple(
                (_check_percent(p[0], idx, "x"), _check_percent(p[1], idx, "y"))
                for p in r.get("points", [])
            )
            polygons.append(PolygonResult(label, pts))
        else:
            label = _first_label(r, "keypointlabels", "labels")
            if label is None:
                raise IngestError(f"record {idx}: keypoint result without a label")
            keypoints.append(KeypointResult(label, _check_percent(r.get("x"), idx, "x"),
                                            _check_percent(r.get("y"), idx, "y")))
    return LabelTask(image_ref, int(width), int(height), tuple(polygons), tuple(keypoints))


def parse_jsonmin(text: str) -> list[LabelTask]:
    """Parse a Label Studio JSON-min export into :class:`LabelTask` records."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IngestError(f"JSON-min export is not valid JSON: {exc}") from None
    if not isinstance(raw, list):
        raise IngestError("JSON-min export must be a JSON array")
    return [_parse_record(i, rec) for i, rec in enumerate(raw)]


def percent_to_pixels(points, width: float, height: float) -> list[tuple[float, float]]:
    """Convert Label Studio percent coordinates to pixels."""
    return [(x * width / 100.0, y * height / 100.0) for x, y in points]


def _pixel_ring(poly: PolygonResult, task: LabelTask) -> np.ndarray:
    px = percent_to_pixels(poly.points, task.original_width, task.original_height)
    return np.round(np.asarray(px, dtype=float).reshape(-1, 2), _PIXEL_DECIMALS)


def _spec_index(specs: Sequence[CategorySpec]) -> dict[str, CategorySpec]:
    return {s.name: s for s in specs}


def associate_keypoints(task: LabelTask, specs: Sequence[CategorySpec]) -> list[np.ndarray]:
    """Attach each keypoint result to one polygon instance of ``task``.

    Only polygons whose category lists the keypoint's label are candidates.
    The first candidate whose rasterized mask contains the point wins; when
    none does, the candidate nearest to the point (boundary distance, ties
    broken by polygon order) wins.

    Returns one ``(K, 3)`` array per polygon, ordered by the category's
    keypoint names; unlabeled slots are ``(0, 0, 0)`` and labeled ones have
    ``v = 2``.
    """
    by_name = _spec_index(specs)
    w, h = task.original_width, task.original_height
    cats = []
    for p in task.polygon_results:
        if p.label not in by_name:
            raise IngestError(f"{task.image_ref}: polygon label {p.label!r} has no category spec")
        cats.append(by_name[p.label])
    rings = [_pixel_ring(p, task) for p in task.polygon_results]
    out = [np.zeros((len(c.keypoint_names), 3)) for c in cats]
    known = {n for s in specs for n in s.keypoint_names}
    masks: dict[int, np.ndarray] = {}

    for kp in task.keypoint_results:
        if kp.label not in known:
            raise IngestError(f"{task.image_ref}: keypoint label {kp.label!r} is not in any category")
        (x, y), = percent_to_pixels([(kp.x, kp.y)], w, h)
        x, y = round(x, _PIXEL_DECIMALS), round(y, _PIXEL_DECIMALS)
        candidates = [i for i, c in enumerate(cats) if kp.label in c.keypoint_names]
        if not candidates:
            raise IngestError(f"{task.image_ref}: no polygon can own keypoint {kp.label!r}")
        col, row = min(int(x), w - 1), min(int(y), h - 1)
        owner = None
        for i in candidates:
            if len(rings[i]) < 3:
                continue
            if i not in masks:
                masks[i] = rasterize_polygon([rings[i]], h, w).bits
            if masks[i][row, col]:
                owner = i
                break
        if owner is None:
            dists = [(distance_to_boundary((x, y), rings[i]), i) for i in candidates if len(rings[i]) >= 2]
            if not dists:
                raise IngestError(f"{task.image_ref}: no polygon can own keypoint {kp.label!r}")
            owner = min(dists)[1]
        slot = cats[owner].keypoint_names.index(kp.label)
        if out[owner][slot, 2] != 0:
            raise IngestError(
                f"{task.image_ref}: keypoint {kp.label!r} labeled twice on polygon {owner}"
            )
        out[owner][slot] = (x, y, 2)
    return out


def convert(tasks: Sequence[LabelTask], specs: Sequence[CategorySpec]) -> CocoDataset:
    """Build a combined COCO dataset from ingested tasks.

    Image, annotation and category ids are dense and follow input order.
    Pixel coordinates are rounded to two decimals before bbox and area are
    derived, so they agree with the serialized polygon.
    """
    categories = [
        CocoCategory(id=i, name=s.name, keypoint_names=tuple(s.keypoint_names),
                     skeleton=tuple(tuple(e) for e in s.skeleton), supercategory=s.supercategory)
        for i, s in enumerate(specs, start=1)
    ]
    cat_id = {c.name: c.id for c in categories}
    images, annotations = [], []
    for image_id, task in enumerate(tasks, start=1):
        images.append(CocoImage(image_id, task.file_name, task.original_width, task.original_height))
        kp_sets = associate_keypoints(task, specs)
        for poly, kps in zip(task.polygon_results, kp_sets):
            ring = _pixel_ring(poly, task)
            if len(ring) < 3:
                raise IngestError(f"{task.image_ref}: polygon {poly.label!r} has fewer than 3 points")
            annotations.append(make_annotation(
                id=len(annotations) + 1,
                image_id=image_id,
                category_id=cat_id[poly.label],
                rings=[ring.ravel()],
                keypoints=kps.ravel(),
                bbox=bbox_from_polygon(ring),
                area=shoelace_area(ring),
            ))
    return CocoDataset(images, annotations, categories)
