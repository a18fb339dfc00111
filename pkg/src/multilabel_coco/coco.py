"""Combined COCO datasets: bbox, segmentation and keypoints in one annotation.

Parsing, canonical serialization and invariant checking for the 2017-style
object-detection + keypoint schema.  Datasets are immutable values; every
function here is pure.

Example::

    ds = parse_dataset(open("annotations.json").read())
    problems = validate(ds)
    text = serialize_dataset(ds)
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence, Union

from .errors import CocoParseError, CocoSchemaError, CocoValidationError
from .geometry import RLE, bbox_from_rings, shoelace_area

Ring = tuple[float, ...]
Segmentation = Union[tuple[Ring, ...], RLE]

#: Decimal places used for every serialized coordinate.
COORD_DECIMALS = 2

ANNOTATION_KEYS = (
    "id", "image_id", "category_id", "bbox", "area",
    "segmentation", "keypoints", "num_keypoints", "iscrowd",
)
IMAGE_KEYS = ("id", "file_name", "width", "height")
CATEGORY_KEYS = ("id", "name", "supercategory", "keypoints", "skeleton")
TOP_LEVEL_KEYS = ("info", "images", "annotations", "categories")

_BBOX_TOL = 1e-6


@dataclass(frozen=True)
class CocoImage:
    id: int
    file_name: str
    width: int
    height: int


@dataclass(frozen=True)
class CocoCategory:
    id: int
    name: str
    keypoint_names: tuple[str, ...] = ()
    skeleton: tuple[tuple[int, int], ...] = ()
    supercategory: Optional[str] = None

    @property
    def num_keypoints(self) -> int:
        return len(self.keypoint_names)


@dataclass(frozen=True)
class CocoAnnotation:
    id: int
    image_id: int
    category_id: int
    bbox: tuple[float, float, float, float]
    segmentation: Segmentation
    keypoints: tuple[float, ...] = ()
    area: float = 0.0
    num_keypoints: int = 0
    iscrowd: int = 0

    @property
    def rings(self) -> tuple[Ring, ...]:
        if isinstance(self.segmentation, RLE):
            return ()
        return self.segmentation

    @property
    def keypoint_triples(self) -> list[tuple[float, float, int]]:
        k = self.keypoints
        return [(k[i], k[i + 1], int(k[i + 2])) for i in range(0, len(k) - len(k) % 3, 3)]


@dataclass(frozen=True)
class CocoDataset:
    images: tuple[CocoImage, ...] = ()
    annotations: tuple[CocoAnnotation, ...] = ()
    categories: tuple[CocoCategory, ...] = ()
    info: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "annotations", tuple(self.annotations))
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "info", dict(self.info))

    def image_by_id(self, image_id: int) -> CocoImage:
        for img in self.images:
            if img.id == image_id:
                return img
        raise KeyError(image_id)

    def category_by_id(self, category_id: int) -> CocoCategory:
        for cat in self.categories:
            if cat.id == category_id:
                return cat
        raise KeyError(category_id)

    def annotation_by_id(self, annotation_id: int) -> CocoAnnotation:
        for ann in self.annotations:
            if ann.id == annotation_id:
                return ann
        raise KeyError(annotation_id)

    def annotations_for(self, image_id: int) -> list[CocoAnnotation]:
        return [a for a in self.annotations if a.image_id == image_id]


def count_visible(keypoints: Sequence[float]) -> int:
    """Number of keypoint triples with ``v > 0``."""
    return sum(1 for v in keypoints[2::3] if v > 0)


def make_annotation(id, image_id, category_id, rings, keypoints, bbox=None, area=None) -> CocoAnnotation:
    """Build a polygon annotation, deriving bbox, area and num_keypoints when omitted."""
    rings = tuple(tuple(float(c) for c in r) for r in rings)
    kps = tuple(float(k) for k in keypoints)
    if bbox is None:
        bbox = bbox_from_rings(rings)
    if area is None:
        area = sum(shoelace_area(r) for r in rings)
    return CocoAnnotation(
        id=id, image_id=image_id, category_id=category_id,
        bbox=tuple(float(b) for b in bbox), segmentation=rings, keypoints=kps,
        area=float(area), num_keypoints=count_visible(kps), iscrowd=0,
    )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    record_kind: str
    record_id: Any
    rule: str
    message: str

    def to_json(self) -> dict:
        return {"record_kind": self.record_kind, "record_id": self.record_id,
                "rule": self.rule, "message": self.message}


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _validate_rle(ann: CocoAnnotation, image: Optional[CocoImage], out: list):
    rle = ann.segmentation
    v = lambda rule, msg: out.append(Violation("annotation", ann.id, rule, msg))
    if any(c < 0 for c in rle.counts):
        v("rle negative run", "RLE counts contain a negative run length")
    if sum(rle.counts) != rle.height * rle.width:
        v("rle sum", f"RLE counts sum to {sum(rle.counts)}, expected {rle.height * rle.width}")
    if any(c == 0 for c in rle.counts[1:]):
        v("rle zero run", "RLE has a zero-length run after the first")
    if image is not None and (rle.height, rle.width) != (image.height, image.width):
        v("rle size", f"RLE size {list(rle.size)} differs from image {image.height}x{image.width}")


def validate(ds: CocoDataset) -> list[Violation]:
    """Check every dataset invariant; returns one :class:`Violation` per breach."""
    out: list[Violation] = []

    def dup_check(kind, records):
        seen = set()
        for r in records:
            if not _is_int(r.id) or r.id < 1:
                out.append(Violation(kind, r.id, "invalid id", f"{kind} id must be an integer >= 1"))
            if r.id in seen:
                out.append(Violation(kind, r.id, "duplicate id", f"{kind} id {r.id} is not unique"))
            seen.add(r.id)

    dup_check("image", ds.images)
    dup_check("category", ds.categories)
    dup_check("annotation", ds.annotations)

    for img in ds.images:
        if not (_is_int(img.width) and _is_int(img.height) and img.width > 0 and img.height > 0):
            out.append(Violation("image", img.id, "image dimensions",
                                 f"width/height must be positive integers, got {img.width}x{img.height}"))

    for cat in ds.categories:
        k = len(cat.keypoint_names)
        if len(set(cat.keypoint_names)) != k:
            out.append(Violation("category", cat.id, "duplicate keypoint name",
                                 "keypoint_names contains duplicates"))
        for edge in cat.skeleton:
            if len(edge) != 2 or not all(_is_int(i) and 1 <= i <= k for i in edge):
                out.append(Violation("category", cat.id, "skeleton index",
                                     f"skeleton edge {list(edge)} outside [1, {k}]"))

    images = {}
    for img in ds.images:
        images.setdefault(img.id, img)
    categories = {}
    for cat in ds.categories:
        categories.setdefault(cat.id, cat)

    for ann in ds.annotations:
        v = lambda rule, msg: out.append(Violation("annotation", ann.id, rule, msg))
        image = images.get(ann.image_id)
        cat = categories.get(ann.category_id)
        if image is None:
            v("dangling image_id", f"image_id {ann.image_id} does not exist")
        if cat is None:
            v("dangling category_id", f"category_id {ann.category_id} does not exist")

        if len(ann.bbox) != 4:
            v("bbox arity", f"bbox must have 4 numbers, got {len(ann.bbox)}")
        else:
            x, y, w, h = ann.bbox
            if w < 0 or h < 0:
                v("bbox negative size", f"bbox {list(ann.bbox)} has negative size")
            if image is not None and (
                x < -_BBOX_TOL or y < -_BBOX_TOL
                or x + w > image.width + _BBOX_TOL or y + h > image.height + _BBOX_TOL
            ):
                v("bbox outside image", f"bbox {list(ann.bbox)} exceeds image {image.width}x{image.height}")

        if not (isinstance(ann.area, (int, float)) and ann.area >= 0):
            v("area negative", f"area must be >= 0, got {ann.area}")

        if ann.iscrowd not in (0, 1):
            v("iscrowd value", f"iscrowd must be 0 or 1, got {ann.iscrowd}")
        is_rle = isinstance(ann.segmentation, RLE)
        if ann.iscrowd == 1 and not is_rle:
            v("iscrowd segmentation", "iscrowd=1 requires RLE segmentation")
        if ann.iscrowd == 0 and is_rle:
            v("iscrowd segmentation", "iscrowd=0 requires polygon segmentation")
        if is_rle:
            _validate_rle(ann, image, out)
        else:
            for i, ring in enumerate(ann.segmentation):
                if len(ring) < 6 or len(ring) % 2:
                    v("polygon ring", f"ring {i} has {len(ring)} coordinates; need an even count >= 6")

        kps = ann.keypoints
        if cat is not None and len(kps) != 3 * cat.num_keypoints:
            v("keypoint arity", f"keypoints has {len(kps)} values, expected 3*{cat.num_keypoints}")
        bad_v = [i // 3 for i in range(2, len(kps), 3) if kps[i] not in (0, 1, 2)]
        if bad_v:
            v("keypoint visibility", f"keypoints {bad_v} have v outside {{0,1,2}}")
        hidden = [i // 3 for i in range(2, len(kps), 3)
                  if kps[i] == 0 and (kps[i - 2] != 0 or kps[i - 1] != 0)]
        if hidden:
            v("invisible keypoint coordinates", f"keypoints {hidden} have v=0 but non-zero coordinates")
        if ann.num_keypoints != count_visible(kps):
            v("num_keypoints mismatch",
              f"num_keypoints {ann.num_keypoints} but {count_visible(kps)} entries have v>0")
    return out


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _byte_offset(text: str, char_pos: int) -> int:
    return len(text[:char_pos].encode("utf-8"))


def _require(record: Mapping, key: str, kind: str, rid):
    if key not in record:
        raise CocoSchemaError(f"{kind} {rid if rid is not None else '?'}: missing required field '{key}'")
    return record[key]


def _warn_unknown(record: Mapping, known: Sequence[str], kind: str, rid):
    extra = sorted(set(record) - set(known))
    if extra:
        warnings.warn(f"{kind} {rid}: dropping unknown field(s) {extra}", stacklevel=3)


def _assign_ids(records: list, kind: str) -> list:
    used = {r["id"] for r in records if "id" in r}
    nxt = 1
    ids = []
    for r in records:
        if "id" in r:
            rid = r["id"]
            if not _is_int(rid):
                raise CocoSchemaError(f"{kind} {rid!r}: id must be an integer")
            ids.append(rid)
            continue
        while nxt in used:
            nxt += 1
        used.add(nxt)
        ids.append(nxt)
    return ids


def _parse_segmentation(raw, rid) -> Segmentation:
    if isinstance(raw, Mapping):
        if "counts" not in raw or "size" not in raw:
            raise CocoSchemaError(f"annotation {rid}: RLE segmentation needs 'size' and 'counts'")
        if isinstance(raw["counts"], str):
            raise CocoSchemaError(f"annotation {rid}: compressed string RLE counts are not supported")
        return RLE(tuple(raw["size"]), tuple(raw["counts"]))
    if isinstance(raw, list):
        return tuple(tuple(float(c) for c in ring) for ring in raw)
    raise CocoSchemaError(f"annotation {rid}: segmentation must be a list of rings or an RLE object")


def _seg_area(seg: Segmentation) -> float:
    if isinstance(seg, RLE):
        return float(seg.area)
    return float(sum(shoelace_area(r) for r in seg if len(r) >= 6 and len(r) % 2 == 0))


def parse_dataset(text: Union[str, bytes]) -> CocoDataset:
    """Parse a COCO JSON document into a :class:`CocoDataset`.

    Unknown top-level keys are preserved inside ``info``; unknown per-record
    keys are dropped with a warning.  Records without an ``id`` get the next
    unused positive integer in encounter order.  ``area``, ``keypoints``,
    ``num_keypoints`` and ``iscrowd`` are optional and derived when absent.

    Raises
    ------
    CocoParseError
        The text is not valid JSON.
    CocoSchemaError
        A required field is missing or an annotation references a missing
        image or category.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CocoParseError(exc.msg, _byte_offset(text, exc.pos)) from None
    if not isinstance(doc, dict):
        raise CocoSchemaError("top-level JSON value must be an object")

    info = dict(doc.get("info") or {})
    for key in doc:
        if key not in TOP_LEVEL_KEYS:
            info[key] = doc[key]

    raw_images = list(doc.get("images", []))
    raw_cats = list(doc.get("categories", []))
    raw_anns = list(doc.get("annotations", []))
    for name, lst in (("images", raw_images), ("categories", raw_cats), ("annotations", raw_anns)):
        if not all(isinstance(r, dict) for r in lst):
            raise CocoSchemaError(f"'{name}' must be a list of objects")

    images = []
    for rid, r in zip(_assign_ids(raw_images, "image"), raw_images):
        _warn_unknown(r, IMAGE_KEYS + ("license", "coco_url", "flickr_url", "date_captured"), "image", rid)
        images.append(CocoImage(
            id=rid,
            file_name=str(_require(r, "file_name", "image", rid)),
            width=_require(r, "width", "image", rid),
            height=_require(r, "height", "image", rid),
        ))

    categories = []
    for rid, r in zip(_assign_ids(raw_cats, "category"), raw_cats):
        _warn_unknown(r, CATEGORY_KEYS, "category", rid)
        categories.append(CocoCategory(
            id=rid,
            name=str(_require(r, "name", "category", rid)),
            keypoint_names=tuple(r.get("keypoints") or ()),
            skeleton=tuple(tuple(e) for e in (r.get("skeleton") or ())),
            supercategory=r.get("supercategory"),
        ))

    image_ids = {i.id for i in images}
    cat_ids = {c.id for c in categories}
    annotations = []
    for rid, r in zip(_assign_ids(raw_anns, "annotation"), raw_anns):
        _warn_unknown(r, ANNOTATION_KEYS, "annotation", rid)
        image_id = _require(r, "image_id", "annotation", rid)
        category_id = _require(r, "category_id", "annotation", rid)
        if image_id not in image_ids:
            raise CocoSchemaError(f"annotation {rid}: dangling image_id {image_id}")
        if category_id not in cat_ids:
            raise CocoSchemaError(f"annotation {rid}: dangling category_id {category_id}")
        seg = _parse_segmentation(_require(r, "segmentation", "annotation", rid), rid)
        kps = tuple(float(k) for k in (r.get("keypoints") or ()))
        kps = tuple(int(k) if i % 3 == 2 and k.is_integer() else k for i, k in enumerate(kps))
        annotations.append(CocoAnnotation(
            id=rid,
            image_id=image_id,
            category_id=category_id,
            bbox=tuple(float(b) for b in _require(r, "bbox", "annotation", rid)),
            segmentation=seg,
            keypoints=kps,
            area=float(r["area"]) if "area" in r else _seg_area(seg),
            num_keypoints=int(r["num_keypoints"]) if "num_keypoints" in r else count_visible(kps),
            iscrowd=int(r.get("iscrowd", 1 if isinstance(seg, RLE) else 0)),
        ))
    return CocoDataset(images, annotations, categories, info)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _num(x: float):
    r = round(float(x), COORD_DECIMALS)
    if r == 0:
        return 0
    return int(r) if r.is_integer() else r


def _area_out(area):
    # not a coordinate: full precision keeps small areas exact through a round trip
    a = float(area)
    return int(a) if a.is_integer() else a


def _bbox_out(bbox):
    # round the corners, then difference, so the box keeps hugging rounded vertices
    x, y, w, h = (float(b) for b in bbox)
    x0, y0 = round(x, COORD_DECIMALS), round(y, COORD_DECIMALS)
    x1, y1 = round(x + w, COORD_DECIMALS), round(y + h, COORD_DECIMALS)
    return [_num(x0), _num(y0), _num(x1 - x0), _num(y1 - y0)]


def _annotation_out(a: CocoAnnotation) -> dict:
    if isinstance(a.segmentation, RLE):
        seg = a.segmentation.to_json()
    else:
        seg = [[_num(c) for c in ring] for ring in a.segmentation]
    kps = []
    for i, k in enumerate(a.keypoints):
        kps.append(int(k) if i % 3 == 2 else _num(k))
    return {
        "id": a.id,
        "image_id": a.image_id,
        "category_id": a.category_id,
        "bbox": _bbox_out(a.bbox),
        "area": _area_out(a.area),
        "segmentation": seg,
        "keypoints": kps,
        "num_keypoints": a.num_keypoints,
        "iscrowd": a.iscrowd,
    }


def _category_out(c: CocoCategory) -> dict:
    out = {"id": c.id, "name": c.name}
    if c.supercategory is not None:
        out["supercategory"] = c.supercategory
    out["keypoints"] = list(c.keypoint_names)
    out["skeleton"] = [list(e) for e in c.skeleton]
    return out


def dataset_to_json(ds: CocoDataset) -> dict:
    """Canonical JSON-ready dict for ``ds`` (no validation)."""
    doc: dict = {}
    if ds.info:
        doc["info"] = ds.info
    doc["images"] = [
        {"id": i.id, "file_name": i.file_name, "width": i.width, "height": i.height}
        for i in sorted(ds.images, key=lambda i: i.id)
    ]
    doc["annotations"] = [_annotation_out(a) for a in sorted(ds.annotations, key=lambda a: a.id)]
    doc["categories"] = [_category_out(c) for c in sorted(ds.categories, key=lambda c: c.id)]
    return doc


def serialize_dataset(ds: CocoDataset, indent: Optional[int] = None) -> str:
    """Canonical COCO JSON text for a valid dataset.

    Records are emitted in ascending id order and every coordinate is rounded
    to two decimals.  Raises :class:`CocoValidationError` if ``validate``
    reports anything.
    """
    violations = validate(ds)
    if violations:
        raise CocoValidationError(violations)
    return json.dumps(dataset_to_json(ds), indent=indent, ensure_ascii=False, allow_nan=False)


def round_dataset(ds: CocoDataset) -> CocoDataset:
    """The dataset as it would read back after serialization."""
    return parse_dataset(json.dumps(dataset_to_json(ds)))


__all__ = [
    "ANNOTATION_KEYS",
    "COORD_DECIMALS",
    "CocoAnnotation",
    "CocoCategory",
    "CocoDataset",
    "CocoImage",
    "RLE",
    "Violation",
    "count_visible",
    "dataset_to_json",
    "make_annotation",
    "parse_dataset",
    "round_dataset",
    "serialize_dataset",
    "validate",
]
