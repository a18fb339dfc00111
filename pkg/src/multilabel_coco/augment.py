"""Seeded geometric augmentation of images together with all their labels.

Every transform is an affine map in continuous pixel coordinates.  The
transforms drawn for one augmented copy are composed into a single matrix,
which is then applied

* to the image, by inverse mapping with bilinear interpolation;
* to polygons, by flattening rings into keypoints, transforming, splitting
  them back into rings and clipping those to the new frame;
* to keypoints, where points leaving the frame become invisible ``(0, 0, 0)``.

Bounding boxes and areas are recomputed from the transformed polygons, so
every label type stays consistent with the image.
"""

from __future__ import annotations

import json
import math
import os
import posixpath
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np
from PIL import Image

from .coco import CocoAnnotation, CocoDataset, CocoImage, count_visible, validate
from .errors import ConfigError, PipelineError, UnsupportedInputError
from .geometry import (
    FlatPoints,
    RLE,
    bbox_from_rings,
    clip_polygon_to_rect,
    keypoints_to_polygon,
    polygon_to_keypoints,
    shoelace_area,
)

#: Clipped annotations smaller than this (pixels^2) are dropped.
DEFAULT_MIN_AREA = 16.0

KINDS = ("rotate", "scale", "translate", "hflip", "vflip", "crop", "resize")

# parameter names per kind; values may be numbers or [lo, hi] ranges (not crop/resize)
_PARAMS = {
    "rotate": ("degrees",),
    "scale": ("factor",),
    "translate": ("dx", "dy"),
    "hflip": (),
    "vflip": (),
    "crop": ("x", "y", "w", "h"),
    "resize": ("w", "h"),
}
_RANGED = ("rotate", "scale", "translate")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransformSpec:
    """One geometric transform, applied with the given probability.

    Parameters for ``rotate``, ``scale`` and ``translate`` may be a number or
    a ``[lo, hi]`` range sampled uniformly per augmented copy.
    """

    kind: str
    params: Mapping[str, object] = field(default_factory=dict)
    probability: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "params", dict(self.params))
        if self.kind not in KINDS:
            raise ConfigError(f"unknown transform kind {self.kind!r}; expected one of {KINDS}")
        if not (0.0 <= float(self.probability) <= 1.0):
            raise ConfigError(f"{self.kind}: probability {self.probability} outside [0, 1]")
        needed = _PARAMS[self.kind]
        missing = [p for p in needed if p not in self.params]
        if missing:
            raise ConfigError(f"{self.kind}: missing parameter(s) {missing}")
        extra = sorted(set(self.params) - set(needed))
        if extra:
            raise ConfigError(f"{self.kind}: unknown parameter(s) {extra}")
        for name in needed:
            value = self.params[name]
            if isinstance(value, (list, tuple)):
                if self.kind not in _RANGED or len(value) != 2:
                    raise ConfigError(f"{self.kind}.{name}: ranges must be [lo, hi] and only for {_RANGED}")
                lo, hi = (float(v) for v in value)
                if lo > hi:
                    raise ConfigError(f"{self.kind}.{name}: empty range {list(value)}")
                bounds = (lo, hi)
            else:
                bounds = (float(value),)
            if self.kind == "scale" and min(bounds) <= 0:
                raise ConfigError("scale factor must be > 0")
            if self.kind in ("crop", "resize") and name in ("w", "h") and bounds[0] <= 0:
                raise ConfigError(f"{self.kind}: region must have positive size")
            if self.kind in ("crop", "resize") and float(bounds[0]) != int(bounds[0]):
                raise ConfigError(f"{self.kind}.{name} must be an integer")

    @property
    def is_ranged(self) -> bool:
        return any(isinstance(v, (list, tuple)) for v in self.params.values())

    def resolve(self, rng: np.random.Generator) -> "TransformSpec":
        """Fix every ranged parameter by sampling from ``rng``."""
        if not self.is_ranged:
            return self
        params = {}
        for name in _PARAMS[self.kind]:
            v = self.params[name]
            params[name] = float(rng.uniform(v[0], v[1])) if isinstance(v, (list, tuple)) else v
        return replace(self, params=params)

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": {k: (list(v) if isinstance(v, tuple) else v)
                                              for k, v in self.params.items()},
                "probability": self.probability}

    @classmethod
    def from_json(cls, obj) -> "TransformSpec":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ConfigError(f"transform entry must be an object with 'kind': {obj!r}")
        return cls(obj["kind"], obj.get("params") or {}, float(obj.get("probability", 1.0)))


@dataclass(frozen=True)
class PipelineConfig:
    transforms: tuple[TransformSpec, ...] = ()
    multiplicity: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "transforms", tuple(self.transforms))
        if isinstance(self.multiplicity, bool) or not isinstance(self.multiplicity, int) or self.multiplicity < 0:
            raise ConfigError(f"multiplicity must be an integer >= 0, got {self.multiplicity!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")

    @classmethod
    def from_json(cls, obj) -> "PipelineConfig":
        if not isinstance(obj, dict):
            raise ConfigError("pipeline config must be a JSON object")
        unknown = sorted(set(obj) - {"seed", "multiplicity", "transforms"})
        if unknown:
            raise ConfigError(f"unknown pipeline key(s) {unknown}")
        transforms = obj.get("transforms", [])
        if not isinstance(transforms, list):
            raise ConfigError("'transforms' must be a list")
        return cls(
            transforms=tuple(TransformSpec.from_json(t) for t in transforms),
            multiplicity=obj.get("multiplicity", 1),
            seed=obj.get("seed", 0),
        )

    def to_json(self) -> dict:
        return {"seed": self.seed, "multiplicity": self.multiplicity,
                "transforms": [t.to_json() for t in self.transforms]}


def load_pipeline(path) -> PipelineConfig:
    """Read a pipeline config JSON file."""
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return PipelineConfig.from_json(obj)


def default_pipeline(multiplicity: int = 1, seed: int = 0) -> PipelineConfig:
    """A generic stand-in pipeline: hflip, +-15 degree rotation, 0.9-1.1 scaling."""
    return PipelineConfig(
        transforms=(
            TransformSpec("hflip", {}, 0.5),
            TransformSpec("rotate", {"degrees": [-15.0, 15.0]}, 0.5),
            TransformSpec("scale", {"factor": [0.9, 1.1]}, 0.5),
        ),
        multiplicity=multiplicity,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Matrices
# ---------------------------------------------------------------------------


def _h(m: np.ndarray) -> np.ndarray:
    return np.vstack([m, [0.0, 0.0, 1.0]])


def _about_center(linear: np.ndarray, width: float, height: float) -> np.ndarray:
    cx, cy = width / 2.0, height / 2.0
    c = np.array([cx, cy])
    return np.column_stack([linear, c - linear @ c])


def output_size(spec: TransformSpec, width: int, height: int) -> tuple[int, int]:
    """Frame size after applying ``spec`` to a ``width x height`` image."""
    if spec.kind == "crop":
        return int(spec.params["w"]), int(spec.params["h"])
    if spec.kind == "resize":
        return int(spec.params["w"]), int(spec.params["h"])
    return width, height


def affine_of(spec: TransformSpec, width: int, height: int) -> np.ndarray:
    """2x3 matrix of ``spec`` acting on continuous pixel coordinates.

    ``rotate`` turns counter-clockwise on screen (y points down) about the
    image center; ``scale`` also acts about the center.
    """
    if spec.is_ranged:
        raise ConfigError(f"{spec.kind}: resolve ranged parameters before building a matrix")
    p = {k: float(v) for k, v in spec.params.items()}
    if spec.kind == "rotate":
        t = math.radians(p["degrees"])
        c, s = math.cos(t), math.sin(t)
        # exact values for quarter turns keep flips/rotations lossless
        if p["degrees"] % 90 == 0:
            c, s = round(c), round(s)
        return _about_center(np.array([[c, s], [-s, c]]), width, height)
    if spec.kind == "scale":
        f = p["factor"]
        return _about_center(np.array([[f, 0.0], [0.0, f]]), width, height)
    if spec.kind == "translate":
        return np.array([[1.0, 0.0, p["dx"]], [0.0, 1.0, p["dy"]]])
    if spec.kind == "hflip":
        return np.array([[-1.0, 0.0, float(width)], [0.0, 1.0, 0.0]])
    if spec.kind == "vflip":
        return np.array([[1.0, 0.0, 0.0], [0.0, -1.0, float(height)]])
    if spec.kind == "crop":
        return np.array([[1.0, 0.0, -p["x"]], [0.0, 1.0, -p["y"]]])
    if spec.kind == "resize":
        return np.array([[p["w"] / width, 0.0, 0.0], [0.0, p["h"] / height, 0.0]])
    raise ConfigError(f"unknown transform kind {spec.kind!r}")


def compose(specs: Sequence[TransformSpec], width: int, height: int) -> tuple[np.ndarray, int, int]:
    """Compose resolved transforms in order; returns ``(matrix, new_width, new_height)``."""
    m = np.eye(3)
    w, h = width, height
    for spec in specs:
        m = _h(affine_of(spec, w, h)) @ m
        w, h = output_size(spec, w, h)
    return m[:2].copy(), w, h


def apply_affine(matrix, xy) -> np.ndarray:
    """Apply a 2x3 matrix to an ``(N, 2)`` array of points."""
    m = np.asarray(matrix, dtype=float)
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    return xy @ m[:, :2].T + m[:, 2]


# ---------------------------------------------------------------------------
# Points and annotations
# ---------------------------------------------------------------------------


def transform_points(points: Union[FlatPoints, np.ndarray], matrix, new_width, new_height,
                     drop_outside: bool = True):
    """Transform every visible (``v > 0``) point.

    Points with ``v = 0`` (padding and unlabeled keypoints) are left as
    ``(0, 0, 0)``.  With ``drop_outside``, a point landing outside
    ``[0, new_width] x [0, new_height]`` becomes ``(0, 0, 0)``.
    """
    flat = isinstance(points, FlatPoints)
    pts = np.array(points.points if flat else points, dtype=float).reshape(-1, 3)
    vis = pts[:, 2] > 0
    pts[vis, :2] = apply_affine(matrix, pts[vis, :2])
    if drop_outside:
        x, y = pts[:, 0], pts[:, 1]
        out = vis & ((x < 0) | (x > new_width) | (y < 0) | (y > new_height))
        pts[out] = 0.0
    if flat:
        return FlatPoints(pts, points.ring_lengths)
    return pts


def transform_annotation(ann: CocoAnnotation, matrix, new_width: int, new_height: int,
                         min_area: float = DEFAULT_MIN_AREA) -> Optional[CocoAnnotation]:
    """Move one polygon annotation through ``matrix``.

    Returns ``None`` when every ring clips away, or when clipping leaves
    less than ``min_area``.  Objects that are small but entirely inside the
    frame are kept.
    """
    if isinstance(ann.segmentation, RLE) or ann.iscrowd:
        raise UnsupportedInputError(f"annotation {ann.id}: RLE segmentation cannot be augmented")
    if not ann.segmentation:
        raise UnsupportedInputError(f"annotation {ann.id}: no polygon to transform")

    fp = polygon_to_keypoints(ann.segmentation)
    moved = transform_points(fp, matrix, new_width, new_height, drop_outside=False)
    rings = []
    unclipped_area = 0.0
    for ring in keypoints_to_polygon(moved):
        unclipped_area += shoelace_area(ring)
        clipped = clip_polygon_to_rect(ring, new_width, new_height)
        if len(clipped) >= 3 and shoelace_area(clipped) > 0:
            rings.append(clipped)
    if not rings:
        return None
    area = sum(shoelace_area(r) for r in rings)
    if area < min_area and area < unclipped_area * (1 - 1e-9):
        return None

    kps = transform_points(np.asarray(ann.keypoints, dtype=float).reshape(-1, 3),
                           matrix, new_width, new_height)
    flat_kps = tuple(float(v) if i % 3 != 2 else int(v) for i, v in enumerate(kps.ravel()))
    return replace(
        ann,
        bbox=tuple(bbox_from_rings(rings)),
        segmentation=tuple(tuple(float(c) for c in r.ravel()) for r in rings),
        keypoints=flat_kps,
        area=float(area),
        num_keypoints=count_visible(flat_kps),
    )


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ImageRaster:
    """8-bit image stored as ``data[row, col, channel]`` with 1 or 3 channels."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"image must be HxW, HxWx1 or HxWx3, got {data.shape}")
        if data.dtype != np.uint8:
            raise ValueError(f"image must be 8-bit, got {data.dtype}")
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other):
        if not isinstance(other, ImageRaster):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)


def load_image(path) -> ImageRaster:
    """Read a PNG/JPEG as an 8-bit grayscale or RGB raster."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK", "YCbCr", "LA") else "L")
        return ImageRaster(np.array(im))


def save_image(img: ImageRaster, path) -> None:
    """Write ``img``; the format follows the file extension."""
    data = img.data[:, :, 0] if img.channels == 1 else img.data
    im = Image.fromarray(data)
    ext = os.path.splitext(str(path))[1].lower()
    if ext in (".jpg", ".jpeg"):
        im.save(path, quality=95, subsampling=0)
    else:
        im.save(path)


def warp_image(img: ImageRaster, matrix, new_width: int, new_height: int) -> ImageRaster:
    """Resample ``img`` through ``matrix`` by inverse mapping.

    Output pixel centers are mapped back into the source and sampled
    bilinearly; samples outside the source read as 0.
    """
    inv = np.linalg.inv(_h(np.asarray(matrix, dtype=float)))
    cols = np.arange(new_width) + 0.5
    rows = np.arange(new_height) + 0.5
    gx, gy = np.meshgrid(cols, rows)
    u = inv[0, 0] * gx + inv[0, 1] * gy + inv[0, 2] - 0.5
    v = inv[1, 0] * gx + inv[1, 1] * gy + inv[1, 2] - 0.5
    x0 = np.floor(u)
    y0 = np.floor(v)
    fx = (u - x0)[..., None]
    fy = (v - y0)[..., None]
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    src = img.data.astype(np.float64)
    h, w = img.height, img.width

    def tap(yy, xx):
        ok = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        vals = src[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        return np.where(ok[..., None], vals, 0.0)

    out = ((1 - fy) * ((1 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1))
           + fy * ((1 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1)))
    return ImageRaster(np.clip(np.rint(out), 0, 255).astype(np.uint8))


# ---------------------------------------------------------------------------
# Dataset expansion
# ---------------------------------------------------------------------------


def copy_rng(seed: int, image_id: int, copy_index: int) -> np.random.Generator:
    """RNG for one augmented copy, keyed by (seed, image id, copy index)."""
    key = [seed & 0xFFFFFFFFFFFFFFFF, image_id & 0xFFFFFFFFFFFFFFFF, copy_index]
    return np.random.default_rng(np.random.SeedSequence(key))


def draw_transforms(config: PipelineConfig, rng: np.random.Generator) -> list[TransformSpec]:
    """Decide inclusion of every transform in list order and resolve its parameters."""
    chosen = []
    for spec in config.transforms:
        if rng.random() < spec.probability:
            chosen.append(spec.resolve(rng))
    return chosen


def augmented_name(file_name: str, copy_index: int) -> str:
    """``dir/stem.ext`` -> ``dir/stem_aug{n}.ext``."""
    head, tail = posixpath.split(file_name)
    stem, ext = posixpath.splitext(tail)
    return posixpath.join(head, f"{stem}_aug{copy_index}{ext}")


ImageLoader = Callable[[str], ImageRaster]


def _augment_image(image: CocoImage, anns: list[CocoAnnotation], loader: ImageLoader,
                   config: PipelineConfig, min_area: float):
    try:
        raster = loader(image.file_name)
    except (OSError, ValueError) as exc:
        raise PipelineError(f"cannot read image {image.file_name!r}: {exc}") from exc
    if (raster.width, raster.height) != (image.width, image.height):
        raise PipelineError(
            f"image {image.file_name!r} is {raster.width}x{raster.height}, "
            f"annotations say {image.width}x{image.height}"
        )
    copies = []
    for n in range(1, config.multiplicity + 1):
        rng = copy_rng(config.seed, image.id, n)
        matrix, w, h = compose(draw_transforms(config, rng), image.width, image.height)
        warped = warp_image(raster, matrix, w, h)
        moved = [t for t in (transform_annotation(a, matrix, w, h, min_area) for a in anns) if t is not None]
        copies.append((n, w, h, warped, moved))
    return copies


def augment_dataset(ds: CocoDataset, image_loader: ImageLoader, config: PipelineConfig,
                    jobs: int = 1, min_area: float = DEFAULT_MIN_AREA):
    """Expand ``ds`` with ``config.multiplicity`` augmented copies per image.

    Returns ``(dataset, images)``: the dataset holds the originals, unchanged
    and with their ids, followed by every copy with fresh ids; ``images`` lists
    ``(file_name, ImageRaster)`` for the copies only.  Results do not depend
    on ``jobs``.

    Crowd (RLE) annotations are kept on the originals but not augmented.
    """
    if not isinstance(config, PipelineConfig):
        raise ConfigError("config must be a PipelineConfig")
    if config.multiplicity == 0:
        return ds, []

    by_image: dict[int, list[CocoAnnotation]] = {}
    skipped = 0
    for a in ds.annotations:
        if isinstance(a.segmentation, RLE) or a.iscrowd:
            skipped += 1
            continue
        by_image.setdefault(a.image_id, []).append(a)
    if skipped:
        warnings.warn(f"{skipped} crowd/RLE annotation(s) are not augmented", stacklevel=2)

    work = lambda img: _augment_image(img, by_image.get(img.id, []), image_loader, config, min_area)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, ds.images))
    else:
        results = [work(img) for img in ds.images]

    next_image = max((i.id for i in ds.images), default=0) + 1
    next_ann = max((a.id for a in ds.annotations), default=0) + 1
    images = list(ds.images)
    annotations = list(ds.annotations)
    rasters = []
    for image, copies in zip(ds.images, results):
        for n, w, h, warped, moved in copies:
            name = augmented_name(image.file_name, n)
            images.append(CocoImage(next_image, name, w, h))
            rasters.append((name, warped))
            for a in moved:
                annotations.append(replace(a, id=next_ann, image_id=next_image))
                next_ann += 1
            next_image += 1
    out = replace(ds, images=tuple(images), annotations=tuple(annotations))
    problems = validate(out)
    if problems:
        raise PipelineError(f"augmented dataset failed validation: {problems[:3]}")
    return out, rasters


__all__ = [
    "DEFAULT_MIN_AREA",
    "ImageRaster",
    "PipelineConfig",
    "TransformSpec",
    "affine_of",
    "apply_affine",
    "augment_dataset",
    "augmented_name",
    "compose",
    "copy_rng",
    "default_pipeline",
    "draw_transforms",
    "load_image",
    "load_pipeline",
    "output_size",
    "save_image",
    "transform_annotation",
    "transform_points",
    "warp_image",
]
