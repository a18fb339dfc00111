"""Geometry on detector outputs: orientation, placement verification, depth.

All positions here are pixel-index coordinates: ``(x, y) = (col, row)``.
COCO keypoints are continuous coordinates; subtract 0.5 to convert (see
:func:`coco_to_index`).

Orientation comes from the elongation axis of the mask's second-order
moments.  Placement is verified by the sign of the cross product between
that axis and each keypoint's offset from the centroid: the one keypoint
on the other side of the axis marks the object's outer side, and the
caller says which side (``positive`` or ``negative``) counts as correct.

Depth is read from an aligned depth map in millimeters, where 0 means no
data, either averaged over the whole mask or sampled at a single keypoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import AmbiguityError, DepthError, InputError
from .geometry import BitMask, cross_signs, mask_moments, outer_keypoint, principal_axis

SIDES = ("positive", "negative")
KEYPOINT_WINDOW = 5


class ConfigurationUndecidable(AmbiguityError):
    """The outer-keypoint test could not pick a side."""


@dataclass(eq=False)
class DepthMap:
    """Depth in millimeters, ``values[row, col]``; 0 marks missing data."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise InputError(f"depth map must be 2-D, got shape {v.shape}")
        if np.any(v < 0) or np.any(v > 65535):
            raise InputError("depth values must fit in 16 bits")
        self.values = v.astype(np.uint16)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def load_depth(path) -> DepthMap:
    """Read a single-channel 16-bit PNG depth map."""
    with Image.open(path) as im:
        arr = np.array(im)
    if arr.ndim != 2:
        raise InputError(f"{path}: depth PNG must be single-channel")
    return DepthMap(arr)


def save_depth(depth: DepthMap, path) -> None:
    Image.fromarray(depth.values.astype(np.uint16)).save(path)


@dataclass(frozen=True)
class DepthReport:
    method: str
    value: float
    range: tuple[float, float]
    sample_count: int

    @property
    def width(self) -> float:
        return self.range[1] - self.range[0]

    def to_json(self) -> dict:
        return {"method": self.method, "value": self.value, "range": list(self.range),
                "range_width": self.width, "sample_count": self.sample_count}


@dataclass(frozen=True)
class ConfigVerdict:
    axis: tuple[float, float]
    centroid: tuple[float, float]
    outer_index: int
    outer_side: str
    placement: str

    @property
    def correct(self) -> bool:
        return self.placement == "correct"

    def to_json(self) -> dict:
        return {"axis": list(self.axis), "centroid": list(self.centroid),
                "outer_index": self.outer_index, "outer_side": self.outer_side,
                "placement": self.placement}


def coco_to_index(points) -> np.ndarray:
    """Continuous COCO coordinates -> pixel-index coordinates."""
    return np.asarray(points, dtype=float).reshape(-1, 2) - 0.5


def estimate_orientation(mask: BitMask) -> tuple[tuple[float, float], tuple[float, float]]:
    """``(axis, centroid)`` of the mask's elongation axis."""
    m = mask_moments(mask)
    return principal_axis(m), m.centroid


def verdict_from_axis(axis, centroid, keypoints, expected_side: str) -> ConfigVerdict:
    """Placement verdict for keypoints around a known axis and centroid."""
    if expected_side not in SIDES:
        raise InputError(f"expected_side must be one of {SIDES}, got {expected_side!r}")
    try:
        idx = outer_keypoint(axis, centroid, keypoints)
    except AmbiguityError as exc:
        raise ConfigurationUndecidable(f"configuration undecidable: {exc}") from exc
    side = "positive" if cross_signs(axis, centroid, keypoints)[idx] > 0 else "negative"
    return ConfigVerdict(
        axis=tuple(float(a) for a in axis),
        centroid=tuple(float(c) for c in centroid),
        outer_index=idx,
        outer_side=side,
        placement="correct" if side == expected_side else "incorrect",
    )


def verify_configuration(mask: BitMask, keypoints, expected_side: str) -> ConfigVerdict:
    """Check object placement from its mask and (at least three) keypoints.

    ``expected_side`` is the sign of the cross product that the outer keypoint
    must have for the placement to count as correct; it is a calibration of
    the scene, not something derivable from the image.
    """
    axis, centroid = estimate_orientation(mask)
    return verdict_from_axis(axis, centroid, keypoints, expected_side)


def depth_from_mask(depth: DepthMap, mask: BitMask) -> DepthReport:
    """Average of the valid (non-zero) depth samples under the mask."""
    if (depth.height, depth.width) != (mask.height, mask.width):
        raise InputError(
            f"depth map is {depth.width}x{depth.height}, mask is {mask.width}x{mask.height}"
        )
    samples = depth.values[mask.bits]
    samples = samples[samples > 0].astype(float)
    if samples.size == 0:
        raise DepthError("no valid depth under mask")
    lo, hi = float(samples.min()), float(samples.max())
    # the mean can drift past min/max by an ulp
    value = min(max(float(samples.mean()), lo), hi)
    return DepthReport("mask_average", value, (lo, hi), int(samples.size))


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def depth_from_keypoint(depth: DepthMap, kp, window: int = KEYPOINT_WINDOW) -> DepthReport:
    """Depth at the pixel nearest to ``kp``.

    A zero reading falls back to the median of the valid samples in the
    ``window x window`` neighbourhood.
    """
    x, y = (float(c) for c in kp)
    col, row = _round_half_up(x), _round_half_up(y)
    if not (0 <= col < depth.width and 0 <= row < depth.height):
        raise InputError(f"keypoint ({x}, {y}) is outside the {depth.width}x{depth.height} depth map")
    v = int(depth.values[row, col])
    if v > 0:
        return DepthReport("keypoint", float(v), (float(v), float(v)), 1)
    r = window // 2
    patch = depth.values[max(row - r, 0):row + r + 1, max(col - r, 0):col + r + 1]
    valid = patch[patch > 0].astype(float)
    if valid.size == 0:
        raise DepthError(f"no valid depth around keypoint ({x}, {y})")
    return DepthReport("keypoint", float(np.median(valid)),
                       (float(valid.min()), float(valid.max())), int(valid.size))


def range_ratio(mask_report: DepthReport, keypoint_report: DepthReport) -> float:
    """Mask range width over keypoint range width; 0/0 is 1, x/0 is infinity."""
    a, b = mask_report.width, keypoint_report.width
    if b == 0:
        return 1.0 if a == 0 else math.inf
    return a / b


def compare_depth_methods(depth: DepthMap, mask: BitMask, keypoint) -> dict:
    """Both depth estimates for one object plus their range-width ratio."""
    m = depth_from_mask(depth, mask)
    k = depth_from_keypoint(depth, keypoint)
    return {"mask_average": m, "keypoint": k, "range_ratio": range_ratio(m, k)}


__all__ = [
    "ConfigVerdict",
    "ConfigurationUndecidable",
    "DepthMap",
    "DepthReport",
    "coco_to_index",
    "compare_depth_methods",
    "depth_from_keypoint",
    "depth_from_mask",
    "estimate_orientation",
    "load_depth",
    "range_ratio",
    "save_depth",
    "verdict_from_axis",
    "verify_configuration",
]
