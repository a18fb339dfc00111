"""Computational-geometry substrate.

Polygon area and bounds, even-odd rasterization, the column-major RLE codec,
the polygon <-> keypoint round trip with invisible padding, image moments,
the principal (elongation) axis and the cross-product outer-keypoint test.

Coordinate conventions
----------------------
Polygon and keypoint coordinates are continuous pixel coordinates: pixel
``(row, col)`` covers ``[col, col + 1] x [row, row + 1]`` and its center is
``(col + 0.5, row + 0.5)``.  Rasterization samples those centers.

Moments are accumulated in pixel-index coordinates, i.e. the set pixel at
``(row, col)`` contributes the point ``(x=col, y=row)``.  Subtract 0.5 from a
continuous coordinate to express it in that frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguityError, CodecError, DegeneracyError, GeometryError

#: Relative tolerance for the isotropy and zero-cross-product tests.
DEGENERACY_TOL = 1e-9


def as_vertices(ring) -> np.ndarray:
    """Return ``ring`` as an ``(N, 2)`` float array.

    Accepts a flat COCO ring ``[x1, y1, x2, y2, ...]`` or a sequence of
    ``(x, y)`` pairs.
    """
    arr = np.asarray(ring, dtype=float)
    if arr.ndim == 1:
        if arr.size % 2:
            raise GeometryError(f"flat ring has odd length {arr.size}")
        arr = arr.reshape(-1, 2)
    elif arr.ndim != 2 or arr.shape[1] != 2:
        raise GeometryError(f"ring must be flat or (N, 2), got shape {arr.shape}")
    return arr


def _checked_ring(ring) -> np.ndarray:
    verts = as_vertices(ring)
    if len(verts) < 3:
        raise GeometryError(f"ring needs at least 3 vertices, got {len(verts)}")
    return verts


def shoelace_area(ring) -> float:
    """Unsigned area of a simple polygon ring via the shoelace formula."""
    v = _checked_ring(ring)
    x, y = v[:, 0], v[:, 1]
    return abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))) / 2.0


def bbox_from_polygon(ring) -> list[float]:
    """Axis-aligned ``[x, y, w, h]`` spanning the outer bounds of the ring's vertices."""
    v = _checked_ring(ring)
    x0, y0 = v.min(axis=0)
    x1, y1 = v.max(axis=0)
    return [float(x0), float(y0), float(x1 - x0), float(y1 - y0)]


def bbox_from_rings(rings) -> list[float]:
    """Bounding box over the vertices of several rings."""
    verts = np.concatenate([_checked_ring(r) for r in rings])
    return bbox_from_polygon(verts)


# ---------------------------------------------------------------------------
# Polygon <-> keypoint round trip
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class FlatPoints:
    """Polygon vertices flattened into one ``(N, 3)`` keypoint array.

    The first ``sum(ring_lengths)`` rows are polygon vertices in ring order;
    any further rows are invisible padding ``(0, 0, 0)``.
    """

    points: np.ndarray
    ring_lengths: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.ring_lengths = tuple(int(n) for n in self.ring_lengths)
        n_ring = sum(self.ring_lengths)
        if any(n < 0 for n in self.ring_lengths):
            raise GeometryError("ring lengths must be non-negative")
        if n_ring > len(self.points):
            raise GeometryError(
                f"ring_lengths {list(self.ring_lengths)} need {n_ring} points, have {len(self.points)}"
            )
        if np.any(self.points[n_ring:] != 0.0):
            raise GeometryError("padding points must be (0, 0, 0)")

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, FlatPoints):
            return NotImplemented
        return self.ring_lengths == other.ring_lengths and np.array_equal(self.points, other.points)

    @property
    def n_ring_points(self) -> int:
        return sum(self.ring_lengths)


def polygon_to_keypoints(rings) -> FlatPoints:
    """Concatenate polygon rings into visible (v=2) keypoints."""
    rings = list(rings)
    if not rings:
        raise GeometryError("no rings to convert")
    verts = [_checked_ring(r) for r in rings]
    xy = np.concatenate(verts)
    return FlatPoints(upgrade_visibility(xy), tuple(len(v) for v in verts))


def upgrade_visibility(points) -> np.ndarray:
    """Append ``v = 2`` to every ``(x, y)`` point."""
    xy = np.asarray(points, dtype=float).reshape(-1, 2)
    return np.column_stack([xy, np.full(len(xy), 2.0)])


def pad_keypoints(fp: FlatPoints, target_count: int) -> FlatPoints:
    """Append invisible ``(0, 0, 0)`` points until ``fp`` holds ``target_count`` points."""
    if target_count < len(fp):
        raise GeometryError(f"cannot pad {len(fp)} points down to {target_count}")
    pad = np.zeros((target_count - len(fp), 3))
    return FlatPoints(np.concatenate([fp.points, pad]), fp.ring_lengths)


def keypoints_to_polygon(fp: FlatPoints) -> list[np.ndarray]:
    """Split the ring part of ``fp`` back into ``(n, 2)`` rings; padding is dropped."""
    if fp.n_ring_points > len(fp.points):
        raise GeometryError("ring_lengths inconsistent with point count")
    rings = []
    start = 0
    for n in fp.ring_lengths:
        rings.append(fp.points[start:start + n, :2].copy())
        start += n
    return rings


# ---------------------------------------------------------------------------
# Rasterization and RLE
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class BitMask:
    """Dense binary raster of one object, stored row-major as ``bits[row, col]``."""

    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 2:
            raise GeometryError(f"mask must be 2-D, got shape {self.bits.shape}")

    @classmethod
    def zeros(cls, height: int, width: int) -> "BitMask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other):
        if not isinstance(other, BitMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and np.array_equal(self.bits, other.bits)


def _edges(rings):
    starts, ends = [], []
    for ring in rings:
        v = as_vertices(ring)
        if len(v) < 2:
            continue
        starts.append(v)
        ends.append(np.roll(v, -1, axis=0))
    if not starts:
        return np.empty((0, 2)), np.empty((0, 2))
    return np.concatenate(starts), np.concatenate(ends)


def rasterize_polygon(rings, height: int, width: int) -> BitMask:
    """Even-odd scanline fill of ``rings`` sampled at pixel centers.

    All rings contribute edges to the same parity count, so an inner ring
    punches a hole.  Geometry outside the frame is clipped.
    """
    if height <= 0 or width <= 0:
        raise GeometryError(f"invalid raster size {height}x{width}")
    bits = np.zeros((height, width), dtype=bool)
    a, b = _edges(rings)
    if len(a) == 0:
        return BitMask(bits)
    ys = np.concatenate([a[:, 1], b[:, 1]])
    r0 = max(int(math.floor(ys.min() - 0.5)), 0)
    r1 = min(int(math.ceil(ys.max() - 0.5)), height - 1)
    xc = np.arange(width) + 0.5
    dy = b[:, 1] - a[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_slope = (b[:, 0] - a[:, 0]) / dy
    for row in range(r0, r1 + 1):
        yc = row + 0.5
        # half-open rule: count an edge when yc lies in [min y, max y)
        hit = (a[:, 1] <= yc) != (b[:, 1] <= yc)
        if not hit.any():
            continue
        xs = np.sort(a[hit, 0] + (yc - a[hit, 1]) * inv_slope[hit])
        inside = np.searchsorted(xs, xc, side="left") % 2 == 1
        bits[row] = inside
    return BitMask(bits)


@dataclass(frozen=True)
class RLE:
    """Uncompressed COCO run-length record over column-major pixel order.

    ``counts`` alternates background/foreground runs, starting with background.
    """

    size: tuple[int, int]
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "size", tuple(int(s) for s in self.size))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @property
    def height(self) -> int:
        return self.size[0]

    @property
    def width(self) -> int:
        return self.size[1]

    @property
    def area(self) -> int:
        return sum(self.counts[1::2])

    def to_json(self) -> dict:
        return {"size": list(self.size), "counts": list(self.counts)}


def rle_encode(mask: BitMask) -> RLE:
    """Run-length encode ``mask`` in column-major (Fortran) order."""
    flat = mask.bits.ravel(order="F").astype(np.int8)
    if flat.size == 0:
        return RLE((mask.height, mask.width), ())
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0] == 1:
        runs.insert(0, 0)
    return RLE((mask.height, mask.width), tuple(runs))


def rle_decode(rle: RLE) -> BitMask:
    """Inverse of :func:`rle_encode`."""
    h, w = rle.size
    counts = np.asarray(rle.counts, dtype=np.int64)
    if np.any(counts < 0):
        raise CodecError("negative run length")
    total = int(counts.sum())
    if total != h * w:
        raise CodecError(f"run lengths sum to {total}, expected {h}*{w}={h * w}")
    values = np.arange(len(counts)) % 2 == 1
    flat = np.repeat(values, counts)
    return BitMask(flat.reshape((h, w), order="F"))


# ---------------------------------------------------------------------------
# Polygon clipping
# ---------------------------------------------------------------------------


def clip_polygon_to_rect(ring, width: float, height: float) -> np.ndarray:
    """Sutherland-Hodgman clip of ``ring`` against ``[0, width] x [0, height]``.

    Returns an ``(n, 2)`` array, possibly empty.  Concave inputs can produce
    zero-width bridges along the frame; their area is still correct.
    """
    pts = [tuple(p) for p in as_vertices(ring)]
    # (axis, bound, keep_if_less_equal)
    planes = ((0, 0.0, False), (0, float(width), True), (1, 0.0, False), (1, float(height), True))
    for axis, bound, upper in planes:
        if not pts:
            break

        def inside(p):
            return p[axis] <= bound if upper else p[axis] >= bound

        def cross(p, q):
            t = (bound - p[axis]) / (q[axis] - p[axis])
            other = 1 - axis
            out = [0.0, 0.0]
            out[axis] = bound
            out[other] = p[other] + t * (q[other] - p[other])
            return tuple(out)

        src, pts = pts, []
        prev = src[-1]
        for cur in src:
            if inside(cur):
                if not inside(prev):
                    pts.append(cross(prev, cur))
                pts.append(cur)
            elif inside(prev):
                pts.append(cross(prev, cur))
            prev = cur
    return np.asarray(pts, dtype=float).reshape(-1, 2)


def distance_to_boundary(point, ring) -> float:
    """Euclidean distance from ``point`` to the closed polyline ``ring``."""
    v = as_vertices(ring)
    a = v
    b = np.roll(v, -1, axis=0)
    p = np.asarray(point, dtype=float)
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom > 0, np.einsum("ij,ij->i", p - a, ab) / denom, 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return float(np.min(np.hypot(*(closest - p).T)))


# ---------------------------------------------------------------------------
# Moments and orientation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Moments:
    """Zeroth, first and second central moments of a binary mask."""

    m00: float
    centroid: tuple[float, float]
    mu20: float
    mu02: float
    mu11: float


def mask_moments(mask: BitMask) -> Moments:
    """Moments of the set pixels of ``mask`` in pixel-index coordinates.

    ``mu20 = sum((x - xbar)**2)``, ``mu02 = sum((y - ybar)**2)`` and
    ``mu11 = sum((x - xbar) * (y - ybar))`` over set pixels, where the pixel at
    ``(row, col)`` sits at ``(x=col, y=row)``.
    """
    rows, cols = np.nonzero(mask.bits)
    if rows.size == 0:
        raise GeometryError("empty mask")
    x = cols.astype(float)
    y = rows.astype(float)
    m00 = float(x.size)
    xbar = x.sum() / m00
    ybar = y.sum() / m00
    dx = x - xbar
    dy = y - ybar
    return Moments(
        m00=m00,
        centroid=(float(xbar), float(ybar)),
        mu20=float(np.dot(dx, dx)),
        mu02=float(np.dot(dy, dy)),
        mu11=float(np.dot(dx, dy)),
    )


def principal_axis(m: Moments, tol: float = DEGENERACY_TOL) -> tuple[float, float]:
    """Unit direction of the elongation axis.

    This is the line through the centroid about which the second moment is
    smallest (the major axis of the equivalent ellipse).  The result is
    canonicalized so that ``ax > 0``, or ``ax == 0`` and ``ay > 0``.

    Raises
    ------
    DegeneracyError
        If the mask is isotropic (``mu20 == mu02`` and ``mu11 == 0``
        relative to ``tol``).
    """
    if m.m00 <= 0:
        raise GeometryError("empty mask")
    scale = max(m.mu20 + m.mu02, np.finfo(float).tiny)
    if abs(m.mu20 - m.mu02) <= tol * scale and abs(m.mu11) <= tol * scale:
        raise DegeneracyError("no unique axis")
    theta = 0.5 * math.atan2(2.0 * m.mu11, m.mu20 - m.mu02)
    ax, ay = math.cos(theta), math.sin(theta)
    # snap values that are zero up to rounding, so axis-aligned masks give exact axes
    if abs(ax) < 1e-15:
        ax = 0.0
    if abs(ay) < 1e-15:
        ay = 0.0
    if ax < 0 or (ax == 0 and ay < 0):
        ax, ay = -ax, -ay
    return (ax + 0.0, ay + 0.0)


def cross_signs(axis, centroid, keypoints, tol: float = DEGENERACY_TOL) -> np.ndarray:
    """Sign of ``axis x (kp - centroid)`` for each keypoint (-1, 0 or +1).

    A product is treated as zero when its magnitude is within ``tol`` of
    ``|axis| * |kp - centroid|``.
    """
    a = np.asarray(axis, dtype=float)
    d = np.asarray(keypoints, dtype=float).reshape(-1, 2) - np.asarray(centroid, dtype=float)
    z = a[0] * d[:, 1] - a[1] * d[:, 0]
    scale = np.hypot(*a) * np.hypot(d[:, 0], d[:, 1])
    s = np.sign(z).astype(int)
    s[np.abs(z) <= tol * scale] = 0
    return s


def outer_keypoint(axis, centroid, keypoints, tol: float = DEGENERACY_TOL) -> int:
    """Index of the single keypoint on the opposite side of ``axis`` from all others.

    Raises
    ------
    AmbiguityError
        Fewer than 3 keypoints, any keypoint on the axis, or no unique
        dissenting sign.
    """
    s = cross_signs(axis, centroid, keypoints, tol)
    if len(s) < 3:
        raise AmbiguityError(f"need at least 3 keypoints, got {len(s)}")
    if np.any(s == 0):
        raise AmbiguityError("keypoint lies on the axis")
    pos = np.flatnonzero(s > 0)
    neg = np.flatnonzero(s < 0)
    if len(pos) == 1 and len(neg) >= 2:
        return int(pos[0])
    if len(neg) == 1 and len(pos) >= 2:
        return int(neg[0])
    raise AmbiguityError(f"no unique dissenting keypoint (signs {s.tolist()})")


__all__ = [
    "DEGENERACY_TOL",
    "BitMask",
    "FlatPoints",
    "Moments",
    "RLE",
    "as_vertices",
    "bbox_from_polygon",
    "bbox_from_rings",
    "clip_polygon_to_rect",
    "cross_signs",
    "distance_to_boundary",
    "keypoints_to_polygon",
    "mask_moments",
    "outer_keypoint",
    "pad_keypoints",
    "polygon_to_keypoints",
    "principal_axis",
    "rasterize_polygon",
    "rle_decode",
    "rle_encode",
    "shoelace_area",
    "upgrade_visibility",
]
