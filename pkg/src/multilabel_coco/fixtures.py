"""Bundled and synthetic fixtures used by the tests, demos and CLI smoke runs.

Everything here is deterministic.  The Label Studio export and category
schema are stored as package data; images, scenes and depth maps are
generated on demand.
"""

from __future__ import annotations

import math
from importlib import resources
from pathlib import Path

import numpy as np

from .augment import ImageRaster, save_image
from .coco import CocoCategory, CocoDataset, CocoImage, make_annotation
from .geometry import BitMask, rasterize_polygon
from .labelstudio import parse_jsonmin, percent_to_pixels
from .post_detect import DepthMap


def data_path(name: str) -> Path:
    return Path(str(resources.files("multilabel_coco") / "data" / name))


def jsonmin_fixture_text() -> str:
    """Two-image Label Studio JSON-min export with polygons and keypoints."""
    return data_path("jsonmin_fixture.json").read_text(encoding="utf-8")


def categories_fixture_text() -> str:
    return data_path("categories.json").read_text(encoding="utf-8")


def render_scene(width: int, height: int, rings_per_object, channels: int = 3, seed: int = 0) -> ImageRaster:
    """Paint polygons over a smooth textured background."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    base = 40 + 30 * np.sin(xx / 17.0) * np.cos(yy / 23.0) + rng.integers(0, 12, size=(height, width))
    img = np.repeat(base[:, :, None], channels, axis=2).astype(float)
    for i, rings in enumerate(rings_per_object):
        m = rasterize_polygon(rings, height, width).bits
        shade = np.array([170 + 25 * (i % 3), 140 + 30 * (i % 2), 110 + 20 * (i % 4)])[:channels]
        img[m] = shade + (xx[m] % 7)[:, None]
    return ImageRaster(np.clip(img, 0, 255).astype(np.uint8))


def write_jsonmin_fixture_images(directory) -> list[Path]:
    """Render the images referenced by the JSON-min fixture into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, task in enumerate(parse_jsonmin(jsonmin_fixture_text())):
        rings = [[percent_to_pixels(p.points, task.original_width, task.original_height)]
                 for p in task.polygon_results]
        img = render_scene(task.original_width, task.original_height, rings, seed=i)
        path = directory / task.file_name
        save_image(img, path)
        paths.append(path)
    return paths


def write_jsonmin_bundle(directory) -> dict:
    """Write the JSON-min export, category file and images; returns their paths."""
    directory = Path(directory)
    images = directory / "images"
    write_jsonmin_fixture_images(images)
    tasks = directory / "tasks.json"
    cats = directory / "categories.json"
    tasks.write_text(jsonmin_fixture_text(), encoding="utf-8")
    cats.write_text(categories_fixture_text(), encoding="utf-8")
    return {"tasks": tasks, "categories": cats, "images_dir": images}


ROCKER_ARM = CocoCategory(
    id=1, name="rocker_arm", keypoint_names=("pivot", "valve_end", "pushrod_end"),
    skeleton=((1, 2), (1, 3)), supercategory="engine_part",
)


def rocker_arm_shape(cx, cy, length, thickness, angle_deg, n=12):
    """Lozenge-like rocker arm outline and its three keypoints.

    Keypoints are the two arm ends on the axis and a pivot offset to one side,
    so the pivot is the single outer keypoint.
    """
    t = math.radians(angle_deg)
    u = np.array([math.cos(t), math.sin(t)])
    nrm = np.array([-math.sin(t), math.cos(t)])
    c = np.array([cx, cy])
    s = np.linspace(0, 2 * math.pi, n, endpoint=False)
    pts = c + np.outer(np.cos(s) * length / 2, u) + np.outer(np.sin(s) * thickness / 2, nrm)
    pivot = c + nrm * thickness * 0.3
    valve = c - u * length * 0.4 - nrm * thickness * 0.1
    push = c + u * length * 0.4 - nrm * thickness * 0.1
    return np.round(pts, 2), np.round(np.array([pivot, valve, push]), 2)


def synthetic_dataset(n_images: int = 5, width: int = 160, height: int = 120, seed: int = 7):
    """Small combined-COCO dataset of rocker-arm scenes plus its rendered images.

    Returns ``(dataset, {file_name: ImageRaster})``.
    """
    rng = np.random.default_rng(seed)
    images, anns, rasters = [], [], {}
    for i in range(1, n_images + 1):
        name = f"scene_{i:03d}.png"
        images.append(CocoImage(i, name, width, height))
        objects = []
        for _ in range(1 + i % 2):
            cx = rng.uniform(0.3, 0.7) * width
            cy = rng.uniform(0.3, 0.7) * height
            room = 2 * min(cx, width - cx, cy, height - cy) - 4
            length = min(rng.uniform(50, 80), room)
            ring, kps = rocker_arm_shape(cx, cy, length, rng.uniform(14, 22), rng.uniform(0, 180))
            objects.append([ring])
            trip = np.column_stack([kps, np.full(3, 2)]).ravel()
            anns.append(make_annotation(len(anns) + 1, i, ROCKER_ARM.id, [ring.ravel()], trip))
        rasters[name] = render_scene(width, height, objects, seed=seed * 100 + i)
    return CocoDataset(images, anns, [ROCKER_ARM]), rasters


def write_synthetic_bundle(directory, n_images: int = 5) -> dict:
    """Write a synthetic dataset (COCO JSON + images) for CLI runs."""
    from .coco import serialize_dataset

    directory = Path(directory)
    images_dir = directory / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    ds, rasters = synthetic_dataset(n_images)
    for name, img in rasters.items():
        save_image(img, images_dir / name)
    coco = directory / "coco.json"
    coco.write_text(serialize_dataset(ds), encoding="utf-8")
    return {"coco": coco, "images_dir": images_dir, "dataset": ds}


def rasterized_ellipse(height, width, center, semi_major, semi_minor, angle_deg) -> BitMask:
    """Pixels whose index coordinates fall inside a rotated ellipse."""
    t = math.radians(angle_deg)
    yy, xx = np.mgrid[0:height, 0:width].astype(float)
    dx, dy = xx - center[0], yy - center[1]
    a = dx * math.cos(t) + dy * math.sin(t)
    b = -dx * math.sin(t) + dy * math.cos(t)
    return BitMask((a / semi_major) ** 2 + (b / semi_minor) ** 2 <= 1.0)


# depth fixtures -------------------------------------------------------------

DEPTH_WIDTH, DEPTH_HEIGHT = 120, 80
KEYPOINT_DEPTH_MM = 468


def constant_depth(value: int = KEYPOINT_DEPTH_MM, width: int = DEPTH_WIDTH, height: int = DEPTH_HEIGHT) -> DepthMap:
    return DepthMap(np.full((height, width), value, dtype=np.uint16))


def tilted_plane_fixture():
    """Depth plane ramping 1 mm per column under a 60x8 px horizontal bar.

    The keypoint sits at the bar centre on a missing-data pixel, so its
    reading comes from the 5x5 fallback window (468 mm, range 466-470),
    while the mask spans 438-497 mm.

    Returns ``(depth, mask, keypoint)`` with the keypoint in index coordinates.
    """
    cols = np.arange(DEPTH_WIDTH)
    values = np.tile(KEYPOINT_DEPTH_MM + (cols - 60), (DEPTH_HEIGHT, 1)).astype(np.uint16)
    values[40, 60] = 0
    mask = np.zeros((DEPTH_HEIGHT, DEPTH_WIDTH), dtype=bool)
    mask[36:44, 30:90] = True
    return DepthMap(values), BitMask(mask), (60.0, 40.0)


def bar_annotation_dataset(kp_xy, width: int = DEPTH_WIDTH, height: int = DEPTH_HEIGHT):
    """One-annotation dataset whose polygon covers the tilted-plane bar.

    ``kp_xy`` are three continuous-coordinate keypoints.
    """
    ring = [30, 36, 90, 36, 90, 44, 30, 44]
    kps = []
    for x, y in kp_xy:
        kps += [x, y, 2]
    ann = make_annotation(1, 1, ROCKER_ARM.id, [ring], kps)
    return CocoDataset([CocoImage(1, "bar.png", width, height)], [ann], [ROCKER_ARM])


__all__ = [
    "ROCKER_ARM",
    "bar_annotation_dataset",
    "categories_fixture_text",
    "constant_depth",
    "data_path",
    "jsonmin_fixture_text",
    "rasterized_ellipse",
    "render_scene",
    "rocker_arm_shape",
    "synthetic_dataset",
    "tilted_plane_fixture",
    "write_jsonmin_bundle",
    "write_jsonmin_fixture_images",
    "write_synthetic_bundle",
]
