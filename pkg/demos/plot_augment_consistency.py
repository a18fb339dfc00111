"""
Augmenting images and all their labels together
===============================================

A single affine matrix moves the pixels, the polygon, the bbox and the
keypoints, so the labels stay on the object.  We check this by warping a
rasterized polygon and comparing it with the rasterized moved polygon.
"""

import numpy as np

from multilabel_coco.augment import (
    ImageRaster,
    TransformSpec,
    apply_affine,
    augment_dataset,
    compose,
    default_pipeline,
    transform_annotation,
    warp_image,
)
from multilabel_coco.fixtures import synthetic_dataset
from multilabel_coco.geometry import rasterize_polygon

###############################################################################
# A rotate-then-scale transform, composed into one 2x3 matrix.

specs = [TransformSpec("rotate", {"degrees": 30}), TransformSpec("scale", {"factor": 1.2})]
M, w, h = compose(specs, 160, 120)
print(np.round(M, 4))

###############################################################################
# Apply it to one synthetic rocker arm.  Keypoints that leave the frame
# would become ``(0, 0, 0)``; here they all stay visible.

ds, rasters = synthetic_dataset(1)
ann = ds.annotations[0]
moved = transform_annotation(ann, M, w, h)
print("before", ann.bbox, ann.keypoints)
print("after ", moved.bbox, moved.keypoints)

###############################################################################
# Label-image agreement: rasterize-then-warp vs transform-then-rasterize.

src = ImageRaster(rasterize_polygon(ann.rings, 120, 160).bits.astype(np.uint8) * 255)
warped = warp_image(src, M, w, h).data[:, :, 0] >= 128
labels = rasterize_polygon([apply_affine(M, r) for r in ann.rings], h, w).bits
print("IoU", (warped & labels).sum() / (warped | labels).sum())

###############################################################################
# Whole-dataset expansion is seeded per image and copy, so thread count
# does not change the output.

ds, rasters = synthetic_dataset(3)
one, _ = augment_dataset(ds, rasters.__getitem__, default_pipeline(4, seed=1), jobs=1)
many, _ = augment_dataset(ds, rasters.__getitem__, default_pipeline(4, seed=1), jobs=4)
print(len(ds.images), "->", len(one.images), "images; identical:", one == many)
