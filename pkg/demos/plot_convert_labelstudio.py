"""
From a Label Studio export to one combined COCO file
====================================================

Polygons and keypoints are drawn as separate results in Label Studio.  This
walk-through converts the bundled two-image JSON-min export into a single
COCO file where every annotation carries its bbox, polygon and keypoints.
"""

import json

import numpy as np

from multilabel_coco.coco import serialize_dataset, validate
from multilabel_coco.fixtures import categories_fixture_text, jsonmin_fixture_text
from multilabel_coco.labelstudio import associate_keypoints, convert, parse_category_specs, parse_jsonmin

###############################################################################
# The export stores coordinates as percentages of the image size.

tasks = parse_jsonmin(jsonmin_fixture_text())
specs = parse_category_specs(categories_fixture_text())
for task in tasks:
    print(task.file_name, task.original_width, "x", task.original_height,
          len(task.polygon_results), "polygons,", len(task.keypoint_results), "keypoints")

###############################################################################
# Keypoints carry no link to the polygon they belong to.  Each one goes to
# the polygon of a compatible category that contains it, or failing that to
# the nearest one.

for slots, poly in zip(associate_keypoints(tasks[0], specs), tasks[0].polygon_results):
    print(poly.label, np.asarray(slots).tolist())

###############################################################################
# Convert, validate and look at the first annotation.

ds = convert(tasks, specs)
assert validate(ds) == []
doc = json.loads(serialize_dataset(ds))
ann = doc["annotations"][0]
print("bbox", ann["bbox"], "area", ann["area"], "num_keypoints", ann["num_keypoints"])
print("keypoints", ann["keypoints"])
