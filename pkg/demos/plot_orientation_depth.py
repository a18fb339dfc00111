"""
Orientation, placement and depth from a mask and three keypoints
================================================================

The elongation axis of a mask comes from its second-order central moments.
Keypoints on either side of that axis tell how the part is placed, and a
single keypoint gives a much tighter depth reading than the whole mask.
"""

import math

from multilabel_coco.fixtures import rasterized_ellipse, tilted_plane_fixture
from multilabel_coco.post_detect import compare_depth_methods, estimate_orientation, verify_configuration

###############################################################################
# An ellipse drawn at 35 degrees.  The recovered axis is a unit vector in
# pixel-index coordinates (x = column, y = row, so y points down).

mask = rasterized_ellipse(160, 200, (100, 80), 60, 18, 35)
axis, centroid = estimate_orientation(mask)
print("axis", axis, "angle", math.degrees(math.atan2(axis[1], axis[0])), "centroid", centroid)

###############################################################################
# Two keypoints sit on one side of the axis and one on the other.  The odd
# one out is the outer keypoint; which side counts as correct is a
# property of the scene, so the caller supplies it.

u = axis
n = (-u[1], u[0])
cx, cy = centroid
kps = [(cx + 30 * u[0] - 4 * n[0], cy + 30 * u[1] - 4 * n[1]),
       (cx - 30 * u[0] - 4 * n[0], cy - 30 * u[1] - 4 * n[1]),
       (cx + 6 * n[0], cy + 6 * n[1])]
for side in ("positive", "negative"):
    v = verify_configuration(mask, kps, side)
    print(side, "->", v.outer_index, v.outer_side, v.placement)

###############################################################################
# Depth on a plane tilted along the bar.  The keypoint lands on a hole, so
# its reading is the median of a 5x5 window.

depth, bar, kp = tilted_plane_fixture()
res = compare_depth_methods(depth, bar, kp)
for key in ("mask_average", "keypoint"):
    print(key, res[key].to_json())
print("range ratio", res["range_ratio"])
