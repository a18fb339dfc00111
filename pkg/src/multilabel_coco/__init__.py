"""Multi-label annotation pipeline for combined COCO datasets.

Label Studio polygons and keypoints are merged into one COCO file whose
annotations carry bbox, segmentation and keypoints together; the dataset can
then be augmented with all label types kept consistent, and detector outputs
can be post-processed for orientation and depth.
"""

__version__ = "0.1.0"

from .augment import (
    ImageRaster,
    PipelineConfig,
    TransformSpec,
    affine_of,
    augment_dataset,
    transform_annotation,
    transform_points,
    warp_image,
)
from .coco import (
    CocoAnnotation,
    CocoCategory,
    CocoDataset,
    CocoImage,
    Violation,
    parse_dataset,
    serialize_dataset,
    validate,
)
from .geometry import (
    RLE,
    BitMask,
    FlatPoints,
    Moments,
    bbox_from_polygon,
    keypoints_to_polygon,
    mask_moments,
    outer_keypoint,
    pad_keypoints,
    polygon_to_keypoints,
    principal_axis,
    rasterize_polygon,
    rle_decode,
    rle_encode,
    shoelace_area,
    upgrade_visibility,
)
from .labelstudio import CategorySpec, LabelTask, convert, parse_jsonmin
from .post_detect import (
    ConfigVerdict,
    DepthMap,
    DepthReport,
    compare_depth_methods,
    depth_from_keypoint,
    depth_from_mask,
    estimate_orientation,
    verify_configuration,
)

__all__ = [
    "affine_of",
    "augment_dataset",
    "bbox_from_polygon",
    "BitMask",
    "CategorySpec",
    "CocoAnnotation",
    "CocoCategory",
    "CocoDataset",
    "CocoImage",
    "compare_depth_methods",
    "ConfigVerdict",
    "convert",
    "depth_from_keypoint",
    "depth_from_mask",
    "DepthMap",
    "DepthReport",
    "estimate_orientation",
    "FlatPoints",
    "ImageRaster",
    "keypoints_to_polygon",
    "LabelTask",
    "mask_moments",
    "Moments",
    "outer_keypoint",
    "pad_keypoints",
    "parse_dataset",
    "parse_jsonmin",
    "PipelineConfig",
    "polygon_to_keypoints",
    "principal_axis",
    "rasterize_polygon",
    "RLE",
    "rle_decode",
    "rle_encode",
    "serialize_dataset",
    "shoelace_area",
    "transform_annotation",
    "transform_points",
    "TransformSpec",
    "upgrade_visibility",
    "validate",
    "verify_configuration",
    "Violation",
    "warp_image",
]
