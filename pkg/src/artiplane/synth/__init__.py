from .generator import (
    ArticulatedModel,
    Category,
    PartTemplate,
    SceneSpec,
    articulated_mesh,
    generate_model,
    sample_views,
)
from .render import SweepConfig, ViewBundle, interior_pixels, raycast_render, rest_visible_faces
from .dataset import GroundTruth, build_ground_truth, export_dataset, extract_gt_planes, load_dataset

__all__ = [
    "ArticulatedModel",
    "Category",
    "GroundTruth",
    "PartTemplate",
    "SceneSpec",
    "SweepConfig",
    "ViewBundle",
    "articulated_mesh",
    "build_ground_truth",
    "export_dataset",
    "extract_gt_planes",
    "generate_model",
    "interior_pixels",
    "load_dataset",
    "raycast_render",
    "rest_visible_faces",
    "sample_views",
]
