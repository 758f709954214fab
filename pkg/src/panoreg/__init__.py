"""Two-view panorama registration and layout fusion from horizon maps."""
from .errors import (
    CameraOutsideRoom,
    ClippingFailure,
    GenerationFailed,
    NoConsensus,
    PanoregError,
    RegistrationFailure,
    SchemaError,
    TooFewPairs,
)
from .fusion import LayoutSolid, boundary_to_layout, fuse, union_layouts
from .geometry import BoundaryMap, PlanarPose, SampleGrid, boundary_to_depth, depth_to_boundary
from .losses import LossComponents, LossWeights, map_losses, total_loss
from .metrics import MetricsReport, angular_errors, iou_2d, iou_3d, maa
from .pipeline import run_pair
from .registration import RansacConfig, RegistrationResult, register
from .scene import HorizonMaps, NoiseSpec, RoomScene, ground_truth_maps, perturb_maps, random_scene

__all__ = [
    "BoundaryMap",
    "CameraOutsideRoom",
    "ClippingFailure",
    "GenerationFailed",
    "HorizonMaps",
    "LayoutSolid",
    "LossComponents",
    "LossWeights",
    "MetricsReport",
    "NoConsensus",
    "NoiseSpec",
    "PanoregError",
    "PlanarPose",
    "RansacConfig",
    "RegistrationFailure",
    "RegistrationResult",
    "RoomScene",
    "SampleGrid",
    "SchemaError",
    "TooFewPairs",
    "angular_errors",
    "boundary_to_depth",
    "boundary_to_layout",
    "depth_to_boundary",
    "fuse",
    "ground_truth_maps",
    "iou_2d",
    "iou_3d",
    "maa",
    "map_losses",
    "perturb_maps",
    "random_scene",
    "register",
    "run_pair",
    "total_loss",
    "union_layouts",
]
