"""artiplane: deterministic recovery of planar interiors from articulated views.

The package covers the full non-neural pipeline: synthetic articulated
scene generation with ray-cast interior labeling, per-view plane lifting
from depth, multi-view plane fusion, PnP pose solving on unarticulated
pixels, and 3-D motion realization, with oracle prediction sources (plus
noise models) standing in for learned predictors.
"""

from .core import (
    BinaryMask,
    DepthMap,
    Intrinsics,
    Plane,
    PointCloud,
    Pose,
    RigidTransform,
    TriMesh,
    backproject,
    default_intrinsics,
    fit_plane_lsq,
    normal_angle_deg,
    plane_signed_distance,
    transform_points,
)
from .errors import (
    ContractViolation,
    DegenerateInput,
    GenerationError,
    GeometryError,
    PoseFailure,
)
from .kinematics import (
    MotionParams,
    MotionType,
    PartArticulation,
    apply_motion,
    motion_to_transform,
    reverse_motion,
    snap_to_canonical,
)

__version__ = "0.1.0"
