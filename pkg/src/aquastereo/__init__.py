"""Refraction-aware stereo for cameras behind a flat underwater port.

The hot loops (per-point Fermat path solves, window statistics, domain-limited
block search, locus rasterisation) run in a compiled extension when it is
built; :mod:`aquastereo.kernels` falls back to numpy otherwise.
"""

from .calibration import (
    BoardPose,
    CalibrationProblem,
    CalibrationReport,
    CornerObservation,
    calibrate,
    initial_board_poses,
    reprojection_residuals,
)
from .errors import *  # noqa: F401,F403
from .geometry import (
    MediaIndices,
    PortPlane,
    Ray,
    closest_point_pair,
    intersect_ray_plane,
    refract_direction,
    trace_through_port,
)
from .kernels import available_backends, backend_name, set_backend, use_backend
from .matcher import (
    DepthMap,
    MatchParams,
    MatchResult,
    PointCloud,
    coverage,
    match_dense,
    match_pixel,
    patch_cost,
    to_point_cloud,
    triangulate_match,
)
from .optics import (
    Camera,
    CameraIntrinsics,
    CameraPose,
    EnvironmentSample,
    IndexCoefficients,
    StereoRig,
    apply_environment,
    project_pinhole,
    unproject_pinhole,
    water_refractive_index,
)
from .projection import back_project, fermat_path, forward_project, point_at_depth
from .rigs import rectified_rig, standard_rig
from .search_domain import EpipolarLocus, SearchDomain, build_search_domain, epipolar_locus
from .simulator import (
    NoiseSpec,
    SceneSpec,
    noise_stream,
    render_points,
    render_stereo_pair,
    synthesize_corners,
)

__version__ = "0.1.0"
