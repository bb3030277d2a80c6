"""Entropic transport on stereo scanlines with occlusion recovery.

The pipeline treats each pair of rectified scanlines as two measures
on the pixel grid, solves the quadratic-cost entropic transport
between them, and reads the disparity off the plan's barycenters.
Rows whose masses differ route through an occlusion recovery loop
that localizes the hidden interval and the rigid shift of the
occluding object.
"""
from .disparity import (
    DisparityMap,
    DisparityProfile,
    OcclusionReport,
    compression,
    disparity_map,
    disparity_profile,
    estimate_phi,
    recover_occlusions,
)
from .errors import (
    DimensionMismatchError,
    EmptyScanlineError,
    InfeasibleProjectionError,
    InstanceTooLargeError,
    InvalidIntensityError,
    MassMismatchError,
    NoPlateauError,
    NumericalUnderflowError,
    OtStereoError,
    OutOfFrameError,
    QuantizationError,
    SceneFormatError,
    SupportMismatchError,
    UnresolvedOcclusionError,
    WrongPathError,
)
from .exact import ExactSolution, brute_force_plan, exact_cost, monotone_plan
from .kernel import GibbsKernel, build_kernel, hilbert_distance
from .measures import (
    MassComparison,
    ScanlineMeasure,
    compare_masses,
    measure_from_row,
    normalize,
)
from .scene import (
    CameraRig,
    CartoonScene,
    PointCloud,
    RenderedPair,
    SceneObject,
    depth_from_disparity,
    load_scene,
    map_from_values,
    parse_scene,
    pixel_shift,
    reconstruct,
    render_pair,
)
from .sinkhorn import (
    ConvergenceReport,
    ScalingVectors,
    ShiftedLimits,
    SinkhornConfig,
    TransportPlan,
    iteration_trace,
    kl_divergence,
    project_cols,
    project_rows,
    regularized_cost,
    shifted_sinkhorn,
    sinkhorn,
    sinkhorn_log,
    transport_cost,
)

__all__ = [
    "CameraRig",
    "CartoonScene",
    "ConvergenceReport",
    "DimensionMismatchError",
    "DisparityMap",
    "DisparityProfile",
    "EmptyScanlineError",
    "ExactSolution",
    "GibbsKernel",
    "InfeasibleProjectionError",
    "InstanceTooLargeError",
    "InvalidIntensityError",
    "MassComparison",
    "MassMismatchError",
    "NoPlateauError",
    "NumericalUnderflowError",
    "OcclusionReport",
    "OtStereoError",
    "OutOfFrameError",
    "PointCloud",
    "QuantizationError",
    "RenderedPair",
    "ScalingVectors",
    "ScanlineMeasure",
    "SceneFormatError",
    "SceneObject",
    "ShiftedLimits",
    "SinkhornConfig",
    "SupportMismatchError",
    "TransportPlan",
    "UnresolvedOcclusionError",
    "WrongPathError",
    "brute_force_plan",
    "build_kernel",
    "compare_masses",
    "compression",
    "depth_from_disparity",
    "disparity_map",
    "disparity_profile",
    "estimate_phi",
    "exact_cost",
    "hilbert_distance",
    "iteration_trace",
    "kl_divergence",
    "load_scene",
    "map_from_values",
    "measure_from_row",
    "monotone_plan",
    "normalize",
    "parse_scene",
    "pixel_shift",
    "project_cols",
    "project_rows",
    "reconstruct",
    "recover_occlusions",
    "regularized_cost",
    "render_pair",
    "shifted_sinkhorn",
    "sinkhorn",
    "sinkhorn_log",
    "transport_cost",
]
