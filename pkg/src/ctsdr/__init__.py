"""Desk-scale simulator and planning toolkit for a two-tube steerable drill.

Kinematics, voxel phantom drilling, tunnel metrology, inverse planning, and
a small streaming teleoperation service over one shared robot model.
"""

from .geometry import Frame, rotation_about, rotation_x
from .model import (
    STRAIGHT,
    DrillBitSpec,
    JointLimits,
    JointState,
    RobotConfig,
    SheathSpec,
    TubeSpec,
    ValidationReport,
    default_config,
    load_config,
    save_config,
    second_moment_of_area,
    validate_config,
)
from .kinematics import (
    Centerline,
    JacobianResult,
    Segment,
    SegmentStack,
    blend_curvature,
    decompose_segments,
    forward_kinematics,
    numeric_jacobian,
    tip_frame,
    tip_position,
)
from .phantom import (
    DEFAULT_VOXEL_BUDGET,
    NoTunnelError,
    VoxelBudgetError,
    VoxelPhantom,
    carve_swept_sphere,
    create_phantom,
    project,
    swept_occupied,
    tunnel_centerline,
    tunnel_diameter,
    write_pgm,
)
from .simulator import (
    Command,
    DrillSimulator,
    Event,
    Phase,
    RunRecord,
    ScenarioScript,
    ScriptRunner,
    builtin_scenarios,
    run_scenario,
    scenario_by_name,
)
from .analysis import (
    ArcFit,
    IdealParameters,
    MetricsReport,
    SegmentMetrics,
    SplitError,
    SplitResult,
    calibrate_runout,
    calibrate_stiffness_ratio,
    fit_circle,
    fit_plane,
    metrics_report,
    resample_polyline,
    run_summary,
    split_s_curve,
)
from .planner import (
    PlanCandidate,
    PlanRequest,
    PlanResult,
    RankedCandidate,
    UnreachableTargetError,
    plan_cost,
    plan_s_shape,
)

__version__ = "0.1.0"

__all__ = [
    "Frame", "rotation_about", "rotation_x",
    "STRAIGHT", "TubeSpec", "SheathSpec", "DrillBitSpec", "JointLimits",
    "JointState", "RobotConfig", "ValidationReport", "default_config",
    "load_config", "save_config", "second_moment_of_area", "validate_config",
    "Centerline", "Segment", "SegmentStack", "JacobianResult",
    "blend_curvature", "decompose_segments", "forward_kinematics",
    "numeric_jacobian", "tip_frame", "tip_position",
    "DEFAULT_VOXEL_BUDGET", "VoxelBudgetError", "NoTunnelError", "VoxelPhantom",
    "create_phantom", "carve_swept_sphere", "swept_occupied",
    "tunnel_centerline", "tunnel_diameter", "project", "write_pgm",
    "Command", "Phase", "ScenarioScript", "Event", "RunRecord",
    "DrillSimulator", "ScriptRunner", "run_scenario", "builtin_scenarios",
    "scenario_by_name",
    "ArcFit", "SplitError", "SplitResult", "IdealParameters", "SegmentMetrics",
    "MetricsReport", "fit_circle", "fit_plane", "resample_polyline",
    "split_s_curve", "metrics_report", "run_summary", "calibrate_runout",
    "calibrate_stiffness_ratio",
    "PlanRequest", "PlanCandidate", "PlanResult", "RankedCandidate",
    "UnreachableTargetError", "plan_cost", "plan_s_shape",
    "__version__",
]
