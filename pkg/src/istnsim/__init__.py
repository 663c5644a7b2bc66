"""Time-windowed simulator and optimizer for satellite-terrestrial downlinks.

The package covers the full loop: scenario geometry and mobility, ray-traced
channel gains, the joint association/power optimization model, its smoothed
convex subproblems, an interior-point solver, the window algorithms, and an
experiment harness with a CLI front end.
"""

from .scenario import (
    TimeGrid,
    OrbitState,
    Route,
    NodeSet,
    BackgroundLoad,
    Scenario,
    scenario_from_dict,
    load_scenario,
    fov_mask,
    propagate_orbit,
    elevation_azimuth,
    draw_background_load,
)
from .channel import (
    Box,
    SceneModel,
    AntennaConfig,
    ChannelTensor,
    build_channel_tensor,
    trace_rays,
    fspl_db,
    noise_power,
    cinr_map,
    save_channel_trace,
    load_channel_trace,
)
from .model import (
    RadioParams,
    AssociationSolution,
    rate_matrix,
    objective,
    objective_components,
    cc_count,
    check_feasibility,
    FeasibilityReport,
)
from .sca import (
    SmoothingParams,
    SubproblemSpec,
    SpecBuilder,
    FeasiblePoint,
    f_apx,
    f_apx_upper,
    build_subproblem,
    build_init_problem,
    init_expansion_point,
    extract_solution,
    point_from_solution,
    recover_binary,
)
from .solver import SolverConfig, SolverResult, solve, kkt_residuals
from .harness import (
    ConfigError,
    ExperimentConfig,
    MetricsRecord,
    experiment_from_dict,
    load_experiment,
    run,
    run_point,
    apply_axis,
    emit_csv,
    parse_csv,
    save_solution,
    load_solution,
    pareto_points,
    rate_cdf,
    coverage_curve,
)
from .algorithms import (
    AlgoConfig,
    SCARunTrace,
    PredictionState,
    InitInfeasibleError,
    SolverFailureError,
    ftw,
    ptw,
    greedy,
    fwua,
    predict_channel,
    mape,
)

__version__ = "0.1.0"

__all__ = [
    "TimeGrid", "OrbitState", "Route", "NodeSet", "BackgroundLoad",
    "Scenario", "scenario_from_dict", "load_scenario", "fov_mask",
    "propagate_orbit", "elevation_azimuth", "draw_background_load",
    "Box", "SceneModel", "AntennaConfig", "ChannelTensor",
    "build_channel_tensor", "trace_rays", "fspl_db", "noise_power",
    "cinr_map", "save_channel_trace", "load_channel_trace",
    "RadioParams", "AssociationSolution", "rate_matrix", "objective",
    "objective_components", "cc_count", "check_feasibility",
    "FeasibilityReport",
    "SmoothingParams", "SubproblemSpec", "SpecBuilder", "FeasiblePoint",
    "f_apx", "f_apx_upper", "build_subproblem", "build_init_problem",
    "init_expansion_point", "extract_solution", "point_from_solution",
    "recover_binary",
    "SolverConfig", "SolverResult", "solve", "kkt_residuals",
    "ConfigError", "ExperimentConfig", "MetricsRecord",
    "experiment_from_dict", "load_experiment", "run", "run_point",
    "apply_axis", "emit_csv", "parse_csv", "save_solution", "load_solution",
    "pareto_points", "rate_cdf", "coverage_curve",
    "AlgoConfig", "SCARunTrace", "PredictionState", "InitInfeasibleError",
    "SolverFailureError", "ftw", "ptw", "greedy", "fwua", "predict_channel",
    "mape",
    "__version__",
]
