"""Distributionally robust moving-horizon estimation from noise samples.

Synthesizes linear smoothing/prediction policies for linear time-varying
systems by minimizing a worst-case absolute-error objective over all noise
distributions near an empirical sample cloud, one small linear program per
error coordinate.  Ships with the stacked-operator machinery, baseline
estimators (Kalman filter, quadratic moving-horizon smoother) and a
reproducible Van der Pol prediction benchmark.
"""

from .baselines import EkfConfig, QmheConfig, WindowData, ekf_step, qmhe_solve
from .bench import (
    BenchConfig,
    BenchResult,
    SeedRun,
    emit_results,
    emit_sweep,
    parse_config,
    run_benchmark,
    sweep_epsilon,
)
from .errors import (
    CausalityError,
    ConditioningError,
    ConfigError,
    ContractViolation,
    CorpusError,
    DimensionError,
    InstabilityError,
    SolverError,
)
from .l1min import L1Problem, L1Solution, l1_fit, l1_fit_batch
from .noise import (
    NoiseProfile,
    RealizationCorpus,
    build_sample_set,
    generate_corpus,
    load_corpus,
    sample_bimodal,
    sample_sine,
    save_corpus,
)
from .stacking import (
    LtvSystem,
    ObservabilityReport,
    StackedNoise,
    StackedOperators,
    Window,
    build_downshift,
    build_stacked,
    check_observability,
    propagate_error,
    stack_noise,
)
from .synthesis import (
    RiskParams,
    SampleSet,
    SlsMaps,
    SynthesisResult,
    assemble_mu,
    assemble_psi,
    check_achievability,
    evaluate_risk,
    gain_from_phi,
    phi_from_gain,
    solve_response_rows,
    synthesize,
)
from .vanderpol import (
    SimTrace,
    euler_step,
    linearize,
    load_trace,
    save_trace,
    simulate,
    simulate_from_draws,
    vdp_rhs,
)

__version__ = "0.1.0"

__all__ = [
    "BenchConfig",
    "BenchResult",
    "CausalityError",
    "ConditioningError",
    "ConfigError",
    "ContractViolation",
    "CorpusError",
    "DimensionError",
    "EkfConfig",
    "InstabilityError",
    "L1Problem",
    "L1Solution",
    "LtvSystem",
    "NoiseProfile",
    "ObservabilityReport",
    "QmheConfig",
    "RealizationCorpus",
    "RiskParams",
    "SampleSet",
    "SeedRun",
    "SimTrace",
    "SlsMaps",
    "SolverError",
    "StackedNoise",
    "StackedOperators",
    "SynthesisResult",
    "Window",
    "WindowData",
    "assemble_mu",
    "assemble_psi",
    "build_downshift",
    "build_sample_set",
    "build_stacked",
    "check_achievability",
    "check_observability",
    "ekf_step",
    "emit_results",
    "emit_sweep",
    "euler_step",
    "evaluate_risk",
    "gain_from_phi",
    "generate_corpus",
    "l1_fit",
    "l1_fit_batch",
    "linearize",
    "load_corpus",
    "load_trace",
    "parse_config",
    "phi_from_gain",
    "propagate_error",
    "qmhe_solve",
    "run_benchmark",
    "sample_bimodal",
    "sample_sine",
    "save_corpus",
    "save_trace",
    "simulate",
    "simulate_from_draws",
    "solve_response_rows",
    "stack_noise",
    "sweep_epsilon",
    "synthesize",
    "vdp_rhs",
]
