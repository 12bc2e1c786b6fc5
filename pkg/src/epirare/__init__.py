"""Rare-event probability estimation for stochastic compartmental epidemic
models: crude Monte-Carlo, importance sampling (fixed and cross-entropy
adapted), and interacting-branching-particle multilevel splitting, validated
against an exact final-size distribution.
"""

from .core import (
    Axis,
    CompartmentState,
    EpidemicPath,
    EventKind,
    HivParams,
    JumpEvent,
    ModelParams,
    NEVER,
    Never,
    ReedFrostParams,
    Scaling,
    SeedSpec,
    SimulationError,
    SirParams,
    extinction_time,
    read_path_csv,
    state_at,
    write_path_csv,
)
from .estimators import (
    Diagnostics,
    Estimate,
    Particle,
    ParticleEnsemble,
    ce_estimate,
    cmc,
    is_estimate,
    rf_log_likelihood,
    sir_importance_ratio,
)
from .events import (
    CumulativeInfections,
    DiagnosesIncrement,
    Duration,
    EventSpec,
    FinalSize,
    Incidence,
    LevelSchedule,
    NoProgressError,
    hitting_time,
    indicator,
    quantile_levels,
    score,
)
from .final_size import (
    UnstableSolveError,
    brute_force_final_size,
    exact_final_size,
    tail_pf,
    threshold_for_tail,
)
from .models import (
    EVENT_CAP,
    StopRule,
    hiv_rates,
    hiv_simulate,
    rf_simulate,
    rf_step,
    sir_rates,
    sir_simulate,
)
from .splitting import ibps_estimate, temporal_split_estimate

__version__ = "0.1.0"

__all__ = [
    "Axis",
    "CompartmentState",
    "CumulativeInfections",
    "DiagnosesIncrement",
    "Diagnostics",
    "Duration",
    "EVENT_CAP",
    "EpidemicPath",
    "Estimate",
    "EventKind",
    "EventSpec",
    "FinalSize",
    "HivParams",
    "Incidence",
    "JumpEvent",
    "LevelSchedule",
    "ModelParams",
    "NEVER",
    "Never",
    "NoProgressError",
    "Particle",
    "ParticleEnsemble",
    "ReedFrostParams",
    "Scaling",
    "SeedSpec",
    "SimulationError",
    "SirParams",
    "StopRule",
    "UnstableSolveError",
    "brute_force_final_size",
    "ce_estimate",
    "cmc",
    "exact_final_size",
    "extinction_time",
    "hitting_time",
    "hiv_rates",
    "hiv_simulate",
    "ibps_estimate",
    "indicator",
    "is_estimate",
    "quantile_levels",
    "read_path_csv",
    "rf_log_likelihood",
    "rf_simulate",
    "rf_step",
    "score",
    "sir_importance_ratio",
    "sir_rates",
    "sir_simulate",
    "state_at",
    "tail_pf",
    "temporal_split_estimate",
    "threshold_for_tail",
    "write_path_csv",
]
