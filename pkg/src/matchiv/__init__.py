"""Leave-one-out IV estimation of peer effects in match-structured panels,
with a paired ground-truth simulator."""

__version__ = "0.1.0"

from .design import (
    DesignPanel,
    build_exposure_design,
    describe_exposure,
    load_mask,
    write_mask,
)
from .errors import (
    ConfigError,
    DataError,
    EmptySampleError,
    EstimationError,
    MatchIVError,
    SchemaError,
    ValidationError,
)
from .estimation import (
    EstimationResult,
    FirstStageBlock,
    first_stage_f,
    ols,
    robust_vcov,
    tsls,
)
from .history import (
    HistoryIndex,
    InstrumentRows,
    build_history_index,
    build_instruments,
    leave_one_out_rate,
)
from .panel import (
    MatchPanel,
    PlayerMatchRow,
    derive_time_to_next_match,
    load_match_rows,
    write_match_rows,
)
from .pipeline import EstimationRun, attach_instruments, estimate_panel
from .report import (
    MarginalEffect,
    effects_to_csv,
    marginal_effects,
    priority_ranking,
    render_regression_table,
    significance_stars,
)
from .simulate import (
    SimConfig,
    SimTruth,
    equilibrium_solve,
    ols_plim_reflection,
    peer_outcome,
    simulate,
    simulate_engagement_panel,
    simulate_propagation_panel,
)
from .sklearn_api import PlayerDemeaner, WithinIV2SLS, WithinOLS
from .within import AttritionReport, apply_sample_restrictions, demean_by_player

__all__ = [
    "AttritionReport",
    "ConfigError",
    "DataError",
    "DesignPanel",
    "EmptySampleError",
    "EstimationError",
    "EstimationResult",
    "EstimationRun",
    "FirstStageBlock",
    "HistoryIndex",
    "InstrumentRows",
    "MarginalEffect",
    "MatchIVError",
    "MatchPanel",
    "PlayerDemeaner",
    "PlayerMatchRow",
    "SchemaError",
    "SimConfig",
    "SimTruth",
    "ValidationError",
    "WithinIV2SLS",
    "WithinOLS",
    "apply_sample_restrictions",
    "attach_instruments",
    "build_exposure_design",
    "build_history_index",
    "build_instruments",
    "demean_by_player",
    "derive_time_to_next_match",
    "describe_exposure",
    "effects_to_csv",
    "equilibrium_solve",
    "estimate_panel",
    "first_stage_f",
    "leave_one_out_rate",
    "load_mask",
    "load_match_rows",
    "marginal_effects",
    "ols",
    "ols_plim_reflection",
    "peer_outcome",
    "priority_ranking",
    "render_regression_table",
    "robust_vcov",
    "significance_stars",
    "simulate",
    "simulate_engagement_panel",
    "simulate_propagation_panel",
    "tsls",
    "write_mask",
    "write_match_rows",
]
