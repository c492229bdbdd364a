"""Bounded-abstention policies for multi-horizon forecasts.

Full abstention rejects or accepts a whole forecast, partial abstention keeps
a prefix of the horizon and interval abstention keeps one contiguous window.
Policies are calibrated to a target coverage ``c`` and applied with seeded
randomisation so the expected accepted fraction of the horizon is exactly ``c``.
"""
from .calibration import (
    CoverageSpec,
    FullPolicy,
    LagrangePolicy,
    SelectionTable,
    bracket_gamma,
    calibrate_full,
    calibrate_lagrange,
    expected_coverage,
    policy_from_json,
    select_end_partial,
    select_interval,
)
from .data import SyntheticConfig, generate, read_predictions_csv, read_series_csv, split_60_20_20
from .errors import AbstainError, InputDomainError, ParseError, TrainingError, UndefinedRiskError
from .evaluation import EvalReport, consat, empirical_coverage, selective_risk, sweep, sweep_dataset
from .forecaster import (
    ForecastBundle,
    LinearTwoHeadModel,
    SeriesWindow,
    beta_nll_gradient,
    beta_nll_loss,
    fit_beta_nll,
    fit_two_stage,
    predict,
    predict_windows,
)
from .kernels import BACKEND
from .oracle import certify, check_dinkelbach, oracle_full, oracle_interval, oracle_partial
from .policy import SeededRng, decide_accept_ch, decide_full, decide_lagrange
from .risk import REJECT, RiskProfile, SelectionDecision, build_profile, build_profiles, interval_risk

__version__ = "0.1.0"
