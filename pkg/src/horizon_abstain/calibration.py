"""Calibration of abstention policies for a target coverage ``c``.

Full abstention thresholds the summed conditional risk at an empirical
quantile, randomising on ties so the calibration acceptance rate is exactly
``c``. Partial and interval abstention pick, per series, the window that
minimises ``risk - gamma * length``; ``gamma`` is found by bisection on the
calibration set and the two bracketing values are mixed with probability
``p`` so the expected accepted length is exactly ``c * H``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InputDomainError
from .risk import RiskProfile, SelectionDecision, as_prefix_matrix, build_profiles

MODES = ("partial", "interval")
MAX_BISECTION_ITERS = 200
COVERAGE_RTOL = 1e-9


@dataclass(frozen=True)
class CoverageSpec:
    """Target coverage ``c`` for horizon ``H``.

    ``epsilon_gamma=None`` means ``1e-9`` times the initial bisection upper bound.
    """

    c: float
    horizon: int
    epsilon_gamma: float | None = None

    def __post_init__(self):
        if not (0.0 < self.c <= 1.0) or math.isnan(self.c):
            raise InputDomainError(f"coverage c must be in (0, 1], got {self.c}")
        if self.horizon < 1:
            raise InputDomainError(f"horizon must be >= 1, got {self.horizon}")
        if self.epsilon_gamma is not None and not self.epsilon_gamma > 0:
            raise InputDomainError("epsilon_gamma must be positive")

    @property
    def target(self) -> float:
        return self.c * self.horizon


@dataclass(frozen=True)
class FullPolicy:
    """Accept if score < tau_hat, with probability kappa_hat if equal, else reject.

    ``tau_hat = inf`` accepts every series.
    """

    tau_hat: float
    kappa_hat: float
    c: float
    mode: str = "full"

    def __post_init__(self):
        if not 0.0 <= self.kappa_hat <= 1.0:
            raise InputDomainError(f"kappa_hat must be in [0, 1], got {self.kappa_hat}")

    def acceptance_probability(self, scores) -> np.ndarray:
        scores = np.asarray(scores, dtype=np.float64)
        return np.where(scores < self.tau_hat, 1.0, np.where(scores == self.tau_hat, self.kappa_hat, 0.0))

    def to_json(self) -> str:
        tau = None if math.isinf(self.tau_hat) else self.tau_hat
        return json.dumps({"mode": "full", "c": self.c, "tau": tau, "kappa": self.kappa_hat})


@dataclass(frozen=True)
class LagrangePolicy:
    """Use ``gamma_low`` with probability ``p`` and ``gamma_high`` otherwise."""

    mode: str
    gamma_low: float
    gamma_high: float
    p: float
    c: float

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputDomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.gamma_low <= self.gamma_high:
            raise InputDomainError("need 0 <= gamma_low <= gamma_high")
        if not 0.0 <= self.p <= 1.0:
            raise InputDomainError(f"p must be in [0, 1], got {self.p}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "mode": self.mode,
                "c": self.c,
                "gamma_low": self.gamma_low,
                "gamma_high": self.gamma_high,
                "p": self.p,
            }
        )


def policy_from_json(text: str) -> FullPolicy | LagrangePolicy:
    rec = json.loads(text)
    mode = rec.get("mode")
    if mode == "full":
        tau = math.inf if rec["tau"] is None else float(rec["tau"])
        return FullPolicy(tau, float(rec["kappa"]), float(rec["c"]))
    if mode in MODES:
        return LagrangePolicy(mode, float(rec["gamma_low"]), float(rec["gamma_high"]), float(rec["p"]), float(rec["c"]))
    raise InputDomainError(f"unknown policy mode {mode!r}")


def _as_spec(spec, horizon=None) -> CoverageSpec:
    if isinstance(spec, CoverageSpec):
        return spec
    return CoverageSpec(float(spec), horizon if horizon is not None else 1)


def variance_matrix(bundles) -> np.ndarray:
    """``(m, H)`` variances from ForecastBundles or an array."""
    if isinstance(bundles, np.ndarray):
        out = np.asarray(bundles, dtype=np.float64)
    else:
        bundles = list(bundles)
        if not bundles:
            raise InputDomainError("need at least one bundle")
        H = len(bundles[0].variances)
        if any(len(b.variances) != H for b in bundles):
            raise InputDomainError("bundles have inconsistent horizons")
        out = np.array([b.variances for b in bundles], dtype=np.float64)
    if out.ndim != 2 or out.shape[0] == 0:
        raise InputDomainError("need a non-empty (m, H) variance matrix")
    return out


def full_scores(bundles) -> np.ndarray:
    """Per-series sum of the variance estimates over the whole horizon."""
    return build_profiles(variance_matrix(bundles))[:, -1].copy()


def calibrate_full(scores, spec) -> FullPolicy:
    """Empirical threshold and tie probability for full abstention.

    ``tau_hat`` is the infimum of ``v`` with ``#{score < v} / m >= c``, which is
    the ``k``-th smallest score for the least ``k`` with ``k / m >= c``.
    """
    c = _as_spec(spec).c
    scores = np.sort(np.asarray(scores, dtype=np.float64).ravel())
    m = scores.size
    if m == 0:
        raise InputDomainError("need at least one calibration score")
    if not np.all(np.isfinite(scores)):
        raise InputDomainError("scores must be finite")
    if c >= 1.0:
        return FullPolicy(math.inf, 1.0, c)
    k = math.ceil(c * m)
    # c*m can land a rounding error above an integer
    while k > 1 and (k - 1) / m >= c:
        k -= 1
    tau = float(scores[k - 1])
    n_lt = int(np.searchsorted(scores, tau, side="left"))
    n_eq = int(np.searchsorted(scores, tau, side="right")) - n_lt
    if n_eq == 0:
        kappa = 0.0
    else:
        kappa = (c - n_lt / m) / (n_eq / m)
    return FullPolicy(tau, min(1.0, max(0.0, kappa)), c)


def select_end_partial(profile: RiskProfile, gamma: float) -> int:
    """Smallest ``e`` in ``[0, H]`` minimising ``prefix[e] - gamma * e``."""
    if not gamma >= 0:
        raise InputDomainError(f"gamma must be >= 0, got {gamma}")
    return int(kernels.partial_ends(profile.prefix[None, :], float(gamma))[0])


def select_interval(profile: RiskProfile, gamma: float) -> SelectionDecision:
    """Window minimising ``interval risk - gamma * length``.

    Smallest length wins ties, and for a given length the smallest start.
    """
    if not gamma >= 0:
        raise InputDomainError(f"gamma must be >= 0, got {gamma}")
    starts, minrisk = kernels.interval_tables(profile.prefix[None, :])
    h = int(kernels.interval_lengths(minrisk, float(gamma))[0])
    if h == 0:
        return SelectionDecision(1, 0)
    s = int(starts[0, h])
    return SelectionDecision(s, s + h - 1)


class SelectionTable:
    """Precomputed per-series tables for repeated selection at many ``gamma``."""

    def __init__(self, profiles, mode: str):
        if mode not in MODES:
            raise InputDomainError(f"mode must be one of {MODES}, got {mode!r}")
        self.mode = mode
        self.prefix = as_prefix_matrix(profiles)
        self.horizon = self.prefix.shape[1] - 1
        if mode == "interval":
            self.starts, self.minrisk = kernels.interval_tables(self.prefix)
        else:
            self.starts, self.minrisk = None, self.prefix

    def __len__(self):
        return self.prefix.shape[0]

    def lengths(self, gamma: float) -> np.ndarray:
        return kernels.partial_ends(self.minrisk, float(gamma))

    def windows(self, gamma: float) -> tuple[np.ndarray, np.ndarray]:
        """Starts and ends (``end == 0`` for rejection) for every series."""
        h = self.lengths(gamma)
        if self.mode == "partial":
            return np.ones_like(h), h
        s = np.where(h > 0, self.starts[np.arange(len(h)), h], 1)
        return s, np.where(h > 0, s + h - 1, 0)

    def accepted_risk(self, gamma: float) -> np.ndarray:
        h = self.lengths(gamma)
        return self.minrisk[np.arange(len(h)), h]


def as_table(obj, mode: str) -> SelectionTable:
    """SelectionTable from a table, an ``(m, H+1)`` prefix matrix, RiskProfiles or ForecastBundles."""
    if isinstance(obj, SelectionTable):
        if obj.mode != mode:
            raise InputDomainError(f"table mode {obj.mode!r} != {mode!r}")
        return obj
    if isinstance(obj, np.ndarray):
        return SelectionTable(obj, mode)
    items = list(obj)
    if items and isinstance(items[0], RiskProfile):
        return SelectionTable(items, mode)
    return SelectionTable(build_profiles(variance_matrix(items)), mode)


def expected_coverage(profiles, gamma: float, mode: str) -> float:
    """Mean accepted length over the profiles at a fixed ``gamma``."""
    if not gamma >= 0:
        raise InputDomainError(f"gamma must be >= 0, got {gamma}")
    table = as_table(profiles, mode)
    return float(table.lengths(gamma).mean())


def _coverage_matches(total: int, target_total: float) -> bool:
    return abs(total - target_total) <= COVERAGE_RTOL * max(1.0, target_total)


def bracket_gamma(profiles, spec: CoverageSpec, mode: str) -> tuple[float, float]:
    """Bisect for ``gamma_low <= gamma_high`` whose coverages straddle ``c * H``."""
    table = as_table(profiles, mode)
    H = table.horizon
    if spec.horizon != H:
        raise InputDomainError(f"spec horizon {spec.horizon} != profile horizon {H}")
    if spec.target > H:
        raise InputDomainError("target coverage exceeds the horizon")
    m = len(table)
    target_total = spec.c * H * m

    hi = float(np.max(table.prefix[:, -1]))
    if not hi > 0:
        hi = 1.0
    # the largest total risk does not always reach full coverage under
    # smallest-minimiser tie-breaking; widen until it does
    for _ in range(2048):
        if table.lengths(hi).sum() >= H * m:
            break
        hi *= 2.0
    if spec.c >= 1.0:
        return hi, hi

    eps = spec.epsilon_gamma if spec.epsilon_gamma is not None else 1e-9 * hi
    lo = 0.0
    for _ in range(MAX_BISECTION_ITERS):
        if hi - lo <= eps:
            break
        mid = 0.5 * (lo + hi)
        total = int(table.lengths(mid).sum())
        if _coverage_matches(total, target_total):
            lo = hi = mid
            break
        if total < target_total:
            lo = mid
        else:
            hi = mid
    return lo, hi


def mixing_probability(phi_low: float, phi_high: float, target: float) -> float:
    """Probability of using ``gamma_low`` so the mixed coverage equals ``target``."""
    tol = COVERAGE_RTOL * max(1.0, abs(target))
    if phi_low > target + tol or target > phi_high + tol:
        raise InputDomainError(f"need phi_low <= target <= phi_high, got {phi_low}, {target}, {phi_high}")
    denom = phi_low - phi_high
    if denom == 0:
        return 1.0
    return min(1.0, max(0.0, (target - phi_high) / denom))


def calibrate_lagrange(bundles, spec: CoverageSpec, mode: str) -> LagrangePolicy:
    """Calibrate ``(gamma_low, gamma_high, p)`` on the calibration bundles.

    ``bundles`` may be ForecastBundles, RiskProfiles, an ``(m, H+1)`` prefix
    matrix or a SelectionTable.
    """
    table = as_table(bundles, mode)
    if spec.horizon != table.horizon:
        raise InputDomainError(f"spec horizon {spec.horizon} != data horizon {table.horizon}")
    lo, hi = bracket_gamma(table, spec, mode)
    phi_lo = float(table.lengths(lo).mean())
    phi_hi = float(table.lengths(hi).mean())
    p = mixing_probability(phi_lo, phi_hi, spec.target)
    return LagrangePolicy(mode, lo, hi, p, spec.c)
