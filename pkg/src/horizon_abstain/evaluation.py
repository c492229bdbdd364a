"""Empirical selective risk, coverage and constraint satisfaction; coverage sweeps."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .calibration import CoverageSpec, SelectionTable, calibrate_full, calibrate_lagrange
from .data import split_60_20_20
from .errors import InputDomainError, UndefinedRiskError
from .forecaster import fit_beta_nll, fit_two_stage, predict_windows
from .policy import (
    SeededRng,
    decide_accept_ch_batch,
    decide_full_batch,
    decide_lagrange_batch,
)
from .risk import build_profiles

DEFAULT_GRID = (0.7, 0.75, 0.8, 0.85, 0.9, 0.95)
DEFAULT_EPS_GRID = (0.01, 0.02, 0.05, 0.10)
STRATEGIES = ("full", "partial", "interval", "accept-ch")
STRATEGY_ALIASES = {"fabfor": "full", "pabfor": "partial", "intabfor": "interval", "accept_ch": "accept-ch"}
UNDEFINED = "undefined"


@dataclass
class EvalReport:
    """One (strategy, c, seed) cell; ``selective_risk`` is None when nothing was accepted."""

    strategy: str
    c: float
    seed: int
    selective_risk: float | None
    empirical_coverage: float
    consat: dict = field(default_factory=dict)
    n_test: int = 0


def _windows(decisions) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(decisions, tuple) and len(decisions) == 2 and isinstance(decisions[0], np.ndarray):
        return np.asarray(decisions[0]), np.asarray(decisions[1])
    decisions = list(decisions)
    starts = np.array([d.start for d in decisions], dtype=np.int64)
    ends = np.array([d.end for d in decisions], dtype=np.int64)
    return starts, ends


def _lengths(starts, ends) -> np.ndarray:
    return np.where(ends > 0, ends - starts + 1, 0)


def selective_risk(decisions, losses) -> float:
    """Sum of losses over accepted steps divided by the number of accepted steps.

    ``decisions`` is a list of SelectionDecision or a ``(starts, ends)`` pair;
    ``losses`` is ``(m, H)``.
    """
    starts, ends = _windows(decisions)
    losses = np.asarray(losses, dtype=np.float64)
    if losses.ndim != 2 or losses.shape[0] != len(starts):
        raise InputDomainError("losses must be (m, H) with one row per decision")
    steps = np.arange(1, losses.shape[1] + 1)
    mask = (steps[None, :] >= starts[:, None]) & (steps[None, :] <= ends[:, None])
    n = int(mask.sum())
    if n == 0:
        raise UndefinedRiskError("no accepted steps: selective risk is undefined")
    return float(losses[mask].sum() / n)


def empirical_coverage(decisions, H: int) -> float:
    starts, ends = _windows(decisions)
    if len(starts) == 0:
        raise InputDomainError("need at least one decision")
    return float(_lengths(starts, ends).mean() / H)


def consat(coverage: float, c: float, eps: float) -> int:
    """1 iff ``coverage >= c - eps`` (inclusive, up to float representation)."""
    if eps < 0:
        raise InputDomainError("eps must be >= 0")
    return int(coverage >= c - eps - 1e-12)


def make_report(strategy, c, seed, decisions, losses, eps_grid=DEFAULT_EPS_GRID) -> EvalReport:
    losses = np.asarray(losses, dtype=np.float64)
    H = losses.shape[1]
    cov = empirical_coverage(decisions, H)
    try:
        risk = selective_risk(decisions, losses)
    except UndefinedRiskError:
        risk = None
    return EvalReport(strategy, c, seed, risk, cov, {e: consat(cov, c, e) for e in eps_grid}, losses.shape[0])


# -- sweeps ------------------------------------------------------------------------


def normalize_strategy(name: str) -> str:
    key = name.strip().lower()
    key = STRATEGY_ALIASES.get(key, key)
    if key not in STRATEGIES:
        raise InputDomainError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGIES)}")
    return key


def _fit(train, lag, H, fit_method, beta, epochs, learning_rate, seed):
    if fit_method == "two-stage":
        return fit_two_stage(train, lag, H)
    if fit_method == "beta-nll":
        return fit_beta_nll(train, lag, H, beta=beta, epochs=epochs, learning_rate=learning_rate, seed=seed)
    raise InputDomainError(f"unknown fit method {fit_method!r}")


def sweep(
    train,
    calib,
    test,
    strategies=("full", "partial", "interval", "accept-ch"),
    coverage_grid=DEFAULT_GRID,
    seeds=(0,),
    *,
    lag: int = 10,
    model=None,
    fit_method: str = "two-stage",
    beta: float = 0.5,
    epochs: int = 500,
    learning_rate: float = 0.05,
    eps_grid=DEFAULT_EPS_GRID,
) -> list[EvalReport]:
    """Calibrate every strategy at every coverage on ``calib``, decide on ``test``.

    The forecaster is fitted on ``train`` unless ``model`` is given. Each cell
    draws from its own stream derived from ``(seed, strategy, c)``.
    """
    strategies = [normalize_strategy(s) for s in strategies]
    test = list(test)
    if any(w.future is None for w in test):
        raise InputDomainError("test series need future values")
    H = len(test[0].future)
    if model is None:
        model = _fit(list(train), lag, H, fit_method, beta, epochs, learning_rate, seeds[0] if seeds else 0)
    calib_b = predict_windows(model, calib)
    test_b = predict_windows(model, test)
    Y = np.array([w.future for w in test])
    losses = (Y - np.array([b.means for b in test_b])) ** 2

    cal_prefix = build_profiles(np.array([b.variances for b in calib_b]))
    test_prefix = build_profiles(np.array([b.variances for b in test_b]))
    cal_scores, test_scores = cal_prefix[:, -1], test_prefix[:, -1]
    tables = {}
    for mode in ("partial", "interval"):
        if mode in strategies:
            tables[mode] = (SelectionTable(cal_prefix, mode), SelectionTable(test_prefix, mode))

    reports = []
    for seed in seeds:
        for strategy in strategies:
            for c in coverage_grid:
                spec = CoverageSpec(float(c), H)
                rng = SeededRng(seed).substream(f"{strategy}|{float(c)!r}")
                if strategy == "full":
                    policy = calibrate_full(cal_scores, spec)
                    dec = decide_full_batch(policy, test_scores, rng, H)
                elif strategy == "accept-ch":
                    dec = decide_accept_ch_batch(spec, len(test), rng)
                else:
                    cal_t, test_t = tables[strategy]
                    policy = calibrate_lagrange(cal_t, spec, strategy)
                    dec = decide_lagrange_batch(policy, test_t, rng)
                reports.append(make_report(strategy, float(c), seed, dec, losses, eps_grid))
    return reports


def sweep_dataset(windows, strategies=STRATEGIES, coverage_grid=DEFAULT_GRID, seeds=(0,), **kwargs) -> list[EvalReport]:
    """Per seed: 60/20/20 split with that seed, fit, then :func:`sweep`."""
    windows = list(windows)
    reports = []
    for seed in seeds:
        train, calib, test = split_60_20_20(windows, seed)
        reports.extend(sweep(train, calib, test, strategies, coverage_grid, [seed], **kwargs))
    return reports


# -- output --------------------------------------------------------------------------


def report_header(eps_grid=DEFAULT_EPS_GRID) -> list[str]:
    return (
        ["strategy", "c", "seed", "selective_risk", "empirical_coverage"]
        + [f"consat_{e:.2f}" for e in eps_grid]
        + ["n_test"]
    )


def _num(x) -> str:
    return repr(float(x))


def format_reports_csv(reports, eps_grid=DEFAULT_EPS_GRID) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(report_header(eps_grid))
    for r in reports:
        risk = UNDEFINED if r.selective_risk is None else _num(r.selective_risk)
        w.writerow(
            [r.strategy, _num(r.c), r.seed, risk, _num(r.empirical_coverage)]
            + [r.consat[e] for e in eps_grid]
            + [r.n_test]
        )
    return buf.getvalue()


def format_long_csv(reports, eps_grid=DEFAULT_EPS_GRID) -> str:
    """One ``strategy,c,seed,metric,value`` row per metric."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strategy", "c", "seed", "metric", "value"])
    for r in reports:
        key = [r.strategy, _num(r.c), r.seed]
        w.writerow(key + ["selective_risk", UNDEFINED if r.selective_risk is None else _num(r.selective_risk)])
        w.writerow(key + ["empirical_coverage", _num(r.empirical_coverage)])
        for e in eps_grid:
            w.writerow(key + [f"consat_{e:.2f}", r.consat[e]])
    return buf.getvalue()


def write_reports_csv(path, reports, eps_grid=DEFAULT_EPS_GRID) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_reports_csv(reports, eps_grid))


def write_long_csv(path, reports, eps_grid=DEFAULT_EPS_GRID) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_long_csv(reports, eps_grid))
