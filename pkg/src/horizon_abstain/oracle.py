"""Exhaustive optimality oracles for tiny instances.

Each series gets a finite menu of options (reject, accept all, a prefix, an
interval); the oracle enumerates every combination, keeps those whose total
accepted length meets ``c * m * H`` and minimises total risk over total
length. Calibrated randomised policies are scored in closed form, never by
sampling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import (
    CoverageSpec,
    FullPolicy,
    LagrangePolicy,
    SelectionTable,
    calibrate_full,
    calibrate_lagrange,
)
from .errors import InputDomainError
from .risk import as_prefix_matrix

MAX_ENUM = 10**6
FEASIBILITY_TOL = 1e-9


@dataclass
class _Menu:
    risks: list  # per series: option risks
    lengths: list  # per series: option lengths
    labels: list  # per series: option labels


def _prefix(profiles) -> np.ndarray:
    return as_prefix_matrix(profiles)


def _menu(prefix: np.ndarray, mode: str) -> _Menu:
    H = prefix.shape[1] - 1
    risks, lengths, labels = [], [], []
    for row in prefix:
        if mode == "full":
            r = [0.0, sum(float(x) for x in np.diff(row))]
            n = [0, H]
            lab = [(1, 0), (1, H)]
        elif mode == "partial":
            r = [0.0] + [sum(float(x) for x in np.diff(row)[:e]) for e in range(1, H + 1)]
            n = list(range(H + 1))
            lab = [(1, e) for e in range(H + 1)]
        elif mode == "interval":
            steps = np.diff(row)
            r, n, lab = [0.0], [0], [(1, 0)]
            for s in range(1, H + 1):
                for e in range(s, H + 1):
                    r.append(sum(float(x) for x in steps[s - 1 : e]))
                    n.append(e - s + 1)
                    lab.append((s, e))
        else:
            raise InputDomainError(f"unknown mode {mode!r}")
        risks.append(np.array(r))
        lengths.append(np.array(n, dtype=np.int64))
        labels.append(lab)
    return _Menu(risks, lengths, labels)


def _enumerate(menu: _Menu, max_enum: int):
    sizes = [len(r) for r in menu.risks]
    total = math.prod(sizes)
    if total > max_enum:
        raise InputDomainError(f"enumeration budget exceeded: {total} assignments > {max_enum}")
    digits = np.unravel_index(np.arange(total), sizes)
    N = np.zeros(total)
    D = np.zeros(total, dtype=np.int64)
    for i, d in enumerate(digits):
        N += menu.risks[i][d]
        D += menu.lengths[i][d]
    return N, D, digits


def _feasible(D: np.ndarray, target_total: float) -> np.ndarray:
    return (D > 0) & (D >= target_total - FEASIBILITY_TOL * max(1.0, target_total))


def _solve(prefix: np.ndarray, c: float, mode: str, max_enum: int):
    m, H = prefix.shape[0], prefix.shape[1] - 1
    if not 0.0 < c <= 1.0:
        raise InputDomainError(f"coverage c must be in (0, 1], got {c}")
    menu = _menu(prefix, mode)
    N, D, digits = _enumerate(menu, max_enum)
    ok = _feasible(D, c * m * H)
    ratio = np.full(len(N), np.inf)
    ratio[ok] = N[ok] / D[ok]
    best = int(np.argmin(ratio))
    assignment = tuple(menu.labels[i][int(d[best])] for i, d in enumerate(digits))
    return float(ratio[best]), assignment, N, D, ok, best


def oracle_full(scores, per_series_total_risk, c: float, H: int, max_enum: int = 2**20):
    """Best deterministic accept/reject subset; returns ``(risk, accepted indices)``."""
    totals = np.asarray(per_series_total_risk, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != totals.shape:
        raise InputDomainError("scores and total risks must have the same length")
    if len(totals) > 20:
        raise InputDomainError("oracle_full enumerates 2^m subsets; m must be <= 20")
    menu = _Menu(
        [np.array([0.0, t]) for t in totals],
        [np.array([0, H]) for _ in totals],
        [[False, True] for _ in totals],
    )
    N, D, digits = _enumerate(menu, max_enum)
    ok = _feasible(D, c * len(totals) * H)
    ratio = np.full(len(N), np.inf)
    ratio[ok] = N[ok] / D[ok]
    best = int(np.argmin(ratio))
    subset = tuple(i for i, d in enumerate(digits) if d[best] == 1)
    return float(ratio[best]), subset


def oracle_partial(profiles, c: float, H: int | None = None, max_enum: int = MAX_ENUM):
    """Best deterministic end steps; returns ``(risk, (e_1, ..., e_m))``."""
    prefix = _prefix(profiles)
    if H is not None and H != prefix.shape[1] - 1:
        raise InputDomainError("H does not match the profiles")
    risk, assignment, *_ = _solve(prefix, c, "partial", max_enum)
    return risk, tuple(e for _, e in assignment)


def oracle_interval(profiles, c: float, H: int | None = None, max_enum: int = MAX_ENUM):
    """Best deterministic intervals; returns ``(risk, ((s_1, e_1), ...))``."""
    prefix = _prefix(profiles)
    if H is not None and H != prefix.shape[1] - 1:
        raise InputDomainError("H does not match the profiles")
    risk, assignment, *_ = _solve(prefix, c, "interval", max_enum)
    return risk, assignment


def check_dinkelbach(profiles, c: float, H: int | None = None, mode: str = "partial",
                     max_enum: int = MAX_ENUM, rtol: float = 1e-12) -> bool:
    """Check that the ratio optimum also minimises ``N - lambda* D`` and vice versa."""
    prefix = _prefix(profiles)
    if H is not None and H != prefix.shape[1] - 1:
        raise InputDomainError("H does not match the profiles")
    lam, _, N, D, ok, best = _solve(prefix, c, mode, max_enum)
    lin = N[ok] - lam * D[ok]
    scale = max(1.0, float(np.max(np.abs(N[ok]))), lam * float(np.max(D[ok])))
    tol = rtol * scale
    lin_best = N[best] - lam * D[best]
    forward = lin_best <= lin.min() + tol and abs(lin_best) <= tol
    minimisers = np.flatnonzero(lin <= lin.min() + tol)
    ratios = N[ok][minimisers] / D[ok][minimisers]
    # D >= 1 on feasible points, so N - lam*D <= tol implies N/D <= lam + tol
    backward = bool(np.all(ratios <= lam + tol))
    return bool(forward and backward)


# -- closed-form risk of calibrated policies ----------------------------------------


def full_policy_expected_risk(policy: FullPolicy, scores, totals, H: int) -> float:
    """Expected total accepted risk over expected accepted length."""
    a = policy.acceptance_probability(scores)
    totals = np.asarray(totals, dtype=np.float64)
    denom = float(np.sum(a)) * H
    if denom == 0:
        return math.nan
    return float(np.sum(a * totals)) / denom


def lagrange_policy_expected_risk(policy: LagrangePolicy, profiles) -> float:
    table = profiles if isinstance(profiles, SelectionTable) else SelectionTable(profiles, policy.mode)
    n_lo = float(table.accepted_risk(policy.gamma_low).sum())
    d_lo = float(table.lengths(policy.gamma_low).sum())
    n_hi = float(table.accepted_risk(policy.gamma_high).sum())
    d_hi = float(table.lengths(policy.gamma_high).sum())
    num = policy.p * n_lo + (1 - policy.p) * n_hi
    den = policy.p * d_lo + (1 - policy.p) * d_hi
    return num / den if den > 0 else math.nan


def calibrated_expected_risk(profiles, c: float, mode: str, epsilon_gamma=None) -> float:
    """Calibrate on ``profiles`` and score the policy on the same profiles."""
    prefix = _prefix(profiles)
    H = prefix.shape[1] - 1
    if mode == "full":
        totals = prefix[:, -1]
        policy = calibrate_full(totals, CoverageSpec(c, H))
        return full_policy_expected_risk(policy, totals, totals, H)
    spec = CoverageSpec(c, H, epsilon_gamma)
    table = SelectionTable(prefix, mode)
    policy = calibrate_lagrange(table, spec, mode)
    return lagrange_policy_expected_risk(policy, table)


@dataclass
class Certificate:
    mode: str
    oracle_risk: float
    policy_risk: float
    dinkelbach: bool
    tol: float

    @property
    def passed(self) -> bool:
        return self.policy_risk <= self.oracle_risk + self.tol and self.dinkelbach


def certify(profiles, c: float, modes=("full", "partial", "interval"), max_enum: int = MAX_ENUM,
            tol: float = 1e-9) -> list[Certificate]:
    """Oracle risk, calibrated-policy risk and the Dinkelbach check per mode."""
    prefix = _prefix(profiles)
    H = prefix.shape[1] - 1
    out = []
    for mode in modes:
        if mode == "full":
            totals = prefix[:, -1]
            o_risk, _ = oracle_full(totals, totals, c, H, max_enum=max_enum)
        else:
            o_risk, *_ = _solve(prefix, c, mode, max_enum)
        p_risk = calibrated_expected_risk(prefix, c, mode)
        out.append(Certificate(mode, o_risk, p_risk, check_dinkelbach(prefix, c, mode=mode, max_enum=max_enum), tol))
    return out
