"""Apply calibrated policies to test-time forecasts.

Every decision consumes exactly one uniform draw from the run's
:class:`SeededRng`, in series order, whether or not the draw matters.
"""
from __future__ import annotations

import csv
import hashlib
import math

import numpy as np

from .calibration import (
    CoverageSpec,
    FullPolicy,
    LagrangePolicy,
    as_table,
    select_end_partial,
    select_interval,
)
from .errors import InputDomainError
from .risk import RiskProfile, SelectionDecision, build_profile

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class SeededRng:
    """SplitMix64 generator; identical streams on every platform.

    ``uniform()`` returns the top 53 bits of the next output scaled to [0, 1).
    """

    algorithm = "splitmix64"

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        self._state = self.seed
        self.position = 0

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        self.position += 1
        return _mix64(self._state)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def bernoulli(self, prob: float) -> bool:
        return self.uniform() < prob

    def substream(self, key: str) -> "SeededRng":
        """Independent generator keyed by ``(seed, key)``, e.g. a series id."""
        digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
        return SeededRng(_mix64(self.seed ^ int.from_bytes(digest, "little")))


def _profile_of(item) -> RiskProfile:
    if isinstance(item, RiskProfile):
        return item
    return build_profile(item.variances)


def decide_full(policy: FullPolicy, score: float, rng: SeededRng, horizon: int) -> SelectionDecision:
    """Accept the whole horizon below the threshold, on ties with probability kappa."""
    if not math.isfinite(score):
        raise InputDomainError(f"score must be finite, got {score}")
    u = rng.uniform()
    if score < policy.tau_hat or (score == policy.tau_hat and u < policy.kappa_hat):
        return SelectionDecision(1, horizon)
    return SelectionDecision(1, 0)


def decide_lagrange(policy: LagrangePolicy, bundle, rng: SeededRng) -> SelectionDecision:
    """Draw ``gamma_low`` w.p. ``p`` (else ``gamma_high``) and select the window."""
    profile = _profile_of(bundle)
    gamma = policy.gamma_low if rng.uniform() < policy.p else policy.gamma_high
    if policy.mode == "partial":
        e = select_end_partial(profile, gamma)
        return SelectionDecision(1, e)
    return select_interval(profile, gamma)


def decide_accept_ch(spec: CoverageSpec, rng: SeededRng) -> SelectionDecision:
    """Accept the first ``floor(cH)`` steps, plus one more w.p. ``cH - floor(cH)``."""
    target = spec.c * spec.horizon
    k = math.floor(target)
    frac = target - k
    if frac < 1e-9:
        frac = 0.0
    elif frac > 1.0 - 1e-9:
        k, frac = k + 1, 0.0
    u = rng.uniform()
    end = k + 1 if u < frac else k
    return SelectionDecision(1, min(end, spec.horizon))


# -- batch application ---------------------------------------------------------


def _uniforms(rng: SeededRng, n: int) -> np.ndarray:
    return np.array([rng.uniform() for _ in range(n)], dtype=np.float64)


def decide_full_batch(policy: FullPolicy, scores, rng: SeededRng, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Starts and ends for a vector of scores; same stream use as :func:`decide_full`."""
    scores = np.asarray(scores, dtype=np.float64)
    u = _uniforms(rng, len(scores))
    accept = (scores < policy.tau_hat) | ((scores == policy.tau_hat) & (u < policy.kappa_hat))
    return np.ones(len(scores), dtype=np.int64), np.where(accept, horizon, 0).astype(np.int64)


def decide_lagrange_batch(policy: LagrangePolicy, bundles, rng: SeededRng) -> tuple[np.ndarray, np.ndarray]:
    table = as_table(bundles, policy.mode)
    u = _uniforms(rng, len(table))
    s_lo, e_lo = table.windows(policy.gamma_low)
    s_hi, e_hi = table.windows(policy.gamma_high)
    use_lo = u < policy.p
    return np.where(use_lo, s_lo, s_hi), np.where(use_lo, e_lo, e_hi)


def decide_accept_ch_batch(spec: CoverageSpec, n: int, rng: SeededRng) -> tuple[np.ndarray, np.ndarray]:
    ends = np.array([decide_accept_ch(spec, rng).end for _ in range(n)], dtype=np.int64)
    return np.ones(n, dtype=np.int64), ends


def to_decisions(starts, ends) -> list[SelectionDecision]:
    return [SelectionDecision(int(s), int(e)) for s, e in zip(starts, ends)]


def write_decisions_csv(path, ids, decisions) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "start", "end"])
        for sid, d in zip(ids, decisions):
            w.writerow([sid, d.start, d.end])
