"""Cumulative conditional-risk arithmetic shared by all abstention policies.

A :class:`RiskProfile` stores the prefix sums of one series' per-step
conditional risks, so any contiguous window risk is a single subtraction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InputDomainError


@dataclass(frozen=True)
class RiskProfile:
    """Prefix sums ``prefix[e] = risks[0] + ... + risks[e-1]``, ``prefix[0] = 0``."""

    prefix: np.ndarray
    horizon: int

    def __post_init__(self):
        prefix = np.array(self.prefix, dtype=np.float64)
        if prefix.ndim != 1 or len(prefix) != self.horizon + 1 or self.horizon < 1:
            raise InputDomainError("prefix must have length horizon + 1 with horizon >= 1")
        if prefix[0] != 0.0:
            raise InputDomainError("prefix[0] must be 0")
        prefix.setflags(write=False)
        object.__setattr__(self, "prefix", prefix)

    @property
    def risks(self) -> np.ndarray:
        return np.diff(self.prefix)

    @property
    def total(self) -> float:
        return float(self.prefix[-1])


@dataclass(frozen=True)
class SelectionDecision:
    """Accepted window ``[start, end]`` (1-based, inclusive); ``(1, 0)`` rejects all."""

    start: int
    end: int

    def __post_init__(self):
        if not (self.start == 1 and self.end == 0) and not (1 <= self.start <= self.end):
            raise InputDomainError(f"invalid decision ({self.start}, {self.end})")

    @property
    def accepted(self) -> bool:
        return self.end > 0

    def length(self) -> int:
        return self.end - self.start + 1 if self.end > 0 else 0

    def check_horizon(self, horizon: int) -> None:
        if self.end > horizon:
            raise InputDomainError(f"decision end {self.end} exceeds horizon {horizon}")


REJECT = SelectionDecision(1, 0)


def _check_risks(risks) -> np.ndarray:
    risks = np.asarray(risks, dtype=np.float64)
    if risks.ndim != 1 or risks.size == 0:
        raise InputDomainError("risks must be a non-empty vector")
    if not np.all(np.isfinite(risks)):
        raise InputDomainError("risks must be finite")
    if np.any(risks < 0):
        raise InputDomainError("risks must be non-negative")
    return risks


def build_profile(risks) -> RiskProfile:
    """Build the prefix-sum profile of a vector of non-negative per-step risks."""
    risks = _check_risks(risks)
    prefix = kernels.prefix_sums(risks[None, :])[0]
    return RiskProfile(prefix, len(risks))


def build_profiles(risk_matrix) -> np.ndarray:
    """Row-wise prefix sums for an ``(m, H)`` risk matrix; returns ``(m, H+1)``."""
    risk_matrix = np.asarray(risk_matrix, dtype=np.float64)
    if risk_matrix.ndim != 2 or risk_matrix.shape[0] == 0 or risk_matrix.shape[1] == 0:
        raise InputDomainError("risk matrix must be a non-empty (m, H) array")
    if not np.all(np.isfinite(risk_matrix)) or np.any(risk_matrix < 0):
        raise InputDomainError("risks must be finite and non-negative")
    return kernels.prefix_sums(risk_matrix)


def interval_risk(profile: RiskProfile, s: int, e: int) -> float:
    """Total risk of steps ``s..e`` (1-based, inclusive)."""
    if not (1 <= s <= e <= profile.horizon):
        raise InputDomainError(f"need 1 <= s <= e <= {profile.horizon}, got s={s}, e={e}")
    return float(profile.prefix[e] - profile.prefix[s - 1])


def best_start_for_length(profile: RiskProfile, h: int) -> int:
    """Smallest start ``s`` whose length-``h`` window has minimal risk; 1 for ``h == 0``."""
    if not (0 <= h <= profile.horizon):
        raise InputDomainError(f"length must be in [0, {profile.horizon}], got {h}")
    if h == 0:
        return 1
    p = profile.prefix
    windows = p[h:] - p[: profile.horizon + 1 - h]
    return int(np.argmin(windows)) + 1


def as_prefix_matrix(profiles) -> np.ndarray:
    """Stack profiles (or pass through an ``(m, H+1)`` array) into a prefix matrix."""
    if isinstance(profiles, np.ndarray):
        if profiles.ndim != 2 or profiles.shape[0] == 0:
            raise InputDomainError("prefix matrix must be a non-empty 2-D array")
        return np.ascontiguousarray(profiles, dtype=np.float64)
    profiles = list(profiles)
    if not profiles:
        raise InputDomainError("need at least one profile")
    H = profiles[0].horizon
    if any(p.horizon != H for p in profiles):
        raise InputDomainError("profiles have inconsistent horizons")
    return np.ascontiguousarray(np.stack([p.prefix for p in profiles]))
