import numpy as np
import pytest

from horizon_abstain.calibration import CoverageSpec, SelectionTable, calibrate_lagrange
from horizon_abstain.errors import InputDomainError
from horizon_abstain.oracle import (
    calibrated_expected_risk,
    certify,
    check_dinkelbach,
    oracle_full,
    oracle_interval,
    oracle_partial,
)
from horizon_abstain.risk import build_profile, build_profiles

from conftest import random_risks


def _instance(rng, m, H):
    return build_profiles(random_risks(rng, m, H, ties=bool(rng.integers(2)), zeros=bool(rng.integers(2))))


def test_oracle_full_examples():
    risk, subset = oracle_full([1.0, 10.0], [1.0, 10.0], 0.5, 2)
    assert risk == 0.5 and subset == (0,)
    totals = np.array([3.0, 5.0, 9.0])
    risk, subset = oracle_full(totals, totals, 1.0, 3)
    assert subset == (0, 1, 2) and risk == pytest.approx(totals.mean() / 3)
    with pytest.raises(InputDomainError):
        oracle_full(np.ones(21), np.ones(21), 0.5, 1)


def test_oracle_partial_examples():
    risk, ends = oracle_partial([build_profile([1, 2, 3])], 2 / 3, 3)
    assert ends == (2,) and risk == 1.5


def test_oracle_partial_tiny_coverage_picks_cheapest_first_step(rng):
    for _ in range(20):
        risks = np.sort(rng.random((3, 3)) + 0.01, axis=1)
        risks[:, 1:] += 0.5  # strictly increasing steps
        _, ends = oracle_partial(build_profiles(risks), 1e-6)
        expect = [0, 0, 0]
        expect[int(np.argmin(risks[:, 0]))] = 1
        assert list(ends) == expect


def test_oracle_interval_example():
    risk, windows = oracle_interval([build_profile([5, 1, 1, 5])], 0.5, 4)
    assert windows == ((2, 3),) and risk == 1.0


def test_oracle_nesting_and_monotonicity_in_c(rng):
    for _ in range(40):
        prefix = _instance(rng, int(rng.integers(1, 4)), int(rng.integers(1, 4)))
        H = prefix.shape[1] - 1
        prev = None
        for c in (1.0, 0.8, 0.55, 0.3, 0.1):
            f, _ = oracle_full(prefix[:, -1], prefix[:, -1], c, H)
            p, _ = oracle_partial(prefix, c)
            i, _ = oracle_interval(prefix, c)
            assert i <= p + 1e-12 and p <= f + 1e-12
            if prev is not None:
                assert p <= prev + 1e-12
            prev = p


def test_enumeration_budget_is_explicit():
    prefix = build_profiles(np.ones((6, 6)))
    with pytest.raises(InputDomainError, match="enumeration budget"):
        oracle_interval(prefix, 0.5, max_enum=10**6)
    with pytest.raises(InputDomainError, match="enumeration budget"):
        oracle_partial(prefix, 0.5, max_enum=100)


def test_dinkelbach_examples(rng):
    for _ in range(20):
        single = build_profiles(rng.random((1, 4)))
        assert check_dinkelbach(single, float(rng.uniform(0.1, 1.0)), mode="partial")
        assert check_dinkelbach(single, float(rng.uniform(0.1, 1.0)), mode="interval")
    flat = build_profiles(np.full((3, 3), 2.0))
    for mode in ("partial", "interval"):
        assert check_dinkelbach(flat, 0.5, mode=mode)


def test_dinkelbach_random_instances(rng):
    for _ in range(100):
        m, H = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        prefix = _instance(rng, m, H)
        c = float(rng.uniform(0.05, 1.0))
        assert check_dinkelbach(prefix, c, mode="partial")
        assert check_dinkelbach(prefix, c, mode="interval")


@pytest.mark.parametrize("mode,m_max,H_max", [("full", 12, 4), ("partial", 4, 4), ("interval", 3, 4)])
def test_calibrated_policy_never_worse_than_deterministic_optimum(rng, mode, m_max, H_max):
    for _ in range(60):
        m, H = int(rng.integers(1, m_max + 1)), int(rng.integers(1, H_max + 1))
        prefix = _instance(rng, m, H)
        c = float(rng.uniform(0.05, 1.0))
        (cert,) = certify(prefix, c, (mode,))
        assert cert.policy_risk <= cert.oracle_risk + 1e-9, (cert, prefix, c)


@pytest.mark.parametrize("mode", ["partial", "interval"])
def test_collapsed_bracket_attains_the_oracle(rng, mode):
    hits = 0
    for _ in range(300):
        prefix = build_profiles(rng.integers(1, 4, size=(2, 3)).astype(float))
        c = float(rng.choice([1 / 6, 1 / 3, 0.5, 2 / 3, 5 / 6]))
        pol = calibrate_lagrange(prefix, CoverageSpec(c, 3), mode)
        if pol.gamma_low != pol.gamma_high:
            continue
        hits += 1
        oracle = (oracle_partial if mode == "partial" else oracle_interval)(prefix, c)[0]
        assert calibrated_expected_risk(prefix, c, mode) == pytest.approx(oracle, abs=1e-9)
    assert hits > 20


def test_mixture_can_beat_the_best_deterministic_policy():
    # one series, risks [1, 100], target 1.5 steps: any deterministic policy
    # must take both steps, the calibrated mixture takes 1 or 2 steps evenly
    prefix = build_profiles([[1.0, 100.0]])
    oracle, _ = oracle_partial(prefix, 0.75)
    mixed = calibrated_expected_risk(prefix, 0.75, "partial")
    assert oracle == 50.5
    assert mixed == pytest.approx(51 / 1.5)
    t = SelectionTable(prefix, "partial")
    pol = calibrate_lagrange(t, CoverageSpec(0.75, 2), "partial")
    assert pol.p == pytest.approx(0.5)


def test_certify_reports_all_modes(rng):
    prefix = _instance(rng, 3, 3)
    certs = certify(prefix, 0.6)
    assert [c.mode for c in certs] == ["full", "partial", "interval"]
    assert all(c.passed for c in certs)
