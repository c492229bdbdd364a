import csv
import io

import numpy as np
import pytest

from horizon_abstain.data import SyntheticConfig, generate, split_60_20_20
from horizon_abstain.errors import InputDomainError, UndefinedRiskError
from horizon_abstain.evaluation import (
    DEFAULT_GRID,
    EvalReport,
    consat,
    empirical_coverage,
    format_long_csv,
    format_reports_csv,
    make_report,
    normalize_strategy,
    report_header,
    selective_risk,
    sweep,
    sweep_dataset,
)
from horizon_abstain.risk import SelectionDecision

HEADER = "strategy,c,seed,selective_risk,empirical_coverage,consat_0.01,consat_0.02,consat_0.05,consat_0.10,n_test"


def test_selective_risk_examples():
    decisions = [SelectionDecision(1, 2), SelectionDecision(1, 0)]
    losses = np.array([[1.0, 3.0, 50.0], [7.0, 7.0, 7.0]])
    assert selective_risk(decisions, losses) == 2.0


def test_selective_risk_full_acceptance_is_mse(rng):
    losses = rng.random((6, 4))
    decisions = [SelectionDecision(1, 4)] * 6
    assert selective_risk(decisions, losses) == pytest.approx(losses.mean(), rel=1e-14)


def test_selective_risk_matches_flat_recomputation(rng):
    for _ in range(50):
        m, H = 7, 5
        decisions = []
        for _ in range(m):
            s = int(rng.integers(1, H + 1))
            e = int(rng.integers(s - 1, H + 1))
            decisions.append(SelectionDecision(1, 0) if e < s else SelectionDecision(s, e))
        losses = rng.random((m, H))
        flat = [losses[i, t - 1] for i, d in enumerate(decisions) if d.accepted for t in range(d.start, d.end + 1)]
        if not flat:
            with pytest.raises(UndefinedRiskError):
                selective_risk(decisions, losses)
            continue
        assert selective_risk(decisions, losses) == pytest.approx(sum(flat) / len(flat), rel=1e-12)


def test_selective_risk_accepts_arrays():
    losses = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert selective_risk((np.array([2, 1]), np.array([2, 0])), losses) == 2.0
    with pytest.raises(InputDomainError):
        selective_risk([SelectionDecision(1, 1)], losses)


def test_empirical_coverage_examples():
    assert empirical_coverage([SelectionDecision(1, 4)] * 3, 4) == 1.0
    assert empirical_coverage([SelectionDecision(1, 0)] * 3, 4) == 0.0
    d = [SelectionDecision(1, 2), SelectionDecision(1, 0), SelectionDecision(1, 4)]
    assert empirical_coverage(d, 4) == 0.5
    with pytest.raises(InputDomainError):
        empirical_coverage([], 4)


def test_consat_examples_and_monotonicity():
    assert consat(0.68, 0.7, 0.05) == 1
    assert consat(0.68, 0.7, 0.01) == 0
    assert consat(0.70, 0.7, 0.0) == 1
    grid = [0.0, 0.01, 0.02, 0.05, 0.1]
    for cov in np.linspace(0.5, 1.0, 51):
        vals = [consat(cov, 0.8, e) for e in grid]
        assert vals == sorted(vals)
    with pytest.raises(InputDomainError):
        consat(0.5, 0.5, -0.1)


def test_report_with_no_acceptance_is_undefined():
    r = make_report("full", 0.5, 0, [SelectionDecision(1, 0)] * 2, np.ones((2, 3)))
    assert r.selective_risk is None
    text = format_reports_csv([r])
    assert text.splitlines()[0] == HEADER
    assert text.splitlines()[1].split(",")[3] == "undefined"


def test_report_header_and_number_format():
    assert ",".join(report_header()) == HEADER
    r = EvalReport("partial", 0.7, 3, 0.1 + 0.2, 0.75, {0.01: 0, 0.02: 1, 0.05: 1, 0.10: 1}, 40)
    line = format_reports_csv([r]).splitlines()[1]
    assert line == "partial,0.7,3,0.30000000000000004,0.75,0,1,1,1,40"


def test_strategy_names():
    assert normalize_strategy("FAbFor") == "full"
    assert normalize_strategy("accept_ch") == "accept-ch"
    with pytest.raises(InputDomainError):
        normalize_strategy("bogus")


@pytest.fixture(scope="module")
def small_split():
    windows, _ = generate(SyntheticConfig(n_series=300, T=20, H=6, seed=1))
    return split_60_20_20(windows, 1)


def test_sweep_rows_and_determinism(small_split):
    tr, ca, te = small_split
    reps = sweep(tr, ca, te, ["full", "partial", "interval"], DEFAULT_GRID, [0, 1], lag=5)
    assert len(reps) == 36
    reps_ch = sweep(tr, ca, te, ["full", "partial", "interval", "accept-ch"], DEFAULT_GRID, [0, 1], lag=5)
    assert len(reps_ch) == 48
    again = sweep(tr, ca, te, ["full", "partial", "interval"], DEFAULT_GRID, [0, 1], lag=5)
    assert format_reports_csv(reps) == format_reports_csv(again)
    for r in reps:
        assert r.n_test == len(te) and 0 <= r.empirical_coverage <= 1


def test_accept_ch_coverage_is_exact_for_integer_targets(small_split):
    tr, ca, te = small_split
    reps = sweep(tr, ca, te, ["accept-ch"], [0.5, 1.0], [0], lag=5)
    assert [r.empirical_coverage for r in reps] == [0.5, 1.0]


def test_accept_ch_coverage_close_to_c(small_split):
    tr, ca, te = small_split
    for r in sweep(tr, ca, te, ["accept-ch"], DEFAULT_GRID, [0, 1, 2], lag=5):
        # at most one step per series is random: std of the mean <= 0.5 / (H sqrt(n))
        assert abs(r.empirical_coverage - r.c) <= 4 * 0.5 / (6 * np.sqrt(r.n_test))


def test_sweep_dataset_long_format_is_plot_ready():
    windows, _ = generate(SyntheticConfig(n_series=200, T=16, H=4, seed=2))
    reps = sweep_dataset(windows, ["full", "interval"], [0.8, 0.9], [0, 1], lag=4)
    rows = list(csv.DictReader(io.StringIO(format_long_csv(reps))))
    assert set(rows[0]) == {"strategy", "c", "seed", "metric", "value"}
    assert len(rows) == len(reps) * 6
    for row in rows:
        float(row["c"]), int(row["seed"]), float(row["value"])


def test_sweep_requires_test_futures(small_split):
    tr, ca, te = small_split
    from horizon_abstain.forecaster import SeriesWindow

    no_future = [SeriesWindow(w.id, w.past) for w in te]
    with pytest.raises(InputDomainError):
        sweep(tr, ca, no_future, ["full"], [0.8], [0], lag=5)
