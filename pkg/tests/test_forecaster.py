import numpy as np
import pytest

from horizon_abstain.data import SyntheticConfig, generate
from horizon_abstain.errors import InputDomainError, TrainingError
from horizon_abstain.forecaster import (
    ForecastBundle,
    LinearTwoHeadModel,
    SeriesWindow,
    batch_loss,
    beta_nll_gradient,
    beta_nll_loss,
    fit_beta_nll,
    fit_two_stage,
    loss_weights,
    mean_features,
    mean_squared_error,
    predict,
    predict_windows,
    variance_features,
)


def _linear_windows(rng, n=60, T=6, H=3, coeff=2.0):
    out = []
    for i in range(n):
        past = rng.normal(size=T)
        out.append(SeriesWindow(f"s{i}", past, np.full(H, coeff * past[-1])))
    return out


def _random_batch(rng, n, L, H):
    return [SeriesWindow(str(i), rng.normal(size=L + 2), rng.normal(size=H)) for i in range(n)]


def _random_model(rng, L, H, beta):
    return LinearTwoHeadModel(
        L, 0.5 * rng.normal(size=(H, L + 1)), 0.5 * rng.normal(size=(H, L + 1)),
        variance_floor=1e-3, beta=beta, link="softplus",
    )


def _fd_gradient(model, batch, h=1e-5):
    """Central differences of the batch loss with the var**beta weight frozen."""
    weight = loss_weights(model, batch)
    grads = []
    for name in ("mean_weights", "var_weights"):
        base = getattr(model, name)
        g = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            plus, minus = base.copy(), base.copy()
            plus[idx] += h
            minus[idx] -= h
            setattr(model, name, plus)
            f_plus = batch_loss(model, batch, weight)
            setattr(model, name, minus)
            f_minus = batch_loss(model, batch, weight)
            g[idx] = (f_plus - f_minus) / (2 * h)
        setattr(model, name, base)
        grads.append(g)
    return grads


# -- types ------------------------------------------------------------------------


def test_types_validate():
    with pytest.raises(InputDomainError):
        SeriesWindow("a", [])
    with pytest.raises(InputDomainError):
        SeriesWindow("a", [1.0, np.nan])
    with pytest.raises(InputDomainError):
        ForecastBundle("a", [0.0, 0.0], [1.0, 0.0])
    with pytest.raises(InputDomainError):
        LinearTwoHeadModel(2, np.zeros((3, 3)), np.zeros((3, 3)), variance_floor=0.0)
    with pytest.raises(InputDomainError):
        LinearTwoHeadModel(2, np.zeros((3, 3)), np.zeros((3, 3)), beta=1.5)
    with pytest.raises(InputDomainError):
        LinearTwoHeadModel(3, np.zeros((3, 3)), np.zeros((3, 3)))


def test_features():
    recent = np.array([[1.0, 2.0, 3.0]])
    assert mean_features(recent).tolist() == [[1, 1, 2, 3]]
    assert variance_features(recent).tolist() == [[1, 1, 0, 1]]


# -- two-stage least squares -------------------------------------------------------


def test_two_stage_recovers_noiseless_linear_law(rng):
    train = _linear_windows(rng)
    model = fit_two_stage(train, L=3, H=3, variance_floor=1e-6)
    np.testing.assert_allclose(model.mean_weights[:, -1], 2.0, atol=1e-8)
    np.testing.assert_allclose(model.mean_weights[:, :-1], 0.0, atol=1e-8)
    _, var = model_predictions(model, train)
    assert np.all(var == 1e-6)
    assert mean_squared_error(model, train) <= 1e-10


def model_predictions(model, windows):
    b = predict_windows(model, windows)
    return np.array([x.means for x in b]), np.array([x.variances for x in b])


def test_two_stage_constant_series_uses_ridge_fallback():
    train = [SeriesWindow(str(i), np.full(5, 5.0), np.full(2, 5.0)) for i in range(10)]
    model = fit_two_stage(train, L=3, H=2)
    assert model.metadata["ridge_fallback"] is True
    b = predict(model, np.full(5, 5.0))
    np.testing.assert_allclose(b.means, 5.0, atol=1e-6)
    assert np.all(b.variances == model.variance_floor)


def test_two_stage_matches_normal_equations(rng):
    train = _random_batch(rng, 80, 4, 3)
    model = fit_two_stage(train, L=4, H=3)
    X = mean_features(np.array([w.past[-4:] for w in train]))
    Y = np.array([w.future for w in train])
    ref = np.linalg.solve(X.T @ X, X.T @ Y).T
    np.testing.assert_allclose(model.mean_weights, ref, atol=1e-8)


def test_two_stage_variance_tracks_generator_truth():
    windows, truth = generate(SyntheticConfig(n_series=2000, seed=3))
    model = fit_two_stage(windows, L=10, H=10)
    _, var = model_predictions(model, windows)
    ratio = var.mean(axis=0) / truth.mean(axis=0)
    assert np.all(np.abs(ratio - 1) <= 0.2), ratio


def test_two_stage_variance_holdout(rng):
    train = _random_batch(rng, 50, 3, 2)
    model = fit_two_stage(train, L=3, H=2, variance_holdout=0.3, seed=1)
    assert model.metadata["variance_holdout"] == 0.3
    with pytest.raises(InputDomainError):
        fit_two_stage(train, L=3, H=2, variance_holdout=1.0)


def test_two_stage_preconditions(rng):
    with pytest.raises(InputDomainError):
        fit_two_stage(_random_batch(rng, 4, 3, 2), L=3, H=2)
    no_future = [SeriesWindow(str(i), rng.normal(size=5)) for i in range(10)]
    with pytest.raises(InputDomainError):
        fit_two_stage(no_future, L=3, H=2)


# -- beta-NLL -------------------------------------------------------------------------


def test_beta_nll_loss_examples():
    for beta in (0.0, 0.5, 1.0):
        assert beta_nll_loss([3.0], [3.0], [1.0], beta) == 0.0
    assert beta_nll_loss([1.0], [0.0], [1.0], 0.5) == 0.5
    with pytest.raises(InputDomainError):
        beta_nll_loss([1.0], [0.0], [0.0], 0.5)


def test_beta_nll_with_zero_beta_is_gaussian_nll(rng):
    y, mu = rng.normal(size=7), rng.normal(size=7)
    var = rng.gamma(2.0, 1.0, size=7)
    direct = sum(-np.log(np.exp(-(a - b) ** 2 / (2 * v)) / np.sqrt(2 * np.pi * v)) for a, b, v in zip(y, mu, var))
    const = 0.5 * np.log(2 * np.pi) * 7
    assert beta_nll_loss(y, mu, var, 0.0) == pytest.approx(direct - const, rel=1e-12)


@pytest.mark.parametrize("beta", [0.0, 0.5, 1.0])
def test_gradient_matches_finite_differences_single_sample(rng, beta):
    model = _random_model(rng, 3, 2, beta)
    batch = _random_batch(rng, 1, 3, 2)
    gW, gV = beta_nll_gradient(model, batch)
    fW, fV = _fd_gradient(model, batch)
    for a, b in ((gW, fW), (gV, fV)):
        rel = np.abs(a - b) / np.maximum(np.abs(b), 1e-8)
        assert rel.max() <= 1e-5


def test_gradient_mean_head_zero_for_zero_residuals(rng):
    model = _random_model(rng, 2, 2, 1.0)
    pasts = [rng.normal(size=4) for _ in range(5)]
    means = [predict(model, p).means for p in pasts]
    batch = [SeriesWindow(str(i), p, m) for i, (p, m) in enumerate(zip(pasts, means))]
    gW, _ = beta_nll_gradient(model, batch)
    np.testing.assert_allclose(gW, 0.0, atol=1e-14)


def test_gradient_is_batch_mean(rng):
    model = _random_model(rng, 3, 2, 0.5)
    batch = _random_batch(rng, 6, 3, 2)
    g1 = beta_nll_gradient(model, batch)
    g2 = beta_nll_gradient(model, batch + batch)
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)


def test_fit_beta_nll_descends_and_is_deterministic(rng):
    train = _random_batch(rng, 40, 4, 3)
    m1 = fit_beta_nll(train, 4, 3, epochs=200, seed=5)
    m2 = fit_beta_nll(train, 4, 3, epochs=200, seed=5)
    h = m1.loss_history
    assert len(h) == 201 and h[200] <= h[0]
    assert all(b <= a for a, b in zip(h, h[1:]))
    assert np.array_equal(m1.mean_weights, m2.mean_weights)
    assert np.array_equal(m1.var_weights, m2.var_weights)
    assert m1.beta == 0.5 and m1.link == "softplus"


def test_fit_beta_nll_noiseless_linear_data(rng):
    train = _linear_windows(rng, n=80, T=4, H=2)
    model = fit_beta_nll(train, 2, 2, epochs=3000, learning_rate=0.05, seed=0)
    assert mean_squared_error(model, train) <= 1e-6


def test_fit_beta_nll_reports_divergence(rng):
    train = [SeriesWindow(str(i), np.full(3, 1e200), np.full(2, -1e200)) for i in range(8)]
    with pytest.raises(TrainingError) as info:
        fit_beta_nll(train, 2, 2, epochs=5)
    assert info.value.epoch is not None


# -- prediction -------------------------------------------------------------------------


def test_predict_hand_built_model():
    model = LinearTwoHeadModel(1, np.array([[0.5, 2.0]]), np.array([[0.25, 3.0]]), variance_floor=0.1)
    b = predict(model, [7.0, 4.0])
    assert b.means.tolist() == [0.5 + 2.0 * 4.0]
    # one-value window: deviation from its mean is zero
    assert b.variances.tolist() == [0.25]


def test_predict_variances_respect_floor(rng):
    for link in ("clamp", "softplus"):
        model = LinearTwoHeadModel(3, rng.normal(size=(4, 4)), rng.normal(size=(4, 4)) * 5, 1e-3, 0.5, link)
        _, var = model_predictions(model, [SeriesWindow(str(i), rng.normal(size=6) * 10) for i in range(1000)])
        assert np.all(var >= 1e-3)


def test_predict_short_past_rejected(rng):
    model = _random_model(rng, 4, 2, 0.5)
    with pytest.raises(InputDomainError):
        predict(model, [1.0, 2.0])


def test_model_json_round_trip(tmp_path, rng):
    model = fit_two_stage(_random_batch(rng, 30, 3, 2), L=3, H=2)
    path = tmp_path / "m.json"
    model.save(path)
    back = LinearTwoHeadModel.load(path)
    assert np.array_equal(back.mean_weights, model.mean_weights)
    assert np.array_equal(back.var_weights, model.var_weights)
    assert (back.lag, back.link, back.variance_floor, back.beta) == (model.lag, model.link, model.variance_floor, model.beta)
