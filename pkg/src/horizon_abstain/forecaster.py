"""Direct multi-horizon linear forecaster with a mean head and a variance head.

The variance head supplies the plug-in conditional risk for every horizon
step: under squared-error loss the conditional risk is the conditional
variance of the target given the observed past.

Features
--------
The mean head regresses on ``[1, y_{T-L+1}, ..., y_T]``. The variance head
regresses on ``[1, d_1^2, ..., d_L^2]`` where ``d_j`` are the same ``L``
values centred on their window mean, so recent volatility is visible to a
linear map.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputDomainError, TrainingError

RIDGE_PENALTY = 1e-8
DEFAULT_VARIANCE_FLOOR = 1e-6
DEFAULT_BETA = 0.5


@dataclass(frozen=True)
class SeriesWindow:
    id: str
    past: np.ndarray
    future: np.ndarray | None = None

    def __post_init__(self):
        past = np.asarray(self.past, dtype=np.float64)
        if past.ndim != 1 or past.size == 0:
            raise InputDomainError(f"series {self.id!r}: past must be a non-empty vector")
        if not np.all(np.isfinite(past)):
            raise InputDomainError(f"series {self.id!r}: past contains non-finite values")
        object.__setattr__(self, "past", past)
        if self.future is not None:
            fut = np.asarray(self.future, dtype=np.float64)
            if fut.ndim != 1 or not np.all(np.isfinite(fut)):
                raise InputDomainError(f"series {self.id!r}: future must be a finite vector")
            object.__setattr__(self, "future", fut)


@dataclass(frozen=True)
class ForecastBundle:
    id: str
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        variances = np.asarray(self.variances, dtype=np.float64)
        if means.shape != variances.shape or means.ndim != 1:
            raise InputDomainError(f"bundle {self.id!r}: means and variances must be equal-length vectors")
        if np.any(~(variances > 0)):
            raise InputDomainError(f"bundle {self.id!r}: variances must be > 0")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def horizon(self) -> int:
        return len(self.means)


@dataclass
class LinearTwoHeadModel:
    """Fitted weights, one row per horizon step, intercept in column 0.

    ``link`` is ``"clamp"`` (variance = max(z, floor)) for the least-squares
    fit and ``"softplus"`` (variance = softplus(z) + floor) for beta-NLL.
    """

    lag: int
    mean_weights: np.ndarray
    var_weights: np.ndarray
    variance_floor: float = DEFAULT_VARIANCE_FLOOR
    beta: float = DEFAULT_BETA
    link: str = "clamp"
    metadata: dict = field(default_factory=dict)
    loss_history: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        self.mean_weights = np.asarray(self.mean_weights, dtype=np.float64)
        self.var_weights = np.asarray(self.var_weights, dtype=np.float64)
        if self.mean_weights.shape != self.var_weights.shape or self.mean_weights.ndim != 2:
            raise InputDomainError("mean and variance weights must both be (H, L+1)")
        if self.mean_weights.shape[1] != self.lag + 1:
            raise InputDomainError("weight rows must have length lag + 1")
        if not self.variance_floor > 0:
            raise InputDomainError("variance_floor must be > 0")
        if not 0.0 <= self.beta <= 1.0:
            raise InputDomainError("beta must be in [0, 1]")
        if self.link not in ("clamp", "softplus"):
            raise InputDomainError(f"unknown variance link {self.link!r}")

    @property
    def horizon(self) -> int:
        return self.mean_weights.shape[0]

    def to_dict(self) -> dict:
        return {
            "lag": self.lag,
            "horizon": self.horizon,
            "variance_floor": self.variance_floor,
            "beta": self.beta,
            "link": self.link,
            "mean_weights": self.mean_weights.tolist(),
            "var_weights": self.var_weights.tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearTwoHeadModel":
        return cls(
            lag=int(d["lag"]),
            mean_weights=np.array(d["mean_weights"], dtype=np.float64),
            var_weights=np.array(d["var_weights"], dtype=np.float64),
            variance_floor=float(d["variance_floor"]),
            beta=float(d["beta"]),
            link=d["link"],
            metadata=dict(d.get("metadata", {})),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LinearTwoHeadModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# -- features ---------------------------------------------------------------


def _past_matrix(windows, L: int) -> np.ndarray:
    rows = []
    for w in windows:
        if len(w.past) < L:
            raise InputDomainError(f"series {w.id!r}: past length {len(w.past)} < lag {L}")
        rows.append(w.past[-L:])
    return np.array(rows, dtype=np.float64).reshape(len(rows), L)


def mean_features(recent: np.ndarray) -> np.ndarray:
    """``[1, recent values]`` for an ``(n, L)`` block of the last L observations."""
    recent = np.atleast_2d(recent)
    return np.hstack([np.ones((recent.shape[0], 1)), recent])


def variance_features(recent: np.ndarray) -> np.ndarray:
    """``[1, squared deviations from the window mean]``."""
    recent = np.atleast_2d(recent)
    dev = recent - recent.mean(axis=1, keepdims=True)
    return np.hstack([np.ones((recent.shape[0], 1)), dev * dev])


def _targets(windows, H: int) -> np.ndarray:
    out = []
    for w in windows:
        if w.future is None:
            raise InputDomainError(f"series {w.id!r} has no future values")
        if len(w.future) != H:
            raise InputDomainError(f"series {w.id!r}: future length {len(w.future)} != horizon {H}")
        out.append(w.future)
    return np.array(out, dtype=np.float64).reshape(len(out), H)


def _lstsq(X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, bool]:
    """Normal-equations solve; ridge with ``RIDGE_PENALTY`` if ``X`` is rank deficient."""
    p = X.shape[1]
    gram = X.T @ X
    rhs = X.T @ Y
    if np.linalg.matrix_rank(X) < p:
        return np.linalg.solve(gram + RIDGE_PENALTY * np.eye(p), rhs), True
    return np.linalg.solve(gram, rhs), False


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# -- two-stage least squares -------------------------------------------------


def fit_two_stage(
    train,
    L: int,
    H: int,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
    variance_holdout: float = 0.0,
    seed: int = 0,
) -> LinearTwoHeadModel:
    """Least-squares mean head, then least squares of squared residuals.

    ``variance_holdout`` > 0 fits the variance head on residuals of a
    held-out fraction of ``train`` (seeded split) instead of in-sample ones.
    """
    train = list(train)
    if L < 1:
        raise InputDomainError("lag must be >= 1")
    if H < 1:
        raise InputDomainError("horizon must be >= 1")
    if not variance_floor > 0:
        raise InputDomainError("variance_floor must be > 0")
    if not 0.0 <= variance_holdout < 1.0:
        raise InputDomainError("variance_holdout must be in [0, 1)")
    if len(train) < L + 2:
        raise InputDomainError(f"need at least lag + 2 = {L + 2} training series, got {len(train)}")
    Y = _targets(train, H)
    recent = _past_matrix(train, L)

    idx_mean = idx_var = np.arange(len(train))
    if variance_holdout > 0:
        perm = np.random.default_rng(seed).permutation(len(train))
        n_hold = max(1, int(round(variance_holdout * len(train))))
        idx_var, idx_mean = perm[:n_hold], perm[n_hold:]
        if len(idx_mean) < L + 2:
            raise InputDomainError("too few series left for the mean head after the holdout split")

    X = mean_features(recent)
    W, ridge_mean = _lstsq(X[idx_mean], Y[idx_mean])
    resid = Y[idx_var] - X[idx_var] @ W
    Z = variance_features(recent[idx_var])
    V, ridge_var = _lstsq(Z, resid * resid)
    return LinearTwoHeadModel(
        lag=L,
        mean_weights=W.T.copy(),
        var_weights=V.T.copy(),
        variance_floor=variance_floor,
        beta=DEFAULT_BETA,
        link="clamp",
        metadata={
            "method": "two-stage",
            "ridge_fallback": bool(ridge_mean or ridge_var),
            "variance_holdout": variance_holdout,
        },
    )


# -- beta-NLL ------------------------------------------------------------------


def beta_nll_loss(y, means, variances, beta: float) -> float:
    """Sum over steps of ``var**beta * (log(var)/2 + (y - mean)**2 / (2 var))``.

    The ``var**beta`` factor is a constant weight for gradient purposes.
    """
    y = np.asarray(y, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    if np.any(~(variances > 0)):
        raise InputDomainError("variances must be > 0")
    r = y - means
    weight = variances**beta
    return float(np.sum(weight * (0.5 * np.log(variances) + r * r / (2.0 * variances))))


def _batch_arrays(model: LinearTwoHeadModel, batch):
    batch = list(batch)
    if not batch:
        raise InputDomainError("batch must be non-empty")
    recent = _past_matrix(batch, model.lag)
    return mean_features(recent), variance_features(recent), _targets(batch, model.horizon)


def _objective(W, V, X, Z, Y, beta, floor, weight=None):
    mu = X @ W.T
    zlin = Z @ V.T
    var = _softplus(zlin) + floor
    if weight is None:
        weight = var**beta
    r = Y - mu
    per_sample = np.sum(weight * (0.5 * np.log(var) + r * r / (2.0 * var)), axis=1)
    return float(per_sample.mean()), mu, zlin, var, weight, r


def _gradient(W, V, X, Z, Y, beta, floor):
    loss, mu, zlin, var, weight, r = _objective(W, V, X, Z, Y, beta, floor)
    n = X.shape[0]
    d_mu = -weight * r / var / n
    d_var = weight * (0.5 / var - r * r / (2.0 * var * var))
    d_z = d_var * _sigmoid(zlin) / n
    return loss, d_mu.T @ X, d_z.T @ Z


def beta_nll_gradient(model: LinearTwoHeadModel, batch) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of the batch-mean beta-NLL w.r.t. (mean_weights, var_weights).

    The variance head is taken through the softplus link whatever ``model.link`` says.
    """
    X, Z, Y = _batch_arrays(model, batch)
    _, gW, gV = _gradient(model.mean_weights, model.var_weights, X, Z, Y, model.beta, model.variance_floor)
    return gW, gV


def batch_loss(model: LinearTwoHeadModel, batch, weight: np.ndarray | None = None) -> float:
    """Batch-mean beta-NLL under the softplus link; ``weight`` overrides ``var**beta``."""
    X, Z, Y = _batch_arrays(model, batch)
    return _objective(model.mean_weights, model.var_weights, X, Z, Y, model.beta, model.variance_floor, weight)[0]


def loss_weights(model: LinearTwoHeadModel, batch) -> np.ndarray:
    """The ``(n, H)`` stop-gradient weights ``var**beta`` at the current weights."""
    X, Z, Y = _batch_arrays(model, batch)
    return _objective(model.mean_weights, model.var_weights, X, Z, Y, model.beta, model.variance_floor)[4]


def fit_beta_nll(
    train,
    L: int,
    H: int,
    beta: float = DEFAULT_BETA,
    epochs: int = 500,
    learning_rate: float = 0.05,
    seed: int = 0,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
) -> LinearTwoHeadModel:
    """Full-batch gradient descent on beta-NLL with backtracking.

    A step that raises the loss is retried at half the learning rate; an
    accepted step grows the rate by 10%. The loss history is non-increasing.
    """
    train = list(train)
    if L < 1 or H < 1:
        raise InputDomainError("lag and horizon must be >= 1")
    if len(train) < L + 2:
        raise InputDomainError(f"need at least lag + 2 = {L + 2} training series, got {len(train)}")
    if not learning_rate > 0:
        raise InputDomainError("learning_rate must be > 0")
    if epochs < 0:
        raise InputDomainError("epochs must be >= 0")
    rng = np.random.default_rng(seed)
    W = 0.01 * rng.standard_normal((H, L + 1))
    V = 0.01 * rng.standard_normal((H, L + 1))
    model = LinearTwoHeadModel(L, W, V, variance_floor, beta, "softplus")
    X, Z, Y = _batch_arrays(model, train)

    # non-finite values are checked explicitly below
    with np.errstate(over="ignore", invalid="ignore"):
        lr = float(learning_rate)
        loss, gW, gV = _gradient(W, V, X, Z, Y, beta, variance_floor)
        if not np.isfinite(loss):
            raise TrainingError("initial loss is not finite", epoch=0)
        history = [loss]
        for epoch in range(1, epochs + 1):
            if not (np.all(np.isfinite(gW)) and np.all(np.isfinite(gV))):
                raise TrainingError(f"non-finite gradient at epoch {epoch}", epoch=epoch)
            for _ in range(60):
                W_new = W - lr * gW
                V_new = V - lr * gV
                new_loss = _objective(W_new, V_new, X, Z, Y, beta, variance_floor)[0]
                if np.isfinite(new_loss) and new_loss <= loss:
                    break
                lr *= 0.5
            else:
                history.append(loss)
                continue
            W, V = W_new, V_new
            lr *= 1.1
            loss, gW, gV = _gradient(W, V, X, Z, Y, beta, variance_floor)
            if not np.isfinite(loss):
                raise TrainingError(f"loss became non-finite at epoch {epoch}", epoch=epoch)
            history.append(loss)

    model = LinearTwoHeadModel(
        L, W, V, variance_floor, beta, "softplus",
        metadata={"method": "beta-nll", "epochs": epochs, "seed": seed, "final_loss": history[-1]},
        loss_history=history,
    )
    return model


# -- prediction ----------------------------------------------------------------


def predict_arrays(model: LinearTwoHeadModel, recent: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Means and variances ``(n, H)`` for an ``(n, L)`` block of last-L observations."""
    recent = np.atleast_2d(np.asarray(recent, dtype=np.float64))
    means = mean_features(recent) @ model.mean_weights.T
    z = variance_features(recent) @ model.var_weights.T
    if model.link == "softplus":
        variances = _softplus(z) + model.variance_floor
    else:
        variances = np.maximum(z, model.variance_floor)
    return means, variances


def predict(model: LinearTwoHeadModel, past, series_id: str = "") -> ForecastBundle:
    """All H means and variances at once from the last ``lag`` past values."""
    past = np.asarray(past, dtype=np.float64)
    if past.ndim != 1 or len(past) < model.lag:
        raise InputDomainError(f"past must have at least {model.lag} values")
    means, variances = predict_arrays(model, past[-model.lag:][None, :])
    return ForecastBundle(series_id, means[0], variances[0])


def predict_windows(model: LinearTwoHeadModel, windows) -> list[ForecastBundle]:
    windows = list(windows)
    if not windows:
        return []
    means, variances = predict_arrays(model, _past_matrix(windows, model.lag))
    return [ForecastBundle(w.id, means[i], variances[i]) for i, w in enumerate(windows)]


def mean_squared_error(model: LinearTwoHeadModel, windows) -> float:
    windows = list(windows)
    means, _ = predict_arrays(model, _past_matrix(windows, model.lag))
    Y = _targets(windows, model.horizon)
    return float(np.mean((Y - means) ** 2))
