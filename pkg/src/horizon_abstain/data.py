"""Series data: synthetic generation, CSV I/O, normalisation and splitting.

File formats (UTF-8, Unix newlines, decimal text):

* series      ``id,t,value`` with ``t = 1..T+H`` consecutive per id
* predictions ``id,step,mean,variance`` with ``step = 1..H``
* variances   ``id,step,variance`` (generator ground truth)
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputDomainError, ParseError
from .forecaster import ForecastBundle, SeriesWindow

SERIES_HEADER = ["id", "t", "value"]
PREDICTIONS_HEADER = ["id", "step", "mean", "variance"]
VARIANCES_HEADER = ["id", "step", "variance"]


@dataclass(frozen=True)
class SyntheticConfig:
    """AR(1) series whose noise variance is scaled by ``noise_amplification``
    for high-regime series, both over the last quarter of the past and over
    the whole future, so the future risk is predictable from the input."""

    n_series: int = 2000
    T: int = 40
    H: int = 10
    ar_coeff: float = 0.7
    base_noise_sd: float = 1.0
    noise_amplification: float = 4.0
    seed: int = 0
    regime_prob: float = 0.5

    def __post_init__(self):
        if self.n_series < 1:
            raise InputDomainError("n_series must be >= 1")
        if self.T < 1 or self.H < 1:
            raise InputDomainError("T and H must be >= 1")
        if not -1.0 < self.ar_coeff < 1.0:
            raise InputDomainError("ar_coeff must be in (-1, 1)")
        if not self.base_noise_sd > 0:
            raise InputDomainError("base_noise_sd must be > 0")
        if not self.noise_amplification >= 1.0:
            raise InputDomainError("noise_amplification must be >= 1")
        if not 0.0 <= self.regime_prob <= 1.0:
            raise InputDomainError("regime_prob must be in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise InputDomainError("seed must be a 64-bit unsigned integer")


def generate(config: SyntheticConfig) -> tuple[list[SeriesWindow], np.ndarray]:
    """Generate windows and the ``(n, H)`` true conditional variances of the future.

    The variance at step ``t`` is ``sd_i**2 * sum_{k<t} a**(2k)``, the error
    variance of the optimal forecast ``a**t * y_T``.
    """
    n, T, H, a = config.n_series, config.T, config.H, config.ar_coeff
    rng = np.random.default_rng(config.seed)
    high = rng.random(n) < config.regime_prob
    var_mult = np.where(high, config.noise_amplification, 1.0)
    sd = config.base_noise_sd * np.sqrt(var_mult)

    n_steps = T + H
    noise = rng.standard_normal((n, n_steps))
    q = max(1, T // 4)
    scale = np.full((n, n_steps), config.base_noise_sd)
    scale[:, T - q :] = sd[:, None]
    eps = noise * scale

    y = np.empty((n, n_steps))
    y[:, 0] = eps[:, 0] / math.sqrt(1.0 - a * a)
    for t in range(1, n_steps):
        y[:, t] = a * y[:, t - 1] + eps[:, t]

    growth = np.cumsum(a ** (2 * np.arange(H)))
    truth = (sd**2)[:, None] * growth[None, :]
    width = len(str(n - 1))
    windows = [SeriesWindow(f"s{i:0{width}d}", y[i, :T], y[i, T:]) for i in range(n)]
    return windows, truth


# -- CSV I/O ---------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_series_csv(path, windows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER)
        for win in windows:
            values = win.past if win.future is None else np.concatenate([win.past, win.future])
            for t, v in enumerate(values, start=1):
                w.writerow([win.id, t, _fmt(v)])


def _read_grouped(path, header, n_values):
    """Rows grouped per id in file order: ``{id: (first_line, [values...])}``.

    Enforces the index column to run 1, 2, 3, ... per id.
    """
    groups: dict[str, tuple[int, list]] = {}
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != header:
            raise ParseError(f"{path}: expected header {','.join(header)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}", line=lineno)
            sid = row[0]
            try:
                idx = int(row[1])
                vals = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: series {sid!r}: malformed row: {exc}", sid, lineno) from exc
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(f"{path}:{lineno}: series {sid!r}: non-finite value", sid, lineno)
            entry = groups.setdefault(sid, (lineno, []))
            expected = len(entry[1]) + 1
            if idx < expected:
                raise ParseError(f"{path}:{lineno}: series {sid!r}: duplicate index {idx}", sid, lineno)
            if idx > expected:
                raise ParseError(f"{path}:{lineno}: series {sid!r}: gap, missing index {expected}", sid, lineno)
            entry[1].append(vals if n_values > 1 else vals[0])
    return groups


def read_series_csv(path, T: int | None = None, H: int | None = None) -> list[SeriesWindow]:
    """Read ``id,t,value`` rows into windows split at ``T`` (or at ``len - H``).

    With neither ``T`` nor ``H`` every value is past and ``future`` is None.
    """
    groups = _read_grouped(path, SERIES_HEADER, 1)
    windows = []
    for sid, (line, values) in groups.items():
        n = len(values)
        t_split = T if T is not None else (n - H if H is not None else n)
        h = H if H is not None else n - t_split
        if t_split < 1 or h < 0 or t_split + h != n:
            raise ParseError(f"{path}:{line}: series {sid!r}: has {n} values, expected T+H", sid, line)
        arr = np.array(values, dtype=np.float64)
        windows.append(SeriesWindow(sid, arr[:t_split], arr[t_split:] if h > 0 else None))
    return windows


def write_predictions_csv(path, bundles) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTIONS_HEADER)
        for b in bundles:
            for step, (mu, var) in enumerate(zip(b.means, b.variances), start=1):
                w.writerow([b.id, step, _fmt(mu), _fmt(var)])


def read_predictions_csv(path) -> list[ForecastBundle]:
    groups = _read_grouped(path, PREDICTIONS_HEADER, 2)
    bundles = []
    H = None
    for sid, (line, rows) in groups.items():
        arr = np.array(rows, dtype=np.float64)
        if np.any(arr[:, 1] <= 0):
            raise ParseError(f"{path}:{line}: series {sid!r}: variances must be > 0", sid, line)
        if H is None:
            H = len(arr)
        elif len(arr) != H:
            raise ParseError(f"{path}:{line}: series {sid!r}: horizon {len(arr)} != {H}", sid, line)
        bundles.append(ForecastBundle(sid, arr[:, 0], arr[:, 1]))
    return bundles


def write_variances_csv(path, ids, variances) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VARIANCES_HEADER)
        for sid, row in zip(ids, variances):
            for step, v in enumerate(row, start=1):
                w.writerow([sid, step, _fmt(v)])


# -- preprocessing ---------------------------------------------------------------


def minmax_normalize(windows) -> tuple[list[SeriesWindow], list[tuple[float, float]]]:
    """Map each series' past range onto [0, 1]; the future uses the same map."""
    out, stats = [], []
    for w in windows:
        lo, hi = float(np.min(w.past)), float(np.max(w.past))
        if not hi > lo:
            raise InputDomainError(f"series {w.id!r}: constant past, cannot min-max normalise")
        span = hi - lo
        fut = None if w.future is None else (w.future - lo) / span
        out.append(SeriesWindow(w.id, (w.past - lo) / span, fut))
        stats.append((lo, hi))
    return out, stats


def minmax_inverse(windows, stats) -> list[SeriesWindow]:
    out = []
    for w, (lo, hi) in zip(windows, stats):
        span = hi - lo
        fut = None if w.future is None else w.future * span + lo
        out.append(SeriesWindow(w.id, w.past * span + lo, fut))
    return out


def split_60_20_20(windows, seed: int):
    """Seeded shuffle, then a 60/20/20 train/calibration/test split by series."""
    windows = list(windows)
    n = len(windows)
    if n < 5:
        raise InputDomainError(f"need at least 5 series to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(0.6 * n))
    n_cal = int(round(0.2 * n))
    train = [windows[i] for i in perm[:n_train]]
    calib = [windows[i] for i in perm[n_train : n_train + n_cal]]
    test = [windows[i] for i in perm[n_train + n_cal :]]
    return train, calib, test
