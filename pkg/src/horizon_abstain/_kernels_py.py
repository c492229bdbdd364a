"""Pure numpy implementations of the selection kernels.

Every routine operates on a batch of profiles stored row-wise and must stay
bit-identical to the compiled versions in ``_kernels.pyx``: same operation
order, first-index tie-breaking.
"""
import numpy as np


def prefix_sums(risks):
    risks = np.ascontiguousarray(risks, dtype=np.float64)
    m, H = risks.shape
    out = np.zeros((m, H + 1), dtype=np.float64)
    np.cumsum(risks, axis=1, out=out[:, 1:])
    return out


def partial_ends(prefix, gamma):
    prefix = np.ascontiguousarray(prefix, dtype=np.float64)
    steps = np.arange(prefix.shape[1], dtype=np.float64)
    obj = prefix - float(gamma) * steps
    return np.argmin(obj, axis=1).astype(np.int64)


def interval_tables(prefix):
    prefix = np.ascontiguousarray(prefix, dtype=np.float64)
    m, H1 = prefix.shape
    H = H1 - 1
    starts = np.ones((m, H1), dtype=np.int64)
    minrisk = np.zeros((m, H1), dtype=np.float64)
    for h in range(1, H1):
        # column j holds the window starting at s = j + 1
        windows = prefix[:, h:] - prefix[:, : H + 1 - h]
        j = np.argmin(windows, axis=1)
        starts[:, h] = j + 1
        minrisk[:, h] = windows[np.arange(m), j]
    return starts, minrisk


def interval_lengths(minrisk, gamma):
    return partial_ends(minrisk, gamma)
