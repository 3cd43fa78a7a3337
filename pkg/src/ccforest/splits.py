"""Exhaustive threshold search over projected features."""

from typing import NamedTuple, Optional

import numpy as np
from numba import njit

CRITERIA = ("info_gain", "gini")
TIE_TOL = 1e-13


class SplitCandidate(NamedTuple):
    proj_index: int
    threshold: float
    gain: float


def entropy(counts):
    """Shannon entropy in bits; ``0 log 0 = 0``."""
    counts = np.asarray(counts, dtype=float)
    p = counts / counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return 0.0 - t.sum(axis=-1)


def gini(counts):
    counts = np.asarray(counts, dtype=float)
    p = counts / counts.sum(axis=-1, keepdims=True)
    return 1.0 - (p**2).sum(axis=-1)


@njit(cache=True)
def _scan(U, y, n_classes, use_gini):
    # Weighted child impurity via running sums: n*H = n log n - sum c log c
    # and n*G = n - sum c^2 / n. Moving one row left changes one class count.
    n, m = U.shape
    xlogx = np.zeros(n + 1)
    for c in range(2, n + 1):
        xlogx[c] = c * np.log2(c)
    total = np.zeros(n_classes, dtype=np.int64)
    for i in range(n):
        total[y[i]] += 1
    if use_gini:
        sq = 0.0
        for k in range(n_classes):
            sq += float(total[k]) * total[k]
        parent = 1.0 - sq / (float(n) * n)
    else:
        s = 0.0
        for k in range(n_classes):
            s += xlogx[total[k]]
        parent = (xlogx[n] - s) / n
    left = np.zeros(n_classes, dtype=np.int64)
    best_col, best_lo, best_hi, best_gain = -1, 0.0, 0.0, -np.inf
    for j in range(m):
        order = np.argsort(U[:, j], kind="mergesort")
        left[:] = 0
        # sum over classes of c log c (entropy) or c^2 (gini), left and right
        acc_l = 0.0
        acc_r = 0.0
        for k in range(n_classes):
            acc_r += float(total[k]) * total[k] if use_gini else xlogx[total[k]]
        for i in range(n - 1):
            k = y[order[i]]
            cl, cr = left[k], total[k] - left[k]
            if use_gini:
                acc_l += 2.0 * cl + 1.0
                acc_r -= 2.0 * cr - 1.0
            else:
                acc_l += xlogx[cl + 1] - xlogx[cl]
                acc_r += xlogx[cr - 1] - xlogx[cr]
            left[k] = cl + 1
            lo = U[order[i], j]
            hi = U[order[i + 1], j]
            if not hi > lo:
                continue
            nl = i + 1
            nr = n - nl
            if use_gini:
                child = (n - acc_l / nl - acc_r / nr) / n
            else:
                child = (xlogx[nl] - acc_l + xlogx[nr] - acc_r) / n
            gain = parent - child
            # near-equal gains count as ties so the earliest candidate wins
            if gain > best_gain + TIE_TOL:
                best_col, best_lo, best_hi, best_gain = j, lo, hi, gain
    return best_col, best_lo, best_hi, best_gain


def find_best_split(U, y, n_classes=None, criterion="info_gain") -> Optional[SplitCandidate]:
    """Best (column, threshold) over all boundaries between distinct values.

    ``y`` is either integer class labels or an N x K indicator matrix.
    Thresholds sit at midpoints of adjacent distinct values. Ties go to the
    lowest column, then the lowest threshold. Returns None when every column
    is constant.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}")
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    y = np.asarray(y)
    if y.ndim == 2:
        n_classes = y.shape[1]
        y = np.argmax(y, axis=1)
    elif n_classes is None:
        n_classes = int(y.max()) + 1
    col, lo, hi, gain = _scan(np.ascontiguousarray(U), y.astype(np.int64), int(n_classes),
                              criterion == "gini")
    if col < 0:
        return None
    s = lo + (hi - lo) / 2.0
    if not lo <= s < hi:  # adjacent floats
        s = lo
    return SplitCandidate(int(col), float(s), max(float(gain), 0.0))
