"""Canonical correlation trees: growth and routing.

A tree is stored as flat per-node arrays. Split nodes keep the encoded column
indices they project on and the matching weights, so a point goes left when
``x[cols] @ weights <= threshold``.
"""

from dataclasses import dataclass

import numpy as np

from .cca import CcaConfig, cca_stable
from .splits import find_best_split

LEAF = -1
# information gain below this is rounding noise, not a useful split
GAIN_TOL = 1e-12


@dataclass(frozen=True)
class GrowConfig:
    lam: int
    projection_bootstrap: bool = True
    criterion: str = "info_gain"
    epsilon: float = 1e-4
    axis_aligned: bool = False
    leaf_on_degenerate: bool = False

    def __post_init__(self):
        if self.lam < 1:
            raise ValueError(f"lam must be >= 1, got {self.lam}")


@dataclass
class Tree:
    left: np.ndarray
    right: np.ndarray
    label: np.ndarray
    threshold: np.ndarray
    columns: list  # per node: int array of encoded columns, empty for leaves
    weights: list  # per node: float array matching ``columns``
    n_samples: np.ndarray
    stop_reason: list  # per node: "" for splits
    n_classes: int

    @property
    def n_nodes(self):
        return len(self.left)

    def is_leaf(self, node):
        return self.left[node] == LEAF

    @property
    def leaves(self):
        return np.flatnonzero(self.left == LEAF)

    def apply(self, X):
        """Leaf id reached by each row of the (standardized) matrix ``X``."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        out = np.empty(X.shape[0], dtype=np.intp)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if self.left[node] == LEAF:
                out[idx] = node
                continue
            if idx.size == 0:
                continue
            go_left = project(X[idx], self.columns[node], self.weights[node]) <= self.threshold[node]
            stack.append((self.right[node], idx[~go_left]))
            stack.append((self.left[node], idx[go_left]))
        return out

    def predict(self, X):
        return self.label[self.apply(X)]

    def route(self, x):
        """Class index for a single feature vector."""
        node = 0
        x = np.asarray(x, dtype=float)
        while self.left[node] != LEAF:
            p = project(x[None, :], self.columns[node], self.weights[node])[0]
            node = self.left[node] if p <= self.threshold[node] else self.right[node]
        return int(self.label[node])

    def parents(self):
        parent = np.full(self.n_nodes, -1, dtype=np.intp)
        for j in range(self.n_nodes):
            if self.left[j] != LEAF:
                parent[self.left[j]] = j
                parent[self.right[j]] = j
        return parent

    def depth(self):
        best, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.left[node] != LEAF:
                stack.append((self.left[node], d + 1))
                stack.append((self.right[node], d + 1))
        return best

    def to_dict(self):
        return {
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "label": self.label.tolist(),
            "threshold": [float(v).hex() for v in self.threshold],
            "columns": [c.tolist() for c in self.columns],
            "weights": [[float(v).hex() for v in w] for w in self.weights],
            "n_samples": self.n_samples.tolist(),
            "stop_reason": list(self.stop_reason),
            "n_classes": self.n_classes,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            left=np.array(d["left"], dtype=np.intp),
            right=np.array(d["right"], dtype=np.intp),
            label=np.array(d["label"], dtype=np.intp),
            threshold=np.array([float.fromhex(v) for v in d["threshold"]]),
            columns=[np.array(c, dtype=np.intp) for c in d["columns"]],
            weights=[np.array([float.fromhex(v) for v in w]) for w in d["weights"]],
            n_samples=np.array(d["n_samples"], dtype=np.intp),
            stop_reason=list(d["stop_reason"]),
            n_classes=int(d["n_classes"]),
        )


def _dot_rows(M, w):
    # Column-by-column accumulation, so each row's value depends on that row
    # alone. BLAS rounding can change with the number of rows, and under heavy
    # cancellation that is enough to move a row across a threshold.
    out = np.zeros(M.shape[0])
    for j in range(M.shape[1]):
        out += M[:, j] * w[j]
    return out


def project(X, columns, weights):
    """Projection used both when partitioning during growth and when routing."""
    return _dot_rows(X[:, columns], weights)


def leaf_label(counts, ancestor_counts=()):
    """Most populous class; ties settled by the tied classes' counts further up.

    ``ancestor_counts`` runs parent first. A tie that survives the root goes
    to the lowest class index.
    """
    counts = np.asarray(counts)
    tied = np.flatnonzero(counts == counts.max())
    for up in ancestor_counts:
        if tied.size == 1:
            break
        up = np.asarray(up)[tied]
        tied = tied[up == up.max()]
    return int(tied[0])


def _count_unique_rows(M, cap=3):
    """Number of distinct rows of ``M``, counting no further than ``cap``."""
    if M.shape[0] == 0:
        return 0
    alive = np.ones(M.shape[0], dtype=bool)
    found = 0
    while alive.any() and found < cap:
        ref = M[np.argmax(alive)]
        alive &= (M != ref).any(axis=1)
        found += 1
    return found


def _iter_ancestors(link):
    while link is not None:
        counts, link = link
        yield counts


class _Builder:
    def __init__(self, X, y, n_classes, groups, cfg, rng):
        self.X = X
        self.y = y
        self.K = n_classes
        self.groups = groups
        self.cfg = cfg
        self.cca_cfg = CcaConfig(cfg.epsilon)
        self.rng = rng
        self.left, self.right, self.label, self.threshold = [], [], [], []
        self.columns, self.weights, self.n_samples, self.stop = [], [], [], []

    def _new_node(self, n):
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.label.append(-1)
        self.threshold.append(0.0)
        self.columns.append(np.zeros(0, dtype=np.intp))
        self.weights.append(np.zeros(0))
        self.n_samples.append(n)
        self.stop.append("")
        return len(self.left) - 1

    def _varies(self, idx, f):
        a, b = self.groups[f]
        block = self.X[idx, a:b]
        return bool((block != block[0]).any())

    def _sample_features(self, idx, available):
        """Sample lam varying features; returns (delta, pruned available set)."""
        lam = self.cfg.lam
        available = list(available)
        delta = list(self.rng.choice(available, size=min(lam, len(available)), replace=False))
        while True:
            dead = [f for f in delta if not self._varies(idx, f)]
            if not dead:
                return sorted(int(f) for f in delta), available
            dead = set(dead)
            available = [f for f in available if f not in dead]
            delta = [f for f in delta if f not in dead]
            pool = [f for f in available if f not in set(delta)]
            need = min(lam, len(available)) - len(delta)
            if need > 0 and pool:
                delta += list(self.rng.choice(pool, size=min(need, len(pool)), replace=False))
            if not delta:
                return [], available

    def _make_leaf(self, node, counts, link, reason):
        self.label[node] = leaf_label(counts, _iter_ancestors(link))
        self.stop[node] = reason

    def _choose_split(self, idx, cols):
        """Return (weights over cols, threshold) or a stop reason string."""
        cfg = self.cfg
        Xg = self.X[np.ix_(idx, cols)]
        yg = self.y[idx]
        if cfg.axis_aligned:
            cand = find_best_split(Xg, yg, self.K, cfg.criterion)
            if cand is None or cand.gain <= GAIN_TOL:
                return "no_gain"
            w = np.zeros(len(cols))
            w[cand.proj_index] = 1.0
            return w, cand.threshold

        if cfg.projection_bootstrap:
            boot = self.rng.integers(0, len(idx), size=len(idx))
            Xp, yp = Xg[boot], yg[boot]
        else:
            Xp, yp = Xg, yg
        if _count_unique_rows(Xp, 2) < 2 or (yp == yp[0]).all():
            if _count_unique_rows(Xg, 2) < 2 or (yg == yg[0]).all():
                return "degenerate"
            if cfg.leaf_on_degenerate:
                return "degenerate"
            Xp, yp = Xg, yg

        if _count_unique_rows(Xp, 3) == 2:
            pair = np.unique(Xp, axis=0)
            w = pair[1] - pair[0]
            lo, hi = np.sort(_dot_rows(pair, w))
            return w, float(lo + (hi - lo) / 2)

        Yp = np.zeros((len(yp), self.K))
        Yp[np.arange(len(yp)), yp] = 1.0
        res = cca_stable(Xp, Yp, self.cca_cfg)
        if res.n_components == 0:
            return "degenerate"
        U = np.column_stack([_dot_rows(Xg, a) for a in res.A.T])
        cand = find_best_split(U, yg, self.K, cfg.criterion)
        if cand is None or cand.gain <= GAIN_TOL:
            return "no_gain"
        return res.A[:, cand.proj_index].copy(), cand.threshold

    def build(self, idx, available):
        # (rows, available features, ancestor link, parent node, side)
        stack = [(idx, available, None, -1, 0)]
        while stack:
            idx, available, link, parent, side = stack.pop()
            node = self._new_node(len(idx))
            if parent >= 0:
                (self.left if side == 0 else self.right)[parent] = node
            counts = np.bincount(self.y[idx], minlength=self.K)
            if np.count_nonzero(counts) == 1:
                self._make_leaf(node, counts, link, "pure")
                continue
            delta, available = self._sample_features(idx, available)
            if not delta:
                self._make_leaf(node, counts, link, "no_features")
                continue
            cols = np.concatenate([np.arange(*self.groups[f]) for f in delta])
            choice = self._choose_split(idx, cols)
            if isinstance(choice, str):
                self._make_leaf(node, counts, link, choice)
                continue
            w, s = choice
            go_left = project(self.X[idx], cols, w) <= s
            if go_left.all() or not go_left.any():
                self._make_leaf(node, counts, link, "no_gain")
                continue
            self.columns[node] = cols
            self.weights[node] = np.asarray(w, dtype=float)
            self.threshold[node] = float(s)
            child_link = (counts, link)
            stack.append((idx[~go_left], available, child_link, node, 1))
            stack.append((idx[go_left], available, child_link, node, 0))

        return Tree(
            left=np.array(self.left, dtype=np.intp),
            right=np.array(self.right, dtype=np.intp),
            label=np.array(self.label, dtype=np.intp),
            threshold=np.array(self.threshold),
            columns=self.columns,
            weights=self.weights,
            n_samples=np.array(self.n_samples, dtype=np.intp),
            stop_reason=self.stop,
            n_classes=self.K,
        )


def grow_tree(X, y, groups, cfg, rng, n_classes=None, available=None):
    """Grow one tree on standardized features ``X``.

    ``y`` holds integer class labels (or an indicator matrix), ``groups`` the
    encoded column range of each logical feature, ``rng`` a numpy Generator.
    Feature sampling happens before the node bootstrap at every node.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if y.ndim == 2:
        n_classes = y.shape[1]
        y = np.argmax(y, axis=1)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if X.shape[0] < 1:
        raise ValueError("cannot grow a tree on zero rows")
    if available is None:
        available = range(len(groups))
    available = list(available)
    if not available:
        raise ValueError("no features available")
    builder = _Builder(X, y.astype(np.intp), n_classes, list(groups), cfg, rng)
    return builder.build(np.arange(X.shape[0]), available)
