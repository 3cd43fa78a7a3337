"""Cross-validation, agreement metrics and paired significance tests."""

import csv
import io
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.stats import norm

from .data import make_folds
from .forest import ForestConfig, train

REPORT_COLUMNS = ("repeat", "fold", "mode", "n_trees", "error_pct", "kappa", "train_seconds")


def misclassification_pct(pred, truth):
    pred, truth = np.asarray(pred), np.asarray(truth)
    return 100.0 * float(np.mean(pred != truth))


def cohen_kappa(pred, truth):
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e)."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError("pred and truth must be equal-length and non-empty")
    n = pred.size
    labels = np.union1d(pred, truth)
    p_o = float(np.mean(pred == truth))
    p_e = sum(float(np.sum(pred == c)) * float(np.sum(truth == c)) for c in labels) / (n * n)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # sum of positive ranks
    n: int  # non-zero differences
    p_two_sided: float
    p_greater: float  # alternative: a > b
    p_less: float
    method: str


@lru_cache(maxsize=None)
def _signed_rank_counts(doubled_ranks):
    """Number of sign assignments reaching each doubled positive-rank sum."""
    total = sum(doubled_ranks)
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    return counts


def _rank_abs(d):
    a = np.abs(d)
    order = np.argsort(a, kind="stable")
    ranks = np.empty(len(a))
    sorted_a = a[order]
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def wilcoxon_signed_rank(a, b, method="auto"):
    """Paired Wilcoxon signed-rank test of ``a - b``.

    Zero differences are dropped; tied magnitudes get average ranks. ``auto``
    uses the exact null distribution up to n = 25 and the normal approximation
    with continuity correction (and tie correction) beyond.
    """
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    d = d[d != 0]
    n = d.size
    if n == 0:
        return WilcoxonResult(0.0, 0, 1.0, 1.0, 1.0, "none")
    ranks = _rank_abs(d)
    w_plus = float(ranks[d > 0].sum())
    if method == "auto":
        method = "exact" if n <= 25 else "approx"

    if method == "exact":
        doubled = tuple(sorted(int(round(2 * r)) for r in ranks))
        counts = _signed_rank_counts(doubled)
        total = 2**n
        t = int(round(2 * w_plus))
        p_ge = float(sum(counts[t:])) / total
        p_le = float(sum(counts[: t + 1])) / total
    elif method == "approx":
        mean = n * (n + 1) / 4.0
        _, tie_sizes = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_sizes**3 - tie_sizes)) / 48.0
        sd = math.sqrt(var)
        p_ge = float(norm.sf((w_plus - mean - 0.5) / sd))
        p_le = float(norm.cdf((w_plus - mean + 0.5) / sd))
    else:
        raise ValueError(f"unknown method {method!r}")
    p_two = min(1.0, 2.0 * min(p_ge, p_le))
    return WilcoxonResult(w_plus, n, p_two, p_ge, p_le, method)


@dataclass
class EvalReport:
    """Per-(repeat, fold) results of one cross-validation run."""

    mode: str
    n_trees: int
    folds: int
    repeats: int
    inverted: bool
    records: list = field(default_factory=list)
    predictions: dict = field(default_factory=dict)  # (repeat, fold) -> (test idx, pred)

    @property
    def errors(self):
        return np.array([r["error_pct"] for r in self.records])

    @property
    def kappas(self):
        return np.array([r["kappa"] for r in self.records])

    @property
    def mean_error(self):
        return float(self.errors.mean())

    @property
    def std_error(self):
        e = self.errors
        return float(e.std(ddof=1)) if e.size > 1 else 0.0

    @property
    def mean_kappa(self):
        return float(self.kappas.mean())

    def summary(self):
        return (
            f"{self.mode}: error {self.mean_error:.2f} +- {self.std_error:.2f} % "
            f"(kappa {self.mean_kappa:.3f}) over {len(self.records)} tests"
        )

    def to_csv(self, timing=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in sorted(self.records, key=lambda r: (r["repeat"], r["fold"])):
            w.writerow([
                r["repeat"], r["fold"], r["mode"], r["n_trees"],
                f"{r['error_pct']:.6f}", f"{r['kappa']:.6f}",
                f"{r['train_seconds']:.3f}" if timing else "0",
            ])
        return buf.getvalue()


def _fold_seed(seed, repeat, fold):
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(repeat, fold)).generate_state(1)[0])


def cv_splits(ds, folds, repeats, inverted, seed, stratified=True):
    """Yield ``(repeat, fold, train_idx, test_idx)``."""
    for rep in range(repeats):
        fold_seed = int(np.random.SeedSequence(entropy=seed, spawn_key=(rep,)).generate_state(1)[0])
        for f, (tr, te) in enumerate(make_folds(ds, folds, fold_seed, stratified)):
            if inverted:
                tr, te = te, tr
            yield rep, f, tr, te


def cross_validate(ds, cfg=None, folds=10, repeats=1, inverted=False, seed=0,
                   stratified=True, keep_predictions=False, fit=train):
    """Repeated k-fold CV; the standardizer is refit inside every training split.

    ``inverted`` swaps roles so each model trains on one fold and is tested
    on the rest.
    """
    if cfg is None:
        cfg = ForestConfig()
    if folds < 2:
        raise ValueError("folds must be >= 2")
    report = EvalReport(cfg.mode, cfg.n_trees, folds, repeats, inverted)
    y = ds.y
    for rep, f, tr, te in cv_splits(ds, folds, repeats, inverted, seed, stratified):
        fold_cfg = _replace_seed(cfg, _fold_seed(seed, rep, f))
        t0 = time.perf_counter()
        try:
            model = fit(ds.subset(tr), fold_cfg)
        except Exception as exc:
            raise RuntimeError(f"training failed on repeat {rep}, fold {f}: {exc}") from exc
        elapsed = time.perf_counter() - t0
        pred = model.predict(ds.subset(te))
        report.records.append({
            "repeat": rep, "fold": f, "mode": cfg.mode, "n_trees": cfg.n_trees,
            "error_pct": misclassification_pct(pred, y[te]),
            "kappa": cohen_kappa(pred, y[te]),
            "train_seconds": elapsed,
        })
        if keep_predictions:
            report.predictions[(rep, f)] = (te, pred)
    return report


def _replace_seed(cfg, seed):
    from dataclasses import replace

    return replace(cfg, seed=seed)


@dataclass
class SweepResult:
    sizes: list
    mean_error: np.ndarray  # one entry per size, averaged over all test folds
    fold_errors: np.ndarray  # tests x sizes
    reference_error: float = None  # mean error of the reference forest, if any
    ratio_vs_same_size: np.ndarray = None  # misclassifications(model L) / (reference L)
    ratio_vs_reference: np.ndarray = None  # misclassifications(model L) / (reference at its full size)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n_trees", "error_pct", "ratio_same_size", "ratio_vs_reference"])
        for i, L in enumerate(self.sizes):
            r1 = "" if self.ratio_vs_same_size is None else f"{self.ratio_vs_same_size[i]:.6f}"
            r2 = "" if self.ratio_vs_reference is None else f"{self.ratio_vs_reference[i]:.6f}"
            w.writerow([L, f"{self.mean_error[i]:.6f}", r1, r2])
        return buf.getvalue()


def _prefix_errors(tree_preds, truth, sizes, n_classes):
    """Misclassification counts of every prefix ensemble listed in ``sizes``."""
    n, L = tree_preds.shape
    votes = np.zeros((n, n_classes), dtype=np.int64)
    rows = np.arange(n)
    out, done = {}, 0
    for size in sorted(set(sizes)):
        for t in range(done, size):
            np.add.at(votes, (rows, tree_preds[:, t]), 1)
        done = size
        out[size] = int(np.sum(np.argmax(votes, axis=1) != truth))
    return np.array([out[s] for s in sizes])


def ensemble_size_sweep(ds, cfg, sizes, folds=10, repeats=1, seed=0, reference=None,
                        stratified=True):
    """Error of prefix ensembles of one forest per fold, no retraining.

    A forest of ``max(sizes)`` trees is trained per fold; an ensemble of L
    trees is its first L trees. With a ``reference`` config (e.g. a 500-tree
    RF) the same folds also give the misclassification ratios against the
    reference at equal size and at its full size.
    """
    sizes = [int(s) for s in sizes]
    if min(sizes) < 1:
        raise ValueError("ensemble sizes must be >= 1")
    big = _replace_size(cfg, max(sizes))
    ref_cfg = None
    if reference is not None:
        ref_cfg = _replace_size(reference, max(reference.n_trees, max(sizes)))
    y = ds.y
    K = ds.n_classes
    errs, ref_same, ref_full, counts_model = [], [], [], []
    for rep, f, tr, te in cv_splits(ds, folds, repeats, False, seed, stratified):
        s = _fold_seed(seed, rep, f)
        model = train(ds.subset(tr), _replace_seed(big, s))
        miss = _prefix_errors(model.tree_predictions(ds.subset(te)), y[te], sizes, K)
        counts_model.append(miss)
        errs.append(100.0 * miss / len(te))
        if ref_cfg is not None:
            ref = train(ds.subset(tr), _replace_seed(ref_cfg, s))
            rp = ref.tree_predictions(ds.subset(te))
            ref_same.append(_prefix_errors(rp, y[te], sizes, K))
            ref_full.append(_prefix_errors(rp, y[te], [reference.n_trees], K)[0])
    fold_errors = np.array(errs)
    result = SweepResult(sizes, fold_errors.mean(axis=0), fold_errors)
    if ref_cfg is not None:
        cm = np.array(counts_model, dtype=float).sum(axis=0)
        rs = np.array(ref_same, dtype=float).sum(axis=0)
        rf = float(np.sum(ref_full))
        n_test = sum(len(te) for _, _, _, te in cv_splits(ds, folds, repeats, False, seed, stratified))
        result.reference_error = 100.0 * rf / n_test
        with np.errstate(divide="ignore", invalid="ignore"):
            result.ratio_vs_same_size = np.where(rs > 0, cm / np.where(rs > 0, rs, 1), np.nan)
            result.ratio_vs_reference = cm / rf if rf > 0 else np.full(len(sizes), np.nan)
    return result


def _replace_size(cfg, n):
    from dataclasses import replace

    return replace(cfg, n_trees=n)
