"""Forests of canonical correlation trees, plus the CCF-Bag and RF baselines."""

import json
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, Schema, Standardizer, apply_standardizer, fit_standardizer
from .splits import CRITERIA
from .tree import GrowConfig, Tree, grow_tree

log = logging.getLogger(__name__)

FORMAT_VERSION = "ccf-model/1"
MODES = ("ccf", "ccf_bag", "rf")


class ModelFormatError(ValueError):
    pass


def default_lambda(n_features):
    """ceil(log2(D) + 1), with 2 for D = 3, capped at D."""
    if n_features < 1:
        raise ValueError("need at least one feature")
    if n_features == 3:
        return 2
    return min(n_features, math.ceil(math.log2(n_features) + 1))


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    lam: int = None  # None -> default_lambda(D)
    mode: str = "ccf"
    criterion: str = "info_gain"
    epsilon: float = 1e-4
    seed: int = 0
    leaf_on_degenerate: bool = False
    n_jobs: int = None  # None -> CCF_THREADS or 1

    def __post_init__(self):
        mode = self.mode.replace("-", "_")
        object.__setattr__(self, "mode", mode)
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}, got {self.criterion!r}")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")


def _tree_rng(seed, i):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(i,)))


def _grow_one(args):
    X, y, K, groups, gcfg, bag, seed, i = args
    rng = _tree_rng(seed, i)
    if bag:
        rows = rng.integers(0, X.shape[0], size=X.shape[0])
        X, y = X[rows], y[rows]
    return grow_tree(X, y, groups, gcfg, rng, n_classes=K)


def _n_jobs(cfg):
    if cfg.n_jobs is not None:
        return max(1, cfg.n_jobs)
    return max(1, int(os.environ.get("CCF_THREADS", "1")))


@dataclass
class Forest:
    trees: list
    standardizer: Standardizer
    schema: Schema
    config: ForestConfig
    lam: int
    bounds: np.ndarray = None  # 2 x C training min/max per encoded column

    @property
    def n_classes(self):
        return self.schema.n_classes

    def _standardized(self, X):
        if isinstance(X, Dataset):
            return self.standardizer.transform(X.X)
        X = np.asarray(X, dtype=object)
        if X.ndim == 1:
            X = X[None, :]
        n_feat = len(self.schema.features)
        if X.shape[1] != n_feat:
            raise ValueError(f"schema mismatch: expected {n_feat} feature values per row, got {X.shape[1]}")
        enc, _ = self.schema.encode(X.tolist())
        return self.standardizer.transform(enc)

    def _votes_from_standardized(self, Z, n_trees=None):
        trees = self.trees if n_trees is None else self.trees[:n_trees]
        votes = np.zeros((Z.shape[0], self.n_classes), dtype=np.int64)
        rows = np.arange(Z.shape[0])
        for t in trees:
            np.add.at(votes, (rows, t.predict(Z)), 1)
        return votes

    def tree_predictions(self, X):
        """N x L matrix of per-tree class predictions."""
        Z = self._standardized(X)
        return np.stack([t.predict(Z) for t in self.trees], axis=1)

    def predict_proba(self, X):
        """Fraction of trees voting for each class.

        ``X`` is a Dataset or raw feature records in schema order (label
        column excluded); a single record gives a 1 x K result.
        """
        votes = self._votes_from_standardized(self._standardized(X))
        return votes / len(self.trees)

    def predict(self, X):
        # argmax returns the first maximum, i.e. the lowest class index on ties
        return np.argmax(self.predict_proba(X), axis=1)

    def to_dict(self):
        cfg = asdict(self.config)
        cfg.pop("n_jobs")
        cfg["epsilon"] = float(cfg["epsilon"]).hex()
        return {
            "format": FORMAT_VERSION,
            "config": cfg,
            "lambda": self.lam,
            "schema": self.schema.to_dict(),
            "standardizer": {
                "mu": [float(v).hex() for v in self.standardizer.mu],
                "sigma": [float(v).hex() for v in self.standardizer.sigma],
            },
            "trees": [t.to_dict() for t in self.trees],
            "bounds": None if self.bounds is None else [[float(v).hex() for v in row] for row in self.bounds],
        }

    @classmethod
    def from_dict(cls, d):
        cfg = dict(d["config"])
        cfg["epsilon"] = float.fromhex(cfg["epsilon"])
        return cls(
            trees=[Tree.from_dict(t) for t in d["trees"]],
            standardizer=Standardizer(
                np.array([float.fromhex(v) for v in d["standardizer"]["mu"]]),
                np.array([float.fromhex(v) for v in d["standardizer"]["sigma"]]),
            ),
            schema=Schema.from_dict(d["schema"]),
            config=ForestConfig(**cfg),
            lam=int(d["lambda"]),
            bounds=None if d.get("bounds") is None
            else np.array([[float.fromhex(v) for v in row] for row in d["bounds"]]),
        )


def train(ds, cfg=None):
    """Fit a forest on an encoded, unstandardized Dataset."""
    if cfg is None:
        cfg = ForestConfig()
    if ds.n_samples < 2:
        raise ValueError("need at least two training rows")
    if np.count_nonzero(ds.Y.sum(axis=0)) < 2:
        raise ValueError("training set contains a single class; nothing to learn")

    std = fit_standardizer(ds)
    Z = apply_standardizer(ds, std).X
    y = ds.y.astype(np.intp)
    groups = ds.feature_groups
    D = len(groups)
    lam = default_lambda(D) if cfg.lam is None else cfg.lam
    if not 1 <= lam <= D:
        raise ValueError(f"lambda must lie in [1, {D}], got {lam}")

    if cfg.mode == "ccf":
        # the projection bootstrap only applies when features are subsampled
        pboot = lam < D
        bag = not pboot
    else:
        pboot, bag = False, True
    gcfg = GrowConfig(
        lam=lam,
        projection_bootstrap=pboot,
        criterion=cfg.criterion,
        epsilon=cfg.epsilon,
        axis_aligned=cfg.mode == "rf",
        leaf_on_degenerate=cfg.leaf_on_degenerate,
    )
    jobs = [(Z, y, ds.n_classes, groups, gcfg, bag, cfg.seed, i) for i in range(cfg.n_trees)]
    n_jobs = _n_jobs(cfg)
    if n_jobs > 1 and cfg.n_trees > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            trees = list(ex.map(_grow_one, jobs, chunksize=max(1, cfg.n_trees // (4 * n_jobs))))
    else:
        trees = [_grow_one(j) for j in jobs]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-missing columns
        bounds = np.vstack([np.nanmin(ds.X, axis=0), np.nanmax(ds.X, axis=0)])
    bounds = np.nan_to_num(bounds, nan=0.0)
    return Forest(trees, std, ds.schema, cfg, lam, bounds)


def dumps(forest):
    return json.dumps(forest.to_dict(), sort_keys=True, indent=1) + "\n"


def loads(text):
    if not text.strip():
        raise ModelFormatError("empty model file")
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is truncated or corrupt: {exc}") from None
    version = d.get("format") if isinstance(d, dict) else None
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version!r} (expected {FORMAT_VERSION!r})")
    try:
        return Forest.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from None


def save(forest, path):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps(forest))
    os.replace(tmp, path)


def load(path):
    return loads(Path(path).read_text())
