"""Artificial datasets: interleaved spirals and correlation injection."""

import numpy as np

from .data import Dataset, apply_standardizer, fit_standardizer

# Arc swept by each spiral arm (radians) and where it starts. The start
# offset keeps the arms apart near the origin; with the default noise a
# 200-tree forest sits below 1% error on 10000 points.
SPIRAL_ARC = 3 * np.pi
SPIRAL_THETA0 = 0.5 * np.pi
SPIRAL_NOISE = 0.2


def gen_spirals(n_points=10000, n_classes=3, noise_std=SPIRAL_NOISE, seed=0,
                arc=SPIRAL_ARC, theta0=SPIRAL_THETA0, scale=1.0):
    """Archimedean spirals ``r = scale * theta``, arm k rotated by 2*pi*k/K.

    Class sizes differ by at most one point. ``theta`` is uniform on
    ``[theta0, theta0 + arc]``.
    """
    if n_classes < 2 or n_points < n_classes:
        raise ValueError("need n_classes >= 2 and n_points >= n_classes")
    rng = np.random.default_rng(seed)
    y = np.arange(n_points) % n_classes
    theta = rng.uniform(theta0, theta0 + arc, size=n_points)
    angle = theta + 2 * np.pi * y / n_classes
    r = scale * theta
    X = np.column_stack([r * np.cos(angle), r * np.sin(angle)])
    if noise_std > 0:
        X = X + rng.normal(0.0, noise_std, size=X.shape)
    names = [f"class{k}" for k in range(n_classes)]
    return Dataset.from_arrays(X, y, class_names=names, feature_names=["x", "y"])


def corr_augment(X, kappa, seed=0):
    """Append a N(0, kappa^2) column and add or subtract it from every column.

    The sign for each original column is drawn once, uniformly from {-1, +1}.
    ``seed`` may be an int or a numpy Generator.
    """
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    X = np.asarray(X, dtype=float)
    extra = rng.normal(0.0, 1.0, size=X.shape[0]) * kappa
    signs = rng.choice(np.array([-1.0, 1.0]), size=X.shape[1])
    return np.column_stack([X + extra[:, None] * signs, extra])


def _standardized_matrix(ds):
    return apply_standardizer(ds, fit_standardizer(ds)).X


def augment_dataset(ds, kappa, seed=0):
    """Standardize ``ds`` then apply ``corr_augment``; all columns become ordinal."""
    X = corr_augment(_standardized_matrix(ds), kappa, seed)
    return Dataset.from_arrays(X, ds.y, class_names=ds.schema.class_names)


def make_compound(ds, kappa=100.0, beta=2000.0, seed=0):
    """Original plus a shifted replica, each independently correlation-augmented.

    Replica rows carry class ``k + K``; the result has 2N rows, 2K classes and
    one more column than the encoded input.
    """
    if not np.isfinite(beta):
        raise ValueError("beta must be finite")
    rng = np.random.default_rng(seed)
    Z = _standardized_matrix(ds)
    top = corr_augment(Z, kappa, rng)
    bottom = corr_augment(Z, kappa, rng) + beta
    K = ds.n_classes
    names = list(ds.schema.class_names) + [f"{c}'" for c in ds.schema.class_names]
    y = np.concatenate([ds.y, ds.y + K])
    return Dataset.from_arrays(np.vstack([top, bottom]), y, class_names=names)
