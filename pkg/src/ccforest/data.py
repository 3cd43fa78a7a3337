"""Dataset ingestion, categorical expansion, z-scoring and fold construction.

Schema files are plain ``name: role`` lines, one per CSV column, in column
order. Roles are ``ordinal``, ``categorical`` or ``label``. An ordinal column
may list ordered levels, ``size: ordinal[small, medium, large]``, in which case
each level is replaced by its index. A ``@classes: a, b, c`` line fixes the
class order; otherwise classes are numbered in order of first appearance.
Lines starting with ``#`` are comments.
"""

import csv
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "?"})
ROLES = ("ordinal", "categorical", "label")


class SchemaError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass
class Column:
    name: str
    role: str
    levels: list = field(default_factory=list)  # categorical dictionary or ordered levels
    ordered: bool = False


@dataclass
class Schema:
    columns: list
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        labels = [c for c in self.columns if c.role == "label"]
        if len(labels) != 1:
            raise SchemaError(f"schema needs exactly one label column, found {len(labels)}")
        for c in self.columns:
            if c.role not in ROLES:
                raise SchemaError(f"column {c.name!r}: unknown role {c.role!r}")

    @property
    def label_index(self):
        return next(i for i, c in enumerate(self.columns) if c.role == "label")

    @property
    def features(self):
        return [c for c in self.columns if c.role != "label"]

    @property
    def n_classes(self):
        return len(self.class_names)

    def feature_groups(self):
        """Encoded column range ``(start, stop)`` for each logical feature."""
        groups, start = [], 0
        for c in self.features:
            width = len(c.levels) if c.role == "categorical" else 1
            groups.append((start, start + width))
            start += width
        return groups

    @property
    def n_encoded(self):
        groups = self.feature_groups()
        return groups[-1][1] if groups else 0

    def encode(self, records):
        """Encode raw feature records (label column excluded) to a float matrix.

        Returns ``(X, missing_mask)``. Missing cells hold NaN in ``X``.
        Categorical levels outside the dictionary encode as all zeros.
        """
        feats = self.features
        rows = [list(r) for r in records]
        X = np.zeros((len(rows), self.n_encoded))
        mask = np.zeros(X.shape, dtype=bool)
        for (start, stop), col, j in zip(self.feature_groups(), feats, range(len(feats))):
            lookup = {lv: i for i, lv in enumerate(col.levels)}
            for i, row in enumerate(rows):
                if len(row) != len(feats):
                    raise DataError(
                        f"record {i}: expected {len(feats)} feature values, got {len(row)}"
                    )
                value = row[j]
                if _is_missing(value):
                    X[i, start:stop] = np.nan
                    mask[i, start:stop] = True
                elif col.role == "categorical":
                    k = lookup.get(_as_level(value))
                    if k is not None:
                        X[i, start + k] = 1.0
                else:
                    X[i, start] = _ordinal_value(col, value, i)
        return X, mask

    def to_text(self):
        lines = []
        if self.class_names:
            lines.append("@classes: " + ", ".join(self.class_names))
        for c in self.columns:
            if c.ordered:
                lines.append(f"{c.name}: ordinal[{', '.join(c.levels)}]")
            else:
                lines.append(f"{c.name}: {c.role}")
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {
            "columns": [
                {"name": c.name, "role": c.role, "levels": list(c.levels), "ordered": c.ordered}
                for c in self.columns
            ],
            "class_names": list(self.class_names),
        }

    @classmethod
    def from_dict(cls, d):
        cols = [Column(c["name"], c["role"], list(c["levels"]), c["ordered"]) for c in d["columns"]]
        return cls(cols, list(d["class_names"]))


_ROLE_RE = re.compile(r"^(ordinal|categorical|label)\s*(?:\[(.*)\])?$")


def parse_schema(text):
    columns, class_names = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise SchemaError(f"schema line {lineno}: expected 'name: role'")
        key, value = (s.strip() for s in line.split(":", 1))
        if key == "@classes":
            class_names = [s.strip() for s in value.split(",") if s.strip()]
            continue
        m = _ROLE_RE.match(value)
        if not m:
            raise SchemaError(f"schema line {lineno}: unknown role {value!r}")
        role, levels = m.group(1), m.group(2)
        if levels is not None:
            if role != "ordinal":
                raise SchemaError(f"schema line {lineno}: only ordinal columns take levels")
            columns.append(Column(key, role, [s.strip() for s in levels.split(",")], True))
        else:
            columns.append(Column(key, role))
    return Schema(columns, class_names)


def load_schema(path):
    return parse_schema(Path(path).read_text())


def _is_missing(value):
    if value is None:
        return True
    if isinstance(value, str):
        return value.strip() in MISSING_TOKENS
    return isinstance(value, float) and math.isnan(value)


def _as_level(value):
    if isinstance(value, str):
        return value.strip()
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    return str(value)


def _ordinal_value(col, value, row):
    if col.ordered:
        try:
            return float(col.levels.index(_as_level(value)))
        except ValueError:
            raise DataError(f"row {row}, column {col.name!r}: unknown level {value!r}") from None
    try:
        return float(value)
    except (TypeError, ValueError):
        raise DataError(f"row {row}, column {col.name!r}: cannot parse {value!r} as a number") from None


@dataclass(frozen=True)
class Dataset:
    """Encoded features ``X`` (NaN where missing), 0/1 class indicator ``Y``."""

    X: np.ndarray
    Y: np.ndarray
    schema: Schema
    missing_mask: np.ndarray

    @property
    def y(self):
        return np.argmax(self.Y, axis=1)

    @property
    def n_samples(self):
        return self.X.shape[0]

    @property
    def n_classes(self):
        return self.Y.shape[1]

    @property
    def feature_groups(self):
        return self.schema.feature_groups()

    @property
    def n_features(self):
        """Number of logical features (categorical groups count once)."""
        return len(self.schema.features)

    def subset(self, index):
        index = np.asarray(index)
        return Dataset(self.X[index], self.Y[index], self.schema, self.missing_mask[index])

    @classmethod
    def from_arrays(cls, X, y, class_names=None, feature_names=None):
        """All-ordinal dataset from a numeric matrix and integer labels."""
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        if X.ndim != 2 or len(y) != X.shape[0]:
            raise DataError("X must be 2-D with one label per row")
        k = int(y.max()) + 1 if class_names is None else len(class_names)
        if class_names is None:
            class_names = [str(i) for i in range(k)]
        if feature_names is None:
            feature_names = [f"x{i}" for i in range(X.shape[1])]
        cols = [Column(n, "ordinal") for n in feature_names] + [Column("class", "label")]
        schema = Schema(cols, [str(c) for c in class_names])
        return cls(X, one_hot(y, k), schema, np.isnan(X))


def one_hot(y, n_classes):
    Y = np.zeros((len(y), n_classes))
    Y[np.arange(len(y)), y] = 1.0
    return Y


def load_csv(path, schema):
    """Read a CSV with a header row against ``schema``.

    Categorical dictionaries (and the class list, unless the schema fixes it)
    are built from this file in order of first appearance.
    """
    if not isinstance(schema, Schema):
        schema = load_schema(schema)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(s.strip() for s in r)]
    if len(header) != len(schema.columns):
        raise DataError(
            f"{path}: header has {len(header)} columns, schema declares {len(schema.columns)}"
        )
    return dataset_from_records(rows, schema, source=str(path))


def dataset_from_records(rows, schema, source="<records>"):
    """Build a Dataset from raw string rows that include the label column."""
    width = len(schema.columns)
    li = schema.label_index
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"{source}: row {i + 1} has {len(r)} fields, expected {width}")

    columns = []
    for j, c in enumerate(schema.columns):
        if c.role == "categorical":
            levels = list(c.levels)
            seen = set(levels)
            for r in rows:
                v = r[j].strip()
                if v not in MISSING_TOKENS and v not in seen:
                    seen.add(v)
                    levels.append(v)
            c = Column(c.name, c.role, levels)
        columns.append(c)

    fixed = bool(schema.class_names)
    class_names = list(schema.class_names)
    for i, r in enumerate(rows):
        v = r[li].strip()
        if v in MISSING_TOKENS:
            raise DataError(f"{source}: row {i + 1}, column {schema.columns[li].name!r}: missing label")
        if v not in class_names:
            if fixed:
                raise DataError(f"{source}: row {i + 1}: unknown class label {v!r}")
            class_names.append(v)
    schema = Schema(columns, class_names)

    records = [[v for j, v in enumerate(r) if j != li] for r in rows]
    try:
        X, mask = schema.encode(records)
    except DataError as exc:
        raise DataError(f"{source}: {exc}") from None
    y = np.array([class_names.index(r[li].strip()) for r in rows], dtype=int)
    return Dataset(X, one_hot(y, len(class_names)), schema, mask)


def write_csv(path, ds):
    """Write an all-ordinal dataset and its schema (``<path>.schema``)."""
    path = Path(path)
    names = [c.name for c in ds.schema.features]
    label = ds.schema.columns[ds.schema.label_index].name
    classes = ds.schema.class_names
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + [label])
        for x, k in zip(ds.X, ds.y):
            w.writerow(["?" if np.isnan(v) else repr(float(v)) for v in x] + [classes[k]])
    schema_path = path.with_suffix(".schema")
    schema_path.write_text(ds.schema.to_text())
    return path, schema_path


@dataclass(frozen=True)
class Standardizer:
    mu: np.ndarray
    sigma: np.ndarray

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.mu):
            raise DataError(
                f"layout mismatch: standardizer fitted on {len(self.mu)} columns, got {X.shape}"
            )
        safe = np.where(self.sigma > 0, self.sigma, 1.0)
        Z = np.where(self.sigma > 0, (X - self.mu) / safe, 0.0)
        Z[np.isnan(Z)] = 0.0
        return Z


def fit_standardizer(ds):
    """Per-column mean and sample std (N-1 divisor), ignoring missing cells."""
    X = ds.X if isinstance(ds, Dataset) else np.asarray(ds, dtype=float)
    if X.shape[0] < 2:
        raise DataError("standardizer needs at least two rows")
    observed = (~np.isnan(X)).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mu = np.nanmean(np.where(observed > 0, X, 0.0), axis=0)
        mu = np.where(observed > 0, mu, 0.0)
        dev = np.where(np.isnan(X), 0.0, X - mu)
        var = (dev**2).sum(axis=0) / np.maximum(observed - 1, 1)
    sigma = np.sqrt(var)
    sigma[observed < 2] = 0.0
    # exact zero for constant columns, whatever rounding did
    const = np.array([_is_constant(X[:, j]) for j in range(X.shape[1])], dtype=bool)
    sigma[const] = 0.0
    return Standardizer(mu, sigma)


def _is_constant(col):
    col = col[~np.isnan(col)]
    return col.size == 0 or bool(np.all(col == col[0]))


def apply_standardizer(ds, std):
    return Dataset(std.transform(ds.X), ds.Y, ds.schema, ds.missing_mask)


def make_folds(ds_or_labels, folds, seed=0, stratified=True):
    """Split row indices into ``folds`` disjoint near-equal test blocks.

    Returns a list of ``(train_idx, test_idx)``. Stratified mode deals each
    class round-robin over the folds; a class with fewer members than folds is
    dealt at random instead (with a warning).
    """
    y = ds_or_labels.y if isinstance(ds_or_labels, Dataset) else np.asarray(ds_or_labels)
    n = len(y)
    if folds < 2 or folds > n:
        raise ValueError(f"need 2 <= folds <= N, got folds={folds}, N={n}")
    rng = np.random.default_rng(seed)
    assign = np.empty(n, dtype=int)
    if stratified:
        # rotating the starting fold per class keeps block sizes near-equal
        offset = 0
        leftovers = []
        for k in np.unique(y):
            members = rng.permutation(np.flatnonzero(y == k))
            if len(members) < folds:
                log.warning("class %s has %d < %d members; not stratified", k, len(members), folds)
                leftovers.append(members)
                continue
            assign[members] = (offset + np.arange(len(members))) % folds
            offset = (offset + len(members)) % folds
        if leftovers:
            rest = rng.permutation(np.concatenate(leftovers))
            counts = np.bincount(assign[np.setdiff1d(np.arange(n), rest)], minlength=folds)
            for i in rest:
                f = int(np.argmin(counts))
                assign[i] = f
                counts[f] += 1
    else:
        perm = rng.permutation(n)
        assign[perm] = np.arange(n) % folds
    out = []
    for f in range(folds):
        test = np.flatnonzero(assign == f)
        train = np.flatnonzero(assign != f)
        out.append((train, test))
    return out
