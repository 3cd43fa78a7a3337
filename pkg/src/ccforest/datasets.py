"""Recipes for the UCI benchmark datasets used in the experiments.

Datasets are not shipped. ``fetch`` downloads each one from the UCI archive,
falling back to copies bundled with common Python packages where they exist
(scikit-learn ships iris, ``keel_ds`` ships letter), and writes
``<name>.csv`` plus ``<name>.schema`` into the data directory. The directory
is ``$CCF_DATA_DIR`` or ``./data``.

    python -m ccforest.datasets fetch iris banknote hill-valley letter
"""

import argparse
import csv
import hashlib
import io
import logging
import os
import sys
import urllib.request
from dataclasses import dataclass
from pathlib import Path

from .data import Column, Schema, dataset_from_records, load_csv

log = logging.getLogger(__name__)

UCI = "https://archive.ics.uci.edu/ml/machine-learning-databases"


def data_dir():
    return Path(os.environ.get("CCF_DATA_DIR", "data"))


@dataclass(frozen=True)
class Recipe:
    name: str
    urls: tuple
    n_rows: int
    n_features: int
    n_classes: int


RECIPES = {
    "iris": Recipe("iris", (f"{UCI}/iris/iris.data",), 150, 4, 3),
    "banknote": Recipe(
        "banknote", (f"{UCI}/00267/data_banknote_authentication.txt",), 1372, 4, 2
    ),
    "hill-valley": Recipe(
        "hill-valley",
        (f"{UCI}/hill-valley/Hill_Valley_without_noise_Training.data",
         f"{UCI}/hill-valley/Hill_Valley_without_noise_Testing.data"),
        1212, 100, 2,
    ),
    "hill-valley-noisy": Recipe(
        "hill-valley-noisy",
        (f"{UCI}/hill-valley/Hill_Valley_with_noise_Training.data",
         f"{UCI}/hill-valley/Hill_Valley_with_noise_Testing.data"),
        1212, 100, 2,
    ),
    "letter": Recipe("letter", (f"{UCI}/letter-recognition/letter-recognition.data",), 20000, 16, 26),
}


def _download(url, timeout=30):
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        return resp.read().decode()


def _rows(text):
    return [r for r in csv.reader(io.StringIO(text)) if r and any(s.strip() for s in r)]


def _iris_rows(texts):
    return [r[:4] + [r[4].strip()] for r in _rows(texts[0])]


def _banknote_rows(texts):
    return [r[:4] + [r[4].strip()] for r in _rows(texts[0])]


def _hill_rows(texts):
    out = []
    for t in texts:
        rows = _rows(t)
        out.extend(rows[1:])  # each file starts with a header line
    return out


def _letter_rows(texts):
    # UCI puts the letter first
    return [r[1:] + [r[0]] for r in _rows(texts[0])]


_PARSERS = {
    "iris": _iris_rows,
    "banknote": _banknote_rows,
    "hill-valley": _hill_rows,
    "hill-valley-noisy": _hill_rows,
    "letter": _letter_rows,
}


def _fallback_rows(name):
    """Rows from a locally installed package, or None."""
    if name == "iris":
        try:
            from sklearn.datasets import load_iris
        except ImportError:
            return None
        b = load_iris()
        return [[repr(float(v)) for v in x] + [str(b.target_names[t])] for x, t in zip(b.data, b.target)]
    if name == "letter":
        try:
            from importlib.resources import files

            text = (files("keel_ds") / "data/balanced/raw/letter.dat").read_text()
        except (ImportError, ModuleNotFoundError, FileNotFoundError):
            return None
        # KEEL keeps UCI's features and puts the letter last
        return [r for r in _rows(text) if not r[0].startswith("@")]
    return None


def _schema_for(recipe):
    cols = [Column(f"x{i + 1}", "ordinal") for i in range(recipe.n_features)]
    return Schema(cols + [Column("class", "label")], [])


def fetch(name, directory=None):
    """Fetch one dataset and write its CSV and schema; returns the CSV path."""
    recipe = RECIPES[name]
    directory = Path(directory) if directory is not None else data_dir()
    directory.mkdir(parents=True, exist_ok=True)
    rows, source = None, None
    try:
        texts = [_download(u) for u in recipe.urls]
        rows, source = _PARSERS[name](texts), recipe.urls[0]
    except OSError as exc:
        log.warning("download of %s failed (%s); trying local copies", name, exc)
        rows, source = _fallback_rows(name), "local package"
    if rows is None:
        raise FileNotFoundError(
            f"could not obtain dataset {name!r}: download failed and no local copy is installed"
        )
    if len(rows) != recipe.n_rows:
        raise ValueError(f"{name}: expected {recipe.n_rows} rows, got {len(rows)}")
    schema = _schema_for(recipe)
    ds = dataset_from_records(rows, schema, source=source)
    if ds.n_classes != recipe.n_classes:
        raise ValueError(f"{name}: expected {recipe.n_classes} classes, got {ds.n_classes}")
    csv_path = directory / f"{name}.csv"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([c.name for c in schema.columns])
    w.writerows(rows)
    csv_path.write_text(buf.getvalue())
    schema_path = csv_path.with_suffix(".schema")
    schema_path.write_text(schema.to_text())
    digest = hashlib.sha256(csv_path.read_bytes()).hexdigest()
    log.info("%s: %d rows from %s, sha256 %s", name, len(rows), source, digest)
    return csv_path


def path_for(name, directory=None):
    directory = Path(directory) if directory is not None else data_dir()
    return directory / f"{name}.csv"


def load(name, directory=None):
    """Load a fetched dataset; raises FileNotFoundError with the fetch command."""
    path = path_for(name, directory)
    if not path.exists():
        raise FileNotFoundError(
            f"{path} not found; run `python -m ccforest.datasets fetch {name}`"
        )
    return load_csv(path, path.with_suffix(".schema"))


def main(argv=None):
    p = argparse.ArgumentParser(prog="python -m ccforest.datasets")
    sub = p.add_subparsers(dest="cmd", required=True)
    f = sub.add_parser("fetch", help="download datasets into the data directory")
    f.add_argument("names", nargs="+", choices=sorted(RECIPES))
    f.add_argument("--dir", default=None)
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    status = 0
    for name in args.names:
        try:
            print(fetch(name, args.dir))
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            status = 1
    return status


if __name__ == "__main__":
    sys.exit(main())
