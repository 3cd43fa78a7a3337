"""Command-line entry point: ``ccf <subcommand> ...``.

Exit codes: 0 success, 2 usage or input error, 1 anything else.
"""

import argparse
import csv
import io
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import forest as forest_mod
from .data import DataError, SchemaError, load_csv, load_schema, write_csv
from .evaluation import cross_validate, ensemble_size_sweep
from .forest import ForestConfig, ModelFormatError
from .synth import augment_dataset, gen_spirals, make_compound

log = logging.getLogger("ccforest")


class UsageError(Exception):
    pass


def _write_atomic(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _schema_path(args):
    if args.schema:
        return Path(args.schema)
    return Path(args.data).with_suffix(".schema")


def _load_data(args):
    data = Path(args.data)
    if not data.exists():
        raise UsageError(f"data file not found: {data}")
    schema = _schema_path(args)
    if not schema.exists():
        raise UsageError(f"schema file not found: {schema}")
    return load_csv(data, load_schema(schema))


def _forest_config(args, **overrides):
    cfg = ForestConfig(
        n_trees=args.trees,
        lam=args.lam,
        mode=args.mode,
        criterion=args.criterion,
        epsilon=args.epsilon,
        seed=args.seed,
        leaf_on_degenerate=args.leaf_on_degenerate,
    )
    return replace(cfg, **overrides) if overrides else cfg


def cmd_train(args):
    ds = _load_data(args)
    cfg = _forest_config(args)
    t0 = time.perf_counter()
    model = forest_mod.train(ds, cfg)
    elapsed = time.perf_counter() - t0
    forest_mod.save(model, args.out)
    print(f"trained {len(model.trees)} trees ({cfg.mode}, lambda={model.lam}) in {elapsed:.2f}s -> {args.out}")


def cmd_predict(args):
    model_path = Path(args.model)
    if not model_path.exists():
        raise UsageError(f"model file not found: {model_path}")
    model = forest_mod.load(model_path)
    with open(args.data, newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    if not rows:
        raise UsageError(f"{args.data}: empty file")
    header, rows = rows[0], [r for r in rows[1:] if r]
    names = [c.name for c in model.schema.features]
    try:
        idx = [header.index(n) for n in names]
    except ValueError as exc:
        raise UsageError(f"{args.data}: missing feature column ({exc})") from None
    records = [[r[i] for i in idx] for r in rows]
    proba = model.predict_proba(records) if records else np.zeros((0, model.n_classes))
    classes = model.schema.class_names
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["prediction"] + [f"p_{c}" for c in classes])
    for p in proba:
        w.writerow([classes[int(np.argmax(p))]] + [repr(float(v)) for v in p])
    if args.out:
        _write_atomic(args.out, buf.getvalue())
        print(f"wrote {len(records)} predictions to {args.out}")
    else:
        sys.stdout.write(buf.getvalue())


def cmd_crossval(args):
    ds = _load_data(args)
    cfg = _forest_config(args)
    report = cross_validate(ds, cfg, folds=args.folds, repeats=args.repeats,
                            inverted=args.inverted, seed=args.seed,
                            stratified=not args.unstratified)
    print(report.summary())
    if args.out:
        _write_atomic(args.out, report.to_csv(timing=not args.no_timing))


def cmd_gen(args):
    if args.kind == "spirals":
        ds = gen_spirals(args.n, args.classes, args.noise, args.seed)
    else:
        if not args.data:
            raise UsageError(f"gen {args.kind} needs --data")
        src = _load_data(args)
        if args.kind == "compound":
            ds = make_compound(src, kappa=args.kappa, beta=args.beta, seed=args.seed)
        else:
            ds = augment_dataset(src, args.kappa, seed=args.seed)
    out = Path(args.out or f"{args.kind}.csv")
    csv_path, schema_path = write_csv(out, ds)
    print(f"wrote {ds.n_samples} rows, {ds.n_classes} classes to {csv_path} (+ {schema_path})")


def _parse_floats(text, flag):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated numbers, got {text!r}") from None


def cmd_corr_experiment(args):
    ds = _load_data(args)
    kappas = _parse_floats(args.kappas, "--kappas")
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kappa", "mode", "mean_error_pct", "std_error_pct", "mean_kappa"])
    for kappa in kappas:
        aug = augment_dataset(ds, kappa, seed=args.seed)
        for mode in modes:
            cfg = _forest_config(args, mode=mode)
            rep = cross_validate(aug, cfg, folds=args.folds, repeats=args.repeats, seed=args.seed)
            print(f"kappa={kappa:g} {rep.summary()}")
            w.writerow([repr(kappa), cfg.mode, f"{rep.mean_error:.6f}", f"{rep.std_error:.6f}",
                        f"{rep.mean_kappa:.6f}"])
    if args.out:
        _write_atomic(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def cmd_surface(args):
    model = forest_mod.load(args.model)
    feats = model.schema.features
    if len(feats) != 2 or any(c.role != "ordinal" for c in feats):
        raise UsageError("surface export needs a model trained on exactly 2 ordinal features")
    g = args.grid
    lo, hi = model.bounds
    pad = 0.1 * (hi - lo)
    xs = np.linspace(lo[0] - pad[0], hi[0] + pad[0], g)
    ys = np.linspace(lo[1] - pad[1], hi[1] + pad[1], g)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    proba = model.predict_proba(pts.tolist())
    classes = model.schema.class_names
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y"] + [f"p_{c}" for c in classes] + ["argmax"])
    for (x, y), p in zip(pts, proba):
        w.writerow([repr(float(x)), repr(float(y))] + [repr(float(v)) for v in p] + [int(np.argmax(p))])
    _write_atomic(args.out, buf.getvalue())
    print(f"wrote {len(pts)} grid points to {args.out}")


def cmd_sweep_trees(args):
    ds = _load_data(args)
    sizes = [int(v) for v in _parse_floats(args.sizes, "--sizes")]
    cfg = _forest_config(args)
    ref = None
    if args.reference_trees > 0:
        ref = _forest_config(args, mode=args.reference_mode, n_trees=args.reference_trees)
    res = ensemble_size_sweep(ds, cfg, sizes, folds=args.folds, repeats=args.repeats,
                              seed=args.seed, reference=ref)
    for L, e in zip(res.sizes, res.mean_error):
        print(f"L={L}: {e:.3f}%")
    if res.reference_error is not None:
        print(f"reference {ref.mode} x{ref.n_trees}: {res.reference_error:.3f}%")
    if args.out:
        _write_atomic(args.out, res.to_csv())


def _add_forest_flags(p, trees=500):
    p.add_argument("--trees", type=int, default=trees)
    p.add_argument("--mode", default="ccf", choices=["ccf", "ccf-bag", "ccf_bag", "rf"])
    p.add_argument("--lambda", dest="lam", type=int, default=None,
                   help="features sampled per node (default ceil(log2 D + 1))")
    p.add_argument("--criterion", default="info_gain", choices=["info_gain", "gini"])
    p.add_argument("--epsilon", type=float, default=1e-4, help="CCA rank tolerance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--leaf-on-degenerate", action="store_true",
                   help="make a leaf instead of falling back to the full node data")


def _add_data_flags(p, required=True):
    p.add_argument("--data", required=required)
    p.add_argument("--schema", default=None, help="default: <data>.schema")


def build_parser():
    p = argparse.ArgumentParser(prog="ccf", description="Canonical correlation forests")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a forest and write a model file")
    _add_data_flags(t)
    _add_forest_flags(t)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="predict classes for a CSV")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", default=None)
    pr.set_defaults(func=cmd_predict)

    cv = sub.add_parser("crossval", help="k-fold cross-validation")
    _add_data_flags(cv)
    _add_forest_flags(cv)
    cv.add_argument("--folds", type=int, default=10)
    cv.add_argument("--repeats", type=int, default=1)
    cv.add_argument("--inverted", action="store_true", help="train on one fold, test on the rest")
    cv.add_argument("--unstratified", action="store_true")
    cv.add_argument("--no-timing", action="store_true", help="write 0 for train_seconds")
    cv.add_argument("--out", default=None)
    cv.set_defaults(func=cmd_crossval)

    g = sub.add_parser("gen", help="generate a synthetic or transformed dataset")
    g.add_argument("kind", choices=["spirals", "compound", "augment"])
    _add_data_flags(g, required=False)
    g.add_argument("--n", type=int, default=10000)
    g.add_argument("--classes", type=int, default=3)
    g.add_argument("--noise", type=float, default=0.2)
    g.add_argument("--kappa", type=float, default=100.0)
    g.add_argument("--beta", type=float, default=2000.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=None)
    g.set_defaults(func=cmd_gen)

    ce = sub.add_parser("corr-experiment", help="error vs injected correlation strength")
    _add_data_flags(ce)
    _add_forest_flags(ce)
    ce.set_defaults(epsilon=1e-12)
    ce.add_argument("--kappas", default="0,1e2,1e4")
    ce.add_argument("--modes", default="ccf,rf")
    ce.add_argument("--folds", type=int, default=10)
    ce.add_argument("--repeats", type=int, default=5)
    ce.add_argument("--out", default=None)
    ce.set_defaults(func=cmd_corr_experiment)

    s = sub.add_parser("surface", help="export class probabilities on a 2-D grid")
    s.add_argument("--model", required=True)
    s.add_argument("--grid", type=int, default=200)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_surface)

    sw = sub.add_parser("sweep-trees", help="error vs ensemble size")
    _add_data_flags(sw)
    _add_forest_flags(sw, trees=200)
    sw.add_argument("--sizes", default="1,5,15,50,200")
    sw.add_argument("--reference-mode", default="rf", choices=["ccf", "ccf-bag", "ccf_bag", "rf"])
    sw.add_argument("--reference-trees", type=int, default=500, help="0 disables the reference")
    sw.add_argument("--folds", type=int, default=10)
    sw.add_argument("--repeats", type=int, default=1)
    sw.add_argument("--out", default=None)
    sw.set_defaults(func=cmd_sweep_trees)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, DataError, SchemaError, ModelFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
