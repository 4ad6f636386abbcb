"""Command-line runners for dataset generation, toy experiments, training,
evaluation and diagnostics.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical
failure. File-producing commands drop a ``*.run.json`` (or ``run.json`` for
directory outputs) echoing the fully resolved configuration so any run can be
reproduced from its artifacts alone.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .invariants import triple_count
from .kernels import RadialProfileBank, init_weights
from .layer import layer_backward, pooled_features_by_maps
from .network import (ModelConfig, TrainConfig, TrainingError, build_model,
                      count_parameters, cross_entropy, extract_features,
                      evaluate, forward_logits, load_model, loss_and_grads,
                      save_model, train)
from .synthdata import (DEFAULT_TOY_SEED, GenConfig, ToySpec, generate_dataset,
                        load_dataset, run_toy)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

PUBLISHED_COUNTS = {0: 1, 1: 2, 2: 5, 4: 14, 6: 30, 8: 55, 10: 91}
PUBLISHED_COUNT_100 = 48127


def _write_run_json(anchor: Path, command: str, resolved: dict) -> None:
    anchor = Path(anchor)
    if anchor.is_dir():
        target = anchor / "run.json"
    else:
        target = anchor.with_name(anchor.stem + ".run.json")
    payload = {"command": command, "version": __version__, "config": resolved}
    with open(target, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _resolved(args, skip=("func", "command")) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = GenConfig(volume_size=args.volume_size, n_per_class=args.n_per_class,
                    seed=args.seed)
    manifest = generate_dataset(cfg, args.out, jobs=args.jobs)
    _write_run_json(Path(args.out), "gen", _resolved(args))
    print(f"wrote {len(manifest['samples'])} samples to {args.out}")
    return EXIT_OK


def cmd_toy(args) -> int:
    spec = ToySpec(experiment=args.experiment, n_instances=args.instances,
                   noise=args.noise, seed=args.seed, profile=args.profile)
    rows = run_toy(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["instance", "class", "kind", "index", "value"])
        for row in rows:
            writer.writerow([row["instance"], row["label"], row["kind"],
                             row["index"], repr(row["value"])])
    _write_run_json(out, "toy", _resolved(args))
    print(f"wrote {len(rows)} rows to {out}")
    return EXIT_OK


def _model_config(args) -> ModelConfig:
    return ModelConfig(kind=args.model,
                       kernel_size=args.kernel_size,
                       n_streams=args.filters,
                       max_degree=0 if args.model == "z3" else args.degree,
                       stride=args.stride,
                       prune_zero=getattr(args, "prune_zero", False))


def _extract_split(data_dir, split, config, limit=None, verbose=True):
    vols, labels = load_dataset(data_dir, split, limit=limit)
    t0 = time.perf_counter()
    bundle = extract_features(vols, labels, config)
    if verbose:
        print(f"extracted {len(vols)} {split} volumes in "
              f"{time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return bundle


def cmd_train(args) -> int:
    config = _model_config(args)
    train_bundle = _extract_split(args.data, "train", config)
    test_bundle = _extract_split(args.data, "test", config)
    rng = np.random.default_rng(args.seed)
    if args.train_size is not None:
        if args.train_size > len(train_bundle):
            raise ValueError(f"--train-size {args.train_size} exceeds the "
                             f"{len(train_bundle)} available training samples")
        idx = rng.choice(len(train_bundle), size=args.train_size, replace=False)
        train_bundle = train_bundle.subset(idx)
    model = build_model(config, rng, seed=args.seed)
    print(f"parameters={count_parameters(model)}")
    tcfg = TrainConfig(iterations=args.iters, batch_size=args.batch_size,
                       learning_rate=args.lr, seed=args.seed,
                       eval_every=args.eval_every)
    rows = train(model, train_bundle, test_bundle, tcfg)

    metrics = Path(args.metrics)
    metrics.parent.mkdir(parents=True, exist_ok=True)
    with open(metrics, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "loss", "train_accuracy", "test_accuracy"])
        for row in rows:
            writer.writerow([row["iteration"], repr(row["loss"]),
                             repr(row["train_accuracy"]),
                             repr(row["test_accuracy"])])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    _write_run_json(out, "train", _resolved(args))
    print(f"final_test_accuracy={rows[-1]['test_accuracy']!r}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model_file)
    bundle = _extract_split(args.data, args.split, model.config, verbose=False)
    acc = evaluate(model, bundle)
    _write_run_json(Path(args.model_file).with_suffix(".eval.json"), "eval",
                    _resolved(args))
    print(f"{args.split}_accuracy={acc!r}")
    return EXIT_OK


def cmd_tables(args) -> int:
    if args.which != "feature-counts":
        raise ValueError(f"unknown table {args.which!r}")
    print("max_degree,spectrum_maps,bispectrum_maps")
    for n, published in PUBLISHED_COUNTS.items():
        count = triple_count(n)
        assert count == published, (n, count, published)
        print(f"{n},{n + 1},{count}")
    ours_100 = triple_count(100)
    print(f"100,101,{ours_100}")
    print(f"# note: the published table lists {PUBLISHED_COUNT_100} bispectrum "
          f"maps at degree 100 where this enumeration gives {ours_100}; see "
          "README 'Known discrepancies'")
    return EXIT_OK


def _gradcheck_relative_error(analytic, numeric) -> float:
    analytic = np.asarray(analytic, dtype=float).ravel()
    numeric = np.asarray(numeric, dtype=float).ravel()
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    err = 0.0
    for a, g in zip(analytic, numeric):
        denom = max(abs(a), abs(g), 1e-8 * scale)
        err = max(err, abs(a - g) / denom)
    return err


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    config = _model_config(args)
    vol = rng.standard_normal((args.volume_size,) * 3)
    geom = config.geometry
    triples = config.triples() if config.kind == "ssb" else None
    bank = init_weights(rng, config.n_streams, config.max_degree,
                        config.n_radial - 1)
    upstream = rng.standard_normal((config.n_streams, config.n_channels))

    analytic = layer_backward(vol, bank, upstream, config.kind, geom, triples)
    step = args.step
    numeric = np.zeros_like(analytic)
    for idx in np.ndindex(bank.weights.shape):
        wp = bank.weights.copy(); wp[idx] += step
        wm = bank.weights.copy(); wm[idx] -= step
        fp = pooled_features_by_maps(vol, RadialProfileBank(wp), config.kind,
                                     geom, triples)
        fm = pooled_features_by_maps(vol, RadialProfileBank(wm), config.kind,
                                     geom, triples)
        numeric[idx] = float(np.sum(upstream * (fp - fm)) / (2.0 * step))
    layer_err = _gradcheck_relative_error(analytic, numeric)
    print(f"layer_gradient_max_relative_error={layer_err:.3e}")

    # network head: finite differences of the loss through the forward pass
    model = build_model(config, rng, seed=args.seed)
    model.params["feature_bias"][...] = rng.standard_normal(config.n_features)
    bundle_vols = [vol, rng.standard_normal(vol.shape)]
    data = extract_features(bundle_vols, [0, 1], config).data
    labels = np.array([0, 1])
    loss_and_grads(model, data, labels)
    head_err = 0.0
    for key in ("feature_bias", "fc_weight", "fc_bias"):
        flat = model.params[key].ravel()
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = cross_entropy(forward_logits(model, data)[0], labels)
            flat[i] = orig - step
            dn = cross_entropy(forward_logits(model, data)[0], labels)
            flat[i] = orig
            fd[i] = (up - dn) / (2.0 * step)
        head_err = max(head_err,
                       _gradcheck_relative_error(model.grads[key].ravel(), fd))
    print(f"head_gradient_max_relative_error={head_err:.3e}")
    worst = max(layer_err, head_err)
    print(f"max_relative_error={worst:.3e}")
    if worst >= args.tolerance:
        print(f"FAIL: exceeds tolerance {args.tolerance}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="solidsph",
        description="Solid spherical harmonic invariants: data generation, "
                    "toy experiments, training and diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate the rotated-pattern dataset")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--n-per-class", type=int, default=500)
    gen.add_argument("--volume-size", type=int, default=32)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--jobs", type=int, default=1)
    gen.set_defaults(func=cmd_gen)

    toy = sub.add_parser("toy", help="run a spectrum-vs-bispectrum toy experiment")
    toy.add_argument("--experiment", type=int, choices=(1, 2), required=True)
    toy.add_argument("--noise", type=float, default=0.1)
    toy.add_argument("--instances", type=int, default=50)
    toy.add_argument("--seed", type=int, default=DEFAULT_TOY_SEED)
    toy.add_argument("--profile", choices=("shell", "simoncelli"),
                     default="shell")
    toy.add_argument("--out", required=True, help="output CSV path")
    toy.set_defaults(func=cmd_toy)

    tr = sub.add_parser("train", help="train a classifier on a generated dataset")
    tr.add_argument("--model", choices=("ssb", "sse", "z3"), required=True)
    tr.add_argument("--degree", type=int, default=2,
                    help="max harmonic degree (sse/ssb)")
    tr.add_argument("--filters", type=int, default=2,
                    help="streams (sse/ssb) or filters (z3)")
    tr.add_argument("--kernel-size", type=int, default=7)
    tr.add_argument("--stride", type=int, default=1)
    tr.add_argument("--iters", type=int, default=10000)
    tr.add_argument("--lr", type=float, default=1e-3)
    tr.add_argument("--batch-size", type=int, default=8)
    tr.add_argument("--eval-every", type=int, default=500)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--train-size", type=int, default=None,
                    help="train on a random subset of this size")
    tr.add_argument("--prune-zero", action="store_true",
                    help="drop identically zero bispectrum channels")
    tr.add_argument("--data", required=True)
    tr.add_argument("--out", required=True, help="model JSON path")
    tr.add_argument("--metrics", required=True, help="metrics CSV path")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a trained model")
    ev.add_argument("--model-file", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--split", choices=("train", "test"), default="test")
    ev.set_defaults(func=cmd_eval)

    tb = sub.add_parser("tables", help="print reference tables")
    tb.add_argument("--which", choices=("feature-counts",),
                    default="feature-counts")
    tb.set_defaults(func=cmd_tables)

    gc = sub.add_parser("gradcheck",
                        help="compare analytic gradients to finite differences")
    gc.add_argument("--model", choices=("ssb", "sse"), default="ssb")
    gc.add_argument("--degree", type=int, default=2)
    gc.add_argument("--filters", type=int, default=2)
    gc.add_argument("--kernel-size", type=int, default=7)
    gc.add_argument("--stride", type=int, default=1)
    gc.add_argument("--volume-size", type=int, default=16)
    gc.add_argument("--step", type=float, default=1e-4)
    gc.add_argument("--tolerance", type=float, default=1e-4)
    gc.add_argument("--seed", type=int, default=0)
    gc.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad flags, matching our config-error code
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ValueError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TrainingError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
