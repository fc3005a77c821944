"""Command-line orchestration: gen, train, eval, export-basis, inspect.

Exit codes: 0 success, 2 configuration error, 3 data/file error,
4 numeric failure (NaN loss or solver blowup). Every run writes a
manifest (config text, seed, versions) alongside its outputs.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import platform
import re
import sys

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, read_checkpoint_raw, save_checkpoint
from .data import read_dataset, write_dataset
from .errors import ConfigError, DataError, NumericError, OdnetError, ShapeError
from .evaluation import evaluate_model
from .runconfig import build_model, generate_dataset, parse_config, split_indices
from .training import train
from .trunks import export_basis


def _read_text(path) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def _write_manifest(path, config_text: str, seed) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"odnet_version={__version__}\n")
        fh.write(f"numpy_version={np.__version__}\n")
        fh.write(f"python_version={platform.python_version()}\n")
        fh.write(f"seed={seed}\n")
        fh.write("config:\n")
        fh.write(config_text)


def cmd_gen(args) -> int:
    cfg = parse_config(_read_text(args.config))
    if args.n is not None:
        cfg.data.n = args.n
    if args.seed is not None:
        cfg.data.seed = args.seed
    if os.path.exists(args.out) and not args.force:
        raise DataError(f"{args.out} exists; pass --force to overwrite")
    ds = generate_dataset(cfg.data)
    write_dataset(ds, args.out)
    _write_manifest(args.out + ".manifest.txt", cfg.text, cfg.data.seed)
    print(f"wrote {args.out}: N={ds.n_samples} N_x={ds.n_x} N_y={ds.n_y} "
          f"d_u={ds.d_u} d_v={ds.d_v}")
    return 0


def _train_one_seed(config_text: str, dataset_path: str, seed: int, out_prefix: str):
    """One independent training job; safe to run in a worker process."""
    cfg = parse_config(config_text)
    ds = read_dataset(dataset_path)
    train_idx, _ = split_indices(ds.n_samples, cfg.eval.test_count, cfg.eval.split_seed)
    model = build_model(cfg, ds, train_idx, seed)
    run_cfg = cfg.train
    run_cfg.seed = seed
    targets = ds.scalar_targets()
    ckpt = f"{out_prefix}-seed{seed}.odm"
    losscsv = f"{out_prefix}-seed{seed}.loss.csv"
    try:
        report = train(model, ds.U[train_idx], targets[train_idx], ds.Y, run_cfg)
    except NumericError as exc:
        if getattr(exc, "report", None) is not None:
            exc.report.to_csv(losscsv)
        raise
    save_checkpoint(model, config_text, ckpt, seed=seed)
    report.to_csv(losscsv)
    _write_manifest(f"{out_prefix}-seed{seed}.manifest.txt", config_text, seed)
    return seed, ckpt, report.losses[-1], report.mean_epoch_seconds(), model.parameter_hash()


def cmd_train(args) -> int:
    text = _read_text(args.config)
    cfg = parse_config(text)
    if args.epochs is not None:
        cfg.train.epochs = args.epochs
    if args.lr0 is not None:
        cfg.train.lr0 = args.lr0
    if args.optimizer is not None:
        cfg.train.optimizer = args.optimizer
        if cfg.train.optimizer not in ("adam", "adamw"):
            raise ConfigError(f"unknown optimizer {args.optimizer!r}")
    seeds = cfg.seeds
    if args.seeds:
        seeds = [int(tok) for tok in args.seeds.replace(",", " ").split()]
    # re-render scalar overrides into the config text stored in checkpoints
    text = _render_overrides(text, cfg)
    jobs = max(1, args.jobs)
    results = []
    if jobs == 1 or len(seeds) == 1:
        for seed in seeds:
            results.append(_train_one_seed(text, args.data, seed, args.out))
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_train_one_seed, text, args.data, seed, args.out)
                for seed in seeds
            ]
            results = [f.result() for f in futures]
    for seed, ckpt, final_loss, sec, phash in sorted(results):
        print(f"seed {seed}: final_loss={final_loss:.6g} "
              f"epoch_seconds={sec:.6g} params={phash} -> {ckpt}")
    return 0


def _render_overrides(text: str, cfg) -> str:
    """Fold CLI scalar overrides back into the [train] section so the
    config text stored in checkpoints matches what actually ran."""
    base = parse_config(text)
    wanted = {
        "epochs": cfg.train.epochs,
        "optimizer": cfg.train.optimizer,
        "lr0": cfg.train.lr0,
    }
    current = {
        "epochs": base.train.epochs,
        "optimizer": base.train.optimizer,
        "lr0": base.train.lr0,
    }
    if wanted == current:
        return text
    changed = {k: v for k, v in wanted.items() if v != current[k]}
    keys = "|".join(changed)
    new = re.sub(
        rf"^({keys})\s*=.*$",
        lambda match: f"{match.group(1)} = {changed[match.group(1)]}",
        text,
        flags=re.M,
    )
    check = parse_config(new)
    still_missing = [
        k for k, v in changed.items() if getattr(check.train, k) != v
    ]
    if still_missing:
        extra = "".join(f"{k} = {changed[k]}\n" for k in still_missing)
        new = new.replace("[train]", f"[train]\n{extra}", 1)
        parse_config(new)
    return new


def _select_split(cfg, ds, which: str):
    train_idx, test_idx = split_indices(ds.n_samples, cfg.eval.test_count,
                                        cfg.eval.split_seed)
    if which == "train":
        return train_idx
    if which == "test":
        return test_idx
    return np.arange(ds.n_samples)


def cmd_eval(args) -> int:
    ds = read_dataset(args.data)
    model, config_text, attrs = load_checkpoint(args.checkpoint, ds)
    cfg = parse_config(config_text)
    idx = _select_split(cfg, ds, args.split)
    if idx.size == 0:
        raise DataError(f"split {args.split!r} selects no functions")
    report = evaluate_model(
        model, ds.U[idx], ds.scalar_targets()[idx], ds.Y,
        dataset_name=ds.name, model_name=os.path.basename(args.checkpoint),
    )
    if args.out:
        report.to_csv(args.out)
    if args.mse_out:
        report.spatial_mse_csv(args.mse_out, ds.Y)
    _write_manifest(
        (args.out or args.checkpoint) + ".eval-manifest.txt",
        config_text, attrs.get("seed", "?"),
    )
    print(report.summary_line())
    return 0


def cmd_export_basis(args) -> int:
    ds = read_dataset(args.data)
    model, config_text, attrs = load_checkpoint(args.checkpoint, ds)
    columns = [int(tok) for tok in args.columns.replace(",", " ").split()]
    if not columns:
        raise ConfigError("--columns must list at least one trunk column")
    try:
        values = [export_basis(model, ds.Y, c) for c in columns]
    except IndexError as exc:
        raise ConfigError(str(exc)) from None
    with open(args.out, "w", encoding="utf-8") as fh:
        head = ",".join(f"y{j + 1}" for j in range(ds.d_v))
        cols = ",".join(f"col{c}" for c in columns)
        fh.write(f"{head},{cols}\n")
        for i in range(ds.n_y):
            coords = ",".join(f"{c:.17g}" for c in ds.Y[i])
            vals = ",".join(f"{v[i]:.17g}" for v in values)
            fh.write(f"{coords},{vals}\n")
    _write_manifest(args.out + ".manifest.txt", config_text, attrs.get("seed", "?"))
    print(f"wrote {args.out}: {len(columns)} column(s) over {ds.n_y} locations")
    return 0


def cmd_inspect(args) -> int:
    with open(args.path, "rb") as fh:
        magic = fh.read(8)
    if magic == b"ODNSET01":
        ds = read_dataset(args.path)
        print(f"ODN1 dataset: N={ds.n_samples} N_x={ds.n_x} N_y={ds.n_y} "
              f"d_u={ds.d_u} d_v={ds.d_v} c={ds.n_components}")
        for k in sorted(ds.metadata):
            print(f"  {k}={ds.metadata[k]}")
        return 0
    if magic == b"ODNMDL01":
        config_text, attrs, arrays = read_checkpoint_raw(args.path)
        print(f"ODM1 checkpoint: {len(arrays)} arrays")
        for k in sorted(attrs):
            print(f"  {k}={attrs[k]}")
        total = sum(a.size for a in arrays.values())
        print(f"  total_values={total}")
        return 0
    raise DataError(f"{args.path}: unknown magic {magic!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odnet",
        description="Ensemble DeepONet toolkit: dataset generation, training, "
                    "evaluation, and basis export.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a dataset file from a config")
    g.add_argument("config")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=None, help="override sample count")
    g.add_argument("--seed", type=int, default=None, help="override generator seed")
    g.add_argument("--force", action="store_true", help="overwrite existing output")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train one checkpoint per seed")
    t.add_argument("config")
    t.add_argument("data")
    t.add_argument("--out", required=True, help="output prefix for checkpoints")
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--lr0", type=float, default=None)
    t.add_argument("--optimizer", default=None, choices=("adam", "adamw"))
    t.add_argument("--seeds", default="", help="comma-separated seed list")
    t.add_argument("--jobs", type=int, default=1, help="parallel seed processes")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    e.add_argument("checkpoint")
    e.add_argument("data")
    e.add_argument("--split", default="test", choices=("train", "test", "all"))
    e.add_argument("--out", default="", help="per-function error CSV")
    e.add_argument("--mse-out", default="", help="spatial MSE CSV")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("export-basis", help="dump trunk basis columns as CSV")
    x.add_argument("checkpoint")
    x.add_argument("data")
    x.add_argument("--columns", required=True, help="comma-separated column list")
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export_basis)

    i = sub.add_parser("inspect", help="print header/metadata of ODN1/ODM1 files")
    i.add_argument("path")
    i.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ShapeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except OdnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
