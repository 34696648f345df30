"""Command-line entry point: ``limbhar <subcommand> [options]``.

Subcommands: synth, ingest, train, crossval, gradcheck, report.  Every
command reads an optional YAML config (``--config``); flags override it.

Exit codes: 0 ok, 1 unexpected error, 2 config/contract error, 3 data
error, 4 numeric error, 5 acceptance (gradient check) failure, 6 refused to
overwrite an existing output directory.
"""

from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import checks, reporting
from .config import RunConfig, dump_config, load_config
from .dataset import FILE_PATTERN, Dataset, load_csv_dir, make_folds, synth_generate, write_csv_dir
from .errors import ConfigError, DataError, HarError
from .features import apply_norm, extract_dataset, fit_norm
from .metrics import confusion, metrics, render_confusion
from .models import ArchKind, ModelSpec, build
from .records import MODALITIES
from .training import run_crossval, train_one

log = logging.getLogger("limbhar")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_ACCEPTANCE = 5
EXIT_REFUSED = 6


class Refused(Exception):
    pass


# ------------------------------------------------------------------ config


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    train_over = {}
    if getattr(args, "seed", None) is not None:
        train_over["seed"] = args.seed
    if getattr(args, "max_epochs", None) is not None:
        train_over["max_epochs"] = args.max_epochs
    if getattr(args, "precision", None) is not None:
        train_over["precision"] = args.precision
    if train_over:
        try:
            cfg = replace(cfg, train=replace(cfg.train, **train_over))
        except HarError as exc:
            raise ConfigError(f"flags: {exc}") from None
    if getattr(args, "data", None):
        cfg = replace(cfg, data=replace(cfg.data, path=args.data))
    if getattr(args, "modality", None):
        mods = tuple(dict.fromkeys(args.modality))
        cfg = replace(cfg, data=replace(cfg.data, modalities=mods))
    if getattr(args, "arch", None):
        wanted = [ArchKind.parse(a) for a in args.arch]
        known = {m.kind: m for m in cfg.models}
        cfg = replace(cfg, models=tuple(known.get(k, ModelSpec(k)) for k in dict.fromkeys(wanted)))
    if getattr(args, "out", None):
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def load_dataset(cfg: RunConfig, modality: str) -> Dataset:
    if cfg.data.path:
        ds = load_csv_dir(cfg.data.path, modality, cfg.data.activities, cfg.data.channels)
    else:
        ds = synth_generate(replace(cfg.synth, modality=modality))
    if len(ds) == 0:
        raise DataError(f"no {modality} recordings available")
    return ds


def _sized(spec: ModelSpec, ds: Dataset) -> ModelSpec:
    # the data defines the label space; a configured n_classes is only a default
    if spec.n_classes != len(ds.activity_names):
        log.info("%s: n_classes %d -> %d to match the data", spec.kind.value, spec.n_classes, len(ds.activity_names))
    return replace(spec, n_classes=len(ds.activity_names))


def _activity_names(ds: Dataset, n_classes: int) -> list:
    names = list(ds.activity_names)
    return names + [str(i) for i in range(len(names), n_classes)]


def _prepare_out(path: Path, force: bool) -> None:
    if path.exists() and any(path.iterdir()):
        if not force:
            raise Refused(f"{path} exists and is not empty; pass --force to overwrite")
        for child in path.iterdir():
            if child.is_dir():
                shutil.rmtree(child)
            else:
                child.unlink()
    path.mkdir(parents=True, exist_ok=True)


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.out or "data")
    if out.exists() and any(out.iterdir()):
        if not args.force:
            raise Refused(f"{out} exists and is not empty; pass --force to overwrite")
        for p in out.iterdir():
            if p.is_file() and FILE_PATTERN.match(p.name):
                p.unlink()
    for modality in cfg.data.modalities:
        ds = synth_generate(replace(cfg.synth, modality=modality))
        write_csv_dir(ds, out)
        print(f"{modality}: {len(ds.subjects)} subjects, {len(ds.activity_names)} activities, {len(ds)} recordings -> {out}")
    print("subjects: " + " ".join(ds.subjects))
    return EXIT_OK


def cmd_ingest(args) -> int:
    cfg = resolve_config(args)
    if not cfg.data.path:
        raise ConfigError("ingest needs a data directory (--data or data.path)")
    summary = {}
    for modality in cfg.data.modalities:
        ds = load_csv_dir(cfg.data.path, modality, cfg.data.activities, cfg.data.channels)
        info = ds.summary()
        if len(ds):
            windows = extract_dataset(ds.sequences, cfg.features)
            info["sample_rates_hz"] = sorted({s.sample_rate_hz for s in ds.sequences})
            info["n_windows"] = len(windows)
            info["window_shape"] = list(windows.X.shape[1:])
        summary[modality] = info
        print(f"{modality}: {info['n_subjects']} subjects, {info['n_recordings']} recordings, {info.get('n_windows', 0)} windows")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        reporting.write_json(out, summary)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    if len(cfg.models) != 1 or len(cfg.data.modalities) != 1:
        raise ConfigError("train runs one architecture on one modality; pass --arch and --modality")
    spec, modality = cfg.models[0], cfg.data.modalities[0]
    ds = load_dataset(cfg, modality)
    plan = make_folds(ds.subjects, cfg.folds.k, cfg.folds.n_val, cfg.folds.seed)
    if not 0 <= args.fold < plan.k:
        raise ConfigError(f"--fold must be in [0, {plan.k})")
    fold = plan.folds[args.fold]
    windows = extract_dataset(ds.sequences, cfg.features)
    train, val, test = (windows.of_subjects(s) for s in (fold.train, fold.val, fold.test))
    stats = fit_norm(train)
    train, val, test = (apply_norm(s, stats) for s in (train, val, test))
    spec = replace(_sized(spec, ds), input_shape=windows.X.shape[1:])
    fold_cfg = replace(cfg.train, seed=cfg.train.seed + fold.index)
    model = build(spec, seed=fold_cfg.seed).astype(fold_cfg.precision)
    model, history = train_one(model, train, val, fold_cfg, on_epoch=lambda r: log.info("epoch %d val_loss %.5f", r.epoch, r.val_loss))
    report = metrics(confusion(model.predict(test.X), test.y, spec.n_classes))
    out = Path(cfg.output_dir) / reporting.pair_name(spec.kind.value, modality) / f"fold{fold.index}"
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "model.ckpt")
    reporting.write_history_csv(out / "history.csv", history.to_dict())
    reporting.write_json(out / "metrics.json", {"fold": fold.index, "test_subjects": list(fold.test), "val_subjects": list(fold.val), "train_subjects": list(fold.train), "error": None, "metrics": report.to_dict()})
    render_confusion(report.confusion, _activity_names(ds, spec.n_classes), out / "confusion.svg", f"{spec.kind.value} / {modality} fold {fold.index}")
    print(f"{spec.kind.value}/{modality} fold {fold.index}: accuracy {report.accuracy:.4f} macro-F1 {report.macro_f1:.4f} (best epoch {history.best_epoch}) -> {out}")
    return EXIT_OK


def cmd_crossval(args) -> int:
    cfg = resolve_config(args)
    out = Path(cfg.output_dir)
    _prepare_out(out, args.force)
    (out / "config.yaml").write_text(dump_config(cfg), encoding="utf-8")
    workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
    reports, exit_code = [], EXIT_OK
    for modality in cfg.data.modalities:
        ds = load_dataset(cfg, modality)
        plan = make_folds(ds.subjects, cfg.folds.k, cfg.folds.n_val, cfg.folds.seed)
        plan.save(out / f"folds_{modality}.json")
        windows = extract_dataset(ds.sequences, cfg.features)
        for spec in (_sized(m, ds) for m in cfg.models):
            log.info("cross-validating %s on %s (%d windows)", spec.kind.value, modality, len(windows))
            rep = run_crossval(ds, spec, cfg.train, plan, cfg.features, workers=workers, windows=windows)
            d = rep.to_dict()
            reports.append(d)
            reporting.write_pair(out, d, _activity_names(ds, spec.n_classes))
            if rep.aggregate is None:
                code = rep.folds[0].error_code or EXIT_ERROR
                log.error("%s/%s: every fold failed", spec.kind.value, modality)
                exit_code = exit_code or code
            else:
                print(f"{spec.kind.value:9s} {modality:6s} macro-F1 {reporting.format_cell(d['aggregate'])}")
    rows = reporting.write_comparison(out, reports)
    print(reporting.format_table(rows))
    return exit_code


def cmd_gradcheck(args) -> int:
    try:
        results = checks.run_suite(seeds=range(args.seeds), eps=args.eps, only=args.only)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        failed += not r.passed
        print(f"{r.name:{width}s}  max_rel_err {r.max_rel_error:.3e}  max_abs_err {r.max_abs_error:.1e}  {'PASS' if r.passed else 'FAIL'}")
    print(f"{len(results) - failed}/{len(results)} checks below {checks.TOLERANCE:g} over {args.seeds} seeds")
    return EXIT_ACCEPTANCE if failed else EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.reports)
    reports = reporting.read_reports(out)
    if not reports:
        raise DataError(f"no */report.json under {out}")
    for rep in reports:
        reporting.write_pair(out, rep, rep.get("activities") or [str(i) for i in range(rep["spec"]["n_classes"])])
    print(reporting.format_table(reporting.write_comparison(out, reports)))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _add_common(p, data=True, models=True):
    p.add_argument("--config", metavar="FILE", help="YAML run configuration (all sections optional)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    if data:
        p.add_argument("--data", metavar="DIR", help="directory of joint-angle CSVs (overrides data.path; default: synthetic data)")
        p.add_argument("--modality", action="append", choices=MODALITIES, help="modality to use; repeat for several (overrides data.modalities)")
    if models:
        p.add_argument("--arch", action="append", metavar="KIND", help="architecture (DNN, CNN, CNN_LSTM, LSTM_CNN, LSTM, LSTM_AE); repeatable")
        p.add_argument("--seed", type=int, help="training seed (overrides train.seed)")
        p.add_argument("--max-epochs", type=int, help="overrides train.max_epochs")
        p.add_argument("--precision", choices=("float64", "float32"), help="training precision (overrides train.precision)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="limbhar", description="Upper-limb activity recognition from joint-angle windows.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write the synthetic dataset as CSV files")
    _add_common(p, models=False)
    p.add_argument("--out", metavar="DIR", help="output directory (default: data)")
    p.add_argument("--force", action="store_true", help="replace recordings in a non-empty output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate a CSV directory and summarise it")
    _add_common(p, models=False)
    p.add_argument("--out", metavar="FILE", help="also write the summary as JSON")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train one architecture on one fold")
    _add_common(p)
    p.add_argument("--fold", type=int, default=0, help="fold index to train (default 0)")
    p.add_argument("--out", metavar="DIR", help="report root (overrides output.dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("crossval", help="cross-validate every configured architecture and modality")
    _add_common(p)
    p.add_argument("--out", metavar="DIR", help="report root (overrides output.dir)")
    p.add_argument("--workers", type=int, help="parallel fold workers (default: available cores)")
    p.add_argument("--force", action="store_true", help="clear a non-empty report directory first")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every op and architecture")
    p.add_argument("--seeds", type=int, default=10, help="seeds per case (default 10)")
    p.add_argument("--eps", type=float, default=1e-5, help="central-difference step (default 1e-5)")
    p.add_argument("--only", action="append", metavar="CASE", help="run only this case (op name or arch:KIND); repeatable")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="rebuild comparison table and heatmaps from saved reports")
    p.add_argument("reports", metavar="DIR", help="report root written by crossval")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Refused as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except HarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
