"""Operator entry point: synth, preprocess, train, run-suite, predict, serve.

Configuration resolves in three layers: built-in defaults, then an optional
JSON config file (``--config``), then command-line flags.  The log level
comes from the ``GRAPHODEX_LOG`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from graphodex import aggregate, figures, imaging, synth
from graphodex.errors import (
    DataError,
    EXIT_OK,
    GraphodexError,
    IOFailure,
    UsageError,
)
from graphodex.experiments import render_report, run_suite
from graphodex.model import (
    ArchConfig,
    Hyper,
    build_network,
    load_checkpoint,
    save_checkpoint,
    train,
)
from graphodex.patching import (
    PatchSpec,
    balance_forms,
    build_form_patches,
    build_patch_dataset,
    child_rng,
    load_manifest,
)

log = logging.getLogger("graphodex")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems map to exit code 1, not 2
        raise UsageError(message)


def _add_common(p: _Parser) -> None:
    p.add_argument("--seed", type=int, default=42, help="global random seed")
    p.add_argument("--config", type=Path, default=None,
                   help="JSON config file with spec/hyper/arch sections")


def _add_spec_flags(p: _Parser) -> None:
    g = p.add_argument_group("patch spec overrides")
    g.add_argument("--spec.count", dest="spec_count", type=int, default=None,
                   help="patches per form")
    g.add_argument("--spec.patch-size", dest="spec_patch_size", type=int, default=None,
                   help="square source patch side in pixels")
    g.add_argument("--spec.patch-height", dest="spec_patch_height", type=int, default=None)
    g.add_argument("--spec.patch-width", dest="spec_patch_width", type=int, default=None)
    g.add_argument("--spec.downscale", dest="spec_downscale", type=int, default=None,
                   help="integer box-average downscale factor")
    g.add_argument("--spec.min-ink-ratio", dest="spec_min_ink_ratio", type=float,
                   default=None)


def _add_hyper_flags(p: _Parser) -> None:
    g = p.add_argument_group("training hyper-parameter overrides")
    g.add_argument("--hyper.epochs", dest="hyper_epochs", type=int, default=None)
    g.add_argument("--hyper.batch-size", dest="hyper_batch_size", type=int, default=None)
    g.add_argument("--hyper.rho", dest="hyper_rho", type=float, default=None)
    g.add_argument("--hyper.epsilon", dest="hyper_epsilon", type=float, default=None)


def _add_arch_flags(p: _Parser) -> None:
    g = p.add_argument_group("architecture overrides")
    g.add_argument("--arch.filters", dest="arch_filters", type=str, default=None,
                   help="four comma-separated conv filter counts")
    g.add_argument("--arch.dense-units", dest="arch_dense_units", type=int, default=None)
    g.add_argument("--arch.dropouts", dest="arch_dropouts", type=str, default=None,
                   help="three comma-separated dropout rates")
    g.add_argument("--arch.padding", dest="arch_padding", type=str, default=None,
                   choices=("same", "valid"))


def _load_config_file(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IOFailure(f"cannot read config file {path}: {exc}") from exc
    except ValueError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc


def _resolve_spec(args, cfg: dict, base: dict | None = None) -> PatchSpec:
    merged = dict(base or {})
    merged.update(cfg.get("spec", {}))
    if args.spec_count is not None:
        merged["count"] = args.spec_count
    if args.spec_patch_size is not None:
        merged["patch_height"] = merged["patch_width"] = args.spec_patch_size
    if args.spec_patch_height is not None:
        merged["patch_height"] = args.spec_patch_height
    if args.spec_patch_width is not None:
        merged["patch_width"] = args.spec_patch_width
    if args.spec_downscale is not None:
        merged["downscale_factor"] = args.spec_downscale
    if args.spec_min_ink_ratio is not None:
        merged["min_ink_ratio"] = args.spec_min_ink_ratio
    return PatchSpec(**merged)


def _resolve_hyper(args, cfg: dict, seed: int) -> Hyper:
    merged = dict(cfg.get("hyper", {}))
    if args.hyper_epochs is not None:
        merged["epochs"] = args.hyper_epochs
    if args.hyper_batch_size is not None:
        merged["batch_size"] = args.hyper_batch_size
    if args.hyper_rho is not None:
        merged["rho"] = args.hyper_rho
    if args.hyper_epsilon is not None:
        merged["epsilon"] = args.hyper_epsilon
    merged.setdefault("seed", seed)
    return Hyper(**merged)


def _resolve_arch(args, cfg: dict, spec: PatchSpec) -> ArchConfig:
    merged = dict(cfg.get("arch", {}))
    if args.arch_filters is not None:
        merged["conv_filters"] = [int(v) for v in args.arch_filters.split(",")]
    if args.arch_dense_units is not None:
        merged["dense_units"] = args.arch_dense_units
    if args.arch_dropouts is not None:
        merged["dropout_rates"] = [float(v) for v in args.arch_dropouts.split(",")]
    if args.arch_padding is not None:
        merged["padding"] = args.arch_padding
    merged["conv_filters"] = tuple(merged.get("conv_filters", (64, 128, 64, 128)))
    merged["dropout_rates"] = tuple(merged.get("dropout_rates", (0.4, 0.6, 0.5)))
    merged["input_hw"] = spec.out_hw
    return ArchConfig(**merged)


def _ensure_out(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create output directory {path}: {exc}") from exc
    return path


# -- subcommands -------------------------------------------------------------


def cmd_synth(args) -> int:
    out = _ensure_out(args.out)
    records, manifest_path = synth.generate_corpus(
        out,
        forms_per_class=args.forms_per_class,
        seed=args.seed,
        page_hw=(args.page_height, args.page_width),
    )
    log.info("wrote %d forms under %s", len(records), out)
    print(f"generated {len(records)} forms; manifest: {manifest_path}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = _load_config_file(args.config)
    spec = _resolve_spec(args, cfg)
    records = load_manifest(args.manifest)
    if not records:
        raise UsageError(f"manifest {args.manifest} lists no forms")
    out = _ensure_out(args.out)
    patches_dir = _ensure_out(out / "patches")

    balanced = balance_forms(
        records, child_rng(args.seed, "balance"), by_writer=any(r.writer_id for r in records)
    )
    excluded = sorted({r.form_id for r in records} - {r.form_id for r in balanced})
    index_rows = []
    failures = []
    kept = 0
    for record in balanced:
        try:
            fp = build_form_patches(record, spec, args.seed)
        except GraphodexError as exc:
            failures.append({"form_id": record.form_id, "error": str(exc)})
            continue
        rel = f"patches/{record.form_id}.npy"
        np.save(patches_dir / f"{record.form_id}.npy", fp.patches)
        for i, (x, y) in enumerate(fp.origins):
            index_rows.append(
                [record.form_id, rel, i, int(x), int(y), record.language, record.gender]
            )
        kept += 1
    index_path = out / "index.csv"
    with index_path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["form_id", "patch_file", "patch_index", "origin_x", "origin_y",
             "language", "gender"]
        )
        w.writerows(index_rows)
    summary = {
        "forms_kept": kept,
        "excluded_for_balance": excluded,
        "sparse_failures": failures,
        "patches_total": len(index_rows),
        "spec": asdict(spec),
        "seed": args.seed,
    }
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(
        f"kept {kept} forms ({len(index_rows)} patches); "
        f"excluded for balance: {len(excluded)}; failures: {len(failures)}"
    )
    if failures:
        for f in failures:
            print(f"  failed {f['form_id']}: {f['error']}", file=sys.stderr)
        raise DataError(f"{len(failures)} forms failed preprocessing")
    return EXIT_OK


def _train_on_manifest(records, spec, hyper, arch, seed, val_fraction):
    balanced = balance_forms(
        records, child_rng(seed, "balance"), by_writer=any(r.writer_id for r in records)
    )
    dataset = build_patch_dataset(balanced, spec, seed)
    ids = [fp.record.form_id for fp in dataset.forms]
    order = child_rng(seed, "train-val").permutation(len(ids))
    n_val = max(1, int(round(val_fraction * len(ids)))) if val_fraction > 0 else 0
    val_ids = [ids[i] for i in order[:n_val]]
    train_ids = [ids[i] for i in order[n_val:]]
    if not train_ids:
        raise DataError("no training forms left after the validation split")
    train_x, train_y = dataset.stack(train_ids)
    val_x, val_y = dataset.stack(val_ids) if val_ids else (None, None)
    net = build_network(arch, seed=seed)
    history = train(net, train_x, train_y, val_x, val_y, hyper)
    return net, history, dataset


def cmd_train(args) -> int:
    cfg = _load_config_file(args.config)
    spec = _resolve_spec(args, cfg)
    hyper = _resolve_hyper(args, cfg, args.seed)
    arch = _resolve_arch(args, cfg, spec)
    records = load_manifest(args.manifest)
    if not records:
        raise UsageError(f"manifest {args.manifest} lists no forms")
    out = _ensure_out(args.out)
    net, history, _ = _train_on_manifest(
        records, spec, hyper, arch, args.seed, args.val_fraction
    )
    meta = {
        "spec": asdict(spec),
        "languages": sorted({r.language for r in records}),
        "seed": args.seed,
    }
    ckpt = out / "checkpoint.gdx"
    save_checkpoint(net, ckpt, meta=meta)
    (out / "history.json").write_text(
        json.dumps(history.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    figures.render_history_figure(history, out / "training_curves.png")
    final = history.train_accuracy[-1]
    print(f"trained {hyper.epochs} epochs; final train accuracy {final:.3f}")
    print(f"checkpoint: {ckpt}")
    return EXIT_OK


def cmd_run_suite(args) -> int:
    cfg = _load_config_file(args.config)
    spec = _resolve_spec(args, cfg)
    hyper = _resolve_hyper(args, cfg, args.seed)
    arch = _resolve_arch(args, cfg, spec)
    records = load_manifest(args.manifest)
    if not records:
        raise UsageError(f"manifest {args.manifest} lists no forms")
    out = _ensure_out(args.out)
    dataset = build_patch_dataset(records, spec, args.seed)
    reports = run_suite(
        records,
        dataset,
        spec,
        hyper,
        arch,
        folds=args.folds,
        seed=args.seed,
        same_writers=not args.form_level,
    )
    metadata = {
        "spec": asdict(spec),
        "hyper": asdict(hyper),
        "arch": arch.to_dict(),
        "folds": args.folds,
        "manifest_forms": len(records),
    }
    paths = render_report(reports, out, seed=args.seed, metadata=metadata)
    fig_paths = figures.render_suite_figures(reports, out)
    for rep in reports:
        mv = rep.stats["majority_vote"]["avg"]
        asx = rep.stats["average_softmax"]["avg"]
        print(
            f"{rep.experiment:15s} {rep.train_label:5s} -> {rep.test_label:5s}  "
            f"majority {100 * mv:6.2f}%  avg-softmax {100 * asx:6.2f}%"
        )
    for p in (*paths.values(), *fig_paths.values()):
        print(f"wrote {p}")
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = _load_config_file(args.config)
    net, meta = load_checkpoint(args.checkpoint)
    spec = _resolve_spec(args, cfg, base=meta.get("spec"))
    if spec.out_hw != net.arch.input_hw:
        raise UsageError(
            f"patch spec yields {spec.out_hw} patches but the checkpoint "
            f"expects {net.arch.input_hw}"
        )
    gray = imaging.load_form_image(args.image)
    mask = imaging.binarize(gray)
    y0, y1, x0, x1 = imaging.ink_bbox(mask, imaging.DEFAULT_CROP_MARGIN)
    from graphodex.patching import sample_patches

    patches = sample_patches(
        gray[y0:y1, x0:x1],
        mask[y0:y1, x0:x1],
        spec,
        child_rng(args.seed, "predict", str(args.image)),
        form_id=Path(args.image).stem,
    )
    pixels = np.stack([p.pixels for p in patches])
    p_female = net.predict_proba(pixels)[:, 1]
    print(f"form: {args.image}")
    if args.language:
        print(f"language: {args.language}")
    print(f"patches: {len(patches)}")
    methods = aggregate.METHODS if args.method == "both" else (args.method,)
    for method in methods:
        fn = aggregate.majority_vote if method == "majority_vote" else aggregate.average_softmax
        fp = fn(p_female, form_id=Path(args.image).stem)
        print(
            f"{method}: {fp.decision}  "
            f"(female votes {fp.positive_votes}/{len(patches)}, "
            f"mean p_female {fp.mean_p_female:.4f})"
        )
    return EXIT_OK


def cmd_serve(args) -> int:
    from graphodex.service import BaselineStore, EventLog, create_app

    records = load_manifest(args.manifest)
    if not records:
        raise UsageError(f"manifest {args.manifest} lists no forms")
    model_stats = None
    if args.model_report:
        try:
            doc = json.loads(Path(args.model_report).read_text(encoding="utf-8"))
        except OSError as exc:
            raise IOFailure(f"cannot read model report: {exc}") from exc
        model_stats = {
            r["name"]: r["stats"] for r in doc.get("reports", [])
        }
    rng = np.random.default_rng(args.seed) if args.seed is not None else None
    store = BaselineStore(records, EventLog(args.log), rng=rng)
    app = create_app(store, ui_dir=args.ui_dir, model_stats=model_stats)
    host, _, port = args.addr.rpartition(":")
    if not host or not port.isdigit():
        raise UsageError(f"--addr must look like host:port, got {args.addr!r}")
    import uvicorn

    log.info("serving on %s", args.addr)
    uvicorn.run(app, host=host, port=int(port), log_level="warning")
    return EXIT_OK


# -- argument wiring ---------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(
        prog="graphodex",
        description="Patch-based handwriting gender classification pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic two-script corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--forms-per-class", type=int, default=20,
                   help="forms per gender (even; split across both scripts)")
    p.add_argument("--page-height", type=int, default=1200)
    p.add_argument("--page-width", type=int, default=900)
    _add_common(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("preprocess", help="build a balanced patch archive")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)
    _add_spec_flags(p)
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("train", help="train one classifier and checkpoint it")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--val-fraction", type=float, default=0.1)
    _add_common(p)
    _add_spec_flags(p)
    _add_hyper_flags(p)
    _add_arch_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("run-suite", help="run the seven-configuration cross-validation")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--form-level", action="store_true",
                   help="ignore writer links when splitting")
    _add_common(p)
    _add_spec_flags(p)
    _add_hyper_flags(p)
    _add_arch_flags(p)
    p.set_defaults(fn=cmd_run_suite)

    p = sub.add_parser("predict", help="classify one form image with a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--language", type=str, default=None, choices=("HE", "EN"))
    p.add_argument("--method", type=str, default="both",
                   choices=("both", *aggregate.METHODS))
    _add_common(p)
    _add_spec_flags(p)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("serve", help="run the human-examiner baseline service")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--addr", type=str, default="127.0.0.1:8000")
    p.add_argument("--log", type=Path, default=Path("guess_events.ndjson"),
                   help="append-only event log path")
    p.add_argument("--ui-dir", type=Path, default=None,
                   help="built examiner UI bundle to serve at /")
    p.add_argument("--model-report", type=Path, default=None,
                   help="suite report.json for the model comparison in /api/stats")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", type=Path, default=None)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("GRAPHODEX_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except GraphodexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
