"""Command-line entry point wiring data generation, training, and evaluation.

Every subcommand prints a single JSON summary line with the fully resolved
configuration and the primary results, and exits 0 on success, 1 on usage
errors, 2 on runtime failures. Flags may also be supplied via a JSON file
with ``--config``; explicit flags win. ``CROSSMODAL_OUT`` sets the default
output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .encoder import EncoderConfig, init_params
from .evaluation import (EvalReport, eer, matching_accuracy, recall_at_k,
                         roc_auc, score_pairs, verify, write_report_json,
                         write_roc_csv, write_scores_csv)
from .preprocess import StftConfig
from .projection import project_2d, write_projection_csv
from .plotting import write_roc_svg, write_scatter_svg
from .synth import generate_dataset, load_manifest
from .trainer import (PAPER_BATCH_SIZE, PAPER_EPOCHS, PAPER_LR,
                      PAPER_WEIGHT_DECAY, TrainConfig, export_embeddings,
                      read_embeddings_csv, train, write_embeddings_csv)

OUT_ENV = "CROSSMODAL_OUT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _default_out() -> str:
    return os.environ.get(OUT_ENV, ".")


def _require_file(path, kind: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"missing {kind}: {p}")
    return p


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True, separators=(",", ":")))


def _encoder_config(args) -> EncoderConfig:
    channels = tuple(int(c) for c in str(args.channels).split(",") if c)
    return EncoderConfig(input_size=args.input_size,
                         channels_per_stage=channels,
                         embed_dim=args.embed_dim)


def _stft_config(args) -> StftConfig:
    return StftConfig(window_len_s=args.stft_window_s, hop_s=args.stft_hop_s,
                      fft_size=args.stft_fft, clip_len_s=args.clip_len_s)


def _add_model_flags(p: _Parser) -> None:
    p.add_argument("--input-size", type=int, default=32)
    p.add_argument("--channels", default="16,32,64",
                   help="comma-separated conv channels per stage")
    p.add_argument("--embed-dim", type=int, default=128)
    p.add_argument("--stft-window-s", type=float, default=0.025)
    p.add_argument("--stft-hop-s", type=float, default=0.010)
    p.add_argument("--stft-fft", type=int, default=512)
    p.add_argument("--clip-len-s", type=float, default=3.0)
    p.add_argument("--paper-faithful", action="store_true",
                   help="feed raw spectrogram magnitudes (no log compression)")


def build_parser() -> _Parser:
    parser = _Parser(prog="crossmodal",
                     description="Cross-modal face/voice embedding toolkit")
    parser.add_argument("--config", default=None,
                        help="JSON file of flag defaults for the subcommand")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("gen-data", help="render a synthetic paired corpus")
    p.add_argument("--identities", type=int, required=True)
    p.add_argument("--per-modality", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--img-size", type=int, default=64)
    p.add_argument("--snr-db", type=float, default=10.0)

    p = sub.add_parser("train", help="train encoder + head on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=45)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=5e-5)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sampler", choices=("class_balanced", "uniform"),
                   default="class_balanced")
    p.add_argument("--classes-per-batch", type=int, default=9)
    p.add_argument("--images-per-class", type=int, default=3)
    p.add_argument("--audio-per-class", type=int, default=2)
    p.add_argument("--center-mode", choices=("in_batch", "ema"), default="in_batch")
    p.add_argument("--ema-alpha", type=float, default=0.5)
    p.add_argument("--paper-hparams", action="store_true",
                   help="lr 0.05, weight decay 5e-5, 100 epochs, batch 45")
    _add_model_flags(p)

    p = sub.add_parser("eval-verify", help="cross-modal verification (AUC/EER)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test_unseen_unheard")
    p.add_argument("--pairs", type=int, default=2000)
    p.add_argument("--stratify", choices=("random", "G", "N", "A", "GNA"),
                   default="random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--paper-faithful", action="store_true")

    p = sub.add_parser("eval-match", help="1:N forced matching accuracy")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test_unseen_unheard")
    p.add_argument("--direction", choices=("voice_to_face", "face_to_voice"),
                   default="voice_to_face")
    p.add_argument("--gallery-sizes", default="2,4,6,8,10")
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--paper-faithful", action="store_true")

    p = sub.add_parser("eval-retrieve", help="R@K retrieval evaluation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test_seen_heard",
                   help="query split")
    p.add_argument("--gallery-split", default="all",
                   help="gallery split (default: every record)")
    p.add_argument("--direction", choices=("voice_to_face", "face_to_voice"),
                   default="voice_to_face")
    p.add_argument("--k", default="1,5,10")
    p.add_argument("--gender-filter", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--paper-faithful", action="store_true")

    p = sub.add_parser("export-embed", help="dump embeddings for a split to CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="all")
    p.add_argument("--out", default=None)
    p.add_argument("--paper-faithful", action="store_true")

    p = sub.add_parser("plot-roc", help="render an SVG ROC from a sweep CSV")
    p.add_argument("--roc", required=True, help="CSV: far,frr,threshold")
    p.add_argument("--out", default=None)

    p = sub.add_parser("project-2d", help="PCA-project an embeddings CSV to 2-D")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--svg", default=None)

    return parser


def _apply_config_file(parser: _Parser, argv: list) -> list:
    """Fold ``--config file.json`` values in as defaults (explicit flags win)."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise UsageError("--config requires a path")
    cfg_path = _require_file(argv[i + 1], "config file")
    with open(cfg_path) as fh:
        values = json.load(fh)
    if not isinstance(values, dict):
        raise UsageError("config file must hold a JSON object")
    rest = argv[:i] + argv[i + 2:]
    extra = []
    for key, val in sorted(values.items()):
        flag = "--" + key.replace("_", "-")
        if flag in rest:
            continue
        if isinstance(val, bool):
            if val:
                extra.append(flag)
        else:
            extra.extend([flag, str(val)])
    # Keep the subcommand first, then injected defaults, then explicit flags.
    return rest[:1] + extra + rest[1:]


def _load_table(args, split: str):
    manifest = load_manifest(_require_file(args.manifest, "manifest"))
    _require_file(args.checkpoint, "checkpoint")
    enc_cfg, params, _, _ = load_checkpoint(args.checkpoint)
    compression = "raw" if getattr(args, "paper_faithful", False) else "log1p"
    table = export_embeddings(params, manifest, split, enc_cfg,
                              compression=compression)
    return manifest, enc_cfg, params, table, compression


def _cmd_gen_data(args) -> dict:
    out = Path(args.out or _default_out())
    manifest = generate_dataset(args.identities, args.per_modality, args.seed,
                                out, img_size=args.img_size, snr_db=args.snr_db)
    return {"command": "gen-data", "seed": args.seed,
            "config": {"identities": args.identities,
                       "per_modality": args.per_modality,
                       "img_size": args.img_size, "snr_db": args.snr_db,
                       "out": str(out)},
            "records": len(manifest.records),
            "outputs": {"manifest": str(out / "manifest.csv")}}


def _cmd_train(args) -> dict:
    manifest = load_manifest(_require_file(args.manifest, "manifest"))
    out = Path(args.out or _default_out())
    if args.paper_hparams:
        args.lr = PAPER_LR
        args.weight_decay = PAPER_WEIGHT_DECAY
        args.epochs = PAPER_EPOCHS
        args.batch_size = PAPER_BATCH_SIZE
    enc_cfg = _encoder_config(args)
    compression = "raw" if args.paper_faithful else "log1p"
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                      lr=args.lr, weight_decay=args.weight_decay, lam=args.lam,
                      seed=args.seed, sampler=args.sampler,
                      classes_per_batch=args.classes_per_batch,
                      images_per_class=args.images_per_class,
                      audio_per_class=args.audio_per_class,
                      center_mode=args.center_mode, ema_alpha=args.ema_alpha,
                      compression=compression)
    result = train(manifest, enc_cfg, cfg, _stft_config(args), out_dir=out)
    final = result.log[-1].total_loss if result.log else None
    return {"command": "train", "seed": args.seed,
            "config": {"epochs": cfg.epochs, "batch_size": cfg.batch_size,
                       "lr": cfg.lr, "weight_decay": cfg.weight_decay,
                       "lambda": cfg.lam, "sampler": cfg.sampler,
                       "classes_per_batch": cfg.classes_per_batch,
                       "images_per_class": cfg.images_per_class,
                       "audio_per_class": cfg.audio_per_class,
                       "center_mode": cfg.center_mode,
                       "compression": compression,
                       "input_size": enc_cfg.input_size,
                       "channels": list(enc_cfg.channels_per_stage),
                       "embed_dim": enc_cfg.embed_dim,
                       "manifest": str(args.manifest), "out": str(out)},
            "final_loss": final, "batches": len(result.log),
            "outputs": {"checkpoint": str(result.checkpoint_path),
                        "log": str(result.log_path)}}


def _cmd_eval_verify(args) -> dict:
    _, _, _, table, compression = _load_table(args, args.split)
    auc, eer_value, pairs, (pos, neg) = verify(table, args.pairs,
                                               args.stratify, args.seed)
    out = Path(args.out or _default_out())
    out.mkdir(parents=True, exist_ok=True)
    config = {"split": args.split, "pairs": args.pairs,
              "stratify": args.stratify, "compression": compression,
              "manifest": str(args.manifest),
              "checkpoint": str(args.checkpoint), "out": str(out)}
    report = EvalReport(task="verification", seed=args.seed, config=config,
                        metrics={"auc": auc, "eer": eer_value},
                        stratum=args.stratify)
    write_report_json(out / "verify_report.json", report)
    write_scores_csv(out / "verify_scores.csv", pairs, pos, neg, args.stratify)
    write_roc_csv(out / "verify_roc.csv", pos, neg)
    return {"command": "eval-verify", "seed": args.seed, "config": config,
            "auc": auc, "eer": eer_value,
            "outputs": {"report": str(out / "verify_report.json"),
                        "scores": str(out / "verify_scores.csv"),
                        "roc": str(out / "verify_roc.csv")}}


def _cmd_eval_match(args) -> dict:
    _, _, _, table, compression = _load_table(args, args.split)
    sizes = [int(s) for s in str(args.gallery_sizes).split(",") if s]
    accuracy = {str(n): matching_accuracy(table, args.direction, n,
                                          args.trials, args.seed)
                for n in sizes}
    out = Path(args.out or _default_out())
    out.mkdir(parents=True, exist_ok=True)
    config = {"split": args.split, "direction": args.direction,
              "gallery_sizes": sizes, "trials": args.trials,
              "compression": compression, "manifest": str(args.manifest),
              "checkpoint": str(args.checkpoint), "out": str(out)}
    report = EvalReport(task="matching", seed=args.seed, config=config,
                        metrics={"accuracy_by_n": accuracy})
    write_report_json(out / "match_report.json", report)
    return {"command": "eval-match", "seed": args.seed, "config": config,
            "accuracy_by_n": accuracy,
            "outputs": {"report": str(out / "match_report.json")}}


def _cmd_eval_retrieve(args) -> dict:
    manifest, enc_cfg, params, table, compression = _load_table(args, args.split)
    gallery_table = export_embeddings(params, manifest, args.gallery_split,
                                      enc_cfg, compression=compression)
    ks = [int(s) for s in str(args.k).split(",") if s]
    recall = recall_at_k(table, args.direction, ks, args.seed,
                         args.gender_filter, gallery_table=gallery_table)
    out = Path(args.out or _default_out())
    out.mkdir(parents=True, exist_ok=True)
    config = {"split": args.split, "gallery_split": args.gallery_split,
              "direction": args.direction, "k": ks,
              "gender_filter": bool(args.gender_filter),
              "compression": compression, "manifest": str(args.manifest),
              "checkpoint": str(args.checkpoint), "out": str(out)}
    report = EvalReport(task="retrieval", seed=args.seed, config=config,
                        metrics={"recall_at_k": {str(k): v for k, v in recall.items()}})
    write_report_json(out / "retrieve_report.json", report)
    return {"command": "eval-retrieve", "seed": args.seed, "config": config,
            "recall_at_k": {str(k): v for k, v in recall.items()},
            "outputs": {"report": str(out / "retrieve_report.json")}}


def _cmd_export_embed(args) -> dict:
    _, _, _, table, compression = _load_table(args, args.split)
    out = Path(args.out or (Path(_default_out()) / "embeddings.csv"))
    if out.is_dir():
        out = out / "embeddings.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_embeddings_csv(out, table)
    return {"command": "export-embed", "seed": None,
            "config": {"split": args.split, "compression": compression,
                       "manifest": str(args.manifest),
                       "checkpoint": str(args.checkpoint)},
            "rows": len(table.rows), "outputs": {"embeddings": str(out)}}


def _cmd_plot_roc(args) -> dict:
    roc_path = _require_file(args.roc, "roc csv")
    far, frr = [], []
    with open(roc_path) as fh:
        header = fh.readline()
        for line in fh:
            cells = line.strip().split(",")
            if len(cells) < 2:
                continue
            far.append(float(cells[0]))
            frr.append(float(cells[1]))
    if not far:
        raise UsageError(f"no sweep points in {roc_path}")
    out = Path(args.out or (Path(_default_out()) / "roc.svg"))
    out.parent.mkdir(parents=True, exist_ok=True)
    write_roc_svg(out, far, frr)
    return {"command": "plot-roc", "seed": None,
            "config": {"roc": str(roc_path)}, "points": len(far),
            "outputs": {"svg": str(out)}}


def _cmd_project_2d(args) -> dict:
    table = read_embeddings_csv(_require_file(args.embeddings, "embeddings csv"))
    rows = project_2d(table)
    out = Path(args.out or (Path(_default_out()) / "projection.csv"))
    out.parent.mkdir(parents=True, exist_ok=True)
    write_projection_csv(out, rows)
    outputs = {"projection": str(out)}
    if args.svg:
        write_scatter_svg(args.svg, rows)
        outputs["svg"] = str(args.svg)
    return {"command": "project-2d", "seed": None,
            "config": {"embeddings": str(args.embeddings)},
            "rows": len(rows), "outputs": outputs}


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval-verify": _cmd_eval_verify,
    "eval-match": _cmd_eval_match,
    "eval-retrieve": _cmd_eval_retrieve,
    "export-embed": _cmd_export_embed,
    "plot-roc": _cmd_plot_roc,
    "project-2d": _cmd_project_2d,
}


def run(argv) -> int:
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, list(argv))
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        summary = _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (FileNotFoundError, ValueError, RuntimeError, OSError,
            FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _emit(summary)
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))
