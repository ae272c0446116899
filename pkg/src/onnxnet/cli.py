"""Command-line interface.

Payload goes to stdout (or ``--out``); diagnostics go to stderr. Exit codes:
0 success, 1 operational error, 2 usage error. The ``ONNXNET_LOG`` env var
(error|warn|info|debug) controls diagnostic verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys

from . import diversity as div
from .encoding import VARIANTS, encode, encode_file, prepare_graph
from .exceptions import EmptyHistogram, InsufficientSamples, MissingText, OnnxNetError
from .graph import parse_onnx
from .manifest import (
    read_manifest,
    read_predictions,
    batch_encode,
    write_manifest,
    write_predictions,
)
from .metrics import ScoredSet, kendall_tau, spearman_rho
from .passes import serialize, simplify
from .ranker import TrainConfig, load_model, predict, save_model, train_ranker

log = logging.getLogger("onnxnet")

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def _setup_logging() -> None:
    level = _LOG_LEVELS.get(os.environ.get("ONNXNET_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(message)s")
    log.setLevel(level)  # effective even when logging was configured already


def _emit(payload: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def _emit_json(obj: dict, out: str | None = None) -> None:
    _emit(json.dumps(obj, sort_keys=True) + "\n", out)


def _read_bytes(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


# ---------------------------------------------------------------------------
# subcommands


def _cmd_encode(args) -> int:
    arch = encode_file(args.model, VARIANTS[args.variant])
    _emit(arch.text, args.out)
    return 0


def _cmd_simplify(args) -> int:
    g = parse_onnx(_read_bytes(args.model))
    simplified, reports = simplify(g)
    with open(args.out, "wb") as fh:
        fh.write(serialize(simplified))
    if args.report:
        _emit_json(
            {
                "reports": [
                    {
                        "pass_name": r.pass_name,
                        "nodes_removed": r.nodes_removed,
                        "nodes_merged": r.nodes_merged,
                        "iterations": r.iterations,
                    }
                    for r in reports
                ]
            }
        )
    return 0


def _cmd_stats(args) -> int:
    raw = parse_onnx(_read_bytes(args.model))
    try:
        histogram = div.op_histogram(raw).probs
    except EmptyHistogram:
        histogram = {}
    prepared = prepare_graph(raw)
    variants = {}
    for name, cfg in VARIANTS.items():
        arch = encode(prepared, cfg)
        variants[name] = {"lines": arch.line_count, "tokens": arch.token_estimate}
    _emit_json(
        {
            "node_count": raw.n_nodes,
            "op_histogram": histogram,
            "variants": variants,
        }
    )
    return 0


def _histograms_from_manifest(path: str, n: int, seed: int) -> tuple[list, str]:
    records = sorted(read_manifest(path), key=lambda r: r.id)
    if n and len(records) > n:
        rng = random.Random(seed)
        records = rng.sample(records, n)
    hists = []
    space = ""
    for record in records:
        if record.path is None:
            raise MissingText(
                f"record {record.id!r}: diversity needs an ONNX path, not inline text"
            )
        hists.append(div.op_histogram(parse_onnx(_read_bytes(record.path))))
        space = space or record.space
    if not hists:
        raise InsufficientSamples(f"manifest {path} holds no usable records")
    return hists, space


def _cmd_diversity(args) -> int:
    hists_a, space_a = _histograms_from_manifest(args.manifest_a, args.n, args.seed)
    if args.manifest_b and not args.within:
        hists_b, space_b = _histograms_from_manifest(args.manifest_b, args.n, args.seed)
        report = div.between_space_diversity(
            hists_a,
            hists_b,
            space_a=space_a or args.manifest_a,
            space_b=space_b or args.manifest_b,
            seed=args.seed,
        )
    else:
        report = div.within_space_diversity(
            hists_a, space=space_a or args.manifest_a, seed=args.seed
        )
    _emit_json(report.to_json(), args.out)
    return 0


def _cmd_eval(args) -> int:
    preds = read_predictions(args.pred)
    truth = {r.id: r.accuracy for r in read_manifest(args.truth)}
    entries = [(i, s, truth[i]) for i, s in preds if i in truth]
    scored = ScoredSet(tuple(entries))
    _emit_json(
        {
            "kendall_tau": kendall_tau(scored),
            "spearman_rho": spearman_rho(scored),
            "n": len(entries),
        },
        args.out,
    )
    return 0


def _training_pairs(path: str) -> list[tuple[str, float]]:
    pairs = []
    for record in read_manifest(path):
        if record.text is None:
            raise MissingText(f"record {record.id!r} has no inline encoding text")
        pairs.append((record.text, record.accuracy))
    return pairs


def _cmd_train_ranker(args) -> int:
    cfg = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch,
        margin=args.margin,
        seed=args.seed,
        lr_schedule=args.schedule,
        end_lr=args.end_lr,
        weight_decay=args.weight_decay,
        warmup_ratio=args.warmup,
    )
    train_pairs = _training_pairs(args.train)
    model = train_ranker(train_pairs, cfg)
    save_model(model, args.model_out)
    summary = {
        "epochs": cfg.epochs,
        "train_records": len(train_pairs),
        "final_train_loss": model.train_losses[-1] if model.train_losses else None,
        "model": args.model_out,
    }
    if args.val:
        val_records = read_manifest(args.val)
        entries = []
        for record in val_records:
            if record.text is None:
                raise MissingText(f"record {record.id!r} has no inline encoding text")
            entries.append((record.id, predict(model, record.text), record.accuracy))
        scored = ScoredSet(tuple(entries))
        summary["val_kendall_tau"] = kendall_tau(scored)
        summary["val_spearman_rho"] = spearman_rho(scored)
    _emit_json(summary)
    return 0


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    records = read_manifest(args.manifest)
    entries = []
    for record in records:
        if record.text is None:
            raise MissingText(f"record {record.id!r} has no inline encoding text")
        entries.append((record.id, predict(model, record.text)))
    write_predictions(entries, args.out)
    return 0


def _cmd_ingest(args) -> int:
    records = read_manifest(args.manifest)
    encoded, errors = batch_encode(records, VARIANTS[args.variant], workers=args.workers)
    write_manifest(encoded, args.out)
    if args.errors:
        with open(args.errors, "w", encoding="utf-8") as fh:
            for entry in errors:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
    elif errors:
        for entry in errors:
            log.warning("record %s failed: %s", entry["id"], entry["error"])
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="onnxnet",
        description="Condensed text encoding and ranking toolchain for ONNX graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="print a model's text encoding")
    p.add_argument("model")
    p.add_argument("--variant", choices=sorted(VARIANTS), default="full")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("simplify", help="write a losslessly simplified model")
    p.add_argument("model")
    p.add_argument("--out", required=True)
    p.add_argument("--report", action="store_true")
    p.set_defaults(func=_cmd_simplify)

    p = sub.add_parser("stats", help="node count, op histogram, per-variant sizes")
    p.add_argument("model")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("diversity", help="within/between search-space diversity")
    p.add_argument("--manifest-a", required=True)
    p.add_argument("--manifest-b")
    p.add_argument("--within", action="store_true")
    p.add_argument("-n", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_diversity)

    p = sub.add_parser("eval", help="rank correlation of predictions vs truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("train-ranker", help="fit the pairwise text ranker")
    p.add_argument("--train", required=True)
    p.add_argument("--val")
    p.add_argument("--model-out", required=True)
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--schedule", choices=("polynomial", "constant"), default="polynomial")
    p.add_argument("--end-lr", type=float, default=5e-6)
    p.add_argument("--weight-decay", type=float, default=0.1)
    p.add_argument("--warmup", type=float, default=0.06)
    p.set_defaults(func=_cmd_train_ranker)

    p = sub.add_parser("predict", help="score a manifest with a trained ranker")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("ingest", help="batch-encode a manifest of ONNX files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--variant", choices=sorted(VARIANTS), default="full")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--errors")
    p.set_defaults(func=_cmd_ingest)

    return parser


def run(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except (OnnxNetError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
