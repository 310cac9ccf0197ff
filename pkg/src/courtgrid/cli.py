"""Command-line surface: synth, cluster, train, evaluate, heatmap.

Exit codes: 0 success, 1 usage error, 2 data/validation error. Options can
also come from an INI config file (section per subcommand); explicit flags
win over config values.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import cluster as clustermod
from . import ingest, profiler, synth, trainer
from .discretize import ResolutionPair
from .model import load_model, save_model

_TRAIN_KEYS = {
    "variant",
    "data",
    "out",
    "clusters",
    "k_rank",
    "lambda",
    "epochs",
    "lr",
    "lr_decay",
    "batch_size",
    "patience",
    "threshold",
    "seed",
    "threads",
    "split",
    "full_rank",
    "low_rank",
    "context_schedule",
    "negative_subsample",
}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad usage; the CLI contract wants 1.
    def error(self, message):
        raise UsageError(message)


def _parse_res(token: str) -> tuple[int, int]:
    rows, _, cols = token.partition("x")
    return (int(rows), int(cols))


def _parse_pairs(text: str) -> tuple[ResolutionPair, ...]:
    pairs = []
    for chunk in text.split(","):
        court, _, defender = chunk.strip().partition(":")
        pairs.append(ResolutionPair(_parse_res(court), _parse_res(defender)))
    return tuple(pairs)


def _resolve_threads(value) -> int:
    if value is None:
        value = os.environ.get("COURTGRID_THREADS", "1")
    threads = int(value)
    if threads < 1:
        raise ValueError(f"--threads must be >= 1, got {threads}")
    return threads


def build_parser() -> Parser:
    parser = Parser(prog="courtgrid", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p_synth = sub.add_parser("synth", help="generate planted synthetic tracking data")
    p_synth.add_argument("--out", required=True, help="output JSONL path")
    p_synth.add_argument("--spec-out", help="planted-spec sidecar path (default <out>.spec.json)")
    p_synth.add_argument("--n", type=int, default=10000, help="number of samples")
    p_synth.add_argument("--players", type=int, default=20)
    p_synth.add_argument("--rank", type=int, default=3)
    p_synth.add_argument("--contexts", type=int, default=1)
    p_synth.add_argument("--rho", type=float, default=None, help="inter-block correlation")
    p_synth.add_argument("--noise", type=float, default=0.0)
    p_synth.add_argument("--court", default="8x10")
    p_synth.add_argument("--defender", default="6x6")
    p_synth.add_argument("--seed", type=int, default=0)

    p_cluster = sub.add_parser("cluster", help="assign playstyle clusters from a synergy table")
    p_cluster.add_argument("--data", required=True, help="synergy CSV path")
    p_cluster.add_argument("--out", required=True, help="assignment CSV path")
    p_cluster.add_argument("--k", type=int, default=7)
    p_cluster.add_argument("--names", help="comma-separated cluster names (k entries)")
    p_cluster.add_argument("--seed", type=int, default=0)

    p_train = sub.add_parser("train", help="train a model on canonical JSONL data")
    p_train.add_argument("--config", help="INI config file; flags override it")
    p_train.add_argument("--variant", choices=trainer.VARIANTS)
    p_train.add_argument("--data", help="canonical JSONL path")
    p_train.add_argument("--out", help="output directory")
    p_train.add_argument("--clusters", help="player,cluster_id CSV for playstyle variants")
    p_train.add_argument("--k-rank", type=int, dest="k_rank")
    p_train.add_argument("--lambda", type=float, dest="lam")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--lr-decay", type=float, dest="lr_decay")
    p_train.add_argument("--batch-size", type=int, dest="batch_size")
    p_train.add_argument("--patience", type=int)
    p_train.add_argument("--threshold", type=float)
    p_train.add_argument("--negative-subsample", type=float, dest="negative_subsample")
    p_train.add_argument("--split", help="train,val,test ratios (default 0.8,0.1,0.1)")
    p_train.add_argument("--full-rank", dest="full_rank", help="e.g. 4x5:6x6,8x10:6x6")
    p_train.add_argument("--low-rank", dest="low_rank", help="e.g. 8x10:6x6")
    p_train.add_argument("--context-schedule", dest="context_schedule", help="e.g. 1,4,4")
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--threads", help="worker count (env COURTGRID_THREADS fallback)")

    p_eval = sub.add_parser("evaluate", help="evaluate a saved model on labeled data")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--threshold", type=float, default=0.5)
    p_eval.add_argument("--clusters")
    p_eval.add_argument("--out", help="metrics JSON path (default: stdout)")

    p_heat = sub.add_parser("heatmap", help="export weighted heatmap profiles")
    p_heat.add_argument("--model", required=True)
    p_heat.add_argument("--player", type=int, help="original player id")
    p_heat.add_argument("--general", action="store_true", help="average-behavior profiles")
    p_heat.add_argument("--top", type=int, default=4)
    p_heat.add_argument("--out", required=True, help="output directory")
    return parser


def _cmd_synth(args) -> int:
    spec = synth.make_planted_spec(
        n_players=args.players,
        rank=args.rank,
        n_contexts=args.contexts,
        court_res=_parse_res(args.court),
        defender_res=_parse_res(args.defender),
        seed=args.seed,
        block_corr=args.rho,
        noise=args.noise,
    )
    samples, _ = synth.generate(spec, args.n, seed=args.seed)
    ingest.serialize_samples(samples, args.out)
    spec_path = args.spec_out or f"{args.out}.spec.json"
    synth.save_spec(spec, spec_path)
    print(f"wrote {len(samples)} samples to {args.out} (spec: {spec_path})")
    return 0


def _cmd_cluster(args) -> int:
    rows = ingest.parse_synergy_table(args.data)
    names = args.names.split(",") if args.names else (
        clustermod.ARCHETYPE_NAMES if args.k == 7 else None
    )
    model = clustermod.assign_playstyles(rows, k=args.k, seed=args.seed, label_names=names)
    clustermod.write_assignments(model, args.out)
    print(f"assigned {len(model.assignment)} players to {args.k} clusters -> {args.out}")
    return 0


def _merge_config(args) -> dict:
    merged: dict = {}
    if args.config:
        ini = configparser.ConfigParser()
        read = ini.read(args.config)
        if not read:
            raise ValueError(f"config file {args.config} not found")
        if ini.sections() and "train" not in ini.sections():
            raise ValueError(f"config file {args.config} has no [train] section")
        if "train" in ini:
            for key, value in ini["train"].items():
                if key not in _TRAIN_KEYS:
                    raise ValueError(f"unknown config key {key!r} in {args.config}")
                merged[key] = value
    for key in _TRAIN_KEYS:
        value = getattr(args, "lam" if key == "lambda" else key, None)
        if value is not None:
            merged[key] = value
    return merged


def _cmd_train(args) -> int:
    cfg = _merge_config(args)
    for key in ("variant", "data", "out"):
        if key not in cfg:
            raise UsageError(f"train requires --{key}")
    variant = str(cfg["variant"])
    if variant not in trainer.VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {trainer.VARIANTS}")
    threads = _resolve_threads(cfg.get("threads"))
    samples, mapping = ingest.parse_samples(cfg["data"])
    if not samples:
        raise ValueError(f"{cfg['data']}: no samples")
    ratios = tuple(float(v) for v in str(cfg.get("split", "0.8,0.1,0.1")).split(","))
    config = trainer.TrainConfig(
        max_epochs=int(cfg.get("epochs", 50)),
        initial_lr=float(cfg.get("lr", 0.1)),
        lr_decay=float(cfg.get("lr_decay", 0.5)),
        patience=int(cfg.get("patience", 1)),
        batch_size=int(cfg.get("batch_size", 512)),
        rank=int(cfg.get("k_rank", 8)),
        lam=float(cfg["lambda"]) if "lambda" in cfg else None,
        seed=int(cfg.get("seed", 0)),
        threshold=float(cfg["threshold"]) if "threshold" in cfg else None,
        negative_subsample=(
            float(cfg["negative_subsample"]) if "negative_subsample" in cfg else None
        ),
    )
    schedule = None
    if "full_rank" in cfg or "low_rank" in cfg or "context_schedule" in cfg:
        base = trainer.default_schedule(variant)
        schedule = trainer.ResolutionSchedule(
            full_rank=_parse_pairs(cfg["full_rank"]) if "full_rank" in cfg else base.full_rank,
            low_rank=_parse_pairs(cfg["low_rank"]) if "low_rank" in cfg else base.low_rank,
            context_schedule=(
                tuple(int(v) for v in str(cfg["context_schedule"]).split(","))
                if "context_schedule" in cfg
                else base.context_schedule
            ),
        )
    cluster_map = None
    if "clusters" in cfg and cfg["clusters"]:
        raw = clustermod.read_assignments(cfg["clusters"])
        cluster_map = {mapping[p]: c for p, c in raw.items() if p in mapping}
    data = ingest.split_dataset(samples, ratios, config.seed)
    model, report = trainer.run_pipeline(
        data,
        config,
        variant,
        schedule=schedule,
        cluster_map=cluster_map,
        player_ids=mapping,
    )
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model.cgm")
    trainer.write_metrics_csv(report, out / "metrics.csv")
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    resolved = {
        "variant": variant,
        "fingerprint": report.fingerprint,
        "threads": threads,
        "split": list(ratios),
        "config": {
            "max_epochs": config.max_epochs,
            "initial_lr": config.initial_lr,
            "lr_decay": config.lr_decay,
            "patience": config.patience,
            "batch_size": config.batch_size,
            "rank": config.rank,
            "lam": config.resolved_lambda(variant),
            "seed": config.seed,
            "threshold": config.threshold,
            "negative_subsample": config.negative_subsample,
        },
    }
    (out / "config.json").write_text(
        json.dumps(resolved, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    if report.final is not None:
        print(
            f"{variant}: test F1 {report.final.f1:.4f} "
            f"(precision {report.final.precision:.4f}, recall {report.final.recall:.4f}, "
            f"threshold {report.final.threshold:.2f})"
        )
    print(f"model and logs written to {out}")
    return 0


def _remap_for_model(samples, model):
    if model.player_ids is None:
        return samples
    from dataclasses import replace

    unknown = sorted({s.player for s in samples} - set(model.player_ids))
    if unknown:
        raise ValueError(f"player ids {unknown} not present in the trained model")
    return [replace(s, player=model.player_ids[s.player]) for s in samples]


def _cmd_evaluate(args) -> int:
    model = load_model(args.model)
    # Parse with original ids intact, then remap through the model's mapping.
    raw_samples = _reparse_original(args.data)
    samples = _remap_for_model(raw_samples, model)
    cluster_map = None
    if args.clusters:
        raw = clustermod.read_assignments(args.clusters)
        ids = model.player_ids or {}
        cluster_map = {ids.get(p, p): c for p, c in raw.items()}
    metrics = trainer.evaluate(model, samples, args.threshold, cluster_map=cluster_map)
    payload = {
        "f1": metrics.f1,
        "precision": metrics.precision,
        "recall": metrics.recall,
        "val_loss": metrics.val_loss,
        "threshold": metrics.threshold,
        "n_samples": len(samples),
    }
    text = json.dumps(payload, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"metrics written to {args.out}")
    else:
        print(text)
    return 0


def _reparse_original(path):
    samples, mapping = ingest.parse_samples(path)
    from dataclasses import replace

    inverse = {dense: orig for orig, dense in mapping.items()}
    return [replace(s, player=inverse[s.player]) for s in samples]


def _cmd_heatmap(args) -> int:
    model = load_model(args.model)
    if args.general == (args.player is not None):
        raise UsageError("heatmap needs exactly one of --player or --general")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    variant = model.variant or model.family
    written = 0
    if args.general:
        profiles = {None: profiler.general_heatmaps(model)[: args.top]}
        who = "general"
    elif model.family == "dynamic":
        dense = _dense_player(model, args.player)
        profiles = profiler.context_heatmaps(model, dense, top_n=args.top)
        who = str(args.player)
    else:
        dense = _dense_player(model, args.player)
        contexts = range(model.n_contexts) if model.family == "st" else [None]
        profiles = {
            t: profiler.player_profiles(model, dense, context=t or 0, top_n=args.top)
            for t in contexts
        }
        who = str(args.player)
    for context, heatmaps in profiles.items():
        for hm in heatmaps:
            for fmt in profiler.EXPORT_FORMATS:
                name = profiler.heatmap_filename(variant, who, context, hm.k, fmt)
                profiler.export_heatmap(hm, out / name, fmt)
                written += 1
    print(f"wrote {written} heatmap files to {out}")
    return 0


def _dense_player(model, player: int) -> int:
    if model.player_ids is None:
        return player
    if player not in model.player_ids:
        raise ValueError(f"player id {player} not present in the trained model")
    return model.player_ids[player]


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        handler = {
            "synth": _cmd_synth,
            "cluster": _cmd_cluster,
            "train": _cmd_train,
            "evaluate": _cmd_evaluate,
            "heatmap": _cmd_heatmap,
        }[args.command]
        return handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, FloatingPointError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
