"""Multiresolution training: the full-rank stage with finegraining, the CP
handoff, the low-rank stage, stopping rules, threshold tuning, and evaluation.

Pipeline variants:
  - ``base``:              no context.
  - ``st_quarter``:        context axis over quarters (1 -> 4 finegraining).
  - ``st_playstyle``:      context axis over playstyle clusters (1 -> 7).
  - ``dynamic_quarter``:   quarter courts side-by-side, temporal penalty.
  - ``dynamic_playstyle``: playstyle courts side-by-side, no penalty.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .discretize import (
    CourtGeometry,
    DefenderGridSpec,
    Resolution,
    ResolutionPair,
    block_parent_of,
    court_cells,
    defender_cells_batch,
    finegrain_map,
)
from .ingest import DatasetSplit
from .model import (
    EncodedBatch,
    FullRankModel,
    LowRankModel,
    batch_logits,
    bce_loss,
    expected_full_shape,
    init_lowrank_from_full,
    initial_bias,
    loss_and_grad,
    sigmoid,
)
from .validation import check_samples

VARIANTS = ("base", "st_quarter", "st_playstyle", "dynamic_quarter", "dynamic_playstyle")

DEFAULT_TEMPORAL_LAMBDA = 0.0002

THRESHOLD_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))  # 0.05 .. 0.95


def variant_family(variant: str) -> str:
    if variant == "base":
        return "base"
    if variant in ("st_quarter", "st_playstyle"):
        return "st"
    if variant in ("dynamic_quarter", "dynamic_playstyle"):
        return "dynamic"
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def variant_contexts(variant: str) -> int:
    variant_family(variant)
    if variant.endswith("_quarter"):
        return 4
    if variant.endswith("_playstyle"):
        return 7
    return 1


def variant_context_source(variant: str) -> str:
    if variant == "base":
        return "none"
    return "playstyle" if variant.endswith("_playstyle") else "quarter"


def default_lambda(variant: str) -> float:
    # The temporal penalty is scoped to quarters; playstyles are uncorrelated
    # and get no regularization.
    return DEFAULT_TEMPORAL_LAMBDA if variant == "dynamic_quarter" else 0.0


@dataclass(frozen=True)
class ResolutionSchedule:
    """Ordered resolution pairs for both stages plus the ST context sizes.

    The handoff point is implicit: the last full-rank pair must equal the
    first low-rank pair. ``context_schedule`` gives the context-axis size per
    full-rank stage for ST variants (each size divides the next and the
    final size), e.g. ``[1, 4, 4]`` for quarters.
    """

    full_rank: tuple[ResolutionPair, ...]
    low_rank: tuple[ResolutionPair, ...]
    context_schedule: tuple[int, ...] | None = None

    def __post_init__(self):
        if not self.full_rank or not self.low_rank:
            raise ValueError("schedules must be non-empty")
        if self.full_rank[-1] != self.low_rank[0]:
            raise ValueError(
                f"handoff mismatch: full-rank ends at {self.full_rank[-1]}, "
                f"low-rank starts at {self.low_rank[0]}"
            )
        if self.context_schedule is not None:
            cs = self.context_schedule
            if len(cs) != len(self.full_rank):
                raise ValueError("context_schedule must match the full-rank stage count")
            for a, b in zip(cs, cs[1:]):
                if b % a != 0:
                    raise ValueError(f"context sizes must divide their successors: {cs}")

    def validate_contexts(self, n_contexts: int) -> None:
        # Context sizes must divide the variant's context count so that bin
        # boundaries nest and context finegraining preserves logits exactly.
        if self.context_schedule is None:
            return
        for s in self.context_schedule:
            if n_contexts % s != 0:
                raise ValueError(
                    f"context size {s} does not divide the variant's {n_contexts} contexts"
                )


def default_schedule(variant: str) -> ResolutionSchedule:
    """The paper-order schedule: full-rank (4x5,6x6), (8x10,6x6), (8x10,12x12);
    low-rank (8x10,12x12), (20x25,12x12), (40x50,12x12); ST contexts 1 -> T."""
    T = variant_contexts(variant)
    full = (
        ResolutionPair((4, 5), (6, 6)),
        ResolutionPair((8, 10), (6, 6)),
        ResolutionPair((8, 10), (12, 12)),
    )
    low = (
        ResolutionPair((8, 10), (12, 12)),
        ResolutionPair((20, 25), (12, 12)),
        ResolutionPair((40, 50), (12, 12)),
    )
    ctx = (1, T, T) if variant_family(variant) == "st" else None
    return ResolutionSchedule(full_rank=full, low_rank=low, context_schedule=ctx)


@dataclass
class TrainConfig:
    """Hyperparameters shared by both training stages."""

    max_epochs: int = 50  # per resolution
    initial_lr: float = 32.0  # full-rank stage; SGD on batch-mean gradients
    low_rank_lr: float | None = None  # None -> initial_lr / 4
    lr_decay: float = 0.5
    patience: int = 1
    batch_size: int = 512
    rank: int = 8
    lam: float | None = None  # None -> variant default (0.0002 for dynamic_quarter)
    seed: int = 0
    threshold: float | None = None  # None -> tune on validation
    negative_subsample: float | None = None  # keep-probability for negatives
    cp_max_iters: int = 200
    cp_tol: float = 1e-7

    def __post_init__(self):
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        for name in ("initial_lr", "lr_decay", "batch_size", "rank"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.threshold is not None and not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.negative_subsample is not None and not 0.0 < self.negative_subsample <= 1.0:
            raise ValueError("negative_subsample must lie in (0, 1]")
        if self.low_rank_lr is not None and self.low_rank_lr <= 0:
            raise ValueError("low_rank_lr must be positive")

    def resolved_lambda(self, variant: str) -> float:
        return default_lambda(variant) if self.lam is None else float(self.lam)

    def resolved_low_rank_lr(self) -> float:
        # Factor-matrix gradients multiply the other modes, so the low-rank
        # stage needs a gentler step than the full-rank stage.
        return self.initial_lr / 4.0 if self.low_rank_lr is None else self.low_rank_lr


@dataclass
class Metrics:
    f1: float
    precision: float
    recall: float
    val_loss: float
    threshold: float


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class StageLog:
    stage: str  # "full_rank" | "low_rank"
    court_res: Resolution
    defender_res: Resolution
    context_bins: int
    epochs: list[EpochLog] = field(default_factory=list)
    wall_clock_s: float = 0.0


@dataclass
class TrainReport:
    variant: str
    seed: int
    fingerprint: str
    stages: list[StageLog] = field(default_factory=list)
    final: Metrics | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    def metrics_rows(self) -> list[tuple]:
        rows = []
        for s in self.stages:
            res = (
                f"{s.court_res[0]}x{s.court_res[1]}"
                f"/{s.defender_res[0]}x{s.defender_res[1]}/c{s.context_bins}"
            )
            for e in s.epochs:
                rows.append((s.stage, res, e.epoch, e.train_loss, e.val_loss, e.lr))
        return rows


def write_metrics_csv(report: TrainReport, path) -> None:
    """Per-epoch metrics log; float fields use shortest exact formatting so
    reruns with the same seed are byte-identical."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("stage,resolution,epoch,train_loss,val_loss,lr\n")
        for stage, res, epoch, train_loss, val_loss, lr in report.metrics_rows():
            fh.write(f"{stage},{res},{epoch},{train_loss!r},{val_loss!r},{lr!r}\n")


def config_fingerprint(variant, config, schedule, geometry, grid, context_source) -> str:
    payload = {
        "variant": variant,
        "config": {
            "max_epochs": config.max_epochs,
            "initial_lr": config.initial_lr,
            "low_rank_lr": config.resolved_low_rank_lr(),
            "lr_decay": config.lr_decay,
            "patience": config.patience,
            "batch_size": config.batch_size,
            "rank": config.rank,
            "lam": config.resolved_lambda(variant),
            "seed": config.seed,
            "threshold": config.threshold,
            "negative_subsample": config.negative_subsample,
            "cp_max_iters": config.cp_max_iters,
            "cp_tol": config.cp_tol,
        },
        "schedule": {
            "full_rank": [[list(p.court), list(p.defender)] for p in schedule.full_rank],
            "low_rank": [[list(p.court), list(p.defender)] for p in schedule.low_rank],
            "context_schedule": (
                list(schedule.context_schedule) if schedule.context_schedule else None
            ),
        },
        "geometry": [geometry.depth_ft, geometry.width_ft],
        "grid": {
            "resolution": list(grid.resolution),
            "anchor": list(grid.anchor),
            "extent_ft": list(grid.extent_ft),
        },
        "context_source": context_source,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# Sample encoding
# ---------------------------------------------------------------------------


@dataclass
class PreparedData:
    """Raw sample arrays extracted once; re-binned cheaply per resolution."""

    players: np.ndarray
    contexts: np.ndarray  # raw context value per the context source
    bh: np.ndarray
    basket: np.ndarray
    defenders_flat: np.ndarray
    offsets: np.ndarray
    labels: np.ndarray

    @classmethod
    def prepare(cls, samples, context_source: str, cluster_map=None) -> "PreparedData":
        n = len(samples)
        players = np.fromiter((s.player for s in samples), dtype=np.intp, count=n)
        if context_source == "none":
            contexts = np.zeros(n, dtype=np.intp)
        elif context_source == "quarter":
            contexts = np.fromiter((s.quarter - 1 for s in samples), dtype=np.intp, count=n)
        elif context_source == "t":
            contexts = np.fromiter((s.context for s in samples), dtype=np.intp, count=n)
        elif context_source == "playstyle":
            if cluster_map is None:
                raise ValueError("playstyle variants require a player -> cluster assignment")
            missing = sorted({int(s.player) for s in samples} - set(cluster_map))
            if missing:
                raise ValueError(f"no cluster assignment for player ids {missing}")
            contexts = np.fromiter(
                (cluster_map[s.player] for s in samples), dtype=np.intp, count=n
            )
        else:
            raise ValueError(f"unknown context source {context_source!r}")
        bh = np.array([s.bh_pos for s in samples], dtype=float).reshape(n, 2)
        basket = np.array([s.basket_pos for s in samples], dtype=float).reshape(n, 2)
        counts = np.fromiter((len(s.defenders) for s in samples), dtype=np.intp, count=n)
        offsets = np.zeros(n + 1, dtype=np.intp)
        np.cumsum(counts, out=offsets[1:])
        flat = np.array(
            [d for s in samples for d in s.defenders], dtype=float
        ).reshape(int(offsets[-1]), 2)
        labels = np.fromiter((s.label for s in samples), dtype=float, count=n)
        return cls(players, contexts, bh, basket, flat, offsets, labels)


def encode_prepared(
    data: PreparedData,
    family: str,
    n_contexts: int,
    court_res: Resolution,
    defender_res: Resolution,
    context_bins: int,
    geometry: CourtGeometry,
    grid: DefenderGridSpec,
) -> EncodedBatch:
    """Bin prepared samples at one (court, defender, context) resolution."""
    if len(data.contexts) and data.contexts.max() >= n_contexts:
        raise ValueError(
            f"context value {int(data.contexts.max())} outside [0, {n_contexts})"
        )
    d1 = court_cells(data.bh[:, 0], data.bh[:, 1], geometry, court_res)
    if family == "dynamic":
        d1 = d1 + data.contexts * (court_res[0] * court_res[1])
        contexts = data.contexts
    elif family == "st":
        contexts = data.contexts * context_bins // n_contexts
    else:
        contexts = np.zeros_like(data.contexts)
    d2_flat, d2_offsets = defender_cells_batch(
        data.bh, data.basket, data.defenders_flat, data.offsets, grid.at_resolution(defender_res)
    )
    return EncodedBatch(data.players, contexts, d1, d2_flat, d2_offsets, data.labels)


def encode_samples(
    samples,
    variant: str,
    court_res: Resolution,
    defender_res: Resolution,
    geometry: CourtGeometry | None = None,
    grid: DefenderGridSpec | None = None,
    cluster_map=None,
    context_source: str | None = None,
    context_bins: int | None = None,
) -> EncodedBatch:
    """One-call sample encoding for a pipeline variant at a resolution pair."""
    family = variant_family(variant)
    T = variant_contexts(variant)
    source = context_source or variant_context_source(variant)
    prepared = PreparedData.prepare(samples, source, cluster_map)
    return encode_prepared(
        prepared,
        family,
        T,
        court_res,
        defender_res,
        context_bins if context_bins is not None else T,
        geometry or CourtGeometry(),
        grid or DefenderGridSpec(),
    )


# ---------------------------------------------------------------------------
# SGD stages
# ---------------------------------------------------------------------------


def _apply_update(model, grads: dict, lr: float) -> None:
    if isinstance(model, FullRankModel):
        model.weights -= lr * grads["weights"]
    else:
        for name in ("A", "B", "C", "D"):
            if name in grads:
                setattr(model, name, getattr(model, name) - lr * grads[name])
    model.bias -= lr * grads["bias"]


def _val_loss(model, val_batch: EncodedBatch) -> float:
    if len(val_batch) == 0:
        return math.nan
    return bce_loss(sigmoid(batch_logits(model, val_batch)), val_batch.labels)


def _train_stage(
    model,
    train_batch: EncodedBatch,
    val_batch: EncodedBatch,
    config: TrainConfig,
    lam: float,
    rng: np.random.Generator,
    log: StageLog,
    lr: float | None = None,
) -> None:
    """Minibatch SGD at one resolution with reduce-on-plateau lr and a stop
    after ``patience`` consecutive validation-loss increases."""
    lr = config.initial_lr if lr is None else lr
    n = len(train_batch)
    best_val = math.inf
    prev_val = None
    bad = 0
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        if config.negative_subsample is not None:
            keep = (train_batch.labels[order] == 1) | (
                rng.random(n) < config.negative_subsample
            )
            order = order[keep]
        total, seen = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            mb = train_batch.subset(order[start : start + config.batch_size])
            with np.errstate(over="ignore", invalid="ignore"):
                report, grads = loss_and_grad(model, mb, lam)
            if not math.isfinite(report.total):
                raise FloatingPointError(
                    f"{log.stage} stage diverged at epoch {epoch} (non-finite loss)"
                )
            _apply_update(model, grads, lr)
            total += report.data_loss * len(mb)
            seen += len(mb)
        train_loss = total / seen if seen else math.nan
        val_loss = _val_loss(model, val_batch)
        if not math.isfinite(val_loss):
            raise FloatingPointError(
                f"{log.stage} stage diverged at epoch {epoch} (non-finite validation loss)"
            )
        log.epochs.append(EpochLog(epoch=epoch, train_loss=train_loss, val_loss=val_loss, lr=lr))
        if val_loss < best_val:
            best_val = val_loss
        else:
            lr *= config.lr_decay
        bad = bad + 1 if (prev_val is not None and val_loss > prev_val) else 0
        prev_val = val_loss
        if bad >= config.patience:
            break


def _full_rank_transfer(
    W: np.ndarray,
    family: str,
    n_contexts: int,
    old: ResolutionPair,
    new: ResolutionPair,
    old_ctx: int,
    new_ctx: int,
) -> np.ndarray:
    """Copy-finegrain a full-rank tensor onto the next resolution: every fine
    cell inherits its parent's weight, which preserves all logits exactly for
    divisible steps."""
    if family == "st" and new_ctx != old_ctx:
        ctx_parent = np.arange(new_ctx, dtype=np.intp) * old_ctx // new_ctx
        W = W[:, ctx_parent]
    if new.court != old.court:
        cmap = finegrain_map(old.court, new.court)
        parent = block_parent_of(cmap, n_contexts) if family == "dynamic" else cmap.parent_of
        W = W.take(parent, axis=-2)
    if new.defender != old.defender:
        dmap = finegrain_map(old.defender, new.defender)
        W = W.take(dmap.parent_of, axis=-1)
    return np.ascontiguousarray(W)


def _low_rank_transfer(
    model: LowRankModel, old: ResolutionPair, new: ResolutionPair
) -> None:
    """Parent-row copy of the spatial factors; A (and B) carry over unchanged."""
    if new.court != old.court:
        cmap = finegrain_map(old.court, new.court)
        parent = (
            block_parent_of(cmap, model.n_contexts)
            if model.family == "dynamic"
            else cmap.parent_of
        )
        model.C = model.C[parent]
    if new.defender != old.defender:
        dmap = finegrain_map(old.defender, new.defender)
        model.D = model.D[dmap.parent_of]
    model.court_res = new.court
    model.defender_res = new.defender


def _seeds(config: TrainConfig) -> dict:
    children = np.random.SeedSequence(config.seed).spawn(4)
    return {"init": children[0], "full": children[1], "cp": children[2], "low": children[3]}


def train_full_rank(
    data: DatasetSplit,
    schedule: ResolutionSchedule,
    config: TrainConfig,
    variant: str,
    geometry: CourtGeometry | None = None,
    grid: DefenderGridSpec | None = None,
    cluster_map=None,
    context_source: str | None = None,
    stage_logs: list[StageLog] | None = None,
    fingerprint: str | None = None,
    player_ids=None,
) -> FullRankModel:
    """Full-rank stage: SGD per resolution, copy-finegraining in between."""
    family = variant_family(variant)
    T = variant_contexts(variant)
    schedule.validate_contexts(T)
    geometry = geometry or CourtGeometry()
    grid = grid or DefenderGridSpec()
    lam = config.resolved_lambda(variant)
    source = context_source or variant_context_source(variant)
    train_prep = PreparedData.prepare(data.train, source, cluster_map)
    val_prep = PreparedData.prepare(data.validation, source, cluster_map)
    n_players = int(train_prep.players.max()) + 1 if len(data.train) else 1
    seeds = _seeds(config)
    ctx_sched = schedule.context_schedule or tuple([T] * len(schedule.full_rank))
    first = schedule.full_rank[0]
    shape = expected_full_shape(family, n_players, first.court, first.defender, ctx_sched[0])
    init_rng = np.random.default_rng(seeds["init"])
    model = FullRankModel(
        family=family,
        weights=init_rng.uniform(-0.01, 0.01, shape),
        bias=initial_bias(train_prep.labels),
        court_res=first.court,
        defender_res=first.defender,
        n_contexts=ctx_sched[0] if family == "st" else (T if family == "dynamic" else 1),
        player_ids=player_ids,
        fingerprint=fingerprint,
        variant=variant,
    )
    sgd_rng = np.random.default_rng(seeds["full"])
    prev_pair, prev_ctx = first, ctx_sched[0]
    for idx, pair in enumerate(schedule.full_rank):
        ctx_bins = ctx_sched[idx]
        if idx > 0:
            model.weights = _full_rank_transfer(
                model.weights, family, T, prev_pair, pair, prev_ctx, ctx_bins
            )
            model.court_res = pair.court
            model.defender_res = pair.defender
            if family == "st":
                model.n_contexts = ctx_bins
        train_batch = encode_prepared(
            train_prep, family, T, pair.court, pair.defender, ctx_bins, geometry, grid
        )
        val_batch = encode_prepared(
            val_prep, family, T, pair.court, pair.defender, ctx_bins, geometry, grid
        )
        log = StageLog(
            stage="full_rank",
            court_res=pair.court,
            defender_res=pair.defender,
            context_bins=ctx_bins if family == "st" else model.n_contexts,
        )
        start = time.perf_counter()
        _train_stage(model, train_batch, val_batch, config, lam, sgd_rng, log)
        log.wall_clock_s = time.perf_counter() - start
        if stage_logs is not None:
            stage_logs.append(log)
        prev_pair, prev_ctx = pair, ctx_bins
    return model


def train_low_rank(
    init: LowRankModel,
    data: DatasetSplit,
    schedule: ResolutionSchedule,
    config: TrainConfig,
    geometry: CourtGeometry | None = None,
    grid: DefenderGridSpec | None = None,
    cluster_map=None,
    context_source: str | None = None,
    stage_logs: list[StageLog] | None = None,
) -> LowRankModel:
    """Low-rank stage: SGD on the factor matrices, parent-row copies between
    resolutions."""
    first = schedule.low_rank[0]
    if init.court_res != first.court or init.defender_res != first.defender:
        raise ValueError(
            f"initial model at {init.court_res}/{init.defender_res}, "
            f"schedule starts at {first.court}/{first.defender}"
        )
    variant = init.variant or init.family
    family = init.family
    T = init.n_contexts
    geometry = geometry or CourtGeometry()
    grid = grid or DefenderGridSpec()
    lam = config.resolved_lambda(variant)
    source = context_source or (
        variant_context_source(variant) if variant in VARIANTS else "t"
    )
    train_prep = PreparedData.prepare(data.train, source, cluster_map)
    val_prep = PreparedData.prepare(data.validation, source, cluster_map)
    sgd_rng = np.random.default_rng(_seeds(config)["low"])
    model = init
    prev_pair = first
    for idx, pair in enumerate(schedule.low_rank):
        if idx > 0:
            _low_rank_transfer(model, prev_pair, pair)
        train_batch = encode_prepared(
            train_prep, family, T, pair.court, pair.defender, T, geometry, grid
        )
        val_batch = encode_prepared(
            val_prep, family, T, pair.court, pair.defender, T, geometry, grid
        )
        log = StageLog(
            stage="low_rank",
            court_res=pair.court,
            defender_res=pair.defender,
            context_bins=T,
        )
        start = time.perf_counter()
        _train_stage(
            model, train_batch, val_batch, config, lam, sgd_rng, log,
            lr=config.resolved_low_rank_lr(),
        )
        log.wall_clock_s = time.perf_counter() - start
        if stage_logs is not None:
            stage_logs.append(log)
        prev_pair = pair
    return model


# ---------------------------------------------------------------------------
# Prediction and evaluation
# ---------------------------------------------------------------------------


def _model_context_source(model) -> str:
    if model.variant in VARIANTS:
        return variant_context_source(model.variant)
    if model.n_contexts == 1:
        return "none"
    return "t"


def predict_proba(
    model,
    samples,
    geometry: CourtGeometry | None = None,
    grid: DefenderGridSpec | None = None,
    cluster_map=None,
    context_source: str | None = None,
) -> np.ndarray:
    """Shot probabilities for raw samples under a trained model."""
    source = context_source or _model_context_source(model)
    prepared = PreparedData.prepare(samples, source, cluster_map)
    batch = encode_prepared(
        prepared,
        model.family,
        model.n_contexts,
        model.court_res,
        model.defender_res,
        model.n_contexts,
        geometry or CourtGeometry(),
        grid or DefenderGridSpec(),
    )
    return sigmoid(batch_logits(model, batch))


def evaluate(
    model,
    samples,
    threshold: float = 0.5,
    geometry: CourtGeometry | None = None,
    grid: DefenderGridSpec | None = None,
    cluster_map=None,
    context_source: str | None = None,
) -> Metrics:
    """Thresholded F1/precision/recall plus the BCE loss on a sample set.

    Predicts 1 iff probability >= threshold; F1 is 0 when there are no true
    positives.
    """
    if len(samples) == 0:
        raise ValueError("evaluate requires a non-empty sample set")
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    probs = predict_proba(
        model, samples, geometry, grid, cluster_map, context_source=context_source
    )
    labels = np.fromiter((s.label for s in samples), dtype=float, count=len(samples))
    preds = probs >= threshold
    tp = float(np.sum(preds & (labels == 1)))
    fp = float(np.sum(preds & (labels == 0)))
    fn = float(np.sum(~preds & (labels == 1)))
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if tp > 0 else 0.0
    return Metrics(
        f1=f1,
        precision=precision,
        recall=recall,
        val_loss=bce_loss(probs, labels),
        threshold=threshold,
    )


def tune_threshold(
    model,
    samples,
    geometry: CourtGeometry | None = None,
    grid: DefenderGridSpec | None = None,
    cluster_map=None,
    context_source: str | None = None,
) -> float:
    """Grid search over {0.05, ..., 0.95} maximizing validation F1; ties go to
    the lowest threshold."""
    if len(samples) == 0:
        raise ValueError("tune_threshold requires a non-empty validation set")
    probs = predict_proba(
        model, samples, geometry, grid, cluster_map, context_source=context_source
    )
    labels = np.fromiter((s.label for s in samples), dtype=float, count=len(samples))
    best_t, best_f1 = THRESHOLD_GRID[0], -1.0
    for t in THRESHOLD_GRID:
        preds = probs >= t
        tp = float(np.sum(preds & (labels == 1)))
        fp = float(np.sum(preds & (labels == 0)))
        fn = float(np.sum(~preds & (labels == 1)))
        f1 = 2 * tp / (2 * tp + fp + fn) if tp > 0 else 0.0
        if f1 > best_f1:
            best_t, best_f1 = t, f1
    return best_t


def run_pipeline(
    data: DatasetSplit,
    config: TrainConfig,
    variant: str,
    schedule: ResolutionSchedule | None = None,
    geometry: CourtGeometry | None = None,
    grid: DefenderGridSpec | None = None,
    cluster_map=None,
    context_source: str | None = None,
    player_ids=None,
) -> tuple[LowRankModel, TrainReport]:
    """Full training pipeline: full-rank stage, CP handoff, low-rank stage,
    threshold tuning on validation, final metrics on test."""
    variant_family(variant)  # validates the name
    schedule = schedule or default_schedule(variant)
    geometry = geometry or CourtGeometry()
    grid = grid or DefenderGridSpec()
    check_samples(data.train)
    fingerprint = config_fingerprint(
        variant, config, schedule, geometry, grid, context_source or variant_context_source(variant)
    )
    report = TrainReport(variant=variant, seed=config.seed, fingerprint=fingerprint)
    full = train_full_rank(
        data,
        schedule,
        config,
        variant,
        geometry,
        grid,
        cluster_map,
        context_source,
        stage_logs=report.stages,
        fingerprint=fingerprint,
        player_ids=player_ids,
    )
    seeds = _seeds(config)
    low = init_lowrank_from_full(
        full,
        config.rank,
        seed=int(seeds["cp"].generate_state(1)[0]),
        max_iters=config.cp_max_iters,
        tol=config.cp_tol,
    )
    low = train_low_rank(
        low,
        data,
        schedule,
        config,
        geometry,
        grid,
        cluster_map,
        context_source,
        stage_logs=report.stages,
    )
    if config.threshold is not None:
        threshold = config.threshold
    elif len(data.validation):
        threshold = tune_threshold(
            low, data.validation, geometry, grid, cluster_map, context_source=context_source
        )
    else:
        threshold = 0.5
    if len(data.test):
        report.final = evaluate(
            low,
            data.test,
            threshold,
            geometry,
            grid,
            cluster_map,
            context_source=context_source,
        )
    return low, report
