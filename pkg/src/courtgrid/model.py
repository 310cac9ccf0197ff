"""Full-rank and CP-factorized classifiers: forward pass, binary cross-entropy
loss with analytic gradients, temporal block regularization, the full-rank to
low-rank handoff, and a deterministic model container format.

Model families:
  - ``base``:    weights (I, D1, D2), no context.
  - ``st``:      weights (I, T, D1, D2); low-rank adds a global context factor B.
  - ``dynamic``: weights (I, F*D1, D2); contexts enter through the extended
                 court axis (side-by-side courts), defender grid shared.

The score is the sigmoid of the summed logit
``bias + sum over active cells of the tensor entry`` (a sum of sigmoids is not
a probability, so the sigmoid is applied once to the total).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .discretize import Resolution
from .tensor_ops import cp_als, rebalance_factors

FAMILIES = ("base", "st", "dynamic")

_PROB_CLAMP = 1e-12
_MAGIC = b"COURTGRID-MODEL-1\n"


def sigmoid(x):
    """Numerically stable logistic function; output strictly inside (0, 1)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SampleEncoding:
    """One sample's active indices: the court cell is already extended for
    dynamic models; defender cells are distinct (binary encoding)."""

    player: int
    context: int
    court_cell: int
    defender_cells: tuple[int, ...]
    label: int


@dataclass
class EncodedBatch:
    """Struct-of-arrays encoding for vectorized loss/gradient evaluation.

    Defender cells are stored CSR-style: sample i owns
    ``d2_flat[d2_offsets[i]:d2_offsets[i+1]]``.
    """

    players: np.ndarray
    contexts: np.ndarray
    d1: np.ndarray
    d2_flat: np.ndarray
    d2_offsets: np.ndarray
    labels: np.ndarray

    @classmethod
    def from_encodings(cls, encodings: list[SampleEncoding]) -> "EncodedBatch":
        n = len(encodings)
        players = np.fromiter((e.player for e in encodings), dtype=np.intp, count=n)
        contexts = np.fromiter((e.context for e in encodings), dtype=np.intp, count=n)
        d1 = np.fromiter((e.court_cell for e in encodings), dtype=np.intp, count=n)
        labels = np.fromiter((e.label for e in encodings), dtype=float, count=n)
        counts = np.fromiter((len(e.defender_cells) for e in encodings), dtype=np.intp, count=n)
        offsets = np.zeros(n + 1, dtype=np.intp)
        np.cumsum(counts, out=offsets[1:])
        flat = np.fromiter(
            (c for e in encodings for c in e.defender_cells), dtype=np.intp, count=int(offsets[-1])
        )
        return cls(players, contexts, d1, flat, offsets, labels)

    def __len__(self) -> int:
        return self.players.shape[0]

    @property
    def defender_counts(self) -> np.ndarray:
        return np.diff(self.d2_offsets)

    @property
    def sample_of_defender(self) -> np.ndarray:
        return np.repeat(np.arange(len(self), dtype=np.intp), self.defender_counts)

    def subset(self, idx: np.ndarray) -> "EncodedBatch":
        idx = np.asarray(idx, dtype=np.intp)
        counts = self.defender_counts[idx]
        offsets = np.zeros(idx.shape[0] + 1, dtype=np.intp)
        np.cumsum(counts, out=offsets[1:])
        total = int(offsets[-1])
        starts = self.d2_offsets[idx]
        take = (
            np.arange(total, dtype=np.intp)
            - np.repeat(offsets[:-1], counts)
            + np.repeat(starts, counts)
        )
        return EncodedBatch(
            self.players[idx],
            self.contexts[idx],
            self.d1[idx],
            self.d2_flat[take],
            offsets,
            self.labels[idx],
        )

    def encoding(self, i: int) -> SampleEncoding:
        lo, hi = self.d2_offsets[i], self.d2_offsets[i + 1]
        return SampleEncoding(
            int(self.players[i]),
            int(self.contexts[i]),
            int(self.d1[i]),
            tuple(int(c) for c in self.d2_flat[lo:hi]),
            int(self.labels[i]),
        )


@dataclass
class FullRankModel:
    """Dense weight tensor classifier at one resolution pair."""

    family: str
    weights: np.ndarray
    bias: float
    court_res: Resolution
    defender_res: Resolution
    n_contexts: int = 1
    player_ids: dict[int, int] | None = None  # original id -> dense index
    fingerprint: str | None = None
    variant: str | None = None  # pipeline variant name, when trained by one

    def __post_init__(self):
        _check_family(self.family)
        expect = expected_full_shape(
            self.family, self.weights.shape[0], self.court_res, self.defender_res, self.n_contexts
        )
        if tuple(self.weights.shape) != expect:
            raise ValueError(
                f"{self.family} weights shape {self.weights.shape} != expected {expect}"
            )

    @property
    def n_players(self) -> int:
        return self.weights.shape[0]


@dataclass
class LowRankModel:
    """CP-factorized classifier: A (players), optional B (contexts, st only),
    C (court cells, extended for dynamic), D (defender cells)."""

    family: str
    A: np.ndarray
    B: np.ndarray | None
    C: np.ndarray
    D: np.ndarray
    bias: float
    court_res: Resolution
    defender_res: Resolution
    n_contexts: int = 1
    player_ids: dict[int, int] | None = None
    fingerprint: str | None = None
    variant: str | None = None

    def __post_init__(self):
        _check_family(self.family)
        ranks = {m.shape[1] for m in (self.A, self.C, self.D)}
        if self.family == "st":
            if self.B is None:
                raise ValueError("st models require a context factor B")
            ranks.add(self.B.shape[1])
        elif self.B is not None:
            raise ValueError(f"{self.family} models carry no context factor B")
        if len(ranks) != 1:
            raise ValueError(f"factor column counts disagree: {sorted(ranks)}")
        n_court = self.court_res[0] * self.court_res[1]
        expect_c = n_court * (self.n_contexts if self.family == "dynamic" else 1)
        if self.C.shape[0] != expect_c:
            raise ValueError(f"C has {self.C.shape[0]} rows, expected {expect_c}")
        if self.D.shape[0] != self.defender_res[0] * self.defender_res[1]:
            raise ValueError(f"D has {self.D.shape[0]} rows, expected defender grid size")

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def n_players(self) -> int:
        return self.A.shape[0]

    def factors(self) -> list[np.ndarray]:
        if self.family == "st":
            return [self.A, self.B, self.C, self.D]
        return [self.A, self.C, self.D]


Model = FullRankModel | LowRankModel


@dataclass(frozen=True)
class LossReport:
    data_loss: float
    reg_loss: float

    @property
    def total(self) -> float:
        return self.data_loss + self.reg_loss


def _check_family(family: str) -> None:
    if family not in FAMILIES:
        raise ValueError(f"unknown model family {family!r}; expected one of {FAMILIES}")


def expected_full_shape(
    family: str, n_players: int, court_res: Resolution, defender_res: Resolution, n_contexts: int
) -> tuple[int, ...]:
    n_court = court_res[0] * court_res[1]
    n_def = defender_res[0] * defender_res[1]
    if family == "st":
        return (n_players, n_contexts, n_court, n_def)
    if family == "dynamic":
        return (n_players, n_contexts * n_court, n_def)
    return (n_players, n_court, n_def)


def forward_full(model: FullRankModel, enc: SampleEncoding) -> float:
    """Probability for one sample under the full-rank model."""
    W = model.weights
    if model.family == "st":
        if not 0 <= enc.context < W.shape[1]:
            raise IndexError(f"context {enc.context} outside tensor axis of size {W.shape[1]}")
        sub = W[enc.player, enc.context]
    else:
        sub = W[enc.player]
    if not 0 <= enc.court_cell < sub.shape[0]:
        raise IndexError(f"court cell {enc.court_cell} outside axis of size {sub.shape[0]}")
    logit = model.bias
    for d2 in enc.defender_cells:
        if not 0 <= d2 < sub.shape[1]:
            raise IndexError(f"defender cell {d2} outside axis of size {sub.shape[1]}")
        logit += sub[enc.court_cell, d2]
    return float(sigmoid(logit))


def forward_lowrank(model: LowRankModel, enc: SampleEncoding) -> float:
    """Probability for one sample under the low-rank model."""
    if not 0 <= enc.player < model.A.shape[0]:
        raise IndexError(f"player {enc.player} outside factor A")
    if not 0 <= enc.court_cell < model.C.shape[0]:
        raise IndexError(f"court cell {enc.court_cell} outside factor C")
    logit = model.bias
    for d2 in enc.defender_cells:
        if not 0 <= d2 < model.D.shape[0]:
            raise IndexError(f"defender cell {d2} outside factor D")
        core = model.A[enc.player] * model.C[enc.court_cell] * model.D[d2]
        if model.family == "st":
            if not 0 <= enc.context < model.B.shape[0]:
                raise IndexError(f"context {enc.context} outside factor B")
            core = core * model.B[enc.context]
        logit += float(core.sum())
    return float(sigmoid(logit))


def batch_logits(model: Model, batch: EncodedBatch) -> np.ndarray:
    """Vectorized logits for a batch; matches the per-sample forward passes."""
    n = len(batch)
    rep = batch.sample_of_defender
    if isinstance(model, FullRankModel):
        W = model.weights
        if model.family == "st":
            vals = W[batch.players[rep], batch.contexts[rep], batch.d1[rep], batch.d2_flat]
        else:
            vals = W[batch.players[rep], batch.d1[rep], batch.d2_flat]
        return model.bias + np.bincount(rep, weights=vals, minlength=n)
    dsum = _segment_sum(model.D[batch.d2_flat], rep, n, model.rank)
    core = model.A[batch.players] * model.C[batch.d1] * dsum
    if model.family == "st":
        core = core * model.B[batch.contexts]
    return model.bias + core.sum(axis=1)


def predict_proba_batch(model: Model, batch: EncodedBatch) -> np.ndarray:
    return sigmoid(batch_logits(model, batch))


def bce_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    p = np.clip(probs, _PROB_CLAMP, 1.0 - _PROB_CLAMP)
    return float(-np.mean(labels * np.log(p) + (1.0 - labels) * np.log1p(-p)))


def temporal_penalty(values: np.ndarray, n_blocks: int, lam: float, axis: int = 0):
    """Squared-Frobenius penalty between adjacent context blocks.

    Splits ``axis`` into ``n_blocks`` equal blocks V_0..V_{F-1} and returns
    ``(lam * sum_f ||V_f - V_{f-1}||^2, gradient)`` with the gradient shaped
    like ``values``. Adding a common constant to every block leaves the
    penalty unchanged.
    """
    size = values.shape[axis]
    if size % n_blocks != 0:
        raise ValueError(f"axis of size {size} not divisible into {n_blocks} blocks")
    moved = np.moveaxis(values, axis, 0)
    blocks = moved.reshape(n_blocks, size // n_blocks, *moved.shape[1:])
    diffs = blocks[1:] - blocks[:-1]
    penalty = float(lam * np.sum(diffs * diffs))
    grad_blocks = np.zeros_like(blocks)
    grad_blocks[1:] += 2.0 * lam * diffs
    grad_blocks[:-1] -= 2.0 * lam * diffs
    grad = np.moveaxis(grad_blocks.reshape(moved.shape), 0, axis)
    return penalty, grad


def _segment_sum(values: np.ndarray, seg: np.ndarray, n: int, width: int) -> np.ndarray:
    out = np.empty((n, width))
    for k in range(width):
        out[:, k] = np.bincount(seg, weights=values[:, k], minlength=n)
    return out


def loss_and_grad(model: Model, batch: EncodedBatch, lam: float = 0.0):
    """Mean binary cross-entropy plus the temporal block penalty, with exact
    analytic gradients for every parameter.

    The penalty applies only to dynamic-family models with ``lam > 0``: on the
    full-rank weight tensor it ties adjacent court blocks along the extended
    axis; on the low-rank model it ties the corresponding row blocks of C.

    Returns ``(LossReport, grads)`` with ``grads`` keyed like the parameters
    (``weights``/``bias`` or ``A``/``B``/``C``/``D``/``bias``).
    """
    n = len(batch)
    if n == 0:
        raise ValueError("loss_and_grad requires a non-empty batch")
    logits = batch_logits(model, batch)
    probs = sigmoid(logits)
    data_loss = bce_loss(probs, batch.labels)
    g = (probs - batch.labels) / n
    rep = batch.sample_of_defender
    g_rep = g[rep]
    reg_loss = 0.0
    if isinstance(model, FullRankModel):
        W = model.weights
        if model.family == "st":
            flat_idx = np.ravel_multi_index(
                (batch.players[rep], batch.contexts[rep], batch.d1[rep], batch.d2_flat), W.shape
            )
        else:
            flat_idx = np.ravel_multi_index(
                (batch.players[rep], batch.d1[rep], batch.d2_flat), W.shape
            )
        grad_w = np.bincount(flat_idx, weights=g_rep, minlength=W.size).reshape(W.shape)
        if model.family == "dynamic" and lam != 0.0:
            reg_loss, grad_pen = temporal_penalty(W, model.n_contexts, lam, axis=1)
            grad_w = grad_w + grad_pen
        grads = {"weights": grad_w, "bias": float(g.sum())}
    else:
        rank = model.rank
        A_rows = model.A[batch.players]
        C_rows = model.C[batch.d1]
        D_sum = _segment_sum(model.D[batch.d2_flat], rep, n, rank)
        B_rows = model.B[batch.contexts] if model.family == "st" else None
        gcol = g[:, None]
        if B_rows is None:
            grad_A = _segment_sum(gcol * C_rows * D_sum, batch.players, model.A.shape[0], rank)
            grad_C = _segment_sum(gcol * A_rows * D_sum, batch.d1, model.C.shape[0], rank)
            per_def = (gcol * A_rows * C_rows)[rep]
        else:
            grad_A = _segment_sum(
                gcol * B_rows * C_rows * D_sum, batch.players, model.A.shape[0], rank
            )
            grad_B = _segment_sum(
                gcol * A_rows * C_rows * D_sum, batch.contexts, model.B.shape[0], rank
            )
            grad_C = _segment_sum(
                gcol * A_rows * B_rows * D_sum, batch.d1, model.C.shape[0], rank
            )
            per_def = (gcol * A_rows * B_rows * C_rows)[rep]
        grad_D = _segment_sum(per_def, batch.d2_flat, model.D.shape[0], rank)
        if model.family == "dynamic" and lam != 0.0:
            reg_loss, grad_pen = temporal_penalty(model.C, model.n_contexts, lam, axis=0)
            grad_C = grad_C + grad_pen
        grads = {"A": grad_A, "C": grad_C, "D": grad_D, "bias": float(g.sum())}
        if B_rows is not None:
            grads["B"] = grad_B
    return LossReport(data_loss=data_loss, reg_loss=reg_loss), grads


def init_lowrank_from_full(
    full: FullRankModel, rank: int, seed: int = 0, max_iters: int = 500, tol: float = 1e-8
) -> LowRankModel:
    """CP handoff: decompose the trained full-rank tensor and use the factors
    to initialize the low-rank model; the bias carries over.

    Factor column norms are rebalanced across modes (reconstruction
    unchanged) so the low-rank SGD stage starts well-conditioned.
    """
    factors = rebalance_factors(
        cp_als(full.weights, rank, max_iters=max_iters, tol=tol, seed=seed)
    )
    if full.family == "st":
        A, B, C, D = factors
    else:
        (A, C, D), B = factors, None
    return LowRankModel(
        family=full.family,
        A=A,
        B=B,
        C=C,
        D=D,
        bias=full.bias,
        court_res=full.court_res,
        defender_res=full.defender_res,
        n_contexts=full.n_contexts,
        player_ids=full.player_ids,
        fingerprint=full.fingerprint,
        variant=full.variant,
    )


def initial_bias(labels: np.ndarray) -> float:
    """log-odds of the positive rate, clamped away from degenerate rates;
    counters the heavy negative skew of shoot-within-horizon labels."""
    rate = float(np.mean(labels)) if len(labels) else 0.5
    rate = min(max(rate, 1e-6), 1.0 - 1e-6)
    return float(np.log(rate / (1.0 - rate)))


# ---------------------------------------------------------------------------
# Model container: magic, 8-byte big-endian header length, JSON header with
# sorted keys, then raw float64 little-endian C-order arrays in header order.
# No timestamps anywhere, so identical models produce identical bytes.
# ---------------------------------------------------------------------------


def _header_common(model: Model) -> dict:
    return {
        "family": model.family,
        "bias": model.bias,
        "court_res": list(model.court_res),
        "defender_res": list(model.defender_res),
        "n_contexts": model.n_contexts,
        "player_ids": (
            sorted([int(k), int(v)] for k, v in model.player_ids.items())
            if model.player_ids is not None
            else None
        ),
        "fingerprint": model.fingerprint,
        "variant": model.variant,
    }


def save_model(model: Model, path) -> None:
    arrays: list[tuple[str, np.ndarray]] = []
    header = _header_common(model)
    if isinstance(model, FullRankModel):
        header["kind"] = "full"
        arrays.append(("weights", model.weights))
    else:
        header["kind"] = "lowrank"
        for name in ("A", "B", "C", "D"):
            mat = getattr(model, name)
            if mat is not None:
                arrays.append((name, mat))
    header["arrays"] = [{"name": n, "shape": list(a.shape)} for n, a in arrays]
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(blob).to_bytes(8, "big"))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a courtgrid model file")
        hlen = int.from_bytes(fh.read(8), "big")
        header = json.loads(fh.read(hlen).decode())
        arrays = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"{path}: truncated array {entry['name']}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    player_ids = (
        {int(k): int(v) for k, v in header["player_ids"]}
        if header["player_ids"] is not None
        else None
    )
    common = dict(
        family=header["family"],
        bias=float(header["bias"]),
        court_res=tuple(header["court_res"]),
        defender_res=tuple(header["defender_res"]),
        n_contexts=int(header["n_contexts"]),
        player_ids=player_ids,
        fingerprint=header["fingerprint"],
        variant=header.get("variant"),
    )
    if header["kind"] == "full":
        return FullRankModel(weights=arrays["weights"], **common)
    return LowRankModel(
        A=arrays["A"], B=arrays.get("B"), C=arrays["C"], D=arrays["D"], **common
    )
