"""Weighted, reordered heatmap performance profiles from trained low-rank
factors, plus CSV and portable-pixmap export.

Each profile is one column of the court factor reshaped to the court grid.
Profiles are ranked by absolute weight: a strongly negative ("cold") profile
is as informative as a hot one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import LowRankModel

EXPORT_FORMATS = ("csv", "raster")


@dataclass(frozen=True)
class Heatmap:
    """A court-shaped matrix with an importance weight and provenance."""

    grid: np.ndarray = field(repr=False)
    weight: float
    k: int
    player: int | None = None
    context: int | None = None
    block: int | None = None


ProfileSet = list[Heatmap]


def _ranked(heatmaps: ProfileSet, top_n: int | None = None) -> ProfileSet:
    # Descending |weight|; ties break toward the lower factor column.
    ordered = sorted(heatmaps, key=lambda h: (-abs(h.weight), h.k))
    return ordered if top_n is None else ordered[:top_n]


def general_heatmaps(model: LowRankModel) -> ProfileSet:
    """Average-behavior profiles: raw court-factor columns weighted by the
    mean player loading (times the mean context loading for ST models).

    Dynamic models have no court factor shared across contexts; use
    :func:`context_heatmaps` for those.
    """
    if model.family == "dynamic":
        raise ValueError(
            "dynamic models have per-context courts; use context_heatmaps instead"
        )
    rows, cols = model.court_res
    weights = model.A.mean(axis=0)
    if model.family == "st":
        weights = weights * model.B.mean(axis=0)
    return _ranked(
        [
            Heatmap(grid=model.C[:, k].reshape(rows, cols).copy(), weight=float(weights[k]), k=k)
            for k in range(model.rank)
        ]
    )


def player_profiles(
    model: LowRankModel, player: int, context: int = 0, top_n: int = 4
) -> ProfileSet:
    """Top profiles for one player (and context, for ST models).

    Weight k is A[player, k] (times B[context, k] for ST); the grid is the
    court column scaled by that weight, so the heatmaps sum to the player's
    score surface.
    """
    if not 0 <= player < model.n_players:
        raise ValueError(f"player {player} outside [0, {model.n_players})")
    if model.family == "dynamic":
        raise ValueError("use context_heatmaps for dynamic models")
    if model.family == "st":
        if not 0 <= context < model.n_contexts:
            raise ValueError(f"context {context} outside [0, {model.n_contexts})")
        weights = model.A[player] * model.B[context]
    else:
        weights = model.A[player]
    rows, cols = model.court_res
    return _ranked(
        [
            Heatmap(
                grid=weights[k] * model.C[:, k].reshape(rows, cols),
                weight=float(weights[k]),
                k=k,
                player=player,
                context=context if model.family == "st" else None,
            )
            for k in range(model.rank)
        ],
        top_n,
    )


def context_heatmaps(
    model: LowRankModel, player: int, top_n: int = 4
) -> dict[int, ProfileSet]:
    """Per-context profile sets for a dynamic model.

    The court factor holds one block of rows per context; block f of column k
    is the context-f heatmap, weighted (and scaled) by A[player, k].
    """
    if model.family != "dynamic":
        raise ValueError("context_heatmaps requires a dynamic model")
    if not 0 <= player < model.n_players:
        raise ValueError(f"player {player} outside [0, {model.n_players})")
    rows, cols = model.court_res
    n_court = rows * cols
    weights = model.A[player]
    out: dict[int, ProfileSet] = {}
    for f in range(model.n_contexts):
        block = model.C[f * n_court : (f + 1) * n_court]
        out[f] = _ranked(
            [
                Heatmap(
                    grid=weights[k] * block[:, k].reshape(rows, cols),
                    weight=float(weights[k]),
                    k=k,
                    player=player,
                    context=f,
                    block=f,
                )
                for k in range(model.rank)
            ],
            top_n,
        )
    return out


def _diverging_rgb(grid: np.ndarray) -> np.ndarray:
    """Blue-white-red colormap, symmetric about 0, scaled to max |value|.

    Negating the grid swaps the red and blue channels exactly; an all-zero
    grid renders white.
    """
    peak = float(np.max(np.abs(grid))) if grid.size else 0.0
    t = grid / peak if peak > 0 else np.zeros_like(grid)
    fade = np.rint(255.0 * (1.0 - np.abs(t))).astype(np.uint8)
    rgb = np.empty((*grid.shape, 3), dtype=np.uint8)
    pos = t >= 0
    rgb[..., 0] = np.where(pos, 255, fade)
    rgb[..., 1] = fade
    rgb[..., 2] = np.where(pos, fade, 255)
    return rgb


def export_heatmap(hm: Heatmap, path, fmt: str = "csv") -> None:
    """Write one heatmap as a CSV matrix or a binary P6 pixmap.

    CSV cells use shortest exact float formatting, so parsing them back
    yields bitwise-equal values; both formats are byte-deterministic for
    identical input.
    """
    if fmt not in EXPORT_FORMATS:
        raise ValueError(f"format must be one of {EXPORT_FORMATS}, got {fmt!r}")
    try:
        if fmt == "csv":
            with open(path, "w", encoding="utf-8", newline="") as fh:
                for row in hm.grid:
                    fh.write(",".join(repr(float(v)) for v in row) + "\n")
        else:
            rgb = _diverging_rgb(hm.grid)
            height, width = hm.grid.shape
            with open(path, "wb") as fh:
                fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
                fh.write(rgb.tobytes())
    except OSError as exc:
        raise OSError(f"failed writing heatmap to {path}: {exc}") from exc


def parse_heatmap_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        rows = [[float(v) for v in line.strip().split(",")] for line in fh if line.strip()]
    return np.array(rows)


def heatmap_filename(variant: str, who: str, context, k: int, fmt: str) -> str:
    """Naming scheme: <variant>_<player|general>_<context>_k<rank>.{csv,ppm}."""
    ext = "csv" if fmt == "csv" else "ppm"
    ctx = "all" if context is None else str(context)
    return f"{variant}_{who}_{ctx}_k{k}.{ext}"
