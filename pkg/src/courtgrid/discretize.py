"""Spatial discretization: court cells, rotated defender grids, court extension,
and coarse-to-fine cell maps.

Grid notation is (rows, cols) where rows bin the depth axis (baseline to
half-court, y) and cols bin the width axis (sideline to sideline, x), so a
40x50 grid on the default 47ft x 50ft half-court has roughly 1ft cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

Resolution = tuple[int, int]

COURT_RESOLUTIONS: tuple[Resolution, ...] = ((4, 5), (8, 10), (20, 25), (40, 50))
DEFENDER_RESOLUTIONS: tuple[Resolution, ...] = ((6, 6), (12, 12))

# Rotated offsets this close to zero (in feet) snap to zero before binning, so
# a defender exactly on the ball-handler/basket ray stays in the anchor
# column regardless of round-off sign.
_SNAP_FT = 1e-9

# Anchor of the 12x12 defender grid, as (col, row): the ball-handler sits at
# column 6, row 2, leaving 9 of 12 rows in front (toward the basket).
_REFERENCE_DEFENDER_RES = (12, 12)
_REFERENCE_ANCHOR = (6, 2)


@dataclass(frozen=True)
class CourtGeometry:
    """Physical half-court extent in feet. Defaults: 47ft deep, 50ft wide."""

    depth_ft: float = 47.0
    width_ft: float = 50.0

    def __post_init__(self):
        if self.depth_ft <= 0 or self.width_ft <= 0:
            raise ValueError(f"court extent must be positive, got {self}")


@dataclass(frozen=True)
class ResolutionPair:
    """A (court grid, defender grid) combination used by one training stage.

    The usual schedule pairs a 6x6 defender grid with the 4x5 court even
    though 36 defender cells exceed 20 court cells, so no cell-count ordering
    is enforced here.
    """

    court: Resolution
    defender: Resolution

    def __post_init__(self):
        for name, res in (("court", self.court), ("defender", self.defender)):
            rows, cols = res
            if rows < 1 or cols < 1:
                raise ValueError(f"{name} resolution must be positive, got {res}")

    @property
    def court_cells(self) -> int:
        return self.court[0] * self.court[1]

    @property
    def defender_cells(self) -> int:
        return self.defender[0] * self.defender[1]


def default_anchor(resolution: Resolution) -> tuple[int, int]:
    """Scale the reference 12x12 anchor (6, 2) to another grid by integer scaling.

    For 6x6 this yields (3, 1), preserving more space in front of the
    ball-handler than behind.
    """
    rows, cols = resolution
    ref_rows, ref_cols = _REFERENCE_DEFENDER_RES
    return (cols * _REFERENCE_ANCHOR[0] // ref_cols, rows * _REFERENCE_ANCHOR[1] // ref_rows)


@dataclass(frozen=True)
class DefenderGridSpec:
    """Egocentric grid around the ball-handler, oriented toward the basket.

    The frontal axis (rows) points from the ball-handler to the basket; the
    anchor is the (col, row) cell containing the ball-handler. Default extent
    is 24ft x 24ft, i.e. 2ft cells at 12x12.
    """

    resolution: Resolution = (12, 12)
    anchor: tuple[int, int] | None = None
    extent_ft: tuple[float, float] = (24.0, 24.0)  # (frontal, lateral)

    def __post_init__(self):
        rows, cols = self.resolution
        if rows < 1 or cols < 1:
            raise ValueError(f"defender resolution must be positive, got {self.resolution}")
        if self.extent_ft[0] <= 0 or self.extent_ft[1] <= 0:
            raise ValueError(f"defender grid extent must be positive, got {self.extent_ft}")
        if self.anchor is None:
            object.__setattr__(self, "anchor", default_anchor(self.resolution))
        acol, arow = self.anchor
        if not (0 <= arow < rows and 0 <= acol < cols):
            raise ValueError(f"anchor {self.anchor} outside {self.resolution} grid")

    @property
    def cell_ft(self) -> tuple[float, float]:
        """(frontal, lateral) cell size in feet."""
        rows, cols = self.resolution
        return (self.extent_ft[0] / rows, self.extent_ft[1] / cols)

    def at_resolution(self, resolution: Resolution) -> "DefenderGridSpec":
        """The same physical grid re-binned at another resolution."""
        return DefenderGridSpec(resolution=resolution, anchor=None, extent_ft=self.extent_ft)


def court_cell(pos, geometry: CourtGeometry, res: Resolution) -> int:
    """Map a continuous (x, y) position to a flattened court-cell index.

    Out-of-bounds coordinates are clamped to the court boundary; non-finite
    coordinates raise.
    """
    x, y = float(pos[0]), float(pos[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"non-finite court position {pos!r}")
    rows, cols = res
    row = min(max(int(y / geometry.depth_ft * rows), 0), rows - 1)
    col = min(max(int(x / geometry.width_ft * cols), 0), cols - 1)
    return row * cols + col


def court_cells(xs, ys, geometry: CourtGeometry, res: Resolution) -> np.ndarray:
    """Vectorized :func:`court_cell` over coordinate arrays."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise ValueError("non-finite court positions")
    rows, cols = res
    r = np.clip(np.floor(ys / geometry.depth_ft * rows).astype(np.intp), 0, rows - 1)
    c = np.clip(np.floor(xs / geometry.width_ft * cols).astype(np.intp), 0, cols - 1)
    return r * cols + c


def rotate_offsets(bh_pos, basket_pos, defenders) -> np.ndarray:
    """Defender offsets in the ball-handler frame, as (frontal, lateral) pairs.

    The frontal axis is the unit vector from the ball-handler toward the
    basket; the lateral axis is its +90-degree rotation. This is a proper
    rotation, so distances are preserved.
    """
    bh = np.asarray(bh_pos, dtype=float)
    basket = np.asarray(basket_pos, dtype=float)
    toward = basket - bh
    norm = float(np.hypot(toward[0], toward[1]))
    if norm == 0.0:
        raise ValueError("ball-handler and basket coincide; rotation undefined")
    front = toward / norm
    lateral = np.array([-front[1], front[0]])
    offsets = np.asarray(defenders, dtype=float).reshape(-1, 2) - bh
    return np.column_stack([offsets @ front, offsets @ lateral])


def defender_cells(bh_pos, basket_pos, defenders, spec: DefenderGridSpec) -> list[int]:
    """Bin defenders into the rotated egocentric grid; returns sorted unique cells.

    Offsets outside the grid extent are dropped. Multiple defenders in one
    cell collapse to a single index (the encoding is binary per cell).
    """
    if len(defenders) == 0:
        return []
    uv = rotate_offsets(bh_pos, basket_pos, defenders)
    uv[np.abs(uv) < _SNAP_FT] = 0.0
    rows, cols = spec.resolution
    acol, arow = spec.anchor
    cell_h, cell_w = spec.cell_ft
    r = np.floor(uv[:, 0] / cell_h).astype(np.intp) + arow
    c = np.floor(uv[:, 1] / cell_w).astype(np.intp) + acol
    keep = (r >= 0) & (r < rows) & (c >= 0) & (c < cols)
    return sorted(set((r[keep] * cols + c[keep]).tolist()))


def defender_cells_batch(
    bh: np.ndarray,
    basket: np.ndarray,
    defenders_flat: np.ndarray,
    offsets: np.ndarray,
    spec: DefenderGridSpec,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized defender binning over many samples.

    Parameters
    ----------
    bh, basket : (n, 2) arrays of positions.
    defenders_flat : (m, 2) array of defender positions, samples concatenated.
    offsets : (n + 1,) prefix offsets into ``defenders_flat``.

    Returns
    -------
    (cells_flat, cell_offsets): per-sample sorted unique in-grid cell indices in
    CSR layout. Matches per-sample :func:`defender_cells` exactly.
    """
    n = bh.shape[0]
    counts = np.diff(offsets)
    m = int(offsets[-1])
    if m == 0:
        return np.empty(0, dtype=np.intp), np.zeros(n + 1, dtype=np.intp)
    toward = basket - bh
    norm = np.hypot(toward[:, 0], toward[:, 1])
    if np.any(norm == 0.0):
        raise ValueError("ball-handler and basket coincide; rotation undefined")
    front = toward / norm[:, None]
    sample_of = np.repeat(np.arange(n, dtype=np.intp), counts)
    rel = defenders_flat - bh[sample_of]
    f = front[sample_of]
    u = rel[:, 0] * f[:, 0] + rel[:, 1] * f[:, 1]
    v = rel[:, 0] * -f[:, 1] + rel[:, 1] * f[:, 0]
    u[np.abs(u) < _SNAP_FT] = 0.0
    v[np.abs(v) < _SNAP_FT] = 0.0
    rows, cols = spec.resolution
    acol, arow = spec.anchor
    cell_h, cell_w = spec.cell_ft
    r = np.floor(u / cell_h).astype(np.intp) + arow
    c = np.floor(v / cell_w).astype(np.intp) + acol
    keep = (r >= 0) & (r < rows) & (c >= 0) & (c < cols)
    cells = r[keep] * cols + c[keep]
    samples = sample_of[keep]
    # Dedupe (sample, cell) pairs and rebuild CSR offsets.
    key = samples * (rows * cols) + cells
    uniq = np.unique(key)
    out_samples = uniq // (rows * cols)
    out_cells = uniq % (rows * cols)
    out_offsets = np.zeros(n + 1, dtype=np.intp)
    np.add.at(out_offsets, out_samples + 1, 1)
    np.cumsum(out_offsets, out=out_offsets)
    return out_cells.astype(np.intp), out_offsets


def extend_cell(d1: int, f: int, res: Resolution) -> int:
    """Side-by-side court extension: cell index d1 on context f maps to
    ``d1 + f * (rows * cols)``. Bijective onto [0, F * rows * cols)."""
    rows, cols = res
    n_cells = rows * cols
    if not 0 <= d1 < n_cells:
        raise ValueError(f"court cell {d1} outside [0, {n_cells})")
    if f < 0:
        raise ValueError(f"context value must be >= 0, got {f}")
    return d1 + f * n_cells


def decode_cell(extended: int, res: Resolution) -> tuple[int, int]:
    """Inverse of :func:`extend_cell`: extended index -> (d1, f)."""
    rows, cols = res
    n_cells = rows * cols
    if extended < 0:
        raise ValueError(f"extended index must be >= 0, got {extended}")
    return extended % n_cells, extended // n_cells


@dataclass(frozen=True)
class FinegrainMap:
    """Parent assignment from a fine grid onto a coarse grid.

    ``parent_of[child]`` is the coarse cell covering fine cell ``child``;
    children lists partition the fine grid.
    """

    coarse: Resolution
    fine: Resolution
    parent_of: np.ndarray = field(repr=False)

    def children_of(self, parent: int) -> np.ndarray:
        return np.nonzero(self.parent_of == parent)[0]

    @property
    def n_coarse(self) -> int:
        return self.coarse[0] * self.coarse[1]

    @property
    def n_fine(self) -> int:
        return self.fine[0] * self.fine[1]


def finegrain_map(coarse: Resolution, fine: Resolution) -> FinegrainMap:
    """Build the coarse->fine cell map used when transferring weights.

    Divisible resolutions (and the identity) use exact block refinement; the
    8x10 -> 20x25 step is not divisible, so each fine cell is assigned to the
    coarse cell containing its center.
    """
    crows, ccols = coarse
    frows, fcols = fine
    if frows < crows or fcols < ccols:
        raise ValueError(f"fine grid {fine} must refine coarse grid {coarse}")
    if frows % crows == 0 and fcols % ccols == 0:
        rr, cr = frows // crows, fcols // ccols
        fr, fc = np.divmod(np.arange(frows * fcols, dtype=np.intp), fcols)
        parent = (fr // rr) * ccols + (fc // cr)
    else:
        # Center containment: fine cell (r, c) has center ((r+.5)/frows, (c+.5)/fcols)
        # in unit court coordinates; geometry cancels for uniform grids.
        fr, fc = np.divmod(np.arange(frows * fcols, dtype=np.intp), fcols)
        pr = np.floor((fr + 0.5) * crows / frows).astype(np.intp)
        pc = np.floor((fc + 0.5) * ccols / fcols).astype(np.intp)
        parent = pr * ccols + pc
    return FinegrainMap(coarse=coarse, fine=fine, parent_of=parent)


def block_parent_of(fmap: FinegrainMap, n_blocks: int) -> np.ndarray:
    """Parent map for an extended (side-by-side) court axis.

    Extended fine index ``f * n_fine + child`` maps to
    ``f * n_coarse + parent_of[child]``, refining each context block in place.
    """
    if n_blocks < 1:
        raise ValueError(f"n_blocks must be >= 1, got {n_blocks}")
    base = fmap.parent_of
    shifts = np.arange(n_blocks, dtype=np.intp) * fmap.n_coarse
    return (base[None, :] + shifts[:, None]).reshape(-1)
