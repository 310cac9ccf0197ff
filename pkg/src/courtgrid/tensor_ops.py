"""Dense CP factorization: alternating least squares, reconstruction, and a
column-alignment helper for comparing factor sets up to permutation and sign.
"""

from __future__ import annotations

import numpy as np

_RIDGE = 1e-8


def _unfold(tensor: np.ndarray, mode: int) -> np.ndarray:
    return np.moveaxis(tensor, mode, 0).reshape(tensor.shape[mode], -1)


def _khatri_rao(mats: list[np.ndarray]) -> np.ndarray:
    # Column-wise Khatri-Rao, rows in row-major order over the input matrices.
    out = mats[0]
    rank = out.shape[1]
    for m in mats[1:]:
        out = (out[:, None, :] * m[None, :, :]).reshape(-1, rank)
    return out


def cp_reconstruct(factors: list[np.ndarray]) -> np.ndarray:
    """Dense tensor from CP factors: W[d...] = sum_k prod_modes F[mode][d_mode, k]."""
    n = len(factors)
    letters = [chr(ord("a") + i) for i in range(n)]
    subs = ",".join(f"{c}z" for c in letters) + "->" + "".join(letters)
    return np.einsum(subs, *factors, optimize=True)


def cp_als(
    tensor: np.ndarray,
    rank: int,
    max_iters: int = 500,
    tol: float = 1e-8,
    seed: int = 0,
    return_errors: bool = False,
):
    """CP decomposition by alternating least squares.

    Factors are initialized from seeded uniform(-0.5, 0.5) draws. Each sweep
    updates every mode by solving ridge-stabilized normal equations, and the
    relative Frobenius reconstruction error is tracked; the sweep loop returns
    once the error improvement drops below ``tol`` or after ``max_iters``
    sweeps. The error is non-increasing across sweeps up to round-off.

    Returns the factor list (one mode_size x rank matrix per mode), or
    ``(factors, errors)`` when ``return_errors`` is set.
    """
    tensor = np.asarray(tensor, dtype=float)
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    if tensor.ndim < 2 or any(s < 1 for s in tensor.shape):
        raise ValueError(f"tensor shape {tensor.shape} not factorizable")
    rng = np.random.default_rng(seed)
    factors = [rng.uniform(-0.5, 0.5, (s, rank)) for s in tensor.shape]
    norm = np.linalg.norm(tensor)
    denom = norm if norm > 0 else 1.0
    grams = [f.T @ f for f in factors]
    eye = np.eye(rank)
    errors: list[float] = []
    prev = None
    for _ in range(max_iters):
        for mode in range(tensor.ndim):
            others = [i for i in range(tensor.ndim) if i != mode]
            gram = np.ones((rank, rank))
            for i in others:
                gram *= grams[i]
            mttkrp = _unfold(tensor, mode) @ _khatri_rao([factors[i] for i in others])
            factors[mode] = np.linalg.solve(gram + _RIDGE * eye, mttkrp.T).T
            if not np.all(np.isfinite(factors[mode])):
                raise FloatingPointError("cp_als produced non-finite factors")
            grams[mode] = factors[mode].T @ factors[mode]
        err = float(np.linalg.norm(tensor - cp_reconstruct(factors)) / denom)
        errors.append(err)
        if prev is not None and prev - err < tol:
            break
        prev = err
    if return_errors:
        return factors, errors
    return factors


def rebalance_factors(factors: list[np.ndarray]) -> list[np.ndarray]:
    """Spread each rank-1 component's magnitude evenly across modes.

    Column k of every mode is rescaled to carry the same share of the
    component's total weight, leaving the reconstruction unchanged. ALS
    output can be badly lopsided (one huge mode, others tiny), which makes
    subsequent gradient steps ill-conditioned.
    """
    n_modes = len(factors)
    rank = factors[0].shape[1]
    norms = np.stack([np.linalg.norm(f, axis=0) for f in factors])  # (modes, K)
    total = norms.prod(axis=0)
    share = np.power(total, 1.0 / n_modes)
    out = []
    for f, n in zip(factors, norms):
        scale = np.ones(rank)
        nz = n > 0
        scale[nz] = share[nz] / n[nz]
        out.append(f * scale)
    return out


def _column_cosines(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # cos[j, k] between a[:, j] and b[:, k]; zero-norm columns contribute 0.
    na = np.linalg.norm(a, axis=0)
    nb = np.linalg.norm(b, axis=0)
    dots = a.T @ b
    scale = np.outer(na, nb)
    out = np.zeros_like(dots)
    np.divide(dots, scale, out=out, where=scale > 0)
    return out


def align_factors(
    est: list[np.ndarray], truth: list[np.ndarray]
) -> tuple[np.ndarray, np.ndarray, float]:
    """Greedy alignment of estimated CP factors against a reference set.

    Scores estimated column j against truth column k by the mean absolute
    column cosine across modes, then greedily matches the best remaining pair
    until all rank components are matched.

    Returns ``(perm, signs, mean_cosine)`` where ``est[mode][:, perm[k]]``
    corresponds to ``truth[mode][:, k]``, ``signs[mode, k]`` is the sign of
    the matched cosine (+1 for zero-norm columns), and ``mean_cosine`` is the
    mean absolute cosine over modes and matched components.
    """
    if len(est) != len(truth):
        raise ValueError("factor lists must have the same number of modes")
    for e, t in zip(est, truth):
        if e.shape != t.shape:
            raise ValueError(f"factor shapes differ: {e.shape} vs {t.shape}")
    rank = est[0].shape[1]
    cosines = np.stack([_column_cosines(e, t) for e, t in zip(est, truth)])
    score = np.abs(cosines).mean(axis=0)  # (est col, truth col)
    perm = np.full(rank, -1, dtype=np.intp)
    used_est = np.zeros(rank, dtype=bool)
    used_truth = np.zeros(rank, dtype=bool)
    work = score.copy()
    for _ in range(rank):
        j, k = np.unravel_index(np.argmax(work), work.shape)
        perm[k] = j
        used_est[j] = True
        used_truth[k] = True
        work[j, :] = -np.inf
        work[:, k] = -np.inf
    signs = np.where(cosines[:, perm, np.arange(rank)] < 0, -1.0, 1.0)
    mean_cosine = float(np.abs(cosines[:, perm, np.arange(rank)]).mean())
    return perm, signs, mean_cosine
