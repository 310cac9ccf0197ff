"""Playstyle clustering: standardize 23-dim synergy features, project onto the
top three principal components, and K-Means the projections into 7 archetypes.

Frequencies, points-per-possession, and volume live on very different scales,
so columns are standardized before the PCA step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .validation import check_matrix, check_seed

ARCHETYPE_NAMES = (
    "Ball-Handling Guards",
    "Catch & Shoot Guards",
    "Perimeter Wings",
    "Versatile Wings",
    "Stretch 4s",
    "Rolling Bigs",
    "Post-Up Bigs",
)


@dataclass(frozen=True)
class PCAModel:
    """Column mean, orthonormal component rows, and per-component variances."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def transform(self, X) -> np.ndarray:
        X = check_matrix(X, "X", n_cols=self.mean.shape[0])
        return (X - self.mean) @ self.components.T


@dataclass(frozen=True)
class ClusterModel:
    """K-Means centers plus the point/player -> cluster assignment."""

    centers: np.ndarray
    assignment: dict[int, int]
    inertia: float
    label_names: tuple[str, ...] | None = None

    @property
    def n_clusters(self) -> int:
        return self.centers.shape[0]

    def labels(self) -> np.ndarray:
        return np.array([self.assignment[k] for k in sorted(self.assignment)])

    def name_of(self, cluster_id: int) -> str:
        if self.label_names is None:
            return str(cluster_id)
        return self.label_names[cluster_id]


def standardize(X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center and scale columns to zero mean, unit population stdev.

    Zero-variance columns pass through as zeros. Returns (Z, mean, std) with
    std entries of 1.0 recorded for constant columns so the transform is
    reusable on new rows.
    """
    X = check_matrix(X)
    if X.shape[0] < 2:
        raise ValueError(f"standardize needs at least 2 rows, got {X.shape[0]}")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    safe = np.where(std == 0, 1.0, std)
    return (X - mean) / safe, mean, safe


def pca_fit(X, n_components: int = 3) -> PCAModel:
    """Top principal components via SVD of the centered data matrix.

    Components are the leading covariance eigenvectors with the sign fixed so
    each row's largest-magnitude entry is positive; explained variances are
    the corresponding eigenvalues (sample covariance, n-1 denominator) in
    descending order.
    """
    X = check_matrix(X)
    n, d = X.shape
    if n_components > min(n, d):
        raise ValueError(
            f"n_components={n_components} exceeds min(rows, cols)={min(n, d)}"
        )
    if n < n_components:
        raise ValueError(f"need at least {n_components} samples, got {n}")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    components = vt[:n_components].copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    explained = (s[:n_components] ** 2) / (n - 1) if n > 1 else np.zeros(n_components)
    return PCAModel(mean=mean, components=components, explained_variance=explained)


def _kmeans_pp_init(P: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = P.shape[0]
    centers = np.empty((k, P.shape[1]))
    centers[0] = P[rng.integers(n)]
    d2 = np.sum((P - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = P[rng.integers(n)]
            continue
        centers[j] = P[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((P - centers[j]) ** 2, axis=1))
    return centers


def _lloyd(P: np.ndarray, centers: np.ndarray, max_iters: int) -> tuple[np.ndarray, np.ndarray, float]:
    k = centers.shape[0]
    labels = None
    for _ in range(max_iters):
        d2 = ((P[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        for j in range(k):
            mask = new_labels == j
            if mask.any():
                centers[j] = P[mask].mean(axis=0)
            else:
                # Re-seed an empty cluster on the point farthest from its center.
                worst = np.argmax(d2[np.arange(len(P)), new_labels])
                centers[j] = P[worst]
                new_labels[worst] = j
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
    d2 = ((P[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(len(P)), labels].sum())
    return centers, labels, inertia


def kmeans(
    P,
    k: int = 7,
    seed: int = 0,
    max_iters: int = 300,
    restarts: int = 10,
    label_names=None,
) -> ClusterModel:
    """K-Means with k-means++ seeding and best-of-``restarts`` selection.

    Lloyd iterations run to an assignment fixpoint or ``max_iters``; the run
    with the lowest inertia wins, ties going to the earliest restart, so the
    result is deterministic for a fixed seed.
    """
    P = check_matrix(P, "P")
    seed = check_seed(seed)
    if P.shape[0] < k:
        raise ValueError(f"need at least k={k} points, got {P.shape[0]}")
    streams = np.random.SeedSequence(seed).spawn(restarts)
    best = None
    for r in range(restarts):
        rng = np.random.default_rng(streams[r])
        centers, labels, inertia = _lloyd(P, _kmeans_pp_init(P, k, rng), max_iters)
        if best is None or inertia < best[2]:
            best = (centers, labels, inertia)
    centers, labels, inertia = best
    return ClusterModel(
        centers=centers,
        assignment={i: int(c) for i, c in enumerate(labels)},
        inertia=inertia,
        label_names=tuple(label_names) if label_names is not None else None,
    )


def silhouette(P, assignment) -> float:
    """Mean silhouette score (b - a) / max(a, b) over points.

    Points in singleton clusters contribute 0, as do points where a = b = 0.
    Requires at least two non-empty clusters.
    """
    P = check_matrix(P, "P")
    labels = np.asarray(
        [assignment[i] for i in range(P.shape[0])]
        if isinstance(assignment, dict)
        else assignment
    )
    clusters = np.unique(labels)
    if clusters.size < 2:
        raise ValueError("silhouette requires at least two clusters")
    diff = P[:, None, :] - P[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    scores = np.zeros(P.shape[0])
    for i in range(P.shape[0]):
        own = labels == labels[i]
        if own.sum() <= 1:
            continue  # singleton: s(i) = 0
        a = dist[i, own].sum() / (own.sum() - 1)
        b = min(dist[i, labels == c].mean() for c in clusters if c != labels[i])
        m = max(a, b)
        scores[i] = 0.0 if m == 0 else (b - a) / m
    return float(scores.mean())


def assign_playstyles(
    synergy_rows, k: int = 7, seed: int = 0, label_names=ARCHETYPE_NAMES, restarts: int = 10
) -> ClusterModel:
    """End-to-end playstyle pipeline over parsed synergy rows.

    Standardizes the 23 features, projects onto 3 principal components, and
    clusters the projections; the assignment is keyed by player id. Archetype
    names are caller-supplied configuration.
    """
    rows = list(synergy_rows)
    if len(rows) < k:
        raise ValueError(f"need at least k={k} players, got {len(rows)}")
    if label_names is not None and len(label_names) != k:
        raise ValueError(f"expected {k} label names, got {len(label_names)}")
    ids = [r.player for r in rows]
    X = np.array([r.features() for r in rows])
    Z, _, _ = standardize(X)
    projections = pca_fit(Z, n_components=3).transform(Z)
    model = kmeans(projections, k=k, seed=seed, restarts=restarts, label_names=label_names)
    assignment = {pid: model.assignment[i] for i, pid in enumerate(ids)}
    return ClusterModel(
        centers=model.centers,
        assignment=assignment,
        inertia=model.inertia,
        label_names=model.label_names,
    )


def write_assignments(model: ClusterModel, path) -> None:
    """Write the player -> cluster assignment CSV (player,cluster_id,cluster_name)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["player", "cluster_id", "cluster_name"])
        for player in sorted(model.assignment):
            cid = model.assignment[player]
            writer.writerow([player, cid, model.name_of(cid)])


def read_assignments(path) -> dict[int, int]:
    """Read a player -> cluster CSV written by :func:`write_assignments`."""
    out: dict[int, int] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["player", "cluster_id"]:
            raise ValueError(f"{path}: expected header player,cluster_id[,cluster_name]")
        for record in reader:
            if not record:
                continue
            out[int(record[0])] = int(record[1])
    return out
