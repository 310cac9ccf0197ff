"""Scikit-learn style estimators wrapping the training pipeline and the
playstyle clustering pipeline, so both compose with the wider ecosystem
(get_params/set_params, clone, pipelines).
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, ClusterMixin
from sklearn.exceptions import NotFittedError

from . import cluster as _cluster
from . import trainer as _trainer
from .ingest import densify_players, split_dataset
from .validation import check_matrix, check_samples


class MRTLClassifier(BaseEstimator, ClassifierMixin):
    """Multiresolution tensor classifier with the sklearn estimator API.

    ``fit`` takes a sequence of labeled samples (see ``courtgrid.ingest``);
    labels ride along inside the samples, or can be overridden with ``y``.
    Internally the samples are split train/validation/test, the full-rank
    and low-rank stages run over the resolution schedule, and the decision
    threshold is tuned on the validation part.

    Parameters mirror ``courtgrid.trainer.TrainConfig``; ``variant`` selects
    one of base, st_quarter, st_playstyle, dynamic_quarter, dynamic_playstyle.
    """

    def __init__(
        self,
        variant="base",
        rank=8,
        max_epochs=50,
        initial_lr=0.1,
        lr_decay=0.5,
        patience=1,
        batch_size=512,
        lam=None,
        threshold=None,
        negative_subsample=None,
        split_ratios=(0.8, 0.1, 0.1),
        schedule=None,
        geometry=None,
        grid=None,
        cluster_map=None,
        context_source=None,
        seed=0,
    ):
        self.variant = variant
        self.rank = rank
        self.max_epochs = max_epochs
        self.initial_lr = initial_lr
        self.lr_decay = lr_decay
        self.patience = patience
        self.batch_size = batch_size
        self.lam = lam
        self.threshold = threshold
        self.negative_subsample = negative_subsample
        self.split_ratios = split_ratios
        self.schedule = schedule
        self.geometry = geometry
        self.grid = grid
        self.cluster_map = cluster_map
        self.context_source = context_source
        self.seed = seed

    def _config(self) -> _trainer.TrainConfig:
        return _trainer.TrainConfig(
            max_epochs=self.max_epochs,
            initial_lr=self.initial_lr,
            lr_decay=self.lr_decay,
            patience=self.patience,
            batch_size=self.batch_size,
            rank=self.rank,
            lam=self.lam,
            seed=self.seed,
            threshold=self.threshold,
            negative_subsample=self.negative_subsample,
        )

    def fit(self, X, y=None):
        samples = list(X)
        if y is not None:
            samples = [replace(s, label=int(v)) for s, v in zip(samples, y)]
        check_samples(samples)
        samples, mapping = densify_players(samples)
        cluster_map = self.cluster_map
        if cluster_map is not None:
            # Assignments are keyed by original player id; remap to dense.
            cluster_map = {
                mapping[p]: c for p, c in cluster_map.items() if p in mapping
            }
        data = split_dataset(samples, self.split_ratios, self.seed)
        self.model_, self.report_ = _trainer.run_pipeline(
            data,
            self._config(),
            self.variant,
            schedule=self.schedule,
            geometry=self.geometry,
            grid=self.grid,
            cluster_map=cluster_map,
            context_source=self.context_source,
            player_ids=mapping,
        )
        self.mapping_ = mapping
        self.threshold_ = (
            self.report_.final.threshold if self.report_.final is not None else 0.5
        )
        self.classes_ = np.array([0, 1])
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("MRTLClassifier is not fitted; call fit first")

    def _remap(self, samples):
        unknown = sorted({s.player for s in samples} - set(self.mapping_))
        if unknown:
            raise ValueError(f"unseen player ids {unknown}; the model has no factors for them")
        return [replace(s, player=self.mapping_[s.player]) for s in samples]

    def predict_proba(self, X):
        self._check_fitted()
        samples = self._remap(list(X))
        cluster_map = self.cluster_map
        if cluster_map is not None:
            cluster_map = {
                self.mapping_[p]: c for p, c in cluster_map.items() if p in self.mapping_
            }
        p1 = _trainer.predict_proba(
            self.model_,
            samples,
            geometry=self.geometry,
            grid=self.grid,
            cluster_map=cluster_map,
            context_source=self.context_source,
        )
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= self.threshold_).astype(int)


class PlaystyleClusterer(BaseEstimator, ClusterMixin):
    """Standardize -> PCA(3) -> K-Means playstyle clustering of synergy rows.

    ``fit`` takes the n x 23 synergy feature matrix (11 play-type
    frequencies, 11 points-per-possession columns, total volume).
    """

    def __init__(
        self,
        n_clusters=7,
        n_components=3,
        restarts=10,
        max_iters=300,
        label_names=None,
        seed=0,
    ):
        self.n_clusters = n_clusters
        self.n_components = n_components
        self.restarts = restarts
        self.max_iters = max_iters
        self.label_names = label_names
        self.seed = seed

    def fit(self, X, y=None):
        X = check_matrix(X, "X")
        if X.shape[0] < self.n_clusters:
            raise ValueError(
                f"need at least n_clusters={self.n_clusters} rows, got {X.shape[0]}"
            )
        Z, self.mean_, self.scale_ = _cluster.standardize(X)
        self.pca_ = _cluster.pca_fit(Z, n_components=self.n_components)
        model = _cluster.kmeans(
            self.pca_.transform(Z),
            k=self.n_clusters,
            seed=self.seed,
            max_iters=self.max_iters,
            restarts=self.restarts,
            label_names=self.label_names,
        )
        self.cluster_centers_ = model.centers
        self.labels_ = model.labels()
        self.inertia_ = model.inertia
        return self

    def _check_fitted(self):
        if not hasattr(self, "cluster_centers_"):
            raise NotFittedError("PlaystyleClusterer is not fitted; call fit first")

    def transform(self, X):
        """Project new rows into the fitted 3-d principal subspace."""
        self._check_fitted()
        X = check_matrix(X, "X", n_cols=self.mean_.shape[0])
        return self.pca_.transform((X - self.mean_) / self.scale_)

    def predict(self, X):
        self._check_fitted()
        P = self.transform(X)
        d2 = ((P[:, None, :] - self.cluster_centers_[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)
