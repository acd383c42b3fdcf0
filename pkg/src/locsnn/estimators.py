"""scikit-learn estimator fronts for the two hybrids.

X is a batch of spike grids, shape (n_samples, n_taxels, n_steps) with
binary entries; an (n_taxels, n_steps) grid is treated as a single sample.
fit trains on everything it is given (use run_protocol for the
split/round evaluation protocol), predict returns labels from the classes
seen in y, and decision_function exposes the pre-argmax class scores.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .models import HybridLifGnn, HybridSrmFc, spike_counts
from .neurons import SrmParams, SurrogateSpec
from .topology import make_order
from .training import TrainConfig, train_model
from .validation import as_batch, check_labels


class _SpikingClassifier(BaseEstimator, ClassifierMixin):
    def fit(self, X, y):
        X = as_batch(X)
        y = check_labels(y, n_samples=len(X))
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes to fit")
        self.n_taxels_ = X.shape[1]
        self.n_steps_ = X.shape[2]
        self.model_ = self._build(X.shape[1], X.shape[2], len(self.classes_))
        self.history_ = train_model(
            self.model_, X.astype(np.float64), y_enc, self._train_config())
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = self._check_input(X)
        return self.classes_[self.model_.predict(X.astype(np.float64))]

    def _check_input(self, X):
        X = as_batch(X)
        if X.shape[1] != self.n_taxels_ or X.shape[2] != self.n_steps_:
            raise ValueError(
                f"grids are {X.shape[1]}x{X.shape[2]}, fitted on "
                f"{self.n_taxels_}x{self.n_steps_}"
            )
        return X

    def _seed(self):
        return 0 if self.random_state is None else int(self.random_state)


class HybridSrmFcClassifier(_SpikingClassifier):
    """Kernel-neuron hybrid with a combined spike-count read-out."""

    def __init__(self, hidden=32, threshold=1.0, tau_s=2.0, tau_r=2.0,
                 kernel_window=None, surrogate="exponential", surrogate_scale=2.0,
                 order_kind="identity", epochs=30, batch_size=16, lr=0.005,
                 l2=0.0, lam=1.0, target_true=None, target_false=None,
                 random_state=None):
        self.hidden = hidden
        self.threshold = threshold
        self.tau_s = tau_s
        self.tau_r = tau_r
        self.kernel_window = kernel_window
        self.surrogate = surrogate
        self.surrogate_scale = surrogate_scale
        self.order_kind = order_kind
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.l2 = l2
        self.lam = lam
        self.target_true = target_true
        self.target_false = target_false
        self.random_state = random_state

    def _build(self, n_taxels, n_steps, n_classes):
        return HybridSrmFc(
            n_taxels, n_steps, n_classes, hidden=self.hidden,
            srm=SrmParams(self.threshold, self.tau_s, self.tau_r, self.kernel_window),
            surrogate=SurrogateSpec(self.surrogate, self.surrogate_scale),
            order=make_order(self.order_kind, n_taxels),
            seed=self._seed(),
        )

    def _train_config(self):
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            l2=self.l2, lam=self.lam, target_true=self.target_true,
            target_false=self.target_false, seed=self._seed(),
        )

    def decision_function(self, X):
        """Combined per-class spike counts (the predict scores), shape
        (n_samples, n_classes). lam only weights the training loss."""
        check_is_fitted(self, "model_")
        outs = self.model_.forward(self._check_input(X).astype(np.float64))
        return spike_counts(outs.out_time) + spike_counts(outs.out_loc)


class HybridLifGnnClassifier(_SpikingClassifier):
    """Leaky graph-network hybrid with a fused label-vector read-out."""

    def __init__(self, filters=16, fc_widths=(64,), hops=2, alpha=0.8, beta=0.8,
                 threshold=0.5, temporal_mode="sparse", fusion="mean",
                 surrogate="rectangular", surrogate_scale=1.0, order_kind="identity",
                 epochs=30, batch_size=16, lr=0.002, lr_decay=1.0,
                 coords=None, random_state=None):
        self.filters = filters
        self.fc_widths = fc_widths
        self.hops = hops
        self.alpha = alpha
        self.beta = beta
        self.threshold = threshold
        self.temporal_mode = temporal_mode
        self.fusion = fusion
        self.surrogate = surrogate
        self.surrogate_scale = surrogate_scale
        self.order_kind = order_kind
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_decay = lr_decay
        self.coords = coords
        self.random_state = random_state

    def _build(self, n_taxels, n_steps, n_classes):
        return HybridLifGnn(
            n_taxels, n_steps, n_classes, coords=self.coords, filters=self.filters,
            fc_widths=tuple(self.fc_widths), hops=self.hops, alpha=self.alpha,
            beta=self.beta, threshold=self.threshold, temporal_mode=self.temporal_mode,
            fusion=self.fusion,
            surrogate=SurrogateSpec(self.surrogate, self.surrogate_scale),
            order=make_order(self.order_kind, n_taxels),
            seed=self._seed(),
        )

    def _train_config(self):
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            lr_decay=self.lr_decay, seed=self._seed(),
        )

    def decision_function(self, X):
        """Fused label vectors, shape (n_samples, n_classes)."""
        check_is_fitted(self, "model_")
        outs = self.model_.forward(self._check_input(X).astype(np.float64))
        return outs.fused
