"""scikit-learn style estimators around the training and baseline code.

All estimators take ``X`` of shape ``(n_instances, T, d_x)``, a binary
indicator ``Y`` over the training labels and the semantic vectors of those
labels. At prediction time any semantic table may be passed, so unseen
labels are scored the same way as training labels.
"""

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import baselines
from .exceptions import ConfigError, ShapeError
from .numerics import DTYPE, make_rng
from .scoring import ranking_order
from .train import TrainConfig, fit_alternating


def check_sequences(X, d_x=None):
    """Validate a ``(n, T, d_x)`` float array."""
    X = check_array(X, allow_nd=True, dtype=DTYPE, ensure_2d=False)
    if X.ndim != 3:
        raise ShapeError(f"X must have shape (n_instances, T, d_x), got {X.shape}")
    if d_x is not None and X.shape[2] != d_x:
        raise ShapeError(f"X has {X.shape[2]} features per segment, expected {d_x}")
    return X


def check_targets(Y, n_instances, n_labels):
    """Binary indicator -> ``{+1, -1}`` matrix."""
    Y = check_array(Y, dtype=DTYPE)
    if Y.shape != (n_instances, n_labels):
        raise ShapeError(f"Y must be ({n_instances}, {n_labels}), got {Y.shape}")
    if not np.all(np.isin(Y, (0.0, 1.0, -1.0))):
        raise ConfigError("Y must be a 0/1 (or -1/+1) indicator matrix")
    return np.where(Y > 0, 1.0, -1.0)


def top_k_indicator(S, k):
    """1 for the ``k`` highest-scoring labels of each row, ties by column order."""
    S = np.asarray(S, dtype=DTYPE)
    k = min(int(k), S.shape[1])
    out = np.zeros(S.shape, dtype=int)
    np.put_along_axis(out, ranking_order(S)[:, :k], 1, axis=1)
    return out


class _ZeroShotMixin:
    def _semantics(self, semantics):
        if semantics is None:
            return self.semantics_
        semantics = check_array(semantics, dtype=DTYPE)
        if semantics.shape[1] != self.semantics_.shape[1]:
            raise ShapeError("semantic vectors have the wrong dimension")
        return semantics

    def predict(self, X, semantics=None):
        """Top-``top_k`` label indicator for every instance."""
        return top_k_indicator(self.decision_function(X, semantics), self.top_k)


class JointRankingEmbedding(_ZeroShotMixin, BaseEstimator):
    """Visual LSTM and semantic embedding trained alternately with a ranking loss.

    Parameters mirror :class:`mlzsr.train.TrainConfig`. When no validation
    set is given to :meth:`fit`, ``validation_fraction`` of the instances are
    held out at random for early stopping.
    """

    def __init__(self, loss="ranknet", margin=1.0, lr_visual=1e-3, lr_semantic=1e-3,
                 batch_size=32, label_batch_size=8, embed_dim=24, hidden_dim=32,
                 dense_dim=32, semantic_hidden_dim=32, dropout=0.0, patience=10,
                 max_rounds=60, pooling="average", n_groups=1, recurrent=True,
                 learn_semantic=True, validation_fraction=0.15, top_k=5, random_state=0):
        self.loss = loss
        self.margin = margin
        self.lr_visual = lr_visual
        self.lr_semantic = lr_semantic
        self.batch_size = batch_size
        self.label_batch_size = label_batch_size
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.dense_dim = dense_dim
        self.semantic_hidden_dim = semantic_hidden_dim
        self.dropout = dropout
        self.patience = patience
        self.max_rounds = max_rounds
        self.pooling = pooling
        self.n_groups = n_groups
        self.recurrent = recurrent
        self.learn_semantic = learn_semantic
        self.validation_fraction = validation_fraction
        self.top_k = top_k
        self.random_state = random_state

    def train_config(self):
        params = self.get_params()
        for key in ("validation_fraction", "top_k", "random_state"):
            params.pop(key)
        return TrainConfig(seed=self.random_state, **params)

    def fit(self, X, Y, semantics, X_val=None, Y_val=None):
        cfg = self.train_config()
        X = check_sequences(X)
        semantics = check_array(semantics, dtype=DTYPE)
        Y = check_targets(Y, X.shape[0], semantics.shape[0])
        if X_val is None:
            if not 0 < self.validation_fraction < 1:
                raise ConfigError("validation_fraction must lie in (0, 1)")
            perm = make_rng([self.random_state, 5]).permutation(X.shape[0])
            n_val = max(1, int(round(self.validation_fraction * X.shape[0])))
            if n_val >= X.shape[0]:
                raise ConfigError("too few instances to hold out a validation set")
            val, tr = perm[:n_val], perm[n_val:]
            X, Y, X_val, Y_val = X[tr], Y[tr], X[val], Y[val]
        else:
            X_val = check_sequences(X_val, X.shape[2])
            Y_val = check_targets(Y_val, X_val.shape[0], semantics.shape[0])
        if not self.learn_semantic:
            cfg = replace(cfg, embed_dim=semantics.shape[1])
        self.checkpoint_ = fit_alternating(X, Y, semantics, X_val, Y_val, cfg)
        self.semantics_ = semantics
        self.n_features_in_ = X.shape[2]
        self.n_rounds_ = len(self.checkpoint_.history)
        self.best_round_ = self.checkpoint_.round
        return self

    def decision_function(self, X, semantics=None):
        """Pooled relatedness scores against ``semantics`` (default: training labels)."""
        check_is_fitted(self, "checkpoint_")
        X = check_sequences(X, self.n_features_in_)
        return self.checkpoint_.scores(X, self._semantics(semantics))

    def transform(self, X):
        """Mean segment embedding of each instance, ``(n, d_e)``."""
        check_is_fitted(self, "checkpoint_")
        X = check_sequences(X, self.n_features_in_)
        return self.checkpoint_.visual.forward(X).values.mean(axis=1)

    def embed_labels(self, semantics=None):
        check_is_fitted(self, "checkpoint_")
        return self.checkpoint_.label_embeddings(self._semantics(semantics))


class DSP(_ZeroShotMixin, BaseEstimator):
    """Ridge regression from mean segment features to mean label vectors."""

    def __init__(self, C=1.0, top_k=5):
        self.C = C
        self.top_k = top_k

    def fit(self, X, Y, semantics):
        X = check_sequences(X)
        semantics = check_array(semantics, dtype=DTYPE)
        Y = check_targets(Y, X.shape[0], semantics.shape[0])
        if not (Y > 0).any(axis=1).all():
            raise ConfigError("every training instance needs at least one label")
        sets = [np.flatnonzero(y > 0) for y in Y]
        self.model_ = baselines.dsp_fit(baselines.instance_features(X),
                                        baselines.mean_label_vectors(sets, semantics), self.C)
        self.semantics_ = semantics
        self.n_features_in_ = X.shape[2]
        return self

    def decision_function(self, X, semantics=None):
        check_is_fitted(self, "model_")
        F = baselines.instance_features(check_sequences(X, self.n_features_in_))
        return baselines.dsp_predict(self.model_, F, self._semantics(semantics))


class ConSE(_ZeroShotMixin, BaseEstimator):
    """Known-label logistic classifiers; label vectors are combined by the
    top-``top_combine`` probabilities."""

    def __init__(self, C=1.0, lr=0.1, n_iter=500, top_combine=5, norm="l2", top_k=5):
        self.C = C
        self.lr = lr
        self.n_iter = n_iter
        self.top_combine = top_combine
        self.norm = norm
        self.top_k = top_k

    def fit(self, X, Y, semantics):
        X = check_sequences(X)
        semantics = check_array(semantics, dtype=DTYPE)
        Y = check_targets(Y, X.shape[0], semantics.shape[0])
        self.model_ = baselines.conse_fit(baselines.instance_features(X), Y,
                                          self.C, self.lr, self.n_iter)
        self.semantics_ = semantics
        self.n_features_in_ = X.shape[2]
        return self

    def decision_function(self, X, semantics=None):
        check_is_fitted(self, "model_")
        F = baselines.instance_features(check_sequences(X, self.n_features_in_))
        return baselines.conse_predict(self.model_, F, self.semantics_, self._semantics(semantics),
                                       self.top_combine, self.norm)


class COSTA(_ZeroShotMixin, BaseEstimator):
    """Known-label hinge classifiers; a new label's classifier is the
    distance-softmax combination of the known ones.

    A row of ``semantics`` that equals a training label vector exactly is
    scored with that label's own classifier.
    """

    def __init__(self, C=1.0, lr=0.1, n_iter=500, top_k=5):
        self.C = C
        self.lr = lr
        self.n_iter = n_iter
        self.top_k = top_k

    def fit(self, X, Y, semantics):
        X = check_sequences(X)
        semantics = check_array(semantics, dtype=DTYPE)
        Y = check_targets(Y, X.shape[0], semantics.shape[0])
        self.model_ = baselines.costa_fit(baselines.instance_features(X), Y,
                                          self.C, self.lr, self.n_iter)
        self.semantics_ = semantics
        self.n_features_in_ = X.shape[2]
        return self

    def decision_function(self, X, semantics=None):
        check_is_fitted(self, "model_")
        F = baselines.instance_features(check_sequences(X, self.n_features_in_))
        semantics = self._semantics(semantics)
        n_known = self.semantics_.shape[0]
        cols, new_rows = [], []
        for row in semantics:
            hit = np.flatnonzero(np.all(self.semantics_ == row, axis=1))
            if hit.size:
                cols.append(int(hit[0]))
            else:
                cols.append(n_known + len(new_rows))
                new_rows.append(row)
        table = np.vstack([self.semantics_, *new_rows]) if new_rows else self.semantics_
        S = baselines.costa_predict(self.model_, F, range(n_known), table)
        return S[:, cols]
