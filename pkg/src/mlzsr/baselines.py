"""Ablations (NRC, WSE, RLR) and comparison methods (DSP, ConSE, COSTA).

DSP, ConSE and COSTA work on instance-level features, the mean of an
instance's segment vectors. Their SVM/SVR components are replaced by
linear models minimizing ``mean(loss) + lam * ||W||^2`` with
``lam = 1 / (2 C n)``: ridge regression in closed form for DSP, full-batch
gradient descent on the logistic (ConSE) or hinge (COSTA) loss.
"""

import io
import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ParseError, ShapeError
from .model import init_visual_model
from .data import randomize_label_reps  # noqa: F401  (re-exported ablation)
from .numerics import DTYPE, sigmoid
from .train import train_wse  # noqa: F401  (re-exported ablation)

LINEAR_MAGIC = b"MLZSRLIN"
_LOSS_CODES = {"squared": 0, "hinge": 1, "logistic": 2}


def instance_features(X):
    """Average segment vector per instance."""
    X = np.asarray(X, dtype=DTYPE)
    if X.ndim != 3:
        raise ShapeError("expected (n_instances, T, d_x)")
    return X.mean(axis=1)


def build_nrc_model(cfg, input_dim):
    """Visual model whose LSTM is replaced by a per-segment ReLU layer."""
    return init_visual_model(input_dim, cfg.hidden_dim, cfg.dense_dim, cfg.embed_dim,
                             seed=[cfg.seed, 1], dropout=cfg.dropout, recurrent=False)


@dataclass
class LinearModel:
    """``f(x) = ((x - mean) / scale) W^T + b`` with one output per column."""

    W: np.ndarray
    b: np.ndarray
    lam: float
    loss: str
    mean: np.ndarray
    scale: np.ndarray

    def decision(self, F):
        F = np.asarray(F, dtype=DTYPE)
        return ((F - self.mean) / self.scale) @ self.W.T + self.b

    def to_bytes(self):
        out_dim, in_dim = self.W.shape
        buf = io.BytesIO()
        buf.write(LINEAR_MAGIC)
        buf.write(struct.pack("<IIIId", 1, _LOSS_CODES[self.loss], out_dim, in_dim, self.lam))
        for a in (self.W, self.b, self.mean, self.scale):
            buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data):
        if data[:8] != LINEAR_MAGIC:
            raise ParseError("not a linear model block (bad magic)")
        version, code, out_dim, in_dim, lam = struct.unpack("<IIIId", data[8:32])
        if version != 1:
            raise ParseError(f"unsupported linear model version {version}")
        arr = np.frombuffer(data[32:], dtype="<f8").astype(DTYPE)
        sizes = [out_dim * in_dim, out_dim, in_dim, in_dim]
        if arr.size != sum(sizes):
            raise ParseError("truncated linear model block")
        parts = np.split(arr, np.cumsum(sizes)[:-1])
        loss = {v: k for k, v in _LOSS_CODES.items()}[code]
        return cls(parts[0].reshape(out_dim, in_dim), parts[1], lam, loss, parts[2], parts[3])


def fit_linear(F, T, loss="squared", C=1.0, lr=0.1, n_iter=500):
    """Fit one linear output per column of ``T``.

    ``squared`` regresses real targets; ``hinge`` and ``logistic`` take
    ``{+1, -1}`` targets (one-vs-rest columns).
    """
    if loss not in _LOSS_CODES:
        raise ConfigError(f"unknown linear loss {loss!r}")
    if not C > 0:
        raise ConfigError("C must be positive")
    F = np.asarray(F, dtype=DTYPE)
    T = np.asarray(T, dtype=DTYPE)
    if T.ndim == 1:
        T = T[:, None]
    n, d = F.shape
    if T.shape[0] != n or n == 0:
        raise ShapeError("features and targets must have the same non-zero row count")
    lam = 1.0 / (2.0 * C * n)
    mean = F.mean(axis=0)
    scale = F.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (F - mean) / scale
    if loss == "squared":
        t_mean = T.mean(axis=0)
        W = np.linalg.solve(Z.T @ Z / n + lam * np.eye(d), Z.T @ (T - t_mean) / n).T
        return LinearModel(W, t_mean.copy(), lam, loss, mean, scale)
    W = np.zeros((T.shape[1], d))
    b = np.zeros(T.shape[1])
    for _ in range(n_iter):
        margin = T * (Z @ W.T + b)
        if loss == "hinge":
            dz = -T * (margin < 1.0)
        else:
            dz = -T * sigmoid(-margin)
        W -= lr * (dz.T @ Z / n + 2.0 * lam * W)
        b -= lr * dz.mean(axis=0)
    return LinearModel(W, b, lam, loss, mean, scale)


# -- DSP ------------------------------------------------------------------


def mean_label_vectors(label_sets, semantics):
    """Average semantic vector of each instance's labels."""
    semantics = np.asarray(semantics, dtype=DTYPE)
    return np.stack([semantics[list(ls)].mean(axis=0) for ls in label_sets])


def dsp_fit(F, targets, C=1.0):
    """Linear regression from instance features to mean label vectors."""
    return fit_linear(F, targets, "squared", C)


def dsp_predict(model, F, semantics):
    """Scores ``<s_hat, s_c>`` for every row ``s_c`` of ``semantics``."""
    return model.decision(F) @ np.asarray(semantics, dtype=DTYPE).T


# -- ConSE ----------------------------------------------------------------


def conse_fit(F, Y, C=1.0, lr=0.1, n_iter=500):
    """One-vs-rest logistic classifiers over the known labels (``Y`` in ±1)."""
    return fit_linear(F, Y, "logistic", C, lr, n_iter)


def conse_combination(P, S_known, top=5, norm="l2"):
    """Weighted sum of the top-``top`` known label vectors per row of ``P``.

    Weights are the top probabilities divided by their L2 norm (``norm="l1"``
    divides by their sum instead).
    """
    P = np.asarray(P, dtype=DTYPE)
    S_known = np.asarray(S_known, dtype=DTYPE)
    if norm not in ("l2", "l1"):
        raise ConfigError("norm must be 'l2' or 'l1'")
    top = min(top, P.shape[1])
    idx = np.argsort(-P, axis=1, kind="stable")[:, :top]
    w = np.take_along_axis(P, idx, axis=1)
    denom = np.linalg.norm(w, axis=1) if norm == "l2" else w.sum(axis=1)
    w = w / np.where(denom > 0, denom, 1.0)[:, None]
    return np.einsum("nk,nkd->nd", w, S_known[idx])


def conse_predict(model, F, S_known, semantics, top=5, norm="l2"):
    P = sigmoid(model.decision(F))
    s_hat = conse_combination(P, S_known, top, norm)
    return s_hat @ np.asarray(semantics, dtype=DTYPE).T


# -- COSTA ----------------------------------------------------------------


def costa_fit(F, Y, C=1.0, lr=0.1, n_iter=500):
    """One-vs-rest hinge classifiers over the known labels."""
    return fit_linear(F, Y, "hinge", C, lr, n_iter)


def costa_weights(S_unseen, S_known):
    """``beta[c, k] = softmax_k(-||s_c - s_k||)``; rows sum to one."""
    D = np.linalg.norm(
        np.asarray(S_unseen, dtype=DTYPE)[:, None, :] - np.asarray(S_known, dtype=DTYPE)[None],
        axis=2,
    )
    Z = -D - (-D).max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def costa_predict(model, F, known, semantics):
    """Scores for every label; unseen classifiers are beta-weighted sums of
    the known ones (all combination coefficients fixed to one)."""
    semantics = np.asarray(semantics, dtype=DTYPE)
    known = list(known)
    unseen = [c for c in range(semantics.shape[0]) if c not in set(known)]
    W = np.zeros((semantics.shape[0], model.W.shape[1]))
    b = np.zeros(semantics.shape[0])
    W[known], b[known] = model.W, model.b
    if unseen:
        beta = costa_weights(semantics[unseen], semantics[known])
        W[unseen] = beta @ model.W
        b[unseen] = beta @ model.b
    Z = (np.asarray(F, dtype=DTYPE) - model.mean) / model.scale
    return Z @ W.T + b
