"""Regularized pairwise rank losses and their gradients w.r.t. scores.

For scores ``o`` and targets ``y`` in ``{+1, -1}`` with positive set ``P``
and negative set ``Q``::

    ranknet = w * (sum_{p,q} softplus(o_q - o_p) + sum_j softplus(-y_j o_j))
    hinge   = w * (sum_{p,q} max(0, m - o_p + o_q) + sum_j max(0, m - y_j o_j))
    w       = 1 / (|P| |Q| + len(o))

The visual loss ranks labels for one instance, the semantic loss ranks
instances for one label; the formulas coincide. The semantic RankNet
regularizer can be switched to the literal ``1 + exp(-y o)`` form with
``literal=True``.
"""

import numpy as np

from .exceptions import ConfigError, DomainError, ShapeError
from .numerics import DTYPE, check_finite, sigmoid, softplus

LOSSES = ("ranknet", "hinge")


def _check(o, y):
    o = np.asarray(o, dtype=DTYPE)
    y = np.asarray(y, dtype=DTYPE)
    if o.ndim != 1 or o.shape != y.shape:
        raise ShapeError(f"scores {o.shape} and targets {y.shape} must be equal-length vectors")
    if o.size == 0:
        raise ShapeError("empty score vector")
    if not np.all((y == 1.0) | (y == -1.0)):
        raise DomainError("targets must be +1 or -1")
    check_finite(o, "scores")
    return o, y


def _ranknet(o, y, literal=False):
    o, y = _check(o, y)
    pos, neg = y > 0, y < 0
    diff = o[neg][None, :] - o[pos][:, None]
    w = 1.0 / (diff.size + o.size)
    sig = sigmoid(diff)
    grad = np.zeros_like(o)
    grad[pos] = -sig.sum(axis=1)
    grad[neg] = sig.sum(axis=0)
    margin = -y * o
    if literal:
        e = np.exp(margin)
        reg = np.sum(1.0 + e)
        grad += -y * e
    else:
        reg = np.sum(softplus(margin))
        grad += -y * sigmoid(margin)
    loss = w * (np.sum(softplus(diff)) + reg)
    return float(loss), w * grad


def _hinge(o, y, m):
    if not m > 0:
        raise ConfigError(f"margin must be positive, got {m}")
    o, y = _check(o, y)
    pos, neg = y > 0, y < 0
    viol = m + o[neg][None, :] - o[pos][:, None]
    w = 1.0 / (viol.size + o.size)
    active = (viol > 0).astype(DTYPE)
    grad = np.zeros_like(o)
    grad[pos] = -active.sum(axis=1)
    grad[neg] = active.sum(axis=0)
    reg = m - y * o
    grad += -y * (reg > 0)
    loss = w * (np.sum(np.maximum(viol, 0.0)) + np.sum(np.maximum(reg, 0.0)))
    return float(loss), w * grad


def ranknet_visual_loss(o, y):
    """Regularized RankNet loss of one instance's label scores."""
    return _ranknet(o, y)


def ranknet_semantic_loss(o, y, literal=False):
    """Regularized RankNet loss of one label's instance scores."""
    return _ranknet(o, y, literal=literal)


def hinge_visual_loss(o, y, m=1.0):
    return _hinge(o, y, m)


def hinge_semantic_loss(o, y, m=1.0):
    return _hinge(o, y, m)


def rank_loss(o, y, kind="ranknet", margin=1.0):
    if kind == "ranknet":
        return _ranknet(o, y)
    if kind == "hinge":
        return _hinge(o, y, margin)
    raise ConfigError(f"unknown loss {kind!r}; expected one of {LOSSES}")


def rank_loss_rows(O, Y, kind="ranknet", margin=1.0):
    """Row-wise losses for a batch.

    Equivalent to calling :func:`rank_loss` on every row of ``O``/``Y``;
    returns per-row losses ``(B,)`` and gradients ``(B, n)``.
    """
    O = np.asarray(O, dtype=DTYPE)
    Y = np.asarray(Y, dtype=DTYPE)
    if O.ndim != 2 or O.shape != Y.shape:
        raise ShapeError(f"scores {O.shape} and targets {Y.shape} must match")
    if not np.all((Y == 1.0) | (Y == -1.0)):
        raise DomainError("targets must be +1 or -1")
    check_finite(O, "scores")
    if kind not in LOSSES:
        raise ConfigError(f"unknown loss {kind!r}; expected one of {LOSSES}")
    if kind == "hinge" and not margin > 0:
        raise ConfigError(f"margin must be positive, got {margin}")
    pos = (Y > 0).astype(DTYPE)
    neg = (Y < 0).astype(DTYPE)
    # pair[b, p, q] is active when p is positive and q negative
    pair = pos[:, :, None] * neg[:, None, :]
    diff = O[:, None, :] - O[:, :, None]
    w = 1.0 / (pos.sum(1) * neg.sum(1) + O.shape[1])
    margin_term = -Y * O
    if kind == "ranknet":
        pair_loss = np.sum(softplus(diff) * pair, axis=(1, 2))
        d = sigmoid(diff) * pair
        reg = np.sum(softplus(margin_term), axis=1)
        dreg = -Y * sigmoid(margin_term)
    else:
        viol = margin + diff
        pair_loss = np.sum(np.maximum(viol, 0.0) * pair, axis=(1, 2))
        d = (viol > 0) * pair
        reg_terms = margin + margin_term
        reg = np.sum(np.maximum(reg_terms, 0.0), axis=1)
        dreg = -Y * (reg_terms > 0)
    grad = d.sum(axis=1) - d.sum(axis=2) + dreg
    return w * (pair_loss + reg), w[:, None] * grad
