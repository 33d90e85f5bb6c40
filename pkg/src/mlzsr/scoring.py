"""Relatedness scores, temporal pooling, label ranking and score fusion."""

import numpy as np

from .exceptions import ConfigError, DomainError, ShapeError
from .numerics import DTYPE, check_finite

POOLINGS = ("average", "max", "lagm")


def segment_scores(ev, es):
    """Dot products of every segment embedding with every label embedding.

    Parameters
    ----------
    ev : array, shape (T, d_e) or (B, T, d_e)
        Per-segment visual embeddings.
    es : array, shape (d_e, n_labels)
        Label embeddings as columns.
    """
    ev = np.asarray(getattr(ev, "values", ev), dtype=DTYPE)
    es = np.asarray(es, dtype=DTYPE)
    if es.ndim != 2 or ev.shape[-1] != es.shape[0]:
        raise ShapeError(f"embedding dims differ: {ev.shape} vs {es.shape}")
    return check_finite(ev @ es, "segment scores")


def lagm_groups(T, n_groups):
    """Half-open ``(start, stop)`` segment ranges of the overlapping groups.

    Groups hold ``2T / n_groups`` segments and overlap by half; the last
    group is clipped at ``T``.
    """
    if n_groups < 1 or (2 * T) % n_groups:
        raise ConfigError(f"2*T={2 * T} is not divisible by the group count {n_groups}")
    size = 2 * T // n_groups
    return [
        ((g * size) // 2, min(((g + 2) * size) // 2, T)) for g in range(n_groups)
    ]


def pool_average(s):
    s = np.asarray(s, dtype=DTYPE)
    if s.shape[-2] < 1:
        raise ShapeError("need at least one segment")
    return s.mean(axis=-2)


def pool_max(s):
    return np.asarray(s, dtype=DTYPE).max(axis=-2)


def pool_lagm(s, n_groups):
    """Maximum over overlapping group averages ("local average, global max")."""
    s = np.asarray(s, dtype=DTYPE)
    groups = lagm_groups(s.shape[-2], n_groups)
    means = np.stack([s[..., a:b, :].mean(axis=-2) for a, b in groups], axis=-2)
    return means.max(axis=-2)


def pool(s, kind="average", n_groups=1):
    """Pool ``(…, T, C)`` segment scores to ``(…, C)``; also returns a backward closure."""
    s = np.asarray(s, dtype=DTYPE)
    T = s.shape[-2]
    if kind == "average":
        out = pool_average(s)

        def backward(d):
            return np.repeat(d[..., None, :] / T, T, axis=-2)

    elif kind == "max":
        idx = np.argmax(s, axis=-2)
        out = np.take_along_axis(s, idx[..., None, :], axis=-2)[..., 0, :]

        def backward(d):
            ds = np.zeros(s.shape)
            np.put_along_axis(ds, idx[..., None, :], d[..., None, :], axis=-2)
            return ds

    elif kind == "lagm":
        groups = lagm_groups(T, n_groups)
        means = np.stack([s[..., a:b, :].mean(axis=-2) for a, b in groups], axis=-2)
        best = np.argmax(means, axis=-2)
        out = np.take_along_axis(means, best[..., None, :], axis=-2)[..., 0, :]

        def backward(d):
            ds = np.zeros(s.shape)
            for g, (a, b) in enumerate(groups):
                sel = (best == g) * d / (b - a)
                ds[..., a:b, :] += sel[..., None, :]
            return ds

    else:
        raise ConfigError(f"unknown pooling {kind!r}; expected one of {POOLINGS}")
    return out, backward


def instance_label_score(ev, e_c):
    """Average over segments of ``<e_t, e_c>``."""
    ev = np.asarray(getattr(ev, "values", ev), dtype=DTYPE)
    return float(np.mean(ev @ np.asarray(e_c, dtype=DTYPE)))


def rank_labels(scores, label_ids=None):
    """Label ids sorted by descending score; ties go to the smaller id.

    Returns ``(ids, sorted_scores)``.
    """
    scores = np.asarray(scores, dtype=DTYPE)
    ids = np.arange(scores.size) if label_ids is None else np.asarray(label_ids)
    if ids.shape != scores.shape:
        raise ShapeError("one label id per score required")
    order = np.lexsort((ids, -scores))
    return ids[order], scores[order]


def ranking_order(S):
    """Row-wise column order by descending score, ties by ascending column index."""
    S = np.asarray(S, dtype=DTYPE)
    return np.argsort(-S, axis=-1, kind="stable")


def normalize_scores(S):
    """Min-max map the whole score matrix into ``[0, 1]``.

    A constant matrix maps to 0.5 everywhere.
    """
    S = np.asarray(S, dtype=DTYPE)
    if S.size == 0:
        raise DomainError("cannot normalize an empty score set")
    lo, hi = S.min(), S.max()
    if hi == lo:
        return np.full(S.shape, 0.5)
    return (S - lo) / (hi - lo)


def fuse_scores(a, b):
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.shape != b.shape:
        raise ShapeError(f"cannot fuse {a.shape} with {b.shape}")
    return (a + b) / 2.0
