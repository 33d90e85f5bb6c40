"""Analytic-vs-finite-difference gradient checks for every layer and loss.

Each check draws small random instances (``T <= 5``, dims ``<= 8``, ``<= 6`` for
recurrent models),
contracts the component's output with a random upstream tensor and
compares backprop gradients against central differences. Instances whose
ReLU pre-activations or hinge arguments fall within ``1e-4`` of a kink are
redrawn, since finite differences are meaningless there.
"""

import numpy as np

from .losses import hinge_semantic_loss, hinge_visual_loss, ranknet_semantic_loss, ranknet_visual_loss
from .model import Dense, LstmLayer, init_semantic_model, init_visual_model
from .numerics import finite_diff_grad, make_rng, relative_error
from .scoring import pool

KINK = 1e-4
LSTM_MAX = 6  # keeps finite differences over recurrent models affordable
CHECKS = (
    "lstm", "dense_relu", "dense_linear", "visual_lstm", "visual_nrc", "semantic",
    "pipeline", "ranknet_visual", "ranknet_semantic", "hinge_visual", "hinge_semantic",
)


def _near_kink(*zs):
    return any(np.any(np.abs(z) < KINK) for z in zs)


def _setter(obj, name):
    if hasattr(obj, "set_parameters"):
        return lambda v: obj.set_parameters({name: v})
    return lambda v: setattr(obj, name, v)


def _compare(obj, params, analytic, loss_fn, h):
    worst = 0.0
    for name, value in params.items():
        set_value = _setter(obj, name)

        def f(v, set_value=set_value):
            set_value(v)
            return loss_fn()

        numeric = finite_diff_grad(f, value.copy(), h)
        set_value(value)
        worst = max(worst, relative_error(analytic[name], numeric))
    return worst


def _jitter_biases(model, rng):
    # zero biases put whole rows exactly on the ReLU kink when inputs vanish
    model.set_parameters({k: rng.normal(0, 0.5, v.shape)
                          for k, v in model.parameters().items() if k.split(".")[1].startswith("b")})


def _dims(rng, lo=1, hi=8, n=1):
    return [int(v) for v in rng.integers(lo, hi + 1, size=n)]


def _check_lstm(rng, h):
    d_x, n = _dims(rng, hi=LSTM_MAX, n=2)
    T = int(rng.integers(1, 6))
    layer = LstmLayer.init(d_x, n, rng)
    for g in ("i", "f", "c", "o"):
        setattr(layer, f"b_{g}", rng.normal(0, 0.5, n))
    x = rng.normal(size=(2, T, d_x))
    U = rng.normal(size=(2, T, n))

    def loss():
        return float(np.sum(U * layer.forward(x)[0]))

    out, cache = layer.forward(x)
    _, grads = layer.backward(U, cache)
    params = {k: getattr(layer, k) for k in layer.names()}
    return _compare(layer, params, grads, loss, h)


def _check_dense(rng, h, activation):
    d_in, d_out = _dims(rng, n=2)
    layer = Dense.init(d_in, d_out, rng, activation)
    layer.b = rng.normal(0, 0.5, d_out)
    while True:
        x = rng.normal(size=(3, d_in))
        if activation == "linear" or not _near_kink(layer.forward(x)[1][1]):
            break
    U = rng.normal(size=(3, d_out))

    def loss():
        return float(np.sum(U * layer.forward(x)[0]))

    _, cache = layer.forward(x)
    _, grads = layer.backward(U, cache)
    return _compare(layer, {"W": layer.W, "b": layer.b}, grads, loss, h)


def _visual_preacts(model, emb):
    seq_cache, _, dense_cache, _ = emb.cache
    zs = [dense_cache[1]]
    if not model.recurrent:
        zs.append(seq_cache[1])
    return zs


def _check_visual(rng, h, recurrent):
    d_x, n1, n2, d_e = _dims(rng, hi=LSTM_MAX if recurrent else 8, n=4)
    T = int(rng.integers(1, 6))
    dropout = float(rng.choice([0.0, 0.5]))
    seed = int(rng.integers(2**31))
    model = init_visual_model(d_x, n1, n2, d_e, seed=seed, dropout=dropout, recurrent=recurrent)
    _jitter_biases(model, rng)
    while True:
        mask_seed = int(rng.integers(2**31))
        x = rng.normal(size=(2, T, d_x))
        emb = model.forward(x, training=True, rng=make_rng(mask_seed))
        if not _near_kink(*_visual_preacts(model, emb)):
            break
    U = rng.normal(size=emb.values.shape)

    def loss():
        return float(np.sum(U * model.forward(x, training=True, rng=make_rng(mask_seed)).values))

    grads = model.backward(emb, U)
    return _compare(model, {k: v.copy() for k, v in model.parameters().items()}, grads, loss, h)


def _check_semantic(rng, h):
    d_s, n1, d_e = _dims(rng, n=3)
    model = init_semantic_model(d_s, n1, d_e, seed=int(rng.integers(2**31)))
    _jitter_biases(model, rng)
    while True:
        s = rng.normal(size=(3, d_s))
        e, cache = model.forward(s)
        if not _near_kink(cache[0][1]):
            break
    U = rng.normal(size=e.shape)

    def loss():
        return float(np.sum(U * model.forward(s)[0]))

    grads = model.backward(cache, U)
    return _compare(model, {k: v.copy() for k, v in model.parameters().items()}, grads, loss, h)


def _check_pipeline(rng, h):
    """Pooled-score RankNet loss of one instance w.r.t. the visual parameters."""
    d_x, n1, n2, d_e = _dims(rng, hi=LSTM_MAX, n=4)
    n_labels = int(rng.integers(2, 7))
    T = int(rng.integers(1, 6))
    model = init_visual_model(d_x, n1, n2, d_e, seed=int(rng.integers(2**31)))
    _jitter_biases(model, rng)
    E_s = rng.normal(size=(n_labels, d_e))
    y = np.where(rng.random(n_labels) < 0.4, 1.0, -1.0)
    while True:
        x = rng.normal(size=(1, T, d_x))
        emb = model.forward(x)
        if not _near_kink(*_visual_preacts(model, emb)):
            break

    def loss():
        o, _ = pool(model.forward(x).values @ E_s.T, "average")
        return ranknet_visual_loss(o[0], y)[0]

    o, back = pool(emb.values @ E_s.T, "average")
    _, g = ranknet_visual_loss(o[0], y)
    grads = model.backward(emb, back(g[None]) @ E_s)
    return _compare(model, {k: v.copy() for k, v in model.parameters().items()}, grads, loss, h)


def _check_loss(rng, h, fn, hinge):
    n = int(rng.integers(1, 9))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    m = float(rng.choice([0.1, 1.0, 10.0]))
    while True:
        o = rng.normal(0, 2, n)
        if not hinge:
            break
        pos, neg = o[y > 0], o[y < 0]
        viol = m + neg[None, :] - pos[:, None]
        if not _near_kink(viol, m - y * o):
            break
    args = (m,) if hinge else ()
    _, g = fn(o, y, *args)
    numeric = finite_diff_grad(lambda v: fn(v, y, *args)[0], o, h)
    return relative_error(g, numeric)


def run_check(name, rng, h=1e-5):
    """Max relative error of one random instance of check ``name``."""
    if name == "lstm":
        return _check_lstm(rng, h)
    if name in ("dense_relu", "dense_linear"):
        return _check_dense(rng, h, name.split("_")[1])
    if name in ("visual_lstm", "visual_nrc"):
        return _check_visual(rng, h, name == "visual_lstm")
    if name == "semantic":
        return _check_semantic(rng, h)
    if name == "pipeline":
        return _check_pipeline(rng, h)
    fns = {
        "ranknet_visual": (ranknet_visual_loss, False),
        "ranknet_semantic": (ranknet_semantic_loss, False),
        "hinge_visual": (hinge_visual_loss, True),
        "hinge_semantic": (hinge_semantic_loss, True),
    }
    if name not in fns:
        raise KeyError(f"unknown gradient check {name!r}")
    fn, hinge = fns[name]
    return _check_loss(rng, h, fn, hinge)


def gradcheck_all(seed=0, n_instances=100, h=1e-5, checks=CHECKS):
    """``{check: max relative error over n_instances random draws}``."""
    out = {}
    for k, name in enumerate(checks):
        rng = make_rng([seed, k])
        out[name] = max(run_check(name, rng, h) for _ in range(n_instances))
    return out
