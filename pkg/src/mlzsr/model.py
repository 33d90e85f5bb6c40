"""Visual and semantic embedding networks with hand-written backprop.

The visual model maps a ``T x d_x`` segment sequence through an LSTM layer
(or, for the non-recurrent ablation, a per-segment ReLU layer), a dense
ReLU layer and a linear embedding layer, giving one ``d_e`` vector per
segment. The semantic model maps a label vector through one ReLU layer and
a linear embedding layer into the same ``d_e`` space.

Binary layout of one serialized model block (all little-endian)::

    4 bytes   kind tag: b"LSTM", b"NRC_" or b"SEMA"
    uint32    number of dims n, followed by n uint32 dims
    float64   dropout rate (0 for the semantic model)
    float64[] every parameter array, row-major, in ``parameters()`` order
"""

import io
import struct
from dataclasses import dataclass, field
from itertools import count

import numpy as np

from .exceptions import ConfigError, NumericError, ParseError, ShapeError, StateError
from .numerics import DTYPE, make_rng, sigmoid

_versions = count(1)


def glorot_uniform(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


@dataclass
class Dense:
    """Affine layer ``y = act(x W^T + b)`` applied over the last axis."""

    W: np.ndarray
    b: np.ndarray
    activation: str = "linear"

    @classmethod
    def init(cls, n_in, n_out, rng, activation="linear"):
        return cls(glorot_uniform(rng, n_out, n_in), np.zeros(n_out), activation)

    def forward(self, x):
        if x.shape[-1] != self.W.shape[1]:
            raise ShapeError(f"expected last dim {self.W.shape[1]}, got {x.shape}")
        z = x @ self.W.T + self.b
        y = np.maximum(z, 0.0) if self.activation == "relu" else z
        return y, (x, z)

    def backward(self, dy, cache):
        x, z = cache
        dz = dy * (z > 0) if self.activation == "relu" else dy
        x2 = x.reshape(-1, x.shape[-1])
        dz2 = dz.reshape(-1, dz.shape[-1])
        grads = {"W": dz2.T @ x2, "b": dz2.sum(axis=0)}
        return dz @ self.W, grads

    def names(self):
        return ("W", "b")


_GATES = ("i", "f", "c", "o")


@dataclass
class LstmLayer:
    """Single LSTM layer; ``h_0 = c_0 = 0``.

    Per step::

        i = sigmoid(W_xi x + W_hi h + b_i)
        f = sigmoid(W_xf x + W_hf h + b_f)
        c = f * c_prev + i * tanh(W_xc x + W_hc h + b_c)
        o = sigmoid(W_xo x + W_ho h + b_o)
        h = o * tanh(c)
    """

    W_xi: np.ndarray
    W_hi: np.ndarray
    W_xf: np.ndarray
    W_hf: np.ndarray
    W_xc: np.ndarray
    W_hc: np.ndarray
    W_xo: np.ndarray
    W_ho: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        n, d = self.W_xi.shape
        for g in _GATES:
            if getattr(self, f"W_x{g}").shape != (n, d):
                raise ShapeError(f"W_x{g} must be {(n, d)}")
            if getattr(self, f"W_h{g}").shape != (n, n):
                raise ShapeError(f"W_h{g} must be {(n, n)}")
            if getattr(self, f"b_{g}").shape != (n,):
                raise ShapeError(f"b_{g} must have length {n}")

    @property
    def input_dim(self):
        return self.W_xi.shape[1]

    @property
    def hidden_dim(self):
        return self.W_xi.shape[0]

    @classmethod
    def init(cls, n_in, n_hidden, rng, forget_bias=1.0):
        kw = {}
        for g in _GATES:
            kw[f"W_x{g}"] = glorot_uniform(rng, n_hidden, n_in)
            kw[f"W_h{g}"] = glorot_uniform(rng, n_hidden, n_hidden)
        for g in _GATES:
            kw[f"b_{g}"] = np.zeros(n_hidden)
        kw["b_f"] = np.full(n_hidden, float(forget_bias))
        return cls(**kw)

    def names(self):
        return tuple(f.name for f in self.__dataclass_fields__.values())

    def _stacked(self):
        Wx = np.concatenate([getattr(self, f"W_x{g}") for g in _GATES])
        Wh = np.concatenate([getattr(self, f"W_h{g}") for g in _GATES])
        b = np.concatenate([getattr(self, f"b_{g}") for g in _GATES])
        return Wx, Wh, b

    def forward(self, x):
        """Run over ``x`` of shape ``(B, T, d_x)``; returns ``h`` ``(B, T, N)`` and a cache."""
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise ShapeError(f"expected (B, T, {self.input_dim}), got {x.shape}")
        B, T, _ = x.shape
        n = self.hidden_dim
        Wx, Wh, b = self._stacked()
        zx = x @ Wx.T + b
        gates = np.empty((B, T, 4 * n))
        cs = np.empty((B, T, n))
        hs = np.empty((B, T, n))
        h = np.zeros((B, n))
        c = np.zeros((B, n))
        for t in range(T):
            z = zx[:, t] + h @ Wh.T
            act = np.empty_like(z)
            act[:, : 2 * n] = sigmoid(z[:, : 2 * n])
            act[:, 2 * n : 3 * n] = np.tanh(z[:, 2 * n : 3 * n])
            act[:, 3 * n :] = sigmoid(z[:, 3 * n :])
            i, f, g, o = np.split(act, 4, axis=1)
            c = f * c + i * g
            h = o * np.tanh(c)
            gates[:, t] = act
            cs[:, t] = c
            hs[:, t] = h
        return hs, (x, gates, cs, hs)

    def backward(self, dh_all, cache):
        x, gates, cs, hs = cache
        B, T, n = hs.shape
        _, Wh, _ = self._stacked()
        dz_all = np.empty((B, T, 4 * n))
        dh_next = np.zeros((B, n))
        dc_next = np.zeros((B, n))
        for t in range(T - 1, -1, -1):
            i, f, g, o = np.split(gates[:, t], 4, axis=1)
            c = cs[:, t]
            c_prev = cs[:, t - 1] if t > 0 else np.zeros((B, n))
            tc = np.tanh(c)
            dh = dh_all[:, t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = dz_all[:, t]
            dz[:, :n] = dc * g * i * (1.0 - i)
            dz[:, n : 2 * n] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * n : 3 * n] = dc * i * (1.0 - g * g)
            dz[:, 3 * n :] = do * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz @ Wh
        h_prev = np.concatenate([np.zeros((B, 1, n)), hs[:, :-1]], axis=1)
        dz2 = dz_all.reshape(-1, 4 * n)
        dWx = dz2.T @ x.reshape(-1, x.shape[2])
        dWh = dz2.T @ h_prev.reshape(-1, n)
        db = dz2.sum(axis=0)
        Wx, _, _ = self._stacked()
        dx = dz_all @ Wx
        grads = {}
        for k, gname in enumerate(_GATES):
            rows = slice(k * n, (k + 1) * n)
            grads[f"W_x{gname}"] = dWx[rows]
            grads[f"W_h{gname}"] = dWh[rows]
            grads[f"b_{gname}"] = db[rows]
        return dx, grads


def lstm_forward(layer, x):
    """Forward a single ``(T, d_x)`` sequence or a ``(B, T, d_x)`` batch."""
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim == 2:
        h, cache = layer.forward(x[None])
        return h[0], cache
    return layer.forward(x)


class _Model:
    """Shared parameter plumbing: flat ordered name -> array views."""

    _layers: tuple = ()

    def _bump(self):
        self.version = next(_versions)

    def parameters(self):
        out = {}
        for lname in self._layers:
            layer = getattr(self, lname)
            for pname in layer.names():
                out[f"{lname}.{pname}"] = getattr(layer, pname)
        return out

    def set_parameters(self, params):
        current = self.parameters()
        for name, value in params.items():
            if name not in current:
                raise ConfigError(f"unknown parameter {name!r}")
            value = np.asarray(value, dtype=DTYPE)
            if value.shape != current[name].shape:
                raise ShapeError(f"{name}: expected {current[name].shape}, got {value.shape}")
            lname, pname = name.split(".", 1)
            setattr(getattr(self, lname), pname, value)
        self._bump()

    def n_parameters(self):
        return sum(p.size for p in self.parameters().values())

    def copy(self):
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        for lname in self._layers:
            layer = getattr(self, lname)
            kw = {n: getattr(layer, n).copy() for n in layer.names()}
            if isinstance(layer, Dense):
                kw["activation"] = layer.activation
            setattr(clone, lname, type(layer)(**kw))
        return clone

    def __eq__(self, other):
        if type(self) is not type(other) or self.dims != other.dims:
            return False
        a, b = self.parameters(), other.parameters()
        return all(np.array_equal(a[k], b[k]) for k in a)


@dataclass
class VisualEmbedding:
    """Per-segment embeddings ``(T, d_e)`` (or ``(B, T, d_e)``) plus the forward cache."""

    values: np.ndarray
    cache: tuple = field(repr=False, default=None)
    model_version: int = 0
    batched: bool = False


class VisualModel(_Model):
    """Sequence layer -> dense ReLU -> linear embedding, applied per segment.

    ``recurrent=False`` swaps the LSTM for a per-segment ReLU layer of the
    same width (the non-recurrent ablation).
    """

    def __init__(self, seq, dense, embed, dropout=0.0):
        if not 0.0 <= dropout < 1.0:
            raise ConfigError("dropout rate must lie in [0, 1)")
        self.recurrent = isinstance(seq, LstmLayer)
        if self.recurrent:
            self.lstm = seq
            self._layers = ("lstm", "dense", "embed")
            d_x, n1 = seq.input_dim, seq.hidden_dim
        else:
            self.frame = seq
            self._layers = ("frame", "dense", "embed")
            n1, d_x = seq.W.shape
        self.dense = dense
        self.embed = embed
        self.dropout = float(dropout)
        if dense.W.shape[1] != n1 or embed.W.shape[1] != dense.W.shape[0]:
            raise ShapeError("layer widths do not chain")
        self.dims = (d_x, n1, dense.W.shape[0], embed.W.shape[0])
        self._bump()

    @property
    def embed_dim(self):
        return self.dims[3]

    @property
    def input_dim(self):
        return self.dims[0]

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x, dtype=DTYPE)
        batched = x.ndim == 3
        if not batched:
            x = x[None]
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise ShapeError(f"segments must have {self.input_dim} features, got {x.shape}")
        seq = self.lstm if self.recurrent else self.frame
        h, seq_cache = seq.forward(x)
        mask = None
        if training and self.dropout > 0.0:
            if rng is None:
                raise ConfigError("training with dropout needs an rng")
            keep = 1.0 - self.dropout
            mask = (rng.random(h.shape) < keep) / keep
            h = h * mask
        a, dense_cache = self.dense.forward(h)
        e, embed_cache = self.embed.forward(a)
        if not np.all(np.isfinite(e)):
            raise NumericError("non-finite visual embedding")
        cache = (seq_cache, mask, dense_cache, embed_cache)
        return VisualEmbedding(e if batched else e[0], cache, self.version, batched)

    def backward(self, emb, upstream):
        if emb.cache is None or emb.model_version != self.version:
            raise StateError("embedding cache does not belong to the current parameters")
        seq_cache, mask, dense_cache, embed_cache = emb.cache
        dy = np.asarray(upstream, dtype=DTYPE)
        if dy.shape != emb.values.shape:
            raise ShapeError(f"upstream {dy.shape} != embedding {emb.values.shape}")
        if not emb.batched:
            dy = dy[None]
        grads = {}
        da, g = self.embed.backward(dy, embed_cache)
        grads.update({f"embed.{k}": v for k, v in g.items()})
        dh, g = self.dense.backward(da, dense_cache)
        grads.update({f"dense.{k}": v for k, v in g.items()})
        if mask is not None:
            dh = dh * mask
        if self.recurrent:
            _, g = self.lstm.backward(dh, seq_cache)
            grads.update({f"lstm.{k}": v for k, v in g.items()})
        else:
            _, g = self.frame.backward(dh, seq_cache)
            grads.update({f"frame.{k}": v for k, v in g.items()})
        return {k: grads[k] for k in self.parameters()}


class SemanticModel(_Model):
    """Label vector -> hidden ReLU -> linear embedding."""

    _layers = ("hidden", "embed")

    def __init__(self, hidden, embed):
        if embed.W.shape[1] != hidden.W.shape[0]:
            raise ShapeError("layer widths do not chain")
        self.hidden = hidden
        self.embed = embed
        self.dropout = 0.0
        self.dims = (hidden.W.shape[1], hidden.W.shape[0], embed.W.shape[0])
        self._bump()

    @property
    def embed_dim(self):
        return self.dims[2]

    @property
    def input_dim(self):
        return self.dims[0]

    def forward(self, s):
        s = np.asarray(s, dtype=DTYPE)
        if s.shape[-1] != self.input_dim:
            raise ShapeError(f"semantic vectors must have length {self.input_dim}")
        a, hc = self.hidden.forward(s)
        e, ec = self.embed.forward(a)
        return e, (hc, ec, self.version)

    def backward(self, cache, upstream):
        hc, ec, version = cache
        if version != self.version:
            raise StateError("semantic cache does not belong to the current parameters")
        da, ge = self.embed.backward(np.asarray(upstream, dtype=DTYPE), ec)
        _, gh = self.hidden.backward(da, hc)
        grads = {f"hidden.{k}": v for k, v in gh.items()}
        grads.update({f"embed.{k}": v for k, v in ge.items()})
        return grads


def visual_embed(model, x, training=False, rng=None):
    return model.forward(x, training=training, rng=rng)


def semantic_embed(model, s):
    return model.forward(s)[0]


def model_backward(model, cache, upstream):
    """Parameter gradients of ``sum(upstream * output)``.

    ``cache`` is the :class:`VisualEmbedding` for a visual model or the cache
    returned by :meth:`SemanticModel.forward`.
    """
    return model.backward(cache, upstream)


def _check_dims(*dims):
    for d in dims:
        if int(d) < 1:
            raise ConfigError(f"all dimensions must be >= 1, got {dims}")


def init_visual_model(input_dim, hidden_dim, dense_dim, embed_dim, seed=0,
                      dropout=0.0, recurrent=True):
    """Glorot-uniform weights, zero biases, forget-gate bias 1."""
    _check_dims(input_dim, hidden_dim, dense_dim, embed_dim)
    rng = make_rng(seed)
    if recurrent:
        seq = LstmLayer.init(input_dim, hidden_dim, rng)
    else:
        seq = Dense.init(input_dim, hidden_dim, rng, "relu")
    dense = Dense.init(hidden_dim, dense_dim, rng, "relu")
    embed = Dense.init(dense_dim, embed_dim, rng, "linear")
    return VisualModel(seq, dense, embed, dropout)


def init_semantic_model(input_dim, hidden_dim, embed_dim, seed=0):
    _check_dims(input_dim, hidden_dim, embed_dim)
    rng = make_rng(seed)
    hidden = Dense.init(input_dim, hidden_dim, rng, "relu")
    embed = Dense.init(hidden_dim, embed_dim, rng, "linear")
    return SemanticModel(hidden, embed)


# -- serialization ---------------------------------------------------------

_TAGS = {"lstm": b"LSTM", "nrc": b"NRC_", "semantic": b"SEMA"}


def _kind(model):
    if isinstance(model, SemanticModel):
        return "semantic"
    return "lstm" if model.recurrent else "nrc"


def write_model(model, stream):
    stream.write(_TAGS[_kind(model)])
    stream.write(struct.pack("<I", len(model.dims)))
    stream.write(struct.pack(f"<{len(model.dims)}I", *model.dims))
    stream.write(struct.pack("<d", model.dropout))
    for p in model.parameters().values():
        stream.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def _read(stream, n):
    buf = stream.read(n)
    if len(buf) != n:
        raise ParseError(f"truncated model block at byte offset {stream.tell()}")
    return buf


def read_model(stream):
    tag = _read(stream, 4)
    kinds = {v: k for k, v in _TAGS.items()}
    if tag not in kinds:
        raise ParseError(f"unknown model tag {tag!r} at byte offset {stream.tell() - 4}")
    kind = kinds[tag]
    (n,) = struct.unpack("<I", _read(stream, 4))
    dims = struct.unpack(f"<{n}I", _read(stream, 4 * n))
    (dropout,) = struct.unpack("<d", _read(stream, 8))
    if n != (3 if kind == "semantic" else 4) or min(dims, default=0) < 1:
        raise ParseError(f"bad dims {dims} for a {kind} model block")
    if kind == "semantic":
        model = init_semantic_model(*dims)
    else:
        model = init_visual_model(*dims, dropout=dropout, recurrent=kind == "lstm")
    params = {}
    for name, p in model.parameters().items():
        raw = _read(stream, 8 * p.size)
        params[name] = np.frombuffer(raw, dtype="<f8").astype(DTYPE).reshape(p.shape)
    model.set_parameters(params)
    return model


def model_to_bytes(model):
    buf = io.BytesIO()
    write_model(model, buf)
    return buf.getvalue()


def model_from_bytes(data):
    return read_model(io.BytesIO(data))


def dump_text(model):
    """Human-readable dump; one ``name shape`` header then rows of values."""
    lines = [f"# {_kind(model)} dims={' '.join(map(str, model.dims))} dropout={model.dropout!r}"]
    for name, p in model.parameters().items():
        lines.append(f"{name} {' '.join(map(str, p.shape))}")
        for row in np.atleast_2d(p):
            lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"
