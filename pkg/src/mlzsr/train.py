"""Alternate training of the visual and semantic models.

Each round runs one visual epoch against frozen label embeddings, rebuilds
the visual embeddings of all training instances in inference mode, runs one
semantic epoch against them and rebuilds the label embeddings. After every
round the known-label I-MAP on the validation instances is measured; the
best snapshot is kept and training stops after ``patience`` rounds without
improvement.

Checkpoint file layout (little-endian)::

    8 bytes   magic b"MLZSRCKP"
    uint32    format version (1)
    uint32    round of the stored snapshot
    float64   validation I-MAP of the snapshot
    uint32    flags; bit 0 set when a semantic model block follows
    model block (visual), then model block (semantic) if flagged
    uint32    length n, then n bytes of UTF-8 JSON with the TrainConfig
"""

import io
import json
import logging
import struct
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .exceptions import ConfigError, ParseError, ShapeError
from .evaluation import i_map_matrix
from .losses import LOSSES, rank_loss, ranknet_semantic_loss, rank_loss_rows
from .data import randomize_label_reps
from .model import init_semantic_model, init_visual_model, read_model, write_model
from .numerics import Adam, DTYPE, make_rng
from .scoring import POOLINGS, lagm_groups, pool

log = logging.getLogger(__name__)

LABEL_REPS = ("semantic", "random")
MAGIC = b"MLZSRCKP"
VERSION = 1


@dataclass
class TrainConfig:
    loss: str = "ranknet"
    margin: float = 1.0
    lr_visual: float = 1e-3
    lr_semantic: float = 1e-3
    batch_size: int = 32
    label_batch_size: int = 8
    embed_dim: int = 24
    hidden_dim: int = 32
    dense_dim: int = 32
    semantic_hidden_dim: int = 32
    dropout: float = 0.0
    patience: int = 10
    max_rounds: int = 60
    pooling: str = "average"
    n_groups: int = 1
    recurrent: bool = True
    learn_semantic: bool = True
    semantic_literal: bool = False
    label_reps: str = "semantic"
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}")
        if self.pooling not in POOLINGS:
            raise ConfigError(f"pooling must be one of {POOLINGS}")
        if self.loss == "hinge" and not self.margin > 0:
            raise ConfigError("margin must be positive")
        for name in ("batch_size", "label_batch_size", "embed_dim", "hidden_dim",
                     "dense_dim", "semantic_hidden_dim", "patience", "n_groups"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.lr_visual < 0 or self.lr_semantic < 0:
            raise ConfigError("learning rates must be >= 0")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.label_reps not in LABEL_REPS:
            raise ConfigError(f"label_reps must be one of {LABEL_REPS}")
        if self.max_rounds < 0:
            raise ConfigError("max_rounds must be >= 0")

    @classmethod
    def from_dict(cls, d):
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown training option(s): {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass
class Checkpoint:
    visual: object
    semantic: object
    round: int
    best_val_imap: float
    config: TrainConfig
    history: list = field(default_factory=list, compare=False)

    def label_embeddings(self, semantics):
        """``(n_labels, d_e)`` embeddings; raw vectors when there is no semantic model.

        With ``label_reps="random"`` the table is replaced by the same seeded
        random vectors used in training, so only its shape matters.
        """
        semantics = label_table(np.asarray(semantics, dtype=DTYPE), self.config)
        if self.semantic is None:
            return semantics
        return self.semantic.forward(semantics)[0]

    def scores(self, X, semantics):
        """Pooled relatedness scores ``(n_instances, n_labels)``."""
        E = self.label_embeddings(semantics)
        emb = self.visual.forward(np.asarray(X, dtype=DTYPE)).values
        out, _ = pool(emb @ E.T, self.config.pooling, self.config.n_groups)
        return out

    def to_bytes(self):
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<IIdI", VERSION, self.round, self.best_val_imap,
                              int(self.semantic is not None)))
        write_model(self.visual, buf)
        if self.semantic is not None:
            write_model(self.semantic, buf)
        cfg = json.dumps(asdict(self.config), sort_keys=True).encode()
        buf.write(struct.pack("<I", len(cfg)))
        buf.write(cfg)
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data):
        buf = io.BytesIO(data)
        if buf.read(8) != MAGIC:
            raise ParseError("not a checkpoint file (bad magic)")
        head = buf.read(20)
        if len(head) != 20:
            raise ParseError("truncated checkpoint header")
        version, rnd, best, flags = struct.unpack("<IIdI", head)
        if version != VERSION:
            raise ParseError(f"unsupported checkpoint version {version}")
        visual = read_model(buf)
        semantic = read_model(buf) if flags & 1 else None
        (n,) = struct.unpack("<I", buf.read(4))
        try:
            cfg = TrainConfig.from_dict(json.loads(buf.read(n).decode()))
        except (ValueError, ConfigError) as e:
            raise ParseError(f"bad embedded config ({e})") from None
        return cls(visual, semantic, rnd, best, cfg)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _pooled(cfg, S):
    return pool(S, cfg.pooling, cfg.n_groups)


def train_epoch_visual(vm, E_s, X, Y, cfg, rng, optimizer=None):
    """One shuffled mini-batch pass updating only the visual model.

    ``E_s`` holds the frozen label embeddings as rows. Returns the mean
    per-instance loss observed during the epoch.
    """
    X = np.asarray(X, dtype=DTYPE)
    Y = np.asarray(Y, dtype=DTYPE)
    if Y.shape != (X.shape[0], E_s.shape[0]):
        raise ShapeError("targets must be (n_instances, n_known_labels)")
    optimizer = optimizer or Adam(cfg.lr_visual)
    order = rng.permutation(X.shape[0])
    total = 0.0
    for start in range(0, len(order), cfg.batch_size):
        idx = order[start : start + cfg.batch_size]
        emb = vm.forward(X[idx], training=True, rng=rng)
        o, back = _pooled(cfg, emb.values @ E_s.T)
        losses, dO = rank_loss_rows(o, Y[idx], cfg.loss, cfg.margin)
        total += losses.sum()
        dE = back(dO / len(idx)) @ E_s
        grads = vm.backward(emb, dE)
        vm.set_parameters(optimizer.step(vm.parameters(), grads))
    return total / X.shape[0]


def _label_loss(cfg, o, y):
    if cfg.loss == "ranknet":
        return ranknet_semantic_loss(o, y, literal=cfg.semantic_literal)
    return rank_loss(o, y, "hinge", cfg.margin)


def train_epoch_semantic(sm, Ev, S_known, Y, cfg, rng, optimizer=None):
    """One shuffled pass over the known labels updating only the semantic model.

    ``Ev`` are the frozen per-segment visual embeddings ``(N, T, d_e)`` of
    the training instances; ``Y`` is ``(N, n_known)``.
    """
    optimizer = optimizer or Adam(cfg.lr_semantic)
    order = rng.permutation(S_known.shape[0])
    total = 0.0
    for start in range(0, len(order), cfg.label_batch_size):
        idx = order[start : start + cfg.label_batch_size]
        es, cache = sm.forward(S_known[idx])
        o, back = _pooled(cfg, Ev @ es.T)
        dO = np.empty_like(o)
        for j, c in enumerate(idx):
            loss, dO[:, j] = _label_loss(cfg, o[:, j], Y[:, c])
            total += loss
        dS = back(dO / len(idx))
        des = np.einsum("ntd,ntb->bd", Ev, dS)
        grads = sm.backward(cache, des)
        sm.set_parameters(optimizer.step(sm.parameters(), grads))
    return total / S_known.shape[0]


def validation_imap(ckpt_like, X_val, Y_val, E_s):
    """Known-label I-MAP of pooled scores against ``E_s``."""
    vm, cfg = ckpt_like
    emb = vm.forward(X_val).values
    o, _ = _pooled(cfg, emb @ E_s.T)
    return i_map_matrix(o, np.asarray(Y_val) > 0)


def fit_alternating(X, Y, S_known, X_val, Y_val, cfg, log_stream=None):
    """Core loop on arrays; see :func:`alternate_train` for the dataset form.

    ``Y``/``Y_val`` are ``{+1, -1}`` matrices over the known labels whose
    semantic vectors are the rows of ``S_known``.
    """
    X = np.asarray(X, dtype=DTYPE)
    X_val = np.asarray(X_val, dtype=DTYPE)
    S_known = np.asarray(S_known, dtype=DTYPE)
    Y = np.asarray(Y, dtype=DTYPE)
    Y_val = np.asarray(Y_val, dtype=DTYPE)
    if X.shape[0] == 0 or X_val.shape[0] == 0:
        raise ConfigError("training and validation sets must be non-empty")
    if S_known.shape[0] < 2:
        raise ConfigError("at least two known labels are required")
    if not (np.asarray(Y_val) > 0).any():
        raise ConfigError("validation set has no known-label targets")
    if cfg.pooling == "lagm":
        lagm_groups(X.shape[1], cfg.n_groups)
    d_e = cfg.embed_dim if cfg.learn_semantic else S_known.shape[1]
    vm = init_visual_model(X.shape[2], cfg.hidden_dim, cfg.dense_dim, d_e,
                           seed=[cfg.seed, 1], dropout=cfg.dropout, recurrent=cfg.recurrent)
    sm = None
    if cfg.learn_semantic:
        sm = init_semantic_model(S_known.shape[1], cfg.semantic_hidden_dim, d_e, seed=[cfg.seed, 2])
        if sm.embed_dim != vm.embed_dim:
            raise ShapeError("visual and semantic embedding dims differ")
    rng_v = make_rng([cfg.seed, 3])
    rng_s = make_rng([cfg.seed, 4])

    def embed_labels():
        return sm.forward(S_known)[0] if sm is not None else S_known

    E_s = embed_labels()
    best = validation_imap((vm, cfg), X_val, Y_val, E_s)
    ckpt = Checkpoint(vm.copy(), sm.copy() if sm else None, 0, best, cfg)
    opt_v, opt_s = Adam(cfg.lr_visual), Adam(cfg.lr_semantic)
    stale = 0
    for rnd in range(1, cfg.max_rounds + 1):
        loss_v = train_epoch_visual(vm, E_s, X, Y, cfg, rng_v, opt_v)
        loss_s = float("nan")
        if sm is not None:
            Ev = vm.forward(X).values
            loss_s = train_epoch_semantic(sm, Ev, S_known, Y, cfg, rng_s, opt_s)
            E_s = embed_labels()
        val = validation_imap((vm, cfg), X_val, Y_val, E_s)
        record = {"round": rnd, "loss_visual": float(loss_v),
                  "loss_semantic": float(loss_s), "val_imap": float(val)}
        ckpt.history.append(record)
        line = " ".join(f"{k}={v!r}" for k, v in record.items())
        log.info(line)
        if log_stream is not None:
            log_stream.write(line + "\n")
        if val > ckpt.best_val_imap:
            history = ckpt.history
            ckpt = Checkpoint(vm.copy(), sm.copy() if sm else None, rnd, val, cfg, history)
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return ckpt


def label_table(semantics, cfg):
    """The label vectors training actually sees under ``cfg.label_reps``."""
    if cfg.label_reps == "random":
        return randomize_label_reps(semantics.shape[0], semantics.shape[1], cfg.seed)
    return semantics


def training_arrays(ds, split, cfg=None):
    """Arrays for :func:`fit_alternating` from a dataset and split."""
    known = list(split.known)
    Y = ds.indicator(range(len(split.train)), known, split.target_sets(ds, "train"))
    Y_val = ds.indicator(range(len(split.val)), known, split.target_sets(ds, "val"))
    semantics = ds.semantics if cfg is None else label_table(ds.semantics, cfg)
    return ds.X[list(split.train)], Y, semantics[known], ds.X[list(split.val)], Y_val


def alternate_train(ds, split, cfg, log_stream=None):
    """Train both models on ``split.train`` with early stopping on ``split.val``."""
    if not split.train or not split.val:
        raise ConfigError("training and validation sets must be non-empty")
    if len(split.known) < 2:
        raise ConfigError("at least two known labels are required")
    return fit_alternating(*training_arrays(ds, split, cfg), cfg, log_stream=log_stream)


def train_wse(ds, split, cfg, log_stream=None):
    """Visual model only, scored directly against the raw semantic vectors."""
    return alternate_train(ds, split, replace(cfg, learn_semantic=False, embed_dim=ds.d_s),
                           log_stream=log_stream)
