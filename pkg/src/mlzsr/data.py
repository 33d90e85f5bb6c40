"""Datasets, the synthetic multi-action generator and the IFS/LFS splits.

Dataset file format (``MLZSR v1``, plain text, whitespace separated)::

    MLZSR v1
    <n_labels> <d_s> <T> <d_x> <n_instances>
    <label id> <label name>            # n_labels lines
    <d_s decimals>                     # n_labels lines, semantic table
    then per instance:
    <label ids>                        # one line
    <d_x decimals>                     # T lines

Decimals are written with ``repr`` so a save/load round trip is bitwise.

Split file format (``MLZSR-SPLIT v1``) is one ``key values...`` record per
line: ``mode``, ``seed``, ``fractions`` or ``val_count``, then ``known``,
``unseen``, ``train``, ``val`` and ``test`` id lists.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, ParseError, ShapeError, SplitInfeasibleError
from .numerics import DTYPE, make_rng, split_rng

MAGIC = "MLZSR v1"
SPLIT_MAGIC = "MLZSR-SPLIT v1"


@dataclass
class Dataset:
    """Segment features, label sets, vocabulary and semantic table.

    ``X`` has shape ``(n_instances, T, d_x)``; ``labels[i]`` is a sorted
    tuple of label ids; ``semantics`` has shape ``(n_labels, d_s)``.
    """

    X: np.ndarray
    labels: list
    vocabulary: list
    semantics: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=DTYPE)
        self.semantics = np.asarray(self.semantics, dtype=DTYPE)
        self.labels = [tuple(sorted(int(c) for c in ls)) for ls in self.labels]
        if self.X.ndim != 3:
            raise ShapeError("X must have shape (n_instances, T, d_x)")
        if len(self.labels) != self.X.shape[0]:
            raise ShapeError("one label set per instance required")
        if self.semantics.ndim != 2 or self.semantics.shape[0] != len(self.vocabulary):
            raise ShapeError("semantic table needs one row per vocabulary entry")
        for i, ls in enumerate(self.labels):
            if not ls:
                raise ConfigError(f"instance {i} has no labels")
            if ls[0] < 0 or ls[-1] >= self.n_labels:
                raise ConfigError(f"instance {i} has a label id outside the vocabulary")

    @property
    def n_instances(self):
        return self.X.shape[0]

    @property
    def n_labels(self):
        return len(self.vocabulary)

    @property
    def T(self):
        return self.X.shape[1]

    @property
    def d_x(self):
        return self.X.shape[2]

    @property
    def d_s(self):
        return self.semantics.shape[1]

    def indicator(self, instances=None, label_ids=None, label_sets=None):
        """``{+1, -1}`` target matrix ``(len(instances), len(label_ids))``."""
        instances = range(self.n_instances) if instances is None else instances
        label_ids = range(self.n_labels) if label_ids is None else label_ids
        sets = self.labels if label_sets is None else label_sets
        col = {c: j for j, c in enumerate(label_ids)}
        Y = -np.ones((len(instances), len(col)))
        for r, i in enumerate(instances):
            for c in sets[i]:
                if c in col:
                    Y[r, col[c]] = 1.0
        return Y

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and np.array_equal(self.X, other.X)
            and self.labels == other.labels
            and list(self.vocabulary) == list(other.vocabulary)
            and np.array_equal(self.semantics, other.semantics)
        )


def pad_segments(segments, T):
    """Append all-zero rows until there are ``T`` segments."""
    segments = np.asarray(segments, dtype=DTYPE)
    t = segments.shape[0]
    if t < 1:
        raise ShapeError("need at least one segment")
    if t > T:
        raise ShapeError(f"{t} segments exceed T={T}")
    out = np.zeros((T, segments.shape[1]))
    out[:t] = segments
    return out


def _fmt(row):
    return " ".join(repr(float(v)) for v in row)


def dataset_to_text(ds):
    lines = [MAGIC, f"{ds.n_labels} {ds.d_s} {ds.T} {ds.d_x} {ds.n_instances}"]
    lines += [f"{c} {name}" for c, name in enumerate(ds.vocabulary)]
    lines += [_fmt(r) for r in ds.semantics]
    for x, ls in zip(ds.X, ds.labels):
        lines.append(" ".join(map(str, ls)))
        lines += [_fmt(r) for r in x]
    return "\n".join(lines) + "\n"


def save_dataset(ds, path):
    with open(path, "w") as fh:
        fh.write(dataset_to_text(ds))


def load_dataset(path):
    with open(path) as fh:
        return parse_dataset(fh.read())


def parse_dataset(text):
    lines = text.splitlines()
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise ParseError("unexpected end of file", pos + 1)
        pos += 1
        return lines[pos - 1]

    def floats(n):
        line = take()
        try:
            row = [float(v) for v in line.split()]
        except ValueError as e:
            raise ParseError(f"bad number ({e})", pos) from None
        if len(row) != n:
            raise ParseError(f"expected {n} values, got {len(row)}", pos)
        return row

    if take().strip() != MAGIC:
        raise ParseError(f"missing {MAGIC!r} header", 1)
    try:
        n_labels, d_s, T, d_x, n = (int(v) for v in take().split())
    except ValueError:
        raise ParseError("dims line must hold five integers", pos) from None
    vocab = []
    for c in range(n_labels):
        parts = take().split(maxsplit=1)
        if len(parts) != 2 or parts[0] != str(c):
            raise ParseError(f"expected vocabulary entry for label {c}", pos)
        vocab.append(parts[1])
    sem = [floats(d_s) for _ in range(n_labels)]
    X = np.zeros((n, T, d_x))
    labels = []
    for i in range(n):
        try:
            labels.append(tuple(int(v) for v in take().split()))
        except ValueError:
            raise ParseError("bad label id list", pos) from None
        for t in range(T):
            X[i, t] = floats(d_x)
    try:
        return Dataset(X, labels, vocab, np.array(sem).reshape(n_labels, d_s))
    except (ConfigError, ShapeError) as e:
        raise ParseError(str(e)) from None


# -- synthetic generator ---------------------------------------------------


@dataclass
class SyntheticConfig:
    """Parameters of the synthetic weakly-annotated multi-action generator.

    ``n_known_instances`` instances draw only from labels outside the
    held-out set; ``n_unseen_instances`` instances carry at least one of the
    ``n_held_out`` held-out labels, so a label-first split on those labels
    reproduces the requested role sizes exactly. Instances have between
    ``min_length`` and ``T`` real segments; ``min_length <= 0`` means ``T``.
    """

    n_labels: int = 40
    n_clusters: int = 5
    n_held_out: int = 8
    n_known_instances: int = 700
    n_unseen_instances: int = 200
    T: int = 12
    d_x: int = 32
    d_s: int = 16
    labels_per_instance: tuple = (2, 3)
    episodes_per_instance: tuple = (2, 4)
    min_length: int = 0
    two_cluster_prob: float = 0.3
    noise: float = 1.0
    semantic_jitter: float = 0.3
    seed: int = 0

    def __post_init__(self):
        self.labels_per_instance = tuple(int(v) for v in self.labels_per_instance)
        self.episodes_per_instance = tuple(int(v) for v in self.episodes_per_instance)
        if self.min_length <= 0:
            self.min_length = self.T
        lo, hi = self.labels_per_instance
        elo, ehi = self.episodes_per_instance
        checks = [
            (self.n_labels >= 2, "n_labels must be >= 2"),
            (1 <= self.n_clusters <= self.n_labels, "n_clusters must lie in [1, n_labels]"),
            (0 <= self.n_held_out < self.n_labels, "n_held_out must lie in [0, n_labels)"),
            (2 <= lo <= hi, "labels_per_instance must satisfy 2 <= lo <= hi"),
            (hi <= self.n_labels // max(self.n_clusters, 1), "labels_per_instance exceeds cluster size"),
            (1 <= elo <= ehi, "episodes_per_instance must satisfy 1 <= lo <= hi"),
            (max(hi, ehi) <= self.min_length <= self.T, "min_length must cover every episode and be <= T"),
            (min(self.T, self.d_x, self.d_s) >= 1, "T, d_x, d_s must be >= 1"),
            (self.noise >= 0 and self.semantic_jitter >= 0, "noise levels must be >= 0"),
            (0 <= self.two_cluster_prob <= 1, "two_cluster_prob must be a probability"),
            (self.n_known_instances >= 0 and self.n_unseen_instances >= 0, "instance counts must be >= 0"),
            (self.n_unseen_instances == 0 or self.n_held_out > 0, "unseen instances need held-out labels"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)


def _cluster_assignment(cfg, rng):
    perm = rng.permutation(cfg.n_labels)
    cluster = np.empty(cfg.n_labels, dtype=int)
    cluster[perm] = np.arange(cfg.n_labels) % cfg.n_clusters
    return cluster


def held_out_labels(cfg):
    """Held-out label ids, spread round-robin over the semantic clusters."""
    rng_struct, rng_pick = split_rng(cfg.seed, 4)[:2]
    cluster = _cluster_assignment(cfg, rng_struct)
    picked = []
    for i in range(cfg.n_held_out):
        k = i % cfg.n_clusters
        free = [c for c in np.flatnonzero(cluster == k) if c not in picked]
        picked.append(int(rng_pick.choice(free)))
    return tuple(sorted(picked))


def generate_synthetic(cfg):
    """Draw a dataset whose segment features are a fixed linear map of the
    active label's semantic vector plus Gaussian noise.

    Labels live in semantic clusters; each instance samples its labels from
    one or two clusters and is cut into contiguous episodes, one label each.
    """
    rng_struct, _, rng_sem, rng_inst = split_rng(cfg.seed, 4)
    cluster = _cluster_assignment(cfg, rng_struct)
    held = set(held_out_labels(cfg))

    centers = rng_sem.standard_normal((cfg.n_clusters, cfg.d_s))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    jitter = rng_sem.standard_normal((cfg.n_labels, cfg.d_s)) / np.sqrt(cfg.d_s)
    semantics = centers[cluster] + cfg.semantic_jitter * jitter
    G = rng_sem.standard_normal((cfg.d_x, cfg.d_s))
    members = [np.flatnonzero(cluster == k) for k in range(cfg.n_clusters)]

    def sample_labels(need_held):
        lo, hi = cfg.labels_per_instance
        k = int(rng_inst.integers(lo, hi + 1))
        if need_held:
            first = int(rng_inst.choice(sorted(held)))
            clusters = [cluster[first]]
        else:
            first = None
            clusters = [int(rng_inst.integers(cfg.n_clusters))]
        if cfg.n_clusters > 1 and rng_inst.random() < cfg.two_cluster_prob:
            other = [c for c in range(cfg.n_clusters) if c != clusters[0]]
            clusters.append(int(rng_inst.choice(other)))
        pool = np.concatenate([members[c] for c in clusters])
        if not need_held:
            pool = np.array([c for c in pool if c not in held], dtype=int)
        else:
            pool = pool[pool != first]
        n_draw = min(k - (first is not None), pool.size)
        chosen = [int(c) for c in rng_inst.choice(pool, size=n_draw, replace=False)]
        if first is not None:
            chosen.append(first)
        if len(chosen) < 2:
            raise ConfigError("too few labels available per cluster for the held-out split")
        return chosen

    X = np.zeros((cfg.n_known_instances + cfg.n_unseen_instances, cfg.T, cfg.d_x))
    labels = []
    roles = [False] * cfg.n_known_instances + [True] * cfg.n_unseen_instances
    for i, need_held in enumerate(roles):
        chosen = sample_labels(need_held)
        elo, ehi = cfg.episodes_per_instance
        n_ep = max(len(chosen), int(rng_inst.integers(elo, ehi + 1)))
        ep_labels = chosen + [int(c) for c in rng_inst.choice(chosen, size=n_ep - len(chosen))]
        ep_labels = [ep_labels[j] for j in rng_inst.permutation(n_ep)]
        t = int(rng_inst.integers(cfg.min_length, cfg.T + 1))
        cuts = np.sort(rng_inst.choice(np.arange(1, t), size=n_ep - 1, replace=False)) if n_ep > 1 else []
        bounds = [0, *cuts, t]
        seg = np.empty((t, cfg.d_x))
        for e, c in enumerate(ep_labels):
            a, b = bounds[e], bounds[e + 1]
            seg[a:b] = G @ semantics[c] + cfg.noise * rng_inst.standard_normal((b - a, cfg.d_x))
        X[i] = pad_segments(seg, cfg.T)
        labels.append(chosen)
    vocab = [f"action_{c:03d}" for c in range(cfg.n_labels)]
    return Dataset(X, labels, vocab, semantics)


def randomize_label_reps(n_labels, d_s, seed=0):
    """Unit-norm random label vectors (i.i.d. normal, then L2-normalized)."""
    V = make_rng(seed).standard_normal((n_labels, d_s))
    return V / np.linalg.norm(V, axis=1, keepdims=True)


# -- splits ---------------------------------------------------------------


@dataclass
class SplitSpec:
    """Instance roles and the known/unseen label partition."""

    mode: str
    train: tuple
    val: tuple
    test: tuple
    known: tuple
    unseen: tuple
    seed: int = 0
    fractions: tuple = None
    val_count: int = None
    _sets: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for name in ("train", "val", "test", "known", "unseen"):
            setattr(self, name, tuple(sorted(int(v) for v in getattr(self, name))))
        if self.mode not in ("ifs", "lfs"):
            raise ConfigError(f"unknown split mode {self.mode!r}")

    def target_sets(self, ds, role):
        """Label sets used for ``role``; unseen labels are removed for train/val."""
        ids = getattr(self, role)
        if role == "test":
            return [ds.labels[i] for i in ids]
        unseen = set(self.unseen)
        return [tuple(c for c in ds.labels[i] if c not in unseen) for i in ids]

    def check(self, ds):
        """Raise :class:`SplitInfeasibleError` on any violated invariant."""
        roles = [set(self.train), set(self.val), set(self.test)]
        total = sum(len(r) for r in roles)
        if total != ds.n_instances or set().union(*roles) != set(range(ds.n_instances)):
            raise SplitInfeasibleError("instance roles must be disjoint and cover the dataset")
        known, unseen = set(self.known), set(self.unseen)
        if known & unseen or known | unseen != set(range(ds.n_labels)):
            raise SplitInfeasibleError("known and unseen labels must partition the vocabulary")
        for role in ("train", "val"):
            if any(set(ls) & unseen for ls in self.target_sets(ds, role)):
                raise SplitInfeasibleError(f"{role} targets contain unseen labels")
        if self.mode == "lfs":
            with_unseen = {i for i in range(ds.n_instances) if set(ds.labels[i]) & unseen}
            if with_unseen != set(self.test):
                raise SplitInfeasibleError("LFS test set must be exactly the instances with unseen labels")
        return True

    def to_text(self):
        lines = [SPLIT_MAGIC, f"mode {self.mode}", f"seed {self.seed}"]
        if self.fractions is not None:
            lines.append("fractions " + " ".join(repr(float(f)) for f in self.fractions))
        if self.val_count is not None:
            lines.append(f"val_count {self.val_count}")
        for name in ("known", "unseen", "train", "val", "test"):
            lines.append(" ".join([name, *map(str, getattr(self, name))]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = text.splitlines()
        if not lines or lines[0].strip() != SPLIT_MAGIC:
            raise ParseError(f"missing {SPLIT_MAGIC!r} header", 1)
        rec = {}
        for n, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            key, *vals = line.split()
            rec[key] = (n, vals)
        try:
            kw = {"mode": rec["mode"][1][0], "seed": int(rec["seed"][1][0])}
            for name in ("known", "unseen", "train", "val", "test"):
                kw[name] = [int(v) for v in rec[name][1]]
            if "fractions" in rec:
                kw["fractions"] = tuple(float(v) for v in rec["fractions"][1])
            if "val_count" in rec:
                kw["val_count"] = int(rec["val_count"][1][0])
        except KeyError as e:
            raise ParseError(f"missing record {e.args[0]!r}") from None
        except (ValueError, IndexError) as e:
            raise ParseError(f"malformed split record ({e})") from None
        return cls(**kw)


def save_split(split, path):
    with open(path, "w") as fh:
        fh.write(split.to_text())


def load_split(path):
    with open(path) as fh:
        return SplitSpec.from_text(fh.read())


def _label_partition(ds, unseen):
    unseen = sorted({int(c) for c in unseen})
    if not unseen:
        raise ConfigError("zero-shot splits need at least one unseen label")
    if unseen[0] < 0 or unseen[-1] >= ds.n_labels:
        raise ConfigError("unseen label id outside the vocabulary")
    if len(unseen) >= ds.n_labels:
        raise ConfigError("at least one known label is required")
    known = [c for c in range(ds.n_labels) if c not in set(unseen)]
    return known, unseen


def make_ifs_split(ds, unseen, fractions=(0.6, 0.2, 0.2), seed=0):
    """Instance-first split: partition instances, then strip unseen labels
    from train/val targets.

    Instances whose targets become empty stay in train/val with all-negative
    target vectors.
    """
    known, unseen = _label_partition(ds, unseen)
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError("fractions must be three non-negative numbers summing to 1")
    n = ds.n_instances
    perm = split_rng(seed, 1)[0].permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = min(int(round(fractions[1] * n)), n - n_train)
    return SplitSpec(
        "ifs", perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :],
        known, unseen, seed=seed, fractions=fractions,
    )


def make_lfs_split(ds, unseen, val_count, seed=0):
    """Label-first split: every instance carrying an unseen label is a test
    instance; ``val_count`` of the rest are drawn for validation."""
    known, unseen = _label_partition(ds, unseen)
    u = set(unseen)
    test = [i for i in range(ds.n_instances) if set(ds.labels[i]) & u]
    rest = np.array([i for i in range(ds.n_instances) if not set(ds.labels[i]) & u], dtype=int)
    if rest.size == 0:
        raise SplitInfeasibleError("every instance carries an unseen label")
    if not 0 <= val_count < rest.size:
        raise SplitInfeasibleError(
            f"val_count={val_count} leaves no training instance ({rest.size} available)"
        )
    rest = rest[split_rng(seed, 1)[0].permutation(rest.size)]
    return SplitSpec(
        "lfs", rest[val_count:], rest[:val_count], test, known, unseen,
        seed=seed, val_count=int(val_count),
    )


def choose_unseen(n_labels, n_unseen, seed=0):
    """Random unseen label ids (used when a split names a count, not ids)."""
    if not 1 <= n_unseen < n_labels:
        raise ConfigError("need 1 <= n_unseen < n_labels")
    rng = split_rng(seed, 2)[1]
    return tuple(sorted(int(c) for c in rng.choice(n_labels, size=n_unseen, replace=False)))
