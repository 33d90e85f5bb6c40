"""Ranking metrics, evaluation scenarios, the random-score baseline and reports.

I-MAP and L-MAP use standard average precision: for each relevant item at
rank ``r`` add ``P@r``, divide by the number of relevant items. Instances
(labels) without relevant items are left out of the mean.

Report text format, one record per line with a fixed field order::

    scenario metric k value mean sem

``mean`` and ``sem`` are ``-`` for a single evaluation.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DomainError, ParseError, ShapeError
from .numerics import DTYPE, make_rng
from .scoring import ranking_order

METRICS = ("I-MAP", "L-MAP", "precision", "recall", "F1")
SCENARIOS = ("gzsl", "known", "unseen")


def precision_at_k(truth, ranked, k):
    """``|truth ∩ ranked[:k]| / k``."""
    if not 1 <= k <= len(ranked):
        raise DomainError(f"k={k} outside [1, {len(ranked)}]")
    truth = set(truth)
    return sum(1 for c in list(ranked)[:k] if c in truth) / k


def average_precision(truth, ranked):
    truth = set(truth)
    if not truth:
        raise DomainError("average precision needs at least one relevant item")
    hits, total = 0, 0.0
    for r, c in enumerate(ranked, start=1):
        if c in truth:
            hits += 1
            total += hits / r
    return total / len(truth)


def i_map(truths, rankings):
    """Mean over instances of label-ranking average precision."""
    aps = [average_precision(t, r) for t, r in zip(truths, rankings) if len(t)]
    if not aps:
        raise DomainError("no instance has a ground-truth label")
    return float(np.mean(aps))


def l_map(positives, rankings):
    """Mean over labels of instance-ranking average precision."""
    aps = [average_precision(p, r) for p, r in zip(positives, rankings) if len(p)]
    if not aps:
        raise DomainError("no label has a positive instance")
    return float(np.mean(aps))


def overall_prf(truths, rankings, k=5):
    """Overall top-k precision, recall and F1 over a set of instances."""
    if k < 1:
        raise DomainError("k must be >= 1")
    truths = [set(t) for t in truths]
    if not truths:
        raise DomainError("no instances")
    hits = sum(precision_at_k(t, r, k) * k for t, r in zip(truths, rankings))
    n_true = sum(len(t) for t in truths)
    precision = hits / (k * len(truths))
    recall = hits / n_true if n_true else 0.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


# -- vectorised forms over score matrices ---------------------------------


def _ap_rows(S, R):
    order = ranking_order(S)
    rel = np.take_along_axis(R, order, axis=1).astype(DTYPE)
    n_rel = rel.sum(axis=1)
    keep = n_rel > 0
    prec = np.cumsum(rel, axis=1) / np.arange(1, S.shape[1] + 1)
    ap = (prec * rel).sum(axis=1)[keep] / n_rel[keep]
    return ap, order, rel


def i_map_matrix(S, R):
    """I-MAP for scores ``S`` and boolean relevance ``R`` (instances x labels)."""
    ap, _, _ = _ap_rows(np.asarray(S, dtype=DTYPE), np.asarray(R, dtype=bool))
    if ap.size == 0:
        raise DomainError("no instance has a ground-truth label")
    return float(ap.mean())


def l_map_matrix(S, R):
    ap, _, _ = _ap_rows(np.asarray(S, dtype=DTYPE).T, np.asarray(R, dtype=bool).T)
    if ap.size == 0:
        raise DomainError("no label has a positive instance")
    return float(ap.mean())


def prf_matrix(S, R, k=5):
    S = np.asarray(S, dtype=DTYPE)
    R = np.asarray(R, dtype=bool)
    if not 1 <= k <= S.shape[1]:
        raise DomainError(f"k={k} outside [1, {S.shape[1]}]")
    order = ranking_order(S)[:, :k]
    hits = np.take_along_axis(R, order, axis=1).sum()
    precision = hits / (k * S.shape[0])
    recall = hits / R.sum()
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return float(precision), float(recall), float(f1)


# -- scenarios -------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """Which labels are candidates and which ground truth counts."""

    kind: str
    known: tuple
    unseen: tuple

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.kind!r}; expected one of {SCENARIOS}")

    @property
    def labels(self):
        if self.kind == "known":
            return tuple(sorted(self.known))
        if self.kind == "unseen":
            return tuple(sorted(self.unseen))
        return tuple(sorted(set(self.known) | set(self.unseen)))


@dataclass
class ScenarioView:
    scores: np.ndarray
    relevance: np.ndarray
    label_ids: tuple
    instance_ids: tuple

    def truths(self):
        return [tuple(np.asarray(self.label_ids)[r]) for r in self.relevance]

    def rankings(self):
        ids = np.asarray(self.label_ids)
        return [tuple(ids[o]) for o in ranking_order(self.scores)]


def apply_scenario(S, truths, scenario, label_ids=None):
    """Restrict scores to the scenario's labels and intersect truths with them.

    ``S`` holds one column per id in ``label_ids`` (default ``0..C-1``).
    Instances whose filtered truth is empty are dropped.
    """
    S = np.asarray(S, dtype=DTYPE)
    label_ids = tuple(range(S.shape[1])) if label_ids is None else tuple(label_ids)
    if S.ndim != 2 or S.shape != (len(truths), len(label_ids)):
        raise ShapeError("scores must be (n_instances, n_labels)")
    col = {c: j for j, c in enumerate(label_ids)}
    keep_labels = [c for c in scenario.labels if c in col]
    if len(keep_labels) != len(scenario.labels):
        raise ShapeError("score matrix lacks some scenario labels")
    sub = S[:, [col[c] for c in keep_labels]]
    allowed = {c: j for j, c in enumerate(keep_labels)}
    R = np.zeros(sub.shape, dtype=bool)
    for i, t in enumerate(truths):
        for c in t:
            if c in allowed:
                R[i, allowed[c]] = True
    rows = np.flatnonzero(R.any(axis=1))
    return ScenarioView(sub[rows], R[rows], tuple(keep_labels), tuple(int(r) for r in rows))


# -- reports ---------------------------------------------------------------


@dataclass
class EvalReport:
    scenario: str
    k: int
    n_instances: int
    n_labels: int
    values: dict
    mean: dict = None
    sem: dict = None
    flags: list = field(default_factory=list)

    def to_text(self):
        lines = []
        for m in METRICS:
            if self.mean is None:
                lines.append(f"{self.scenario} {m} {self.k} {self.values[m]!r} - -")
            else:
                lines.append(
                    f"{self.scenario} {m} {self.k} {self.values[m]!r} "
                    f"{self.mean[m]!r} {self.sem[m]!r}"
                )
        return "\n".join(lines) + "\n"


def reports_to_text(reports):
    header = "# scenario metric k value mean sem\n"
    return header + "".join(r.to_text() for r in reports)


def parse_reports(text):
    """Inverse of :func:`reports_to_text` (values only) -> {(scenario, metric): value}."""
    out = {}
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        scenario, metric, _k, value, *_ = line.split()
        out[(scenario, metric)] = float(value)
    return out


def metric_values(view, k=5):
    if view.scores.shape[0] == 0:
        raise DomainError("no instance has a ground-truth label in this scenario")
    k = min(k, view.scores.shape[1])
    p, r, f1 = prf_matrix(view.scores, view.relevance, k)
    return {
        "I-MAP": i_map_matrix(view.scores, view.relevance),
        "L-MAP": l_map_matrix(view.scores, view.relevance),
        "precision": p,
        "recall": r,
        "F1": f1,
    }


def evaluate(S, truths, scenario, k=5, label_ids=None):
    """All five metrics for one score matrix in one scenario.

    ``k`` is capped at the number of candidate labels.
    """
    view = apply_scenario(S, truths, scenario, label_ids)
    values = metric_values(view, k)
    return EvalReport(scenario.kind, min(k, len(view.label_ids)), len(view.instance_ids),
                      len(view.label_ids), values)


def rgs_baseline(truths, scenario, n_labels, trials=100, seed=0, k=5):
    """Random guess of scores: i.i.d. uniform scores, ``trials`` repetitions.

    Returns an :class:`EvalReport` whose ``values`` and ``mean`` hold the
    trial means and ``sem`` the standard error of the mean.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    rng = make_rng(seed)
    base = apply_scenario(np.zeros((len(truths), n_labels)), truths, scenario)
    n, c = base.scores.shape
    runs = {m: [] for m in METRICS}
    for _ in range(trials):
        view = ScenarioView(rng.random((n, c)), base.relevance, base.label_ids, base.instance_ids)
        for m, v in metric_values(view, k).items():
            runs[m].append(v)
    mean = {m: float(np.mean(v)) for m, v in runs.items()}
    flags = []
    if trials == 1:
        sem = {m: 0.0 for m in METRICS}
        flags.append("sem-undefined")
    else:
        sem = {m: float(np.std(v, ddof=1) / np.sqrt(trials)) for m, v in runs.items()}
    return EvalReport(scenario.kind, min(k, c), n, c, dict(mean), mean, sem, flags)


# -- score dumps -----------------------------------------------------------

SCORES_HEADER = "MLZSR-SCORES v1"


def scores_to_text(S, instance_ids, label_ids):
    """Text dump: a header, a ``labels`` line, then ``instance_id s_1 ... s_C`` rows.

    Floats are written with ``repr`` so a round trip is exact.
    """
    S = np.asarray(S, dtype=DTYPE)
    if S.shape != (len(instance_ids), len(label_ids)):
        raise ShapeError("scores must be (len(instance_ids), len(label_ids))")
    lines = [SCORES_HEADER, "labels " + " ".join(str(int(c)) for c in label_ids)]
    for i, row in zip(instance_ids, S):
        lines.append(f"{int(i)} " + " ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_scores(text):
    """Inverse of :func:`scores_to_text` -> ``(S, instance_ids, label_ids)``."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != SCORES_HEADER:
        raise ParseError("missing score dump header", line=1)
    if len(lines) < 2 or not lines[1].startswith("labels"):
        raise ParseError("missing labels line", line=2)
    try:
        label_ids = tuple(int(c) for c in lines[1].split()[1:])
    except ValueError:
        raise ParseError("label ids must be integers", line=2) from None
    rows, ids = [], []
    for n, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != len(label_ids) + 1:
            raise ParseError(f"expected {len(label_ids) + 1} fields, got {len(parts)}", line=n)
        try:
            ids.append(int(parts[0]))
            rows.append([float(v) for v in parts[1:]])
        except ValueError:
            raise ParseError("malformed number", line=n) from None
    S = np.array(rows, dtype=DTYPE).reshape(len(rows), len(label_ids))
    return S, tuple(ids), label_ids
