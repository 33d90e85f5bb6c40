"""End-to-end zero-shot benchmark on the synthetic generator.

One run generates a dataset, makes a label-first split on the generator's
held-out labels, trains every neural variant with one shared configuration,
fits the linear comparison methods and scores everything on the test
instances in each scenario.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import (
    conse_fit, conse_predict, costa_fit, costa_predict, dsp_fit, dsp_predict,
    instance_features, mean_label_vectors,
)
from .data import SyntheticConfig, generate_synthetic, held_out_labels, make_lfs_split
from .exceptions import ConfigError
from .evaluation import SCENARIOS, Scenario, evaluate, rgs_baseline
from .scoring import fuse_scores, normalize_scores
from .train import TrainConfig, alternate_train

NEURAL = ("ranknet", "hinge", "nrc", "wse", "rlr")
LINEAR = ("dsp", "conse", "costa")
METHODS = NEURAL + ("fusion",) + LINEAR
BENCH_SEEDS = (0, 1, 2)
VAL_COUNT = 100


@dataclass
class BenchmarkRun:
    """Test-set scores and reports of every method for one seed."""

    seed: int
    scores: dict = field(default_factory=dict)
    checkpoints: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    rgs: dict = field(default_factory=dict)
    rounds: dict = field(default_factory=dict)
    seconds: float = 0.0

    def imap(self, method, scenario="gzsl"):
        return self.reports[method][scenario].values["I-MAP"]

    def rgs_threshold(self, scenario="gzsl", n_sem=3.0):
        r = self.rgs[scenario]
        return r.mean["I-MAP"] + n_sem * r.sem["I-MAP"]


def benchmark_data(seed, synth=None, val_count=VAL_COUNT):
    """Synthetic dataset and its label-first split for ``seed``."""
    synth = replace(synth or SyntheticConfig(), seed=seed)
    ds = generate_synthetic(synth)
    split = make_lfs_split(ds, held_out_labels(synth), val_count, seed=seed)
    return ds, split


def method_config(cfg, method, d_s):
    """``cfg`` with the one change that defines a neural ``method``."""
    if method == "ranknet":
        return replace(cfg, loss="ranknet")
    if method == "hinge":
        return replace(cfg, loss="hinge")
    if method == "nrc":
        return replace(cfg, recurrent=False)
    if method == "wse":
        return replace(cfg, learn_semantic=False, embed_dim=d_s)
    if method == "rlr":
        return replace(cfg, label_reps="random")
    raise ConfigError(f"unknown method {method!r}; expected one of {NEURAL}")


def linear_scores(method, ds, split, X_test):
    """Test scores of a linear comparison method fitted on ``split.train``."""
    F = instance_features(ds.X)
    F_test = instance_features(X_test)
    train = list(split.train)
    tsets = split.target_sets(ds, "train")
    known = list(split.known)
    if method == "dsp":
        m = dsp_fit(F[train], mean_label_vectors(tsets, ds.semantics))
        return dsp_predict(m, F_test, ds.semantics)
    Y = ds.indicator(range(len(train)), known, tsets)
    if method == "conse":
        m = conse_fit(F[train], Y)
        return conse_predict(m, F_test, ds.semantics[known], ds.semantics)
    if method == "costa":
        m = costa_fit(F[train], Y)
        return costa_predict(m, F_test, known, ds.semantics)
    raise ConfigError(f"unknown linear method {method!r}; expected one of {LINEAR}")


def run_benchmark(seed, train_cfg=None, synth=None, methods=METHODS, rgs_trials=100,
                  scenarios=SCENARIOS):
    """Train and evaluate ``methods`` on the benchmark data of ``seed``.

    Every neural method uses ``train_cfg`` (seeded with ``seed``) and
    differs from the full model only in the component it ablates. Fusion
    needs ``ranknet`` and ``hinge``.
    """
    t0 = time.perf_counter()
    cfg = replace(train_cfg or TrainConfig(), seed=seed)
    ds, split = benchmark_data(seed, synth)
    test = list(split.test)
    truths = [ds.labels[i] for i in test]
    X_test = ds.X[test]
    run = BenchmarkRun(seed)
    for kind in scenarios:
        sc = Scenario(kind, split.known, split.unseen)
        run.rgs[kind] = rgs_baseline(truths, sc, ds.n_labels, rgs_trials, seed)
    for method in methods:
        if method in NEURAL:
            ckpt = alternate_train(ds, split, method_config(cfg, method, ds.d_s))
            run.checkpoints[method] = ckpt
            run.scores[method] = ckpt.scores(X_test, ds.semantics)
            run.rounds[method] = ckpt.round
        elif method == "fusion":
            run.scores[method] = fuse_scores(normalize_scores(run.scores["ranknet"]),
                                             normalize_scores(run.scores["hinge"]))
        else:
            run.scores[method] = linear_scores(method, ds, split, X_test)
        run.reports[method] = {
            kind: evaluate(run.scores[method], truths, Scenario(kind, split.known, split.unseen))
            for kind in scenarios
        }
    run.seconds = time.perf_counter() - t0
    return run


def summary_table(runs, scenario="gzsl"):
    """Plain-text I-MAP table: one row per method, one column per seed."""
    methods = list(runs[0].reports)
    head = f"{'method':<8}" + "".join(f"{'seed ' + str(r.seed):>12}" for r in runs)
    lines = [f"# {scenario} I-MAP", head]
    lines.append(f"{'rgs':<8}" + "".join(f"{r.rgs[scenario].mean['I-MAP']:>12.4f}" for r in runs))
    for m in methods:
        lines.append(f"{m:<8}" + "".join(f"{r.imap(m, scenario):>12.4f}" for r in runs))
    return "\n".join(lines) + "\n"


def wins(runs, a, b, scenario="gzsl"):
    """Number of runs where method ``a`` scores at least as high as ``b``."""
    return int(np.sum([r.imap(a, scenario) >= r.imap(b, scenario) for r in runs]))
