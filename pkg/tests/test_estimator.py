import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mlzsr.data import SyntheticConfig, generate_synthetic, held_out_labels, make_lfs_split
from mlzsr.estimator import (
    COSTA, DSP, ConSE, JointRankingEmbedding, check_sequences, check_targets, top_k_indicator,
)
from mlzsr.exceptions import ConfigError, ShapeError

SYN = SyntheticConfig(n_labels=12, n_clusters=3, n_held_out=3, n_known_instances=60,
                      n_unseen_instances=15, T=4, d_x=6, d_s=5, seed=1)
SMALL = dict(embed_dim=4, hidden_dim=5, dense_dim=5, semantic_hidden_dim=5, max_rounds=2,
             batch_size=16)


@pytest.fixture(scope="module")
def problem():
    ds = generate_synthetic(SYN)
    split = make_lfs_split(ds, held_out_labels(SYN), 10, seed=0)
    known = list(split.known)
    train = list(split.train) + list(split.val)
    Y = (ds.indicator(train, known) > 0).astype(int)
    return ds, split, ds.X[train], Y, ds.semantics[known]


ESTIMATORS = [
    lambda: JointRankingEmbedding(**SMALL),
    lambda: JointRankingEmbedding(learn_semantic=False, **SMALL),
    lambda: DSP(),
    lambda: ConSE(n_iter=50),
    lambda: COSTA(n_iter=50),
]


@pytest.mark.parametrize("make", ESTIMATORS)
def test_fit_predict_shapes(problem, make):
    ds, split, X, Y, S = problem
    est = make().fit(X, Y, S)
    assert est.decision_function(X[:3]).shape == (3, S.shape[0])
    full = est.decision_function(ds.X[:3], ds.semantics)
    assert full.shape == (3, ds.n_labels) and np.all(np.isfinite(full))
    P = est.predict(ds.X[:3], ds.semantics)
    assert P.shape == (3, ds.n_labels) and np.all(P.sum(axis=1) == est.top_k)


@pytest.mark.parametrize("make", ESTIMATORS)
def test_clone_and_params(make):
    est = make()
    c = clone(est)
    assert c.get_params() == est.get_params()
    c.set_params(top_k=2)
    assert c.top_k == 2 and est.top_k == 5


@pytest.mark.parametrize("make", ESTIMATORS)
def test_unfitted(problem, make):
    with pytest.raises(NotFittedError):
        make().decision_function(problem[2])


def test_joint_fit_matches_training_loop(problem):
    ds, split, X, Y, S = problem
    a = JointRankingEmbedding(**SMALL).fit(X, Y, S)
    b = JointRankingEmbedding(**SMALL).fit(X, Y, S)
    assert a.checkpoint_.to_bytes() == b.checkpoint_.to_bytes()
    assert a.n_rounds_ == len(a.checkpoint_.history)
    assert a.transform(X[:2]).shape == (2, 4)
    assert a.embed_labels().shape == (S.shape[0], 4)


def test_joint_explicit_validation(problem):
    ds, split, X, Y, S = problem
    est = JointRankingEmbedding(**SMALL).fit(X[:40], Y[:40], S, X[40:], Y[40:])
    assert est.best_round_ <= est.n_rounds_


def test_signed_targets_equivalent(problem):
    ds, split, X, Y, S = problem
    a = DSP().fit(X, Y, S).decision_function(X[:4])
    b = DSP().fit(X, 2 * Y - 1, S).decision_function(X[:4])
    np.testing.assert_array_equal(a, b)


def test_costa_training_rows_use_known_classifiers(problem):
    ds, split, X, Y, S = problem
    est = COSTA(n_iter=30).fit(X, Y, S)
    assert est.decision_function(X[:2]).shape == (2, S.shape[0])


class TestValidation:
    def test_sequences_need_3d(self):
        with pytest.raises(ShapeError):
            check_sequences(np.zeros((2, 3)))

    def test_sequences_feature_count(self):
        with pytest.raises(ShapeError):
            check_sequences(np.zeros((2, 3, 4)), d_x=5)

    def test_targets_shape(self):
        with pytest.raises(ShapeError):
            check_targets(np.zeros((2, 3)), 2, 4)

    def test_targets_values(self):
        with pytest.raises(ConfigError):
            check_targets(np.full((1, 2), 0.5), 1, 2)

    def test_targets_signed(self):
        np.testing.assert_array_equal(check_targets([[0, 1]], 1, 2), [[-1, 1]])

    def test_semantic_dim_mismatch(self, problem):
        ds, split, X, Y, S = problem
        est = DSP().fit(X, Y, S)
        with pytest.raises(ShapeError):
            est.decision_function(X[:1], np.zeros((3, S.shape[1] + 1)))

    def test_bad_validation_fraction(self, problem):
        ds, split, X, Y, S = problem
        with pytest.raises(ConfigError):
            JointRankingEmbedding(validation_fraction=1.0, **SMALL).fit(X, Y, S)


def test_top_k_indicator_ties():
    np.testing.assert_array_equal(top_k_indicator([[1.0, 1.0, 0.0]], 1), [[1, 0, 0]])
    np.testing.assert_array_equal(top_k_indicator([[0.0, 2.0]], 5), [[1, 1]])
