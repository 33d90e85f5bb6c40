import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlzsr.data import (
    Dataset, SplitSpec, SyntheticConfig, _cluster_assignment, choose_unseen, dataset_to_text,
    generate_synthetic, held_out_labels, load_dataset, load_split, make_ifs_split,
    make_lfs_split, pad_segments, parse_dataset, randomize_label_reps, save_dataset, save_split,
)
from mlzsr.exceptions import ConfigError, ParseError, ShapeError, SplitInfeasibleError
from mlzsr.numerics import split_rng

SMALL = dict(n_labels=12, n_clusters=3, n_held_out=3, n_known_instances=30,
             n_unseen_instances=10, T=5, d_x=6, d_s=4)


def small_cfg(**kw):
    return SyntheticConfig(**{**SMALL, **kw})


def toy_dataset(labels, n_labels=4, T=2, d_x=2, seed=0):
    r = np.random.default_rng(seed)
    return Dataset(r.normal(size=(len(labels), T, d_x)), labels,
                   [f"l{c}" for c in range(n_labels)], r.normal(size=(n_labels, 3)))


class TestDatasetFile:
    def test_round_trip_bitwise(self, tmp_path):
        ds = generate_synthetic(small_cfg())
        save_dataset(ds, tmp_path / "d.txt")
        back = load_dataset(tmp_path / "d.txt")
        assert back == ds
        assert back.X.tobytes() == ds.X.tobytes()
        assert back.semantics.tobytes() == ds.semantics.tobytes()

    def test_header_layout(self):
        text = dataset_to_text(toy_dataset([(0, 1), (2,)]))
        lines = text.splitlines()
        assert lines[0] == "MLZSR v1"
        assert lines[1].split() == ["4", "3", "2", "2", "2"]
        assert lines[2] == "0 l0"
        assert lines[10] == "0 1"

    @pytest.mark.parametrize("mutate,line", [
        (lambda L: ["MLZSR v2"] + L[1:], 1),
        (lambda L: L[:1] + ["4 3 2 x 2"] + L[2:], 2),
        (lambda L: L[:3] + ["9 l1"] + L[4:], 4),
        (lambda L: L[:6] + ["1.0 2.0"] + L[7:], 7),
        (lambda L: L[:11] + ["1.0 nan?"] + L[12:], 12),
        (lambda L: L[:12], 13),
    ])
    def test_parse_errors_report_line(self, mutate, line):
        lines = dataset_to_text(toy_dataset([(0, 1), (2,)])).splitlines()
        with pytest.raises(ParseError) as e:
            parse_dataset("\n".join(mutate(lines)) + "\n")
        assert e.value.line == line

    def test_empty_label_set_rejected(self):
        with pytest.raises(ConfigError):
            toy_dataset([(0,), ()])

    def test_label_outside_vocabulary(self):
        with pytest.raises(ConfigError):
            toy_dataset([(0, 4)])

    def test_indicator(self):
        ds = toy_dataset([(0, 2), (1,)])
        np.testing.assert_array_equal(ds.indicator([1, 0], [2, 1]), [[-1, 1], [1, -1]])


class TestGenerator:
    def test_deterministic_bytes(self):
        a, b = generate_synthetic(small_cfg(seed=3)), generate_synthetic(small_cfg(seed=3))
        assert dataset_to_text(a) == dataset_to_text(b)
        assert dataset_to_text(a) != dataset_to_text(generate_synthetic(small_cfg(seed=4)))

    def test_shapes_and_label_counts(self):
        cfg = small_cfg()
        ds = generate_synthetic(cfg)
        assert ds.X.shape == (40, 5, 6) and ds.semantics.shape == (12, 4)
        assert all(2 <= len(ls) <= 3 for ls in ds.labels)

    def test_noiseless_segments_lie_in_semantic_image(self):
        ds = generate_synthetic(small_cfg(noise=0.0))
        rows = ds.X.reshape(-1, ds.d_x)
        # every segment is G @ s_c with G: d_s -> d_x, so the rows span at most d_s dims
        assert np.linalg.matrix_rank(rows, tol=1e-9) <= ds.d_s
        for x, ls in zip(ds.X, ds.labels):
            assert len(np.unique(x, axis=0)) == len(ls)
        noisy = generate_synthetic(small_cfg(noise=0.5))
        assert np.linalg.matrix_rank(noisy.X.reshape(-1, ds.d_x)) == ds.d_x

    def test_noiseless_episode_recovers_linear_map(self):
        cfg = small_cfg(noise=0.0, d_s=3, d_x=8)
        ds = generate_synthetic(cfg)
        # a label's segment vector is the same wherever it appears, so each
        # distinct row belongs to exactly one label shared by all its instances
        rows, owners = {}, {}
        for x, ls in zip(ds.X, ds.labels):
            for r in np.unique(x, axis=0):
                key = r.tobytes()
                rows[key] = r
                owners[key] = owners.get(key, set(ls)) & set(ls)
        assert all(len(o) == 1 for o in owners.values())
        S = np.array([ds.semantics[next(iter(owners[k]))] for k in rows])
        R = np.array(list(rows.values()))
        G, *_ = np.linalg.lstsq(S, R, rcond=None)
        np.testing.assert_allclose(S @ G, R, atol=1e-10)

    def test_cooccurrence_concentrates_within_clusters(self):
        cfg = SyntheticConfig(n_known_instances=1000, n_unseen_instances=0, seed=1)
        ds = generate_synthetic(cfg)
        cluster = _cluster_assignment(cfg, split_rng(cfg.seed, 4)[0])
        same = cluster[:, None] == cluster[None, :]
        co = np.zeros((cfg.n_labels, cfg.n_labels))
        for ls in ds.labels:
            for a, b in itertools.permutations(ls, 2):
                co[a, b] += 1
        off_diag = ~np.eye(cfg.n_labels, dtype=bool)
        in_rate = co[same & off_diag].mean()
        off_rate = co[~same].mean()
        assert off_rate < in_rate

    def test_held_out_labels_spread_over_clusters(self):
        cfg = SyntheticConfig()
        held = held_out_labels(cfg)
        cluster = _cluster_assignment(cfg, split_rng(cfg.seed, 4)[0])
        assert len(held) == 8
        assert np.bincount(cluster[list(held)], minlength=5).tolist() == [2, 2, 2, 1, 1]

    def test_unseen_instances_carry_held_out_labels(self):
        cfg = small_cfg()
        ds = generate_synthetic(cfg)
        held = set(held_out_labels(cfg))
        with_held = [bool(set(ls) & held) for ls in ds.labels]
        assert with_held == [False] * 30 + [True] * 10

    @pytest.mark.parametrize("kw", [
        dict(labels_per_instance=(1, 2)),
        dict(n_clusters=0),
        dict(noise=-1.0),
        dict(labels_per_instance=(2, 5)),
        dict(n_held_out=0),
    ])
    def test_config_errors(self, kw):
        with pytest.raises(ConfigError):
            small_cfg(**kw)

    def test_random_label_reps_unit_norm(self):
        V = randomize_label_reps(10, 5, seed=2)
        np.testing.assert_allclose(np.linalg.norm(V, axis=1), 1.0, rtol=1e-14)


class TestPadSegments:
    def test_full_length_unchanged(self, rng):
        s = rng.normal(size=(3, 2))
        np.testing.assert_array_equal(pad_segments(s, 3), s)

    def test_zero_rows_appended(self):
        out = pad_segments(np.ones((1, 2)), 3)
        np.testing.assert_array_equal(out, [[1, 1], [0, 0], [0, 0]])

    @pytest.mark.parametrize("t,T", [(0, 3), (4, 3)])
    def test_bad_lengths(self, t, T):
        with pytest.raises(ShapeError):
            pad_segments(np.ones((t, 2)), T)


class TestIFS:
    def test_ten_instances(self):
        ds = toy_dataset([(c % 4,) for c in range(10)])
        sp = make_ifs_split(ds, [3], (0.6, 0.2, 0.2), seed=1)
        assert (len(sp.train), len(sp.val), len(sp.test)) == (6, 2, 2)
        assert sp.check(ds)

    def test_empty_unseen(self):
        with pytest.raises(ConfigError):
            make_ifs_split(toy_dataset([(0,)]), [])

    def test_bad_fractions(self):
        with pytest.raises(ConfigError):
            make_ifs_split(toy_dataset([(0,)] * 4), [1], (0.5, 0.2, 0.2))

    def test_empty_targets_retained(self):
        ds = toy_dataset([(3,)] * 5 + [(0,)] * 5)
        sp = make_ifs_split(ds, [3], seed=0)
        tsets = sp.target_sets(ds, "train")
        assert any(t == () for t in tsets)
        assert len(sp.train) + len(sp.val) + len(sp.test) == 10

    def test_test_targets_untouched(self):
        ds = toy_dataset([(0, 3)] * 10)
        sp = make_ifs_split(ds, [3], seed=0)
        assert all(t == (0, 3) for t in sp.target_sets(ds, "test"))


class TestLFS:
    def test_infeasible(self):
        with pytest.raises(SplitInfeasibleError):
            make_lfs_split(toy_dataset([(1,), (1, 2)]), [1], 0)

    def test_val_count_too_large(self):
        with pytest.raises(SplitInfeasibleError):
            make_lfs_split(toy_dataset([(0,), (0,), (1,)]), [1], 2)

    def test_twenty_instance_membership(self):
        r = np.random.default_rng(7)
        labels = [tuple(sorted(set(r.choice(5, size=2)))) for _ in range(20)]
        ds = toy_dataset(labels, n_labels=5)
        unseen = (1, 4)
        sp = make_lfs_split(ds, unseen, 3, seed=2)
        for i in range(20):
            has_unseen = any(c in unseen for c in labels[i])
            assert (i in sp.test) == has_unseen
            assert (i in sp.train or i in sp.val) == (not has_unseen)
        assert len(sp.val) == 3
        assert sp.known == (0, 2, 3)

    def test_deterministic(self):
        ds = generate_synthetic(small_cfg())
        a = make_lfs_split(ds, held_out_labels(small_cfg()), 5, seed=4)
        b = make_lfs_split(ds, held_out_labels(small_cfg()), 5, seed=4)
        assert a.to_text() == b.to_text()


@st.composite
def datasets_and_unseen(draw):
    n_labels = draw(st.integers(2, 6))
    n = draw(st.integers(1, 15))
    labels = [draw(st.sets(st.integers(0, n_labels - 1), min_size=1, max_size=n_labels)) for _ in range(n)]
    unseen = draw(st.sets(st.integers(0, n_labels - 1), min_size=1, max_size=n_labels - 1))
    return toy_dataset(labels, n_labels=n_labels), unseen, draw(st.integers(0, 99))


@given(datasets_and_unseen())
def test_split_invariants_hold(case):
    ds, unseen, seed = case
    sp = make_ifs_split(ds, unseen, seed=seed)
    assert sp.check(ds)
    rest = [i for i in range(ds.n_instances) if not set(ds.labels[i]) & unseen]
    if rest:
        lfs = make_lfs_split(ds, unseen, len(rest) // 3, seed=seed)
        assert lfs.check(ds)


class TestSplitText:
    def test_round_trip(self, tmp_path):
        ds = generate_synthetic(small_cfg())
        for sp in (make_ifs_split(ds, [0, 5], seed=2), make_lfs_split(ds, [0, 5], 4, seed=2)):
            save_split(sp, tmp_path / "s.txt")
            assert load_split(tmp_path / "s.txt") == sp

    def test_missing_record(self):
        with pytest.raises(ParseError):
            SplitSpec.from_text("MLZSR-SPLIT v1\nmode lfs\nseed 0\n")

    def test_bad_header(self):
        with pytest.raises(ParseError):
            SplitSpec.from_text("something else\n")

    def test_check_detects_violation(self):
        ds = toy_dataset([(0,), (1,), (0, 1)])
        bad = SplitSpec("lfs", [0], [], [1], [0], [1])
        with pytest.raises(SplitInfeasibleError):
            bad.check(ds)


def test_choose_unseen():
    u = choose_unseen(10, 3, seed=1)
    assert len(u) == 3 and u == choose_unseen(10, 3, seed=1)
    with pytest.raises(ConfigError):
        choose_unseen(3, 3)


def test_published_breakfast_split_sizes_are_consistent():
    # documented split shapes of the real dataset: both settings cover the same 1989 clips
    assert 1196 + 126 + 667 == 1019 + 200 + 770 == 1989
    assert 39 + 10 == 49
