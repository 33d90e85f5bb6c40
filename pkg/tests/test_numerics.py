import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlzsr.exceptions import NumericError, ShapeError
from mlzsr.numerics import (
    Adam, AdamState, adam_step, finite_diff_grad, make_rng, matmul, relative_error,
    sigmoid, softplus, split_rng,
)


class TestMatmul:
    def test_identity(self, rng):
        M = rng.normal(size=(3, 4))
        np.testing.assert_array_equal(matmul(np.eye(3), M), M)

    def test_hand_example(self):
        np.testing.assert_array_equal(matmul([[1, 2], [3, 4]], [[1], [1]]), [[3], [7]])

    def test_zero_annihilates(self, rng):
        M = rng.normal(size=(3, 4))
        np.testing.assert_array_equal(matmul(M, np.zeros((4, 2))), np.zeros((3, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_non_finite_input(self):
        with pytest.raises(NumericError):
            matmul([[np.nan]], [[1.0]])

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5),
           st.integers(0, 2**32 - 1))
    def test_associative(self, a, b, c, d, seed):
        r = np.random.default_rng(seed)
        A, B, C = r.normal(size=(a, b)), r.normal(size=(b, c)), r.normal(size=(c, d))
        left = matmul(matmul(A, B), C)
        right = matmul(A, matmul(B, C))
        scale = np.abs(A) @ np.abs(B) @ np.abs(C)
        assert np.all(np.abs(left - right) <= 1e-10 * np.maximum(scale, 1.0))


class TestAdam:
    def test_zero_grad_leaves_params(self, rng):
        p = rng.normal(size=(3, 2))
        new, st_ = adam_step(p, np.zeros_like(p), AdamState.zeros_like(p))
        np.testing.assert_array_equal(new, p)
        assert st_.step == 1

    @pytest.mark.parametrize("g", [3.0, -0.5, 1e-3])
    def test_first_step_is_signed_lr(self, g):
        # m_hat = g, v_hat = g^2, so the update is -lr * g / (|g| + eps)
        lr = 0.01
        new, _ = adam_step(np.array([1.0]), np.array([g]), AdamState.zeros_like(np.ones(1), lr=lr))
        expected = 1.0 - lr * g / (abs(g) + 1e-8)
        assert new[0] == pytest.approx(expected, abs=1e-15)
        assert abs((new[0] - 1.0) + lr * np.sign(g)) < lr * 1e-4

    def test_deterministic(self, rng):
        p, g = rng.normal(size=4), rng.normal(size=4)
        s = AdamState.zeros_like(p)
        a1, s1 = adam_step(p, g, s)
        a2, s2 = adam_step(p, g, s)
        assert a1.tobytes() == a2.tobytes() and s1.m.tobytes() == s2.m.tobytes()

    def test_step_counter_increases(self):
        p = np.zeros(2)
        s = AdamState.zeros_like(p)
        for k in range(1, 4):
            p, s = adam_step(p, np.ones(2), s)
            assert s.step == k

    def test_inputs_not_modified(self, rng):
        p, g = rng.normal(size=3), rng.normal(size=3)
        p0 = p.copy()
        s = AdamState.zeros_like(p)
        adam_step(p, g, s)
        np.testing.assert_array_equal(p, p0)
        np.testing.assert_array_equal(s.m, 0.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adam_step(np.zeros(2), np.zeros(3), AdamState.zeros_like(np.zeros(2)))

    def test_non_finite_grad(self):
        with pytest.raises(NumericError):
            adam_step(np.zeros(2), np.array([1.0, np.inf]), AdamState.zeros_like(np.zeros(2)))

    def test_dict_optimizer_matches_pure_step(self, rng):
        p = {"w": rng.normal(size=(2, 2))}
        g = {"w": rng.normal(size=(2, 2))}
        expected, _ = adam_step(p["w"], g["w"], AdamState.zeros_like(p["w"], lr=0.1))
        out = Adam(0.1).step(dict(p), g)
        np.testing.assert_array_equal(out["w"], expected)

    def test_minimizes_quadratic(self):
        x = np.array([5.0, -3.0])
        s = AdamState.zeros_like(x, lr=0.1)
        for _ in range(500):
            x, s = adam_step(x, 2 * x, s)
        assert np.all(np.abs(x) < 1e-2)


class TestFiniteDiff:
    def test_square(self):
        g = finite_diff_grad(lambda x: float(x[0] ** 2), np.array([3.0]), 1e-5)
        assert abs(g[0] - 6.0) < 1e-6

    def test_constant(self):
        np.testing.assert_array_equal(finite_diff_grad(lambda x: 7.0, np.ones(4)), 0.0)

    def test_linear_form(self, rng):
        c = rng.normal(size=5)
        g = finite_diff_grad(lambda x: float(c @ x), rng.normal(size=5))
        np.testing.assert_allclose(g, c, atol=1e-8)

    def test_cubic_error_is_second_order(self):
        # central difference error for x^3 is exactly h^2
        x = np.array([1.3])
        for h in (1e-2, 5e-3, 2.5e-3):
            g = finite_diff_grad(lambda v: float(v[0] ** 3), x, h)
            assert g[0] - 3 * 1.3**2 == pytest.approx(h**2, rel=1e-4)

    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=4), st.integers(0, 1000))
    def test_polynomial_gradients(self, coeffs, seed):
        r = np.random.default_rng(seed)
        x = r.normal(size=len(coeffs))
        a = np.asarray(coeffs)

        def f(v):
            return float(np.sum(a * v**3 + v**2))

        g = finite_diff_grad(f, x, 1e-4)
        exact = 3 * a * x**2 + 2 * x
        # truncation error h^2 * f''' / 6 = h^2 * a
        np.testing.assert_allclose(g, exact, atol=1e-7 + 2e-8 * np.max(np.abs(a)))

    def test_matrix_input(self, rng):
        A = rng.normal(size=(2, 3))
        g = finite_diff_grad(lambda M: float(np.sum(M * A)), np.zeros((2, 3)))
        np.testing.assert_allclose(g, A, atol=1e-9)

    def test_non_finite(self):
        with pytest.raises(NumericError):
            finite_diff_grad(lambda x: float("nan"), np.zeros(1))


class TestRng:
    def test_same_seed_same_stream(self):
        assert make_rng(7).random(5).tobytes() == make_rng(7).random(5).tobytes()

    def test_different_seeds(self):
        assert not np.array_equal(make_rng(7).random(5), make_rng(8).random(5))

    def test_substreams_reproducible_and_distinct(self):
        a = [g.random(3) for g in split_rng(3, 3)]
        b = [g.random(3) for g in split_rng(3, 3)]
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)
        assert not np.array_equal(a[0], a[1])

    def test_bit_generator_is_pcg64(self):
        assert isinstance(make_rng(0).bit_generator, np.random.PCG64)


def test_relative_error_floor():
    assert relative_error([1e-9], [0.0]) == pytest.approx(1e-3)
    assert relative_error([2.0], [1.0]) == pytest.approx(0.5)
    assert relative_error([], []) == 0.0


@given(st.floats(-800, 800))
def test_softplus_and_sigmoid_stable(x):
    sp = float(softplus(x))
    assert np.isfinite(sp) and sp >= max(x, 0.0)
    s = float(sigmoid(x))
    assert 0.0 <= s <= 1.0
    assert float(sigmoid(x)) + float(sigmoid(-x)) == pytest.approx(1.0)
