"""Linear algebra, seeded randomness, Adam and a finite-difference oracle.

All arrays are ``float64``. Random streams come from numpy's ``PCG64``
bit generator (a 64-bit permuted congruential generator); substreams are
derived with :class:`numpy.random.SeedSequence` spawning, so a given seed
yields the same numbers on every platform numpy supports.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericError, ShapeError

DTYPE = np.float64


def as_matrix(a, name="array"):
    """Return ``a`` as a 2-D float64 array, raising on bad shape or NaN/Inf."""
    a = np.asarray(a, dtype=DTYPE)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    check_finite(a, name)
    return a


def check_finite(a, name="array"):
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{name} contains NaN or Inf")
    return a


def matmul(a, b):
    """Matrix product with shape checking."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def make_rng(seed):
    """PCG64-backed generator for ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def split_rng(seed, n):
    """``n`` independent, reproducible generators derived from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


@dataclass(frozen=True)
class AdamState:
    """Moment accumulators for one parameter array.

    Defaults are the standard Adam configuration (beta1=0.9, beta2=0.999,
    eps=1e-8).
    """

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, lr=1e-3, **kw):
        params = np.asarray(params, dtype=DTYPE)
        return cls(np.zeros_like(params), np.zeros_like(params), 0, lr, **kw)


def adam_step(params, grads, state):
    """One bias-corrected Adam update.

    Returns new ``(params, state)``; the inputs are not modified.
    """
    params = np.asarray(params, dtype=DTYPE)
    grads = np.asarray(grads, dtype=DTYPE)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ShapeError(
            f"params {params.shape}, grads {grads.shape}, moments {state.m.shape}"
        )
    check_finite(grads, "gradient")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * (grads * grads)
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.eps)


@dataclass
class Adam:
    """Adam over a dict of named parameter arrays, one :class:`AdamState` each."""

    lr: float = 1e-3
    states: dict = field(default_factory=dict)

    def step(self, params, grads):
        for name, p in params.items():
            st = self.states.get(name)
            if st is None:
                st = AdamState.zeros_like(p, lr=self.lr)
            params[name], self.states[name] = adam_step(p, grads[name], st)
        return params


def finite_diff_grad(f, x, h=1e-5):
    """Central-difference gradient of scalar ``f`` at ``x`` (any shape)."""
    if not h > 0:
        raise ValueError("step h must be positive")
    x = np.array(x, dtype=DTYPE)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"f is not finite near coordinate {i}")
        g[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic, numeric, floor=1e-6):
    """Largest entrywise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=DTYPE)
    n = np.asarray(numeric, dtype=DTYPE)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def sigmoid(z):
    """Logistic function, overflow-safe for large ``|z|``."""
    z = np.asarray(z, dtype=DTYPE)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus(z):
    """``log(1 + exp(z))`` computed as ``max(z, 0) + log1p(exp(-|z|))``."""
    z = np.asarray(z, dtype=DTYPE)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
