import numpy as np
import pytest


def central_diff(f, x, eps=1e-6):
    """Central finite difference of a scalar function at x."""
    return (f(x + eps) - f(x - eps)) / (2.0 * eps)


def rel_err(analytic, reference, floor=1e-8):
    """|a - b| scaled by max(|b|, floor), elementwise max."""
    a = np.asarray(analytic, dtype=float)
    b = np.asarray(reference, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))


def fd_param_grads(loss, params, names=None, eps=1e-5):
    """Finite-difference gradients of loss(params) for a dict of arrays."""
    grads = {}
    for name in names if names is not None else params:
        base = params[name]
        g = np.zeros_like(base)
        flat = base.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss(params)
            flat[i] = orig - eps
            lo = loss(params)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads[name] = g
    return grads


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
