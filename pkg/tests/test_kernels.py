import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from kernelbias.errors import ConfigError
from kernelbias.kernels import (
    Exponential,
    Gaussian,
    KerpleLog,
    SandwichSinusoidal,
    T5Bucket,
    eval_kernel,
    eval_log_kernel,
    grad_kernel_params,
    param_names,
)

from conftest import central_diff

ALL_KINDS = [
    Exponential(0.25),
    Gaussian(0.25),
    KerpleLog(1.5, 0.7),
    SandwichSinusoidal(64, 0.125),
    T5Bucket(4, (0.0, -0.5, -1.0, -1.5, -2.0)),
]

params_st = st.floats(0.01, 4.0, allow_nan=False)
DISTANCES = np.array([0, 1, 7, 63, 511])


# --- evaluation examples -----------------------------------------------------


def test_exponential_matches_reported_anchor():
    # exp(-511/64) = 0.00034074...; reported rounded value is 0.00035
    v = eval_kernel(Exponential(1 / 64), 511)
    assert v == pytest.approx(0.0003407453956084444, rel=1e-12)
    assert abs(v - 0.00035) < 5e-5


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_zero_distance_is_one(kind):
    assert eval_kernel(kind, 0) == 1.0
    assert eval_log_kernel(kind, 0) == 0.0


def test_exponential_scalar_value():
    assert eval_kernel(Exponential(0.25), 4) == pytest.approx(np.exp(-1.0), rel=1e-15)


def test_kerple_log_scalar_value():
    assert eval_kernel(KerpleLog(1.0, 1.0), 3) == pytest.approx(0.25, abs=1e-15)


def test_log_kernel_values():
    assert eval_log_kernel(Exponential(0.5), 0) == 0.0
    assert eval_log_kernel(KerpleLog(2.0, 1.0), 3) == pytest.approx(
        -2.0 * np.log(4.0), rel=1e-15
    )
    # -511**2/64 stays finite where the exp form underflows
    v = eval_log_kernel(Gaussian(1 / 64), 511)
    assert v == -4080.015625
    assert eval_kernel(Gaussian(1 / 64), 511) == 0.0


# --- gradient examples -------------------------------------------------------


def test_kerple_grads_match_closed_form_and_fd():
    g = grad_kernel_params(KerpleLog(1.0, 1.0), 3)
    assert g["r1"] == pytest.approx(-0.25 * np.log(4.0), rel=1e-12)  # -0.3465736
    assert g["r2"] == pytest.approx(-3.0 / 16.0, rel=1e-12)  # -0.1875
    fd_r1 = central_diff(lambda r: eval_kernel(KerpleLog(r, 1.0), 3), 1.0)
    fd_r2 = central_diff(lambda r: eval_kernel(KerpleLog(1.0, r), 3), 1.0)
    assert g["r1"] == pytest.approx(fd_r1, rel=1e-7)
    assert g["r2"] == pytest.approx(fd_r2, rel=1e-7)


def test_grads_vanish_at_zero_distance():
    for kind in (KerpleLog(0.3, 2.5), T5Bucket(4, (0.0, 0.1, 0.2, 0.3, 0.4))):
        for value in grad_kernel_params(kind, 0).values():
            assert value == 0.0


def test_t5_clamped_bucket_gradient():
    g = grad_kernel_params(T5Bucket(4, (0.0,) * 5), 7)
    assert g["table[4]"] == 1.0  # k itself (k = 1 for the zero table)
    assert g["table[0]"] == -1.0
    for b in (1, 2, 3):
        assert g[f"table[{b}]"] == 0.0


def test_fixed_parameter_kinds_have_empty_grads():
    for kind in (Exponential(0.5), Gaussian(0.5), SandwichSinusoidal(8, 1.0)):
        assert grad_kernel_params(kind, 5) == {}
        assert param_names(kind) == ()


# --- invariants --------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(slope=params_st)
def test_exponential_gaussian_strictly_decreasing(slope):
    d = np.arange(0, 600, 7)
    for kind in (Exponential(slope), Gaussian(slope)):
        log_vals = eval_log_kernel(kind, d)
        assert np.all(np.diff(log_vals) < 0)


@settings(max_examples=40, deadline=None)
@given(r1=params_st, r2=params_st)
def test_kerple_strictly_decreasing(r1, r2):
    d = np.arange(0, 600, 7)
    log_vals = eval_log_kernel(KerpleLog(r1, r2), d)
    assert np.all(np.diff(log_vals) < 0)


def test_t5_monotone_iff_table_non_increasing():
    d = np.arange(0, 12)
    decreasing = T5Bucket(4, (0.0, -0.1, -0.4, -0.9, -1.6))
    assert np.all(np.diff(eval_log_kernel(decreasing, d)) <= 0)
    bumpy = T5Bucket(4, (0.0, -0.1, 0.3, -0.9, -1.6))
    assert np.any(np.diff(eval_log_kernel(bumpy, d)) > 0)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_range_up_to_8192_via_log_form(kind):
    d = np.arange(0, 8193, 64)
    log_vals = eval_log_kernel(kind, d)
    assert np.all(np.isfinite(log_vals))
    assert np.all(log_vals <= 0.0)
    assert eval_kernel(kind, 0) == 1.0


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_log_exp_consistency(kind):
    d = np.arange(0, 200)
    k = eval_kernel(kind, d)
    log_k = eval_log_kernel(kind, d)
    ok = k > 1e-300
    assert np.max(np.abs(log_k[ok] - np.log(k[ok]))) < 1e-12


def test_gradients_match_finite_differences_on_random_grid(rng):
    for _ in range(30):
        r1, r2 = rng.uniform(0.01, 4.0, 2)
        kind = KerpleLog(r1, r2)
        for d in DISTANCES:
            g = grad_kernel_params(kind, int(d))
            fd1 = central_diff(lambda r: eval_kernel(KerpleLog(r, r2), int(d)), r1)
            fd2 = central_diff(lambda r: eval_kernel(KerpleLog(r1, r), int(d)), r2)
            assert abs(g["r1"] - fd1) <= 1e-4 * max(abs(fd1), 1e-8)
            assert abs(g["r2"] - fd2) <= 1e-4 * max(abs(fd2), 1e-8)


def test_t5_gradients_match_finite_differences(rng):
    for _ in range(10):
        table = tuple(rng.uniform(-2.0, 0.0, 5))
        table = (0.0,) + table[1:]
        kind = T5Bucket(4, table)
        for d in (0, 2, 4, 9):
            g = grad_kernel_params(kind, d)
            for b in range(5):
                def k_of(t):
                    tt = list(table)
                    tt[b] = t
                    return eval_kernel(T5Bucket(4, tuple(tt)), d)

                fd = central_diff(k_of, table[b])
                assert abs(g[f"table[{b}]"] - fd) <= 1e-4 * max(abs(fd), 1e-8)


@settings(max_examples=30, deadline=None)
@given(slope=params_st)
def test_gaussian_below_exponential_beyond_one(slope):
    # exp(-s*d^2) < exp(-s*d) iff d^2 > d
    d = np.arange(0, 50)
    e = eval_log_kernel(Exponential(slope), d)
    g = eval_log_kernel(Gaussian(slope), d)
    assert g[0] == e[0] and g[1] == e[1]
    assert np.all(g[2:] < e[2:])


def test_sandwich_inner_product_depends_only_on_distance():
    kind = SandwichSinusoidal(32, 0.5)
    freqs = kind.frequencies()

    def raw(i, j):
        pi = np.concatenate([np.sin(i * freqs), np.cos(i * freqs)])
        pj = np.concatenate([np.sin(j * freqs), np.cos(j * freqs)])
        return float(pi @ pj)

    for i, j in ((5, 2), (30, 27), (100, 97)):
        assert raw(i, j) == pytest.approx(raw(i - j, 0), abs=1e-9)
        expected = np.exp(kind.scale * (raw(i, j) - kind.dim / 2))
        assert eval_kernel(kind, i - j) == pytest.approx(expected, rel=1e-9)


# --- validation --------------------------------------------------------------


def test_invalid_parameters_rejected():
    with pytest.raises(ConfigError):
        Exponential(0.0)
    with pytest.raises(ConfigError):
        Gaussian(-1.0)
    with pytest.raises(ConfigError):
        KerpleLog(1.0, 0.0)
    with pytest.raises(ConfigError):
        SandwichSinusoidal(7, 1.0)  # odd dim
    with pytest.raises(ConfigError):
        T5Bucket(4, (0.0, 0.0))  # wrong table length
    with pytest.raises(ConfigError):
        eval_kernel(Exponential(1.0), -3)


def test_t5_overflow_reports_kind_and_distance():
    from kernelbias.errors import KernelOverflowError

    huge = T5Bucket(2, (0.0, 800.0, 1000.0))
    with pytest.raises(KernelOverflowError, match="T5Bucket"):
        eval_kernel(huge, 5)
