import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from arasim.bath import BathSpec, LambShiftTable, gamma, kms_ratio, lamb_kernel
from arasim.errors import DomainError


def _trapezoid_pv(bath, omega, h=2e-4):
    """Independent PV oracle: singularity subtraction on a uniform grid through ``omega``."""
    lim = 20 * bath.omega_c
    k_lo = math.ceil((-lim - omega) / h)
    k_hi = math.floor((lim - omega) / h)
    nu = omega + h * np.arange(k_lo, k_hi + 1)
    g_w = gamma(bath, omega)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (gamma(bath, nu) - g_w) / (omega - nu)
    d = 1e-5
    f[nu == omega] = -(gamma(bath, omega + d) - gamma(bath, omega - d)) / (2 * d)
    smooth = np.trapezoid(f, nu)
    a, b = nu[0], nu[-1]
    return (smooth + g_w * math.log((omega - a) / (b - omega))) / (2 * math.pi)


def test_zero_frequency_limit():
    b = BathSpec(eta=1e-3, temperature=1.57)
    assert gamma(b, 0.0) == pytest.approx(2 * math.pi * 1e-3 * 1.57, rel=1e-12)
    assert gamma(b, 0.0) == pytest.approx(9.865e-3, abs=5e-7)
    assert gamma(b, 1e-12) == pytest.approx(gamma(b, 0.0), rel=1e-9)


@pytest.mark.parametrize("w", [1.0, 2.0, 5.0])
def test_kms_examples(w):
    b = BathSpec(eta=1e-3)
    assert gamma(b, -w) == pytest.approx(math.exp(-b.beta * w) * gamma(b, w), rel=1e-12)


def test_kms_over_window():
    w = np.linspace(-10, 10, 4001)
    assert np.max(np.abs(kms_ratio(BathSpec(eta=5e-4), w) - 1)) < 1e-12


def test_zero_coupling():
    b = BathSpec(eta=0.0)
    w = np.linspace(-5, 5, 11)
    assert np.all(gamma(b, w) == 0)
    assert np.all(lamb_kernel(b, [0.3, -2.0]) == 0)


@given(st.floats(-200, 200, allow_nan=False))
def test_rate_positive(w):
    assert gamma(BathSpec(eta=1e-4), w) > 0


def test_rate_decays_past_cutoff():
    b = BathSpec(eta=1e-3)
    assert gamma(b, 50 * b.omega_c) < 1e-15
    assert gamma(b, -50 * b.omega_c) < 1e-15


def test_rate_continuous_at_zero():
    b = BathSpec(eta=1.0)
    for w in (1e-9, 1e-8, 2e-8, 1e-6):
        for sign in (1, -1):
            x = sign * w
            exact = 2 * math.pi * x * math.exp(-abs(x) / b.omega_c) / -math.expm1(-b.beta * x)
            assert gamma(b, x) == pytest.approx(exact, rel=1e-12)


def test_lamb_kernel_linear_in_eta():
    w = [-3.0, 0.0, 0.7, 4.0]
    assert np.allclose(lamb_kernel(BathSpec(eta=2e-4), w), 2 * lamb_kernel(BathSpec(eta=1e-4), w),
                       rtol=1e-6, atol=0)


def test_lamb_kernel_spot_value():
    b = BathSpec(eta=1e-4)
    ref = _trapezoid_pv(b, 1.0)
    assert lamb_kernel(b, 1.0) == pytest.approx(ref, rel=1e-4)


@pytest.mark.parametrize("w", [-7.5, -0.4, 0.0, 2.5, 30.0])
def test_lamb_kernel_against_oracle(w):
    b = BathSpec(eta=1e-3)
    assert lamb_kernel(b, w) == pytest.approx(_trapezoid_pv(b, w), rel=1e-4)


def test_lamb_table_matches_quadrature():
    b = BathSpec(eta=1e-3)
    table = LambShiftTable(b)
    w = np.array([-12.3, -1.0, -1e-4, 0.0, 3e-3, 0.9, 7.7, 40.0])
    assert np.allclose(table(w), lamb_kernel(b, w), rtol=1e-6, atol=1e-12)


@pytest.mark.parametrize("kw", [{"eta": -1e-3}, {"omega_c": 0.0}, {"temperature": -1.0},
                                {"coupling": "pairwise"}])
def test_bath_validation(kw):
    with pytest.raises((DomainError, ValueError)):
        BathSpec(**kw)
