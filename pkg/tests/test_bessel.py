import math

import numpy as np
import pytest

from telegraph.bessel import i0e, i1e, i1e_over_z

SPOTS = [0.0, 1e-8, 0.3, 1.0, 2.5, 7.0, 19.99, 20.0, 35.0, 400.0]


def scaled_bessel_quad(n, z, m=8192):
    # e^{-z} I_n(z) = (1/2pi) int_0^2pi exp(z (cos th - 1)) cos(n th) d th; the
    # integrand is smooth and periodic, so the plain trapezoid rule converges
    # geometrically
    th = 2.0 * math.pi * np.arange(m) / m
    return float(np.mean(np.exp(z * (np.cos(th) - 1.0)) * np.cos(n * th)))


@pytest.mark.parametrize("z", SPOTS)
def test_against_integral_representation(z):
    assert float(i0e(z)) == pytest.approx(scaled_bessel_quad(0, z), rel=1e-12, abs=1e-15)
    assert float(i1e(z)) == pytest.approx(scaled_bessel_quad(1, z), rel=1e-12, abs=1e-15)


def test_ratio_small_argument_limit():
    assert float(i1e_over_z(0.0)) == 0.5
    assert float(i1e_over_z(1e-6)) == pytest.approx(0.5, rel=1e-6)


def test_vectorised_and_continuous_at_switch():
    z = np.array([20.0 * (1 - 1e-14), 20.0])
    a, b = i0e(z), i1e(z)
    assert a.shape == z.shape
    assert a[0] == pytest.approx(a[1], rel=1e-12) and b[0] == pytest.approx(b[1], rel=1e-12)
    zz = np.linspace(0.0, 60.0, 601)
    assert np.all(i1e(zz) < i0e(zz)) and np.all(np.diff(i0e(zz)) < 0)
