import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knlab.eigenfunctions import (highest_weight, highest_weight_constant, laplace_residual,
                                  make_field, random_harmonic, sine_power_integral,
                                  sphere_eigenvalue, torus_wave, zonal)
from knlab.errors import UnsupportedFamilyError
from knlab.functionals import lp_norm
from knlab.geometry import Surface
from knlab.quadrature import sphere_grid


def test_zonal_degree_zero_constant():
    f = zonal(0)
    assert f.eigenvalue == 0.0
    vals = f(np.array([[0.3, 1.0], [2.0, -2.0]]))
    assert np.allclose(vals, 1 / math.sqrt(4 * math.pi))


def test_zonal_pole_value():
    f = zonal(10, pole=(0.7, 0.2))
    assert abs(f(np.array([[0.7, 0.2]]))[0]) == pytest.approx(math.sqrt(21 / (4 * math.pi)),
                                                              rel=1e-12)


def test_zonal_norm_on_doubled_grid():
    f = zonal(25)
    assert f.squared_norm(sphere_grid(100, 200)) == pytest.approx(1.0, abs=1e-6)


def test_zonal_rejects_torus():
    with pytest.raises(UnsupportedFamilyError):
        zonal(3, surface=Surface.flat_torus())


@pytest.mark.parametrize("k", [1, 7, 30])
def test_highest_weight_maximum_on_equator(k):
    f = highest_weight(k)
    th = np.linspace(0.01, math.pi - 0.01, 401)
    vals = np.abs(f(np.stack([th, np.full_like(th, 0.4)], axis=-1)))
    assert th[np.argmax(vals)] == pytest.approx(math.pi / 2, abs=1e-2)


def test_highest_weight_constant_wallis():
    assert sine_power_integral(3) == pytest.approx(32 / 35, rel=1e-14)
    c3 = highest_weight_constant(3)
    assert c3 ** 2 * sine_power_integral(3) * 2 * math.pi == pytest.approx(1.0, rel=1e-14)


def test_highest_weight_rejects_zero():
    with pytest.raises(ValueError):
        highest_weight(0)


@pytest.mark.parametrize("k", [4, 16, 64])
def test_eigenvalue_ladder(k):
    assert zonal(k).eigenvalue == highest_weight(k).eigenvalue == sphere_eigenvalue(k)
    assert sphere_eigenvalue(k) == math.sqrt(k * k + k)


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0, 7.5])
def test_torus_wave_lp_independent_of_m(p):
    area = 4 * math.pi ** 2
    for m in [(1, 0), (5, 6), (-3, 11)]:
        assert lp_norm(torus_wave(m), p=p) == pytest.approx(area ** (1 / p - 1 / 2), rel=1e-12)


def test_torus_wave_rejects_zero():
    with pytest.raises(ValueError):
        torus_wave((0, 0))


def test_random_harmonic_normalized_and_seeded():
    a = random_harmonic(20, 7)
    b = random_harmonic(20, 7)
    assert a.l2_norm_certificate == pytest.approx(1.0, abs=1e-6)
    x = np.array([[0.4, 1.3], [2.2, -0.5]])
    assert np.array_equal(a(x), b(x))
    assert not np.allclose(a(x), random_harmonic(20, 8)(x))


def test_random_harmonic_fft_matches_pointwise():
    f = random_harmonic(40, 2)
    g = f.default_grid()
    direct = f(g.coords().reshape(-1, 2)).reshape(g.shape)
    assert np.allclose(f.grid_values(g), direct, atol=1e-12)


@pytest.mark.parametrize("field", [
    zonal(12), highest_weight(12), random_harmonic(20, 7), torus_wave((4, 5)),
], ids=["zonal", "highest_weight", "random", "torus"])
def test_laplace_residual(field):
    assert laplace_residual(field, n_points=100) <= 1e-4


@pytest.mark.parametrize("field", [zonal(9), highest_weight(9), torus_wave((2, 3)),
                                   random_harmonic(9, 1)],
                         ids=["zonal", "highest_weight", "torus", "random"])
def test_certificate(field):
    assert abs(field.l2_norm_certificate - 1.0) <= 1e-6


@given(k=st.integers(1, 40), seed=st.integers(0, 2 ** 31))
@settings(max_examples=15, deadline=None)
def test_make_field_round_trip(k, seed):
    f = random_harmonic(k, seed)
    g = make_field(f.descriptor())
    x = np.array([[1.0, 0.5]])
    assert g(x) == pytest.approx(f(x))


def test_make_field_unknown():
    with pytest.raises(UnsupportedFamilyError):
        make_field({"family": "nope", "k": 3})
