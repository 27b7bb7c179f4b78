import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knlab.eigenfunctions import highest_weight, random_harmonic, torus_wave, zonal
from knlab.errors import FocalPointError, PreconditionError
from knlab.functionals import (SamplerSpec, gauss_nodes, holder_ratio, kn_maximal, lp_norm,
                               lp_norms, restrict_integral, sup_norm, sup_restriction, tube,
                               tube_mass)
from knlab.geometry import TWO_PI, Surface, geodesic_distance, unit_geodesic
from knlab.quadrature import sphere_grid

SPHERE = Surface.round_sphere()
TORUS = Surface.flat_torus()


def equator(length=1.0, start=0.0):
    return unit_geodesic(SPHERE, (math.pi / 2, start), math.pi / 2, length)


def test_constant_field_l4():
    assert lp_norm(zonal(0), p=4) == pytest.approx((4 * math.pi) ** -0.25, rel=1e-12)


@pytest.mark.parametrize("k", [10, 20, 40])
def test_zonal_sup_norm(k):
    assert lp_norm(zonal(k), p=math.inf) == pytest.approx(math.sqrt((2 * k + 1) / (4 * math.pi)),
                                                           abs=1e-6)


def test_sup_norm_refines_off_grid_maximum():
    f = zonal(15, pole=(1.234, 0.567))
    assert sup_norm(f) == pytest.approx(math.sqrt(31 / (4 * math.pi)), abs=1e-6)


def test_lp_rejects_small_p_and_undersized_grid():
    with pytest.raises(ValueError):
        lp_norm(zonal(4), p=1.5)
    with pytest.raises(PreconditionError):
        lp_norm(zonal(40), sphere_grid(20, 40), p=4)


@given(p=st.floats(2.0, 12.0), q=st.floats(2.0, 12.0))
@settings(max_examples=25, deadline=None)
def test_lp_monotone_on_probability_scale(p, q):
    # on a space of volume V, V^{-1/p} ||f||_p is nondecreasing in p
    f = random_harmonic(8, 4)
    a, b = lp_norms(f, [min(p, q), max(p, q)])
    V = 4 * math.pi
    assert V ** (-1 / min(p, q)) * a <= V ** (-1 / max(p, q)) * b * (1 + 1e-12)


def test_gauss_nodes_exact_on_polynomials():
    s, w = gauss_nodes(0.0, 2.5, 6)
    assert np.sum(w * s ** 5) == pytest.approx(2.5 ** 6 / 6, rel=1e-13)


def test_torus_restriction():
    f = torus_wave((3, 4))
    path = unit_geodesic(TORUS, (0.3, 1.1), 0.77)
    assert restrict_integral(f, path) == pytest.approx(1 / (4 * math.pi ** 2), rel=1e-12)


def test_highest_weight_restriction_equals_constant_squared():
    f = highest_weight(50)
    c2 = 1.0 / (2 * math.pi * 2 * np.prod([2 * j / (2 * j + 1) for j in range(1, 51)]))
    assert restrict_integral(f, equator()) == pytest.approx(c2, rel=1e-12)


def test_zonal_meridian_restriction_oversampled():
    f = zonal(30)
    meridian = unit_geodesic(SPHERE, (1e-9, 0.0), 0.0)
    assert restrict_integral(f, meridian) == pytest.approx(
        restrict_integral(f, meridian, scale=10.0), abs=1e-6)


def test_torus_tube_volume():
    region = tube(unit_geodesic(TORUS, (1.0, 2.0), 0.3), 0.01, lam=100.0)
    assert region.volume == pytest.approx(0.02, abs=1e-9)


def test_sphere_band_volume():
    region = tube(equator(TWO_PI), 0.1, lam=100.0)
    assert region.volume == pytest.approx(4 * math.pi * math.sin(0.1), abs=1e-6)


@given(r=st.floats(0.01, 0.1), angle=st.floats(0, TWO_PI), th=st.floats(0.5, 2.6))
@settings(max_examples=20, deadline=None)
def test_tube_volume_comparable(r, angle, th):
    region = tube(unit_geodesic(SPHERE, (th, 0.4), angle), r, lam=100.0)
    assert 1.5 * r <= region.volume <= 2.5 * r


def test_equator_arc_volume_window():
    assert 0.075 <= tube(equator(), 0.05).volume <= 0.125


def test_tube_nodes_inside():
    gamma = equator()
    region = tube(gamma, 0.05)
    rng = np.random.default_rng(0)
    pts = region.points.reshape(-1, 3)[rng.choice(region.points.shape[0]
                                                  * region.points.shape[1], 100)]
    core = SPHERE.from_embedded(gamma.embedded(np.linspace(0, 1, 4001)))
    for p in SPHERE.from_embedded(pts):
        d = min(geodesic_distance(SPHERE, p, c) for c in core[::10])
        assert d < 0.05 + 1e-6


def test_full_band_mass_is_one():
    region = tube(equator(TWO_PI), math.pi / 2, lam=100.0)
    for f in (zonal(7, (0.3, 0.2)), random_harmonic(9, 3)):
        assert tube_mass(f, region) == pytest.approx(1.0, abs=1e-4)


def test_tube_beyond_focal_bound():
    with pytest.raises(FocalPointError):
        tube(equator(), 1.7)


def test_zonal_tube_mass_decays():
    from knlab.experiments import fit_scaling
    # unit meridian arc centred on the pole
    meridian = unit_geodesic(SPHERE, (0.5, math.pi), 0.0)
    pairs = []
    for k in (16, 24, 32, 48, 64, 96, 128, 192, 256):
        f = zonal(k)
        pairs.append((f.eigenvalue, tube_mass(f, tube(meridian, f.eigenvalue ** -0.5,
                                                      f.eigenvalue))))
    assert fit_scaling(pairs).slope <= -0.4


def test_kn_torus_exact():
    f = torus_wave((5, 6))
    res = kn_maximal(f, sampler=SamplerSpec(base_grid=(2, 2), levels=1))
    assert res.value == pytest.approx(2 * f.eigenvalue ** -0.5 / (4 * math.pi ** 2), abs=1e-9)


def test_kn_highest_weight_maximizer_on_equator():
    f = highest_weight(100)
    res = kn_maximal(f)
    pts = SPHERE.from_embedded(res.maximizer.embedded(np.linspace(0, 1, 21)))
    assert np.max(np.abs(pts[:, 0] - math.pi / 2)) <= 0.02
    assert res.value <= 1 + 1e-6


def test_kn_random_below_highest_weight():
    hw = kn_maximal(highest_weight(64)).value
    sampler = SamplerSpec(base_grid=(4, 8))
    for seed in (1, 2):
        assert kn_maximal(random_harmonic(64, seed), sampler=sampler).value < hw


def test_kn_deterministic_and_bounded_by_samples():
    f = random_harmonic(12, 5)
    a = kn_maximal(f, sampler=SamplerSpec(base_grid=(3, 6), levels=2))
    b = kn_maximal(f, sampler=SamplerSpec(base_grid=(3, 6), levels=2))
    assert a.value == b.value
    assert a.value == np.max(a.masses)
    assert a.trace["candidate_count"] == len(a.masses)


def test_sup_restriction_highest_weight():
    f = highest_weight(30)
    res = sup_restriction(f)
    assert res.value == pytest.approx(restrict_integral(f, equator()), rel=1e-6)


@given(mass=st.floats(0, 1), vol=st.floats(1e-3, 1.0))
def test_holder_ratio_formula(mass, vol):
    assert holder_ratio(mass, vol, 2.0) == pytest.approx(math.sqrt(mass) / (vol ** 0.25 * 2.0))
