import math
from math import gcd

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from knlab.errors import FocalPointError, OutOfRangeError
from knlab.geometry import (TWO_PI, Surface, build_fermi_chart, exp_map, gauss_lemma_residual,
                            geodesic_distance, geodesic_shoot, sample_unit_geodesics,
                            unit_geodesic)

SPHERE = Surface.round_sphere()
TORUS = Surface.flat_torus()
PERTURBED = Surface.perturbed_sphere(0.05)

chart_points = st.tuples(st.floats(0.6, 2.5), st.floats(-math.pi, math.pi))


@pytest.mark.parametrize("surface", [SPHERE, TORUS, PERTURBED], ids=lambda s: s.kind)
@given(c=chart_points)
@settings(max_examples=30, deadline=None)
def test_metric_spd_and_inverse(surface, c):
    c = np.array(c)
    g = surface.metric(c[None])[0]
    assert np.allclose(g, g.T)
    assert np.all(np.linalg.eigvalsh(g) > 0)
    assert np.allclose(surface.cometric(c[None])[0] @ g, np.eye(2), atol=1e-12)


def test_christoffel_closed_forms():
    th = 0.9
    G = SPHERE.christoffel(np.array([[th, 0.3]]))[0]
    expected = np.zeros((2, 2, 2))
    expected[0, 1, 1] = -math.sin(th) * math.cos(th)
    expected[1, 0, 1] = expected[1, 1, 0] = math.cos(th) / math.sin(th)
    assert np.allclose(G, expected, atol=1e-12)
    assert np.all(TORUS.christoffel(np.array([[1.0, 2.0]])) == 0)


def test_torus_straight_line():
    path = geodesic_shoot(TORUS, np.array([0.0, 0.0]), np.array([1.0, 0.0]), 1.0)
    assert np.allclose(path.endpoint(), [1.0, 0.0], atol=1e-14)


def test_sphere_equator_quarter():
    path = geodesic_shoot(SPHERE, np.array([math.pi / 2, 0.0]), np.array([0.0, 1.0]),
                          math.pi / 2)
    assert np.allclose(path.endpoint(), [math.pi / 2, math.pi / 2], atol=1e-12)


def test_non_unit_velocity_rejected():
    with pytest.raises(ValueError):
        geodesic_shoot(SPHERE, np.array([1.0, 0.0]), np.array([0.0, 2.0]), 1.0)


def _rk4_endpoint(surface, p, v, length, h):
    """Fixed-step classical RK4 on x'' = -Gamma(x)[x', x']."""
    def acc(x, u):
        return -np.einsum("ijk,j,k->i", surface.christoffel(x[None])[0], u, u)

    x, u = p.copy(), v.copy()
    for _ in range(int(round(length / h))):
        k1x, k1u = u, acc(x, u)
        k2x, k2u = u + h / 2 * k1u, acc(x + h / 2 * k1x, u + h / 2 * k1u)
        k3x, k3u = u + h / 2 * k2u, acc(x + h / 2 * k2x, u + h / 2 * k2u)
        k4x, k4u = u + h * k3u, acc(x + h * k3x, u + h * k3u)
        x = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        u = u + h / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
    return x


def test_perturbed_endpoint_matches_rk4_oracle():
    p = np.array([1.3, -0.2])
    v = PERTURBED.direction(p, 0.7)
    path = geodesic_shoot(PERTURBED, p, v, 0.5)
    oracle = _rk4_endpoint(PERTURBED, p, v, 0.5, 1e-4)
    assert np.max(np.abs(path.endpoint() - oracle)) <= 1e-7


@pytest.mark.parametrize("surface", [SPHERE, PERTURBED], ids=lambda s: s.kind)
def test_unit_speed_along_path(surface):
    path = unit_geodesic(surface, (1.4, 0.2), 1.1)
    assert path.total_length == 1.0
    assert path.speed_drift() <= 1e-8


def test_distance_closed_forms():
    assert geodesic_distance(SPHERE, (0.0, 0.0), (math.pi, 0.0)) == pytest.approx(math.pi)
    assert geodesic_distance(TORUS, (0.0, 0.0), (TWO_PI - 0.1, 0.0)) == pytest.approx(0.1)


def _dijkstra_distance(surface, x_idx, y_idx, n=400, m=800):
    """Shortest path on the cell-centre mesh with a 48-direction stencil."""
    th = (np.arange(n) + 0.5) * math.pi / n
    ph = -math.pi + np.arange(m) * TWO_PI / m
    offs = [(a, b) for a in range(5) for b in range(-4, 5)
            if gcd(a, abs(b)) == 1 and (a > 0 or b > 0)]
    I, J = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    rows, cols, w = [], [], []
    for di, dj in offs:
        I2, J2 = I + di, (J + dj) % m
        ok = (I2 >= 0) & (I2 < n)
        mid = np.stack([0.5 * (th[I[ok]] + th[I2[ok]]), ph[J[ok]] + 0.5 * dj * TWO_PI / m], -1)
        dv = np.array([di * math.pi / n, dj * TWO_PI / m])
        w.append(np.sqrt(np.einsum("i,nij,j->n", dv, surface.metric(mid), dv)))
        rows.append((I * m + J)[ok])
        cols.append((I2 * m + J2)[ok])
    A = coo_matrix((np.concatenate(w), (np.concatenate(rows), np.concatenate(cols))),
                   shape=(n * m, n * m)).tocsr()
    src = x_idx[0] * m + x_idx[1]
    return float(dijkstra(A, directed=False, indices=src)[y_idx[0] * m + y_idx[1]])


def test_perturbed_distance_matches_mesh_oracle():
    n, m = 400, 800
    xi, yi = (152, 360), (230, 444)
    x = np.array([(xi[0] + 0.5) * math.pi / n, -math.pi + xi[1] * TWO_PI / m])
    y = np.array([(yi[0] + 0.5) * math.pi / n, -math.pi + yi[1] * TWO_PI / m])
    d = geodesic_distance(PERTURBED, x, y)
    assert _dijkstra_distance(PERTURBED, xi, yi) == pytest.approx(d, abs=1e-3)


def test_perturbed_distance_out_of_range():
    with pytest.raises(OutOfRangeError):
        geodesic_distance(PERTURBED, (0.3, 0.0), (2.8, 3.0))


@given(x=chart_points, y=chart_points)
@settings(max_examples=40, deadline=None)
def test_sphere_distance_symmetric_and_bounded(x, y):
    d = geodesic_distance(SPHERE, x, y)
    assert d == pytest.approx(geodesic_distance(SPHERE, y, x), abs=1e-12)
    assert 0.0 <= d <= math.pi + 1e-12


def test_fermi_flat_torus():
    chart = build_fermi_chart(TORUS, unit_geodesic(TORUS, (1.0, 1.0), 0.0), 0.3)
    g11 = chart.metric_grid(np.linspace(0, 1, 7), np.linspace(-0.3, 0.3, 5))[0]
    assert np.allclose(g11, 1.0, atol=1e-12)


def test_fermi_sphere_equator_cos_squared():
    chart = build_fermi_chart(SPHERE, unit_geodesic(SPHERE, (math.pi / 2, 0.0), math.pi / 2),
                              1.0)
    t = np.linspace(-1.0, 1.0, 41)
    g11 = chart.metric_grid(np.linspace(0, 1, 11), t)[0]
    assert np.allclose(g11, np.cos(t)[None, :] ** 2, atol=1e-6)


@pytest.mark.parametrize("surface", [SPHERE, PERTURBED], ids=lambda s: s.kind)
def test_fermi_invariants(surface):
    chart = build_fermi_chart(surface, unit_geodesic(surface, (1.5, 0.1), 0.4), 0.2)
    inv = chart.check_invariants(ns=9, nt=9)
    assert inv["cross_term"] <= 1e-8
    assert inv["core_g11"] <= 1e-6
    assert inv["core_dt_g11"] <= 1e-6


def test_fermi_horizontal_core_is_distance_minimizing():
    gamma = unit_geodesic(PERTURBED, (1.5, 0.1), 0.4)
    chart = build_fermi_chart(PERTURBED, gamma, 0.2)
    a, b = chart.map(np.array([0.1, 0.8]), np.array([0.0, 0.0]))
    assert geodesic_distance(PERTURBED, a, b) == pytest.approx(0.7, abs=1e-8)


def test_focal_bound_rejected():
    gamma = unit_geodesic(SPHERE, (math.pi / 2, 0.0), math.pi / 2)
    build_fermi_chart(SPHERE, gamma, math.pi / 2)
    with pytest.raises(FocalPointError):
        build_fermi_chart(SPHERE, gamma, math.pi / 2 + 1e-9)


def test_gauss_lemma_torus_exact():
    r = gauss_lemma_residual(TORUS, (0.2, 0.3), np.array([0.6, 0.8]), 0.7,
                             np.array([0.3, -1.2]))
    assert r <= 1e-12


def test_gauss_lemma_sphere_orthogonal():
    p = np.array([1.2, 0.4])
    v = SPHERE.direction(p, 0.3)
    w = SPHERE.direction(p, 0.3 + math.pi / 2)
    assert gauss_lemma_residual(SPHERE, p, v, 0.5, w) <= 1e-6


def test_gauss_lemma_perturbed():
    p = np.array([1.4, -0.1])
    v = PERTURBED.direction(p, 2.0)
    w = np.array([0.4, -0.7])
    assert gauss_lemma_residual(PERTURBED, p, v, 0.4, w, step=1e-4) <= 1e-5


def test_gauss_lemma_rejects_bad_input():
    p = np.array([1.4, 0.0])
    with pytest.raises(ValueError):
        gauss_lemma_residual(SPHERE, p, np.array([2.0, 0.0]), 0.4, np.array([1.0, 0.0]))
    with pytest.raises(OutOfRangeError):
        gauss_lemma_residual(PERTURBED, p, PERTURBED.direction(p, 0.0), 3.0,
                             np.array([1.0, 0.0]))


def test_exp_map_sphere_distance():
    p = np.array([1.0, 0.5])
    u = np.array([[0.3, 0.2]])
    q = exp_map(SPHERE, p, u)[0]
    d = geodesic_distance(SPHERE, p, SPHERE.from_embedded(q))
    assert d == pytest.approx(float(SPHERE.norm(p, u[0])), abs=1e-12)


def test_sample_unit_geodesics_torus():
    paths = sample_unit_geodesics(TORUS, np.array([[0.0, 0.0]]), 4)
    ends = np.array([p.endpoint() for p in paths])
    assert np.allclose(ends, [[1, 0], [0, 1], [-1, 0], [0, -1]], atol=1e-12)


def test_sample_unit_geodesics_contains_equator_arc():
    paths = sample_unit_geodesics(SPHERE, (3, 4), 4)
    eq = [p for p in paths if np.allclose(p.samples(9)[1][:, 0], math.pi / 2, atol=1e-12)]
    assert eq


@pytest.mark.slow
def test_sample_unit_geodesics_sphere_count():
    paths = sample_unit_geodesics(SPHERE, (20, 40), 16)
    assert len(paths) == 12800
    lengths = [np.sum(np.linalg.norm(np.diff(p.embedded(np.linspace(0, 1, 2001)), axis=0),
                                     axis=1)) for p in paths[::97]]
    assert np.allclose(lengths, 1.0, atol=1e-6)
    assert all(p.total_length == 1.0 for p in paths)
