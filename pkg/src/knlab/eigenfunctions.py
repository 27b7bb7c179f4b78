"""L^2-normalized eigenfunction families with known eigenvalues.

Eigenvalues are those of sqrt(-Laplacian): on the unit sphere the degree-k
harmonics have ``lambda = sqrt(k^2 + k)``, on the flat torus the wave
``exp(i<m, x>)`` has ``lambda = |m|`` (for 2 pi periods).

Spherical fields are evaluated on unit vectors in R^3 ("points"); torus
fields on chart coordinates.  ``field(coords)`` accepts chart coordinates on
either surface.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import UnsupportedFamilyError
from .geometry import Surface
from .legendre import assoc_legendre_all_orders, harmonic_sum, legendre_p
from .quadrature import grid_for_degree, grid_for_frequency

FAMILIES = ("zonal", "highest_weight", "torus_wave", "random_harmonic")


@dataclass(frozen=True)
class EigenfunctionField:
    surface: Surface
    eigenvalue: float
    family: str
    params: dict
    point_eval: Callable = field(repr=False)
    grid_eval: Callable | None = field(default=None, repr=False)
    l2_norm_certificate: float = float("nan")

    @property
    def degree(self):
        return self.params.get("k")

    @property
    def label(self):
        if self.family == "random_harmonic":
            return f"random_harmonic[seed={self.params['seed']}]"
        return self.family

    def descriptor(self):
        d = {"family": self.family}
        d.update({k: list(v) if isinstance(v, tuple) else v for k, v in self.params.items()})
        return d

    def at_points(self, points):
        return self.point_eval(np.asarray(points, dtype=float))

    def __call__(self, coords):
        coords = np.asarray(coords, dtype=float)
        if self.surface.is_sphere:
            return self.at_points(self.surface.embed(coords))
        return self.at_points(coords)

    evaluate = __call__

    def grid_values(self, grid):
        if self.grid_eval is not None:
            return self.grid_eval(grid)
        coords = grid.coords()
        return self(coords.reshape(-1, 2)).reshape(grid.shape)

    def default_grid(self, scale=1.0):
        if self.family == "torus_wave":
            return grid_for_frequency(self.params["m"], scale, self.surface)
        return grid_for_degree(self.params["k"], scale, self.surface)

    def squared_norm(self, grid=None):
        grid = grid or self.default_grid()
        return grid.integrate(np.abs(self.grid_values(grid)) ** 2)


def _certified(f, grid=None):
    grid = grid or f.default_grid()
    cert = math.sqrt(f.squared_norm(grid))
    return EigenfunctionField(f.surface, f.eigenvalue, f.family, f.params, f.point_eval,
                              f.grid_eval, cert)


def _require_unit_sphere(surface):
    if surface.kind != "round_sphere" or surface.radius != 1.0:
        raise UnsupportedFamilyError("spherical-harmonic families require the unit round sphere")


def sphere_eigenvalue(k):
    return math.sqrt(k * k + k)


def _angles(points):
    x, y, z = points[..., 0], points[..., 1], points[..., 2]
    rho = np.hypot(x, y)
    return z, rho, np.arctan2(y, x)


def zonal(k, pole=(0.0, 0.0), surface=None):
    """Zonal harmonic ``sqrt((2k+1)/4pi) P_k(cos d(pole, y))``."""
    surface = surface or Surface.round_sphere()
    _require_unit_sphere(surface)
    if k < 0:
        raise ValueError("degree must be non-negative")
    k = int(k)
    n0 = surface.embed(np.asarray(pole, dtype=float))
    amp = math.sqrt((2 * k + 1) / (4 * math.pi))

    def ev(points):
        dots = np.clip(points @ n0, -1.0, 1.0)
        return (amp * legendre_p(k, dots)).astype(complex)

    def grid_ev(grid):
        if abs(abs(n0[2]) - 1.0) < 1e-15:
            rows = amp * legendre_p(k, n0[2] * np.cos(grid.axis0))
            return np.repeat(rows[:, None], grid.shape[1], axis=1).astype(complex)
        pts = surface.embed(grid.coords())
        return ev(pts.reshape(-1, 3)).reshape(grid.shape)

    f = EigenfunctionField(surface, sphere_eigenvalue(k), "zonal",
                           {"k": k, "pole": tuple(float(c) for c in pole)}, ev, grid_ev)
    return _certified(f)


def sine_power_integral(k):
    """Exact ``int_0^pi sin^(2k+1) theta dtheta = 2 prod_{j<=k} 2j/(2j+1)``."""
    j = np.arange(1, int(k) + 1)
    return 2.0 * float(np.exp(np.sum(np.log(2.0 * j / (2.0 * j + 1.0)))))


def highest_weight_constant(k):
    return 1.0 / math.sqrt(2.0 * math.pi * sine_power_integral(k))


def highest_weight(k, surface=None):
    """``Q_k = c_k (x1 + i x2)^k`` restricted to the unit sphere, unit L^2 norm."""
    surface = surface or Surface.round_sphere()
    _require_unit_sphere(surface)
    if k < 1:
        raise ValueError("highest_weight requires k >= 1 (use zonal for k = 0)")
    k = int(k)
    c = highest_weight_constant(k)

    def ev(points):
        _, rho, phi = _angles(points)
        return c * rho ** k * np.exp(1j * k * phi)

    def grid_ev(grid):
        return np.outer(c * np.sin(grid.axis0) ** k, np.exp(1j * k * grid.axis1))

    f = EigenfunctionField(surface, sphere_eigenvalue(k), "highest_weight", {"k": k}, ev,
                           grid_ev)
    return _certified(f)


def torus_wave(m, surface=None):
    """Plane wave ``exp(2 pi i (m1 x/P1 + m2 y/P2)) / sqrt(area)`` on the flat torus."""
    surface = surface or Surface.flat_torus()
    if surface.kind != "flat_torus":
        raise UnsupportedFamilyError("torus_wave requires the flat torus")
    m = (int(m[0]), int(m[1]))
    if m == (0, 0):
        raise ValueError("torus_wave requires a nonzero frequency")
    P0, P1 = surface.periods
    w = np.array([2 * math.pi * m[0] / P0, 2 * math.pi * m[1] / P1])
    amp = 1.0 / math.sqrt(surface.area)

    def ev(coords):
        return amp * np.exp(1j * (coords @ w))

    def grid_ev(grid):
        return amp * np.outer(np.exp(1j * w[0] * grid.axis0), np.exp(1j * w[1] * grid.axis1))

    f = EigenfunctionField(surface, float(np.linalg.norm(w)), "torus_wave", {"m": m}, ev,
                           grid_ev)
    return _certified(f)


def random_coefficients(k, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(2 * k + 1) + 1j * rng.standard_normal(2 * k + 1)
    return a / np.linalg.norm(a)


def random_harmonic(k, seed, surface=None):
    """Degree-k harmonic with i.i.d. complex Gaussian coefficients, unit L^2 norm."""
    surface = surface or Surface.round_sphere()
    _require_unit_sphere(surface)
    if k < 1:
        raise ValueError("random_harmonic requires k >= 1")
    k = int(k)
    coeffs = random_coefficients(k, seed)
    return _certified(_harmonic_field(surface, k, coeffs, "random_harmonic",
                                      {"k": k, "seed": int(seed)}))


def _harmonic_field(surface, k, coeffs, family, params):
    def ev(points):
        z, rho, phi = _angles(points)
        return harmonic_sum(k, coeffs, z, rho, phi)

    def grid_ev(grid):
        n_phi = grid.shape[1]
        if n_phi < 2 * k + 1:
            return ev(surface.embed(grid.coords()).reshape(-1, 3)).reshape(grid.shape)
        P = assoc_legendre_all_orders(k, np.cos(grid.axis0), np.sin(grid.axis0))
        spec = np.zeros((grid.shape[0], n_phi), dtype=complex)
        spec[:, :k + 1] = P * coeffs[k:]
        m = np.arange(1, k + 1)
        spec[:, n_phi - m] = P[:, 1:] * (coeffs[k - m] * (-1.0) ** m)
        return np.fft.ifft(spec, axis=1) * n_phi

    return EigenfunctionField(surface, sphere_eigenvalue(k), family, params, ev, grid_ev)


def spherical_harmonic_combination(k, coeffs, surface=None):
    """Field ``sum_m coeffs[m+k] Y_k^m`` (not renormalized)."""
    surface = surface or Surface.round_sphere()
    _require_unit_sphere(surface)
    return _certified(_harmonic_field(surface, int(k), np.asarray(coeffs, complex),
                                      "harmonic", {"k": int(k)}))


def make_field(descriptor, surface=None):
    """Build a field from a family descriptor dict."""
    d = dict(descriptor)
    fam = d.pop("family")
    if fam == "zonal":
        return zonal(d["k"], tuple(d.get("pole", (0.0, 0.0))), surface)
    if fam == "highest_weight":
        return highest_weight(d["k"], surface)
    if fam == "torus_wave":
        return torus_wave(tuple(d["m"]), surface)
    if fam == "random_harmonic":
        return random_harmonic(d["k"], d["seed"], surface)
    raise UnsupportedFamilyError(f"unknown family {fam!r}")


def laplace_residual(f, n_points=100, seed=0, step=None):
    """``max |Lap f + lambda^2 f| / max |f|`` over random chart points.

    The Laplace-Beltrami operator is discretized with the five-point chart
    stencil at steps h and h/2, combined by Richardson extrapolation.
    """
    rng = np.random.default_rng(seed)
    lam = f.eigenvalue
    h = step if step is not None else (0.02 / lam if lam > 0 else 1e-3)
    if f.surface.is_sphere:
        th = rng.uniform(0.2, math.pi - 0.2, n_points)
        ph = rng.uniform(-math.pi, math.pi, n_points)
    else:
        th = rng.uniform(0, f.surface.periods[0], n_points)
        ph = rng.uniform(0, f.surface.periods[1], n_points)
    c = np.stack([th, ph], axis=-1)

    def lap(hh):
        e0 = np.array([hh, 0.0])
        e1 = np.array([0.0, hh])
        f0 = f(c)
        fp0, fm0 = f(c + e0), f(c - e0)
        fp1, fm1 = f(c + e1), f(c - e1)
        d00 = (fp0 - 2 * f0 + fm0) / hh ** 2
        d11 = (fp1 - 2 * f0 + fm1) / hh ** 2
        if not f.surface.is_sphere:
            return d00 + d11, f0
        d0 = (fp0 - fm0) / (2 * hh)
        return d00 + d0 / np.tan(th) + d11 / np.sin(th) ** 2, f0

    l1, f0 = lap(h)
    l2, _ = lap(h / 2)
    lap_f = (4 * l2 - l1) / 3
    return float(np.max(np.abs(lap_f + lam ** 2 * f0)) / np.max(np.abs(f0)))
