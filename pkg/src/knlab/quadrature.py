"""Product quadrature grids on the sphere and the flat torus."""
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import TWO_PI, Surface


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor grid with Gauss-Legendre nodes in cos(theta) (sphere) or a
    uniform periodic grid (torus)."""
    surface: Surface
    shape: tuple
    axis0: np.ndarray
    axis1: np.ndarray
    weights0: np.ndarray
    weight1: float

    @property
    def resolution(self):
        return f"{self.shape[0]}x{self.shape[1]}"

    @property
    def weights(self):
        return np.outer(self.weights0, np.full(self.shape[1], self.weight1))

    def coords(self):
        return np.stack(np.meshgrid(self.axis0, self.axis1, indexing="ij"), axis=-1)

    def integrate(self, values):
        return float(np.real(np.sum(self.weights0 @ np.asarray(values)) * self.weight1))

    def total_weight(self):
        return float(np.sum(self.weights0) * self.weight1 * self.shape[1])


@lru_cache(maxsize=256)
def leggauss(n):
    """Cached Gauss-Legendre nodes and weights on [-1, 1] (read-only)."""
    x, w = np.polynomial.legendre.leggauss(int(n))
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def sphere_grid(n_theta, n_phi, surface=None):
    surface = surface or Surface.round_sphere()
    x, w = leggauss(int(n_theta))
    theta = np.arccos(x[::-1])
    weights = w[::-1] * surface.scale ** 2
    phi = np.arange(int(n_phi)) * TWO_PI / n_phi
    return QuadratureGrid(surface, (int(n_theta), int(n_phi)), theta, phi, weights,
                          TWO_PI / n_phi)


def torus_grid(n0, n1, surface=None):
    surface = surface or Surface.flat_torus()
    P0, P1 = surface.periods
    a0 = np.arange(int(n0)) * P0 / n0
    a1 = np.arange(int(n1)) * P1 / n1
    return QuadratureGrid(surface, (int(n0), int(n1)), a0, a1, np.full(int(n0), P0 / n0),
                          P1 / n1)


def grid_for_degree(k, scale=1.0, surface=None):
    """Sphere grid obeying the sizing rule (4k+16) x (8k+16), times ``scale``."""
    return sphere_grid(math.ceil(scale * (4 * k + 16)), math.ceil(scale * (8 * k + 16)), surface)


def grid_for_frequency(m, scale=1.0, surface=None):
    n0 = math.ceil(scale * (4 * abs(m[0]) + 16))
    n1 = math.ceil(scale * (4 * abs(m[1]) + 16))
    return torus_grid(n0, n1, surface)
