"""Concentration functionals: L^p norms, geodesic restriction integrals,
tube masses and the Kakeya-Nikodym maximal average.

The Kakeya-Nikodym functional is unnormalized: the sup over unit geodesics
of the L^2 mass in the ``lambda^{-1/2}`` tube, not divided by the tube
volume.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import PreconditionError
from .geometry import TWO_PI, GeodesicPath, base_grid_points, build_fermi_chart, unit_geodesic
from .quadrature import leggauss

# -- L^p norms --------------------------------------------------------------


def _check_p(p):
    if not p >= 2:
        raise ValueError(f"exponent p = {p} is outside [2, inf]")


def _check_sizing(f, grid):
    need = f.default_grid().shape
    if grid.shape[0] < need[0] or grid.shape[1] < need[1]:
        raise PreconditionError(
            f"grid {grid.resolution} is below the sizing rule {need[0]}x{need[1]}")


def lp_norm(f, grid=None, p=2.0, *, check=True):
    """``(sum_i w_i |f(x_i)|^p)^(1/p)``; for p = inf the refined grid maximum."""
    return lp_norms(f, [p], grid, check=check)[0]


def lp_norms(f, ps, grid=None, *, check=True):
    """L^p norms for several exponents from one evaluation of the field."""
    for p in ps:
        _check_p(p)
    if grid is None:
        grid = f.default_grid()
    elif check:
        _check_sizing(f, grid)
    mod = np.abs(f.grid_values(grid))
    out = []
    for p in ps:
        if math.isinf(p):
            out.append(sup_norm(f, grid, mod))
            continue
        out.append(grid.integrate(mod ** p) ** (1.0 / p))
    return out


def sup_norm(f, grid=None, mod=None, *, candidates=4, sweeps=3):
    """Grid maximum of |f| refined by bounded golden-section (Brent) ascent,
    alternating between the two chart coordinates."""
    if grid is None:
        grid = f.default_grid()
    if mod is None:
        mod = np.abs(f.grid_values(grid))
    a0, a1 = grid.axis0, grid.axis1
    d0 = float(np.max(np.diff(a0))) if len(a0) > 1 else math.pi
    d1 = float(a1[1] - a1[0]) if len(a1) > 1 else TWO_PI
    lo0, hi0 = (0.0, math.pi) if f.surface.is_sphere else (-np.inf, np.inf)
    flat = np.argsort(mod.ravel())[::-1][:candidates]
    best = float(np.max(mod))

    def neg(c):
        return -float(np.abs(f(np.asarray(c, dtype=float)[None]))[0])

    for idx in flat:
        i, j = np.unravel_index(idx, mod.shape)
        c = np.array([a0[i], a1[j]])
        for _ in range(sweeps):
            for axis, d, lo, hi in ((0, d0, lo0, hi0), (1, d1, -np.inf, np.inf)):
                a, b = max(c[axis] - d, lo), min(c[axis] + d, hi)

                def g(x, axis=axis):
                    cc = c.copy()
                    cc[axis] = x
                    return neg(cc)

                res = minimize_scalar(g, bounds=(a, b), method="bounded",
                                      options={"xatol": 1e-10})
                ends = [(g(a), a), (g(b), b), (res.fun, res.x)]
                val, x = min(ends)
                c[axis] = x
                best = max(best, -val)
    return best


# -- restriction to geodesics -----------------------------------------------


def nodes_per_unit_length(lam, scale=1.0):
    return math.ceil(scale * 4.0 * (lam / TWO_PI + 4.0))


def gauss_nodes(a, b, n_per_unit, min_nodes=1):
    """Composite Gauss-Legendre rule on [a, b], one panel per unit length."""
    length = b - a
    panels = max(1, math.ceil(length - 1e-12))
    n = max(min_nodes, math.ceil(n_per_unit * length / panels))
    x, w = leggauss(n)
    h = length / panels
    left = a + h * np.arange(panels)
    nodes = (left[:, None] + 0.5 * h * (x + 1.0)).ravel()
    weights = np.tile(0.5 * h * w, panels)
    return nodes, weights


def field_on_path(f, path, s):
    if f.surface.is_sphere:
        return f.at_points(path.embedded(s))
    return f(path.evaluate(s)[0])


def restrict_integral(f, path, *, scale=1.0):
    """``int_gamma |f|^2 ds`` by Gauss-Legendre in arc length."""
    s, w = gauss_nodes(0.0, path.total_length, nodes_per_unit_length(f.eigenvalue, scale))
    return float(np.sum(w * np.abs(field_on_path(f, path, s)) ** 2))


# -- tubes ------------------------------------------------------------------


@dataclass
class TubeRegion:
    """Fermi-coordinate product quadrature of ``{0 <= s <= L, |t| < r}``."""
    core: GeodesicPath
    radius: float
    s_nodes: np.ndarray
    t_nodes: np.ndarray
    weights: np.ndarray
    points: np.ndarray = field(repr=False)

    @property
    def volume(self):
        return float(np.sum(self.weights))

    @property
    def resolution(self):
        return f"{len(self.s_nodes)}x{len(self.t_nodes)}"


def tube(path, r, lam=None, *, scale=1.0, min_t_nodes=16):
    """Tube of radius r about ``path``.  ``lam`` sets the node density
    (default ``r^-2``, the Kakeya-Nikodym scaling)."""
    lam = r ** -2 if lam is None else lam
    chart = build_fermi_chart(path.surface, path, r)
    n_unit = nodes_per_unit_length(lam, scale)
    s, ws = gauss_nodes(0.0, path.total_length, n_unit)
    nt = max(math.ceil(scale * min_t_nodes), math.ceil(n_unit * 2 * r))
    x, wt = leggauss(nt)
    t = r * x
    wt = r * wt
    g11 = chart.metric_grid(s, t)[0]
    weights = np.outer(ws, wt) * np.sqrt(np.clip(g11, 0.0, None))
    S, T = np.meshgrid(s, t, indexing="ij")
    pts = chart.points(S, T)
    return TubeRegion(path, float(r), s, t, weights, pts)


def tube_mass(f, region):
    if f.surface != region.core.surface:
        raise ValueError("tube and field live on different surfaces")
    pts = region.points.reshape(-1, region.points.shape[-1])
    vals = f.at_points(pts) if f.surface.is_sphere else f(pts)
    return float(np.sum(region.weights.ravel() * np.abs(vals) ** 2))


# -- maximization over unit geodesics ----------------------------------------


@dataclass(frozen=True)
class SamplerSpec:
    """Deterministic family of unit geodesics plus local refinement.

    ``direction_count=None`` means ``ceil(lambda^(1/2))`` (at least 4).  Each
    refinement level rescans the 26 neighbours of the incumbent while it
    improves, at most ``moves`` times, then halves the spacings.
    """
    base_grid: tuple = (8, 16)
    direction_count: int | None = None
    levels: int = 5
    length: float = 1.0
    moves: int = 4

    def directions(self, lam):
        if self.direction_count is not None:
            return int(self.direction_count)
        return max(4, math.ceil(math.sqrt(lam)))

    def to_dict(self):
        return {"base_grid": list(self.base_grid), "direction_count": self.direction_count,
                "levels": self.levels, "length": self.length, "moves": self.moves}


@dataclass
class SearchResult:
    value: float
    base: np.ndarray
    angle: float
    maximizer: GeodesicPath
    values: np.ndarray
    candidates: list
    trace: dict

    @property
    def candidate_count(self):
        return len(self.values)


def _grid_spacing(surface, base_grid):
    n, m = base_grid
    if surface.is_sphere:
        return math.pi / (n + 1), TWO_PI / m
    return surface.periods[0] / n, surface.periods[1] / m


def maximize_over_geodesics(surface, score, sampler, lam):
    """Coarse-to-fine maximization of ``score(path)`` over unit geodesics.

    Candidates are scored in enumeration order (row-major base points, then
    direction index, then refinement level, move and neighbor index); the
    first strict maximum wins ties.
    """
    ndir = sampler.directions(lam)
    bases = base_grid_points(surface, sampler.base_grid)
    angles = np.arange(ndir) * TWO_PI / ndir
    cands = [(b, a) for b in bases for a in angles]
    values = []
    best = (-math.inf, None)

    def visit(b, a):
        nonlocal best
        b = np.array(b, dtype=float)
        if surface.is_sphere:
            b[0] = min(max(b[0], 1e-6), math.pi - 1e-6)
        path = unit_geodesic(surface, b, a, sampler.length)
        v = score(path)
        values.append(v)
        if v > best[0]:
            best = (v, (b, float(a), path))

    for b, a in cands:
        visit(b, a)
    h0, h1 = _grid_spacing(surface, sampler.base_grid)
    ha = TWO_PI / ndir
    visited = list(cands)
    for _ in range(sampler.levels):
        h0, h1, ha = h0 / 2, h1 / 2, ha / 2
        for _ in range(sampler.moves):
            before = best[0]
            b0, a0, _ = best[1]
            for d0 in (-1, 0, 1):
                for d1 in (-1, 0, 1):
                    for da in (-1, 0, 1):
                        if d0 == d1 == da == 0:
                            continue
                        b = b0 + np.array([d0 * h0, d1 * h1])
                        a = a0 + da * ha
                        visited.append((b, a))
                        visit(b, a)
            if not best[0] > before:
                break
    value, (b, a, path) = best
    trace = {"initial_candidates": len(cands), "candidate_count": len(values),
             "levels": sampler.levels, "directions": ndir,
             "base_grid": list(sampler.base_grid)}
    return SearchResult(float(value), b, a, path, np.array(values), visited, trace)


@dataclass
class KnResult:
    value: float
    maximizer: GeodesicPath
    base: np.ndarray
    angle: float
    radius: float
    masses: np.ndarray
    volumes: np.ndarray
    trace: dict

    @property
    def normalized(self):
        """Maximal mass divided by the volume of its tube."""
        i = int(np.argmax(self.masses))
        return self.value / float(self.volumes[i])


def kn_maximal(f, lam=None, sampler=None, *, scale=1.0):
    """Kakeya-Nikodym average: sup over unit geodesics of the mass of |f|^2
    in the ``lam^{-1/2}`` tube."""
    lam = f.eigenvalue if lam is None else lam
    if not lam > 0:
        raise ValueError("lambda must be positive")
    sampler = sampler or SamplerSpec()
    r = lam ** -0.5
    volumes = []

    def score(path):
        region = tube(path, r, lam, scale=scale)
        volumes.append(region.volume)
        return tube_mass(f, region)

    res = maximize_over_geodesics(f.surface, score, sampler, lam)
    return KnResult(res.value, res.maximizer, res.base, res.angle, r, res.values,
                    np.array(volumes), res.trace)


def sup_restriction(f, lam=None, sampler=None, *, scale=1.0):
    """``sup_gamma int_gamma |f|^2 ds`` over the sampled unit geodesics."""
    lam = f.eigenvalue if lam is None else lam
    sampler = sampler or SamplerSpec()
    return maximize_over_geodesics(f.surface, lambda p: restrict_integral(f, p, scale=scale),
                                   sampler, lam)


def holder_ratio(mass, volume, l4):
    """``mass^(1/2) / (volume^(1/4) ||f||_4)``; at most 1 by Hoelder."""
    return math.sqrt(mass) / (volume ** 0.25 * l4)
