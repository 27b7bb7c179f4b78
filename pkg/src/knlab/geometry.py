"""Model surfaces, geodesics, distances and Fermi normal coordinates.

Three surfaces are supported, all described in a single coordinate chart:

* ``round_sphere``: colatitude/longitude ``(theta, phi)`` with metric
  ``R^2 (dtheta^2 + sin^2 theta dphi^2)``; poles are excluded from the chart.
* ``flat_torus``: ``(x, y)`` modulo the periods, Euclidean metric.
* ``perturbed_sphere``: the round unit-sphere metric times the conformal factor
  ``(1 + a * bump)^2`` with a smooth compactly supported bump.

Points and tangent vectors are plain numpy arrays with a trailing axis of
length 2 (chart coordinates / chart components).  On the round sphere and the
torus geodesics have closed forms, which are used directly; on the perturbed
sphere they are integrated from the Hamiltonian form of the geodesic equation.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ChartTransitionError, FocalPointError, KnlabError, OutOfRangeError

TWO_PI = 2.0 * math.pi
ODE_RTOL = 1e-9
ODE_ATOL = 1e-12
# polar caps excluded from the perturbed-sphere chart
CHART_MIN_SIN = math.sin(0.15)
PERTURBED_DISTANCE_BOUND = 1.5
_CSTEP = 1e-20


@dataclass(frozen=True)
class Surface:
    kind: str
    radius: float = 1.0
    periods: tuple = (TWO_PI, TWO_PI)
    amplitude: float = 0.0
    bump_center: tuple = (math.pi / 2, 0.0)
    bump_width: float = 0.8

    def __post_init__(self):
        if self.kind not in ("round_sphere", "flat_torus", "perturbed_sphere"):
            raise ValueError(f"unknown surface kind {self.kind!r}")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "periods", tuple(float(p) for p in self.periods))
        object.__setattr__(self, "bump_center", tuple(float(c) for c in self.bump_center))
        if self.kind == "perturbed_sphere" and not (0.0 <= abs(self.amplitude) < 0.5):
            raise ValueError("perturbation amplitude must satisfy |a| < 0.5")

    @classmethod
    def round_sphere(cls, radius=1.0):
        return cls("round_sphere", radius=radius)

    @classmethod
    def flat_torus(cls, periods=(TWO_PI, TWO_PI)):
        return cls("flat_torus", periods=tuple(periods))

    @classmethod
    def perturbed_sphere(cls, amplitude=0.05, center=(math.pi / 2, 0.0), width=0.8):
        return cls("perturbed_sphere", amplitude=amplitude, bump_center=tuple(center),
                   bump_width=width)

    # -- descriptors -------------------------------------------------------
    def to_dict(self):
        if self.kind == "round_sphere":
            return {"kind": self.kind, "radius": self.radius}
        if self.kind == "flat_torus":
            return {"kind": self.kind, "periods": list(self.periods)}
        return {"kind": self.kind, "amplitude": self.amplitude,
                "bump_center": list(self.bump_center), "bump_width": self.bump_width}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind")
        allowed = {"round_sphere": {"radius"}, "flat_torus": {"periods"},
                   "perturbed_sphere": {"amplitude", "bump_center", "bump_width"}}
        if kind not in allowed:
            raise ValueError(f"unknown surface kind {kind!r}")
        extra = set(d) - allowed[kind]
        if extra:
            raise ValueError(f"unknown keys for {kind}: {sorted(extra)}")
        return cls(kind, **{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})

    @property
    def is_sphere(self):
        return self.kind != "flat_torus"

    @property
    def scale(self):
        return self.radius if self.kind == "round_sphere" else 1.0

    @property
    def area(self):
        if self.kind == "flat_torus":
            return self.periods[0] * self.periods[1]
        if self.kind == "round_sphere":
            return 4.0 * math.pi * self.radius ** 2
        return _perturbed_area(self)

    @property
    def focal_bound(self):
        """Largest admissible Fermi half-width (tube radius)."""
        if self.kind == "flat_torus":
            return 0.5 * min(self.periods)
        if self.kind == "round_sphere":
            return 0.5 * math.pi * self.radius
        return 0.5 * math.pi * (1.0 - abs(self.amplitude))

    @property
    def validity_radius(self):
        if self.kind == "perturbed_sphere":
            return PERTURBED_DISTANCE_BOUND
        return math.inf

    # -- chart helpers -----------------------------------------------------
    def reduce(self, coords):
        c = np.array(coords, dtype=float)
        if self.kind == "flat_torus":
            c[..., 0] = np.mod(c[..., 0], self.periods[0])
            c[..., 1] = np.mod(c[..., 1], self.periods[1])
        else:
            c[..., 1] = np.mod(c[..., 1] + math.pi, TWO_PI) - math.pi
        return c

    def embed(self, coords):
        """Unit-sphere position (scaled by the radius) of chart points."""
        if not self.is_sphere:
            raise KnlabError("the flat torus has no spherical embedding")
        c = np.asarray(coords)
        th, ph = c[..., 0], c[..., 1]
        st = np.sin(th)
        return self.scale * np.stack([st * np.cos(ph), st * np.sin(ph), np.cos(th)], axis=-1)

    def from_embedded(self, xyz):
        p = np.asarray(xyz, dtype=float)
        rho = np.hypot(p[..., 0], p[..., 1])
        th = np.arctan2(rho, p[..., 2])
        ph = np.arctan2(p[..., 1], p[..., 0])
        return np.stack([th, ph], axis=-1)

    def chart_frame(self, coords):
        """Embedded images of the chart basis vectors d/dtheta, d/dphi."""
        c = np.asarray(coords)
        th, ph = c[..., 0], c[..., 1]
        ct, st, cp, sp = np.cos(th), np.sin(th), np.cos(ph), np.sin(ph)
        e_th = np.stack([ct * cp, ct * sp, -st], axis=-1)
        e_ph = np.stack([-st * sp, st * cp, np.zeros_like(st)], axis=-1)
        return self.scale * e_th, self.scale * e_ph

    # -- metric ------------------------------------------------------------
    def _bump(self, coords):
        """Bump value and its chart gradient; complex-step safe."""
        c = np.asarray(coords)
        th, ph = c[..., 0], c[..., 1]
        th0, ph0 = self.bump_center
        n0 = np.array([math.sin(th0) * math.cos(ph0), math.sin(th0) * math.sin(ph0),
                       math.cos(th0)])
        st, ct = np.sin(th), np.cos(th)
        cp, sp = np.cos(ph), np.sin(ph)
        dot = n0[0] * st * cp + n0[1] * st * sp + n0[2] * ct
        ddot_th = n0[0] * ct * cp + n0[1] * ct * sp - n0[2] * st
        ddot_ph = -n0[0] * st * sp + n0[1] * st * cp
        denom = 1.0 - math.cos(self.bump_width)
        s = (1.0 - dot) / denom
        inside = np.real(s) < 1.0
        one_minus = np.where(inside, 1.0 - s, 1.0)
        b = np.where(inside, np.exp(1.0 - 1.0 / one_minus), 0.0)
        # db/ds = -b / (1-s)^2 ; ds/ddot = -1/denom
        db_ddot = np.where(inside, b / (one_minus ** 2 * denom), 0.0)
        return b, np.stack([db_ddot * ddot_th, db_ddot * ddot_ph], axis=-1)

    def conformal_factor(self, coords):
        """Scalar ``1 + a*bump`` multiplying the round unit-sphere line element."""
        b, _ = self._bump(coords)
        return 1.0 + self.amplitude * b

    def metric(self, coords):
        c = np.asarray(coords)
        out = np.zeros(c.shape[:-1] + (2, 2), dtype=np.result_type(c, float))
        if self.kind == "flat_torus":
            out[..., 0, 0] = 1.0
            out[..., 1, 1] = 1.0
            return out
        s2 = np.sin(c[..., 0]) ** 2
        if self.kind == "round_sphere":
            out[..., 0, 0] = self.radius ** 2
            out[..., 1, 1] = self.radius ** 2 * s2
            return out
        f2 = self.conformal_factor(c) ** 2
        out[..., 0, 0] = f2
        out[..., 1, 1] = f2 * s2
        return out

    def metric_derivs(self, coords):
        """Array ``D[..., l, j, k]`` of partial derivatives d_l g_jk."""
        c = np.asarray(coords)
        out = np.zeros(c.shape[:-1] + (2, 2, 2), dtype=np.result_type(c, float))
        if self.kind == "flat_torus":
            return out
        th = c[..., 0]
        s2 = np.sin(th) ** 2
        ds2 = np.sin(2.0 * th)
        if self.kind == "round_sphere":
            out[..., 0, 1, 1] = self.radius ** 2 * ds2
            return out
        b, db = self._bump(c)
        f = 1.0 + self.amplitude * b
        for ell in range(2):
            df2 = 2.0 * f * self.amplitude * db[..., ell]
            out[..., ell, 0, 0] = df2
            out[..., ell, 1, 1] = df2 * s2
        out[..., 0, 1, 1] += f ** 2 * ds2
        return out

    def cometric(self, coords):
        return _inv2(self.metric(coords))

    def christoffel(self, coords):
        """Array ``G[..., i, j, k]`` of Christoffel symbols Gamma^i_jk."""
        dg = self.metric_derivs(coords)
        ginv = self.cometric(coords)
        # Gamma_{l,jk} = 1/2 (d_j g_lk + d_k g_lj - d_l g_jk)
        first = 0.5 * (np.swapaxes(dg, -3, -2) + np.moveaxis(dg, -3, -1) - dg)
        return np.einsum("...il,...ljk->...ijk", ginv, first)

    def area_element(self, coords):
        g = self.metric(coords)
        return np.sqrt(g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0])

    def inner(self, coords, u, w):
        g = self.metric(coords)
        return np.einsum("...j,...jk,...k->...", u, g, w)

    def norm(self, coords, u):
        return np.sqrt(np.real(self.inner(coords, u, u)))

    def orthonormal_frame(self, coords):
        """Chart components of the g-orthonormal frame (d_1/|d_1|, d_2/|d_2|)."""
        g = self.metric(coords)
        c = np.asarray(coords)
        e1 = np.zeros(c.shape[:-1] + (2,))
        e2 = np.zeros(c.shape[:-1] + (2,))
        e1[..., 0] = 1.0 / np.sqrt(g[..., 0, 0])
        e2[..., 1] = 1.0 / np.sqrt(g[..., 1, 1])
        return e1, e2

    def direction(self, coords, angle):
        """Unit tangent making ``angle`` with the first frame vector."""
        e1, e2 = self.orthonormal_frame(coords)
        a = np.asarray(angle)[..., None]
        return np.cos(a) * e1 + np.sin(a) * e2

    def left_normal(self, coords, v):
        """Unit normal obtained by rotating the unit vector v by +90 degrees."""
        g = self.metric(coords)
        det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
        gv = np.einsum("...jk,...k->...j", g, v)
        n = np.stack([-gv[..., 1], gv[..., 0]], axis=-1)
        return n / np.sqrt(det)[..., None]

    def check_chart(self, coords):
        if self.kind != "perturbed_sphere":
            return
        st = np.sin(np.real(np.asarray(coords)[..., 0]))
        if np.any(st < CHART_MIN_SIN):
            raise ChartTransitionError(
                "path entered the polar cap excluded from the perturbed-sphere chart")


def _inv2(g):
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    out = np.empty_like(g)
    out[..., 0, 0] = g[..., 1, 1] / det
    out[..., 1, 1] = g[..., 0, 0] / det
    out[..., 0, 1] = -g[..., 0, 1] / det
    out[..., 1, 0] = -g[..., 1, 0] / det
    return out


def _perturbed_area(surface):
    n_th, n_ph = 400, 800
    x, w = np.polynomial.legendre.leggauss(n_th)
    th = np.arccos(x)
    ph = np.arange(n_ph) * TWO_PI / n_ph
    grid = np.stack(np.meshgrid(th, ph, indexing="ij"), axis=-1)
    f2 = surface.conformal_factor(grid) ** 2
    return float(np.sum(w[:, None] * f2) * TWO_PI / n_ph)


# -- geodesic flow --------------------------------------------------------

def _geodesic_rhs(surface, n, transport=False):
    width = 6 if transport else 4

    def rhs(_, y):
        y = y.reshape(n, width)
        x, xi = y[:, 0:2], y[:, 2:4]
        g = surface.metric(x)
        ginv = _inv2(g)
        v = np.einsum("njk,nk->nj", ginv, xi)
        dg = surface.metric_derivs(x)
        dxi = 0.5 * np.einsum("nj,nljk,nk->nl", v, dg, v)
        parts = [v, dxi]
        if transport:
            gam = surface.christoffel(x)
            parts.append(-np.einsum("nijk,nj,nk->ni", gam, v, y[:, 4:6]))
        return np.concatenate(parts, axis=1).ravel()

    return rhs


def geodesic_flow(surface, x0, v0, t_end, *, t_eval=None, normals=None, dense_output=False,
                  rtol=ODE_RTOL, atol=ODE_ATOL, method="RK45"):
    """Integrate a stack of geodesics ``x(0)=x0, x'(0)=v0`` up to time ``t_end``.

    All geodesics share one adaptive step sequence, so differences between
    stacked members are smooth in their initial data.  Complex initial data
    is accepted (complex-step differentiation).  If ``normals`` is given, they
    are parallel transported along the geodesics.
    """
    x0 = np.atleast_2d(x0)
    v0 = np.atleast_2d(v0)
    n = x0.shape[0]
    xi0 = np.einsum("njk,nk->nj", surface.metric(x0), v0)
    parts = [x0, xi0]
    if normals is not None:
        parts.append(np.atleast_2d(normals))
    y0 = np.concatenate(parts, axis=1).ravel()
    rhs = _geodesic_rhs(surface, n, transport=normals is not None)
    sol = solve_ivp(rhs, (0.0, t_end), y0, method=method, rtol=rtol, atol=atol,
                    t_eval=t_eval, dense_output=dense_output)
    if not sol.success:
        raise KnlabError(f"geodesic integration failed: {sol.message}")
    return sol


def _unpack(surface, y, n, width=4):
    """Split flattened states into (x, v[, nu]) with trailing time axis moved first."""
    y = np.moveaxis(np.asarray(y).reshape(n, width, -1), -1, 0)
    x, xi = y[..., 0:2], y[..., 2:4]
    v = np.einsum("...jk,...k->...j", _inv2(surface.metric(x)), xi)
    if width == 6:
        return x, v, y[..., 4:6]
    return x, v


@dataclass
class GeodesicPath:
    """Arc-length parametrized geodesic segment.

    ``evaluate(s)`` returns chart coordinates and chart tangent components at
    the arc lengths ``s``; on spheres ``embedded(s)`` gives points in R^3.
    """
    surface: Surface
    start: np.ndarray
    direction: np.ndarray
    length: float
    _eval: Callable = field(repr=False)
    _embedded: Callable | None = field(default=None, repr=False)
    frame: tuple | None = field(default=None, repr=False)

    @property
    def total_length(self):
        return self.length

    def evaluate(self, s):
        return self._eval(np.asarray(s, dtype=float))

    def embedded(self, s):
        if self._embedded is None:
            return self.surface.embed(self.evaluate(s)[0])
        return self._embedded(np.asarray(s, dtype=float))

    def endpoint(self):
        return self.evaluate(np.array([self.length]))[0][0]

    def samples(self, n=65):
        s = np.linspace(0.0, self.length, n)
        x, v = self.evaluate(s)
        return s, x, v

    def speed_drift(self, n=257):
        s, x, v = self.samples(n)
        return float(np.max(np.abs(self.surface.norm(x, v) - 1.0)))

    def to_csv(self, path, n=65):
        s, x, v = self.samples(n)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "coord1", "coord2", "v1", "v2"])
            for row in zip(s, x[:, 0], x[:, 1], v[:, 0], v[:, 1]):
                w.writerow([repr(float(r)) for r in row])


def _check_unit(surface, p, v):
    nv = float(surface.norm(p, v))
    if abs(nv - 1.0) > 1e-10:
        raise ValueError(f"initial velocity is not g-unit (|v|_g = {nv!r})")


def _sphere_path(surface, p, v, length):
    R = surface.radius
    n0 = surface.embed(p) / R
    e_th, e_ph = surface.chart_frame(p)
    t0 = (v[0] * e_th + v[1] * e_ph) / R
    t0 = t0 / np.linalg.norm(t0)
    b = np.cross(n0, t0)

    def emb(s):
        a = s[..., None] / R
        return R * (np.cos(a) * n0 + np.sin(a) * t0)

    def ev(s):
        a = s[..., None] / R
        P = np.cos(a) * n0 + np.sin(a) * t0
        dP = -np.sin(a) * n0 + np.cos(a) * t0
        x = surface.from_embedded(P)
        fth, fph = surface.chart_frame(x)
        sin_th = np.sin(x[..., 0])
        with np.errstate(divide="ignore", invalid="ignore"):
            vt = np.sum(dP * fth, axis=-1) / R
            vp = np.sum(dP * fph, axis=-1) / (R * sin_th ** 2)
        return x, np.stack([vt, vp], axis=-1)

    return GeodesicPath(surface, np.asarray(p, float), np.asarray(v, float), float(length), ev,
                        emb, frame=(n0, t0, b))


def _torus_path(surface, p, v, length):
    p = np.asarray(p, float)
    v = np.asarray(v, float)

    def ev(s):
        x = p + s[..., None] * v
        return x, np.broadcast_to(v, x.shape).copy()

    return GeodesicPath(surface, p, v, float(length), ev, None,
                        frame=(p, v, surface.left_normal(p, v)))


def _ode_path(surface, p, v, length, rtol=ODE_RTOL):
    p = np.asarray(p, float)
    v = np.asarray(v, float)
    sol = geodesic_flow(surface, p, v, length, dense_output=True, rtol=rtol, method="DOP853")
    xs, _ = _unpack(surface, sol.y, 1)
    surface.check_chart(xs[:, 0])

    def ev(s):
        s_arr = np.atleast_1d(s)
        x, vv = _unpack(surface, sol.sol(s_arr.ravel()), 1)
        x = x[:, 0].reshape(s_arr.shape + (2,))
        vv = vv[:, 0].reshape(s_arr.shape + (2,))
        surface.check_chart(x)
        return x, vv

    return GeodesicPath(surface, p, v, float(length), ev, None)


def geodesic_shoot(surface, p, v, length, *, method="auto", rtol=ODE_RTOL):
    """Geodesic from ``p`` with g-unit initial velocity ``v``, of the given length.

    ``method="auto"`` uses closed forms on the round sphere (computed in the
    rotated chart whose equator carries the geodesic) and on the torus, and
    the adaptive Dormand-Prince 5(4) integrator otherwise; ``method="ode"``
    forces numerical integration.
    """
    if length <= 0:
        raise ValueError("length must be positive")
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_unit(surface, p, v)
    if method == "auto" and surface.kind == "round_sphere":
        return _sphere_path(surface, p, v, length)
    if method == "auto" and surface.kind == "flat_torus":
        return _torus_path(surface, p, v, length)
    if method not in ("auto", "ode"):
        raise ValueError(f"unknown method {method!r}")
    surface.check_chart(p)
    return _ode_path(surface, p, v, length, rtol=rtol)


def unit_geodesic(surface, base, angle, length=1.0):
    base = np.asarray(base, dtype=float)
    return geodesic_shoot(surface, base, surface.direction(base, angle), length)


def exp_map(surface, p, u, *, rtol=1e-11, atol=1e-13):
    """Exponential map at ``p`` applied to the stack of tangent vectors ``u``.

    Returns points in the surface's working representation: R^3 on the round
    sphere, unwrapped chart coordinates otherwise.
    """
    p = np.asarray(p, dtype=float)
    u = np.atleast_2d(u)
    if surface.kind == "round_sphere":
        R = surface.radius
        n0 = surface.embed(p) / R
        e_th, e_ph = surface.chart_frame(p)
        U = (u[:, 0:1] * e_th + u[:, 1:2] * e_ph) / R
        a = np.linalg.norm(U, axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            sinc = np.where(a > 0, np.sin(a) / np.where(a > 0, a, 1.0), 1.0)
        return R * (np.cos(a) * n0 + sinc * U)
    if surface.kind == "flat_torus":
        return p + u
    surface.check_chart(p)
    x0 = np.broadcast_to(p, u.shape)
    sol = geodesic_flow(surface, x0, u, 1.0, rtol=rtol, atol=atol, method="DOP853")
    x, _ = _unpack(surface, sol.y[:, -1:], u.shape[0])
    surface.check_chart(x[0])
    return x[0]


def _rep_inner(surface, q, a, b):
    if surface.kind == "round_sphere":
        return np.sum(a * b, axis=-1)
    return surface.inner(q, a, b)


def gauss_lemma_residual(surface, p, v, r, w, *, step=1e-3, richardson=True):
    """``|<dexp_p(rv)[rv], dexp_p(rv)[w]> - <rv, w>_p|`` by central differences.

    With ``richardson=True`` the two step sizes ``step`` and ``step/2`` are
    combined into a fourth-order estimate of the differential.
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    _check_unit(surface, p, v)
    if r <= 0:
        raise ValueError("r must be positive")
    if surface.kind == "perturbed_sphere" and r > PERTURBED_DISTANCE_BOUND:
        raise OutOfRangeError(f"r={r} exceeds the validity radius {PERTURBED_DISTANCE_BOUND}")
    if surface.kind == "round_sphere" and r >= math.pi * surface.radius:
        raise OutOfRangeError("r must stay below the injectivity radius")
    u = r * v
    hs = [step, step / 2] if richardson else [step]
    stack = [u]
    for h in hs:
        stack += [u + h * u, u - h * u, u + h * w, u - h * w]
    pts = exp_map(surface, p, np.array(stack))
    q = pts[0]

    def diffs(i):
        h = hs[i]
        base = 1 + 4 * i
        a = (pts[base] - pts[base + 1]) / (2 * h)
        b = (pts[base + 2] - pts[base + 3]) / (2 * h)
        return a, b

    a, b = diffs(0)
    if richardson:
        a2, b2 = diffs(1)
        a = (4.0 * a2 - a) / 3.0
        b = (4.0 * b2 - b) / 3.0
    lhs = _rep_inner(surface, q, a, b)
    rhs = surface.inner(p, u, w)
    return float(abs(lhs - rhs))


# -- distances --------------------------------------------------------------

def geodesic_distance(surface, x, y, *, tol=1e-12, max_iter=30):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if surface.kind == "round_sphere":
        a = surface.embed(x) / surface.radius
        b = surface.embed(y) / surface.radius
        return float(surface.radius * math.atan2(np.linalg.norm(np.cross(a, b)), np.dot(a, b)))
    if surface.kind == "flat_torus":
        P = np.array(surface.periods)
        d = np.mod(y - x + P / 2, P) - P / 2
        return float(np.linalg.norm(d))
    return _shooting_distance(surface, x, y, tol=tol, max_iter=max_iter)


def _round_initial_guess(x, y):
    unit = Surface.round_sphere()
    a = unit.embed(x)
    b = unit.embed(y)
    d = math.atan2(np.linalg.norm(np.cross(a, b)), np.dot(a, b))
    t = b - np.dot(a, b) * a
    t /= np.linalg.norm(t)
    e_th, e_ph = unit.chart_frame(x)
    ang = math.atan2(np.dot(t, e_ph), np.dot(t, e_th))
    return ang, d


def _wrap(d):
    out = np.array(d, dtype=float)
    out[..., 1] = np.mod(out[..., 1] + math.pi, TWO_PI) - math.pi
    return out


def _shooting_distance(surface, x, y, *, tol, max_iter):
    surface.check_chart(x)
    surface.check_chart(y)
    ang, L = _round_initial_guess(x, y)
    if L * (1 + abs(surface.amplitude)) > PERTURBED_DISTANCE_BOUND:
        raise OutOfRangeError(
            f"points are too far apart for the perturbed-sphere chart (round distance {L:.3f})")
    if L == 0.0:
        return 0.0
    h = _CSTEP
    for _ in range(max_iter):
        v0 = surface.direction(x, ang + 1j * h)
        sol = geodesic_flow(surface, x.astype(complex), v0, L, rtol=1e-12, atol=1e-14)
        xe, ve = _unpack(surface, sol.y[:, -1:], 1)
        end = np.real(xe[0, 0])
        d_ang = np.imag(xe[0, 0]) / h
        d_len = np.real(ve[0, 0])
        F = _wrap(end - y)
        J = np.column_stack([d_ang, d_len])
        step = np.linalg.solve(J, -F)
        ang += step[0]
        L += step[1]
        if L > PERTURBED_DISTANCE_BOUND:
            raise OutOfRangeError("shooting left the admissible distance range")
        if np.max(np.abs(step)) < tol:
            return float(abs(L))
    raise KnlabError("geodesic shooting did not converge")


# -- Fermi coordinates ------------------------------------------------------

@dataclass
class FermiChart:
    """Fermi normal coordinates ``(s, t) -> exp_{gamma0(s)}(t nu(s))``."""
    surface: Surface
    base: GeodesicPath
    half_width: float

    def __post_init__(self):
        if not (0 < self.half_width <= self.surface.focal_bound):
            raise FocalPointError(
                f"half width {self.half_width} exceeds the focal bound "
                f"{self.surface.focal_bound:.4f}")

    def _closed_form(self, s, t, ds_step=0.0):
        """Representation points of the chart map; s may be complex."""
        surf = self.surface
        if surf.kind == "round_sphere":
            R = surf.radius
            n0, t0, b = self.base.frame
            a = s[..., None] / R
            c = t[..., None] / R
            return R * (np.cos(c) * (np.cos(a) * n0 + np.sin(a) * t0) + np.sin(c) * b)
        p, v, nu = self.base.frame
        return p + s[..., None] * v + t[..., None] * nu

    def _ode_grid(self, s, t):
        """Points, s-derivatives and t-velocities on the product grid (perturbed)."""
        surf = self.surface
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        L = max(self.base.length, float(np.max(s)))
        p0, v0 = self.base.start, self.base.direction
        nu0 = surf.left_normal(p0, v0)
        sol = geodesic_flow(surf, p0, v0, L, normals=nu0, dense_output=True, rtol=1e-12,
                            atol=1e-14, method="DOP853")
        xb, vb, nub = _unpack(surf, sol.sol(s), 1, width=6)
        xb, vb, nub = xb[:, 0], vb[:, 0], nub[:, 0]
        dnu = -np.einsum("nijk,nj,nk->ni", surf.christoffel(xb), vb, nub)
        h = _CSTEP
        xc = xb + 1j * h * vb
        pts = np.empty((len(s), len(t), 2))
        js = np.empty((len(s), len(t), 2))
        vel = np.empty((len(s), len(t), 2))
        for sign in (1.0, -1.0):
            mask = (t * sign >= 0)
            if not np.any(mask):
                continue
            ts = np.abs(t[mask])
            nuc = sign * (nub + 1j * h * dnu)
            tmax = float(np.max(ts))
            if tmax == 0.0:
                pts[:, mask] = xb[:, None, :]
                js[:, mask] = vb[:, None, :]
                vel[:, mask] = sign * nub[:, None, :]
                continue
            sol_n = geodesic_flow(surf, xc, nuc, tmax, dense_output=True, rtol=1e-12,
                                  atol=1e-14, method="DOP853")
            x, vv = _unpack(surf, sol_n.sol(ts), len(s))
            # x: (nt, ns, 2)
            pts[:, mask] = np.real(np.swapaxes(x, 0, 1))
            js[:, mask] = np.imag(np.swapaxes(x, 0, 1)) / h
            vel[:, mask] = sign * np.real(np.swapaxes(vv, 0, 1))
        surf.check_chart(pts)
        return pts, js, vel

    def map(self, s, t):
        """Chart coordinates of the Fermi points (s, t) (broadcast arrays)."""
        s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
        if self.surface.kind == "perturbed_sphere":
            flat_s, flat_t = s.ravel(), t.ravel()
            out = np.empty(flat_s.shape + (2,))
            for i, (si, ti) in enumerate(zip(flat_s, flat_t)):
                pts, _, _ = self._ode_grid(np.array([si]), np.array([ti]))
                out[i] = pts[0, 0]
            return out.reshape(s.shape + (2,))
        P = self._closed_form(s, t)
        if self.surface.kind == "round_sphere":
            return self.surface.from_embedded(P)
        return P

    def points(self, s, t):
        """Working-representation points (R^3 on the round sphere)."""
        s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
        if self.surface.kind == "perturbed_sphere":
            return self.map(s, t)
        return self._closed_form(s, t)

    def metric_grid(self, s, t):
        """Pulled-back metric components ``(g11, g12, g22)`` on the grid s x t."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        surf = self.surface
        if surf.kind == "perturbed_sphere":
            pts, J, V = self._ode_grid(s, t)
            g11 = surf.inner(pts, J, J)
            g12 = surf.inner(pts, J, V)
            g22 = surf.inner(pts, V, V)
            return g11, g12, g22
        S, T = np.meshgrid(s, t, indexing="ij")
        h = _CSTEP
        Js = np.imag(self._closed_form(S + 1j * h, T.astype(complex))) / h
        Jt = np.imag(self._closed_form(S.astype(complex), T + 1j * h)) / h
        return (np.sum(Js * Js, axis=-1), np.sum(Js * Jt, axis=-1), np.sum(Jt * Jt, axis=-1))

    def g11(self, s, t):
        return self.metric_grid(np.atleast_1d(s), np.atleast_1d(t))[0]

    def check_invariants(self, ns=50, nt=50, dt=1e-3):
        """Maximum defects of the Fermi-chart invariants on an ns x nt grid."""
        s = np.linspace(0.0, self.base.length, ns)
        t = np.linspace(-self.half_width, self.half_width, nt)
        g11, g12, g22 = self.metric_grid(s, t)
        core = self.metric_grid(s, np.array([-dt, 0.0, dt]))[0]
        return {
            "cross_term": float(np.max(np.abs(g12))),
            "normal_speed": float(np.max(np.abs(g22 - 1.0))),
            "core_g11": float(np.max(np.abs(core[:, 1] - 1.0))),
            "core_dt_g11": float(np.max(np.abs((core[:, 2] - core[:, 0]) / (2 * dt)))),
            "min_g11": float(np.min(g11)),
        }


def build_fermi_chart(surface, gamma0, half_width):
    if gamma0.surface != surface:
        raise ValueError("base geodesic lives on a different surface")
    return FermiChart(surface, gamma0, float(half_width))


# -- geodesic families ----------------------------------------------------

def base_grid_points(surface, base_grid):
    """Deterministic base points, row-major.

    Sphere rows are ``pi/2 + (i - n//2) * pi/(n+1)`` (always containing the
    equator), longitudes ``2 pi j / m``; torus points are ``(P1 i/n, P2 j/m)``.
    """
    if isinstance(base_grid, np.ndarray) and base_grid.ndim == 2:
        return base_grid
    n, m = base_grid
    if surface.is_sphere:
        rows = math.pi / 2 + (np.arange(n) - n // 2) * math.pi / (n + 1)
        cols = np.arange(m) * TWO_PI / m
    else:
        rows = np.arange(n) * surface.periods[0] / n
        cols = np.arange(m) * surface.periods[1] / m
    return np.stack(np.meshgrid(rows, cols, indexing="ij"), axis=-1).reshape(-1, 2)


def sample_unit_geodesics(surface, base_grid, direction_count, length=1.0):
    if direction_count < 4:
        raise ValueError("direction_count must be at least 4")
    bases = base_grid_points(surface, base_grid)
    angles = np.arange(direction_count) * TWO_PI / direction_count
    return [unit_geodesic(surface, b, a, length) for b in bases for a in angles]
