"""Oscillatory-integral checks built on the distance phase ``d_g(x, (0, t))``.

Coordinates ``x = (x1, x2)`` are Fermi coordinates about a base geodesic
gamma0 that runs along the second axis: ``(0, t)`` is the point of gamma0 at
arc length t and ``x1`` is the signed normal offset.  On the unit sphere with
gamma0 the equator this gives the closed form
``phi(x, t) = arccos(cos x1 cos(x2 - t))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericalDerivativeError, PreconditionError

FD_STEPS = (1e-3, 5e-4, 2.5e-4)
FD_AGREEMENT = 1e-5
KERNEL_MAX_LAMBDA = 200.0
NODES_PER_WAVELENGTH = 10


def bump(x):
    """``exp(1 - 1/(1 - x^2))`` on |x| < 1, zero outside; bump(0) = 1."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - x[inside] ** 2))
    return out


def _smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        g = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return f / (f + g)


def flat_top(x, flat, edge):
    """Smooth window equal to 1 on |x| <= flat and 0 on |x| >= edge."""
    return _smooth_step((edge - np.abs(np.asarray(x, float))) / (edge - flat))


# -- phase probes -----------------------------------------------------------


@dataclass(frozen=True)
class PhaseProbe:
    """Phase ``phi(x1, x2, t)`` with its validity window (x1, x2, t ranges)."""
    name: str
    phase: Callable = field(repr=False)
    x1_range: tuple = (-0.34, -0.26)
    x2_range: tuple = (-0.08, 0.08)
    t_range: tuple = (-0.08, 0.08)

    def __call__(self, x1, x2, t):
        return self.phase(x1, x2, t)

    def in_window(self, x, t):
        x1, x2 = x
        return (self.x1_range[0] <= x1 <= self.x1_range[1]
                and self.x2_range[0] <= x2 <= self.x2_range[1]
                and self.t_range[0] <= t <= self.t_range[1])

    def grid(self, n=20, t=0.0):
        a = np.linspace(*self.x1_range, n)
        b = np.linspace(*self.x2_range, n)
        return [((x1, x2), t) for x1 in a for x2 in b]


def sphere_phase(x1, x2, t):
    return np.arccos(np.clip(np.cos(x1) * np.cos(np.asarray(x2) - t), -1.0, 1.0))


def sphere_probe(**window):
    """Distance phase on the unit sphere in Fermi coordinates about the equator."""
    return PhaseProbe("sphere", sphere_phase, **window)


def euclidean_probe(**window):
    return PhaseProbe("euclidean", lambda x1, x2, t: np.hypot(x1, np.asarray(x2) - t),
                      **window)


def synthetic_probe(func, name="synthetic", **window):
    return PhaseProbe(name, func, **window)


# -- Carleson-Sjolin determinant -------------------------------------------


def _cs_matrix(probe, x, t, h):
    x1, x2 = x
    f = probe.phase
    e = ((h, 0.0), (0.0, h))
    mixed = []
    third = []
    for d1, d2 in e:
        mixed.append((f(x1 + d1, x2 + d2, t + h) - f(x1 + d1, x2 + d2, t - h)
                      - f(x1 - d1, x2 - d2, t + h) + f(x1 - d1, x2 - d2, t - h)) / (4 * h * h))

        def ftt(a, b):
            return (f(a, b, t + h) - 2 * f(a, b, t) + f(a, b, t - h)) / (h * h)

        third.append((ftt(x1 + d1, x2 + d2) - ftt(x1 - d1, x2 - d2)) / (2 * h))
    return np.array([[mixed[0], mixed[1]], [third[0], third[1]]], dtype=float)


def cs_determinant(probe, x, t, *, steps=FD_STEPS, tol=FD_AGREEMENT):
    """``det [[phi_x1t, phi_x2t], [phi_x1tt, phi_x2tt]]`` by central differences.

    Each entry is extrapolated from consecutive step pairs (Richardson,
    second order); the two extrapolated determinants must agree to ``tol``
    (relative to max(1, |det|)).
    """
    dets = [float(np.linalg.det(_cs_matrix(probe, x, t, h))) for h in steps]
    mats = [_cs_matrix(probe, x, t, h) for h in steps]
    ext = [(4 * mats[i + 1] - mats[i]) / 3 for i in range(len(steps) - 1)]
    ext_dets = [float(np.linalg.det(m)) for m in ext]
    gap = abs(ext_dets[-1] - ext_dets[-2])
    if not gap <= tol * max(1.0, abs(ext_dets[-1])):
        raise NumericalDerivativeError(
            f"finite-difference determinant did not converge at x={tuple(x)}, t={t}",
            {"steps": list(steps), "raw": dets, "extrapolated": ext_dets, "gap": gap})
    return ext_dets[-1]


def cs_step_ratio(probe, x, t, steps=(4e-3, 2e-3, 1e-3)):
    """Error-ratio diagnostic ``|D(h) - D(h/2)| / |D(h/2) - D(h/4)|`` (about 4)."""
    d = [float(np.linalg.det(_cs_matrix(probe, x, t, h))) for h in steps]
    return abs(d[0] - d[1]) / abs(d[1] - d[2])


def cs_grid(probe, n=20, t=0.0):
    """Determinants on the n x n window grid at parameter t."""
    return np.array([cs_determinant(probe, x, tt) for x, tt in probe.grid(n, t)]).reshape(n, n)


def linearization_constant(probe, n=12, nt=21):
    """``max |r| / t^2`` for ``r = phi(x,t) - phi(x,0) - t d_t phi(x,0)`` on the window."""
    t = np.linspace(*probe.t_range, nt)
    t = t[np.abs(t) > 1e-12]
    h = 1e-5
    worst = 0.0
    for (x1, x2), _ in probe.grid(n):
        p0 = probe(x1, x2, 0.0)
        dt = (probe(x1, x2, h) - probe(x1, x2, -h)) / (2 * h)
        r = probe(x1, x2, t) - p0 - t * dt
        worst = max(worst, float(np.max(np.abs(r) / t ** 2)))
    return worst


# -- bilinear kernel --------------------------------------------------------


def t_pair(v, sign=1.0):
    """``(t, t')`` from ``v = (u1^2/2, u2)`` on the branch ``sign(u1) = sign``."""
    u1 = sign * math.sqrt(2.0 * v[0])
    return 0.5 * (v[1] + u1), 0.5 * (v[1] - u1)


def v_of(t, tp):
    u1 = np.asarray(t) - np.asarray(tp)
    return 0.5 * u1 ** 2, np.asarray(t) + np.asarray(tp)


def v_jacobian(u1):
    """``|dv/du| = |u1|``; with ``|du/d(t,t')| = 2`` one has dt dt' = dv / (2|u1|)."""
    return np.abs(u1)


@dataclass(frozen=True)
class KernelSpec:
    """Amplitude ``a(x,t,t') = A(x) W_d(t - t') W_s(t + t')``.

    ``A`` is a radial bump of radius ``x_radius`` about ``x_center`` times a
    Gaussian of width ``x_gauss``; the windows are flat-top ``(flat, edge)``.
    The small-support hypothesis (x radius and |t - t'| support at most 0.1)
    is enforced unless ``relaxed``.
    """
    probe: PhaseProbe
    x_center: tuple = (-0.3, 0.0)
    x_radius: float = 0.1
    x_gauss: float = 0.05
    diff_window: tuple = (0.08, 0.1)
    sum_window: tuple = (1.0, 1.2)
    gradient_bound: float = 4.0
    relaxed: bool = False

    def __post_init__(self):
        if not self.relaxed and (self.x_radius > 0.1 or self.diff_window[1] > 0.1):
            raise PreconditionError("amplitude support exceeds delta = 0.1")

    def amplitude_x(self, x1, x2):
        r = np.hypot(x1 - self.x_center[0], x2 - self.x_center[1])
        return bump(r / self.x_radius) * np.exp(-0.5 * (r / self.x_gauss) ** 2)

    def amplitude_t(self, t, tp):
        return (flat_top(np.asarray(t) - tp, *self.diff_window)
                * flat_top(np.asarray(t) + tp, *self.sum_window))

    def symmetric_phase(self, x1, x2, t, tp):
        return self.probe(x1, x2, t) + self.probe(x1, x2, tp)

    def nodes_per_axis(self, lam):
        wl = 2 * math.pi / (lam * self.gradient_bound)
        return max(24, math.ceil(NODES_PER_WAVELENGTH * 2 * self.x_radius / wl))

    def x_nodes(self, n):
        g, w = np.polynomial.legendre.leggauss(n)
        a1 = self.x_center[0] + self.x_radius * g
        a2 = self.x_center[1] + self.x_radius * g
        X1, X2 = np.meshgrid(a1, a2, indexing="ij")
        W = np.outer(w, w) * self.x_radius ** 2
        wa = (W * self.amplitude_x(X1, X2) ** 2).ravel()
        return X1.ravel(), X2.ravel(), wa


def row_integral_spec(probe):
    """Relaxed amplitude whose |t - t'| support reaches 1.2: at lambda = 100
    the region |t - t'| >= N lambda^{-1/2} is empty under the delta = 0.1
    hypothesis for every N >= 1."""
    return KernelSpec(probe, diff_window=(1.2, 1.4), sum_window=(0.3, 0.4), relaxed=True)


def _check_lambda(spec, lam):
    if lam > KERNEL_MAX_LAMBDA:
        n = spec.nodes_per_axis(lam)
        raise ValueError(f"lambda = {lam} exceeds the kernel cost bound {KERNEL_MAX_LAMBDA} "
                         f"({n} x {n} nodes would be required)")


def _kernel_values(spec, lam, v, vts, n):
    x1, x2, w = spec.x_nodes(n)
    t, tp = t_pair(v)
    base = np.exp(1j * lam * spec.symmetric_phase(x1, x2, t, tp)) * w
    amp_v = spec.amplitude_t(t, tp)
    out = np.empty(len(vts), dtype=complex)
    for i, vt in enumerate(vts):
        s, sp = t_pair(vt)
        ph = spec.symmetric_phase(x1, x2, s, sp)
        out[i] = amp_v * spec.amplitude_t(s, sp) * np.sum(base * np.exp(-1j * lam * ph))
    return out


def bilinear_kernel(spec, lam, v, vt, *, check=True):
    """``K_lam(v, vt) = int a(x,v) conj(a(x,vt)) e^{i lam [Phi(x,v) - Phi(x,vt)]} dx``."""
    return bilinear_kernel_many(spec, lam, v, [vt], check=check)[0]


def bilinear_kernel_many(spec, lam, v, vts, *, check=True, tol=1e-4):
    """Kernel for one v and several vt; with ``check`` the doubled-grid
    relative error (against ``int |a(v)| |a(vt)| dx``) must stay below tol."""
    _check_lambda(spec, lam)
    n = spec.nodes_per_axis(lam)
    vals = _kernel_values(spec, lam, v, vts, n)
    if check:
        fine = _kernel_values(spec, lam, v, vts, 2 * n)
        _, _, w = spec.x_nodes(n)
        t, tp = t_pair(v)
        scale = np.array([np.sum(w) * spec.amplitude_t(t, tp) * spec.amplitude_t(*t_pair(vt))
                          for vt in vts])
        err = np.abs(vals - fine) / np.where(scale > 0, scale, 1.0)
        if np.any(err > tol):
            raise NumericalDerivativeError("kernel quadrature did not converge",
                                           {"nodes": n, "max_rel_error": float(np.max(err))})
    return vals


def kernel_decay_sweep(spec, lam=100.0, v=(0.002, 0.0), direction=(0.0, 1.0),
                       dist_range=(0.05, 0.6), count=40):
    """Return ``(|v - vt|, |K|)`` along a ray from v.

    With |t - t'| <= 0.1 the first entry of v stays below 0.005, so offsets
    of 0.05 and more run along the second (``t + t'``) axis by default.
    """
    d = np.asarray(direction, float)
    d /= np.linalg.norm(d)
    dist = np.geomspace(*dist_range, count)
    vts = [tuple(np.asarray(v) + r * d) for r in dist]
    return dist, np.abs(bilinear_kernel_many(spec, lam, v, vts))


def upper_envelope(y):
    """Non-increasing upper envelope: ``env[i] = max(y[i:])``."""
    return np.maximum.accumulate(np.asarray(y)[::-1])[::-1]


def decay_slope(lam, dist, mags, floor=1e-300):
    """Least-squares slope of log(envelope |K|) against log(1 + lam |v - vt|)."""
    x = np.log1p(lam * np.asarray(dist))
    y = np.log(np.maximum(upper_envelope(mags), floor))
    return float(np.polyfit(x, y, 1)[0])


def _row_integral_at(spec, lam, cut, vt, h, n):
    half = 0.5 * (spec.diff_window[1] + spec.sum_window[1])
    t = np.arange(-half, half + 0.5 * h, h)
    x1, x2, w = spec.x_nodes(n)
    s, sp = t_pair(vt)
    m = w * np.exp(-1j * lam * spec.symmetric_phase(x1, x2, s, sp)) * spec.amplitude_t(s, sp)
    E = np.exp(1j * lam * spec.probe(x1[:, None], x2[:, None], t[None, :]))
    K = (E.T * m) @ E
    T, TP = np.meshgrid(t, t, indexing="ij")
    K *= spec.amplitude_t(T, TP)
    mask = np.abs(T - TP) >= cut
    return float(np.sum(np.abs(K)[mask]) * h * h)


def row_integral(spec, lam, N, *, gaps=None, h=None, n=None):
    """``sup_vt int_{|t-t'| >= N lam^{-1/2}} |K_lam(t, t'; vt)| dt dt'``.

    The supremum runs over ``vt`` with ``t + t' = 0`` and ``|t - t'|`` in
    ``gaps`` (default: four values across the flat part of the |t - t'|
    window plus the cutoff itself).  The kernel is assembled on a uniform
    t-grid as ``E^T diag(m) E`` with ``E[x, t] = e^{i lam phi(x, t)}``.
    """
    _check_lambda(spec, lam)
    cut = N / math.sqrt(lam)
    if gaps is None:
        gaps = sorted(set(np.linspace(0.0, spec.diff_window[0], 4)) | {cut})
    h = h if h is not None else 0.5 / lam
    n = n or spec.nodes_per_axis(lam)
    return max(_row_integral_at(spec, lam, cut, (0.5 * D * D, 0.0), h, n) for D in gaps)


def row_integral_scaling(spec, lam=100.0, Ns=(2, 4, 8)):
    """Row integrals and ``N * I(N)`` normalized by its mean (1/N scaling
    means every entry is close to 1)."""
    vals = np.array([row_integral(spec, lam, N) for N in Ns])
    prod = vals * np.asarray(Ns)
    return vals, prod / np.mean(prod)


# -- partition of unity -------------------------------------------------------


def eta(t):
    """Smooth ``eta`` supported in [-1, 1] with ``sum_j eta(t - j) = 1``."""
    return _smooth_step(1.0 - np.abs(np.asarray(t, float)))


@dataclass(frozen=True)
class Cutoff:
    """``eta_j(t) = eta(lam^{1/2} t - j)``."""
    lam: float
    j: int

    def __call__(self, t):
        return eta(math.sqrt(self.lam) * np.asarray(t, float) - self.j)

    @property
    def support(self):
        r = self.lam ** -0.5
        return (r * (self.j - 1), r * (self.j + 1))


def partition_cutoffs(lam, j):
    if lam < 1:
        raise ValueError("lambda must be at least 1")
    return Cutoff(float(lam), int(j))


# -- almost orthogonality -----------------------------------------------------


def rho_profile(tau):
    """Gaussian-windowed bump in the rescaled variable ``tau = lam^{1/2} t``."""
    tau = np.asarray(tau, float)
    return np.exp(-tau ** 2) * bump(tau)


def rho_derivative_table(max_order=3, n=20001):
    """``C_m = sup |d^m rho_profile / d tau^m|``, so ``|d_t^m rho| <= C_m lam^{m/2}``."""
    tau = np.linspace(-1, 1, n)
    y = rho_profile(tau)
    h = tau[1] - tau[0]
    table = [float(np.max(np.abs(y)))]
    for _ in range(max_order):
        y = np.gradient(y, h)
        table.append(float(np.max(np.abs(y))))
    return table


@dataclass
class GramCheck:
    """Points ``x_j`` (Fermi coordinates) near ``(-s0, 0)`` on the unit sphere,
    with their geodesic-normal images ``kappa(x_j)`` about the origin."""
    lam: float
    points: np.ndarray
    coeffs: np.ndarray | None = None
    c: float = 0.25
    s0: float = 0.3

    @property
    def kappa(self):
        return sphere_normal_coords(self.points)

    def direction_gaps(self):
        k = self.kappa
        q = k[:, 1] / np.linalg.norm(k, axis=1)
        return np.abs(q[:, None] - q[None, :])

    def separated(self):
        J = len(self.points)
        idx = np.arange(J)
        dj = np.abs(idx[:, None] - idx[None, :])
        need = self.c * self.lam ** -0.5 * dj
        mask = dj >= 10
        return bool(np.all(self.direction_gaps()[mask] >= need[mask] * (1 - 1e-9)))

    def gram(self, nodes=None):
        lam = self.lam
        r = lam ** -0.5
        n = nodes or max(64, math.ceil(4 * lam * r))
        g, w = np.polynomial.legendre.leggauss(n)
        t = r * g
        w = r * w
        psi = sphere_phase(self.points[:, 0][:, None], self.points[:, 1][:, None], t[None, :])
        F = np.exp(1j * lam * psi) * rho_profile(g)[None, :]
        G = math.sqrt(lam) * (F * w) @ F.conj().T
        return G


def sphere_normal_coords(points):
    """Geodesic normal coordinates ``kappa`` about the origin of the Fermi chart
    (the equator point (1,0,0)); first axis along the normal geodesic
    (north), second along the equator."""
    x1, x2 = points[:, 0], points[:, 1]
    P = np.stack([np.cos(x1) * np.cos(x2), np.cos(x1) * np.sin(x2), np.sin(x1)], axis=-1)
    tang = P - P[:, :1] * np.array([1.0, 0.0, 0.0])
    nrm = np.linalg.norm(tang, axis=1)
    ang = np.arctan2(nrm, P[:, 0])
    scale = np.where(nrm > 0, ang / np.where(nrm > 0, nrm, 1.0), 0.0)
    return np.stack([tang[:, 2] * scale, tang[:, 1] * scale], axis=-1)


def pushforward_nu(h=1e-6):
    """Tangent of ``t -> kappa((0, t))`` at t = 0; its second entry must not vanish."""
    p = np.array([[0.0, h], [0.0, -h]])
    k = sphere_normal_coords(p)
    nu = (k[0] - k[1]) / (2 * h)
    assert abs(nu[1]) > 1e-3, "pushforward of d/dx2 is tangent to the first axis"
    return nu


def separated_points(lam, J=32, c=0.25, s0=0.3):
    """Points at geodesic distance s0 from the origin whose normal-coordinate
    directions have ``kappa_2/|kappa| = c lam^{-1/2} (j - J/2)``."""
    q = c * lam ** -0.5 * (np.arange(J) - J / 2)
    if np.any(np.abs(q) >= 1):
        raise PreconditionError("too many points for the requested separation")
    alpha = np.arcsin(q)
    kappa = s0 * np.stack([-np.cos(alpha), np.sin(alpha)], axis=-1)
    return fermi_from_normal(kappa)


def fermi_from_normal(kappa):
    """Inverse of ``sphere_normal_coords``."""
    r = np.linalg.norm(kappa, axis=1)
    safe = np.where(r > 0, r, 1.0)
    d = np.stack([np.zeros_like(r), kappa[:, 1] / safe, kappa[:, 0] / safe], axis=-1)
    P = np.cos(r)[:, None] * np.array([1.0, 0.0, 0.0]) + np.sin(r)[:, None] * d
    x1 = np.arcsin(np.clip(P[:, 2], -1, 1))
    x2 = np.arctan2(P[:, 1], P[:, 0])
    return np.stack([x1, x2], axis=-1)


def gram_check(lam, J=32, c=0.25, s0=0.3, points=None):
    pts = separated_points(lam, J, c, s0) if points is None else np.asarray(points, float)
    return GramCheck(float(lam), pts, c=c, s0=s0)


def gram_norm(check, *, enforce=True):
    """Largest singular value of the Gram matrix (the best constant in the
    almost-orthogonality inequality for this configuration)."""
    if len(check.points) > 64:
        raise PreconditionError("at most 64 points are supported")
    if enforce and not check.separated():
        raise PreconditionError("direction separation condition violated")
    G = check.gram()
    return float(np.linalg.norm(G, 2))


def quadratic_form_ratio(check, a):
    """``lam^{1/2} int |sum_j e^{i lam psi_j} rho a_j|^2 dt / sum |a_j|^2``."""
    a = np.asarray(a, dtype=complex)
    G = check.gram()
    return float(np.real(a @ G @ a.conj()) / np.real(a.conj() @ a))
