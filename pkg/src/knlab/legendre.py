"""Legendre polynomials and orthonormal associated Legendre functions.

``P̄_l^m`` denotes the orthonormal associated Legendre function including the
Condon-Shortley phase, so that ``Y_l^m = P̄_l^m(cos theta) e^{i m phi}`` is
L^2(S^2)-normalized.  Fixed-degree evaluation over all orders uses the
three-term recurrence in the order m, run downward from the sectoral seed
``P̄_l^l`` with running rescaling (the seed underflows near the poles for large
l).  The degree recurrence is kept as an independent reference.
"""
import math
import os

import numba
import numpy as np

# The TBB layer rejects older system TBB builds with a warning; use the
# portable workqueue layer unless the user chose one.
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

_BIG = 1e200
_LOG_BIG = math.log(_BIG)


def sectoral_log_constant(l):
    """log of |P̄_l^l(x)| / (1-x^2)^{l/2}."""
    j = np.arange(1, l + 1)
    return 0.5 * math.log((2 * l + 1) / (4 * math.pi)) + 0.5 * float(
        np.sum(np.log((2 * j - 1) / (2 * j))))


@numba.njit(cache=True)
def _legendre_kernel(k, x, out):
    for i in range(x.shape[0]):
        xi = x[i]
        if k == 0:
            out[i] = 1.0
            continue
        p0 = 1.0
        p1 = xi
        for l in range(1, k):
            p2 = ((2 * l + 1) * xi * p1 - l * p0) / (l + 1)
            p0 = p1
            p1 = p2
        out[i] = p1


def legendre_p(k, x):
    """Legendre polynomial P_k(x) by the upward three-term recurrence."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.size)
    _legendre_kernel(int(k), np.ascontiguousarray(x.ravel()), out)
    return out.reshape(x.shape)


@numba.njit(cache=True)
def _order_coeffs(l):
    a = np.zeros(l + 2)
    b = np.zeros(l + 2)
    for m in range(l + 1):
        a[m] = math.sqrt((l + m + 1.0) * (l - m))
        b[m] = math.sqrt((l + m) * (l - m + 1.0))
    return a, b


@numba.njit(cache=True)
def _all_orders_kernel(l, logc, x, y, out):
    a, b = _order_coeffs(l)
    vals = np.empty(l + 1)
    scales = np.empty(l + 1)
    for i in range(x.shape[0]):
        xi = x[i]
        yi = y[i]
        if yi <= 0.0:
            for m in range(l + 1):
                out[i, m] = 0.0
            out[i, 0] = math.sqrt((2 * l + 1) / (4 * math.pi)) * (1.0 if (xi > 0 or l % 2 == 0) else -1.0)
            continue
        cot = xi / yi
        scale = logc + l * math.log(yi)
        p_next = 0.0
        p = -1.0 if l % 2 == 1 else 1.0
        vals[l] = p
        scales[l] = scale
        for m in range(l, 0, -1):
            pm = -(2.0 * m * cot * p + a[m] * p_next) / b[m]
            p_next = p
            p = pm
            if abs(p) > _BIG:
                p /= _BIG
                p_next /= _BIG
                scale += _LOG_BIG
            vals[m - 1] = p
            scales[m - 1] = scale
        for m in range(l + 1):
            out[i, m] = vals[m] * math.exp(scales[m]) if scales[m] > -745.0 else 0.0
            if scales[m] <= -745.0 and scales[m] + math.log(abs(vals[m]) + 1e-300) > -745.0:
                out[i, m] = math.copysign(math.exp(scales[m] + math.log(abs(vals[m]))), vals[m])


def assoc_legendre_all_orders(l, cos_theta, sin_theta=None):
    """Array ``out[..., m] = P̄_l^m(cos theta)`` for m = 0..l."""
    x = np.asarray(cos_theta, dtype=float)
    y = np.sqrt(np.clip(1.0 - x * x, 0.0, None)) if sin_theta is None else np.asarray(sin_theta, float)
    xs = np.ascontiguousarray(x.ravel())
    ys = np.ascontiguousarray(np.broadcast_to(y, x.shape).ravel())
    out = np.empty((xs.size, l + 1))
    _all_orders_kernel(int(l), sectoral_log_constant(l), xs, ys, out)
    return out.reshape(x.shape + (l + 1,))


@numba.njit(cache=True, parallel=True)
def _harmonic_kernel(l, logc, A, B, x, y, phi, out):
    """Sum_m P̄_l^m (A_m e^{im phi} + B_m (-1)^m e^{-im phi}), m = 0..l."""
    a, b = _order_coeffs(l)
    for i in numba.prange(x.shape[0]):
        xi = x[i]
        yi = y[i]
        if yi <= 0.0:
            sgn = 1.0 if (xi > 0 or l % 2 == 0) else -1.0
            out[i] = A[0] * math.sqrt((2 * l + 1) / (4 * math.pi)) * sgn
            continue
        cot = xi / yi
        scale = logc + l * math.log(yi)
        ph = phi[i]
        rot = complex(math.cos(ph), -math.sin(ph))
        e = complex(math.cos(l * ph), math.sin(l * ph))
        p_next = 0.0
        p = -1.0 if l % 2 == 1 else 1.0
        sign_m = -1.0 if l % 2 == 1 else 1.0
        acc = p * (A[l] * e + B[l] * sign_m * e.conjugate())
        for m in range(l, 0, -1):
            pm = -(2.0 * m * cot * p + a[m] * p_next) / b[m]
            p_next = p
            p = pm
            e = e * rot
            sign_m = -sign_m
            if abs(p) > _BIG:
                p /= _BIG
                p_next /= _BIG
                acc /= _BIG
                scale += _LOG_BIG
            acc += p * (A[m - 1] * e + B[m - 1] * sign_m * e.conjugate())
        out[i] = acc * math.exp(scale) if scale > -745.0 else acc * 0.0


def harmonic_sum(l, coeffs, cos_theta, sin_theta, phi):
    """Evaluate sum_{m=-l..l} coeffs[m+l] Y_l^m at the given angles."""
    coeffs = np.asarray(coeffs, dtype=complex)
    A = np.ascontiguousarray(coeffs[l:])
    B = np.zeros(l + 1, dtype=complex)
    B[1:] = coeffs[:l][::-1]
    x = np.ascontiguousarray(np.asarray(cos_theta, float).ravel())
    y = np.ascontiguousarray(np.asarray(sin_theta, float).ravel())
    ph = np.ascontiguousarray(np.asarray(phi, float).ravel())
    out = np.empty(x.size, dtype=complex)
    _harmonic_kernel(int(l), sectoral_log_constant(l), A, B, x, y, ph, out)
    return out.reshape(np.shape(cos_theta))


def assoc_legendre_degree(l, m, x):
    """P̄_l^m(x) by the upward recurrence in degree from the sectoral seed.

    Reference implementation: O(l) per point and per order.  The seed is
    carried in logarithmic form so that it does not underflow.
    """
    x = np.asarray(x, dtype=float)
    y = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    with np.errstate(divide="ignore"):
        log_seed = sectoral_log_constant(m) + m * np.log(y)
    sign = -1.0 if m % 2 else 1.0
    # carry values relative to exp(log_seed) and restore at the end
    p_prev = np.zeros_like(x)
    p = np.full_like(x, sign)
    if l == m:
        return _restore(p, log_seed)
    p_prev, p = p, x * math.sqrt(2 * m + 3) * p
    for ell in range(m + 2, l + 1):
        a_l = math.sqrt((4 * ell * ell - 1) / (ell * ell - m * m))
        a_lm1 = math.sqrt((4 * (ell - 1) ** 2 - 1) / ((ell - 1) ** 2 - m * m))
        p_prev, p = p, a_l * x * p - (a_l / a_lm1) * p_prev
    return _restore(p, log_seed)


def _restore(rel, log_seed):
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        mag = np.log(np.abs(rel)) + log_seed
        out = np.where(rel == 0.0, 0.0, np.sign(rel) * np.exp(mag))
    return np.where(np.isfinite(log_seed), out, 0.0)
