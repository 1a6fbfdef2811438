"""First-order Taylor bounds used by the SCA subproblems.

Each helper returns the coefficients of an affine bound of a convex (or
concave) function around an expansion point.  The subproblem builders and the
bound probes in :mod:`uavirs.oracle` use the same helpers, so a probe checks
exactly what goes into the conic programs.
"""
from __future__ import annotations

import numpy as np

LOG2E = 1.0 / np.log(2.0)


def rate_in_w(s: float, w0: float):
    """Affine lower bound of ``log2(1 + s/W)`` (convex in W) at ``w0``.

    Returns ``(c0, c1)`` with ``log2(1 + s/W) >= c0 + c1 * W``.
    """
    v0 = np.log2(1.0 + s / w0)
    slope = -s * LOG2E / (w0 * (w0 + s))
    return v0 - slope * w0, slope


def binary_penalty(a0: float):
    """Affine upper bound of ``a - a^2`` at ``a0``: ``c0 + c1 * a``."""
    return a0 * a0, 1.0 - 2.0 * a0


def square(x0: float):
    """Affine lower bound of ``x^2`` at ``x0``: ``c0 + c1 * x``."""
    return -x0 * x0, 2.0 * x0


def sq_norm(a0: np.ndarray):
    """Affine lower bound of ``||a||^2`` at ``a0``: ``c0 + c1 . a``."""
    a0 = np.asarray(a0, float)
    return -float(a0 @ a0), 2.0 * a0


def product_ub(a0: float, p0: float):
    """Convex upper bound of ``a * p`` at ``(a0, p0)``.

    ``a p = (a+p)^2/4 - (a-p)^2/4``; the second square is linearized, giving
    ``(a+p)^2/4 + c0 + c1 * (a - p)``.
    """
    d0 = a0 - p0
    return d0 * d0 / 4.0, -d0 / 2.0


def product_ub_value(a, p, a0, p0):
    c0, c1 = product_ub(a0, p0)
    return (a + p) ** 2 / 4.0 + c0 + c1 * (a - p)


def power_pair(beta: float, b1: float, b2: float, b3: float, x0: float, y0: float):
    """Affine lower bounds of ``f = b1 x^-beta + b2 y^-2`` and ``g = x^-beta/2 y^-1``.

    Returns ``(f0, fx, fy), (g0, gx, gy)`` meaning ``f >= f0 + fx x + fy y``.
    ``b3`` is unused here but kept so the signature mirrors the gain model.
    """
    f_val = b1 * x0 ** -beta + b2 * y0 ** -2
    fx = -beta * b1 * x0 ** (-beta - 1)
    fy = -2.0 * b2 * y0 ** -3
    g_val = x0 ** (-beta / 2) / y0
    gx = -(beta / 2) * x0 ** (-beta / 2 - 1) / y0
    gy = -(x0 ** (-beta / 2)) / y0 ** 2
    return (f_val - fx * x0 - fy * y0, fx, fy), (g_val - gx * x0 - gy * y0, gx, gy)


def gain_lower(beta, rho, B, C, x, y, x0, y0):
    """Lower bound of ``rho x^-beta + B y^-2 + C x^-beta/2 y^-1`` (sign-split)."""
    (f0, fx, fy), (g0, gx, gy) = power_pair(beta, rho, B, C, x0, y0)
    flb = f0 + fx * x + fy * y
    if C >= 0:
        return flb + C * (g0 + gx * x + gy * y)
    return flb + C * (x ** (-beta / 2) / y)


def gain_upper(beta, rho, D, E, x, y, x0, y0):
    """Upper bound of ``rho x^-beta + D y^-2 + E x^-beta/2 y^-1`` (sign-split)."""
    f = rho * x ** -beta + D * y ** -2
    if E >= 0:
        return f + E * (x ** (-beta / 2) / y)
    (_, _, _), (g0, gx, gy) = power_pair(beta, rho, D, E, x0, y0)
    return f + E * (g0 + gx * x + gy * y)


def gain_model(beta, rho, B, C, x, y):
    return rho * x ** -beta + B * y ** -2 + C * x ** (-beta / 2) / y


def log_affine_upper(lin: np.ndarray, const: float, x0: np.ndarray):
    """Affine upper bound of the concave ``log2(lin . x + const)`` at ``x0``.

    Returns ``(c0, grad)`` with ``log2(lin.x + const) <= c0 + grad . x``.
    """
    lin = np.asarray(lin, float)
    s0 = float(lin @ x0 + const)
    grad = lin * LOG2E / s0
    return float(np.log2(s0) - grad @ x0), grad


def spectral_lower(V0: np.ndarray):
    """Principal eigenvector ``u`` of ``V0``: ``||V||_2 >= u^H V u`` for all V."""
    w, U = np.linalg.eigh(V0)
    return U[:, -1], float(w[-1])
