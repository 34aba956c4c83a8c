"""Independent reference implementations used as test oracles.

Nothing here imports the package's estimator, basis or covariance code. The
estimators below solve the weighted least-squares problems directly on raw
monomials with dense matrices and explicit O(n^2) indicator tables.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def kernel(name: str, u):
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) <= 1
    if name == "epanechnikov":
        return np.where(inside, 0.75 * (1 - u**2), 0.0)
    if name == "uniform":
        return np.where(inside, 0.5, 0.0)
    if name == "triangular":
        return np.where(inside, 1 - np.abs(u), 0.0)
    raise ValueError(name)


def monomials(d: int, order: int) -> list[tuple[int, ...]]:
    """All exponent tuples with total degree ≤ order (any fixed order will do)."""
    return [e for e in itertools.product(range(order + 1), repeat=d) if sum(e) <= order]


def wls_coefficients(design, weights, targets):
    """Solve argmin_c sum_i w_i (t_i - design_i c)^2 for each column of targets."""
    w = np.sqrt(weights)
    sol, *_ = np.linalg.lstsq(design * w[:, None], targets * w[:, None], rcond=None)
    return sol


def dense_two_step(y, x, y0, x0, h, p, q, mu, nu, kname):
    """Two-step estimate of d^mu/dy^mu d^nu/dx^nu F(y0 | x0) by brute force."""
    y = np.asarray(y, float)
    x = np.asarray(x, float).reshape(len(y), -1)
    d = x.shape[1]
    ux = x - np.asarray(x0, float)
    wx = np.prod(kernel(kname, ux / h) / h, axis=1)
    exps = monomials(d, q)
    design_x = np.column_stack([np.prod(ux**np.array(e), axis=1) for e in exps])
    act = wx > 0
    indicators = (y[:, None] <= y[None, :]).astype(float)  # [j, i] = 1(Y_j <= Y_i)
    coef = wls_coefficients(design_x[act], wx[act], indicators[act])
    k = exps.index(tuple(nu))
    v = coef[k] * math.prod(math.factorial(a) for a in nu)  # first-stage value at each Y_i
    uy = y - y0
    wy = kernel(kname, uy / h) / h
    acty = wy > 0
    design_y = np.column_stack([uy**j for j in range(p + 1)])
    beta = wls_coefficients(design_y[acty], wy[acty], v[acty][:, None])
    return float(beta[mu, 0] * math.factorial(mu))


def ecdf_double_loop(y, a):
    n = len(y)
    out = np.zeros(n)
    for i in range(n):
        for j in range(n):
            if y[j] <= y[i]:
                out[i] += a[j]
    return out


def projection_covariance(y, a_rows, b_rows, centres):
    """C[g, g'] from psi_k(g) = A_gk (G_g(Y_k) - centre_g), G_g(u) = sum_i b_gi 1(u <= Y_i)."""
    y = np.asarray(y, float)
    ind = (y[:, None] <= y[None, :]).astype(float)  # [k, i] = 1(Y_k <= Y_i)
    psi = np.column_stack([a * (ind @ b - c) for a, b, c in zip(a_rows, b_rows, centres)])
    psi = psi - psi.mean(axis=0)
    return psi.T @ psi


def independent_sup_quantile(m: int, level: float = 0.95) -> float:
    """c with (2 Phi(c) - 1)^m = level, by bisection on the error function."""
    target = level ** (1.0 / m)
    lo, hi = 0.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if math.erf(mid / math.sqrt(2.0)) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def truncnorm_cdf_numeric(mean, sd, lo, hi, y):
    """Truncated normal CDF by direct numerical integration of the density."""
    if y <= lo:
        return 0.0
    if y >= hi:
        return 1.0
    grid = np.linspace(lo, hi, 200001)
    dens = np.exp(-0.5 * ((grid - mean) / sd) ** 2)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    return float(np.interp(y, grid, cum) / cum[-1])
