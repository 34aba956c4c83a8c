"""Rule-of-thumb MSE / IMSE bandwidth selection by pilot plug-in.

The leading bias is h^(q+1-|nu|) B_x + h^(p+1-mu) B_y and the leading variance
V / (n h^r). The derivatives of F entering B_x and B_y, and the variance
constant V, are estimated with the two-step estimator itself at a
normal-reference pilot bandwidth. The kernel constants multiplying those
derivatives are integrals over the kernel window clipped to the observed
support, recomputed for every candidate h, which keeps the selector
boundary-aware.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from cdekit.basis import MultiIndexSet, unit_vector_index
from cdekit.covariance import vstat_covariance
from cdekit.estimator import (
    InsufficientLocalData,
    YOrder,
    effective_n,
    min_feasible_bandwidth,
    point_weights,
    required_count,
)
from cdekit.kernels import KernelFamily, moment_integrals
from cdekit.model import DataSet, EstimationConfig

PILOT_CONSTANT = 1.06
PILOT_GROWTH = 1.5
PILOT_RETRIES = 5
BRACKET_POINTS = 50
DERIVATIVE_PILOT_CONSTANT = 3.0


class BandwidthError(ArithmeticError):
    pass


def variance_exponent(d: int, mu: int, nu_abs: int = 0) -> int:
    """Exponent r in Var = V / (n h^r) for the (mu, nu) estimate.

    The first-stage smoothing in x contributes d + 2|nu|; the y-derivative
    contributes 2 mu - 1 for mu ≥ 1 and nothing for the CDF itself.
    """
    return d + 2 * nu_abs + max(2 * mu - 1, 0)


def pilot_bandwidth(data: DataSet) -> float:
    """Normal-reference pilot 1.06 * sigma * n^(-1/(d+4)), sigma the geometric mean of column SDs."""
    if data.n < 10:
        raise BandwidthError("pilot bandwidth needs n ≥ 10")
    sds = np.concatenate([[np.std(data.y, ddof=1)], np.std(data.x, axis=0, ddof=1)])
    if np.any(sds <= 0):
        raise BandwidthError("zero variance in a data column")
    sigma = float(np.exp(np.mean(np.log(sds))))
    return PILOT_CONSTANT * sigma * data.n ** (-1.0 / (data.d + 4))


def derivative_pilot(data: DataSet, p: int) -> float:
    """Wider pilot for the (p+1)-th derivative fits: C * sigma * n^(-1/(d+2p+5)).

    Same pooled sigma as :func:`pilot_bandwidth`; the rate is MSE-optimal for
    an order-(p+1) fit of the (p+1)-th derivative.
    """
    pilot = pilot_bandwidth(data)
    sigma = pilot / (PILOT_CONSTANT * data.n ** (-1.0 / (data.d + 4)))
    return DERIVATIVE_PILOT_CONSTANT * sigma * data.n ** (-1.0 / (data.d + 2 * p + 5))


# kernel constants ----------------------------------------------------------------


def _window(lo: float, hi: float, centre: float, h: float) -> tuple[float, float]:
    return max(-1.0, (lo - centre) / h), min(1.0, (hi - centre) / h)


@lru_cache(maxsize=4096)
def y_bias_constant(kernel: KernelFamily, p: int, mu: int, window: tuple[float, float]) -> float:
    """e_mu' S^-1 c for the degree-p fit; multiplies h^(p+1-mu) F^(p+1)."""
    mom = moment_integrals(kernel, window[0], window[1], 2 * p + 1)
    fact = np.array([math.factorial(k) for k in range(p + 2)], dtype=np.float64)
    idx = np.arange(p + 1)
    s = mom[idx[:, None] + idx[None, :]] / (fact[:p + 1, None] * fact[None, :p + 1])
    c = mom[idx + p + 1] / (fact[:p + 1] * fact[p + 1])
    return float(np.linalg.solve(s, c)[mu])


def x_bias_constants(
    kernel: KernelFamily, q: int, nu: Sequence[int], windows: Sequence[tuple[float, float]]
) -> NDArray[np.float64]:
    """Constants for each multi-index of degree q+1 (graded-lex order).

    They multiply h^(q+1-|nu|) times the matching (q+1)-th x-derivatives.
    """
    return np.array(_x_bias_constants(kernel, q, tuple(nu), tuple(windows)))


@lru_cache(maxsize=4096)
def _x_bias_constants(kernel, q, nu, windows) -> tuple[float, ...]:
    d = len(windows)
    ms = MultiIndexSet(d, q)
    top = MultiIndexSet(d, q + 1)
    alphas = [top.indices[k] for k in top.degree_block(q + 1)]
    mom = [moment_integrals(kernel, lo, hi, 2 * q + 2) for lo, hi in windows]

    def integral(e: Sequence[int]) -> float:
        return math.prod(mom[k][e[k]] for k in range(d))

    idx = ms.indices
    fact = ms.factorials
    s = np.array([[integral([a + b for a, b in zip(i1, i2)]) for i2 in idx] for i1 in idx])
    s /= fact[:, None] * fact[None, :]
    row = unit_vector_index(ms, nu)
    out = np.empty(len(alphas))
    for t, al in enumerate(alphas):
        afact = math.prod(math.factorial(v) for v in al)
        c = np.array([integral([a + b for a, b in zip(i1, al)]) for i1 in idx]) / (fact * afact)
        out[t] = np.linalg.solve(s, c)[row]
    return tuple(out)


# moment estimates ----------------------------------------------------------------


@dataclass(frozen=True)
class Geometry:
    """Where the bias constants are evaluated: point, observed support, orders."""

    y: float
    x_point: tuple[float, ...]
    y_support: tuple[float, float]
    x_support: tuple[tuple[float, float], ...]
    kernel: KernelFamily
    p: int
    q: int
    mu: int
    nu: tuple[int, ...]


@dataclass(frozen=True)
class MomentEstimates:
    """Plug-in constants for one grid point.

    ``bias_q1`` and ``bias_p1`` are the bias constants at ``pilot_h``. When a
    ``geometry`` is attached, :meth:`bias_terms` recomputes the kernel
    constants for each candidate h from the stored derivative estimates
    ``deriv_x`` (the mixed (mu, alpha) derivatives, |alpha| = q+1) and
    ``deriv_y`` (the (p+1)-th y-derivative); otherwise the constants are
    used as given.
    """

    bias_q1: float
    bias_p1: float
    variance_const: float
    pilot_h: float
    deriv_y: float = 0.0
    deriv_x: tuple[float, ...] = ()
    geometry: Geometry | None = None

    def __post_init__(self) -> None:
        vals = (self.bias_q1, self.bias_p1, self.variance_const, self.pilot_h)
        if not all(math.isfinite(v) for v in vals):
            raise BandwidthError("non-finite moment estimate")
        if not self.variance_const > 0:
            raise BandwidthError("variance constant must be positive")

    def bias_terms(self, h: float) -> tuple[float, float]:
        g = self.geometry
        if g is None:
            return self.bias_q1, self.bias_p1
        wy = _window(g.y_support[0], g.y_support[1], g.y, h)
        by = y_bias_constant(g.kernel, g.p, g.mu, wy) * self.deriv_y
        wx = [_window(lo, hi, c, h) for (lo, hi), c in zip(g.x_support, g.x_point)]
        bx = float(x_bias_constants(g.kernel, g.q, g.nu, wx) @ np.asarray(self.deriv_x))
        return bx, by


def _geometry(data: DataSet, y: float, x_point: NDArray[np.float64], config: EstimationConfig) -> Geometry:
    return Geometry(
        y=float(y),
        x_point=tuple(float(v) for v in x_point),
        y_support=(float(data.y.min()), float(data.y.max())),
        x_support=tuple((float(lo), float(hi)) for lo, hi in zip(data.x.min(axis=0), data.x.max(axis=0))),
        kernel=config.kernel,
        p=config.p,
        q=config.q,
        mu=config.mu,
        nu=config.nu_for(data.d),
    )


def _point_estimate(data, y, x_point, h, config, yo) -> tuple[float, object]:
    ws = point_weights(data, y, x_point, h, config)
    return float(ws.b @ yo.cdf_sums(ws.a)), ws


def _with_growth(fn, h: float, what: str):
    last: Exception | None = None
    for _ in range(PILOT_RETRIES + 1):
        try:
            return fn(h), h
        except InsufficientLocalData as exc:
            last = exc
            h *= PILOT_GROWTH
    raise InsufficientLocalData(f"{what} failed after {PILOT_RETRIES} pilot enlargements: {last}")


def estimate_moments(
    data: DataSet,
    y: float,
    x_point: ArrayLike,
    config: EstimationConfig,
    pilot_h: float,
    y_order: YOrder | None = None,
    bias_pilot_h: float | None = None,
) -> MomentEstimates:
    """Plug-in bias derivatives and variance constant.

    The variance constant n h^r Var(h) comes from the covariance estimate at
    ``pilot_h``. The (p+1)-th y-derivative and the mixed (mu, alpha)
    derivatives with |alpha| = q+1 come from the two-step estimator with the
    matching order raised by one, at ``bias_pilot_h`` (defaults to
    ``pilot_h``). Either pilot grows by a factor 1.5, up to five times, when
    its window is too sparse.
    """
    xp = np.atleast_1d(np.asarray(x_point, dtype=np.float64))
    yo = y_order or YOrder.of(data.y)
    geo = _geometry(data, y, xp, config)
    nu = config.nu_for(data.d)
    top = MultiIndexSet(data.d, config.q + 1)
    alphas = [top.indices[k] for k in top.degree_block(config.q + 1)]
    r = variance_exponent(data.d, config.mu, sum(nu))
    kern = config.kernel

    def derivatives(h: float) -> tuple[float, tuple[float, ...]]:
        cfg_y = EstimationConfig(mu=config.p + 1, nu=nu, p=config.p + 1, q=config.q, kernel=kern)
        dy, _ = _point_estimate(data, y, xp, h, cfg_y, yo)
        dx = []
        for al in alphas:
            nu_a = tuple(a + b for a, b in zip(al, nu))
            cfg_x = EstimationConfig(mu=config.mu, nu=nu_a, p=config.p, q=config.q + 1 + sum(nu), kernel=kern)
            dx.append(_point_estimate(data, y, xp, h, cfg_x, yo)[0])
        return dy, tuple(dx)

    def variance(h: float) -> float:
        cfg_v = EstimationConfig(mu=config.mu, nu=nu, p=config.p, q=config.q, kernel=kern)
        est, ws = _point_estimate(data, y, xp, h, cfg_v, yo)
        centre = est
        if any(nu):
            cfg_0 = EstimationConfig(mu=config.mu, p=config.p, q=config.q, kernel=kern)
            centre, _ = _point_estimate(data, y, xp, h, cfg_0, yo)
        cov = vstat_covariance(data, ws.a[None, :], ws.b[None, :], np.array([est]), np.array([centre]), yo)
        var = float(cov.matrix[0, 0])
        if not var > 0:
            raise InsufficientLocalData(f"zero pilot variance at y={y:.6g}, h={h:.6g}")
        return data.n * h**r * var

    vconst, h_v = _with_growth(variance, pilot_h, "variance pilot")
    (dy, dx), _ = _with_growth(derivatives, bias_pilot_h or pilot_h, "bias pilot")
    mom = MomentEstimates(0.0, 0.0, vconst, h_v, dy, dx, geo)
    bq, bp = mom.bias_terms(h_v)
    return MomentEstimates(bq, bp, vconst, h_v, dy, dx, geo)


# objective and search ------------------------------------------------------------


def mse_objective(moments: MomentEstimates, h: float, n: int, d: int, mu: int, p: int, q: int, nu_abs: int = 0) -> float:
    r = variance_exponent(d, mu, nu_abs)
    bx, by = moments.bias_terms(h)
    bias = h ** (q + 1 - nu_abs) * bx + h ** (p + 1 - mu) * by
    return moments.variance_const / (n * h**r) + bias * bias


def _golden(f, lo: float, hi: float, tol: float = 1e-10, maxiter: int = 200) -> float:
    """Golden-section minimisation of f over [lo, hi] (log-h coordinates)."""
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, e = b - inv * (b - a), a + inv * (b - a)
    fc, fe = f(c), f(e)
    for _ in range(maxiter):
        if b - a < tol:
            break
        if fc <= fe:
            b, e, fe = e, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, e, fe
            e = a + inv * (b - a)
            fe = f(e)
    return 0.5 * (a + b)


def minimise_on_bracket(objective, h_floor: float, h_ceil: float) -> float:
    """Global basin from a log-spaced grid, refined by golden section in log h."""
    if not 0 < h_floor:
        raise BandwidthError("h_floor must be positive")
    if h_ceil <= h_floor:
        return h_floor
    logs = np.linspace(math.log(h_floor), math.log(h_ceil), BRACKET_POINTS)
    vals = np.array([objective(math.exp(t)) for t in logs])
    finite = np.isfinite(vals)
    if not finite.any():
        raise BandwidthError("MSE objective is non-finite on the whole bracket")
    vals = np.where(finite, vals, np.inf)
    k = int(np.argmin(vals))
    if k == len(logs) - 1:
        return h_ceil
    if k == 0:
        lo, hi = logs[0], logs[1]
    else:
        lo, hi = logs[k - 1], logs[k + 1]
    t = _golden(lambda s: objective(math.exp(s)), lo, hi)
    best = math.exp(t)
    return best if objective(best) <= vals[k] else float(math.exp(logs[k]))


def select_mse_bandwidth(
    moments: MomentEstimates,
    n: int,
    d: int,
    mu: int,
    p: int,
    q: int,
    h_floor: float = 1e-8,
    h_ceil: float = 1e8,
    nu_abs: int = 0,
) -> float:
    return minimise_on_bracket(
        lambda h: mse_objective(moments, h, n, d, mu, p, q, nu_abs), h_floor, h_ceil
    )


def _warn_even(config: EstimationConfig, d: int) -> None:
    nu_abs = sum(config.nu_for(d))
    if (config.p - config.mu) % 2 == 0 or (config.q - nu_abs) % 2 == 0:
        warnings.warn(
            "p - mu or q - |nu| is even: the plug-in bandwidth is not guaranteed MSE-rate optimal",
            stacklevel=3,
        )


@dataclass
class BandwidthSelection:
    grid: NDArray[np.float64]
    bandwidths: NDArray[np.float64]
    eff_n: NDArray[np.int64]
    rule: str
    moments: list[MomentEstimates | None] = field(default_factory=list)
    floors: NDArray[np.float64] | None = None


def bandwidth_limits(data: DataSet, y: float, x_point: ArrayLike, config: EstimationConfig) -> tuple[float, float]:
    need = required_count(data.d, config.p, config.q)
    floor = min_feasible_bandwidth(data, y, x_point, need, config.kernel)
    ceil = float(np.ptp(data.y))
    return floor, max(ceil, floor)


def _grid_moments(data, grid, xp, config, pilot, bias_pilot, yo):
    return [estimate_moments(data, float(y), xp, config, pilot, yo, bias_pilot) for y in grid]


def select_bandwidths(
    data: DataSet,
    grid: ArrayLike,
    x_point: ArrayLike,
    config: EstimationConfig,
    rule: str = "mse-rot",
    pilot_h: float | None = None,
    bias_pilot_h: float | None = None,
) -> BandwidthSelection:
    """Per-point (``mse-rot``) or common (``imse-rot``) plug-in bandwidths over a y-grid."""
    if rule not in ("mse-rot", "imse-rot"):
        raise ValueError(f"unknown bandwidth rule {rule!r}")
    g = np.atleast_1d(np.asarray(grid, dtype=np.float64))
    xp = np.atleast_1d(np.asarray(x_point, dtype=np.float64))
    _warn_even(config, data.d)
    yo = YOrder.of(data.y)
    pilot = pilot_bandwidth(data) if pilot_h is None else pilot_h
    bias_pilot = derivative_pilot(data, config.p) if bias_pilot_h is None else bias_pilot_h
    moments = _grid_moments(data, g, xp, config, pilot, bias_pilot, yo)
    limits = [bandwidth_limits(data, float(y), xp, config) for y in g]
    nu_abs = sum(config.nu_for(data.d))
    args = (data.n, data.d, config.mu, config.p, config.q)
    if rule == "mse-rot":
        bws = np.array([
            select_mse_bandwidth(mom, *args, h_floor=lo, h_ceil=hi, nu_abs=nu_abs)
            for mom, (lo, hi) in zip(moments, limits)
        ])
    else:
        lo = max(l for l, _ in limits)
        hi = max(lo, min(h for _, h in limits))
        h = minimise_on_bracket(
            lambda t: float(np.mean([mse_objective(mom, t, *args, nu_abs) for mom in moments])), lo, hi
        )
        bws = np.full(g.size, h)
    eff = np.array([effective_n(data, float(y), xp, h, config.kernel) for y, h in zip(g, bws)], dtype=np.int64)
    return BandwidthSelection(g, bws, eff, rule, list(moments), np.array([l for l, _ in limits]))


def select_imse_bandwidth(data: DataSet, grid: ArrayLike, x_point: ArrayLike, config: EstimationConfig) -> float:
    g = np.atleast_1d(np.asarray(grid, dtype=np.float64))
    if g.size < 2:
        raise ValueError("IMSE selection needs at least 2 grid points")
    return float(select_bandwidths(data, g, x_point, config, "imse-rot").bandwidths[0])
