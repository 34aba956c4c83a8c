"""Two-step local polynomial estimator of conditional CDF derivatives.

The first stage regresses the indicators 1(Y_j <= y) on a degree-q polynomial
in X - x with product-kernel weights; the second stage fits a degree-p
polynomial in Y - y to the first-stage fitted CDF evaluated at the sample
points. Both stages are linear smoothers, so the estimate at (y, x) is the
bilinear form sum_i sum_j b_i A_j 1(Y_j <= Y_i). The weight vectors are
materialised because the covariance estimator reuses them.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from cdekit.basis import MultiIndexSet, basis_dimension, poly_vector_x, poly_vector_y, unit_vector_index
from cdekit.kernels import KernelFamily, kernel_value
from cdekit.model import DataSet, EstimationConfig, EvaluationSpec

COND_LIMIT = 1e12


class InsufficientLocalData(ArithmeticError):
    """Too few observations, or a near-singular Gram matrix, inside a kernel window."""


def _solve_row(gram: NDArray[np.float64], row: int, where: str) -> NDArray[np.float64]:
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise InsufficientLocalData(f"ill-conditioned Gram matrix (cond={cond:.3g}) {where}")
    e = np.zeros(gram.shape[0])
    e[row] = 1.0
    return np.linalg.solve(gram, e)


def _x_window(data: DataSet, x_point: ArrayLike, h: float, kernel: KernelFamily):
    xp = np.atleast_1d(np.asarray(x_point, dtype=np.float64))
    if xp.shape != (data.d,):
        raise ValueError(f"x_point must have length {data.d}")
    u = (data.x - xp) / h
    w = np.prod(np.asarray(kernel_value(kernel, u)), axis=1)
    return u, w


def first_stage_weights(
    data: DataSet,
    x_point: ArrayLike,
    h: float,
    q: int,
    nu: Sequence[int] | None,
    kernel: KernelFamily,
) -> NDArray[np.float64]:
    """Weights A with A' R = e_nu' for the local polynomial fit in x.

    Sum_j A_j 1(Y_j <= y) is then the first-stage estimate of the nu-th
    x-derivative of F(y | x_point) for every y.
    """
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    ms = MultiIndexSet(data.d, q)
    nu = (0,) * data.d if nu is None else tuple(nu)
    row = unit_vector_index(ms, nu)
    u, w = _x_window(data, x_point, h, kernel)
    active = np.flatnonzero(w > 0)
    where = f"at x={np.atleast_1d(x_point).tolist()}, h={h:.6g}"
    if active.size < len(ms) + 1:
        raise InsufficientLocalData(f"{active.size} observations in the x-window {where}")
    r = poly_vector_x(ms, u[active])
    wa = w[active]
    gram = (r * wa[:, None]).T @ r
    c = _solve_row(gram, row, where)
    out = np.zeros(data.n)
    # scaled basis: coefficient nu estimates h^|nu| times the derivative
    out[active] = (r @ c) * wa / h ** sum(nu)
    return out


def second_stage_weights(
    data: DataSet, y: float, h: float, p: int, mu: int, kernel: KernelFamily
) -> NDArray[np.float64]:
    """Weights b with b' P = e_mu' for the local polynomial fit in y around ``y``."""
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    if mu > p:
        raise ValueError("mu must be ≤ p")
    u = (data.y - y) / h
    w = np.asarray(kernel_value(kernel, u))
    active = np.flatnonzero(w > 0)
    where = f"at y={y:.6g}, h={h:.6g}"
    if active.size < p + 2:
        raise InsufficientLocalData(f"{active.size} observations in the y-window {where}")
    r = poly_vector_y(p, u[active])
    wa = w[active]
    gram = (r * wa[:, None]).T @ r
    c = _solve_row(gram, mu, where)
    out = np.zeros(data.n)
    out[active] = (r @ c) * wa / h**mu
    return out


@dataclass(frozen=True)
class YOrder:
    """Sort order of y with tie-aware ranks, shared by every prefix-sum pass."""

    order: NDArray[np.intp]
    y_sorted: NDArray[np.float64]
    upper: NDArray[np.intp]  # last sorted position with y_sorted <= y_i
    lower: NDArray[np.intp]  # first sorted position with y_sorted >= y_i

    @classmethod
    def of(cls, y: NDArray[np.float64]) -> "YOrder":
        order = np.argsort(y, kind="stable")
        ys = y[order]
        upper = np.searchsorted(ys, y, side="right") - 1
        lower = np.searchsorted(ys, y, side="left")
        return cls(order, ys, upper, lower)

    def cdf_sums(self, weights: NDArray[np.float64]) -> NDArray[np.float64]:
        """v_i = sum_j weights_j 1(Y_j <= Y_i)."""
        cs = np.cumsum(weights[self.order])
        return cs[self.upper]

    def survival_sums(self, weights: NDArray[np.float64]) -> NDArray[np.float64]:
        """g_k = sum_i weights_i 1(Y_k <= Y_i)."""
        rs = np.cumsum(weights[self.order][::-1])[::-1]
        return rs[self.lower]


def first_stage_cdf_at_sample_points(
    data: DataSet, a: NDArray[np.float64], y_order: YOrder | None = None
) -> NDArray[np.float64]:
    """First-stage CDF estimate at every sample point, by prefix sums in y-order."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (data.n,):
        raise ValueError("weight vector length must equal n")
    yo = y_order or YOrder.of(data.y)
    return yo.cdf_sums(a)


@dataclass(frozen=True)
class WeightSet:
    """First-stage weights ``a`` and second-stage weights ``b`` at one grid point."""

    a: NDArray[np.float64]
    b: NDArray[np.float64]
    eff_n: int


def point_weights(
    data: DataSet, y: float, x_point: ArrayLike, h: float, config: EstimationConfig
) -> WeightSet:
    nu = config.nu_for(data.d)
    a = first_stage_weights(data, x_point, h, config.q, nu, config.kernel)
    b = second_stage_weights(data, y, h, config.p, config.mu, config.kernel)
    return WeightSet(a, b, effective_n(data, y, x_point, h, config.kernel))


def effective_n(data: DataSet, y: float, x_point: ArrayLike, h: float, kernel: KernelFamily) -> int:
    """Observations with non-zero weight in both the x-window and the y-window."""
    _, wx = _x_window(data, x_point, h, kernel)
    wy = np.asarray(kernel_value(kernel, (data.y - y) / h))
    return int(np.count_nonzero((wx > 0) & (wy > 0)))


def estimate_point(
    data: DataSet,
    y: float,
    x_point: ArrayLike,
    h: float,
    config: EstimationConfig,
    y_order: YOrder | None = None,
) -> float:
    """Estimate of the (mu, nu) derivative of F(y | x_point) at bandwidth h."""
    ws = point_weights(data, y, x_point, h, config)
    v = first_stage_cdf_at_sample_points(data, ws.a, y_order)
    return float(ws.b @ v)


@dataclass
class CdeFit:
    """Estimates over a y-grid; inference fields are filled by :mod:`cdekit.inference`.

    Failed grid points carry NaN estimates and a message in ``failures``.
    """

    spec: EvaluationSpec
    config: EstimationConfig
    estimates: NDArray[np.float64]
    eff_n: NDArray[np.int64]
    a: NDArray[np.float64]
    b: NDArray[np.float64]
    failures: dict[int, str] = field(default_factory=dict)
    n: int = 0
    bw_method: str = ""
    se: NDArray[np.float64] | None = None
    ci_lower: NDArray[np.float64] | None = None
    ci_upper: NDArray[np.float64] | None = None
    covariance: NDArray[np.float64] | None = None
    band_critical: float | None = None
    band_lower: NDArray[np.float64] | None = None
    band_upper: NDArray[np.float64] | None = None
    rbc_estimates: NDArray[np.float64] | None = None
    rbc_se: NDArray[np.float64] | None = None
    rbc_ci_lower: NDArray[np.float64] | None = None
    rbc_ci_upper: NDArray[np.float64] | None = None
    rbc_covariance: NDArray[np.float64] | None = None
    rbc_band_critical: float | None = None
    rbc_band_lower: NDArray[np.float64] | None = None
    rbc_band_upper: NDArray[np.float64] | None = None
    rbc_failures: dict[int, str] = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.spec.m

    @property
    def ok(self) -> NDArray[np.bool_]:
        return np.isfinite(self.estimates)


def estimate_grid(
    data: DataSet, spec: EvaluationSpec, config: EstimationConfig, workers: int = 1
) -> CdeFit:
    """Point estimates and weights at every grid point, each with its own bandwidth."""
    if config.normalize:
        raise NotImplementedError("normalize is not implemented")
    if spec.x_point.shape != (data.d,):
        raise ValueError(f"x_point must have length {data.d}")
    yo = YOrder.of(data.y)
    m = spec.m

    def one(g: int):
        try:
            ws = point_weights(data, spec.y_grid[g], spec.x_point, spec.bandwidths[g], config)
        except InsufficientLocalData as exc:
            return g, None, str(exc)
        return g, ws, None

    if workers > 1 and m > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(m)))
    else:
        results = [one(g) for g in range(m)]

    est = np.full(m, np.nan)
    eff = np.zeros(m, dtype=np.int64)
    a = np.zeros((m, data.n))
    b = np.zeros((m, data.n))
    failures: dict[int, str] = {}
    for g, ws, err in results:
        if ws is None:
            failures[g] = err
            eff[g] = effective_n(data, spec.y_grid[g], spec.x_point, spec.bandwidths[g], config.kernel)
            continue
        a[g], b[g], eff[g] = ws.a, ws.b, ws.eff_n
        est[g] = ws.b @ yo.cdf_sums(ws.a)
    if config.nonneg and config.mu == 1:
        est = np.where(np.isfinite(est), np.maximum(est, 0.0), est)
    return CdeFit(spec=spec, config=config, estimates=est, eff_n=eff, a=a, b=b,
                  failures=failures, n=data.n)


def min_feasible_bandwidth(
    data: DataSet, y: float, x_point: ArrayLike, count: int, kernel: KernelFamily
) -> float:
    """Smallest h whose joint (x and y) window holds at least ``count`` observations."""
    xp = np.atleast_1d(np.asarray(x_point, dtype=np.float64))
    dist = np.maximum(np.abs(data.y - y), np.max(np.abs(data.x - xp), axis=1))
    count = min(count, data.n)
    r = float(np.partition(dist, count - 1)[count - 1])
    # Epanechnikov/triangular vanish on the window edge, so step strictly past it
    return max(r * (1.0 + 1e-9), 1e-12) if kernel is not KernelFamily.UNIFORM else max(r, 1e-12)


def required_count(d: int, p: int, q: int) -> int:
    return max(basis_dimension(d, q) + 2, p + 2)

