"""Domain types and dataset ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from cdekit.kernels import KernelFamily


class DataError(ValueError):
    """Raised for unreadable or invalid input data."""


@dataclass(frozen=True)
class DataSet:
    """n observations of a scalar response ``y`` and covariates ``x`` (n x d)."""

    y: NDArray[np.float64]
    x: NDArray[np.float64]

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2:
            raise DataError("x must be a 2-d array")
        if x.shape[0] != y.shape[0]:
            raise DataError(f"row mismatch: y has {y.shape[0]} rows, x has {x.shape[0]}")
        if y.shape[0] < 2:
            raise DataError("need at least 2 observations")
        if x.shape[1] < 1:
            raise DataError("need at least one covariate")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise DataError("data contain non-finite values")
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def d(self) -> int:
        return int(self.x.shape[1])

    def take(self, idx: NDArray[np.intp]) -> "DataSet":
        return DataSet(self.y[idx], self.x[idx])

    def scaled(self, c: float) -> "DataSet":
        return DataSet(self.y * c, self.x * c)


@dataclass(frozen=True)
class EstimationConfig:
    """Derivative orders, polynomial orders, kernel and inference settings.

    ``mu`` is the derivative order in y, ``nu`` the multi-index of derivative
    orders in x (``None`` means the zero multi-index), ``p`` and ``q`` the
    second- and first-stage polynomial orders.
    """

    mu: int = 1
    nu: tuple[int, ...] | None = None
    p: int = 2
    q: int = 1
    kernel: KernelFamily = KernelFamily.EPANECHNIKOV
    alpha: float = 0.05
    band_sims: int = 2000
    nonneg: bool = False
    normalize: bool = False

    def __post_init__(self) -> None:
        for name in ("mu", "p", "q"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")
        if self.nu is not None:
            nu = tuple(int(v) for v in self.nu)
            if any(v < 0 for v in nu):
                raise ValueError("nu entries must be non-negative")
            object.__setattr__(self, "nu", nu)
        if self.mu > self.p:
            raise ValueError("mu must be ≤ p")
        if self.nu is not None and sum(self.nu) > self.q:
            raise ValueError("|nu| must be ≤ q")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.band_sims < 1:
            raise ValueError("band_sims must be positive")
        if not isinstance(self.kernel, KernelFamily):
            object.__setattr__(self, "kernel", KernelFamily.parse(self.kernel))

    def nu_for(self, d: int) -> tuple[int, ...]:
        if self.nu is None:
            return (0,) * d
        if len(self.nu) != d:
            raise ValueError(f"nu has length {len(self.nu)} but data have d={d}")
        return self.nu

    def with_orders(self, p: int, q: int) -> "EstimationConfig":
        return EstimationConfig(
            mu=self.mu, nu=self.nu, p=p, q=q, kernel=self.kernel, alpha=self.alpha,
            band_sims=self.band_sims, nonneg=self.nonneg, normalize=self.normalize,
        )


@dataclass(frozen=True)
class EvaluationSpec:
    """Grid of y evaluation points, a conditioning point and per-point bandwidths."""

    y_grid: NDArray[np.float64]
    x_point: NDArray[np.float64]
    bandwidths: NDArray[np.float64] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        grid = np.atleast_1d(np.asarray(self.y_grid, dtype=np.float64))
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError("y_grid must be a non-empty vector")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise ValueError("y_grid must be strictly increasing")
        xp = np.atleast_1d(np.asarray(self.x_point, dtype=np.float64))
        bw = self.bandwidths
        if bw is None:
            raise ValueError("bandwidths are required")
        bw = np.asarray(bw, dtype=np.float64)
        if bw.ndim == 0:
            bw = np.full(grid.size, float(bw))
        if bw.shape != grid.shape:
            raise ValueError("need one bandwidth per grid point")
        if not np.all(np.isfinite(bw)) or np.any(bw <= 0):
            raise ValueError("bandwidths must be positive and finite")
        for a in (grid, xp, bw):
            a.setflags(write=False)
        object.__setattr__(self, "y_grid", grid)
        object.__setattr__(self, "x_point", xp)
        object.__setattr__(self, "bandwidths", bw)

    @property
    def m(self) -> int:
        return int(self.y_grid.size)


def load_dataset(path: str | Path, y_column: str, x_columns: Sequence[str]) -> DataSet:
    """Read a CSV with a header row and return the selected columns as a DataSet.

    Non-finite or non-numeric cells are a hard error naming the offending
    (1-based data) row and column; nothing is silently dropped.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    if not x_columns:
        raise DataError("at least one x column is required")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        wanted = [y_column, *x_columns]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise DataError(f"missing column(s): {', '.join(missing)}")
        cols = [header.index(c) for c in wanted]
        rows: list[list[float]] = []
        for lineno, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            vals = []
            for name, ci in zip(wanted, cols):
                cell = rec[ci].strip() if ci < len(rec) else ""
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"row {lineno}, column {name!r}: non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"row {lineno}, column {name!r}: non-finite value {cell!r}")
                vals.append(v)
            rows.append(vals)
    if len(rows) < 2:
        raise DataError(f"need at least 2 usable rows, found {len(rows)}")
    arr = np.asarray(rows, dtype=np.float64)
    return DataSet(arr[:, 0], arr[:, 1:])


def default_grid(
    data: DataSet, count: int = 19, levels: Sequence[float] | None = None
) -> NDArray[np.float64]:
    """Empirical quantiles of y at levels k/(count+1), k = 1..count.

    Type-7 (linear interpolation) quantiles; duplicate values from ties are
    removed so the result is strictly increasing. Explicit ``levels`` override
    ``count``.
    """
    y = data.y
    if np.ptp(y) == 0:
        raise DataError("all y values are identical; cannot build a grid")
    if levels is None:
        if count < 1:
            raise ValueError("count must be ≥ 1")
        levels = np.arange(1, count + 1) / (count + 1)
    lv = np.asarray(levels, dtype=np.float64)
    if np.any((lv < 0) | (lv > 1)):
        raise ValueError("quantile levels must lie in [0, 1]")
    return np.unique(np.quantile(y, lv, method="linear"))
