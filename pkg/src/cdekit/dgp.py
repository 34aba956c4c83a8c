"""Bivariate normal data-generating processes with exact conditional laws."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from cdekit.model import DataSet

Box = tuple[tuple[float, float], tuple[float, float]]


@dataclass(frozen=True)
class DgpSpec:
    """(Y, X) jointly normal with mean zero, optionally truncated to a box.

    ``truncation`` is ((y_lo, y_hi), (x_lo, x_hi)) or None.
    """

    kind: str = "truncated_bivariate_normal"
    variance: float = 2.0
    covariance: float = -0.1
    truncation: Box | None = ((-1.0, 1.0), (-1.0, 1.0))
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("bivariate_normal", "truncated_bivariate_normal"):
            raise ValueError(f"unknown DGP kind {self.kind!r}")
        if not self.variance > 0 or self.variance**2 - self.covariance**2 <= 0:
            raise ValueError("covariance matrix is not positive definite")
        if self.kind == "truncated_bivariate_normal":
            if self.truncation is None:
                raise ValueError("truncated DGP needs a truncation box")
            for lo, hi in self.truncation:
                if not lo < hi:
                    raise ValueError("truncation bounds must satisfy lo < hi")
        elif self.truncation is not None:
            object.__setattr__(self, "truncation", None)

    @classmethod
    def table2(cls, seed: int = 0) -> "DgpSpec":
        return cls("truncated_bivariate_normal", 2.0, -0.1, ((-1.0, 1.0), (-1.0, 1.0)), seed)

    @classmethod
    def standard(cls, seed: int = 0) -> "DgpSpec":
        return cls("bivariate_normal", 1.0, 0.0, None, seed)

    @property
    def cond_sd(self) -> float:
        return math.sqrt(self.variance - self.covariance**2 / self.variance)

    def cond_mean(self, x: float) -> float:
        return self.covariance / self.variance * x


def rng_for(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for (seed, stream); the same pair always gives the same draws."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


def draw_dgp(spec: DgpSpec, n: int, stream: int = 0) -> DataSet:
    rng = rng_for(spec.seed, stream)
    cov = np.array([[spec.variance, spec.covariance], [spec.covariance, spec.variance]])
    chol = np.linalg.cholesky(cov)
    if spec.truncation is None:
        z = rng.standard_normal((n, 2)) @ chol.T
        return DataSet(z[:, 0], z[:, 1:])
    (ylo, yhi), (xlo, xhi) = spec.truncation
    kept: list[np.ndarray] = []
    have = drawn = 0
    batch = max(2 * n, 1024)
    while have < n:
        z = rng.standard_normal((batch, 2)) @ chol.T
        ok = (z[:, 0] >= ylo) & (z[:, 0] <= yhi) & (z[:, 1] >= xlo) & (z[:, 1] <= xhi)
        drawn += batch
        kept.append(z[ok])
        have += int(ok.sum())
        if drawn >= 100_000 and have / drawn < 1e-3:
            raise ValueError("truncation box has acceptance rate below 1e-3")
    z = np.concatenate(kept)[:n]
    return DataSet(z[:, 0], z[:, 1:])


def true_conditional(spec: DgpSpec, mu: int, y: float, x: float) -> float:
    """Exact mu-th y-derivative of F(y | x): CDF (0), PDF (1) or PDF slope (2)."""
    if mu not in (0, 1, 2):
        raise ValueError("mu must be 0, 1 or 2")
    m, s = spec.cond_mean(x), spec.cond_sd
    if spec.truncation is None:
        lo_mass, hi_mass = 0.0, 1.0
        ylo, yhi = -math.inf, math.inf
    else:
        ylo, yhi = spec.truncation[0]
        lo_mass, hi_mass = norm.cdf((ylo - m) / s), norm.cdf((yhi - m) / s)
    mass = hi_mass - lo_mass
    if y < ylo:
        return 0.0
    if y > yhi:
        return 1.0 if mu == 0 else 0.0
    z = (y - m) / s
    if mu == 0:
        return float((norm.cdf(z) - lo_mass) / mass)
    if mu == 1:
        return float(norm.pdf(z) / s / mass)
    return float(-z * norm.pdf(z) / s**2 / mass)
