"""Confidence intervals, robust bias correction and uniform bands."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.stats import norm

from cdekit.covariance import CovarianceEstimate, vstat_covariance
from cdekit.estimator import CdeFit, YOrder, estimate_grid
from cdekit.model import DataSet, EstimationConfig, EvaluationSpec

SIM_CHUNK = 10_000


def normal_quantile(prob: float) -> float:
    return float(norm.ppf(prob))


def _as_matrix(cov: CovarianceEstimate | NDArray[np.float64]) -> NDArray[np.float64]:
    return cov.matrix if isinstance(cov, CovarianceEstimate) else np.atleast_2d(np.asarray(cov, dtype=np.float64))


def standard_ci(
    estimates: NDArray[np.float64], covariance: CovarianceEstimate | NDArray[np.float64], alpha: float
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """estimate ± z_{1-alpha/2} * se, elementwise."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    diag = np.diag(_as_matrix(covariance))
    if np.any(diag < -1e-12 * max(1.0, float(np.max(np.abs(diag), initial=0.0)))):
        raise ValueError("covariance has a negative diagonal entry")
    se = np.sqrt(np.clip(diag, 0.0, None))
    z = normal_quantile(1.0 - alpha / 2.0)
    est = np.asarray(estimates, dtype=np.float64)
    return est - z * se, est + z * se


@dataclass(frozen=True)
class BandCritical:
    value: float
    sims: int
    seed: int
    studentized: bool = True


def gaussian_draws(
    covariance: CovarianceEstimate | NDArray[np.float64], sims: int, seed: int
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Draws of the studentized Gaussian process on the grid.

    Returns a sims x m' matrix for the m' coordinates with positive variance,
    plus the mask of those coordinates. Chunks of fixed size use their own
    sub-seed, so results do not depend on how the work is split.
    """
    mat = _as_matrix(covariance)
    sd = np.sqrt(np.clip(np.diag(mat), 0.0, None))
    keep = sd > 0
    if not keep.any():
        raise ValueError("covariance is identically zero")
    corr = mat[np.ix_(keep, keep)] / np.outer(sd[keep], sd[keep])
    vals, vecs = np.linalg.eigh(0.5 * (corr + corr.T))
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    k = int(keep.sum())
    out = np.empty((sims, k))
    for c, start in enumerate(range(0, sims, SIM_CHUNK)):
        stop = min(sims, start + SIM_CHUNK)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, c])))
        out[start:stop] = rng.standard_normal((stop - start, k)) @ root
    return out, keep


def sup_quantile(draws: NDArray[np.float64], alpha: float) -> float:
    sup = np.max(np.abs(draws), axis=1)
    return float(np.quantile(sup, 1.0 - alpha, method="inverted_cdf"))


def band_critical_value(
    covariance: CovarianceEstimate | NDArray[np.float64], alpha: float, sims: int, seed: int
) -> BandCritical:
    """(1 - alpha) quantile of max_g |Z_g| for Z Gaussian with the estimates' correlation.

    With a single non-degenerate coordinate the quantile is known exactly and
    no simulation is run.
    """
    if sims < 1:
        raise ValueError("sims must be positive")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    diag = np.diag(_as_matrix(covariance))
    if np.count_nonzero(diag > 0) == 1:
        return BandCritical(normal_quantile(1.0 - alpha / 2.0), sims, seed)
    draws, _ = gaussian_draws(covariance, sims, seed)
    return BandCritical(sup_quantile(draws, alpha), sims, seed)


def uniform_band(
    estimates: NDArray[np.float64],
    covariance: CovarianceEstimate | NDArray[np.float64],
    alpha: float,
    sims: int,
    seed: int,
) -> tuple[NDArray[np.float64], NDArray[np.float64], BandCritical]:
    crit = band_critical_value(covariance, alpha, sims, seed)
    se = np.sqrt(np.clip(np.diag(_as_matrix(covariance)), 0.0, None))
    est = np.asarray(estimates, dtype=np.float64)
    return est - crit.value * se, est + crit.value * se, crit


def _level_centres(data: DataSet, spec: EvaluationSpec, config: EstimationConfig, fit: CdeFit):
    if not any(config.nu_for(data.d)):
        return fit.estimates
    level = estimate_grid(data, spec, EstimationConfig(mu=config.mu, p=config.p, q=config.q, kernel=config.kernel))
    return level.estimates


def _fill(data: DataSet, fit: CdeFit, seed: int, yo: YOrder) -> tuple:
    cfg = fit.config
    ok = fit.ok
    centres = _level_centres(data, fit.spec, cfg, fit)
    cov = vstat_covariance(data, fit.a, fit.b, fit.estimates, centres, yo)
    mat = cov.matrix.copy()
    mat[~ok, :] = np.nan
    mat[:, ~ok] = np.nan
    lo, hi = standard_ci(np.where(ok, fit.estimates, np.nan), cov, cfg.alpha)
    se = np.where(ok, cov.se, np.nan)
    m = fit.m
    band_lo = np.full(m, np.nan)
    band_hi = np.full(m, np.nan)
    crit = None
    if ok.any() and np.any(cov.se[ok] > 0):
        sub = cov.matrix[np.ix_(ok, ok)]
        bl, bh, bc = uniform_band(fit.estimates[ok], sub, cfg.alpha, cfg.band_sims, seed)
        band_lo[ok], band_hi[ok], crit = bl, bh, bc.value
    return se, lo, hi, mat, crit, band_lo, band_hi


def rbc_fit(data: DataSet, spec: EvaluationSpec, config: EstimationConfig, workers: int = 1) -> CdeFit:
    """Refit with both polynomial orders raised by one at the same bandwidths."""
    return estimate_grid(data, spec, config.with_orders(config.p + 1, config.q + 1), workers=workers)


def infer(
    data: DataSet,
    spec: EvaluationSpec,
    config: EstimationConfig,
    seed: int = 0,
    rbc: bool = True,
    workers: int = 1,
) -> CdeFit:
    """Point estimates, standard errors, pointwise CIs and uniform bands, standard and RBC."""
    yo = YOrder.of(data.y)
    fit = estimate_grid(data, spec, config, workers=workers)
    fit.se, fit.ci_lower, fit.ci_upper, fit.covariance, fit.band_critical, fit.band_lower, fit.band_upper = _fill(
        data, fit, seed, yo
    )
    if rbc:
        rf = rbc_fit(data, spec, config, workers=workers)
        if rf.failures:
            warnings.warn(
                f"robust bias-corrected fit failed at {len(rf.failures)} grid point(s)", stacklevel=2
            )
        fit.rbc_estimates = rf.estimates
        fit.rbc_failures = rf.failures
        (fit.rbc_se, fit.rbc_ci_lower, fit.rbc_ci_upper, fit.rbc_covariance, fit.rbc_band_critical,
         fit.rbc_band_lower, fit.rbc_band_upper) = _fill(data, rf, seed, yo)
    return fit


def wald_statistic(estimate: float, null: float, se: float) -> float:
    return (estimate - null) / se if se > 0 else math.nan
