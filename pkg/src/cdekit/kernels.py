"""Second-order compact kernels on [-1, 1] and the product kernel."""

from __future__ import annotations

import enum
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike, NDArray


class KernelFamily(str, enum.Enum):
    EPANECHNIKOV = "epanechnikov"
    UNIFORM = "uniform"
    TRIANGULAR = "triangular"

    @classmethod
    def parse(cls, name: "str | KernelFamily") -> "KernelFamily":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown kernel {name!r}; choose from {choices}") from None


def kernel_value(family: KernelFamily, u: ArrayLike) -> NDArray[np.float64] | float:
    """Evaluate the kernel at ``u`` (scalar or array). Zero outside [-1, 1]."""
    ua = np.asarray(u, dtype=np.float64)
    inside = np.abs(ua) <= 1.0
    if family is KernelFamily.EPANECHNIKOV:
        out = np.where(inside, 0.75 * (1.0 - ua * ua), 0.0)
    elif family is KernelFamily.UNIFORM:
        out = np.where(inside, 0.5, 0.0)
    elif family is KernelFamily.TRIANGULAR:
        out = np.where(inside, 1.0 - np.abs(ua), 0.0)
    else:  # pragma: no cover
        raise ValueError(family)
    if out.ndim == 0:
        return float(out)
    return out


def scaled_kernel(family: KernelFamily, u: ArrayLike, h: float) -> NDArray[np.float64]:
    """K(u/h)/h, vectorised."""
    return np.asarray(kernel_value(family, np.asarray(u, dtype=np.float64) / h)) / h


def product_kernel(family: KernelFamily, u: ArrayLike, h: float) -> NDArray[np.float64] | float:
    """prod_k K(u_k/h)/h over the last axis of ``u``.

    A 1-d ``u`` is one d-vector; a 2-d ``u`` is n rows of d-vectors.
    """
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    ua = np.asarray(u, dtype=np.float64)
    vals = np.prod(scaled_kernel(family, ua, h), axis=-1)
    if np.ndim(vals) == 0:
        return float(vals)
    return vals


@lru_cache(maxsize=64)
def _gauss_legendre(k: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    return np.polynomial.legendre.leggauss(k)


def moment_integrals(family: KernelFamily, lo: float, hi: float, max_power: int) -> NDArray[np.float64]:
    """Integrals of u^k K(u) over [lo, hi] ∩ [-1, 1] for k = 0..max_power.

    Gauss-Legendre on each polynomial piece of the kernel, so the result is
    exact up to rounding.
    """
    lo, hi = max(lo, -1.0), min(hi, 1.0)
    out = np.zeros(max_power + 1)
    if hi <= lo:
        return out
    pieces = [(lo, hi)]
    if family is KernelFamily.TRIANGULAR and lo < 0.0 < hi:
        pieces = [(lo, 0.0), (0.0, hi)]
    nodes, weights = _gauss_legendre(max_power // 2 + 3)
    powers = np.arange(max_power + 1)
    for a, b in pieces:
        t = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        w = 0.5 * (b - a) * weights * np.asarray(kernel_value(family, t))
        out += (t[None, :] ** powers[:, None]) @ w
    return out
