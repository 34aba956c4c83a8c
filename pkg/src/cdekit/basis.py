"""Multi-index sets and the scaled polynomial bases used by both stages."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike, NDArray


def basis_dimension(d: int, order: int) -> int:
    """Number of monomials in d variables with total degree ≤ order."""
    if d < 1 or order < 0:
        raise ValueError("need d ≥ 1 and order ≥ 0")
    # multiplicative binomial C(d+order, order)
    out = 1
    for k in range(1, min(d, order) + 1):
        out = out * (max(d, order) + k) // k
    return out


@lru_cache(maxsize=None)
def _graded_lex(d: int, order: int) -> tuple[tuple[int, ...], ...]:
    out: list[tuple[int, ...]] = []
    for deg in range(order + 1):
        block = [c for c in itertools.product(range(deg, -1, -1), repeat=d) if sum(c) == deg]
        # product() with descending ranges already yields lexicographically descending tuples
        out.extend(block)
    return tuple(out)


@dataclass(frozen=True)
class MultiIndexSet:
    """All multi-indices of dimension d with |nu| ≤ order, graded then lexicographic.

    Within one degree the first coordinate varies slowest and descends, so
    for d=2, order=2 the ordering is (0,0), (1,0), (0,1), (2,0), (1,1), (0,2).
    """

    d: int
    order: int

    def __post_init__(self) -> None:
        if self.d < 1 or self.order < 0:
            raise ValueError("need d ≥ 1 and order ≥ 0")

    @property
    def indices(self) -> tuple[tuple[int, ...], ...]:
        return _graded_lex(self.d, self.order)

    def __len__(self) -> int:
        return len(self.indices)

    def degree_block(self, degree: int) -> list[int]:
        return [k for k, nu in enumerate(self.indices) if sum(nu) == degree]

    @property
    def exponents(self) -> NDArray[np.int64]:
        return np.asarray(self.indices, dtype=np.int64).reshape(len(self), self.d)

    @property
    def factorials(self) -> NDArray[np.float64]:
        return np.array([math.prod(math.factorial(v) for v in nu) for nu in self.indices], dtype=np.float64)


def unit_vector_index(ms: MultiIndexSet, nu: ArrayLike) -> int:
    nu_t = tuple(int(v) for v in np.atleast_1d(nu))
    if len(nu_t) != ms.d:
        raise ValueError(f"multi-index {nu_t} has wrong length for d={ms.d}")
    if sum(nu_t) > ms.order:
        raise ValueError(f"multi-index {nu_t} has degree above {ms.order}")
    return ms.indices.index(nu_t)


def poly_vector_x(ms: MultiIndexSet, u: ArrayLike) -> NDArray[np.float64]:
    """Entries u^nu / nu! in graded-lex order. Rows of a 2-d ``u`` give rows of the result."""
    ua = np.asarray(u, dtype=np.float64)
    single = ua.ndim == 1
    ua = np.atleast_2d(ua)
    if ua.shape[1] != ms.d:
        raise ValueError(f"expected vectors of length {ms.d}")
    out = np.ones((ua.shape[0], len(ms)))
    exps = ms.exponents
    for k in range(ms.d):
        col = ua[:, k]
        pw = col[:, None] ** np.arange(ms.order + 1)[None, :]
        out *= pw[:, exps[:, k]]
    out /= ms.factorials
    return out[0] if single else out


def poly_vector_y(p: int, u: ArrayLike) -> NDArray[np.float64]:
    """Entries u^k / k! for k = 0..p; vectorised over a 1-d ``u``."""
    ua = np.asarray(u, dtype=np.float64)
    fact = np.array([math.factorial(k) for k in range(p + 1)], dtype=np.float64)
    out = ua[..., None] ** np.arange(p + 1) / fact
    return out
