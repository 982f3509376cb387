"""Alpha-mixing bounds and the error bound for threshold clustering.

All functions here are closed-form arithmetic.  Bounds above 1 are returned
as computed (see :class:`BoundReport.vacuous`) rather than clipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .errors import InvalidParameterError, UnsupportedSizeError

__all__ = [
    "MixingBound",
    "Algo2Params",
    "BoundReport",
    "gamma",
    "bosq_tail",
    "union_bound",
    "error_bound",
    "default_params",
]


class MixingBound:
    """Nonincreasing upper bound ``n -> alpha_n`` on the alpha-mixing coefficients.

    Values are evaluated lazily and cached.  A running minimum is applied, so
    the sequence is nonincreasing even if ``func`` is not.
    """

    def __init__(self, func: Callable[[int], float], name: str = "custom"):
        self._func = func
        self.name = name
        self._values = []

    @classmethod
    def zero(cls) -> "MixingBound":
        """Independent observations."""
        return cls(lambda n: 0.0, name="zero")

    @classmethod
    def geometric(cls, scale: float, rate: float) -> "MixingBound":
        """``min(1, scale * rate**n)``."""
        if scale < 0 or not 0 <= rate < 1:
            raise InvalidParameterError("need scale >= 0 and 0 <= rate < 1")
        return cls(lambda n: scale * rate**n, name=f"geometric:{scale!r},{rate!r}")

    @classmethod
    def total(cls, bounds) -> "MixingBound":
        """Bound for independent components: the sum of their coefficients."""
        bounds = list(bounds)
        return cls(lambda n: sum(b(n) for b in bounds), name="sum")

    def __call__(self, n: int) -> float:
        n = int(n)
        if n < 1:
            raise InvalidParameterError("mixing coefficients are indexed from 1")
        while len(self._values) < n:
            k = len(self._values) + 1
            v = min(1.0, max(0.0, float(self._func(k))))
            if self._values:
                v = min(v, self._values[-1])
            self._values.append(v)
        return self._values[n - 1]

    def __repr__(self) -> str:
        return f"MixingBound({self.name})"


@dataclass(frozen=True)
class Algo2Params:
    delta: float
    q: int
    m_max: int
    l_max: int
    b: int
    cell_cap: int | None = None

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise InvalidParameterError("delta must lie in (0, 1)")
        if self.q < 1 or self.m_max < 1 or self.l_max < 1 or self.b < 1:
            raise InvalidParameterError("q, m_max, l_max and b must be positive")

    def check_length(self, n: int):
        if not self.q <= n / 2:
            raise InvalidParameterError(f"q={self.q} exceeds n/2 for n={n}")
        if not self.m_max < n / 2:
            raise InvalidParameterError(f"m_max={self.m_max} must be below n/2 for n={n}")


def _alpha_index(numerator: int, q: int) -> int:
    return max(1, numerator // (2 * q))


def gamma(delta: float, q: int, n: int, m_max: int, ab: MixingBound) -> float:
    """``2 exp(-q delta^2 / 32) + 11 sqrt(1 + 4/delta) q alpha_{(n - 2 m_max) / 2q}``.

    The alpha index is floored and at least 1.
    """
    if not delta > 0:
        raise InvalidParameterError("delta must be positive")
    if q < 1:
        raise InvalidParameterError("q must be at least 1")
    if not n > 2 * m_max:
        raise InvalidParameterError("need n > 2 * m_max")
    alpha = ab(_alpha_index(n - 2 * m_max, q))
    return 2.0 * math.exp(-q * delta**2 / 32.0) + 11.0 * math.sqrt(1.0 + 4.0 / delta) * q * alpha


def bosq_tail(n: int, eps: float, q: int, ab: MixingBound) -> float:
    """Tail bound for ``P(|Y_1 + ... + Y_n| > n eps)``, zero-mean alpha-mixing ``Y``.

    ``4 exp(-q eps^2 / 8) + 22 sqrt(1 + 4/eps) q alpha(floor(n / 2q))``.
    """
    if not eps > 0:
        raise InvalidParameterError("eps must be positive")
    if not (1 <= q and 2 * q <= n):
        raise InvalidParameterError("need 1 <= q <= n/2")
    alpha = ab(_alpha_index(n, q))
    return 4.0 * math.exp(-q * eps**2 / 8.0) + 22.0 * math.sqrt(1.0 + 4.0 / eps) * q * alpha


def union_bound(N: int, m_max: int, l_max: int, b: int, gamma_delta: float, gamma_eps=None):
    """Union-bound terms ``2N(N+1) m l b gamma(delta)`` and ``2N(N+1) gamma(eps)``."""
    pairs = 2 * N * (N + 1)
    threshold_term = pairs * m_max * l_max * b * gamma_delta
    separation_term = None if gamma_eps is None else pairs * gamma_eps
    return threshold_term, separation_term


@dataclass
class BoundReport:
    threshold_term: float
    separation_term: float | None = None
    total: float | None = None
    params: dict = field(default_factory=dict)

    @property
    def vacuous(self) -> bool:
        value = self.threshold_term if self.total is None else self.total
        return value > 1.0

    def to_dict(self) -> dict:
        return {
            "threshold_term": self.threshold_term,
            "separation_term": self.separation_term,
            "total": self.total,
            "vacuous": self.vacuous,
            "params": self.params,
        }


def error_bound(N: int, p: Algo2Params, n: int, ab: MixingBound, eps_rho: float | None = None) -> BoundReport:
    """Probability bound on a wrong partition from threshold clustering.

    ``n`` is the shortest sample length.  ``eps_rho`` is the separation
    constant of the generating law; without it only the threshold term is
    reported.
    """
    if N < 1:
        raise InvalidParameterError("N must be positive")
    p.check_length(n)
    g_delta = gamma(p.delta, p.q, n, p.m_max, ab)
    g_eps = None
    if eps_rho is not None:
        g_eps = gamma(eps_rho, p.q, n, p.m_max, ab)
    # b can be astronomically large; keep the product in floating point
    b = float(p.b) if p.b.bit_length() < 1024 else math.inf
    threshold, separation = union_bound(N, p.m_max, p.l_max, b, g_delta, g_eps)
    total = None if separation is None else threshold + separation
    info = {
        "N": N,
        "n": n,
        "delta": p.delta,
        "q": p.q,
        "m_max": p.m_max,
        "l_max": p.l_max,
        "b": p.b,
        "gamma_delta": g_delta,
        "gamma_eps_rho": g_eps,
        "eps_rho": eps_rho,
        "mixing": ab.name,
    }
    return BoundReport(threshold, separation, total, info)


def default_params(n: int, ab: MixingBound | None = None, cell_cap: int | None = None) -> Algo2Params:
    """Parameter rule for threshold clustering at shortest length ``n``.

    ``m = l = min(floor(log2 n), floor(n/2) - 1)``, ``q = floor(sqrt n)``,
    ``delta = q**-0.25`` and ``b`` the number of level-``l`` dyadic cells of
    the unit ``m``-cube (or ``cell_cap`` if smaller).  ``ab`` does not enter
    the rule; it is accepted so callers can pass the bound they will later
    hand to :func:`error_bound`.
    """
    if n < 8:
        raise UnsupportedSizeError("default parameters need n >= 8")
    depth = min(n.bit_length() - 1, n // 2 - 1)
    q = math.isqrt(n)
    delta = q**-0.25
    cells = 2 ** (depth * depth)
    b = cells if cell_cap is None else min(cells, int(cell_cap))
    return Algo2Params(delta=delta, q=q, m_max=depth, l_max=depth, b=b, cell_cap=cell_cap)
