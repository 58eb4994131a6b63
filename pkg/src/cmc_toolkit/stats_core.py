"""Special functions and seeded random streams.

The regularized incomplete gamma function follows the usual split: a power
series below x = a + 1 and a Lentz continued fraction above it. The chi-square
CDF, survival function and quantile are built on top of it.
"""

import logging
import math
import sys
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import gammaln, ndtri

from .errors import ConvergenceError, DomainError

logger = logging.getLogger(__name__)

# A probability in [0, 1]; validated where it enters the library
Probability = float

_EPS = 1.0e-15
_TINY = sys.float_info.min / sys.float_info.epsilon
_MAX_ITER = 10_000


def check_probability(value: float, name: str = "probability") -> float:
    """Validate that ``value`` lies in [0, 1] and return it as a float."""
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")
    return value


@dataclass(frozen=True)
class ChiSquareSpec:
    """Degrees of freedom of a chi-square distribution."""

    df: int

    def __post_init__(self):
        if isinstance(self.df, bool) or int(self.df) != self.df or self.df < 1:
            raise DomainError(f"degrees of freedom must be a positive integer, got {self.df!r}")
        object.__setattr__(self, "df", int(self.df))


def _as_spec(spec: Union[ChiSquareSpec, int]) -> ChiSquareSpec:
    return spec if isinstance(spec, ChiSquareSpec) else ChiSquareSpec(spec)


# ============================================================================
# Gamma functions
# ============================================================================

def log_gamma(x: float) -> float:
    """
    Natural logarithm of the gamma function.

    Args:
        x: Positive real argument

    Returns:
        ln Gamma(x)

    Raises:
        DomainError: If x <= 0 or x is not finite
    """
    x = float(x)
    if not (x > 0.0) or not math.isfinite(x):
        raise DomainError(f"log_gamma requires a finite x > 0, got {x!r}")
    return float(gammaln(x))


def _gamma_series(a: float, x: float) -> float:
    """P(a, x) by its power series; accurate for x < a + 1."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * math.exp(-x + a * math.log(x) - log_gamma(a))
    raise ConvergenceError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _gamma_continued_fraction(a: float, x: float) -> float:
    """Q(a, x) by the modified Lentz continued fraction; accurate for x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return math.exp(-x + a * math.log(x) - log_gamma(a)) * h
    raise ConvergenceError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def _check_gamma_args(a: float, x: float) -> Tuple[float, float]:
    a = float(a)
    x = float(x)
    if not (a > 0.0) or not math.isfinite(a):
        raise DomainError(f"incomplete gamma requires a finite a > 0, got {a!r}")
    if not (x >= 0.0):
        raise DomainError(f"incomplete gamma requires x >= 0, got {x!r}")
    return a, x


def reg_gamma_lower(a: float, x: float) -> Probability:
    """
    Regularized lower incomplete gamma function P(a, x).

    Args:
        a: Shape, a > 0
        x: Upper integration limit, x >= 0

    Returns:
        P(a, x) in [0, 1]
    """
    a, x = _check_gamma_args(a, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        value = _gamma_series(a, x)
    else:
        value = 1.0 - _gamma_continued_fraction(a, x)
    return min(max(value, 0.0), 1.0)


def reg_gamma_upper(a: float, x: float) -> Probability:
    """
    Regularized upper incomplete gamma function Q(a, x) = 1 - P(a, x).

    Evaluated directly in the upper tail so that tiny values keep full
    relative precision.
    """
    a, x = _check_gamma_args(a, x)
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        value = 1.0 - _gamma_series(a, x)
    else:
        value = _gamma_continued_fraction(a, x)
    return min(max(value, 0.0), 1.0)


# ============================================================================
# Chi-square distribution
# ============================================================================

def chi2_cdf(x: float, spec: Union[ChiSquareSpec, int]) -> Probability:
    """P(chi2_df <= x)."""
    spec = _as_spec(spec)
    x = float(x)
    if not (x >= 0.0):
        raise DomainError(f"chi2_cdf requires x >= 0, got {x!r}")
    return reg_gamma_lower(spec.df / 2.0, x / 2.0)


def chi2_sf(x: float, spec: Union[ChiSquareSpec, int]) -> Probability:
    """P(chi2_df > x), computed without cancellation in the upper tail."""
    spec = _as_spec(spec)
    x = float(x)
    if not (x >= 0.0):
        raise DomainError(f"chi2_sf requires x >= 0, got {x!r}")
    return reg_gamma_upper(spec.df / 2.0, x / 2.0)


def _chi2_pdf(x: float, df: int) -> float:
    if x <= 0.0:
        return 0.0
    k = df / 2.0
    return math.exp((k - 1.0) * math.log(x) - x / 2.0 - k * math.log(2.0) - log_gamma(k))


def chi2_quantile(q: Probability, spec: Union[ChiSquareSpec, int]) -> float:
    """
    Inverse of the chi-square CDF.

    Bracketed Newton iteration on chi2_cdf(x) - q with a bisection fallback
    whenever a Newton step leaves the bracket.

    Args:
        q: Probability in [0, 1)
        spec: Degrees of freedom

    Returns:
        x >= 0 with chi2_cdf(x, df) = q

    Raises:
        DomainError: If q is outside [0, 1)
        ConvergenceError: If the iteration budget is exhausted
    """
    spec = _as_spec(spec)
    q = float(q)
    if not (0.0 <= q < 1.0):
        raise DomainError(f"chi2_quantile requires q in [0, 1), got {q!r}")
    if q == 0.0:
        return 0.0

    df = spec.df
    lo = 0.0
    hi = df + 20.0 * math.sqrt(2.0 * df) + 200.0
    while chi2_cdf(hi, spec) < q:
        lo = hi
        hi *= 2.0
        if hi > 1.0e12:
            raise ConvergenceError(f"could not bracket chi-square quantile for q={q!r}")

    # Wilson-Hilferty starting point
    z = float(ndtri(q))
    c = 2.0 / (9.0 * df)
    x = df * (1.0 - c + z * math.sqrt(c)) ** 3
    if not (lo < x < hi):
        x = 0.5 * (lo + hi)

    for _ in range(500):
        f = chi2_cdf(x, spec) - q
        if f == 0.0:
            return x
        if f < 0.0:
            lo = x
        else:
            hi = x

        pdf = _chi2_pdf(x, df)
        step = f / pdf if pdf > 0.0 else math.inf
        candidate = x - step
        if not (lo < candidate < hi):
            candidate = 0.5 * (lo + hi)
        if abs(candidate - x) <= 1.0e-14 * max(1.0, x) or hi - lo <= 1.0e-15 * max(1.0, x):
            return candidate
        x = candidate

    raise ConvergenceError(f"chi-square quantile did not converge for q={q!r}, df={df}")


# ============================================================================
# Random streams
# ============================================================================

class RngStream:
    """
    Seeded random stream.

    Wraps a numpy ``Generator`` on a PCG64 bit generator seeded through a
    ``SeedSequence``. Sub-streams derived from (seed, stream ids) use the
    SeedSequence spawn key, so they are independent of each other and of the
    order in which they are created.
    """

    def __init__(self, seed: int, stream_id: Union[int, Tuple[int, ...]] = ()):
        if isinstance(seed, bool) or int(seed) != seed or not (0 <= seed < 2 ** 64):
            raise DomainError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        key = (stream_id,) if isinstance(stream_id, int) else tuple(stream_id)
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self._generator = np.random.Generator(np.random.PCG64(sequence))

    def substream(self, stream_id: int) -> "RngStream":
        """Derive an independent stream identified by ``stream_id``."""
        return RngStream(self.seed, self.key + (int(stream_id),))

    @property
    def generator(self) -> np.random.Generator:
        """Underlying numpy generator (single owner)."""
        return self._generator

    def standard_normal(self, size: Optional[int] = None):
        """Standard normal draw(s)."""
        return self._generator.standard_normal(size)

    def uniform(self, size: Optional[int] = None):
        """Uniform draw(s) on the open interval (0, 1)."""
        draws = self._generator.random(size)
        if size is None:
            while draws == 0.0:
                draws = self._generator.random()
            return float(draws)
        zeros = draws == 0.0
        while np.any(zeros):
            draws[zeros] = self._generator.random(int(zeros.sum()))
            zeros = draws == 0.0
        return draws

    def bernoulli(self, p, size: Optional[int] = None):
        """Bernoulli draw(s) with success probability ``p``."""
        p_arr = np.asarray(p, dtype=float)
        if np.any(~((p_arr >= 0.0) & (p_arr <= 1.0))):
            raise DomainError("bernoulli requires p in [0, 1]")
        if size is None and p_arr.ndim == 0:
            return int(self._generator.random() < p_arr)
        shape = size if size is not None else p_arr.shape
        return (self._generator.random(shape) < p_arr).astype(np.int64)

    def poisson(self, mu, size: Optional[int] = None):
        """Poisson draw(s) with mean ``mu`` > 0."""
        mu_arr = np.asarray(mu, dtype=float)
        if np.any(~(mu_arr > 0.0)) or not np.all(np.isfinite(mu_arr)):
            raise DomainError("poisson requires a finite mu > 0")
        if size is None and mu_arr.ndim == 0:
            return int(self._generator.poisson(float(mu_arr)))
        return self._generator.poisson(mu_arr, size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, key={self.key})"


def standard_normal(stream: RngStream) -> float:
    """One standard normal draw from ``stream``."""
    return float(stream.standard_normal())


def bernoulli(stream: RngStream, p: Probability) -> int:
    """One Bernoulli(p) draw from ``stream``."""
    check_probability(p, "p")
    return stream.bernoulli(p)


def poisson(stream: RngStream, mu: float) -> int:
    """One Poisson(mu) draw from ``stream``."""
    return stream.poisson(mu)


def uniform(stream: RngStream) -> float:
    """One uniform draw on (0, 1) from ``stream``."""
    return stream.uniform()
