"""Maximum-likelihood fitting of submodels for Gaussian, binomial and Poisson regression."""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit, gammaln, xlogy

from .errors import (
    DataValidationError,
    DegenerateFitError,
    InvalidResponseError,
    NumericalOverflowError,
    SingularDesignError,
    UsageError,
)

logger = logging.getLogger(__name__)

INTERCEPT_NAME = "(Intercept)"

IRLS_MAX_ITER = 50
IRLS_MAX_HALVINGS = 10
IRLS_SCORE_TOL = 1.0e-9
SEPARATION_BOUND = 30.0
RANK_TOL = 1.0e-10


class Family(str, Enum):
    """Response distribution; every family uses its canonical link."""

    GAUSSIAN = "gaussian"
    BINOMIAL = "binomial"
    POISSON = "poisson"

    @classmethod
    def parse(cls, value: Any) -> "Family":
        """Parse a family tag, raising UsageError for unknown tags."""
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            choices = ", ".join(f.value for f in cls)
            raise UsageError(f"Unknown family '{value}' (expected one of: {choices})") from None

    def mean(self, eta: np.ndarray) -> np.ndarray:
        """Inverse link."""
        if self is Family.GAUSSIAN:
            return eta
        if self is Family.BINOMIAL:
            return expit(eta)
        with np.errstate(over="ignore"):
            return np.exp(eta)

    def variance(self, mu: np.ndarray) -> np.ndarray:
        """Variance function evaluated at the mean."""
        if self is Family.GAUSSIAN:
            return np.ones_like(mu)
        if self is Family.BINOMIAL:
            return mu * (1.0 - mu)
        return mu.copy()

    def link(self, mu: float) -> float:
        """Canonical link of a scalar mean."""
        if self is Family.GAUSSIAN:
            return float(mu)
        if self is Family.BINOMIAL:
            return math.log(mu / (1.0 - mu))
        return math.log(mu)


def validate_response(y: np.ndarray, family: Family) -> None:
    """
    Check that response values are admissible for ``family``.

    Raises:
        InvalidResponseError: Naming the first offending (1-based) row
    """
    if family is Family.BINOMIAL:
        bad = np.flatnonzero((y != 0.0) & (y != 1.0))
        if bad.size:
            row = int(bad[0]) + 1
            raise InvalidResponseError(
                f"binomial response must be 0 or 1; row {row} has value {y[bad[0]]!r}"
            )
        if y.min() == y.max():
            raise InvalidResponseError(
                "binomial response contains a single class; the intercept-only MLE does not exist"
            )
    elif family is Family.POISSON:
        bad = np.flatnonzero((y < 0.0) | (y != np.floor(y)))
        if bad.size:
            row = int(bad[0]) + 1
            raise InvalidResponseError(
                f"poisson response must be a non-negative integer; row {row} has value {y[bad[0]]!r}"
            )
        if not np.any(y > 0.0):
            raise InvalidResponseError(
                "poisson response is identically zero; the intercept-only MLE does not exist"
            )


# ============================================================================
# Model identifiers
# ============================================================================

@dataclass(frozen=True)
class ModelId:
    """
    Submodel identified by a bitmask over the p non-intercept predictors.

    Bit i (least significant first) stands for predictor x_{i+1}; the intercept
    is always included.
    """

    mask: int
    p: int

    def __post_init__(self):
        if self.p < 0 or not 0 <= self.mask < (1 << self.p):
            raise UsageError(f"mask {self.mask} is not a subset of {self.p} predictors")

    @classmethod
    def from_indices(cls, indices: Iterable[int], p: int) -> "ModelId":
        """Build from 0-based predictor indices."""
        mask = 0
        for i in indices:
            if not 0 <= i < p:
                raise UsageError(f"predictor index {i} out of range for p={p}")
            mask |= 1 << i
        return cls(mask, p)

    @classmethod
    def empty(cls, p: int) -> "ModelId":
        """Intercept-only model."""
        return cls(0, p)

    @classmethod
    def full(cls, p: int) -> "ModelId":
        """Model with every predictor."""
        return cls((1 << p) - 1, p)

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")

    @property
    def indices(self) -> Tuple[int, ...]:
        """0-based predictor indices in increasing order."""
        return tuple(i for i in range(self.p) if (self.mask >> i) & 1)

    @property
    def columns(self) -> Tuple[int, ...]:
        """Design-matrix columns, intercept first."""
        return (0,) + tuple(i + 1 for i in self.indices)

    @property
    def bits(self) -> str:
        """Membership string with x1 first, e.g. '1010'."""
        return "".join("1" if (self.mask >> i) & 1 else "0" for i in range(self.p))

    def sort_key(self) -> Tuple[int, Tuple[int, ...]]:
        """Size first, then lexicographic order of the index tuple."""
        return (self.size, self.indices)

    def contains(self, other: "ModelId") -> bool:
        """True if every predictor of ``other`` is in this model."""
        return other.mask & ~self.mask == 0

    def names(self, names: Sequence[str]) -> List[str]:
        """Predictor names of this model, given the design column names."""
        return [names[i + 1] for i in self.indices]

    def label(self, names: Optional[Sequence[str]] = None) -> str:
        if names is None:
            names = [INTERCEPT_NAME] + [f"x{i + 1}" for i in range(self.p)]
        return "{" + ",".join(self.names(names)) + "}"


# ============================================================================
# Data
# ============================================================================

def _rank_check(Xs: np.ndarray, names: Sequence[str]) -> None:
    """Raise SingularDesignError if the columns of ``Xs`` are dependent."""
    r = np.linalg.qr(Xs, mode="r")
    diag = np.abs(np.diag(r))
    tol = RANK_TOL * diag.max() if diag.size else 0.0
    bad = np.flatnonzero(diag <= tol)
    if bad.size:
        offending = tuple(names[i] for i in bad)
        raise SingularDesignError(
            f"design is rank deficient; dependent column(s): {', '.join(offending)}",
            columns=offending,
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Response vector, full design matrix (intercept first) and family tag.

    Arrays are copied and made read-only so a Dataset can be shared between
    threads.
    """

    y: np.ndarray
    X: np.ndarray
    family: Family
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        X = np.array(self.X, dtype=float)
        family = Family.parse(self.family)
        if X.ndim != 2:
            raise DataValidationError("design matrix must be two-dimensional")
        n, width = X.shape
        if y.shape[0] != n:
            raise DataValidationError(f"response has {y.shape[0]} rows but design has {n}")
        if width < 1 or not np.all(X[:, 0] == 1.0):
            raise DataValidationError("first design column must be the all-ones intercept")
        if n <= width:
            raise DataValidationError(
                f"need n > p + 1 observations; got n={n} with p + 1={width}"
            )
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataValidationError("data contain non-finite values")

        names = tuple(self.names) if self.names else (
            (INTERCEPT_NAME,) + tuple(f"x{i}" for i in range(1, width))
        )
        if len(names) != width:
            raise DataValidationError(f"expected {width} column names, got {len(names)}")

        validate_response(y, family)
        _rank_check(X, names)

        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "names", names)

    @classmethod
    def from_predictors(
        cls,
        y: Any,
        Z: Any,
        family: Any,
        predictor_names: Optional[Sequence[str]] = None,
    ) -> "Dataset":
        """Build a Dataset from a predictor matrix without intercept column."""
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z.reshape(-1, 1)
        X = np.column_stack([np.ones(Z.shape[0]), Z])
        names: Tuple[str, ...] = ()
        if predictor_names is not None:
            names = (INTERCEPT_NAME,) + tuple(predictor_names)
        return cls(y, X, family, names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1] - 1

    @cached_property
    def fingerprint(self) -> str:
        """Content hash identifying the data a fit was computed on."""
        digest = hashlib.sha256()
        digest.update(self.family.value.encode())
        digest.update(np.ascontiguousarray(self.y).tobytes())
        digest.update(np.ascontiguousarray(self.X).tobytes())
        return digest.hexdigest()

    def model(self, predictors: Iterable[str]) -> ModelId:
        """ModelId for a list of predictor names."""
        lookup = {name: i - 1 for i, name in enumerate(self.names) if i > 0}
        indices = []
        for name in predictors:
            if name not in lookup:
                raise UsageError(f"unknown predictor '{name}'")
            indices.append(lookup[name])
        return ModelId.from_indices(indices, self.p)


# ============================================================================
# Fit results
# ============================================================================

@dataclass(frozen=True, eq=False)
class FitResult:
    """Maximum-likelihood fit of one submodel, embedded in the full coefficient vector."""

    model: ModelId
    beta: np.ndarray
    loglik: float
    deviance: float
    rss: Optional[float]
    iterations: int
    converged: bool
    score_norm: float
    family: Family
    n: int
    fingerprint: str
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    def coefficients(self, names: Sequence[str]) -> Dict[str, float]:
        """Included coefficients keyed by column name."""
        return {names[c]: float(self.beta[c]) for c in self.model.columns}

    def to_dict(self, names: Sequence[str]) -> Dict[str, Any]:
        return {
            "model": self.model.names(names),
            "size": self.model.size,
            "coefficients": self.coefficients(names),
            "loglik": float(self.loglik),
            "deviance": float(self.deviance),
            "rss": None if self.rss is None else float(self.rss),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "score_norm": float(self.score_norm),
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class WaldStat:
    """Wald statistic of a coefficient vector relative to the full-model MLE."""

    value: float

    def __float__(self) -> float:
        return self.value


def _gaussian_loglik(rss: float, n: int) -> float:
    return -0.5 * n * (math.log(2.0 * math.pi) + math.log(rss / n) + 1.0)


def _degenerate_rss(rss: float, y: np.ndarray) -> bool:
    scale = max(1.0, float(np.max(np.abs(y))))
    return rss <= y.shape[0] * (1.0e-14 * scale) ** 2


def _glm_loglik(family: Family, y: np.ndarray, eta: np.ndarray) -> float:
    """Binomial/Poisson log-likelihood; -inf when the predictor overflows."""
    with np.errstate(over="ignore", invalid="ignore"):
        if family is Family.BINOMIAL:
            value = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
        else:
            value = float(np.sum(y * eta - np.exp(eta) - gammaln(y + 1.0)))
    return value if math.isfinite(value) else -math.inf


def _check_beta(data: Dataset, beta: Any) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.shape[0] != data.p + 1:
        raise UsageError(f"coefficient vector must have length {data.p + 1}, got {beta.shape[0]}")
    if not np.all(np.isfinite(beta)):
        raise UsageError("coefficient vector must be finite")
    return beta


def log_likelihood(data: Dataset, beta: Any) -> float:
    """
    Log-likelihood of a full-length coefficient vector.

    Gaussian uses the profiled variance RSS(beta)/n.

    Raises:
        NumericalOverflowError: If the linear predictor or mean is not finite
        DegenerateFitError: If a Gaussian beta interpolates the response
    """
    beta = _check_beta(data, beta)
    with np.errstate(over="ignore", invalid="ignore"):
        eta = data.X @ beta
    if not np.all(np.isfinite(eta)):
        raise NumericalOverflowError("linear predictor is not finite")

    y = data.y
    if data.family is Family.GAUSSIAN:
        resid = y - eta
        rss = float(resid @ resid)
        if rss == 0.0:
            raise DegenerateFitError("RSS is zero; the profiled likelihood is unbounded")
        return _gaussian_loglik(rss, data.n)
    if data.family is Family.BINOMIAL:
        return float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    with np.errstate(over="ignore"):
        mu = np.exp(eta)
    if not np.all(np.isfinite(mu)):
        raise NumericalOverflowError("Poisson mean overflows")
    return float(np.sum(y * eta - mu - gammaln(y + 1.0)))


def score_vector(data: Dataset, beta: Any) -> np.ndarray:
    """Gradient of ``log_likelihood`` with respect to the full coefficient vector."""
    beta = _check_beta(data, beta)
    eta = data.X @ beta
    if data.family is Family.GAUSSIAN:
        resid = data.y - eta
        rss = float(resid @ resid)
        if rss == 0.0:
            raise DegenerateFitError("RSS is zero; the profiled likelihood is unbounded")
        return data.X.T @ resid * (data.n / rss)
    mu = data.family.mean(eta)
    if not np.all(np.isfinite(mu)):
        raise NumericalOverflowError("mean is not finite")
    return data.X.T @ (data.y - mu)


def _deviance(family: Family, y: np.ndarray, eta: np.ndarray, loglik: float) -> float:
    if family is Family.BINOMIAL:
        # saturated log-likelihood is 0 for 0/1 responses
        return -2.0 * loglik
    mu = np.exp(eta)
    return float(2.0 * np.sum(xlogy(y, y) - y * eta - (y - mu)))


def _check_model(data: Dataset, model: ModelId) -> None:
    if model.p != data.p:
        raise UsageError(f"model is defined over {model.p} predictors but data have {data.p}")


def _fit_gaussian(data: Dataset, model: ModelId, Xs: np.ndarray):
    q, r = np.linalg.qr(Xs)
    diag = np.abs(np.diag(r))
    bad = np.flatnonzero(diag <= RANK_TOL * diag.max())
    if bad.size:
        offending = tuple(data.names[model.columns[i]] for i in bad)
        raise SingularDesignError(
            f"model {model.label(data.names)} is rank deficient; dependent column(s): "
            f"{', '.join(offending)}",
            columns=offending,
        )
    coef = solve_triangular(r, q.T @ data.y)
    resid = data.y - Xs @ coef
    rss = float(resid @ resid)
    if _degenerate_rss(rss, data.y):
        raise DegenerateFitError(
            f"model {model.label(data.names)} interpolates the response (RSS = 0); "
            "likelihood ratios are undefined"
        )
    loglik = _gaussian_loglik(rss, data.n)
    score_norm = float(np.linalg.norm(Xs.T @ resid) * data.n / rss)
    return coef, loglik, rss, 0, True, score_norm, ()


def _fit_irls(data: Dataset, model: ModelId, Xs: np.ndarray):
    family = data.family
    y = data.y
    _rank_check(Xs, [data.names[c] for c in model.columns])

    coef = np.zeros(Xs.shape[1])
    coef[0] = family.link(float(np.mean(y)))
    eta = Xs @ coef
    loglik = _glm_loglik(family, y, eta)

    iterations = 0
    converged = False
    while True:
        mu = family.mean(eta)
        score = Xs.T @ (y - mu)
        score_norm = float(np.linalg.norm(score))
        if score_norm <= IRLS_SCORE_TOL * max(1.0, abs(loglik)):
            converged = True
            break
        if iterations >= IRLS_MAX_ITER:
            break

        w = np.maximum(family.variance(mu), 1.0e-300)
        sw = np.sqrt(w)
        working = sw * eta + (y - mu) / sw
        target, *_ = np.linalg.lstsq(sw[:, None] * Xs, working, rcond=None)
        direction = target - coef

        step = 1.0
        accepted = False
        for _ in range(IRLS_MAX_HALVINGS + 1):
            candidate = coef + step * direction
            cand_eta = Xs @ candidate
            cand_loglik = _glm_loglik(family, y, cand_eta)
            if cand_loglik >= loglik - 1.0e-12 * max(1.0, abs(loglik)):
                accepted = True
                break
            step *= 0.5
        iterations += 1
        if not accepted:
            logger.debug(f"IRLS step-halving exhausted for {model.label(data.names)}")
            break
        coef, eta, loglik = candidate, cand_eta, cand_loglik

    warnings: List[str] = []
    label = model.label(data.names)
    if family is Family.BINOMIAL and np.max(np.abs(coef)) > SEPARATION_BOUND:
        # the score vanishes along a diverging path, so a small score is not convergence
        converged = False
        message = (
            f"IRLS for {label} stopped with |beta| > {SEPARATION_BOUND:g}; "
            "complete or quasi-complete separation, the MLE does not exist"
        )
        logger.warning(message)
        warnings.append(message)
    elif not converged:
        if np.max(np.abs(coef)) > SEPARATION_BOUND:
            message = (
                f"IRLS for {label} did not converge and |beta| > {SEPARATION_BOUND:g}; "
                "possible complete separation"
            )
        else:
            message = f"IRLS for {label} did not converge after {iterations} iterations"
        logger.warning(message)
        warnings.append(message)

    deviance = _deviance(family, y, eta, loglik)
    return coef, loglik, None, iterations, converged, score_norm, tuple(warnings), deviance


def fit_submodel(data: Dataset, model: ModelId) -> FitResult:
    """
    Maximum-likelihood fit of ``model`` on ``data``.

    Gaussian models are solved exactly by QR least squares and report the
    profiled log-likelihood. Binomial and Poisson models use IRLS with
    step-halving.

    Args:
        data: Dataset to fit
        model: Submodel to fit

    Returns:
        FitResult with coefficients embedded in the (p+1)-vector

    Raises:
        SingularDesignError: If the selected columns are rank deficient
        DegenerateFitError: If a Gaussian model interpolates the response
    """
    _check_model(data, model)
    cols = list(model.columns)
    Xs = data.X[:, cols]

    if data.family is Family.GAUSSIAN:
        coef, loglik, rss, iterations, converged, score_norm, warnings = _fit_gaussian(
            data, model, Xs
        )
        deviance = rss
    else:
        coef, loglik, rss, iterations, converged, score_norm, warnings, deviance = _fit_irls(
            data, model, Xs
        )

    beta = np.zeros(data.p + 1)
    beta[cols] = coef
    beta.setflags(write=False)
    return FitResult(
        model=model,
        beta=beta,
        loglik=float(loglik),
        deviance=float(deviance),
        rss=rss,
        iterations=iterations,
        converged=converged,
        score_norm=score_norm,
        family=data.family,
        n=data.n,
        fingerprint=data.fingerprint,
        warnings=warnings,
    )


def wald_stat(data: Dataset, beta: Any, full_fit: FitResult) -> WaldStat:
    """
    Wald statistic (beta - beta_hat)' X'X (beta - beta_hat) / sigma_hat^2.

    sigma_hat^2 is the full-model mean squared error RSS/(n - p - 1).

    Raises:
        UsageError: For non-Gaussian data or a fit that is not the full model
        DegenerateFitError: If sigma_hat^2 is zero
    """
    if data.family is not Family.GAUSSIAN:
        raise UsageError("the Wald statistic is defined for the Gaussian family only")
    if full_fit.fingerprint != data.fingerprint or full_fit.model != ModelId.full(data.p):
        raise UsageError("wald_stat requires the full-model fit on the same dataset")
    beta = _check_beta(data, beta)
    sigma2 = float(full_fit.rss) / (data.n - data.p - 1)
    if sigma2 <= 0.0:
        raise DegenerateFitError("full-model residual variance is zero")
    diff = data.X @ (beta - full_fit.beta)
    return WaldStat(max(float(diff @ diff) / sigma2, 0.0))
