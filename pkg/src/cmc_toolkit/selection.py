"""Constrained minimum criterion and information-criterion baselines.

Both kinds of selection work on the maximum likelihood set: the best model of
size j is the size-j model with the smallest likelihood ratio and also the one
with the smallest size-penalized criterion, so scanning M*_0..M*_k is
equivalent to scanning all 2^p models.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .config import DEFAULT_GAMMA
from .errors import DomainError, InternalConsistencyError, UsageError
from .glm_fit import Dataset, Family, FitResult, ModelId
from .model_space import MLSet, SearchBudget, ml_set
from .stats_core import chi2_quantile, chi2_sf

logger = logging.getLogger(__name__)

# Floating-point noise allowed below zero before a likelihood ratio is an error
LAMBDA_ABS_TOL = 1.0e-8
LAMBDA_REL_TOL = 1.0e-12


# ============================================================================
# Alpha modes and criteria
# ============================================================================

@dataclass(frozen=True)
class Fixed:
    """Fixed confidence level 1 - alpha."""

    alpha: float

    def __post_init__(self):
        alpha = float(self.alpha)
        if not 0.0 < alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        object.__setattr__(self, "alpha", alpha)

    @property
    def label(self) -> str:
        return f"alpha={self.alpha!r}"


@dataclass(frozen=True)
class Schedule:
    """Sample-size dependent level alpha_n with chi-square threshold n**gamma."""

    gamma: float

    def __post_init__(self):
        gamma = float(self.gamma)
        if not 0.0 < gamma < 1.0:
            raise DomainError(f"gamma must lie in (0, 1), got {self.gamma!r}")
        object.__setattr__(self, "gamma", gamma)

    @property
    def label(self) -> str:
        return f"gamma={self.gamma!r}"


AlphaMode = Union[Fixed, Schedule]


class Criterion(str, Enum):
    CMC = "cmc"
    AIC = "aic"
    BIC = "bic"
    HQ = "hq"
    AICC = "aicc"


@dataclass(frozen=True)
class CriterionSpec:
    """A criterion together with its alpha mode (CMC only)."""

    criterion: Criterion
    mode: Optional[AlphaMode] = None

    def __post_init__(self):
        if self.criterion is Criterion.CMC and self.mode is None:
            object.__setattr__(self, "mode", Schedule(DEFAULT_GAMMA))
        if self.criterion is not Criterion.CMC and self.mode is not None:
            raise UsageError(f"{self.criterion.value} takes no alpha mode")

    @property
    def label(self) -> str:
        if self.criterion is Criterion.CMC:
            return f"cmc:{self.mode.label}"
        return self.criterion.value

    @property
    def alpha_mode(self) -> str:
        """Mode column of reports: 'fixed', 'schedule' or 'none'."""
        if isinstance(self.mode, Fixed):
            return "fixed"
        if isinstance(self.mode, Schedule):
            return "schedule"
        return "none"

    @classmethod
    def parse(cls, text: Any) -> "CriterionSpec":
        """
        Parse 'cmc:gamma=G', 'cmc:alpha=A', 'cmc', 'aic', 'bic', 'hq' or 'aicc'.

        Also accepts an existing CriterionSpec, a Fixed/Schedule mode or a
        Criterion.
        """
        if isinstance(text, CriterionSpec):
            return text
        if isinstance(text, (Fixed, Schedule)):
            return cls(Criterion.CMC, text)
        if isinstance(text, Criterion):
            return cls(text)

        raw = str(text).strip().lower()
        name, _, option = raw.partition(":")
        try:
            criterion = Criterion(name)
        except ValueError:
            raise UsageError(f"unknown criterion '{text}'") from None
        if not option:
            return cls(criterion)
        if criterion is not Criterion.CMC:
            raise UsageError(f"criterion '{name}' takes no options")

        key, _, value = option.partition("=")
        try:
            number = float(value)
        except ValueError:
            raise UsageError(f"criterion option '{option}' needs a numeric value") from None
        if key == "alpha":
            return cls(criterion, Fixed(number))
        if key == "gamma":
            return cls(criterion, Schedule(number))
        raise UsageError(f"unknown CMC option '{key}' (expected alpha or gamma)")


# ============================================================================
# Thresholds and likelihood ratios
# ============================================================================

@dataclass(frozen=True)
class Threshold:
    """Chi-square cut-off of the likelihood-ratio confidence region."""

    value: float
    alpha_effective: float
    df: int
    mode: AlphaMode

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": float(self.value),
            "alpha_effective": float(self.alpha_effective),
            "df": int(self.df),
            "mode": self.mode.label,
        }


def make_threshold(mode: AlphaMode, n: int, p: int) -> Threshold:
    """
    Region threshold for ``mode``.

    Fixed mode uses the (1 - alpha) chi-square quantile with p + 1 degrees of
    freedom. Schedule mode uses n**gamma directly and reports the implied
    alpha_n = P(chi2_{p+1} > n**gamma).

    Raises:
        DomainError: If n <= p + 1 or the mode is invalid
    """
    if n <= p + 1:
        raise DomainError(f"need n > p + 1, got n={n}, p={p}")
    df = p + 1
    if isinstance(mode, Fixed):
        return Threshold(chi2_quantile(1.0 - mode.alpha, df), mode.alpha, df, mode)
    if isinstance(mode, Schedule):
        value = float(n) ** mode.gamma
        return Threshold(value, chi2_sf(value, df), df, mode)
    raise DomainError(f"unknown alpha mode {mode!r}")


def lambda_of(fit_j: FitResult, fit_full: FitResult) -> float:
    """
    Likelihood ratio -2 (loglik_j - loglik_full) of a submodel MLE.

    Raises:
        UsageError: If the fits come from different datasets or fit_full is
            not the full model
        InternalConsistencyError: If the ratio is clearly negative, or the
            Gaussian RSS form disagrees
    """
    if fit_j.fingerprint != fit_full.fingerprint:
        raise UsageError("likelihood ratio requires fits on the same dataset")
    if fit_full.model != ModelId.full(fit_full.model.p):
        raise UsageError("likelihood ratio is taken against the full-model fit")

    lam = -2.0 * (fit_j.loglik - fit_full.loglik)
    tol = max(LAMBDA_ABS_TOL, LAMBDA_REL_TOL * abs(fit_full.loglik))
    if lam < -tol:
        raise InternalConsistencyError(
            f"negative likelihood ratio {lam:.3e} for {fit_j.model.label()}; "
            "the full-model fit is not the maximum"
        )
    lam = max(lam, 0.0)

    if fit_j.family is Family.GAUSSIAN and fit_j.rss is not None and fit_full.rss is not None:
        lam_rss = fit_j.n * math.log(fit_j.rss / fit_full.rss)
        if abs(lam - max(lam_rss, 0.0)) > 1.0e-8 * max(1.0, lam):
            raise InternalConsistencyError(
                f"likelihood ratio {lam!r} disagrees with n ln(RSS_j/RSS_full) = {lam_rss!r}"
            )
    return lam


# ============================================================================
# Selection results
# ============================================================================

@dataclass(frozen=True)
class LambdaRow:
    """One ML-set entry as seen by a criterion."""

    size: int
    model: ModelId
    loglik: float
    lam: float
    p_value: float
    in_region: Optional[bool] = None
    score: Optional[float] = None

    def to_dict(self, names: Sequence[str]) -> Dict[str, Any]:
        return {
            "size": self.size,
            "model": self.model.names(names),
            "loglik": float(self.loglik),
            "lambda": float(self.lam),
            "p_value": float(self.p_value),
            "in_region": self.in_region,
            "score": None if self.score is None else float(self.score),
        }


@dataclass(frozen=True, eq=False)
class SelectionResult:
    """Outcome of one criterion on one dataset."""

    spec: CriterionSpec
    selected: ModelId
    fit: FitResult
    rows: Tuple[LambdaRow, ...]
    names: Tuple[str, ...]
    threshold: Optional[Threshold] = None
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def criterion(self) -> Criterion:
        return self.spec.criterion

    @property
    def lambda_by_size(self) -> Tuple[LambdaRow, ...]:
        return self.rows

    @property
    def scores(self) -> Optional[List[float]]:
        if self.criterion is Criterion.CMC:
            return None
        return [row.score for row in self.rows]

    @property
    def selected_row(self) -> LambdaRow:
        for row in self.rows:
            if row.model == self.selected:
                return row
        raise InternalConsistencyError("selected model missing from the lambda table")

    def to_dict(self) -> Dict[str, Any]:
        names = self.names
        row = self.selected_row
        return {
            "criterion": self.criterion.value,
            "spec": self.spec.label,
            "family": self.fit.family.value,
            "n": int(self.fit.n),
            "p": int(self.selected.p),
            "selected": {
                "model": self.selected.names(names),
                "size": self.selected.size,
                "coefficients": self.fit.coefficients(names),
                "loglik": float(self.fit.loglik),
                "lambda": float(row.lam),
                "score": None if row.score is None else float(row.score),
            },
            "threshold": None if self.threshold is None else self.threshold.to_dict(),
            "lambda_table": [r.to_dict(names) for r in self.rows],
            "warnings": list(self.warnings),
        }


def _ml_set_for(data: Dataset, budget: Optional[SearchBudget], mlset: Optional[MLSet]) -> MLSet:
    if mlset is None:
        return ml_set(data, budget)
    if mlset.full_fit.fingerprint != data.fingerprint:
        raise UsageError("maximum likelihood set was computed on a different dataset")
    return mlset


def cmc_select(
    data: Dataset,
    mode: Optional[AlphaMode] = None,
    budget: Optional[SearchBudget] = None,
    mlset: Optional[MLSet] = None,
) -> SelectionResult:
    """
    Constrained minimum criterion: the sparsest ML-set model inside the
    likelihood-ratio confidence region.

    Args:
        data: Dataset to select on
        mode: Fixed(alpha) or Schedule(gamma); defaults to Schedule(0.5)
        budget: Search limits for the ML set
        mlset: Precomputed ML set to reuse

    Returns:
        SelectionResult with the per-size lambda table and threshold
    """
    mode = mode or Schedule(DEFAULT_GAMMA)
    mls = _ml_set_for(data, budget, mlset)
    threshold = make_threshold(mode, data.n, data.p)
    df = data.p + 1

    rows: List[LambdaRow] = []
    selected: Optional[LambdaRow] = None
    selected_fit: Optional[FitResult] = None
    for entry in mls:
        lam = lambda_of(entry.fit, mls.full_fit)
        row = LambdaRow(entry.size, entry.model, entry.fit.loglik, lam, chi2_sf(lam, df),
                        in_region=lam <= threshold.value)
        rows.append(row)
        if row.in_region and selected is None:
            selected, selected_fit = row, entry.fit

    warnings = list(mls.warnings)
    if selected is None:
        # capped set with no member in the region: the full model always is
        message = (
            f"no model of size <= {mls.k} lies in the region (threshold {threshold.value:.6g}); "
            "falling back to the full model"
        )
        logger.warning(message)
        warnings.append(message)
        full = mls.full_fit
        selected = LambdaRow(data.p, full.model, full.loglik, 0.0, 1.0, in_region=True)
        selected_fit = full
        rows.append(selected)

    logger.debug(
        f"CMC ({mode.label}) selected {selected.model.label(data.names)} "
        f"with lambda={selected.lam:.6g} <= {threshold.value:.6g}"
    )
    return SelectionResult(
        spec=CriterionSpec(Criterion.CMC, mode),
        selected=selected.model,
        fit=selected_fit,
        rows=tuple(rows),
        names=data.names,
        threshold=threshold,
        warnings=tuple(warnings),
    )


def penalty(criterion: Criterion, m: int, n: int) -> float:
    """
    Penalty for a model with m parameters (intercept included).

    Raises:
        DomainError: For hq with n <= e, or aicc with n <= m + 1
    """
    if criterion is Criterion.AIC:
        return 2.0 * m
    if criterion is Criterion.BIC:
        return m * math.log(n)
    if criterion is Criterion.HQ:
        if n <= math.e:
            raise DomainError(f"Hannan-Quinn requires n > e, got n={n}")
        return 2.0 * m * math.log(math.log(n))
    if criterion is Criterion.AICC:
        if n <= m + 1:
            raise DomainError(f"AICc requires n > m + 1, got n={n}, m={m}")
        return 2.0 * m * n / (n - m - 1)
    raise DomainError(f"{criterion.value} is not an information criterion")


def ic_select(
    data: Dataset,
    criterion: Union[Criterion, str],
    budget: Optional[SearchBudget] = None,
    mlset: Optional[MLSet] = None,
) -> SelectionResult:
    """
    Information-criterion selection over the ML set.

    score(j) = -2 loglik(M*_j) + penalty(j + 1); ties go to the smaller model.
    """
    criterion = Criterion(criterion) if isinstance(criterion, str) else criterion
    if criterion is Criterion.CMC:
        raise UsageError("use cmc_select for the constrained minimum criterion")
    mls = _ml_set_for(data, budget, mlset)
    df = data.p + 1

    rows: List[LambdaRow] = []
    best: Optional[LambdaRow] = None
    best_fit: Optional[FitResult] = None
    for entry in mls:
        lam = lambda_of(entry.fit, mls.full_fit)
        score = -2.0 * entry.fit.loglik + penalty(criterion, entry.size + 1, data.n)
        row = LambdaRow(entry.size, entry.model, entry.fit.loglik, lam, chi2_sf(lam, df), score=score)
        rows.append(row)
        if best is None or score < best.score:
            best, best_fit = row, entry.fit

    logger.debug(f"{criterion.value.upper()} selected {best.model.label(data.names)} (score {best.score:.6g})")
    return SelectionResult(
        spec=CriterionSpec(criterion),
        selected=best.model,
        fit=best_fit,
        rows=tuple(rows),
        names=data.names,
        warnings=mls.warnings,
    )


def select(
    data: Dataset,
    spec: Any,
    budget: Optional[SearchBudget] = None,
    mlset: Optional[MLSet] = None,
) -> SelectionResult:
    """Dispatch a criterion spec (string, CriterionSpec or mode) to its selector."""
    spec = CriterionSpec.parse(spec)
    if spec.criterion is Criterion.CMC:
        return cmc_select(data, spec.mode, budget, mlset)
    return ic_select(data, spec.criterion, budget, mlset)


# ============================================================================
# Comparison
# ============================================================================

@dataclass(frozen=True)
class ComparisonRow:
    criterion: str
    alpha_mode: str
    model: Tuple[str, ...]
    size: int
    loglik: float
    lam: float
    score: Optional[float]
    threshold: Optional[float]
    alpha_effective: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "criterion": self.criterion,
            "alpha_mode": self.alpha_mode,
            "model": list(self.model),
            "size": self.size,
            "loglik": float(self.loglik),
            "lambda": float(self.lam),
            "score": self.score,
            "threshold": self.threshold,
            "alpha_effective": self.alpha_effective,
        }


COMPARISON_COLUMNS = (
    "criterion", "alpha_mode", "model", "size", "loglik", "lambda", "score",
    "threshold", "alpha_effective",
)


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    """Selections of several criteria sharing one ML set."""

    rows: Tuple[ComparisonRow, ...]
    results: Tuple[SelectionResult, ...]
    mlset: MLSet

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": self.mlset.full_fit.family.value,
            "n": self.mlset.n,
            "p": self.mlset.p,
            "rows": [row.to_dict() for row in self.rows],
        }


def compare(
    data: Dataset,
    modes: Iterable[Any],
    budget: Optional[SearchBudget] = None,
) -> ComparisonReport:
    """
    Run several criteria on one shared ML set.

    Args:
        data: Dataset to select on
        modes: Criterion specs ('cmc:alpha=0.5', 'aic', Fixed(0.1), ...)
        budget: Search limits

    Raises:
        UsageError: If no mode is given
    """
    specs = [CriterionSpec.parse(m) for m in modes]
    if not specs:
        raise UsageError("compare needs at least one criterion")
    mls = ml_set(data, budget)

    results: List[SelectionResult] = []
    rows: List[ComparisonRow] = []
    for spec in specs:
        result = select(data, spec, mlset=mls)
        results.append(result)
        chosen = result.selected_row
        threshold = result.threshold
        rows.append(ComparisonRow(
            criterion=spec.label,
            alpha_mode=spec.alpha_mode,
            model=tuple(result.selected.names(data.names)),
            size=result.selected.size,
            loglik=float(result.fit.loglik),
            lam=float(chosen.lam),
            score=None if chosen.score is None else float(chosen.score),
            threshold=None if threshold is None else float(threshold.value),
            alpha_effective=None if threshold is None else float(threshold.alpha_effective),
        ))
    return ComparisonReport(tuple(rows), tuple(results), mls)
