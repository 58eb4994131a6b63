"""Candidate-model enumeration and the maximum likelihood set.

For every size j the best model M*_j is found by exhaustive enumeration of the
C(p, j) candidates. Candidate fits are independent, so they can be spread over
a thread pool; the reduction always runs over the candidates in lexicographic
order, which keeps the result independent of scheduling.
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

from .config import resolve_workers
from .errors import DomainError, ModelFitError, NumericalError, SearchTooLargeError
from .glm_fit import Dataset, FitResult, ModelId, fit_submodel

logger = logging.getLogger(__name__)

DEFAULT_EXHAUSTIVE_LIMIT = 25

# Log-likelihoods closer than this are treated as tied
TIE_TOL = 1.0e-10


@dataclass(frozen=True)
class SearchBudget:
    """
    Limits of the exhaustive search.

    Attributes:
        max_size: Largest model size k considered (None means p)
        exhaustive_limit: Largest p for which exhaustive search is allowed
        workers: Parallelism hint, capped by CMC_THREADS
    """

    max_size: Optional[int] = None
    exhaustive_limit: int = DEFAULT_EXHAUSTIVE_LIMIT
    workers: Optional[int] = None

    def resolve(self, data: Dataset) -> int:
        """
        Validate the budget against ``data`` and return the size cap k.

        Raises:
            SearchTooLargeError: If p exceeds the exhaustive limit
            DomainError: If k is out of range or leaves candidate fits ill-posed
        """
        if data.p > self.exhaustive_limit:
            raise SearchTooLargeError(
                f"exhaustive search over p={data.p} predictors exceeds the limit of "
                f"{self.exhaustive_limit}; heuristic search is not supported"
            )
        k = data.p if self.max_size is None else int(self.max_size)
        if not 0 <= k <= data.p:
            raise DomainError(f"max model size must lie in [0, {data.p}], got {k}")
        if k >= data.n - 1:
            raise DomainError(f"max model size {k} must be smaller than n - 1 = {data.n - 1}")
        return k


def models_of_size(p: int, j: int) -> Iterator[ModelId]:
    """
    All models with exactly ``j`` of ``p`` predictors, in lexicographic order.

    Raises:
        DomainError: If j is outside [0, p]
    """
    if p < 0 or not 0 <= j <= p:
        raise DomainError(f"model size must lie in [0, {p}], got {j}")
    return (ModelId.from_indices(indices, p) for indices in itertools.combinations(range(p), j))


def _fit_candidate(data: Dataset, model: ModelId) -> FitResult:
    try:
        return fit_submodel(data, model)
    except NumericalError as e:
        raise ModelFitError(
            f"fitting {model.label(data.names)} (mask {model.bits}) failed: {e}", model=model
        ) from e


def _fit_all(data: Dataset, models: Sequence[ModelId], workers: int) -> List[FitResult]:
    if workers <= 1 or len(models) < 2:
        return [_fit_candidate(data, m) for m in models]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda m: _fit_candidate(data, m), models))


def _prefer(best: FitResult, other: FitResult) -> FitResult:
    """Higher log-likelihood wins; ties go to the lexicographically smaller model."""
    if other.loglik > best.loglik + TIE_TOL:
        return other
    if abs(other.loglik - best.loglik) <= TIE_TOL and other.model.sort_key() < best.model.sort_key():
        return other
    return best


def _search_size(data: Dataset, j: int, workers: int) -> Tuple[FitResult, Tuple[str, ...]]:
    models = list(models_of_size(data.p, j))
    fits = _fit_all(data, models, workers)
    best = fits[0]
    for fit in fits[1:]:
        best = _prefer(best, fit)
    warnings = tuple(w for fit in fits for w in fit.warnings)
    logger.debug(f"size {j}: best of {len(models)} is {best.model.label(data.names)}")
    return best, warnings


def best_of_size(
    data: Dataset, j: int, budget: Optional[SearchBudget] = None
) -> Tuple[ModelId, FitResult]:
    """
    The size-j model with the highest maximized log-likelihood.

    Ties within TIE_TOL go to the lexicographically smallest model.

    Raises:
        DomainError: If j exceeds the budget's size cap
        ModelFitError: If any candidate fit fails, naming the candidate
    """
    budget = budget or SearchBudget()
    k = budget.resolve(data)
    if not 0 <= j <= k:
        raise DomainError(f"model size {j} outside the searched range [0, {k}]")
    best, _ = _search_size(data, j, resolve_workers(budget.workers))
    return best.model, best


@dataclass(frozen=True)
class MLEntry:
    """Best model of one size."""

    size: int
    model: ModelId
    fit: FitResult


@dataclass(frozen=True, eq=False)
class MLSet:
    """
    Maximum likelihood set M*_0 ... M*_k together with the full-model fit.

    ``warnings`` lists every non-converged candidate fit met during the
    search; such fits took part in the argmax with their achieved
    log-likelihood.
    """

    entries: Tuple[MLEntry, ...]
    k: int
    full_fit: FitResult
    names: Tuple[str, ...]
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def p(self) -> int:
        return self.full_fit.model.p

    @property
    def n(self) -> int:
        return self.full_fit.n

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, j: int) -> MLEntry:
        return self.entries[j]

    def __iter__(self):
        return iter(self.entries)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": self.full_fit.family.value,
            "n": self.n,
            "p": self.p,
            "max_size": self.k,
            "entries": [
                {
                    "size": e.size,
                    "model": e.model.names(self.names),
                    "loglik": float(e.fit.loglik),
                    "deviance": float(e.fit.deviance),
                    "converged": bool(e.fit.converged),
                    "coefficients": e.fit.coefficients(self.names),
                }
                for e in self.entries
            ],
            "warnings": list(self.warnings),
        }


def ml_set(data: Dataset, budget: Optional[SearchBudget] = None) -> MLSet:
    """
    Build the maximum likelihood set for sizes 0..k.

    Search is exhaustive within each size; a leaps-and-bounds pruning could
    replace the per-size enumeration as long as it returns the exact argmax.

    Raises:
        SearchTooLargeError: If p exceeds the exhaustive limit
        ModelFitError: If any candidate fit fails
    """
    budget = budget or SearchBudget()
    k = budget.resolve(data)
    workers = resolve_workers(budget.workers)

    entries: List[MLEntry] = []
    warnings: List[str] = []
    for j in range(k + 1):
        best, size_warnings = _search_size(data, j, workers)
        entries.append(MLEntry(j, best.model, best))
        warnings.extend(size_warnings)

    if k == data.p:
        full_fit = entries[-1].fit
    else:
        full_fit = _fit_candidate(data, ModelId.full(data.p))
        warnings.extend(full_fit.warnings)

    for lower, upper in zip(entries, entries[1:]):
        if lower.fit.loglik > upper.fit.loglik + 1.0e-8:
            message = (
                f"log-likelihood decreases from size {lower.size} to {upper.size}; "
                "a candidate fit did not reach its maximum"
            )
            logger.warning(message)
            warnings.append(message)

    if warnings:
        logger.warning(f"maximum likelihood set carries {len(warnings)} fit warning(s)")
    return MLSet(tuple(entries), k, full_fit, data.names, tuple(warnings))
