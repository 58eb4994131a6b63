"""Seeded Monte-Carlo experiments with a known sparse truth.

Every replication draws its own design and response from a sub-stream keyed by
(rho index, n index, replication), computes one maximum likelihood set and runs
all configured criteria on it. Aggregation runs over replications in index
order, so serial and threaded runs give identical metrics.
"""

import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from .config import DEFAULT_COMPARE_CRITERIA, resolve_workers
from .errors import (
    DataValidationError,
    DomainError,
    InputOutputError,
    NumericalError,
    SimulationAbortedError,
    UsageError,
)
from .formatting import render_csv, render_json, render_table, write_output
from .glm_fit import Dataset, Family, ModelId, fit_submodel, log_likelihood
from .model_space import DEFAULT_EXHAUSTIVE_LIMIT, SearchBudget, ml_set
from .selection import Criterion, CriterionSpec, Threshold, lambda_of, make_threshold, select
from .stats_core import RngStream

logger = logging.getLogger(__name__)

POISSON_ETA_BOUND = 30.0

# Share of failed replications above which a run is aborted
MAX_FAILURE_RATE = 0.01

REPORT_COLUMNS = (
    "family",
    "n",
    "rho",
    "criterion",
    "alpha_mode",
    "exact_match_rate",
    "false_active_rate",
    "false_inactive_rate",
    "coverage_freq",
    "capture_rate",
    "mean_size",
    "failures",
)


# ============================================================================
# Configuration
# ============================================================================

@dataclass(frozen=True)
class SimConfig:
    """
    Simulation scenario.

    Attributes:
        family: Response family tag
        n_grid: Sample sizes to simulate
        p: Number of candidate predictors
        beta_true: True coefficients, intercept first (length p + 1)
        rho: AR(1) design correlations to simulate
        sigma: Gaussian noise standard deviation
        replications: Replications per (n, rho) cell
        seed: Master seed
        criteria: Criterion specs run in every replication
    """

    family: str
    n_grid: Tuple[int, ...]
    p: int
    beta_true: Tuple[float, ...]
    rho: Tuple[float, ...] = (0.0,)
    sigma: float = 1.0
    replications: int = 500
    seed: int = 0
    criteria: Tuple[str, ...] = DEFAULT_COMPARE_CRITERIA

    def __post_init__(self):
        family = Family.parse(self.family).value
        n_grid = tuple(int(n) for n in self.n_grid)
        rho = (float(self.rho),) if isinstance(self.rho, (int, float)) else tuple(float(r) for r in self.rho)
        beta = tuple(float(b) for b in self.beta_true)
        criteria = tuple(CriterionSpec.parse(c).label for c in self.criteria)
        p = int(self.p)

        if not 0 <= p <= DEFAULT_EXHAUSTIVE_LIMIT:
            raise UsageError(f"p must lie in [0, {DEFAULT_EXHAUSTIVE_LIMIT}], got {p}")
        if len(beta) != p + 1:
            raise UsageError(f"beta_true needs p + 1 = {p + 1} values, got {len(beta)}")
        if not all(math.isfinite(b) for b in beta):
            raise UsageError("beta_true must be finite")
        for n in n_grid:
            if n <= p + 1:
                raise UsageError(f"every n must exceed p + 1 = {p + 1}, got {n}")
        if not rho:
            raise UsageError("rho needs at least one value")
        for r in rho:
            if not abs(r) < 1.0:
                raise DomainError(f"design correlation must satisfy |rho| < 1, got {r!r}")
        if not (float(self.sigma) >= 0.0):
            raise DomainError(f"sigma must be non-negative, got {self.sigma!r}")
        if int(self.replications) < 1:
            raise UsageError("replications must be at least 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise UsageError("seed must be an unsigned 64-bit integer")
        if not criteria:
            raise UsageError("criteria needs at least one entry")
        if len(set(criteria)) != len(criteria):
            raise UsageError("criteria must not repeat")

        object.__setattr__(self, "family", family)
        object.__setattr__(self, "n_grid", n_grid)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "beta_true", beta)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "replications", int(self.replications))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "criteria", criteria)

    @property
    def active(self) -> Tuple[int, ...]:
        """0-based indices of the predictors with non-zero true coefficient."""
        return tuple(i for i in range(self.p) if self.beta_true[i + 1] != 0.0)

    @property
    def p_star(self) -> int:
        return len(self.active)

    @property
    def beta_min(self) -> Optional[float]:
        """Smallest absolute active coefficient, None without active predictors."""
        values = [abs(self.beta_true[i + 1]) for i in self.active]
        return min(values) if values else None

    @property
    def true_model(self) -> ModelId:
        return ModelId.from_indices(self.active, self.p)

    @classmethod
    def desk(cls, **overrides: Any) -> "SimConfig":
        """Default scenario: p = 8 with x1..x3 active, sigma = 1, R = 500."""
        settings: Dict[str, Any] = dict(
            family="gaussian",
            n_grid=(100, 400, 1600, 6400),
            p=8,
            beta_true=(1.0, 1.5, -1.2, 0.8, 0.0, 0.0, 0.0, 0.0, 0.0),
            rho=(0.0, 0.5),
            sigma=1.0,
            replications=500,
            seed=20240101,
            criteria=DEFAULT_COMPARE_CRITERIA,
        )
        settings.update(overrides)
        return cls(**settings)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "SimConfig":
        """
        Build a config from a JSON-style mapping.

        Raises:
            UsageError: On unknown or missing keys
        """
        known = {"family", "n_grid", "p", "beta_true", "rho", "sigma", "replications", "seed", "criteria"}
        unknown = sorted(set(values) - known)
        if unknown:
            raise UsageError(f"unknown simulation config key(s): {', '.join(unknown)}")
        missing = sorted({"family", "n_grid", "p", "beta_true"} - set(values))
        if missing:
            raise UsageError(f"simulation config is missing: {', '.join(missing)}")
        try:
            return cls(**values)
        except (TypeError, ValueError) as e:
            if isinstance(e, UsageError):
                raise
            raise UsageError(f"invalid simulation config: {e}") from e

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "SimConfig":
        """
        Load a JSON config file.

        Raises:
            InputOutputError: If the file cannot be read
            UsageError: If it is not a valid config
        """
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise InputOutputError(f"cannot read simulation config {path}: {e}") from e
        try:
            values = json.loads(text)
        except json.JSONDecodeError as e:
            raise UsageError(f"simulation config {path} is not valid JSON: {e}") from e
        if not isinstance(values, dict):
            raise UsageError(f"simulation config {path} must be a JSON object")
        return cls.from_dict(values)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": self.family,
            "n_grid": list(self.n_grid),
            "p": self.p,
            "beta_true": list(self.beta_true),
            "rho": list(self.rho),
            "sigma": self.sigma,
            "replications": self.replications,
            "seed": self.seed,
            "criteria": list(self.criteria),
        }


# ============================================================================
# Data generation
# ============================================================================

def gen_design(n: int, p: int, rho: float, stream: RngStream) -> np.ndarray:
    """
    Design with i.i.d. rows whose predictors are unit-variance AR(1) normals.

    corr(x_a, x_b) = rho**|a - b|. The intercept column is prepended.

    Raises:
        DomainError: If |rho| >= 1 or the dimensions are invalid
    """
    if not abs(rho) < 1.0:
        raise DomainError(f"design correlation must satisfy |rho| < 1, got {rho!r}")
    if n < 1 or p < 0:
        raise DomainError(f"invalid design dimensions n={n}, p={p}")
    Z = np.asarray(stream.standard_normal((n, p)), dtype=float)
    scale = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        Z[:, j] = rho * Z[:, j - 1] + scale * Z[:, j]
    return np.column_stack([np.ones(n), Z])


def _linear_predictor(X: np.ndarray, beta: Sequence[float], family: Family) -> Tuple[np.ndarray, int]:
    beta = np.asarray(beta, dtype=float)
    if X.ndim != 2 or X.shape[1] != beta.shape[0]:
        raise DomainError(f"design width {X.shape[-1]} does not match {beta.shape[0]} coefficients")
    eta = X @ beta
    clamped = 0
    if family is Family.POISSON:
        outside = np.abs(eta) > POISSON_ETA_BOUND
        clamped = int(outside.sum())
        if clamped:
            logger.warning(f"clamped {clamped} Poisson linear predictor(s) to +/-{POISSON_ETA_BOUND:g}")
            eta = np.clip(eta, -POISSON_ETA_BOUND, POISSON_ETA_BOUND)
    return eta, clamped


def _draw_response(
    X: np.ndarray, beta: Sequence[float], family: Family, sigma: float, stream: RngStream
) -> Tuple[np.ndarray, int]:
    if sigma < 0.0:
        raise DomainError(f"sigma must be non-negative, got {sigma!r}")
    eta, clamped = _linear_predictor(X, beta, family)
    n = eta.shape[0]
    if family is Family.GAUSSIAN:
        y = eta + sigma * stream.standard_normal(n)
    elif family is Family.BINOMIAL:
        y = stream.bernoulli(expit(eta), n)
    else:
        y = stream.poisson(np.exp(eta), n)
    return np.asarray(y, dtype=float), clamped


def gen_response(
    X: np.ndarray,
    beta_true: Sequence[float],
    family: Any,
    sigma: float,
    stream: RngStream,
) -> np.ndarray:
    """
    Draw a response from the model with coefficients ``beta_true``.

    Gaussian: X beta + sigma z. Binomial: Bernoulli(logistic(X beta)).
    Poisson: Poisson(exp(X beta)) with the linear predictor clamped to
    [-30, 30]; clamping is logged as a warning.
    """
    y, _ = _draw_response(np.asarray(X, dtype=float), beta_true, Family.parse(family), float(sigma), stream)
    return y


# ============================================================================
# Metrics
# ============================================================================

def _rate(total: float, count: int) -> Optional[float]:
    return None if count == 0 else float(total / count)


@dataclass(frozen=True)
class CriterionMetrics:
    """Per-criterion averages over the successful replications of a cell."""

    criterion: str
    alpha_mode: str
    exact_match_rate: Optional[float]
    false_active_rate: Optional[float]
    false_inactive_rate: Optional[float]
    misclassification_rate: Optional[float]
    mean_size: Optional[float]
    estimation_error: Optional[float]
    coverage_freq: Optional[float] = None
    true_fit_coverage: Optional[float] = None
    threshold: Optional[float] = None
    alpha_effective: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "CriterionMetrics":
        return cls(**values)


@dataclass(frozen=True)
class Agreement:
    """How often two criteria selected the same model."""

    first: str
    second: str
    rate: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        return {"first": self.first, "second": self.second, "rate": self.rate}

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "Agreement":
        return cls(**values)


@dataclass(frozen=True)
class CellMetrics:
    """Results for one (n, rho) cell."""

    family: str
    n: int
    rho: float
    replications: int
    trials: int
    failures: int
    nonconverged: int
    clamped: int
    capture_rate: Optional[float]
    undersize_purity_rate: Optional[float]
    criteria: Tuple[CriterionMetrics, ...]
    agreement: Tuple[Agreement, ...] = field(default_factory=tuple)

    def criterion(self, label: str) -> CriterionMetrics:
        label = CriterionSpec.parse(label).label
        for metrics in self.criteria:
            if metrics.criterion == label:
                return metrics
        raise UsageError(f"criterion '{label}' was not simulated")

    def agreement_rate(self, first: str, second: str) -> Optional[float]:
        a = CriterionSpec.parse(first).label
        b = CriterionSpec.parse(second).label
        for entry in self.agreement:
            if {entry.first, entry.second} == {a, b}:
                return entry.rate
        raise UsageError(f"no agreement entry for '{a}' and '{b}'")

    def to_dict(self) -> Dict[str, Any]:
        values = dict(self.__dict__)
        values["criteria"] = [m.to_dict() for m in self.criteria]
        values["agreement"] = [a.to_dict() for a in self.agreement]
        return values

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "CellMetrics":
        values = dict(values)
        values["criteria"] = tuple(CriterionMetrics.from_dict(m) for m in values["criteria"])
        values["agreement"] = tuple(Agreement.from_dict(a) for a in values.get("agreement", ()))
        return cls(**values)


@dataclass(frozen=True)
class TrialMetrics:
    """All cells of a simulation run together with its configuration."""

    config: SimConfig
    cells: Tuple[CellMetrics, ...]

    def cell(self, n: int, rho: Optional[float] = None) -> CellMetrics:
        for c in self.cells:
            if c.n == n and (rho is None or c.rho == rho):
                return c
        raise UsageError(f"no cell for n={n}, rho={rho}")

    def rows(self) -> List[Dict[str, Any]]:
        """Flat report rows, one per (cell, criterion)."""
        out = []
        for c in self.cells:
            for m in c.criteria:
                out.append({
                    "family": c.family,
                    "n": c.n,
                    "rho": c.rho,
                    "criterion": m.criterion,
                    "alpha_mode": m.alpha_mode,
                    "exact_match_rate": m.exact_match_rate,
                    "false_active_rate": m.false_active_rate,
                    "false_inactive_rate": m.false_inactive_rate,
                    "coverage_freq": m.coverage_freq,
                    "capture_rate": c.capture_rate,
                    "mean_size": m.mean_size,
                    "failures": c.failures,
                })
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "columns": list(REPORT_COLUMNS),
            "cells": [c.to_dict() for c in self.cells],
        }

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "TrialMetrics":
        return cls(
            config=SimConfig.from_dict(values["config"]),
            cells=tuple(CellMetrics.from_dict(c) for c in values["cells"]),
        )


# ============================================================================
# Trials
# ============================================================================

@dataclass
class _Outcome:
    """What one replication contributes to its cell."""

    failed: bool = False
    nonconverged: bool = False
    clamped: int = 0
    captured: bool = False
    pure: Optional[bool] = None
    selected: List[ModelId] = field(default_factory=list)
    estimation_error: List[float] = field(default_factory=list)
    covered: List[Optional[bool]] = field(default_factory=list)
    fit_covered: List[Optional[bool]] = field(default_factory=list)


def _run_one(
    config: SimConfig,
    specs: Sequence[CriterionSpec],
    thresholds: Sequence[Optional[Threshold]],
    n: int,
    rho: float,
    stream: RngStream,
) -> _Outcome:
    family = Family.parse(config.family)
    truth = config.true_model
    beta_true = np.asarray(config.beta_true)
    outcome = _Outcome()

    X = gen_design(n, config.p, rho, stream.substream(0))
    y, outcome.clamped = _draw_response(X, beta_true, family, config.sigma, stream.substream(1))

    try:
        data = Dataset(y, X, family)
        mls = ml_set(data, SearchBudget(workers=1))
        full = mls.full_fit
        lam_truth_fit = lambda_of(fit_submodel(data, truth), full)
        lam_beta_true = max(-2.0 * (log_likelihood(data, beta_true) - full.loglik), 0.0)
        results = [select(data, spec, mlset=mls) for spec in specs]
    except (DataValidationError, NumericalError) as e:
        logger.debug(f"replication failed (n={n}, rho={rho}, key={stream.key}): {e}")
        outcome.failed = True
        return outcome

    outcome.nonconverged = bool(mls.warnings)
    outcome.captured = all(e.model.contains(truth) for e in mls if e.size >= config.p_star)
    if config.p_star > 0:
        outcome.pure = all(truth.contains(e.model) for e in mls if e.size < config.p_star)

    for result, threshold in zip(results, thresholds):
        outcome.selected.append(result.selected)
        outcome.estimation_error.append(float(np.linalg.norm(result.fit.beta - beta_true)))
        if threshold is None:
            outcome.covered.append(None)
            outcome.fit_covered.append(None)
        else:
            outcome.covered.append(lam_beta_true <= threshold.value)
            outcome.fit_covered.append(lam_truth_fit <= threshold.value)
    return outcome


def _aggregate(
    config: SimConfig,
    specs: Sequence[CriterionSpec],
    thresholds: Sequence[Optional[Threshold]],
    n: int,
    rho: float,
    outcomes: Sequence[_Outcome],
) -> CellMetrics:
    p, p_star = config.p, config.p_star
    truth = config.true_model
    ok = [o for o in outcomes if not o.failed]
    trials = len(ok)

    criteria = []
    for i, (spec, threshold) in enumerate(zip(specs, thresholds)):
        exact = fa = fi = mis = size = err = 0.0
        covered = fit_covered = 0
        for o in ok:
            chosen = o.selected[i]
            false_active = bin(chosen.mask & ~truth.mask).count("1")
            false_inactive = bin(truth.mask & ~chosen.mask).count("1")
            exact += chosen == truth
            fa += false_active / (p - p_star) if p > p_star else 0.0
            fi += false_inactive / p_star if p_star > 0 else 0.0
            mis += (false_active + false_inactive) / p if p > 0 else 0.0
            size += chosen.size
            err += o.estimation_error[i]
            covered += bool(o.covered[i])
            fit_covered += bool(o.fit_covered[i])
        criteria.append(CriterionMetrics(
            criterion=spec.label,
            alpha_mode=spec.alpha_mode,
            exact_match_rate=_rate(exact, trials),
            false_active_rate=_rate(fa, trials),
            false_inactive_rate=_rate(fi, trials),
            misclassification_rate=_rate(mis, trials),
            mean_size=_rate(size, trials),
            estimation_error=_rate(err, trials),
            coverage_freq=None if threshold is None else _rate(covered, trials),
            true_fit_coverage=None if threshold is None else _rate(fit_covered, trials),
            threshold=None if threshold is None else float(threshold.value),
            alpha_effective=None if threshold is None else float(threshold.alpha_effective),
        ))

    agreement = []
    for a, b in itertools.combinations(range(len(specs)), 2):
        same = sum(o.selected[a] == o.selected[b] for o in ok)
        agreement.append(Agreement(specs[a].label, specs[b].label, _rate(same, trials)))

    return CellMetrics(
        family=config.family,
        n=n,
        rho=rho,
        replications=len(outcomes),
        trials=trials,
        failures=len(outcomes) - trials,
        nonconverged=sum(o.nonconverged for o in ok),
        clamped=sum(o.clamped for o in outcomes),
        capture_rate=_rate(sum(o.captured for o in ok), trials),
        undersize_purity_rate=None if p_star == 0 else _rate(sum(bool(o.pure) for o in ok), trials),
        criteria=tuple(criteria),
        agreement=tuple(agreement),
    )


def run_trials(config: SimConfig, workers: Optional[int] = None) -> TrialMetrics:
    """
    Run every (n, rho) cell of ``config``.

    Args:
        config: Simulation scenario
        workers: Thread count hint, capped by CMC_THREADS

    Returns:
        TrialMetrics with one CellMetrics per (rho, n), rho-major

    Raises:
        SimulationAbortedError: If more than 1% of a cell's replications fail
    """
    specs = [CriterionSpec.parse(c) for c in config.criteria]
    workers = resolve_workers(workers)
    master = RngStream(config.seed)

    cells = []
    for h, rho in enumerate(config.rho):
        for i, n in enumerate(config.n_grid):
            thresholds = [
                make_threshold(s.mode, n, config.p) if s.criterion is Criterion.CMC else None
                for s in specs
            ]
            streams = [master.substream(h).substream(i).substream(r) for r in range(config.replications)]

            def task(stream: RngStream) -> _Outcome:
                return _run_one(config, specs, thresholds, n, rho, stream)

            if workers > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    outcomes = list(pool.map(task, streams))
            else:
                outcomes = [task(s) for s in streams]

            failures = sum(o.failed for o in outcomes)
            if failures > MAX_FAILURE_RATE * config.replications:
                raise SimulationAbortedError(
                    f"{failures} of {config.replications} replications failed at n={n}, rho={rho}"
                )
            if failures:
                logger.warning(f"{failures} replication(s) failed at n={n}, rho={rho}; skipped")

            cell = _aggregate(config, specs, thresholds, n, rho, outcomes)
            logger.info(f"simulated n={n}, rho={rho}: {cell.trials} trials, {cell.failures} failures")
            cells.append(cell)
    return TrialMetrics(config, tuple(cells))


# ============================================================================
# Reports
# ============================================================================

def emit_report(metrics: TrialMetrics, fmt: str = "csv", path: Optional[Path] = None) -> str:
    """
    Render ``metrics`` as CSV, JSON or a text table, optionally writing it.

    The CSV carries REPORT_COLUMNS; the JSON document adds the configuration
    and the extra per-cell statistics.

    Raises:
        UsageError: For an unknown format
        InputOutputError: If the file cannot be written
    """
    if fmt == "csv":
        text = render_csv(REPORT_COLUMNS, metrics.rows())
    elif fmt == "json":
        text = render_json(metrics.to_dict())
    elif fmt == "table":
        text = render_table(REPORT_COLUMNS, metrics.rows())
    else:
        raise UsageError(f"unknown report format '{fmt}'")
    if path is not None:
        write_output(text, path)
    return text
