"""Shared fixtures: synthetic datasets and independent oracles."""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from cmc_toolkit.glm_fit import Dataset, Family, ModelId, fit_submodel
from cmc_toolkit.selection import lambda_of, penalty
from cmc_toolkit.sim_harness import gen_design, gen_response
from cmc_toolkit.stats_core import RngStream


PROJECT_ROOT = Path(__file__).parent.parent
EXAMPLE_CSV = PROJECT_ROOT / "data" / "example.csv"

# Moderate coefficients keep binomial/Poisson samples away from separation and overflow
FAMILY_SIGNAL = {
    Family.GAUSSIAN: (1.0, 1.5, -1.2, 0.8),
    Family.BINOMIAL: (0.3, 1.2, -1.0, 0.8),
    Family.POISSON: (0.5, 0.4, -0.3, 0.25),
}


def _make_dataset(seed, n=200, p=6, family="gaussian", rho=0.3, sigma=1.0, beta=None):
    family = Family.parse(family)
    if beta is None:
        signal = FAMILY_SIGNAL[family]
        beta = np.zeros(p + 1)
        k = min(len(signal), p + 1)
        beta[:k] = signal[:k]
    stream = RngStream(seed)
    X = gen_design(n, p, rho, stream.substream(0))
    y = gen_response(X, beta, family, sigma, stream.substream(1))
    return Dataset(y, X, family)


@pytest.fixture
def make_dataset():
    """Factory for seeded synthetic datasets: make_dataset(seed, n=, p=, family=, ...)."""
    return _make_dataset


@pytest.fixture
def gaussian_data():
    """Gaussian dataset with n=200, p=6 and x1..x3 active."""
    return _make_dataset(7, n=200, p=6)


@pytest.fixture
def example_csv():
    """Path of the shipped example dataset."""
    return EXAMPLE_CSV


def _all_models(p):
    return [ModelId(mask, p) for mask in range(1 << p)]


def _normal_equations(X, y):
    X = np.asarray(X, dtype=float)
    return np.linalg.solve(X.T @ X, X.T @ y)


def _newton(X, y, family, iterations=100):
    """Plain Newton-Raphson on the canonical-link log-likelihood, no safeguards."""
    X = np.asarray(X, dtype=float)
    binomial = Family.parse(family) is Family.BINOMIAL
    beta = np.zeros(X.shape[1])
    ybar = float(np.mean(y))
    beta[0] = np.log(ybar / (1.0 - ybar)) if binomial else np.log(ybar)
    for _ in range(iterations):
        eta = X @ beta
        if binomial:
            mu = 1.0 / (1.0 + np.exp(-eta))
            w = mu * (1.0 - mu)
        else:
            mu = np.exp(eta)
            w = mu
        step = np.linalg.solve(X.T @ (w[:, None] * X), X.T @ (y - mu))
        beta = beta + step
        if np.max(np.abs(step)) < 1e-13:
            break
    return beta


def _brute_force_cmc(data, threshold):
    """Literal scan of all 2^p models: smallest size with lambda <= T, ties by likelihood."""
    full = fit_submodel(data, ModelId.full(data.p))
    best = None
    for model in _all_models(data.p):
        fit = fit_submodel(data, model)
        if lambda_of(fit, full) > threshold:
            continue
        key = (model.size, -fit.loglik, model.indices)
        if best is None or key < best[0]:
            best = (key, model)
    return best[1]


def _exhaustive_ic(data, criterion):
    """Literal scan of all 2^p models for the smallest information criterion."""
    best = None
    for model in _all_models(data.p):
        fit = fit_submodel(data, model)
        score = -2.0 * fit.loglik + penalty(criterion, model.size + 1, data.n)
        key = (score, model.size, model.indices)
        if best is None or key < best[0]:
            best = (key, model)
    return best[1]


def _exhaustive_best_of_size(data):
    """Per-size argmax of the log-likelihood over all 2^p models."""
    best = {}
    for model in _all_models(data.p):
        fit = fit_submodel(data, model)
        current = best.get(model.size)
        if current is None or fit.loglik > current[1]:
            best[model.size] = (model, fit.loglik)
    return {size: model for size, (model, _) in best.items()}


@pytest.fixture
def oracles():
    """Independent reference implementations used to check the library."""

    class Oracles:
        normal_equations = staticmethod(_normal_equations)
        newton = staticmethod(_newton)
        brute_force_cmc = staticmethod(_brute_force_cmc)
        exhaustive_ic = staticmethod(_exhaustive_ic)
        exhaustive_best_of_size = staticmethod(_exhaustive_best_of_size)

    return Oracles
