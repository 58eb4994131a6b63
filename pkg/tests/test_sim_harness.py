"""Tests for design generation, simulation trials and reports."""

import json
import logging

import numpy as np
import pytest

from cmc_toolkit.errors import DomainError, InputOutputError, SimulationAbortedError, UsageError
from cmc_toolkit.glm_fit import ModelId
from cmc_toolkit.sim_harness import (
    REPORT_COLUMNS,
    SimConfig,
    TrialMetrics,
    emit_report,
    gen_design,
    gen_response,
    run_trials,
)
from cmc_toolkit.stats_core import RngStream


def small_config(**overrides):
    settings = dict(
        family="gaussian",
        n_grid=(60, 120),
        p=4,
        beta_true=(1.0, 1.5, -1.0, 0.0, 0.0),
        rho=(0.0, 0.5),
        sigma=1.0,
        replications=8,
        seed=11,
        criteria=("cmc:gamma=0.5", "cmc:alpha=0.1", "aic", "bic"),
    )
    settings.update(overrides)
    return SimConfig(**settings)


class TestGenDesign:
    """Test AR(1) design generation."""

    def test_shape_and_intercept(self):
        """Test the intercept column comes first."""
        X = gen_design(50, 3, 0.2, RngStream(1))
        assert X.shape == (50, 4)
        assert np.all(X[:, 0] == 1.0)

    def test_correlation(self):
        """Test corr(x_a, x_b) = rho**|a - b| and unit variance."""
        X = gen_design(100_000, 3, 0.5, RngStream(4))
        corr = np.corrcoef(X[:, 1:], rowvar=False)
        assert corr[0, 1] == pytest.approx(0.5, abs=0.01)
        assert corr[1, 2] == pytest.approx(0.5, abs=0.01)
        assert corr[0, 2] == pytest.approx(0.25, abs=0.01)
        assert np.var(X[:, 3]) == pytest.approx(1.0, abs=0.02)

    def test_independent_columns(self):
        """Test rho = 0 gives a near-diagonal second-moment matrix."""
        n = 20_000
        X = gen_design(n, 4, 0.0, RngStream(12))
        moments = X[:, 1:].T @ X[:, 1:] / n
        off_diagonal = moments[~np.eye(4, dtype=bool)]
        assert np.max(np.abs(off_diagonal)) < 4.0 / np.sqrt(n)

    def test_deterministic(self):
        """Test the same stream gives the same design."""
        assert np.array_equal(gen_design(20, 4, 0.3, RngStream(8, (2,))), gen_design(20, 4, 0.3, RngStream(8, (2,))))

    def test_invalid_rho(self):
        """Test |rho| >= 1 is rejected."""
        with pytest.raises(DomainError):
            gen_design(10, 2, 1.0, RngStream(0))


class TestGenResponse:
    """Test response generation."""

    def test_noise_free(self):
        """Test sigma = 0 gives y = X beta exactly."""
        X = gen_design(30, 3, 0.0, RngStream(2))
        beta = np.array([1.0, 2.0, -0.5, 0.0])
        assert np.array_equal(gen_response(X, beta, "gaussian", 0.0, RngStream(3)), X @ beta)

    def test_binomial_mean(self):
        """Test the Bernoulli sample mean matches the logistic mean."""
        X = gen_design(100_000, 2, 0.0, RngStream(5))
        y = gen_response(X, [0.5, 0.0, 0.0], "binomial", 1.0, RngStream(6))
        assert set(np.unique(y)) == {0.0, 1.0}
        assert y.mean() == pytest.approx(1.0 / (1.0 + np.exp(-0.5)), abs=0.01)

    def test_poisson_clamp_is_logged(self, caplog):
        """Test out-of-range linear predictors are clamped with a warning."""
        X = gen_design(5, 0, 0.0, RngStream(0))
        with caplog.at_level(logging.WARNING, logger="cmc_toolkit"):
            y = gen_response(X, [40.0], "poisson", 1.0, RngStream(1))
        assert np.all(np.isfinite(y))
        assert "clamped 5" in caplog.text

    def test_width_mismatch(self):
        """Test beta must match the design width."""
        X = gen_design(10, 2, 0.0, RngStream(0))
        with pytest.raises(DomainError):
            gen_response(X, [1.0, 2.0], "gaussian", 1.0, RngStream(0))


class TestSimConfig:
    """Test simulation configuration."""

    def test_desk_defaults(self):
        """Test the default scenario."""
        config = SimConfig.desk()
        assert config.p == 8
        assert config.p_star == 3
        assert config.beta_min == 0.8
        assert config.true_model == ModelId.from_indices([0, 1, 2], 8)
        assert config.n_grid == (100, 400, 1600, 6400)
        assert config.replications == 500

    def test_scalar_rho(self):
        """Test a single rho is accepted."""
        assert small_config(rho=0.25).rho == (0.25,)

    def test_criteria_normalized(self):
        """Test criteria are stored as canonical labels."""
        assert small_config(criteria=("CMC", "Bic")).criteria == ("cmc:gamma=0.5", "bic")

    @pytest.mark.parametrize("overrides", [
        {"beta_true": (1.0, 2.0)},
        {"n_grid": (5,)},
        {"replications": 0},
        {"criteria": ("aic", "aic")},
        {"criteria": ()},
        {"p": 30, "beta_true": (0.0,) * 31},
    ])
    def test_invalid(self, overrides):
        """Test rejected scenarios."""
        with pytest.raises(UsageError):
            small_config(**overrides)

    def test_invalid_rho(self):
        """Test |rho| >= 1 is a domain error."""
        with pytest.raises(DomainError):
            small_config(rho=(0.0, 1.0))

    def test_from_dict(self):
        """Test the mapping round trip and key checks."""
        config = small_config()
        assert SimConfig.from_dict(config.to_dict()) == config
        with pytest.raises(UsageError):
            SimConfig.from_dict({**config.to_dict(), "extra": 1})
        with pytest.raises(UsageError):
            SimConfig.from_dict({"family": "gaussian", "p": 1})

    def test_from_file(self, tmp_path):
        """Test loading JSON files."""
        path = tmp_path / "sim.json"
        path.write_text(json.dumps(small_config().to_dict()), encoding="utf-8")
        assert SimConfig.from_file(path) == small_config()

        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        with pytest.raises(UsageError):
            SimConfig.from_file(bad)
        with pytest.raises(InputOutputError):
            SimConfig.from_file(tmp_path / "missing.json")


class TestRunTrials:
    """Test simulation runs."""

    def test_cells(self):
        """Test one cell per (rho, n) with all criteria, rho-major."""
        metrics = run_trials(small_config())
        assert [(c.rho, c.n) for c in metrics.cells] == [(0.0, 60), (0.0, 120), (0.5, 60), (0.5, 120)]
        for cell in metrics.cells:
            assert cell.trials == 8
            assert cell.failures == 0
            assert [m.criterion for m in cell.criteria] == ["cmc:gamma=0.5", "cmc:alpha=0.1", "aic", "bic"]
            for m in cell.criteria:
                assert 0.0 <= m.exact_match_rate <= 1.0
                assert 0.0 <= m.mean_size <= 4.0
            assert cell.criterion("aic").coverage_freq is None
            assert cell.criterion("cmc:alpha=0.1").threshold is not None
            assert 0.0 <= cell.agreement_rate("aic", "bic") <= 1.0

    def test_one_info_line_per_cell(self, caplog):
        """Test per-replication selections stay below INFO."""
        with caplog.at_level(logging.INFO, logger="cmc_toolkit"):
            run_trials(small_config())
        info = [r.getMessage() for r in caplog.records if r.levelno == logging.INFO]
        assert len(info) == 4
        assert all(message.startswith("simulated n=") for message in info)
        assert not any("selected" in r.getMessage() for r in caplog.records)

    def test_reproducible(self):
        """Test identical configs give identical metrics."""
        assert run_trials(small_config()) == run_trials(small_config())

    def test_threads_match_serial(self, monkeypatch):
        """Test results do not depend on the worker count."""
        monkeypatch.delenv("CMC_THREADS", raising=False)
        config = small_config(family="poisson", beta_true=(0.5, 0.4, -0.3, 0.0, 0.0))
        assert run_trials(config, workers=1) == run_trials(config, workers=4)

    def test_seed_changes_draws(self):
        """Test a different master seed changes the outcome."""
        a = run_trials(small_config(seed=1, n_grid=(60,), rho=(0.0,)))
        b = run_trials(small_config(seed=2, n_grid=(60,), rho=(0.0,)))
        assert a.cells[0].criteria != b.cells[0].criteria

    def test_noise_free_exact_match(self):
        """Test near-zero noise with a wide region recovers the true model every time."""
        config = small_config(
            n_grid=(400,), rho=(0.0,), sigma=1e-6, replications=20,
            beta_true=(1.0, 2.0, -1.0, 0.0, 0.0), criteria=("cmc:gamma=0.9",),
        )
        cell = run_trials(config).cells[0]
        metrics = cell.criterion("cmc:gamma=0.9")
        assert metrics.exact_match_rate == 1.0
        assert metrics.false_active_rate == 0.0
        assert metrics.false_inactive_rate == 0.0
        assert metrics.mean_size == 2.0
        assert cell.capture_rate == 1.0

    def test_null_truth(self):
        """Test p* = 0 has no false inactives and no undersize purity."""
        config = small_config(beta_true=(1.0, 0.0, 0.0, 0.0, 0.0), criteria=("cmc:alpha=0.5", "aic"))
        for cell in run_trials(config).cells:
            assert cell.undersize_purity_rate is None
            assert cell.capture_rate == 1.0
            for m in cell.criteria:
                assert m.false_inactive_rate == 0.0

    def test_aborts_on_failures(self):
        """Test single-class binomial responses abort the run."""
        config = small_config(
            family="binomial", p=1, beta_true=(-9.0, 0.0), n_grid=(20,), rho=(0.0,), replications=10,
        )
        with pytest.raises(SimulationAbortedError):
            run_trials(config)


class TestEmitReport:
    """Test report rendering."""

    def test_csv(self):
        """Test the CSV header and one row per cell and criterion."""
        metrics = run_trials(small_config(n_grid=(60,), rho=(0.0,)))
        lines = emit_report(metrics, "csv").splitlines()
        assert lines[0] == ",".join(REPORT_COLUMNS)
        assert len(lines) == 1 + 4
        aic = next(line for line in lines if ",aic," in line).split(",")
        assert aic[REPORT_COLUMNS.index("coverage_freq")] == ""
        assert aic[REPORT_COLUMNS.index("alpha_mode")] == "none"

    def test_empty_grid(self):
        """Test an empty n grid gives a header-only CSV."""
        metrics = run_trials(small_config(n_grid=()))
        assert metrics.cells == ()
        assert emit_report(metrics, "csv") == ",".join(REPORT_COLUMNS) + "\n"

    def test_json_round_trip(self, tmp_path):
        """Test the JSON report restores the same metrics and is written to disk."""
        metrics = run_trials(small_config(n_grid=(60,)))
        path = tmp_path / "report.json"
        text = emit_report(metrics, "json", path)
        assert path.read_text(encoding="utf-8") == text
        doc = json.loads(text)
        assert doc["columns"] == list(REPORT_COLUMNS)
        assert TrialMetrics.from_dict(doc) == metrics

    def test_table(self):
        """Test the text table lists every criterion."""
        metrics = run_trials(small_config(n_grid=(60,), rho=(0.0,)))
        text = emit_report(metrics, "table")
        for label in ("cmc:gamma=0.5", "cmc:alpha=0.1", "aic", "bic"):
            assert label in text

    def test_unknown_format(self):
        """Test unsupported formats."""
        with pytest.raises(UsageError):
            emit_report(run_trials(small_config(n_grid=())), "xml")


@pytest.fixture(scope="module")
def desk_metrics():
    """Default scenario at rho = 0.5 over n = 100..6400."""
    return run_trials(SimConfig.desk(rho=(0.5,)))


def _binomial_se(rate, replications):
    return (rate * (1.0 - rate) / replications) ** 0.5


@pytest.mark.slow
class TestSimulationAcceptance:
    """Test the default scenario at full replication count."""

    GRID = (100, 400, 1600, 6400)

    def test_exact_match_curve(self, desk_metrics):
        """Test exact-match rates rise with n and reach 0.95 at n = 6400."""
        rates = [desk_metrics.cell(n).criterion("cmc:gamma=0.5").exact_match_rate for n in self.GRID]
        replications = desk_metrics.config.replications
        for before, after in zip(rates, rates[1:]):
            slack = 2.0 * (_binomial_se(before, replications) ** 2 + _binomial_se(after, replications) ** 2) ** 0.5
            assert after >= before - slack
        assert rates[-1] >= 0.95

        small = desk_metrics.cell(100).criterion("cmc:gamma=0.5")
        large = desk_metrics.cell(6400).criterion("cmc:gamma=0.5")
        assert large.false_inactive_rate <= small.false_inactive_rate

    def test_schedule_coverage(self, desk_metrics):
        """Test the true-model fit lies in the region at rate 1 - alpha_effective or better."""
        replications = desk_metrics.config.replications
        coverages = []
        for n in self.GRID:
            metrics = desk_metrics.cell(n).criterion("cmc:gamma=0.5")
            alpha = metrics.alpha_effective
            assert metrics.threshold == pytest.approx(n ** 0.5)
            assert metrics.true_fit_coverage >= 1.0 - alpha - 2.0 * _binomial_se(alpha, replications)
            coverages.append(metrics.true_fit_coverage)
        assert coverages[-1] >= coverages[0]
        assert coverages[-1] >= 0.99

    def test_fixed_level_coverage(self, desk_metrics):
        """Test alpha = 0.1 covers beta_true about 90% of the time at large n."""
        for n in (1600, 6400):
            fixed = desk_metrics.cell(n).criterion("cmc:alpha=0.1")
            assert fixed.coverage_freq == pytest.approx(0.9, abs=0.05)
            assert fixed.true_fit_coverage >= 0.9 - 2.0 * (0.09 / 500) ** 0.5

    def test_capture(self, desk_metrics):
        """Test the ML sets contain every active variable from n = 400 on."""
        for n in (400, 1600, 6400):
            assert desk_metrics.cell(n).capture_rate >= 0.99

    def test_alpha_regimes(self):
        """Test larger alpha trades false inactives for false actives at n = 200."""
        cell = run_trials(SimConfig.desk(n_grid=(200,), rho=(0.5,))).cells[0]
        rows = [cell.criterion(f"cmc:alpha={a}") for a in (0.1, 0.5, 0.9)]

        sizes = [row.mean_size for row in rows]
        false_active = [row.false_active_rate for row in rows]
        false_inactive = [row.false_inactive_rate for row in rows]
        assert sizes == sorted(sizes)
        assert all(b >= a - 1e-12 for a, b in zip(false_active, false_active[1:]))
        assert all(b <= a + 1e-12 for a, b in zip(false_inactive, false_inactive[1:]))

        for first, second in (("cmc:alpha=0.9", "aic"), ("cmc:alpha=0.1", "bic")):
            rate = cell.agreement_rate(first, second)
            assert rate is not None
            assert 0.0 <= rate <= 1.0


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
