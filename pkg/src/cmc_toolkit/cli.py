"""Command-line interface for constrained minimum criterion model selection."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from .config import DEFAULT_COMPARE_CRITERIA, OUTPUT_FORMATS, RunConfig
from .errors import CmcError, UsageError
from .formatting import render_csv, render_json, render_table, write_output
from .glm_fit import Dataset, Family, ModelId, fit_submodel
from .ingest import ingest_csv
from .model_space import SearchBudget, ml_set
from .resources import validate_selection
from .selection import COMPARISON_COLUMNS, compare, select
from .sim_harness import SimConfig, emit_report, run_trials

logger = logging.getLogger(__name__)

LAMBDA_COLUMNS = ("size", "model", "loglik", "lambda", "p_value", "in_region", "score")
MLSET_COLUMNS = ("size", "model", "loglik", "deviance", "converged")
COEFFICIENT_COLUMNS = ("term", "estimate")


def _load(config: RunConfig) -> Dataset:
    return ingest_csv(config.input_path, config.response, config.predictors, config.family)


def _budget(config: RunConfig) -> SearchBudget:
    return SearchBudget(max_size=config.max_size, workers=config.workers)


def _render(config: RunConfig, document, columns, rows, preamble: Optional[List[str]] = None) -> str:
    if config.output_format == "json":
        return render_json(document)
    if config.output_format == "csv":
        return render_csv(columns, rows)
    head = "".join(f"{line}\n" for line in (preamble or []))
    return head + render_table(columns, rows)


# ============================================================================
# Subcommands
# ============================================================================

def cmd_select(config: RunConfig) -> str:
    """
    Select a model with CMC (default) or an information criterion.

    Args:
        config: Validated run configuration

    Returns:
        Rendered result artifact
    """
    if config.criteria and (config.alpha is not None or config.gamma is not None):
        raise UsageError("--criterion cannot be combined with --alpha / --gamma")
    if len(config.criteria) > 1:
        raise UsageError("select takes a single --criterion; use compare for several")
    spec = config.criteria[0] if config.criteria else config.cmc_spec()

    data = _load(config)
    result = select(data, spec, _budget(config))
    document = result.to_dict()
    validate_selection(document)

    summary = [
        f"criterion: {result.spec.label}",
        f"selected:  {result.selected.label(data.names)}",
        "coefficients: " + ", ".join(
            f"{term}={value:.10g}" for term, value in document["selected"]["coefficients"].items()
        ),
    ]
    if result.threshold is not None:
        summary.append(
            f"threshold: {result.threshold.value:.6g} (alpha_effective {result.threshold.alpha_effective:.6g})"
        )
    if config.output_format == "csv":
        # "#" summary lines, then the lambda table
        comments = "".join(f"# {line}\n" for line in summary)
        return comments + render_csv(LAMBDA_COLUMNS, document["lambda_table"])
    return _render(config, document, LAMBDA_COLUMNS, document["lambda_table"], summary)


def cmd_mlset(config: RunConfig) -> str:
    """Print the best model of every size."""
    data = _load(config)
    mls = ml_set(data, _budget(config))
    document = mls.to_dict()
    return _render(config, document, MLSET_COLUMNS, document["entries"])


def cmd_fit(config: RunConfig) -> str:
    """Fit the full model or the predictors named by --model."""
    data = _load(config)
    model = ModelId.full(data.p) if config.model is None else data.model(config.model)
    fit = fit_submodel(data, model)
    document = fit.to_dict(data.names)
    document.update(family=data.family.value, n=data.n, p=data.p)
    rows = [{"term": term, "estimate": value} for term, value in document["coefficients"].items()]
    preamble = [f"model:  {model.label(data.names)}", f"loglik: {fit.loglik:.10g}"]
    return _render(config, document, COEFFICIENT_COLUMNS, rows, preamble)


def cmd_simulate(config: RunConfig) -> str:
    """Run a simulation config file and render its report."""
    sim = SimConfig.from_file(config.config_path)
    overrides = {}
    if config.seed is not None:
        overrides["seed"] = config.seed
    if config.criteria:
        overrides["criteria"] = config.criteria
    if overrides:
        sim = SimConfig.from_dict({**sim.to_dict(), **overrides})
    metrics = run_trials(sim, workers=config.workers)
    return emit_report(metrics, config.output_format)


def cmd_compare(config: RunConfig) -> str:
    """Run several criteria on one shared maximum likelihood set."""
    data = _load(config)
    criteria = config.criteria or DEFAULT_COMPARE_CRITERIA
    report = compare(data, criteria, _budget(config))
    document = report.to_dict()
    return _render(config, document, COMPARISON_COLUMNS, document["rows"])


COMMANDS: Dict[str, Callable[[RunConfig], str]] = {
    "select": cmd_select,
    "mlset": cmd_mlset,
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
}


# ============================================================================
# Argument parsing
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with one subparser per command."""
    parser = argparse.ArgumentParser(
        prog="cmc",
        description="Constrained minimum criterion model selection for linear and generalized linear models",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Select with the alpha_n schedule (threshold n**0.5)
  cmc select --input data/example.csv --response y

  # Fixed confidence level
  cmc select --input data/example.csv --response y --alpha 0.5

  # Best model of every size
  cmc mlset --input data/example.csv --response y --format table

  # Compare CMC regimes with AIC and BIC
  cmc compare --input data/example.csv --response y --criterion cmc:alpha=0.9,aic

  # Run a simulation
  cmc simulate --config sim.json --format csv --output report.csv

Exit codes: 0 ok, 2 usage, 3 data validation, 4 numerical failure, 5 I/O.
Set CMC_THREADS to cap parallelism.
""",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=OUTPUT_FORMATS, default="json", help="Output format")
    common.add_argument("--output", type=Path, help="Write the result here instead of stdout")
    common.add_argument("--workers", type=int, help="Worker threads (capped by CMC_THREADS)")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging on stderr")
    common.add_argument("-q", "--quiet", action="store_true", help="Only log errors")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", type=Path, help="CSV file with a header row")
    data.add_argument("--response", help="Response column")
    data.add_argument("--predictors", help="Comma-separated predictor columns (default: all others)")
    data.add_argument(
        "--family", choices=[f.value for f in Family], default="gaussian", help="Response family"
    )
    data.add_argument("--max-size", dest="max_size", type=int, help="Largest model size searched")

    select_p = sub.add_parser("select", parents=[common, data], help="Select a model")
    modes = select_p.add_mutually_exclusive_group()
    modes.add_argument("--alpha", type=float, help="Fixed level: threshold chi2_{1-alpha, p+1}")
    modes.add_argument("--gamma", type=float, help="Schedule: threshold n**gamma (default 0.5)")
    select_p.add_argument("--criterion", help="Criterion spec, e.g. aic, bic, hq, aicc, cmc:alpha=0.1")

    sub.add_parser("mlset", parents=[common, data], help="Print the maximum likelihood set")

    fit_p = sub.add_parser("fit", parents=[common, data], help="Fit one model")
    fit_p.add_argument("--model", help="Comma-separated predictors of the model (default: full)")

    sim_p = sub.add_parser("simulate", parents=[common], help="Run a simulation config")
    sim_p.add_argument("--config", type=Path, help="JSON simulation config")
    sim_p.add_argument("--seed", type=int, help="Random seed (overrides the config)")
    sim_p.add_argument("--criterion", help="Comma-separated criterion specs (overrides the config)")

    cmp_p = sub.add_parser("compare", parents=[common, data], help="Compare criteria on one dataset")
    cmp_p.add_argument(
        "--criterion", help=f"Comma-separated criterion specs (default: {','.join(DEFAULT_COMPARE_CRITERIA)})"
    )
    return parser


def _set_log_level(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.ERROR if quiet else logging.INFO
    logging.getLogger("cmc_toolkit").setLevel(level)


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    if not args.command:
        parser.print_help(sys.stderr)
        return 2

    _set_log_level(args.verbose, args.quiet)
    try:
        config = RunConfig.from_mapping(args.command, args)
        text = COMMANDS[args.command](config)
        write_output(text, config.output_path, sys.stdout)
    except CmcError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
