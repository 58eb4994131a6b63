"""MCP tools exposing model selection, fitting and simulation."""

import asyncio
import json
import logging
from typing import Any, Dict

from mcp.server import Server
from mcp.types import EmbeddedResource, ImageContent, TextContent, Tool

from .cli import COMMANDS
from .config import RunConfig
from .errors import CmcError, UsageError
from .sim_harness import SimConfig, emit_report, run_trials

logger = logging.getLogger(__name__)

# Tool name -> cli subcommand
TOOL_COMMANDS = {
    "select_model": "select",
    "ml_set": "mlset",
    "fit_model": "fit",
    "compare_criteria": "compare",
}

_LIST = {
    "oneOf": [
        {"type": "array", "items": {"type": "string"}},
        {"type": "string"},
    ]
}

_DATA_PROPERTIES = {
    "input": {"type": "string", "description": "Path to a UTF-8 CSV file with a header row"},
    "response": {"type": "string", "description": "Response column"},
    "predictors": {**_LIST, "description": "Predictor columns (default: all other columns)"},
    "family": {
        "type": "string",
        "enum": ["gaussian", "binomial", "poisson"],
        "description": "Response family (default: gaussian)",
    },
    "max_size": {"type": "integer", "minimum": 0, "description": "Largest model size searched"},
    "workers": {"type": "integer", "minimum": 1, "description": "Worker threads (capped by CMC_THREADS)"},
}


def tool_definitions() -> list[Tool]:
    """Tool descriptions advertised to clients."""
    return [
        Tool(
            name="select_model",
            description=(
                "Select the sparsest model inside the likelihood-ratio confidence region (CMC), "
                "or select by AIC/BIC/HQ/AICc"
            ),
            inputSchema={
                "type": "object",
                "properties": {
                    **_DATA_PROPERTIES,
                    "alpha": {"type": "number", "description": "Fixed level: threshold chi2_{1-alpha, p+1}"},
                    "gamma": {"type": "number", "description": "Schedule: threshold n**gamma (default 0.5)"},
                    "criterion": {
                        "type": "string",
                        "description": "Criterion spec: cmc:gamma=G, cmc:alpha=A, aic, bic, hq or aicc",
                    },
                },
                "required": ["input", "response"],
            },
        ),
        Tool(
            name="ml_set",
            description="Best model of every size (maximum likelihood set) with log-likelihoods",
            inputSchema={
                "type": "object",
                "properties": dict(_DATA_PROPERTIES),
                "required": ["input", "response"],
            },
        ),
        Tool(
            name="fit_model",
            description="Maximum-likelihood fit of the full model or of the named predictors",
            inputSchema={
                "type": "object",
                "properties": {
                    **_DATA_PROPERTIES,
                    "model": {**_LIST, "description": "Predictors of the model (default: all)"},
                },
                "required": ["input", "response"],
            },
        ),
        Tool(
            name="compare_criteria",
            description="Run several criteria on one shared maximum likelihood set",
            inputSchema={
                "type": "object",
                "properties": {
                    **_DATA_PROPERTIES,
                    "criterion": {**_LIST, "description": "Criterion specs (default: CMC regimes, aic, bic)"},
                },
                "required": ["input", "response"],
            },
        ),
        Tool(
            name="simulate",
            description="Monte-Carlo selection accuracy for a simulation config",
            inputSchema={
                "type": "object",
                "properties": {
                    "config": {
                        "type": "object",
                        "description": (
                            "Simulation config: family, n_grid, p, beta_true, rho, sigma, "
                            "replications, seed, criteria"
                        ),
                    },
                    "seed": {"type": "integer", "minimum": 0, "description": "Override the config seed"},
                    "workers": {"type": "integer", "minimum": 1, "description": "Worker threads"},
                },
                "required": ["config"],
            },
        ),
    ]


def _simulate(arguments: Dict[str, Any]) -> str:
    values = arguments.get("config")
    if not isinstance(values, dict):
        raise UsageError("simulate requires a 'config' object")
    if arguments.get("seed") is not None:
        values = {**values, "seed": arguments["seed"]}
    metrics = run_trials(SimConfig.from_dict(values), workers=arguments.get("workers"))
    return emit_report(metrics, "json")


def run_tool(name: str, arguments: Dict[str, Any]) -> str:
    """
    Execute a tool synchronously and return its JSON text.

    Library errors become ``{"success": false, "error": ..., "exit_code": ...}``.
    """
    try:
        if name == "simulate":
            return _simulate(arguments)
        if name not in TOOL_COMMANDS:
            raise UsageError(f"Unknown tool '{name}'")
        command = TOOL_COMMANDS[name]
        config = RunConfig.from_mapping(command, {**arguments, "format": "json"})
        return COMMANDS[command](config)
    except CmcError as e:
        logger.error(f"{name} failed: {e}")
        return json.dumps({"success": False, "error": str(e), "exit_code": e.exit_code}, indent=2)
    except (TypeError, ValueError) as e:
        logger.error(f"{name} rejected its arguments: {e}")
        return json.dumps(
            {"success": False, "error": f"invalid arguments: {e}", "exit_code": UsageError.exit_code},
            indent=2,
        )


async def call_tool(name: str, arguments: Dict[str, Any]) -> list[TextContent | ImageContent | EmbeddedResource]:
    """Run a tool off the event loop; selection and simulation are CPU bound."""
    text = await asyncio.to_thread(run_tool, name, arguments or {})
    return [TextContent(type="text", text=text)]


def register_tools(app: Server):
    """Register all MCP tools with the server."""

    @app.list_tools()
    async def list_tools() -> list[Tool]:
        """List available tools."""
        return tool_definitions()

    @app.call_tool()
    async def handle_call_tool(name: str, arguments: Any) -> list[TextContent | ImageContent | EmbeddedResource]:
        """Handle tool execution requests."""
        return await call_tool(name, arguments)
