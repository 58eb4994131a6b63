"""Run configuration and environment settings."""

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Tuple

from .errors import UsageError

logger = logging.getLogger(__name__)

THREADS_ENV = "CMC_THREADS"

OUTPUT_FORMATS = ("json", "csv", "table")

DEFAULT_GAMMA = 0.5

# Regimes compared by default: the schedule, the three fixed-alpha regimes, AIC and BIC
DEFAULT_COMPARE_CRITERIA = (
    "cmc:gamma=0.5",
    "cmc:alpha=0.1",
    "cmc:alpha=0.5",
    "cmc:alpha=0.9",
    "aic",
    "bic",
)


def resolve_workers(hint: Optional[int] = None) -> int:
    """
    Number of worker threads to use.

    The hint (from --workers or a SearchBudget) is capped by the CMC_THREADS
    environment variable. Without either, work runs serially.

    Returns:
        Positive worker count
    """
    cap: Optional[int] = None
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV}={raw!r}")
        else:
            if cap < 1:
                logger.warning(f"Ignoring non-positive {THREADS_ENV}={raw!r}")
                cap = None

    if hint is None:
        workers = cap if cap is not None else 1
    else:
        workers = max(1, int(hint))
        if cap is not None:
            workers = min(workers, cap)
    return workers


def _split_list(value: Optional[str]) -> Optional[Tuple[str, ...]]:
    if value is None:
        return None
    items = tuple(item.strip() for item in value.split(",") if item.strip())
    return items or None


@dataclass(frozen=True)
class RunConfig:
    """Validated settings for one CLI or MCP invocation."""

    command: str
    input_path: Optional[Path] = None
    response: Optional[str] = None
    predictors: Optional[Tuple[str, ...]] = None
    family: str = "gaussian"
    alpha: Optional[float] = None
    gamma: Optional[float] = None
    max_size: Optional[int] = None
    criteria: Tuple[str, ...] = field(default_factory=tuple)
    model: Optional[Tuple[str, ...]] = None
    config_path: Optional[Path] = None
    seed: Optional[int] = None
    output_format: str = "json"
    output_path: Optional[Path] = None
    workers: Optional[int] = None

    def __post_init__(self):
        if self.alpha is not None and self.gamma is not None:
            raise UsageError("supply at most one of --alpha / --gamma")
        if self.output_format not in OUTPUT_FORMATS:
            raise UsageError(
                f"unknown output format '{self.output_format}' (expected one of: {', '.join(OUTPUT_FORMATS)})"
            )
        if self.max_size is not None and self.max_size < 0:
            raise UsageError("--max-size must be non-negative")
        if self.seed is not None and not 0 <= self.seed < 2 ** 64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        if self.command == "simulate":
            if self.config_path is None:
                raise UsageError("simulate requires --config")
        elif self.command:
            if self.input_path is None:
                raise UsageError(f"{self.command} requires --input")
            if self.response is None:
                raise UsageError(f"{self.command} requires --response")

    @classmethod
    def from_mapping(cls, command: str, values: Any) -> "RunConfig":
        """
        Build a RunConfig from an argparse namespace or a plain mapping.

        List-valued settings may be comma-separated strings or sequences.
        """
        get = values.get if isinstance(values, dict) else (lambda k, d=None: getattr(values, k, d))

        def as_tuple(value):
            if value is None or isinstance(value, tuple):
                return value
            if isinstance(value, str):
                return _split_list(value)
            return tuple(str(v) for v in value) or None

        def as_path(value):
            return None if value is None else Path(value)

        return cls(
            command=command,
            input_path=as_path(get("input")),
            response=get("response"),
            predictors=as_tuple(get("predictors")),
            family=str(get("family") or "gaussian"),
            alpha=get("alpha"),
            gamma=get("gamma"),
            max_size=get("max_size"),
            criteria=as_tuple(get("criterion")) or (),
            model=as_tuple(get("model")),
            config_path=as_path(get("config")),
            seed=get("seed"),
            output_format=str(get("format") or "json"),
            output_path=as_path(get("output")),
            workers=get("workers"),
        )

    def cmc_spec(self) -> str:
        """Criterion spec for CMC selection implied by --alpha / --gamma."""
        if self.alpha is not None:
            return f"cmc:alpha={self.alpha!r}"
        gamma = DEFAULT_GAMMA if self.gamma is None else self.gamma
        return f"cmc:gamma={gamma!r}"
