"""Rendering of result documents as JSON, CSV or a plain-text table."""

import csv
import io
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, TextIO

from .errors import InputOutputError

logger = logging.getLogger(__name__)


def render_json(document: Any) -> str:
    """Deterministic JSON rendering (sorted keys, two-space indent)."""
    return json.dumps(document, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ";".join(str(v) for v in value)
    return str(value)


def render_csv(columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> str:
    """CSV with a header row; missing values are written as empty cells."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buffer.getvalue()


def render_table(columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> str:
    """Fixed-width text table for terminals."""
    cells = [[_cell(row.get(c)) for c in columns] for row in rows]
    for line in cells:
        for i, text in enumerate(line):
            if len(text) > 12 and _is_float(text):
                line[i] = f"{float(text):.6g}"
    widths = [max([len(c)] + [len(line[i]) for line in cells]) for i, c in enumerate(columns)]

    out = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip()]
    out.append("  ".join("-" * w for w in widths))
    for line in cells:
        out.append("  ".join(t.ljust(w) for t, w in zip(line, widths)).rstrip())
    return "\n".join(out) + "\n"


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def write_output(text: str, path: Optional[Path] = None, stream: Optional[TextIO] = None) -> None:
    """
    Write a rendered artifact to ``path`` or to ``stream``.

    Raises:
        InputOutputError: If the file cannot be written
    """
    if path is None:
        if stream is not None:
            stream.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise InputOutputError(f"cannot write {path}: {e}") from e
    logger.info(f"Wrote {path}")
