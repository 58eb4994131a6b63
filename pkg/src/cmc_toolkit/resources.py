"""MCP resources: documentation and the selection result schema."""

import json
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict

import jsonschema
from mcp.server import Server
from mcp.types import EmbeddedResource, ImageContent, Resource, TextContent

from .errors import InternalConsistencyError


# Project root directory
PROJECT_ROOT = Path(__file__).resolve().parents[2]

SCHEMA_DIR = Path(__file__).resolve().parent / "schemas"


def _read_text_file(path: Path) -> str:
    """Read a text file with error handling."""
    try:
        return path.read_text(encoding="utf-8")
    except Exception as e:
        return f"Error reading {path}: {e}"


@lru_cache(maxsize=None)
def load_selection_schema() -> Dict[str, Any]:
    """JSON schema of the document printed by ``cmc select``."""
    return json.loads((SCHEMA_DIR / "selection.schema.json").read_text(encoding="utf-8"))


def validate_selection(document: Dict[str, Any]) -> None:
    """
    Check a selection document against the shipped schema.

    Raises:
        InternalConsistencyError: If the document does not conform
    """
    try:
        jsonschema.validate(document, load_selection_schema())
    except jsonschema.ValidationError as e:
        raise InternalConsistencyError(f"selection output violates its schema: {e.message}") from e


def register_resources(app: Server):
    """Register all MCP resources with the server."""

    @app.list_resources()
    async def list_resources() -> list[Resource]:
        """List available resources."""
        return [
            Resource(uri="docs://readme", mimeType="text/markdown", name="README - Getting Started"),
            Resource(uri="docs://tools", mimeType="text/markdown", name="Tool Reference"),
            Resource(uri="schema://selection", mimeType="application/json", name="Selection Result Schema"),
        ]

    @app.read_resource()
    async def read_resource(uri: str) -> list[TextContent | ImageContent | EmbeddedResource]:
        """Return resource contents for the given URI."""
        return [TextContent(type="text", text=read_resource_text(str(uri)))]


def read_resource_text(uri: str) -> str:
    """Text of a resource; unknown URIs yield an error message."""
    if uri == "docs://readme":
        return _read_text_file(PROJECT_ROOT / "README.md")

    if uri == "docs://tools":
        return _read_text_file(PROJECT_ROOT / "md-files" / "TOOLS.md")

    if uri == "schema://selection":
        return json.dumps(load_selection_schema(), indent=2)

    return f"Error: Unknown resource '{uri}'"
