"""Subprocess plugin engine: tools, filters, pipes, and actions."""
from .conformance import ConformanceReport, run_conformance
from .engine import PluginEngine, ToolLoopResult
from .manifest import PluginManifest, ToolSpec, validate_manifest

__all__ = [
    "ConformanceReport",
    "PluginEngine",
    "PluginManifest",
    "ToolLoopResult",
    "ToolSpec",
    "run_conformance",
    "validate_manifest",
]
