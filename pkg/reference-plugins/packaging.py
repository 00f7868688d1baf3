"""Bundle and package the reference plugins for distribution.

Each plugin directory holds one standalone ``main.py`` speaking the stdio
wire protocol. This module turns a directory into an installable bundle
(entry command plus files) and into a hub package with signed front-matter,
using the gateway's own packaging primitives so the output is exactly what
the import endpoint expects.

Run as a script to write one ``.pkg`` file per plugin:

    python3 packaging.py <dest-dir>
"""
from __future__ import annotations

import ast
import json
import sys
from pathlib import Path
from typing import Any

from switchboard.hub import encode_package

PACK_ROOT = Path(__file__).resolve().parent

# hub category per plugin: "tool" for tools, "function" for everything else
PLUGINS = {
    "calculator": "tool",
    "clock-tool": "tool",
    "echo-pipe": "function",
    "digit-scrub": "function",
    "context-clip": "function",
    "append-note": "function",
}


def plugin_dir(name: str) -> Path:
    if name not in PLUGINS:
        raise KeyError(f"unknown reference plugin {name!r}")
    return PACK_ROOT / name


def read_manifest(name: str) -> dict[str, Any]:
    """Extract the MANIFEST literal without executing the plugin."""
    tree = ast.parse((plugin_dir(name) / "main.py").read_text())
    for node in tree.body:
        if isinstance(node, ast.Assign):
            for target in node.targets:
                if isinstance(target, ast.Name) and target.id == "MANIFEST":
                    return ast.literal_eval(node.value)
    raise LookupError(f"no MANIFEST literal in {name}/main.py")


def bundle(name: str) -> dict[str, Any]:
    source = (plugin_dir(name) / "main.py").read_text()
    return {"entry_command": ["python3", "main.py"],
            "files": {"main.py": source}}


def package(name: str) -> str:
    manifest = read_manifest(name)
    return encode_package({
        "category": PLUGINS[name],
        "name": manifest["id"],
        "version": manifest["version"],
        "author": manifest.get("author", ""),
        "description": manifest.get("description", ""),
        "license": "unspecified",
    }, json.dumps(bundle(name), sort_keys=True))


def write_all(dest: Path) -> list[Path]:
    dest.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(PLUGINS):
        path = dest / f"{name}.pkg"
        path.write_text(package(name))
        written.append(path)
    return written


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else PACK_ROOT / "dist"
    for path in write_all(target):
        print(path)
