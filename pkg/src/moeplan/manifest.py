"""Run manifests: what produced a report, and how to reproduce it.

Every emitted report embeds a manifest recording the command, the input file
paths with their content hashes, the seed(s), the tool version, and a
timestamp.  Re-running the same command on the same inputs reproduces the
report byte-for-byte except for the timestamp.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

from . import __version__

REPORT_SCHEMA_VERSION = 1


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_manifest(
    command: str,
    inputs: Mapping[str, str | Path] | None = None,
    seed: int | None = None,
    extra: Mapping[str, Any] | None = None,
) -> dict:
    manifest: dict[str, Any] = {
        "command": command,
        "inputs": {
            label: {"path": str(path), "sha256": _sha256(Path(path))}
            for label, path in sorted((inputs or {}).items())
        },
        "seed": seed,
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        manifest["params"] = dict(extra)
    return manifest


def report_payload(manifest: dict, result: Mapping[str, Any], kind: str) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": kind,
        "manifest": manifest,
        "result": dict(result),
    }


def write_json_report(path: str | Path, payload: Mapping[str, Any]) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def manifest_comment(manifest: dict) -> str:
    """Single-line manifest embedding for CSV outputs."""
    return "# manifest: " + json.dumps(manifest, sort_keys=True)
