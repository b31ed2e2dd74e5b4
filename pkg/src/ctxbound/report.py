"""Run manifests and deterministic CSV/JSON report emission.

Every report embeds its manifest (tool version, configuration echo, input
digests, timestamp) as ``#``-prefixed comment lines; the body below the
header is byte-deterministic for identical inputs, configuration, and
version. AP values print with one decimal in CSV; the JSON form keeps
full precision.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Mapping, Sequence

from . import __version__


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    command: str
    config: Mapping[str, object]
    inputs: tuple[tuple[str, str, str], ...]  # (label, path, sha256)
    version: str = __version__
    timestamp: str = ""

    @staticmethod
    def create(command: str, config: Mapping[str, object], inputs) -> "RunManifest":
        resolved = tuple(
            (label, str(path), file_digest(path)) for label, path in inputs
        )
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return RunManifest(command, dict(config), resolved, __version__, stamp)

    def comment_lines(self) -> list[str]:
        lines = [
            f"# ctxbound {self.command} report",
            f"# version: {self.version}",
            f"# timestamp: {self.timestamp}",
        ]
        for label, path, digest in self.inputs:
            lines.append(f"# {label}: {path} sha256:{digest}")
        echo = " ".join(f"{k}={v}" for k, v in self.config.items())
        lines.append(f"# config: {echo}")
        return lines

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "version": self.version,
            "timestamp": self.timestamp,
            "inputs": [
                {"label": label, "path": path, "sha256": digest}
                for label, path, digest in self.inputs
            ],
            "config": dict(self.config),
        }


def format_ap(value: float) -> str:
    """One-decimal AP presentation; full precision lives in the JSON report."""
    text = f"{value:.1f}"
    return "0.0" if text == "-0.0" else text


def format_ratio(value: float) -> str:
    text = f"{value:.2f}"
    return "0.00" if text == "-0.00" else text


def render_csv(
    manifest: RunManifest | None,
    fieldnames: Sequence[str],
    rows: Sequence[Mapping[str, object]],
) -> str:
    buf = io.StringIO()
    if manifest is not None:
        for line in manifest.comment_lines():
            buf.write(line + "\n")
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def render_json(manifest: RunManifest | None, payload: object) -> str:
    doc = {"results": payload}
    if manifest is not None:
        doc = {"manifest": manifest.as_dict(), "results": payload}
    return json.dumps(doc, indent=2) + "\n"


def csv_body(text: str) -> str:
    """The report without its comment header; the byte-deterministic part."""
    return "".join(
        line for line in text.splitlines(keepends=True) if not line.startswith("#")
    )


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
