"""Serialisation of results to trajectory tables and YAML documents, and back.

Only strings are produced and parsed here; the CLI owns the file handles.
"""

from __future__ import annotations

import json

import yaml

from ..core import Regime
from .runners import ExperimentResult, TableRow, summarize

__all__ = [
    "FORMAT_VERSION",
    "TABLE_HEADER",
    "trajectory_table",
    "parse_trajectory_table",
    "summary_document",
    "grid_document",
    "parse_document",
    "write_text",
]

FORMAT_VERSION = 1
TABLE_HEADER = "t,x,y,z,qw,qx,qy,qz,h1,h2,h3,h4,regime"


def _g(v: float) -> str:
    return f"{v:.9g}"


def trajectory_table(result: ExperimentResult) -> str:
    """Comma-separated table; metadata rides in leading ``#`` comment lines."""
    meta = result.metadata
    lines = [
        f"# format_version: {FORMAT_VERSION}",
        f"# config_hash: {meta.get('config_hash')}",
        f"# seed: {meta.get('seed')}",
        "# metadata: " + json.dumps(meta, sort_keys=True),
        TABLE_HEADER,
    ]
    for s in result.samples:
        nums = (s.t, *s.position, *s.orientation, *s.heights)
        lines.append(",".join(_g(v) for v in nums) + "," + s.regime.value)
    return "\n".join(lines) + "\n"


def parse_trajectory_table(text: str) -> ExperimentResult:
    meta: dict = {}
    rows = []
    header_seen = False
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            if line.startswith("# metadata: "):
                meta = json.loads(line[len("# metadata: "):])
            continue
        if not header_seen:
            if line.strip() != TABLE_HEADER:
                raise ValueError(f"line {n}: expected header {TABLE_HEADER!r}")
            header_seen = True
            continue
        cells = line.split(",")
        if len(cells) != 13:
            raise ValueError(f"line {n}: expected 13 columns, found {len(cells)}")
        try:
            v = [float(c) for c in cells[:12]]
            regime = Regime(cells[12])
        except ValueError as exc:
            raise ValueError(f"line {n}: {exc}") from None
        rows.append(TableRow(v[0], tuple(v[1:4]), tuple(v[4:8]), tuple(v[8:12]), regime))
    if not header_seen:
        raise ValueError("missing table header")
    if "frame_side" not in meta:
        raise ValueError("trajectory table lacks metadata (frame_side)")
    return ExperimentResult(meta, rows, summarize(rows, meta))


def _dump(doc: dict) -> str:
    return yaml.safe_dump(doc, sort_keys=True, default_flow_style=None, width=120)


def summary_document(kind: str, metadata: dict, body: dict) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config_hash": metadata.get("config_hash"),
        "seed": metadata.get("seed"),
        "metadata": metadata,
        **body,
    }
    return _dump(doc)


def grid_document(grid, metadata: dict) -> str:
    n = grid.grid_n_sub
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "success-grid",
        "config_hash": metadata.get("config_hash"),
        "seed": metadata.get("seed"),
        "metadata": metadata,
        "grid_n_sub": n,
        "repeats": grid.repeats,
        "episodes": len(grid.records),
        "mean_success": [list(grid.mean_success[r * n : (r + 1) * n]) for r in range(n)],
        "records": grid.records,
    }
    return _dump(doc)


def parse_document(text: str) -> dict:
    doc = yaml.safe_load(text)
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported document (format_version {doc.get('format_version') if isinstance(doc, dict) else None})")
    return doc


def write_text(path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
