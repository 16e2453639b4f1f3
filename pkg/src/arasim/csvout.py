"""CSV output with a provenance header line."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def config_hash(config) -> str:
    """Stable SHA-256 of a JSON-serializable configuration."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], *,
              config_hash: str | None = None) -> Path:
    """Write ``rows`` under ``columns``; the first line is ``# config_hash=...``.

    Floats are written with ``repr`` so identical inputs give byte-identical files.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# config_hash={config_hash or 'none'}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[dict[str, str], list[dict[str, str]]]:
    """Return ``(header_metadata, rows)`` for a file written by :func:`write_csv`."""
    meta: dict[str, str] = {}
    with Path(path).open(newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key] = val
        else:
            body.append(line)
    return meta, list(csv.DictReader(body))
