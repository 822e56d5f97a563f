"""Canonical JSON helpers.

Every artifact the package writes goes through canonical_dumps so a rebuilt
file is byte-identical: keys sorted, two-space indent, floats in shortest
round-trip form (Python repr), NaN/Inf rejected.
"""

from __future__ import annotations

import json
from pathlib import Path


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_dumps(obj))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())
