"""Deterministic JSON reports (schema ``cartan-kit/1``)."""

from __future__ import annotations

import json
import math
from typing import Any, Sequence

from .. import SCHEMA


def _clean(v: Any) -> Any:
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if hasattr(v, "item") and not isinstance(v, (str, bytes)):  # numpy scalars
        v = v.item()
    if isinstance(v, bool) or v is None or isinstance(v, (int, str)):
        return v
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return str(v)


def check(name: str, value: Any, tol: float | None, seed: int | None, passed: bool, **extra) -> dict:
    """One numeric check: value, tolerance, seed and verdict always present."""
    out = {"name": name, "value": value, "tol": tol, "seed": seed, "pass": bool(passed)}
    out.update(extra)
    return out


def emit_report(results: Sequence[dict], fmt: str = "json", errors: Sequence[str] = ()) -> str:
    """Compact JSON with sorted keys; ``errors`` (diagnostics) appear only when present."""
    if fmt != "json":
        raise ValueError(f"unsupported report format {fmt!r}")
    doc: dict[str, Any] = {"schema": SCHEMA, "tasks": [_clean(r) for r in results]}
    if errors:
        doc["errors"] = list(errors)
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)
