"""Compiled policies as single JSON files.

A policy file carries the program source and the learned weight values.
Everything else (structure, frozen mask, parameter names) is a pure
function of the source, so loading recompiles and only restores weights;
a stale file whose weight count disagrees with its own source is refused.
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

from ..graph import WeightVector
from .compile import CompiledPolicy, PgdlError, compile_source

POLICY_FORMAT = "steerlab-policy"


def save_policy(path, policy: CompiledPolicy) -> None:
    payload = {
        "format": POLICY_FORMAT,
        "version": 1,
        "source": policy.source,
        "weights": [float(v) for v in policy.weights.values],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_policy(path) -> CompiledPolicy:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise PgdlError(f"{path}: cannot read policy file: {err}")
    if not isinstance(data, dict) or data.get("format") != POLICY_FORMAT:
        raise PgdlError(f"{path}: not a policy file")
    policy = compile_source(str(data.get("source", "")))
    stored = [float(v) for v in data.get("weights", [])]
    if len(stored) != len(policy.weights.values):
        raise PgdlError(
            f"{path}: {len(stored)} stored weights do not fit a structure"
            f" with {len(policy.weights.values)}")
    weights = WeightVector(stored, policy.weights.frozen.copy())
    return replace(policy, weights=weights)
