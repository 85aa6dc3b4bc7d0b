"""Demonstration recordings and their on-disk row format.

A demo set is a flat table: one row per control step, holding the flat
observation vector and the action vector the demonstrator produced, tagged
with the episode it came from.  The ``.frames`` file is line oriented so a
recording can be inspected, diffed, and truncated with ordinary tools: a
single header line (``# `` + JSON) describing the columns, then one
whitespace-separated row per step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FRAMES_FORMAT = "frames/1"


class DemoError(Exception):
    pass


@dataclass
class DemoSet:
    observations: np.ndarray  # (rows, obs_width)
    actions: np.ndarray  # (rows, n_actions)
    action_names: tuple[str, ...]
    demo_ids: tuple[str, ...]  # per row
    steps: np.ndarray  # (rows,) step index within each demo

    def __post_init__(self) -> None:
        self.observations = np.asarray(self.observations, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.steps = np.asarray(self.steps, dtype=np.int64)
        n = len(self.observations)
        if self.observations.ndim != 2 or self.actions.ndim != 2:
            raise DemoError("observations and actions must be 2-d row tables")
        if len(self.actions) != n or len(self.demo_ids) != n or len(self.steps) != n:
            raise DemoError("row counts disagree across columns")
        if self.actions.shape[1] != len(self.action_names):
            raise DemoError("action column count does not match the action names")

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def episode_ids(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for d in self.demo_ids:
            seen.setdefault(d)
        return tuple(seen)

    def column(self, action: str) -> np.ndarray:
        if action not in self.action_names:
            raise DemoError(f"no action column {action!r}; have {list(self.action_names)}")
        return self.actions[:, self.action_names.index(action)]


def demo_set_from_episodes(episodes, action_names) -> DemoSet:
    """Stack (demo_id, observations, actions) triples into one row table."""
    obs_parts, act_parts, ids, steps = [], [], [], []
    for demo_id, obs, acts in episodes:
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        acts = np.atleast_2d(np.asarray(acts, dtype=np.float64))
        if len(obs) != len(acts):
            raise DemoError(f"demo {demo_id!r}: {len(obs)} observations vs {len(acts)} actions")
        obs_parts.append(obs)
        act_parts.append(acts)
        ids.extend([str(demo_id)] * len(obs))
        steps.extend(range(len(obs)))
    if not obs_parts:
        raise DemoError("no episodes given")
    return DemoSet(np.concatenate(obs_parts), np.concatenate(act_parts),
                   tuple(action_names), tuple(ids), np.asarray(steps))


def merge_demo_sets(parts: list[DemoSet]) -> DemoSet:
    if not parts:
        raise DemoError("nothing to merge")
    names = parts[0].action_names
    for p in parts[1:]:
        if p.action_names != names:
            raise DemoError("demo sets disagree on action names")
    return DemoSet(
        np.concatenate([p.observations for p in parts]),
        np.concatenate([p.actions for p in parts]),
        names,
        tuple(d for p in parts for d in p.demo_ids),
        np.concatenate([p.steps for p in parts]),
    )


def save_frames(path, demos: DemoSet, extra: dict | None = None) -> None:
    path = Path(path)
    for demo_id in demos.episode_ids:
        if any(ch.isspace() for ch in demo_id) or not demo_id:
            raise DemoError(f"demo id {demo_id!r} cannot be written to a frames file")
    header = {
        "format": FRAMES_FORMAT,
        "observation_width": int(demos.observations.shape[1]),
        "actions": list(demos.action_names),
    }
    if extra:
        overlap = sorted(set(extra) & set(header))
        if overlap:
            raise DemoError(f"extra header keys collide with the format: {overlap}")
        header.update(extra)
    with path.open("w") as fh:
        fh.write("# " + json.dumps(header) + "\n")
        for i in range(len(demos)):
            cells = [demos.demo_ids[i], str(int(demos.steps[i]))]
            cells.extend(repr(float(v)) for v in demos.observations[i])
            cells.extend(repr(float(v)) for v in demos.actions[i])
            fh.write(" ".join(cells) + "\n")


def load_frames(path) -> DemoSet:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise DemoError(f"{path}: missing frames header")
    try:
        header = json.loads(lines[0][1:].strip())
    except json.JSONDecodeError as exc:
        raise DemoError(f"{path}: bad header: {exc}") from exc
    if header.get("format") != FRAMES_FORMAT:
        raise DemoError(f"{path}: unsupported format {header.get('format')!r}")
    width = int(header["observation_width"])
    names = tuple(str(n) for n in header["actions"])
    expected = 2 + width + len(names)

    obs_rows, act_rows, ids, steps = [], [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cells = line.split()
        if len(cells) != expected:
            raise DemoError(f"{path}:{lineno}: expected {expected} columns, got {len(cells)}")
        ids.append(cells[0])
        steps.append(int(cells[1]))
        row = [float(c) for c in cells[2:]]
        obs_rows.append(row[:width])
        act_rows.append(row[width:])
    if not obs_rows:
        raise DemoError(f"{path}: no rows")
    return DemoSet(np.asarray(obs_rows), np.asarray(act_rows), names, tuple(ids), np.asarray(steps))
