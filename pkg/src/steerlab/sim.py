"""Kinematic driving simulator: vehicle dynamics, observations, rollouts.

The car is a point with heading and a 0..100 speed scale.  The world
uses screen orientation (y grows downward), so increasing heading is a
clockwise turn on screen: positive steer turns right, negative left.
The turn rate is proportional to speed, making the turning radius at
full lock a fixed 1.0 world unit.  One control step is 1/25 s and the
default cutoff of 1000 steps spans 40 seconds.

Progress is counted in road tiles.  A tile is credited when the car
crosses onto it from the previous one (small forward skips are bridged),
so a car that never moves covers zero tiles, and finishing means every
tile of the loop has been crossed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .demos import DemoSet, load_frames, save_frames
from .observation import (ACTION_RANGES, COL_BORDER, COL_THETA, COL_X, COL_Y,
                          INDICATOR_COUNT, TILE_COUNT, TILE_FEATURES, flatten)
from .track import Track, wrap_angle

DT = 1.0 / 25.0
MAX_STEPS = 1000

K_ACCEL = 40.0
K_BRAKE = 80.0
K_DRAG = 0.4  # terminal speed K_ACCEL / K_DRAG = 100
K_STEER = 0.1  # radians per world unit of travel at full steer
SPEED_TO_VELOCITY = 0.1  # world units per second at speed 1
GRASS_SLOWDOWN = 0.98

# A fast car can skip a few tile indices between 25 Hz samples; forward
# jumps up to this many tiles credit the tiles in between.
GAP_BRIDGE_LIMIT = 12

NOISE_SIGMAS = (0.05, 0.10)

_ACTION_LO = np.array([ACTION_RANGES[n][0] for n in ("steer", "accelerate", "brake")])
_ACTION_HI = np.array([ACTION_RANGES[n][1] for n in ("steer", "accelerate", "brake")])

ROLLOUT_FORMAT = "rollout/1"


class SimError(Exception):
    pass


@dataclass(frozen=True)
class StartConfig:
    tile: int = 0
    lateral: float = 0.0  # world units off the centerline, + is road-right
    heading_offset: float = 0.0  # radians relative to the tile heading
    speed: float = 40.0


NOMINAL_START = StartConfig()


@dataclass(frozen=True)
class NoiseSpec:
    """Additive zero-mean Gaussian actuator noise, seeded per rollout."""

    sigma: float
    seed: int = 0

    def stream(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence((self.seed,))))


@dataclass(frozen=True)
class CarState:
    position: tuple[float, float]
    heading: float
    speed: float
    tile: int  # nearest tile, warm start for the next lookup
    covered: frozenset[int]
    steps: int


def start_state(track: Track, start: StartConfig) -> CarState:
    tile = int(start.tile) % track.n_tiles
    h = float(track.headings[tile])
    right = np.array([-math.sin(h), math.cos(h)])
    pos = track.centers[tile] + start.lateral * right
    speed = float(np.clip(start.speed, 0.0, 100.0))
    return CarState((float(pos[0]), float(pos[1])), h + start.heading_offset,
                    speed, tile, frozenset(), 0)


def step(track: Track, state: CarState, action, noise=None) -> CarState:
    """One 1/25 s update; returns the successor state."""
    act = np.asarray(action, dtype=np.float64)
    if act.shape != (3,) or not np.all(np.isfinite(act)):
        raise SimError(f"action must be 3 finite values, got {action!r}")
    if noise is not None:
        act = act + np.asarray(noise, dtype=np.float64)
    act = np.clip(act, _ACTION_LO, _ACTION_HI)
    steer, accelerate, brake = float(act[0]), float(act[1]), float(act[2])

    speed = state.speed + (K_ACCEL * accelerate - K_BRAKE * brake - K_DRAG * state.speed) * DT
    if abs(track.lateral_offset(state.position, state.tile)) > track.half_width:
        speed *= GRASS_SLOWDOWN
    speed = max(0.0, speed)

    heading = state.heading + K_STEER * steer * speed * DT
    velocity = SPEED_TO_VELOCITY * speed
    x = state.position[0] + velocity * math.cos(heading) * DT
    y = state.position[1] + velocity * math.sin(heading) * DT
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(heading)):
        raise SimError("car state became non-finite")

    tile = track.nearest_tile((x, y), hint=state.tile)
    covered = state.covered
    delta = (tile - state.tile) % track.n_tiles
    if 0 < delta <= GAP_BRIDGE_LIMIT:
        crossed = [(state.tile + k) % track.n_tiles for k in range(1, delta + 1)]
        covered = covered | frozenset(crossed)
    return CarState((x, y), heading, speed, tile, covered, state.steps + 1)


def observe(track: Track, state: CarState) -> tuple[np.ndarray, np.ndarray]:
    """Tile block (8, 7) and indicator block (7,) for the current state.

    Tile rows are the nearest tile and the 7 after it.  Per tile: column 0
    is the signed lateral offset (positive when the car sits left of the
    tile center), column 1 the longitudinal offset (positive ahead),
    column 4 the tile heading relative to the car in units of pi (positive
    when the road bends left), column 6 the sharp-corner flag.  Indicators
    are speed scaled to [0, 1] and heading scaled to [-1, 1].
    """
    near = track.nearest_tile(state.position, hint=state.tile)
    idx = (near + np.arange(TILE_COUNT)) % track.n_tiles
    d = track.centers[idx] - np.asarray(state.position)
    h = state.heading
    forward = np.array([math.cos(h), math.sin(h)])
    right = np.array([-math.sin(h), math.cos(h)])

    tiles = np.zeros((TILE_COUNT, TILE_FEATURES))
    tiles[:, COL_X] = d @ right
    tiles[:, COL_Y] = d @ forward
    # In screen orientation a left bend lowers tile headings, so the
    # relative heading reads car minus tile.
    tiles[:, COL_THETA] = wrap_angle(h - track.headings[idx]) / math.pi
    tiles[:, COL_BORDER] = track.border[idx].astype(np.float64)

    indicators = np.zeros(INDICATOR_COUNT)
    indicators[0] = state.speed / 100.0
    indicators[1] = wrap_angle(h) / math.pi
    return tiles, indicators


def eas(n_cutoff: float, n_total: float, t_total_seconds: float, t_cutoff_seconds: float) -> float:
    """Effective average speed: tiles over seconds, both capped at the cutoff."""
    if min(n_cutoff, n_total) < 0:
        raise SimError("tile counts must be nonnegative")
    denom = min(t_total_seconds, t_cutoff_seconds)
    if denom <= 0.0:
        raise SimError("time values must be positive")
    return min(n_total, n_cutoff) / denom


@dataclass
class RolloutRecord:
    track_seed: int
    n_total: int
    start: StartConfig
    noise: NoiseSpec | None
    termination: str  # finished | cutoff | stopped
    t_total: float  # seconds elapsed when the rollout ended
    n_cutoff: int  # unique tiles covered
    t_cutoff: float  # seconds
    eas: float
    observations: np.ndarray | None = None  # (steps, 58)
    actions: np.ndarray | None = None  # (steps, 3), as commanded pre-noise
    states: np.ndarray | None = None  # (steps, 4): x, y, heading, speed

    @property
    def steps(self) -> int:
        return int(round(self.t_total / DT))


def run_rollout(policy: Callable[[np.ndarray], np.ndarray], track: Track,
                start: StartConfig = NOMINAL_START, noise: NoiseSpec | None = None,
                t_cutoff: int = MAX_STEPS, record_frames: bool = True,
                on_step: Callable[[int, CarState], bool] | None = None) -> RolloutRecord:
    """Drive ``policy`` until the loop closes, the step budget runs out,
    or ``on_step`` asks to stop.  ``t_cutoff`` is in steps; the record
    stores times in seconds.  ``policy`` maps a flat observation (58,) to
    (steer, accelerate, brake).
    """
    state = start_state(track, start)
    rng = noise.stream() if noise is not None and noise.sigma > 0.0 else None
    obs_rows, act_rows, state_rows = [], [], []

    termination = "cutoff"
    for k in range(t_cutoff):
        tiles, indicators = observe(track, state)
        flat = flatten(tiles, indicators)
        try:
            act = np.asarray(policy(flat), dtype=np.float64)
        except Exception as exc:
            raise SimError(f"policy evaluation failed at step {k}: {exc}") from exc
        if act.shape != (3,):
            raise SimError(f"policy returned shape {act.shape} at step {k}, expected (3,)")
        eps = rng.normal(0.0, noise.sigma, 3) if rng is not None else None
        state = step(track, state, act, eps)
        if record_frames:
            obs_rows.append(flat)
            act_rows.append(act)
            state_rows.append([state.position[0], state.position[1], state.heading, state.speed])
        if len(state.covered) == track.n_tiles:
            termination = "finished"
            break
        if on_step is not None and not on_step(k, state):
            termination = "stopped"
            break

    t_total = state.steps * DT
    t_cutoff_s = t_cutoff * DT
    covered = len(state.covered)
    value = eas(covered, track.n_tiles, t_total, t_cutoff_s) if state.steps else 0.0
    return RolloutRecord(
        track_seed=track.seed, n_total=track.n_tiles, start=start, noise=noise,
        termination=termination, t_total=t_total, n_cutoff=covered,
        t_cutoff=t_cutoff_s, eas=value,
        observations=np.asarray(obs_rows) if record_frames else None,
        actions=np.asarray(act_rows) if record_frames else None,
        states=np.asarray(state_rows) if record_frames else None,
    )


def edge_case_starts(track: Track) -> list[StartConfig]:
    """46 stress starts: grids over lateral offset (on-grass included),
    heading offset up to 60 degrees, and speed 0..80, pinned at the
    sharpest corner and the straightest tile of the track.
    """
    corner = track.sharpest_tile()
    straight = track.straightest_tile()
    anchors = (corner, straight)
    deg = math.radians
    starts: list[StartConfig] = []
    for tile in anchors:  # lateral sweep, 10
        for lat in (-0.3, -0.15, 0.0, 0.15, 0.3):
            starts.append(StartConfig(tile, lat, 0.0, 40.0))
    for tile in anchors:  # heading sweep, 8
        for off in (-deg(60), -deg(30), deg(30), deg(60)):
            starts.append(StartConfig(tile, 0.0, off, 40.0))
    for tile in anchors:  # speed sweep, 4
        for speed in (0.0, 80.0):
            starts.append(StartConfig(tile, 0.0, 0.0, speed))
    for tile in anchors:  # lateral x heading, 8
        for lat in (-0.15, 0.15):
            for off in (-deg(30), deg(30)):
                starts.append(StartConfig(tile, lat, off, 40.0))
    for tile in anchors:  # speed x lateral, 8
        for speed in (0.0, 80.0):
            for lat in (-0.15, 0.15):
                starts.append(StartConfig(tile, lat, 0.0, speed))
    for tile in anchors:  # speed x heading, 8
        for speed in (0.0, 80.0):
            for off in (-deg(30), deg(30)):
                starts.append(StartConfig(tile, 0.0, off, speed))
    assert len(starts) == 46
    return starts


def unseen_battery_starts(track: Track) -> list[StartConfig]:
    """47 starts for unseen-track evaluation: nominal plus the edge grid."""
    nominal = StartConfig(0, 0.0, 0.0, 40.0)
    return [nominal] + edge_case_starts(track)


def save_rollout(path, record: RolloutRecord) -> None:
    """Persist a rollout as a demo frame table plus a metadata line."""
    if record.observations is None or record.actions is None:
        raise SimError("rollout was run without frame recording; nothing to save")
    path = Path(path)
    steps = np.arange(len(record.observations), dtype=np.int64)
    demos = DemoSet(record.observations, record.actions, ("steer", "accelerate", "brake"),
                    ("rollout",) * len(steps), steps)
    save_frames(path, demos)
    meta = {
        "format": ROLLOUT_FORMAT,
        "track_seed": record.track_seed,
        "n_total": record.n_total,
        "start": {"tile": record.start.tile, "lateral": record.start.lateral,
                  "heading_offset": record.start.heading_offset, "speed": record.start.speed},
        "noise": None if record.noise is None else {"sigma": record.noise.sigma, "seed": record.noise.seed},
        "termination": record.termination,
        "t_total": record.t_total,
        "n_cutoff": record.n_cutoff,
        "t_cutoff": record.t_cutoff,
        "eas": record.eas,
    }
    body = path.read_text()
    head, rest = body.split("\n", 1)
    path.write_text(head + "\n# rollout " + json.dumps(meta) + "\n" + rest)


def load_rollout(path) -> RolloutRecord:
    """Read a saved rollout; the frame table loads as a plain demo set."""
    path = Path(path)
    meta = None
    for line in path.read_text().splitlines():
        if line.startswith("# rollout "):
            meta = json.loads(line[len("# rollout "):])
            break
    if meta is None or meta.get("format") != ROLLOUT_FORMAT:
        raise SimError(f"{path}: not a rollout record")
    demos = load_frames(path)
    start = StartConfig(**meta["start"])
    noise = NoiseSpec(**meta["noise"]) if meta["noise"] is not None else None
    return RolloutRecord(
        track_seed=int(meta["track_seed"]), n_total=int(meta["n_total"]), start=start,
        noise=noise, termination=str(meta["termination"]), t_total=float(meta["t_total"]),
        n_cutoff=int(meta["n_cutoff"]), t_cutoff=float(meta["t_cutoff"]), eas=float(meta["eas"]),
        observations=demos.observations, actions=demos.actions,
        states=None,
    )
