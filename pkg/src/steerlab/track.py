"""Closed driving circuits built from spline-smoothed random checkpoints.

A track is a ring of equally spaced tile centers with a tangent heading
per tile.  Generation jitters checkpoints around a circle, fits a
periodic cubic spline, resamples it into exactly the requested tile
count at uniform arc length, and rescales so tiles sit ``TILE_SPACING``
apart.  Candidates whose corners turn faster than a drivable car can
follow are rejected and regenerated from a sub-seed, so any accepted
track is completable at full steering lock.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

TILE_SPACING = 0.13
ROAD_HALF_WIDTH = 0.2
# Full steer holds a turn radius of 1.0 world unit, or 7.45 degrees per
# tile length; capping corners at 5 degrees keeps them takeable with
# margin.  Tiles turning faster than half the cap flag as borders.
MAX_TURN_PER_TILE = math.radians(5.0)
BORDER_TURN_PER_TILE = math.radians(2.5)

MIN_TILES = 50
DEFAULT_TILES = 300


class TrackError(Exception):
    pass


@dataclass
class Track:
    seed: int
    centers: np.ndarray  # (n, 2)
    headings: np.ndarray  # (n,) direction of travel, radians
    turns: np.ndarray  # (n,) signed heading change to the next tile
    half_width: float = ROAD_HALF_WIDTH
    border: np.ndarray = field(init=False)  # (n,) sharp-corner flags

    def __post_init__(self) -> None:
        self.centers = np.asarray(self.centers, dtype=np.float64)
        self.headings = np.asarray(self.headings, dtype=np.float64)
        self.turns = np.asarray(self.turns, dtype=np.float64)
        self.border = np.abs(self.turns) > BORDER_TURN_PER_TILE

    @property
    def n_tiles(self) -> int:
        return len(self.centers)

    def nearest_tile(self, pos: np.ndarray, hint: int | None = None) -> int:
        """Index of the closest tile center; a hint keeps the search local."""
        pos = np.asarray(pos, dtype=np.float64)
        n = self.n_tiles
        if hint is not None:
            window = np.arange(hint - 15, hint + 16) % n
            d2 = np.sum((self.centers[window] - pos) ** 2, axis=1)
            best = int(np.argmin(d2))
            # Trust the window only while the car is near the road; a car
            # carried far off re-localizes with the global scan below.
            if d2[best] <= (3.0 * ROAD_HALF_WIDTH) ** 2:
                return int(window[best])
        d2 = np.sum((self.centers - pos) ** 2, axis=1)
        return int(np.argmin(d2))

    def lateral_offset(self, pos: np.ndarray, tile: int) -> float:
        """Signed distance from the centerline at a tile; + is road-right.

        The world uses screen orientation (y grows downward), so the right
        hand side of a heading h is the unit vector (-sin h, cos h).
        """
        h = self.headings[tile]
        right = np.array([-math.sin(h), math.cos(h)])
        return float(np.dot(np.asarray(pos) - self.centers[tile], right))

    def straightest_tile(self) -> int:
        return int(np.argmin(np.abs(self.turns)))

    def sharpest_tile(self) -> int:
        return int(np.argmax(np.abs(self.turns)))


def generate_track(seed: int, n_tiles: int = DEFAULT_TILES, checkpoints: int | None = None,
                   base_radius: float | None = None, radial_jitter: float = 1.0,
                   retries: int = 25) -> Track:
    """A drivable closed circuit of exactly ``n_tiles`` tiles.

    Deterministic in ``seed``.  ``radial_jitter`` scales the checkpoint
    randomness; 0 degenerates to a circle.  Raises ``TrackError`` when no
    candidate passes the curvature cap within ``retries`` attempts.
    """
    if n_tiles < MIN_TILES:
        raise TrackError(f"need at least {MIN_TILES} tiles, got {n_tiles}")
    if checkpoints is None:
        # Jitter curvature grows with the square of the checkpoint count
        # while tile length shrinks with the count, so scaling checkpoints
        # with sqrt(n) keeps the turn per tile roughly invariant.
        checkpoints = max(4, min(40, round(0.7 * math.sqrt(n_tiles))))
    if base_radius is None:
        base_radius = 0.5 * checkpoints
    # A degenerate circle turns 2*pi/n per tile; never cap below that.
    cap = max(MAX_TURN_PER_TILE, 1.5 * 2.0 * math.pi / n_tiles)
    for attempt in range(retries):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, attempt))))
        candidate = _candidate(rng, seed, n_tiles, checkpoints, base_radius, radial_jitter, cap)
        if candidate is not None:
            return candidate
    raise TrackError(f"no drivable track from seed {seed} after {retries} attempts")


def _candidate(rng: np.random.Generator, seed: int, n_tiles: int, checkpoints: int,
               base_radius: float, radial_jitter: float, cap: float) -> Track | None:
    step = 2.0 * math.pi / checkpoints
    angles = np.arange(checkpoints) * step
    angles = angles + radial_jitter * rng.uniform(-0.2 * step, 0.2 * step, checkpoints)
    radii = base_radius * (1.0 + radial_jitter * rng.uniform(-0.30, 0.30, checkpoints))
    # A raw radius walk kinks the spline past any drivable curvature; one
    # circular moving average keeps the corners inside the cap most draws.
    radii = (radii + np.roll(radii, 1) + np.roll(radii, -1)) / 3.0
    pts = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)

    # Periodic spline through the checkpoints, then equal arc-length tiles.
    closed = np.vstack([pts, pts[:1]])
    t = np.arange(checkpoints + 1, dtype=np.float64)
    spline = CubicSpline(t, closed, axis=0, bc_type="periodic")
    samples = max(4096, 8 * n_tiles)
    dense = spline(np.linspace(0.0, checkpoints, samples, endpoint=False))
    seg = np.linalg.norm(np.diff(dense, axis=0, append=dense[:1]), axis=1)
    arclen = np.concatenate([[0.0], np.cumsum(seg)])[:-1]
    total = float(arclen[-1] + seg[-1])

    marks = np.arange(n_tiles) * (total / n_tiles)
    centers = np.empty((n_tiles, 2))
    for axis in (0, 1):
        centers[:, axis] = np.interp(marks, arclen, dense[:, axis], period=total)
    centers *= (n_tiles * TILE_SPACING) / total

    ahead = np.roll(centers, -1, axis=0)
    behind = np.roll(centers, 1, axis=0)
    headings = np.arctan2(ahead[:, 1] - behind[:, 1], ahead[:, 0] - behind[:, 0])
    turns = wrap_angle(np.roll(headings, -1) - headings)
    if np.max(np.abs(turns)) > cap:
        return None
    return Track(seed, centers, headings, turns)


def wrap_angle(angle):
    """Wrap angles to [-pi, pi)."""
    return np.mod(np.asarray(angle) + math.pi, 2.0 * math.pi) - math.pi
