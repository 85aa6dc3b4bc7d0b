"""Canonical observation layout shared by the simulator, trainer, and DSL.

An observation is a lookahead block of 8 road tiles (7 features each,
nearest tile first) plus 7 car indicators.  Only the first two indicator
slots are populated; the flat vector fed to dense policies keeps exactly
those two, giving width 8*7 + 2 = 58.

Tile features (per tile): x, y, reserved, reserved, theta, reserved, border.
  x      signed lateral offset, positive = car left of the tile center
  y      signed longitudinal offset of the tile, positive = ahead of the car
  theta  tile heading relative to the car, in units of pi (+1 = 180deg left)
  border 1.0 on sharp-corner tiles, else 0.0
Indicators: speed (0..100 scaled to 0..1), heading (absolute, -pi..pi scaled
to -1..1), five reserved zeros.
"""

from __future__ import annotations

import numpy as np

TILE_COUNT = 8
TILE_FEATURES = 7
INDICATOR_COUNT = 7
FLAT_WIDTH = TILE_COUNT * TILE_FEATURES + 2  # 58

# Tile feature columns.
COL_X = 0
COL_Y = 1
COL_THETA = 4
COL_BORDER = 6

# Observed feature names exposed to policy programs: name -> vector length
# (None = scalar).  These are the only names the driving schema binds.
FEATURE_SIZES: dict[str, int | None] = {
    "tile_x": TILE_COUNT,
    "tile_y": TILE_COUNT,
    "tile_theta": TILE_COUNT,
    "tile_border": TILE_COUNT,
    "speed": None,
    "heading": None,
}

_TILE_COLUMNS = {"tile_x": COL_X, "tile_y": COL_Y, "tile_theta": COL_THETA, "tile_border": COL_BORDER}


def flatten(tiles: np.ndarray, indicators: np.ndarray) -> np.ndarray:
    """Pack a (..., 8, 7) tile block and (..., 7) indicators into (..., 58).

    Reserved indicator slots 2..6 are dropped; they are zero by contract.
    """
    tiles = np.asarray(tiles, dtype=np.float64)
    indicators = np.asarray(indicators, dtype=np.float64)
    if tiles.shape[-2:] != (TILE_COUNT, TILE_FEATURES):
        raise ValueError(f"tile block must end in ({TILE_COUNT}, {TILE_FEATURES}), got {tiles.shape}")
    if indicators.shape[-1] != INDICATOR_COUNT:
        raise ValueError(f"indicator block must end in ({INDICATOR_COUNT},), got {indicators.shape}")
    lead = tiles.shape[:-2]
    flat_tiles = tiles.reshape(lead + (TILE_COUNT * TILE_FEATURES,))
    return np.concatenate([flat_tiles, indicators[..., :2]], axis=-1)


def split(flat: np.ndarray) -> dict[str, np.ndarray]:
    """Unpack (..., 58) vectors into named features for structured policies."""
    flat = np.asarray(flat, dtype=np.float64)
    if flat.shape[-1] != FLAT_WIDTH:
        raise ValueError(f"expected width {FLAT_WIDTH}, got {flat.shape[-1]}")
    lead = flat.shape[:-1]
    tiles = flat[..., : TILE_COUNT * TILE_FEATURES].reshape(lead + (TILE_COUNT, TILE_FEATURES))
    named: dict[str, np.ndarray] = {name: tiles[..., col] for name, col in _TILE_COLUMNS.items()}
    named["speed"] = flat[..., TILE_COUNT * TILE_FEATURES]
    named["heading"] = flat[..., TILE_COUNT * TILE_FEATURES + 1]
    return named


# Canonical driving actions, in wire order, with their clip ranges.
ACTION_NAMES = ("steer", "accelerate", "brake")
ACTION_RANGES = {"steer": (-1.0, 1.0), "accelerate": (0.0, 1.0), "brake": (0.0, 1.0)}
