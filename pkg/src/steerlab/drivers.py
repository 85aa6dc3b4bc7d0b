"""Rollout callables: scripted reference drivers and policy adapters.

The simulator drives any callable from a flat observation (58,) to the
action triple (steer, accelerate, brake).  This module wraps the three
policy kinds behind that signature and provides the scripted
pure-pursuit driver used for calibration, demo synthesis, and as a
performance reference.
"""

from __future__ import annotations

import numpy as np

from .dense import DensePolicy, dense_forward
from .graph import PolicyStructure, WeightVector, evaluate_batch
from .observation import ACTION_NAMES, split


def constant_driver(steer: float = 0.0, accelerate: float = 0.0, brake: float = 0.0):
    fixed = np.array([steer, accelerate, brake], dtype=np.float64)

    def drive(flat: np.ndarray) -> np.ndarray:
        return fixed

    return drive


def graph_driver(structure: PolicyStructure, weights: WeightVector):
    """Adapt a structured policy; actions it does not produce hold zero."""
    produced = {name: i for i, name in enumerate(structure.action_names)}

    def drive(flat: np.ndarray) -> np.ndarray:
        named = split(np.asarray(flat, dtype=np.float64)[None, :])
        actions, _ = evaluate_batch(structure, weights, named)
        out = np.zeros(len(ACTION_NAMES))
        for j, name in enumerate(ACTION_NAMES):
            if name in produced:
                out[j] = actions[0, produced[name]]
        return out

    return drive


def dense_driver(policy: DensePolicy):
    def drive(flat: np.ndarray) -> np.ndarray:
        return dense_forward(policy, flat)

    return drive


def scripted_driver(aim_tile: int = 5, fast: float = 95.0, slow: float = 55.0,
                    bend_full: float = 0.16, pedal_gain: float = 0.08):
    """Pure pursuit from the observation alone.

    Steering chases the ``aim_tile``-th lookahead tile with the classic
    curvature rule (full lock equals curvature 1); the speed target backs
    off from ``fast`` to ``slow`` as the relative heading of the far
    tiles swings, and the pedals close the speed error proportionally.
    """

    def drive(flat: np.ndarray) -> np.ndarray:
        named = split(np.asarray(flat, dtype=np.float64))
        x = named["tile_x"]
        y = named["tile_y"]
        theta = named["tile_theta"]
        speed = float(named["speed"]) * 100.0

        xi, yi = float(x[aim_tile]), float(y[aim_tile])
        d2 = xi * xi + yi * yi
        # x is positive with the tile to the car's right, and positive
        # steer turns right, so chase the tile with the same sign.
        steer = 0.0 if d2 < 1e-12 else float(np.clip(2.0 * xi / d2, -1.0, 1.0))

        bend = float(np.max(np.abs(theta[3:])))
        target = fast - (fast - slow) * min(1.0, bend / bend_full)
        err = target - speed
        accelerate = float(np.clip(pedal_gain * err, 0.0, 1.0))
        brake = float(np.clip(-pedal_gain * err, 0.0, 1.0))
        return np.array([steer, accelerate, brake])

    return drive
