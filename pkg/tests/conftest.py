"""Shared fixtures: the cruise-controller golden graph and tolerances."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # oracles/generators importable as top-level

from steerlab.graph import (
    ACTION,
    LATENT,
    OBSERVED,
    FeatureNode,
    OperatorNode,
    PolicyStructure,
    WeightVector,
    WeightedEdge,
)

FIXTURES = Path(__file__).parent.parent / "fixtures"


def build_cruise_graph() -> tuple[PolicyStructure, WeightVector]:
    """The proportional cruise controller, wired by hand.

    One observed speed, a constant-backed desired speed, their difference,
    and two rectified branches driving accelerate and brake.  Weight order:
    desired-speed scale, the two difference signs, the difference
    pass-through, the two rectifier feeds, and the two action gains.
    """
    features = [
        FeatureNode("O1", "current_speed", OBSERVED),
        FeatureNode("L2", "desired_speed", LATENT),
        FeatureNode("L3", "speed_diff", LATENT),
        FeatureNode("A4", "accelerate", ACTION, clip=(0.0, 1.0)),
        FeatureNode("A5", "brake", ACTION, clip=(0.0, 1.0)),
    ]
    operators = [
        OperatorNode("P1", "constant", (1.0,)),
        OperatorNode("P2", "sum"),
        OperatorNode("P3", "relu"),
        OperatorNode("P4", "relu"),
    ]
    edges = [
        WeightedEdge("P1", "L2", index=0),
        WeightedEdge("O1", "P2", index=1),
        WeightedEdge("L2", "P2", index=2),
        WeightedEdge("P2", "L3", index=3),
        WeightedEdge("L3", "P3", index=4),
        WeightedEdge("L3", "P4", index=5),
        WeightedEdge("P3", "A4", index=6),
        WeightedEdge("P4", "A5", index=7),
    ]
    weights = WeightVector.of([60.0, -1.0, 1.0, 1.0, 1.0, -1.0, 0.1, 0.1])
    return PolicyStructure(features, operators, edges), weights


@pytest.fixture
def cruise_graph():
    return build_cruise_graph()


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(20260814)))
