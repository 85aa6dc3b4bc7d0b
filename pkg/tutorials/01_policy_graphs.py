"""Build a policy graph by hand, run it, and inspect its gradients.

A structured policy is a small wiring diagram: named feature nodes
(observed inputs, latent quantities, actions) connected through operator
nodes, with one learnable weight per edge.  This script wires the
proportional cruise controller directly against the graph API, evaluates
it at a few speeds, and shows how reverse mode pushes a loss gradient
back onto the edge weights.
"""

import numpy as np

from steerlab.graph import (
    ACTION,
    LATENT,
    OBSERVED,
    FeatureNode,
    OperatorNode,
    PolicyStructure,
    WeightVector,
    WeightedEdge,
    backward,
    evaluate,
    validate_structure,
)

# The controller: desired speed is a constant scaled by weight 0, the
# difference against the observed speed splits into two rectified
# branches, and each branch drives a pedal through its own gain.
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
structure = PolicyStructure(features, operators, edges)
weights = WeightVector.of([60.0, -1.0, 1.0, 1.0, 1.0, -1.0, 0.1, 0.1])

problems = validate_structure(structure)
print("validation:", problems or "clean")

for speed in (20.0, 40.0, 60.0, 80.0):
    action, trace = evaluate(structure, weights, {"current_speed": speed})
    diff = float(trace.values["L3"][0, 0])
    print(f"speed {speed:5.1f}  diff {diff:+6.1f}  "
          f"accelerate {action[0]:.2f}  brake {action[1]:.2f}")

# Reverse mode: seed the action gradient and read off one number per
# weight.  Speed 55 keeps accelerate inside its clip range, so its branch
# carries gradient while the dead brake branch (weights 5 and 7) gets
# exactly zero.  At speed 40 the pedal saturates and everything would be
# zero instead; clipped actions are flat at their bounds.
_, trace = evaluate(structure, weights, {"current_speed": 55.0})
grads = backward(trace, np.array([1.0, 1.0]))
for i, g in enumerate(grads):
    print(f"  d(action sum)/d(weight {i}) = {g:+.3f}")
