"""Policy graph core: evaluation, validation, and reverse-mode gradients."""

from __future__ import annotations

import numpy as np
import pytest

from steerlab.graph import (
    ACTION,
    LATENT,
    OBSERVED,
    MAX_NODES,
    FeatureNode,
    GraphError,
    OperatorNode,
    PolicyStructure,
    WeightVector,
    WeightedEdge,
    backward,
    evaluate,
    evaluate_batch,
    validate_structure,
    weight_checksum,
)

import generators
import oracles
from conftest import build_cruise_graph


def test_cruise_graph_golden(cruise_graph):
    """Frozen intermediate values of the hand-wired cruise controller at speed 40."""
    structure, weights = cruise_graph
    action, trace = evaluate(structure, weights, {"current_speed": 40.0})

    expected = {"P1": 1.0, "L2": 60.0, "P2": 20.0, "L3": 20.0, "P3": 20.0, "P4": 0.0}
    for nid, want in expected.items():
        assert abs(float(trace.values[nid][0, 0]) - want) < 1e-9, nid
    # The accelerate node carries gain * rectified difference; the clipped
    # action saturates at its upper bound while brake stays exactly zero.
    gain = float(weights.values[6])
    assert float(trace.values["A4"][0, 0]) == pytest.approx(gain * 20.0, abs=1e-9)
    assert float(trace.values["A5"][0, 0]) == 0.0
    assert action[0] == 1.0
    assert action[1] == 0.0


def test_cruise_graph_validates_clean(cruise_graph):
    structure, _ = cruise_graph
    assert validate_structure(structure) == []


def test_evaluate_matches_bruteforce_interpreter():
    """20 random graphs agree with the dependency-resolution oracle to 1e-12."""
    for seed in range(20):
        structure, weights, obs = generators.smooth_case(1000 + seed)
        assert validate_structure(structure) == []
        action, _ = evaluate(structure, weights, obs)
        oracle_action, _ = oracles.interpret_graph(structure, weights, obs)
        assert np.allclose(action, oracle_action, atol=1e-12, rtol=0)


def test_backward_matches_finite_differences():
    for seed in range(8):
        structure, weights, obs = generators.smooth_case(2000 + seed)
        _, trace = evaluate(structure, weights, obs)
        ag = np.ones(trace.action.shape[-1])
        analytic = backward(trace, ag)
        numeric = oracles.fd_weight_gradient(
            lambda s, w, o: (evaluate(s, w, o)[0], None), structure, weights, obs, ag
        )
        numeric[weights.frozen] = 0.0
        scale = np.maximum(1.0, np.maximum(np.abs(numeric), np.abs(analytic)))
        assert np.all(np.abs(analytic - numeric) / scale < 1e-4), seed


def test_weight_sharing_accumulates():
    """One index reused on two edges gets the sum of both edge gradients."""
    features = [
        FeatureNode("x", "x", OBSERVED),
        FeatureNode("y", "y", OBSERVED),
        FeatureNode("out", "out", ACTION),
    ]
    operators = [OperatorNode("add", "sum")]
    edges = [
        WeightedEdge("x", "add", index=0),
        WeightedEdge("y", "add", index=0),
        WeightedEdge("add", "out", value=1.0),
    ]
    structure = PolicyStructure(features, operators, edges)
    weights = WeightVector.of([0.7])
    obs = {"x": 2.0, "y": 5.0}
    action, trace = evaluate(structure, weights, obs)
    assert action[0] == pytest.approx(0.7 * 7.0)
    grad = backward(trace, np.array([1.0]))
    assert grad[0] == pytest.approx(2.0 + 5.0)


def test_frozen_weights_get_zero_gradient():
    structure, weights, obs = generators.smooth_case(31, require_op="product")
    if not weights.frozen.any():
        weights.frozen[0] = True
    _, trace = evaluate(structure, weights, obs)
    grad = backward(trace, np.ones(trace.action.shape[-1]))
    assert np.all(grad[weights.frozen] == 0.0)


def test_subgradient_conventions():
    """relu'(0)=0, clamp dead at bounds, select routes only the taken branch."""
    def single(op, args, obs_vals, n_inputs):
        features = [FeatureNode(f"x{i}", f"x{i}", OBSERVED) for i in range(n_inputs)]
        features.append(FeatureNode("a", "a", ACTION))
        ops = [OperatorNode("p", op, args)]
        edges = [WeightedEdge(f"x{i}", "p", index=i) for i in range(n_inputs)]
        edges.append(WeightedEdge("p", "a", index=n_inputs))
        structure = PolicyStructure(features, ops, edges)
        weights = WeightVector.of([1.0] * (n_inputs + 1))
        obs = {f"x{i}": v for i, v in enumerate(obs_vals)}
        _, trace = evaluate(structure, weights, obs)
        return backward(trace, np.array([1.0]))

    # relu at exactly zero: no gradient through the input weight
    assert single("relu", (), [0.0], 1)[0] == 0.0
    # clamp: dead outside and at the bounds, alive inside
    assert single("clamp", (-1.0, 1.0), [1.0], 1)[0] == 0.0
    assert single("clamp", (-1.0, 1.0), [2.0], 1)[0] == 0.0
    assert single("clamp", (-1.0, 1.0), [0.5], 1)[0] == pytest.approx(0.5)
    # select: condition weight gets nothing, untaken branch gets nothing
    g = single("select", (), [2.0, 3.0, 5.0], 3)
    assert g[0] == 0.0 and g[1] == pytest.approx(3.0) and g[2] == 0.0
    g = single("select", (), [-2.0, 3.0, 5.0], 3)
    assert g[0] == 0.0 and g[1] == 0.0 and g[2] == pytest.approx(5.0)
    # min tie: the first input wins the subgradient
    g = single("min", (), [4.0, 4.0], 2)
    assert g[0] == pytest.approx(4.0) and g[1] == 0.0
    # abs at zero
    assert single("abs", (), [0.0], 1)[0] == 0.0


def test_action_clip_subgradient_dead_at_bounds():
    features = [FeatureNode("x", "x", OBSERVED), FeatureNode("a", "a", ACTION, clip=(0.0, 1.0))]
    ops = [OperatorNode("p", "sum")]
    edges = [WeightedEdge("x", "p", index=0), WeightedEdge("p", "a", value=1.0)]
    structure = PolicyStructure(features, ops, edges)

    _, trace = evaluate(structure, WeightVector.of([1.0]), {"x": 0.0})  # exactly at the lower bound
    assert backward(trace, np.array([1.0]))[0] == 0.0
    _, trace = evaluate(structure, WeightVector.of([1.0]), {"x": 2.0})  # saturated above
    assert backward(trace, np.array([1.0]))[0] == 0.0
    _, trace = evaluate(structure, WeightVector.of([1.0]), {"x": 0.5})
    assert backward(trace, np.array([1.0]))[0] == pytest.approx(0.5)


def test_vector_broadcast_and_reduction():
    features = [
        FeatureNode("s", "s", OBSERVED),
        FeatureNode("v", "v", OBSERVED, size=4),
        FeatureNode("lift", "lift", LATENT, size=4),
        FeatureNode("a", "a", ACTION),
    ]
    ops = [OperatorNode("add", "sum"), OperatorNode("mu", "mean")]
    edges = [
        WeightedEdge("s", "add", value=1.0),
        WeightedEdge("v", "add", value=1.0),
        WeightedEdge("add", "lift", value=1.0),
        WeightedEdge("lift", "mu", index=0),
        WeightedEdge("mu", "a", value=1.0),
    ]
    structure = PolicyStructure(features, ops, edges)
    assert validate_structure(structure) == []
    weights = WeightVector.of([2.0])
    obs = {"s": 10.0, "v": np.array([1.0, 2.0, 3.0, 4.0])}
    action, trace = evaluate(structure, weights, obs)
    assert action[0] == pytest.approx(2.0 * (10.0 + 2.5))
    grad = backward(trace, np.array([1.0]))
    assert grad[0] == pytest.approx(12.5)


def test_stack_builds_vectors():
    features = [
        FeatureNode("x", "x", OBSERVED),
        FeatureNode("y", "y", OBSERVED),
        FeatureNode("pair", "pair", LATENT, size=2),
        FeatureNode("a", "a", ACTION),
    ]
    ops = [OperatorNode("st", "stack"), OperatorNode("mu", "mean")]
    edges = [
        WeightedEdge("x", "st", value=1.0),
        WeightedEdge("y", "st", value=3.0),
        WeightedEdge("st", "pair", value=1.0),
        WeightedEdge("pair", "mu", value=1.0),
        WeightedEdge("mu", "a", value=1.0),
    ]
    structure = PolicyStructure(features, ops, edges)
    assert validate_structure(structure) == []
    action, trace = evaluate(structure, WeightVector.of([]), {"x": 2.0, "y": 1.0})
    assert list(trace.values["pair"][0]) == [2.0, 3.0]
    assert action[0] == pytest.approx(2.5)


def test_batch_evaluation_matches_single():
    structure, weights, _ = generators.smooth_case(77)
    rng = np.random.Generator(np.random.PCG64(5))
    singles = [generators.random_observation(rng, structure) for _ in range(6)]
    batch = {
        name: np.stack([np.asarray(o[name], dtype=float) for o in singles])
        for name in singles[0]
    }
    batched_actions, btrace = evaluate_batch(structure, weights, batch)
    grads_sum = np.zeros(len(weights.values))
    for i, obs in enumerate(singles):
        action, trace = evaluate(structure, weights, obs)
        assert np.allclose(action, batched_actions[i], atol=1e-12)
        grads_sum += backward(trace, np.ones(len(action)))
    batch_grad = backward(btrace, np.ones_like(batched_actions))
    assert np.allclose(batch_grad, grads_sum, atol=1e-9)


def test_action_order_and_clip():
    features = [
        FeatureNode("x", "x", OBSERVED),
        FeatureNode("a2", "second", ACTION, clip=(0.0, 1.0)),
        FeatureNode("a1", "first", ACTION, clip=(-1.0, 1.0)),
    ]
    # declaration order of action features defines the output order,
    # regardless of edge or operator order
    features = [features[0], features[2], features[1]]
    ops = [OperatorNode("p", "sum"), OperatorNode("q", "negate")]
    edges = [
        WeightedEdge("x", "p", value=1.0),
        WeightedEdge("x", "q", value=1.0),
        WeightedEdge("p", "a1", value=1.0),
        WeightedEdge("q", "a2", value=1.0),
    ]
    structure = PolicyStructure(features, ops, edges)
    action, _ = evaluate(structure, WeightVector.of([]), {"x": 0.4})
    assert action == pytest.approx([0.4, 0.0])


def test_trace_replay_is_bit_exact(cruise_graph):
    structure, weights = cruise_graph
    a1, t1 = evaluate(structure, weights, {"current_speed": 43.2})
    a2, t2 = evaluate(structure, weights, {"current_speed": 43.2})
    assert a1.tobytes() == a2.tobytes()
    for nid in t1.values:
        assert np.asarray(t1.values[nid]).tobytes() == np.asarray(t2.values[nid]).tobytes()
    assert t1.records() == t2.records()


def test_edge_scaling_is_linear(cruise_graph):
    """Doubling one weight doubles that edge's contribution downstream."""
    structure, weights = cruise_graph
    _, t1 = evaluate(structure, weights, {"current_speed": 40.0})
    doubled = weights.copy()
    doubled.values[0] *= 2.0  # desired-speed scale
    _, t2 = evaluate(structure, doubled, {"current_speed": 40.0})
    assert float(t2.values["L2"][0, 0]) == pytest.approx(2.0 * float(t1.values["L2"][0, 0]))


def test_validate_rules():
    x = FeatureNode("x", "x", OBSERVED)
    a = FeatureNode("a", "a", ACTION)
    p = OperatorNode("p", "sum")

    def rules(structure):
        return {issue.rule for issue in validate_structure(structure)}

    # feature-to-feature edge breaks bipartiteness (and the operator arity)
    s = PolicyStructure([x, a], [p], [WeightedEdge("x", "a", value=1.0)])
    assert "not-bipartite" in rules(s)
    # duplicate names
    s = PolicyStructure([x, FeatureNode("x2", "x", OBSERVED), a], [p],
                        [WeightedEdge("x", "p", value=1.0), WeightedEdge("p", "a", value=1.0)])
    assert "duplicate-name" in rules(s)
    # observed node with a writer
    s = PolicyStructure([x, a], [p, OperatorNode("q", "negate")],
                        [WeightedEdge("x", "p", value=1.0), WeightedEdge("p", "a", value=1.0),
                         WeightedEdge("a", "q", value=1.0), WeightedEdge("q", "x", value=1.0)])
    assert "observed-written" in rules(s)
    # action with two writers
    s = PolicyStructure([x, a], [p, OperatorNode("q", "negate")],
                        [WeightedEdge("x", "p", value=1.0), WeightedEdge("x", "q", value=1.0),
                         WeightedEdge("p", "a", value=1.0), WeightedEdge("q", "a", value=1.0)])
    assert "single-writer" in rules(s)
    # arity violation
    s = PolicyStructure([x, a], [OperatorNode("p", "select")],
                        [WeightedEdge("x", "p", value=1.0), WeightedEdge("p", "a", value=1.0)])
    assert "operator-arity" in rules(s)
    # unknown operator
    s = PolicyStructure([x, a], [OperatorNode("p", "sigmoid")],
                        [WeightedEdge("x", "p", value=1.0), WeightedEdge("p", "a", value=1.0)])
    assert "unknown-operator" in rules(s)
    # an action pinned to a constant is deliberate and legal
    s = PolicyStructure([x, a], [p, OperatorNode("c", "constant", (1.0,))],
                        [WeightedEdge("x", "p", value=1.0), WeightedEdge("c", "a", value=1.0)])
    assert rules(s) == set()
    # cycle
    lat = FeatureNode("l", "l", LATENT)
    s = PolicyStructure([x, lat, a], [p, OperatorNode("q", "sum")],
                        [WeightedEdge("l", "p", value=1.0), WeightedEdge("p", "l", value=1.0),
                         WeightedEdge("x", "q", value=1.0), WeightedEdge("q", "a", value=1.0)])
    assert "cycle" in rules(s)
    # both index and value on one edge
    s = PolicyStructure([x, a], [p],
                        [WeightedEdge("x", "p", index=0, value=1.0), WeightedEdge("p", "a", value=1.0)])
    assert "bad-weight" in rules(s)
    # clip range inverted
    bad_a = FeatureNode("a", "a", ACTION, clip=(1.0, -1.0))
    s = PolicyStructure([x, bad_a], [p],
                        [WeightedEdge("x", "p", value=1.0), WeightedEdge("p", "a", value=1.0)])
    assert "bad-clip" in rules(s)
    # width mismatch inside an elementwise operator
    v1 = FeatureNode("v1", "v1", OBSERVED, size=4)
    v2 = FeatureNode("v2", "v2", OBSERVED, size=8)
    s = PolicyStructure([v1, v2, a], [p],
                        [WeightedEdge("v1", "p", value=1.0), WeightedEdge("v2", "p", value=1.0),
                         WeightedEdge("p", "a", value=1.0)])
    assert "shape-mismatch" in rules(s)


def test_node_budget():
    features = [FeatureNode("x", "x", OBSERVED)]
    ops = []
    edges = []
    prev = "x"
    n = (MAX_NODES // 2) + 1
    for i in range(n):
        ops.append(OperatorNode(f"p{i}", "sum"))
        edges.append(WeightedEdge(prev, f"p{i}", value=1.0))
        kind = ACTION if i == n - 1 else LATENT
        features.append(FeatureNode(f"f{i}", f"f{i}", kind))
        edges.append(WeightedEdge(f"p{i}", f"f{i}", value=1.0))
        prev = f"f{i}"
    structure = PolicyStructure(features, ops, edges)
    assert any(issue.rule == "node-budget" for issue in validate_structure(structure))


def test_missing_observation_raises(cruise_graph):
    structure, weights = cruise_graph
    with pytest.raises(GraphError, match="current_speed"):
        evaluate(structure, weights, {})


def test_weight_checksum_stability():
    w = np.array([1.0, -2.5, 3.125])
    assert weight_checksum(w) == weight_checksum(w.copy())
    assert weight_checksum(w) != weight_checksum(w + 1e-12)
