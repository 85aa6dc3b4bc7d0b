"""Sparse differentiable policy graphs.

A policy is a weighted, directed, acyclic, *bipartite* graph: feature nodes
(observed inputs, latent intermediates, actions) alternate with operator
nodes drawn from a small closed set.  Every edge scales the value flowing
across it, either by a learnable entry of the weight vector or by a fixed
constant.  Evaluation is one topological sweep; ``backward`` replays the
recorded trace in reverse and accumulates exact subgradients for every
learnable weight, including shared and frozen entries.

Values are scalars or fixed-length vectors.  Internally everything carries
a leading batch axis and a trailing width axis (width 1 for scalars), so a
whole training batch evaluates in one sweep of vectorized operations.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

OBSERVED = "observed"
LATENT = "latent"
ACTION = "action"

MAX_NODES = 256  # compile-time budget on features + operators


class GraphError(Exception):
    """Raised when a structure cannot be evaluated as requested."""


@dataclass(frozen=True)
class OpSpec:
    min_arity: int
    max_arity: int | None  # None = unbounded
    static_args: int


# The closed operator set.  Static args: constant carries its emitted value,
# clamp carries (lo, hi).
OPERATORS: dict[str, OpSpec] = {
    "constant": OpSpec(0, 0, 1),
    "sum": OpSpec(1, None, 0),
    "product": OpSpec(1, None, 0),
    "negate": OpSpec(1, 1, 0),
    "relu": OpSpec(1, 1, 0),
    "abs": OpSpec(1, 1, 0),
    "clamp": OpSpec(1, 1, 2),
    "min": OpSpec(2, None, 0),
    "max": OpSpec(2, None, 0),
    "select": OpSpec(3, 3, 0),
    "square": OpSpec(1, 1, 0),
    "mean": OpSpec(1, 1, 0),
    "stack": OpSpec(2, None, 0),
}


@dataclass(frozen=True)
class FeatureNode:
    """A semantic quantity: an observed input, a latent value, or an action.

    ``size`` is None for scalars, or the vector length.  ``clip`` is the
    (lo, hi) range applied to action nodes when the action vector is
    reconstructed; it never appears on other kinds.
    """

    id: str
    name: str
    kind: str
    size: int | None = None
    clip: tuple[float, float] | None = None

    @property
    def width(self) -> int:
        return 1 if self.size is None else self.size


@dataclass(frozen=True)
class OperatorNode:
    id: str
    op: str
    args: tuple[float, ...] = ()


@dataclass(frozen=True)
class WeightedEdge:
    """Directed edge; exactly one of ``index`` (learnable) or ``value`` is set."""

    source: str
    target: str
    index: int | None = None
    value: float | None = None


@dataclass
class WeightVector:
    """Learnable edge weights plus a per-entry freeze mask."""

    values: np.ndarray
    frozen: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.frozen = np.asarray(self.frozen, dtype=bool)
        if self.values.shape != self.frozen.shape or self.values.ndim != 1:
            raise ValueError("weight values and frozen mask must be parallel 1-d arrays")

    @classmethod
    def of(cls, values: Iterable[float], frozen: Iterable[bool] | None = None) -> "WeightVector":
        vals = np.asarray(list(values), dtype=np.float64)
        mask = np.zeros(len(vals), dtype=bool) if frozen is None else np.asarray(list(frozen), dtype=bool)
        return cls(vals, mask)

    def copy(self) -> "WeightVector":
        return WeightVector(self.values.copy(), self.frozen.copy())


def weight_checksum(values: np.ndarray) -> str:
    """Stable hex digest of a weight vector (little-endian float64 bytes)."""
    data = np.ascontiguousarray(np.asarray(values, dtype="<f8"))
    return hashlib.sha256(data.tobytes()).hexdigest()


@dataclass(frozen=True)
class GraphIssue:
    rule: str
    message: str
    where: str | None = None

    def __str__(self) -> str:
        loc = f" ({self.where})" if self.where else ""
        return f"[{self.rule}]{loc} {self.message}"


class _Plan:
    """Cached evaluation order and adjacency for one structure."""

    def __init__(self, structure: "PolicyStructure") -> None:
        self.features = {f.id: f for f in structure.features}
        self.operators = {o.id: o for o in structure.operators}
        self.incoming: dict[str, list[WeightedEdge]] = {nid: [] for nid in (*self.features, *self.operators)}
        for edge in structure.edges:
            self.incoming[edge.target].append(edge)
        self.order = self._topo_order(structure)
        self.actions = [f for f in structure.features if f.kind == ACTION]
        self.observed = [f for f in structure.features if f.kind == OBSERVED]
        self.widths = self._infer_widths()

    def _topo_order(self, structure: "PolicyStructure") -> list[str]:
        ids = [*(f.id for f in structure.features), *(o.id for o in structure.operators)]
        pending = {nid: len(self.incoming[nid]) for nid in ids}
        downstream: dict[str, list[str]] = {nid: [] for nid in ids}
        for edge in structure.edges:
            downstream[edge.source].append(edge.target)
        ready = [nid for nid in ids if pending[nid] == 0]
        order: list[str] = []
        while ready:
            nid = ready.pop(0)
            order.append(nid)
            for nxt in downstream[nid]:
                pending[nxt] -= 1
                if pending[nxt] == 0:
                    ready.append(nxt)
        if len(order) != len(ids):
            raise GraphError("structure contains a cycle")
        return order

    def _infer_widths(self) -> dict[str, int]:
        widths: dict[str, int] = {}
        for nid in self.order:
            if nid in self.features:
                feat = self.features[nid]
                if feat.kind == OBSERVED:
                    widths[nid] = feat.width
                else:
                    src = self.incoming[nid][0].source if self.incoming[nid] else None
                    widths[nid] = widths.get(src, 1) if src else 1
            else:
                op = self.operators[nid]
                in_widths = [widths[e.source] for e in self.incoming[nid]]
                widths[nid] = _op_width(op, in_widths)
        return widths


def _op_width(op: OperatorNode, in_widths: list[int]) -> int:
    if op.op == "constant":
        return 1
    if op.op == "mean":
        return 1
    if op.op == "stack":
        return len(in_widths)
    wide = {w for w in in_widths if w > 1}
    if len(wide) > 1:
        raise GraphError(f"operator {op.id} ({op.op}) mixes vector widths {sorted(wide)}")
    return wide.pop() if wide else 1


@dataclass
class PolicyStructure:
    """The wiring of a policy graph.  Treated as immutable once built."""

    features: list[FeatureNode]
    operators: list[OperatorNode]
    edges: list[WeightedEdge]
    _plan: _Plan | None = field(default=None, repr=False, compare=False)

    def plan(self) -> _Plan:
        if self._plan is None:
            self._plan = _Plan(self)
        return self._plan

    @property
    def action_nodes(self) -> list[FeatureNode]:
        return [f for f in self.features if f.kind == ACTION]

    @property
    def action_names(self) -> list[str]:
        return [f.name for f in self.action_nodes]

    @property
    def action_width(self) -> int:
        return sum(f.width for f in self.action_nodes)

    def node_count(self) -> int:
        return len(self.features) + len(self.operators)


def validate_structure(structure: PolicyStructure) -> list[GraphIssue]:
    """Check every structural invariant; empty result means evaluable.

    Rules: unique ids and names, known operators with legal arity and static
    args, bipartite edges with exactly one weight source, observed nodes
    have no writer, every other feature exactly one, no cycles, every action
    reachable from some observed node, consistent vector widths, and the
    node-count budget.
    """
    issues: list[GraphIssue] = []
    features = {f.id: f for f in structure.features}
    operators = {o.id: o for o in structure.operators}

    seen_ids: set[str] = set()
    for nid in (*features, *operators):
        if nid in seen_ids:
            issues.append(GraphIssue("duplicate-id", f"node id {nid!r} declared more than once", nid))
        seen_ids.add(nid)
    if len(features) != len(structure.features):
        issues.append(GraphIssue("duplicate-id", "feature ids are not unique"))
    if len(operators) != len(structure.operators):
        issues.append(GraphIssue("duplicate-id", "operator ids are not unique"))

    names: set[str] = set()
    for feat in structure.features:
        if feat.name in names:
            issues.append(GraphIssue("duplicate-name", f"feature name {feat.name!r} reused", feat.id))
        names.add(feat.name)
        if feat.kind not in (OBSERVED, LATENT, ACTION):
            issues.append(GraphIssue("bad-kind", f"unknown feature kind {feat.kind!r}", feat.id))
        if feat.clip is not None:
            if feat.kind != ACTION:
                issues.append(GraphIssue("bad-clip", "clip range on a non-action feature", feat.id))
            elif not feat.clip[0] < feat.clip[1]:
                issues.append(GraphIssue("bad-clip", f"empty clip range {feat.clip}", feat.id))

    for op in structure.operators:
        spec = OPERATORS.get(op.op)
        if spec is None:
            issues.append(GraphIssue("unknown-operator", f"operator {op.op!r} is not in the closed set", op.id))
            continue
        if len(op.args) != spec.static_args:
            issues.append(GraphIssue("bad-static-args", f"{op.op} takes {spec.static_args} static args, got {len(op.args)}", op.id))
        elif op.op == "clamp" and not op.args[0] < op.args[1]:
            issues.append(GraphIssue("bad-static-args", f"clamp bounds {op.args} are not ordered", op.id))

    in_degree: dict[str, int] = {nid: 0 for nid in seen_ids}
    for edge in structure.edges:
        where = f"{edge.source}->{edge.target}"
        if edge.source not in seen_ids or edge.target not in seen_ids:
            issues.append(GraphIssue("unknown-endpoint", "edge references a missing node", where))
            continue
        src_is_feature = edge.source in features
        tgt_is_feature = edge.target in features
        if src_is_feature == tgt_is_feature:
            issues.append(GraphIssue("not-bipartite", "edge must connect a feature with an operator", where))
        if (edge.index is None) == (edge.value is None):
            issues.append(GraphIssue("bad-weight", "edge needs exactly one of index or fixed value", where))
        elif edge.index is not None and edge.index < 0:
            issues.append(GraphIssue("bad-weight", f"negative weight index {edge.index}", where))
        in_degree[edge.target] += 1

    for feat in structure.features:
        deg = in_degree.get(feat.id, 0)
        if feat.kind == OBSERVED and deg != 0:
            issues.append(GraphIssue("observed-written", f"observed feature {feat.name!r} has {deg} incoming edges", feat.id))
        if feat.kind in (LATENT, ACTION) and deg != 1:
            issues.append(GraphIssue("single-writer", f"{feat.kind} feature {feat.name!r} needs exactly 1 incoming edge, has {deg}", feat.id))
    for op in structure.operators:
        spec = OPERATORS.get(op.op)
        if spec is None:
            continue
        deg = in_degree.get(op.id, 0)
        if deg < spec.min_arity or (spec.max_arity is not None and deg > spec.max_arity):
            hi = "inf" if spec.max_arity is None else str(spec.max_arity)
            issues.append(GraphIssue("operator-arity", f"{op.op} takes {spec.min_arity}..{hi} inputs, has {deg}", op.id))

    if structure.node_count() > MAX_NODES:
        issues.append(GraphIssue("node-budget", f"{structure.node_count()} nodes exceed the budget of {MAX_NODES}"))

    if issues:
        return issues  # structural defects make the sweeps below unreliable

    try:
        plan = _Plan(structure)
    except GraphError as exc:
        return [GraphIssue("cycle" if "cycle" in str(exc) else "shape-mismatch", str(exc))]

    # Width inference may still reject mixed vector lengths inside operators.
    try:
        plan.widths
    except GraphError as exc:  # pragma: no cover - widths computed in __init__
        return [GraphIssue("shape-mismatch", str(exc))]

    # Actions fed only by constants are legal: anchoring an output to a fixed
    # value is a deliberate authoring move, and the single-writer and arity
    # rules above already guarantee every node has a defined value.
    for feat in structure.features:
        if feat.kind != OBSERVED and plan.widths[feat.id] != feat.width:
            issues.append(GraphIssue("shape-mismatch", f"feature {feat.name!r} declared width {feat.width}, computed {plan.widths[feat.id]}", feat.id))
    return issues


@dataclass
class EvaluationTrace:
    """Everything ``backward`` needs: per-node outputs plus the weights used."""

    structure: PolicyStructure
    weights: np.ndarray
    values: dict[str, np.ndarray]
    action: np.ndarray
    action_preclip: np.ndarray
    batched: bool
    frozen: np.ndarray | None = None

    def records(self) -> list[str]:
        """Line-delimited debug dump of the trace, in evaluation order."""
        plan = self.structure.plan()
        lines = []
        for nid in plan.order:
            kind = plan.features[nid].kind if nid in plan.features else plan.operators[nid].op
            vals = np.asarray(self.values[nid]).ravel()
            body = " ".join(repr(float(v)) for v in vals)
            lines.append(f"{nid}\t{kind}\t{body}")
        lines.append("action\t-\t" + " ".join(repr(float(v)) for v in np.asarray(self.action).ravel()))
        return lines


def _edge_weight(edge: WeightedEdge, weights: np.ndarray) -> float:
    if edge.value is not None:
        return edge.value
    if edge.index >= len(weights):
        raise GraphError(f"edge {edge.source}->{edge.target} wants weight {edge.index}, vector has {len(weights)}")
    return float(weights[edge.index])


def _op_forward(op: OperatorNode, inputs: list[np.ndarray], batch: int) -> np.ndarray:
    kind = op.op
    if kind == "constant":
        return np.full((batch, 1), op.args[0], dtype=np.float64)
    if kind == "sum":
        out = inputs[0]
        for x in inputs[1:]:
            out = out + x
        return out
    if kind == "product":
        out = inputs[0]
        for x in inputs[1:]:
            out = out * x
        return out
    if kind == "negate":
        return -inputs[0]
    if kind == "relu":
        return np.maximum(inputs[0], 0.0)
    if kind == "abs":
        return np.abs(inputs[0])
    if kind == "clamp":
        return np.clip(inputs[0], op.args[0], op.args[1])
    if kind == "min":
        out = inputs[0]
        for x in inputs[1:]:
            out = np.minimum(out, x)
        return out
    if kind == "max":
        out = inputs[0]
        for x in inputs[1:]:
            out = np.maximum(out, x)
        return out
    if kind == "select":
        cond, then, other = (np.broadcast_arrays(*inputs))
        return np.where(cond > 0.0, then, other)
    if kind == "square":
        return inputs[0] * inputs[0]
    if kind == "mean":
        if inputs[0].shape[1] < 2:
            raise GraphError(f"mean needs a vector input on {op.id}")
        return inputs[0].mean(axis=1, keepdims=True)
    if kind == "stack":
        for x in inputs:
            if x.shape[1] != 1:
                raise GraphError(f"stack takes scalar inputs on {op.id}")
        return np.concatenate(inputs, axis=1)
    raise GraphError(f"unknown operator {kind!r}")


def _op_backward(op: OperatorNode, adjoint: np.ndarray, inputs: list[np.ndarray], output: np.ndarray) -> list[np.ndarray]:
    """Adjoints of each input edge value, before unbroadcasting.

    Subgradient conventions: relu'(0) = 0; clamp passes gradient strictly
    inside (lo, hi) and zero at the bounds; select routes gradient only
    through the taken branch (none to the condition); min/max give the
    gradient to the first input attaining the extremum; abs'(0) = 0.
    """
    kind = op.op
    if kind == "constant":
        return []
    if kind == "sum":
        return [adjoint for _ in inputs]
    if kind == "product":
        grads = []
        for i in range(len(inputs)):
            rest = np.ones_like(output)
            for j, x in enumerate(inputs):
                if j != i:
                    rest = rest * x
            grads.append(adjoint * rest)
        return grads
    if kind == "negate":
        return [-adjoint]
    if kind == "relu":
        return [adjoint * (inputs[0] > 0.0)]
    if kind == "abs":
        return [adjoint * np.sign(inputs[0])]
    if kind == "clamp":
        lo, hi = op.args
        inside = (inputs[0] > lo) & (inputs[0] < hi)
        return [adjoint * inside]
    if kind in ("min", "max"):
        taken = np.zeros(np.broadcast_shapes(*(x.shape for x in inputs)), dtype=bool)
        grads = []
        for x in inputs:
            hit = (np.broadcast_to(x, taken.shape) == output) & ~taken
            grads.append(adjoint * hit)
            taken |= hit
        return grads
    if kind == "select":
        cond = np.broadcast_to(inputs[0], output.shape)
        take = cond > 0.0
        return [np.zeros_like(adjoint), adjoint * take, adjoint * ~take]
    if kind == "square":
        return [adjoint * 2.0 * inputs[0]]
    if kind == "mean":
        width = inputs[0].shape[1]
        return [np.repeat(adjoint, width, axis=1) / width]
    if kind == "stack":
        return [adjoint[:, i : i + 1] for i in range(len(inputs))]
    raise GraphError(f"unknown operator {kind!r}")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if shape[1] == 1 and grad.shape[1] != 1:
        return grad.sum(axis=1, keepdims=True)
    return np.broadcast_to(grad, shape).copy()


def _as_batch(value, width: int, batch: int | None, name: str):
    arr = np.asarray(value, dtype=np.float64)
    if width == 1:
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr[:, None]
        elif arr.ndim != 2 or arr.shape[1] != 1:
            raise GraphError(f"observation {name!r} should be scalar-shaped, got {arr.shape}")
    else:
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != width:
            raise GraphError(f"observation {name!r} should have width {width}, got {arr.shape}")
    if batch is not None and arr.shape[0] not in (batch, 1):
        raise GraphError(f"observation {name!r} batch {arr.shape[0]} disagrees with {batch}")
    return arr


def _forward(structure: PolicyStructure, weights: WeightVector | np.ndarray, observation: Mapping[str, object], batched: bool) -> EvaluationTrace:
    plan = structure.plan()
    wvals = weights.values if isinstance(weights, WeightVector) else np.asarray(weights, dtype=np.float64)

    arrays: dict[str, np.ndarray] = {}
    batch: int | None = None
    for feat in plan.observed:
        if feat.name not in observation:
            raise GraphError(f"observation is missing {feat.name!r}")
        arr = _as_batch(observation[feat.name], feat.width, None, feat.name)
        arrays[feat.id] = arr
        batch = max(batch or 1, arr.shape[0])
    if batch is None:
        batch = 1
    for feat in plan.observed:
        arr = arrays[feat.id]
        if arr.shape[0] == 1 and batch > 1:
            arrays[feat.id] = np.broadcast_to(arr, (batch, arr.shape[1]))
        elif arr.shape[0] != batch:
            raise GraphError(f"observation {feat.name!r} batch {arr.shape[0]} disagrees with {batch}")

    values: dict[str, np.ndarray] = dict(arrays)
    for nid in plan.order:
        if nid in values:
            continue
        edges = plan.incoming[nid]
        if nid in plan.operators:
            inputs = [_edge_weight(e, wvals) * values[e.source] for e in edges]
            values[nid] = _op_forward(plan.operators[nid], inputs, batch)
        else:
            edge = edges[0]
            values[nid] = _edge_weight(edge, wvals) * values[edge.source]

    if plan.actions:
        preclip = np.concatenate([values[f.id] for f in plan.actions], axis=1)
        clipped = preclip.copy()
        col = 0
        for feat in plan.actions:
            if feat.clip is not None:
                clipped[:, col : col + feat.width] = np.clip(clipped[:, col : col + feat.width], *feat.clip)
            col += feat.width
    else:
        preclip = np.zeros((batch, 0))
        clipped = preclip

    frozen = weights.frozen.copy() if isinstance(weights, WeightVector) else None
    return EvaluationTrace(structure, np.array(wvals, copy=True), values, clipped, preclip, batched, frozen)


def evaluate(structure: PolicyStructure, weights: WeightVector | np.ndarray, observation: Mapping[str, object]) -> tuple[np.ndarray, EvaluationTrace]:
    """Run one observation through the graph.

    Returns the reconstructed action vector (action nodes in declaration
    order, clip ranges applied) and the trace needed for ``backward``.
    """
    trace = _forward(structure, weights, observation, batched=False)
    return trace.action[0], trace


def evaluate_batch(structure: PolicyStructure, weights: WeightVector | np.ndarray, observations: Mapping[str, np.ndarray]) -> tuple[np.ndarray, EvaluationTrace]:
    """Vectorized ``evaluate``: every observed value carries a leading batch axis."""
    trace = _forward(structure, weights, observations, batched=True)
    return trace.action, trace


def backward(trace: EvaluationTrace, action_grad: np.ndarray) -> np.ndarray:
    """Reverse-mode gradient of ``action_grad . action`` w.r.t. the weights.

    Shared weights accumulate; frozen entries come back exactly zero.
    ``action_grad`` matches the action vector shape of the trace ((A,) for a
    single evaluation, (B, A) for a batch); batch contributions sum.
    """
    structure, plan = trace.structure, trace.structure.plan()
    wvals = trace.weights
    grad = np.zeros(len(wvals), dtype=np.float64)

    ag = np.asarray(action_grad, dtype=np.float64)
    if not trace.batched:
        ag = ag.reshape(1, -1)
    if ag.shape != trace.action_preclip.shape:
        raise GraphError(f"action_grad shape {ag.shape} does not match actions {trace.action_preclip.shape}")

    adjoint: dict[str, np.ndarray] = {}
    col = 0
    for feat in plan.actions:
        g = ag[:, col : col + feat.width]
        if feat.clip is not None:
            pre = trace.action_preclip[:, col : col + feat.width]
            g = g * ((pre > feat.clip[0]) & (pre < feat.clip[1]))
        adjoint[feat.id] = g
        col += feat.width

    def pull_through_edge(edge: WeightedEdge, downstream_adjoint: np.ndarray) -> None:
        src_val = trace.values[edge.source]
        g_edge = _unbroadcast(downstream_adjoint, src_val.shape)
        if edge.index is not None:
            grad[edge.index] += float((g_edge * src_val).sum())
        w = _edge_weight(edge, wvals)
        acc = adjoint.get(edge.source)
        contribution = w * g_edge
        adjoint[edge.source] = contribution if acc is None else acc + contribution

    for nid in reversed(plan.order):
        a = adjoint.get(nid)
        if a is None:
            continue
        if nid in plan.operators:
            op = plan.operators[nid]
            edges = plan.incoming[nid]
            inputs = [_edge_weight(e, wvals) * trace.values[e.source] for e in edges]
            for edge, g_in in zip(edges, _op_backward(op, a, inputs, trace.values[nid])):
                pull_through_edge(edge, g_in)
        else:
            feat = plan.features[nid]
            if feat.kind == OBSERVED:
                continue
            pull_through_edge(plan.incoming[nid][0], a)

    if trace.frozen is not None:
        grad[trace.frozen] = 0.0
    return grad
