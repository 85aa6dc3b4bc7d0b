"""Seeded random structure and observation generators for cross-checks.

Graphs come out acyclic and bipartite by construction, cover a requested
operator kind, and are resampled until every non-smooth site (relu/abs
kinks, clamp and clip bounds, select conditions, min/max ties) keeps a
comfortable margin, so finite differences stay trustworthy.
"""

from __future__ import annotations

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
    evaluate,
)

KINK_MARGIN = 1e-2
VEC_LEN = 4


class _Builder:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.features: list[FeatureNode] = []
        self.operators: list[OperatorNode] = []
        self.edges: list[WeightedEdge] = []
        self.weights: list[float] = []
        self.frozen: list[bool] = []
        self.width: dict[str, int] = {}  # feature id -> 1 or vector length

    @property
    def scalars(self) -> list[str]:
        return [fid for fid, w in self.width.items() if w == 1]

    @property
    def vectors(self) -> list[str]:
        return [fid for fid, w in self.width.items() if w > 1]

    def compatible_pool(self) -> list[str]:
        """Scalars plus vectors of one randomly chosen length."""
        lengths = sorted({w for w in self.width.values() if w > 1})
        pool = self.scalars
        if lengths:
            lane = int(self.rng.choice(lengths))
            pool = pool + [fid for fid, w in self.width.items() if w == lane]
        return pool

    def new_weight_ref(self) -> tuple[int | None, float | None]:
        """Pick a learnable (possibly shared or frozen) or fixed edge weight."""
        roll = self.rng.random()
        if roll < 0.15:
            return None, float(self.rng.uniform(0.3, 1.5) * self.rng.choice([-1.0, 1.0]))
        if roll < 0.3 and self.weights:
            return int(self.rng.integers(len(self.weights))), None
        value = float(self.rng.uniform(0.3, 1.5) * self.rng.choice([-1.0, 1.0]))
        self.weights.append(value)
        self.frozen.append(bool(self.rng.random() < 0.15))
        return len(self.weights) - 1, None

    def add_obs(self, name: str, size: int | None) -> str:
        fid = f"f{len(self.features)}"
        self.features.append(FeatureNode(fid, name, OBSERVED, size=size))
        self.width[fid] = size or 1
        return fid

    def connect(self, src: str, dst: str) -> None:
        idx, val = self.new_weight_ref()
        self.edges.append(WeightedEdge(src, dst, index=idx, value=val))

    def add_op(self, op_name: str, input_ids: list[str], args: tuple[float, ...] = ()) -> str:
        oid = f"p{len(self.operators)}"
        self.operators.append(OperatorNode(oid, op_name, args))
        for src in input_ids:
            self.connect(src, oid)
        return oid

    def wrap_latent(self, op_id: str, width: int) -> str:
        fid = f"f{len(self.features)}"
        self.features.append(FeatureNode(fid, f"latent_{fid}", LATENT, size=None if width == 1 else width))
        self.connect(op_id, fid)
        self.width[fid] = width
        return fid

    def pick(self, pool: list[str]) -> str:
        return pool[int(self.rng.integers(len(pool)))]


def _plan_inputs(b: _Builder, op_name: str) -> tuple[list[str], tuple[float, ...], int]:
    """Choose legal inputs and static args; returns (ids, args, out_width)."""
    rng = b.rng
    if op_name == "constant":
        return [], (float(rng.uniform(-1.5, 1.5)),), 1
    if op_name == "mean":
        return [b.pick(b.vectors)], (), 1
    if op_name == "stack":
        n = int(rng.integers(2, 4))
        return [b.pick(b.scalars) for _ in range(n)], (), n
    if op_name == "clamp":
        lo = float(rng.uniform(-1.5, -0.2))
        hi = float(rng.uniform(0.2, 1.5))
        src = b.pick(b.compatible_pool())
        return [src], (lo, hi), b.width[src]
    if op_name in ("negate", "relu", "abs", "square"):
        src = b.pick(b.compatible_pool())
        return [src], (), b.width[src]
    pool = b.compatible_pool()
    n = 3 if op_name == "select" else int(rng.integers(2, 4))
    ids = [b.pick(pool) for _ in range(n)]
    return ids, (), max(b.width[i] for i in ids)


def random_graph(rng: np.random.Generator, require_op: str | None = None, n_ops: int | None = None,
                 n_actions: int = 1, clip_actions: bool = True):
    """A random valid policy graph plus weights.

    The first created operator is ``require_op`` when given, and the final
    collector consumes both an observed input and the required operator's
    output, so actions stay reachable and the target op stays on a gradient
    path.
    """
    b = _Builder(rng)
    b.add_obs("obs_a", None)
    if rng.random() < 0.8 or require_op == "mean":
        b.add_obs("obs_v", VEC_LEN)
    if rng.random() < 0.4:
        b.add_obs("obs_b", None)

    kinds = ("sum", "product", "negate", "relu", "abs", "clamp", "min", "max", "select", "square", "mean", "stack", "constant")
    count = n_ops if n_ops is not None else int(rng.integers(2, 5))
    required_latent: str | None = None
    for i in range(count):
        op_name = require_op if (i == 0 and require_op) else kinds[int(rng.integers(len(kinds)))]
        if op_name == "mean" and not b.vectors:
            op_name = "sum"
        ids, args, width = _plan_inputs(b, op_name)
        oid = b.add_op(op_name, ids, args)
        latent = b.wrap_latent(oid, width)
        if i == 0 and require_op:
            required_latent = latent

    # Collector: guarantees obs-reachability and pulls the required op in.
    tail = [b.features[0].id]
    if required_latent is not None:
        tail.append(required_latent)
    extra = [f for f in b.scalars if f not in tail]
    if extra and rng.random() < 0.7:
        tail.append(b.pick(extra))
    out_width = max(b.width[fid] for fid in tail)
    collector = b.add_op("sum", tail)

    for j in range(n_actions):
        fid = f"f{len(b.features)}"
        clip = None
        if clip_actions:
            clip = (-float(rng.uniform(5.0, 9.0)), float(rng.uniform(5.0, 9.0)))
        b.features.append(FeatureNode(fid, f"act_{j}", ACTION, clip=clip,
                                      size=None if out_width == 1 else out_width))
        b.connect(collector, fid)

    structure = PolicyStructure(b.features, b.operators, b.edges)
    weights = WeightVector.of(b.weights, b.frozen)
    return structure, weights


def random_observation(rng: np.random.Generator, structure: PolicyStructure) -> dict:
    obs = {}
    for f in structure.features:
        if f.kind != OBSERVED:
            continue
        if f.size is None:
            obs[f.name] = float(rng.uniform(-2.0, 2.0))
        else:
            obs[f.name] = rng.uniform(-2.0, 2.0, size=f.size)
    return obs


def kink_margin(structure: PolicyStructure, weights: WeightVector, observation: dict) -> float:
    """Distance of the nearest non-smooth site from its switching point."""
    _, trace = evaluate(structure, weights, observation)
    plan = structure.plan()
    wvals = np.asarray(weights.values, dtype=float)

    def edge_val(e):
        w = e.value if e.value is not None else wvals[e.index]
        return w * trace.values[e.source]

    margin = np.inf
    for op in structure.operators:
        edges = plan.incoming[op.id]
        ins = [edge_val(e) for e in edges]
        if op.op in ("relu", "abs"):
            margin = min(margin, float(np.abs(ins[0]).min()))
        elif op.op == "clamp":
            lo, hi = op.args
            margin = min(margin, float(np.abs(ins[0] - lo).min()), float(np.abs(ins[0] - hi).min()))
        elif op.op == "select":
            margin = min(margin, float(np.abs(ins[0]).min()))
        elif op.op in ("min", "max"):
            stackd = [np.broadcast_to(x, trace.values[op.id].shape) for x in ins]
            for i in range(len(stackd)):
                for j in range(i + 1, len(stackd)):
                    margin = min(margin, float(np.abs(stackd[i] - stackd[j]).min()))
    col = 0
    for feat in plan.actions:
        if feat.clip is not None:
            pre = trace.action_preclip[:, col : col + feat.width]
            margin = min(margin, float(np.abs(pre - feat.clip[0]).min()), float(np.abs(pre - feat.clip[1]).min()))
        col += feat.width
    return float(margin)


def smooth_case(seed: int, require_op: str | None = None, max_tries: int = 60, **kwargs):
    """(structure, weights, observation) with all kinks at a safe margin."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    for _ in range(max_tries):
        structure, weights = random_graph(rng, require_op=require_op, **kwargs)
        for _ in range(8):
            obs = random_observation(rng, structure)
            if kink_margin(structure, weights, obs) > KINK_MARGIN:
                return structure, weights, obs
    raise RuntimeError(f"no smooth case found for op {require_op!r} at seed {seed}")


# ---------------------------------------------------------------------------
# Random policy program source.  Every generated program parses and checks
# clean of errors: one vector lane per program keeps widths compatible, and
# expressions only reference names declared above them.

def _fmt_num(rng) -> str:
    return str(round(float(rng.uniform(-2.0, 2.0)), 3))


def _rand_expr(rng, scalars, vectors, params, depth, vec, lane):
    def sub(want_vec):
        return _rand_expr(rng, scalars, vectors, params, depth + 1, want_vec, lane)

    if depth >= 3 or rng.random() < 0.30:
        if vec:
            return str(rng.choice(vectors))
        pool = scalars + params
        if pool and rng.random() < 0.75:
            return str(rng.choice(pool))
        return _fmt_num(rng)

    roll = rng.random()
    if roll < 0.22:
        op = rng.choice(["+", "-", "*"])
        if vec:  # at least one vector operand keeps the result wide
            left, right = sub(True), sub(rng.random() < 0.5)
        else:
            left, right = sub(False), sub(False)
        return f"({left} {op} {right})"
    if roll < 0.30:
        return f"-({sub(vec)})"
    if roll < 0.44:
        op = rng.choice(["relu", "abs", "square", "neg"])
        return f"{op}({sub(vec)})"
    if roll < 0.52:
        lo, hi = sorted(rng.uniform(-2.0, 2.0, size=2).round(3).tolist())
        if lo == hi:
            hi = lo + 0.5
        return f"clamp({sub(vec)}, {lo}, {hi})"
    if roll < 0.64:
        op = rng.choice(["min", "max", "sum", "product"])
        n = int(rng.integers(2, 4))
        args = [sub(vec)] + [sub(vec and rng.random() < 0.5) for _ in range(n - 1)]
        return f"{op}(" + ", ".join(args) + ")"
    if roll < 0.74:
        if vec:
            args = [sub(True), sub(True), sub(rng.random() < 0.5)]
        else:
            args = [sub(False), sub(False), sub(False)]
        return f"select(" + ", ".join(args) + ")"
    if roll < 0.86 and vectors:
        if vec:
            return str(rng.choice(vectors))
        return f"mean({sub(True)})"
    if vec:
        return "stack(" + ", ".join(sub(False) for _ in range(lane)) + ")"
    return sub(False)


def random_program(rng) -> str:
    """Source text of a random, error-free policy program."""
    lane = int(rng.integers(3, 5))
    lines = []
    scalars, vectors, params = [], [], []
    for i in range(int(rng.integers(1, 4))):
        if rng.random() < 0.4:
            name = f"ov{i}"
            lines.append(f"obs {name}[{lane}]")
            vectors.append(name)
        else:
            name = f"o{i}"
            lines.append(f"obs {name}")
            scalars.append(name)
    for i in range(int(rng.integers(0, 3))):
        name = f"p{i}"
        frozen = " frozen" if rng.random() < 0.3 else ""
        lines.append(f"param {name} = {round(float(rng.uniform(-1.5, 1.5)), 3)}{frozen}")
        params.append(name)
    for i in range(int(rng.integers(1, 5))):
        want_vec = bool(vectors) and rng.random() < 0.35
        expr = _rand_expr(rng, scalars, vectors, params, 0, want_vec, lane)
        name = f"n{i}"
        lines.append(f"node {name} = {expr}")
        (vectors if want_vec else scalars).append(name)
    for i in range(int(rng.integers(1, 3))):
        expr = _rand_expr(rng, scalars, vectors, params, 0, False, lane)
        lo = round(float(rng.uniform(-2.0, -0.1)), 2)
        hi = round(float(rng.uniform(0.1, 2.0)), 2)
        lines.append(f"action act{i} = {expr} clip({lo}, {hi})")
    return "\n".join(lines) + "\n"


def random_program_inputs(rng, program):
    """Named inputs covering every observation the program declares."""
    from steerlab.pgdl import ObsDecl

    obs = {}
    for decl in program.decls:
        if isinstance(decl, ObsDecl):
            if decl.size is None:
                obs[decl.name] = float(rng.uniform(-2.0, 2.0))
            else:
                obs[decl.name] = rng.uniform(-2.0, 2.0, size=decl.size).tolist()
    return obs
