"""Independent reference implementations used to cross-check the package.

Everything here is deliberately naive and self-contained: dependency-
resolution graph evaluation over plain floats and lists, textbook central
finite differences, loop-based linear algebra.  None of it shares code with
the library paths it checks.
"""

from __future__ import annotations

import numpy as np

Scalar = float
Value = "float | list[float]"


def _is_vec(v) -> bool:
    return isinstance(v, list)


def _ew1(f, x):
    return [f(v) for v in x] if _is_vec(x) else f(x)


def _ew2(f, a, b):
    if _is_vec(a) and _is_vec(b):
        if len(a) != len(b):
            raise ValueError("width mismatch")
        return [f(x, y) for x, y in zip(a, b)]
    if _is_vec(a):
        return [f(x, b) for x in a]
    if _is_vec(b):
        return [f(a, y) for y in b]
    return f(a, b)


def _fold(f, items):
    out = items[0]
    for x in items[1:]:
        out = _ew2(f, out, x)
    return out


def _apply_op(op_name: str, args: tuple, inputs: list):
    if op_name == "constant":
        return float(args[0])
    if op_name == "sum":
        return _fold(lambda x, y: x + y, inputs)
    if op_name == "product":
        return _fold(lambda x, y: x * y, inputs)
    if op_name == "negate":
        return _ew1(lambda x: -x, inputs[0])
    if op_name == "relu":
        return _ew1(lambda x: x if x > 0 else 0.0, inputs[0])
    if op_name == "abs":
        return _ew1(lambda x: x if x >= 0 else -x, inputs[0])
    if op_name == "clamp":
        lo, hi = args
        return _ew1(lambda x: lo if x < lo else (hi if x > hi else x), inputs[0])
    if op_name == "min":
        return _fold(lambda x, y: x if x <= y else y, inputs)
    if op_name == "max":
        return _fold(lambda x, y: x if x >= y else y, inputs)
    if op_name == "select":
        cond, then, other = inputs
        widths = [len(v) for v in inputs if _is_vec(v)]
        if widths:
            n = widths[0]
            if any(w != n for w in widths):
                raise ValueError("width mismatch")
            get = lambda v, i: v[i] if _is_vec(v) else v
            return [get(then, i) if get(cond, i) > 0 else get(other, i) for i in range(n)]
        return then if cond > 0 else other
    if op_name == "square":
        return _ew1(lambda x: x * x, inputs[0])
    if op_name == "mean":
        x = inputs[0]
        if not _is_vec(x):
            raise ValueError("mean wants a vector")
        return sum(x) / len(x)
    if op_name == "stack":
        for v in inputs:
            if _is_vec(v):
                raise ValueError("stack wants scalars")
        return list(map(float, inputs))
    raise ValueError(f"unknown op {op_name}")


def interpret_graph(structure, weights, observation):
    """Evaluate a policy structure by exhaustive dependency resolution.

    Returns (clipped action list, node value map).  Uses its own arithmetic;
    input edge order follows the structure's edge list, which is the
    documented operator-argument convention.
    """
    wvals = list(np.asarray(getattr(weights, "values", weights), dtype=float))
    features = {f.id: f for f in structure.features}
    operators = {o.id: o for o in structure.operators}
    incoming: dict[str, list] = {}
    for e in structure.edges:
        incoming.setdefault(e.target, []).append(e)

    def edge_w(e) -> float:
        return float(e.value) if e.value is not None else wvals[e.index]

    values: dict[str, object] = {}
    for f in structure.features:
        if f.kind == "observed":
            raw = observation[f.name]
            if f.size is None:
                values[f.id] = float(raw)
            else:
                vec = list(map(float, np.asarray(raw, dtype=float).ravel()))
                if len(vec) != f.size:
                    raise ValueError(f"obs {f.name} width {len(vec)} != {f.size}")
                values[f.id] = vec

    todo = [o.id for o in structure.operators] + [f.id for f in structure.features if f.kind != "observed"]
    while todo:
        progressed = []
        for nid in todo:
            edges = incoming.get(nid, [])
            if any(e.source not in values for e in edges):
                continue
            ins = [_ew1(lambda x, w=edge_w(e): w * x, values[e.source]) for e in edges]
            if nid in operators:
                op = operators[nid]
                values[nid] = _apply_op(op.op, op.args, ins)
            else:
                values[nid] = ins[0]
            progressed.append(nid)
        if not progressed:
            raise ValueError("stuck: cycle or missing dependency")
        todo = [nid for nid in todo if nid not in progressed]

    action = []
    for f in structure.features:
        if f.kind != "action":
            continue
        v = values[f.id]
        parts = v if _is_vec(v) else [v]
        if f.clip is not None:
            lo, hi = f.clip
            parts = [lo if x < lo else (hi if x > hi else x) for x in parts]
        action.extend(parts)
    return action, values


def fd_weight_gradient(evaluate_fn, structure, weights, observation, action_grad, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of action_grad . action w.r.t. each weight."""
    base = np.asarray(getattr(weights, "values", weights), dtype=float).copy()
    action_grad = np.asarray(action_grad, dtype=float)

    def loss(vals: np.ndarray) -> float:
        action, _ = evaluate_fn(structure, vals, observation)
        return float(np.dot(action_grad.ravel(), np.asarray(action).ravel()))

    grad = np.zeros_like(base)
    for i in range(len(base)):
        up, down = base.copy(), base.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (loss(up) - loss(down)) / (2.0 * h)
    return grad


def fd_flat_gradient(loss_fn, params: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences for any flat-parameterized scalar function."""
    params = np.asarray(params, dtype=float)
    grad = np.zeros_like(params)
    for i in range(len(params)):
        up, down = params.copy(), params.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (loss_fn(up) - loss_fn(down)) / (2.0 * h)
    return grad


def naive_matmul(a, b):
    """Triple-loop matrix product over nested lists."""
    rows, inner, cols = len(a), len(b), len(b[0])
    out = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for k in range(inner):
            for j in range(cols):
                out[i][j] += a[i][k] * b[k][j]
    return out


def naive_mse(pred, target) -> float:
    """Mean of elementwise squared differences, accumulated one float at a time."""
    p = np.asarray(pred, dtype=float).ravel()
    t = np.asarray(target, dtype=float).ravel()
    if p.shape != t.shape:
        raise ValueError("shape mismatch")
    total = 0.0
    for x, y in zip(p, t):
        d = float(x) - float(y)
        total += d * d
    return total / len(p)


def reference_adam(theta0, grads, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
    """Textbook bias-corrected Adam applied to a fixed gradient sequence."""
    theta = np.asarray(theta0, dtype=float).copy()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    history = []
    for t, g in enumerate(grads, start=1):
        g = np.asarray(g, dtype=float)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * (g * g)
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
        history.append(theta.copy())
    return history


# ---------------------------------------------------------------------------
# Direct AST interpretation of policy programs.  Shares nothing with the
# compiler: declarations are evaluated top to bottom against a plain dict.

def interpret_program(program, observation):
    """Evaluate a parsed program; returns ({action: value}, full env)."""
    from steerlab.pgdl import ActionDecl, NodeDecl, ObsDecl, ParamDecl

    env: dict = {}
    actions: dict = {}
    for decl in program.decls:
        if isinstance(decl, ObsDecl):
            v = observation[decl.name]
            if isinstance(v, (list, tuple, np.ndarray)):
                env[decl.name] = [float(x) for x in v]
            else:
                env[decl.name] = float(v)
        elif isinstance(decl, ParamDecl):
            env[decl.name] = float(decl.value)
        elif isinstance(decl, NodeDecl):
            env[decl.name] = _eval_pgdl(decl.expr, env)
        elif isinstance(decl, ActionDecl):
            pre = _eval_pgdl(decl.expr, env)
            lo, hi = decl.clip_lo, decl.clip_hi
            clipped = _ew1(lambda x: lo if x < lo else (hi if x > hi else x), pre)
            actions[decl.name] = clipped
            env[decl.name] = clipped
    return actions, env


def _eval_pgdl(e, env):
    from steerlab.pgdl import Bin, Call, Neg, Num, Ref

    if isinstance(e, Num):
        return float(e.value)
    if isinstance(e, Ref):
        return env[e.name]
    if isinstance(e, Neg):
        return _ew1(lambda x: -x, _eval_pgdl(e.operand, env))
    if isinstance(e, Bin):
        a = _eval_pgdl(e.left, env)
        b = _eval_pgdl(e.right, env)
        f = {"+": lambda x, y: x + y,
             "-": lambda x, y: x - y,
             "*": lambda x, y: x * y}[e.op]
        return _ew2(f, a, b)
    args = [_eval_pgdl(a, env) for a in e.args]
    if e.op == "clamp":
        return _apply_op("clamp", (args[1], args[2]), [args[0]])
    return _apply_op("negate" if e.op == "neg" else e.op, (), args)
