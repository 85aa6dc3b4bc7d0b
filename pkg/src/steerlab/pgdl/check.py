"""Static checks for policy programs.

``check`` walks a parsed program and reports diagnostics without building a
graph.  Errors make a program uncompilable; warnings flag likely mistakes but
let compilation proceed.  The width analysis done here is reused by the
compiler, so shape errors are caught once and in one place.

Rules
-----
error   dup-name        a name is declared twice
error   undeclared      a reference has no declaration (or only a later one)
error   action-read     an action is read inside an expression
error   no-actions      the program declares no actions at all
error   arity           an operator call has the wrong number of arguments
error   clamp-static    clamp bounds are not plain number literals
error   clamp-order     clamp bounds are reversed
error   shape           incompatible vector widths, mean of a scalar,
                        or stack of a vector
error   clip-order      an action clip range is reversed or empty
error   obs-size        a known observation is declared with the wrong size
error   number-range    a literal or declared value is not finite
error   node-budget     the program cannot fit the runtime node budget
warning param-bound     an unfrozen parameter starts far outside the
                        normalized signal range, where training cannot
                        usefully move it
warning clip-convention a known action uses an unconventional clip range
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..graph import MAX_NODES
from ..observation import ACTION_RANGES, FEATURE_SIZES
from .syntax import (
    ERROR,
    WARNING,
    ActionDecl,
    Bin,
    Call,
    Diagnostic,
    Expr,
    Neg,
    NodeDecl,
    Num,
    ObsDecl,
    ParamDecl,
    Program,
    Ref,
    Span,
)

# Surface arity per operator name: (min, max or None for variadic).
ARITY: dict[str, tuple[int, int | None]] = {
    "sum": (1, None),
    "product": (1, None),
    "neg": (1, 1),
    "relu": (1, 1),
    "abs": (1, 1),
    "clamp": (3, 3),
    "min": (2, None),
    "max": (2, None),
    "select": (3, 3),
    "square": (1, 1),
    "mean": (1, 1),
    "stack": (2, None),
}

# Unfrozen parameters beyond this magnitude start outside every normalized
# signal range, so gradient steps cannot reach a sensible value in one run.
PARAM_SCALE_LIMIT = 2.0


@dataclass
class Symbol:
    kind: str  # "obs" | "param" | "node" | "action"
    width: int
    span: Span


@dataclass
class Analysis:
    diagnostics: list[Diagnostic] = field(default_factory=list)
    widths: dict[int, int] = field(default_factory=dict)
    symbols: dict[str, Symbol] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not any(d.severity == ERROR for d in self.diagnostics)


def check(program: Program) -> list[Diagnostic]:
    """All diagnostics for a program, in source order per rule pass."""
    return analyze(program).diagnostics


def analyze(program: Program) -> Analysis:
    out = Analysis()
    declared_anywhere = {d.name for d in program.decls}

    def diag(severity: str, rule: str, message: str, span: Span) -> None:
        out.diagnostics.append(Diagnostic(severity, rule, message, span.line, span.col))

    def width_of(e: Expr) -> int:
        w = _infer(e, out, declared_anywhere, diag)
        out.widths[id(e)] = w
        return w

    n_actions = 0
    for decl in program.decls:
        if decl.name in out.symbols:
            diag(ERROR, "dup-name", f"{decl.name!r} is already declared", decl.span)
            continue
        if isinstance(decl, ObsDecl):
            width = 1 if decl.size is None else decl.size
            if decl.size is not None and decl.size < 1:
                diag(ERROR, "obs-size", f"{decl.name!r} needs a positive size", decl.span)
                width = 1
            expected = FEATURE_SIZES.get(decl.name, _UNKNOWN)
            if expected is not _UNKNOWN and expected != decl.size:
                want = "a scalar" if expected is None else f"size {expected}"
                diag(ERROR, "obs-size", f"observation {decl.name!r} is {want}", decl.span)
            out.symbols[decl.name] = Symbol("obs", width, decl.span)
        elif isinstance(decl, ParamDecl):
            if not math.isfinite(decl.value):
                diag(ERROR, "number-range", f"parameter {decl.name!r} must be finite", decl.span)
            elif not decl.frozen and abs(decl.value) > PARAM_SCALE_LIMIT:
                diag(WARNING, "param-bound",
                     f"parameter {decl.name!r} starts at {decl.value:g}, outside the normalized "
                     f"signal range; consider rescaling or marking it frozen", decl.span)
            out.symbols[decl.name] = Symbol("param", 1, decl.span)
        elif isinstance(decl, NodeDecl):
            width = width_of(decl.expr)
            out.symbols[decl.name] = Symbol("node", width, decl.span)
        else:
            n_actions += 1
            width = width_of(decl.expr)
            if not (math.isfinite(decl.clip_lo) and math.isfinite(decl.clip_hi)):
                diag(ERROR, "number-range", f"clip range of {decl.name!r} must be finite", decl.span)
            elif decl.clip_lo >= decl.clip_hi:
                diag(ERROR, "clip-order",
                     f"clip range of {decl.name!r} is empty: "
                     f"({decl.clip_lo:g}, {decl.clip_hi:g})", decl.span)
            known = ACTION_RANGES.get(decl.name)
            if known is not None and known != (decl.clip_lo, decl.clip_hi):
                diag(WARNING, "clip-convention",
                     f"{decl.name!r} conventionally clips to {known}, "
                     f"not ({decl.clip_lo:g}, {decl.clip_hi:g})", decl.span)
            out.symbols[decl.name] = Symbol("action", width, decl.span)

    if n_actions == 0:
        span = program.decls[-1].span if program.decls else Span(1, 1)
        diag(ERROR, "no-actions", "a policy needs at least one action declaration", span)
    elif not _reads_observations(program):
        span = program.decls[-1].span if program.decls else Span(1, 1)
        diag(WARNING, "inert-policy", "no action depends on any observation", span)

    # Definite-overflow screen: every non-parameter declaration becomes at
    # least one node and every call at least one operator.  The compiler
    # enforces the exact budget.
    floor = sum(1 for d in program.decls if not isinstance(d, ParamDecl))
    floor += sum(_count_calls(d.expr) for d in program.decls if isinstance(d, (NodeDecl, ActionDecl)))
    if floor > MAX_NODES:
        span = program.decls[-1].span if program.decls else Span(1, 1)
        diag(ERROR, "node-budget",
             f"program needs at least {floor} graph nodes; the limit is {MAX_NODES}", span)

    return out


_UNKNOWN = object()


def _infer(e: Expr, out: Analysis, declared_anywhere: set[str], diag) -> int:
    """Width of an expression, recording widths and diagnostics as it goes."""

    def recurse(sub: Expr) -> int:
        w = _infer(sub, out, declared_anywhere, diag)
        out.widths[id(sub)] = w
        return w

    if isinstance(e, Num):
        if not math.isfinite(e.value):
            diag(ERROR, "number-range", "literal must be finite", e.span)
        return 1
    if isinstance(e, Ref):
        sym = out.symbols.get(e.name)
        if sym is None:
            if e.name in declared_anywhere:
                diag(ERROR, "undeclared", f"{e.name!r} is used before its declaration", e.span)
            else:
                diag(ERROR, "undeclared", f"{e.name!r} is not declared", e.span)
            return 1
        if sym.kind == "action":
            diag(ERROR, "action-read", f"action {e.name!r} cannot be read", e.span)
        return sym.width
    if isinstance(e, Neg):
        return recurse(e.operand)
    if isinstance(e, Bin):
        lw = recurse(e.left)
        rw = recurse(e.right)
        return _join(lw, rw, e.span, diag)
    # Call
    if e.op not in ARITY:
        diag(ERROR, "unknown-operator", f"{e.op!r} is not an operator", e.span)
        for arg in e.args:
            recurse(arg)
        return 1
    lo, hi = ARITY[e.op]
    n = len(e.args)
    if n < lo or (hi is not None and n > hi):
        want = f"exactly {lo}" if lo == hi else (f"at least {lo}" if hi is None else f"{lo} to {hi}")
        diag(ERROR, "arity", f"{e.op} takes {want} argument(s), got {n}", e.span)

    if e.op == "clamp":
        width = recurse(e.args[0]) if n >= 1 else 1
        bounds: list[float] = []
        for arg in e.args[1:3]:
            recurse(arg)
            if isinstance(arg, Num):
                bounds.append(arg.value)
            else:
                diag(ERROR, "clamp-static", "clamp bounds must be number literals", e.span)
        if len(bounds) == 2 and bounds[0] >= bounds[1]:
            diag(ERROR, "clamp-order", f"clamp bounds are reversed: ({bounds[0]:g}, {bounds[1]:g})", e.span)
        return width
    if e.op == "mean":
        width = recurse(e.args[0]) if n >= 1 else 1
        if width == 1:
            diag(ERROR, "shape", "mean needs a vector input", e.span)
        return 1
    if e.op == "stack":
        for arg in e.args:
            if recurse(arg) != 1:
                diag(ERROR, "shape", "stack takes scalar inputs only", e.span)
        return max(n, 2)
    # Elementwise: unary ops return their operand width, n-ary ops broadcast.
    width = 1
    for arg in e.args:
        width = _join(width, recurse(arg), e.span, diag)
    return width


def _join(a: int, b: int, span: Span, diag) -> int:
    if a != b and a != 1 and b != 1:
        diag(ERROR, "shape", f"cannot combine vectors of widths {a} and {b}", span)
        return max(a, b)
    return max(a, b)


def _reads_observations(program: Program) -> bool:
    """True when some action transitively references an observation."""
    obs = {d.name for d in program.decls if isinstance(d, ObsDecl)}
    node_refs = {d.name: _refs(d.expr) for d in program.decls if isinstance(d, NodeDecl)}
    for decl in program.decls:
        if not isinstance(decl, ActionDecl):
            continue
        frontier = list(_refs(decl.expr))
        seen: set[str] = set()
        while frontier:
            name = frontier.pop()
            if name in seen:
                continue
            seen.add(name)
            if name in obs:
                return True
            frontier.extend(node_refs.get(name, ()))
    return False


def _refs(e: Expr) -> set[str]:
    if isinstance(e, Ref):
        return {e.name}
    if isinstance(e, Neg):
        return _refs(e.operand)
    if isinstance(e, Bin):
        return _refs(e.left) | _refs(e.right)
    if isinstance(e, Call):
        out: set[str] = set()
        for a in e.args:
            out |= _refs(a)
        return out
    return set()


def _count_calls(e: Expr) -> int:
    if isinstance(e, Call):
        return 1 + sum(_count_calls(a) for a in e.args)
    if isinstance(e, Bin):
        return _count_calls(e.left) + _count_calls(e.right)
    if isinstance(e, Neg):
        return _count_calls(e.operand)
    return 0
