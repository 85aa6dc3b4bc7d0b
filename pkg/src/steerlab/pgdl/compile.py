"""Lowering of policy programs onto the weighted bipartite graph runtime.

The graph alternates feature nodes and operator nodes, and every edge carries
a multiplier, so most of the surface arithmetic never becomes an operator:

* a numeric literal multiplying a subexpression folds onto an edge as a
  fixed value,
* a parameter reference folds onto an edge as a learnable weight, with the
  parameter's declaration order fixing its index in the weight vector (one
  parameter used on several edges shares one weight),
* ``+``/``-`` chains flatten into a single n-ary sum, ``*`` chains into a
  single n-ary product,
* a purely constant term (literal and/or parameters, no feature) is driven
  by one shared unit-constant operator.

When a value must travel further than one hop allows (the graph alternates
strictly, and each hop carries one multiplier), the compiler inserts
pass-through operators and latent features.  All synthetic ids start with
``@``, which the surface syntax cannot produce, so they never collide with
declared names.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..graph import (
    ACTION,
    LATENT,
    OBSERVED,
    FeatureNode,
    OperatorNode,
    PolicyStructure,
    WeightVector,
    WeightedEdge,
    validate_structure,
)
from .check import analyze
from .syntax import (
    ERROR,
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
    format_program,
    parse,
)


class PgdlError(Exception):
    """Raised when a program cannot be compiled; carries the diagnostics."""

    def __init__(self, message: str, diagnostics: list[Diagnostic] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        return base + "\n" + "\n".join(str(d) for d in self.diagnostics)


@dataclass
class CompiledPolicy:
    structure: PolicyStructure
    weights: WeightVector
    program: Program
    source: str
    param_names: tuple[str, ...]
    hints: tuple[str, ...]

    @property
    def action_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.structure.features if f.kind == ACTION)


def compile_source(text: str) -> CompiledPolicy:
    result = parse(text)
    errors = [d for d in result.diagnostics if d.severity == ERROR]
    if errors:
        raise PgdlError("program does not parse", errors)
    return compile_program(result.program, source=text)


def compile_program(program: Program, source: str | None = None) -> CompiledPolicy:
    analysis = analyze(program)
    errors = [d for d in analysis.diagnostics if d.severity == ERROR]
    if errors:
        raise PgdlError("program does not check", errors)

    b = _Builder(analysis.widths)
    for decl in program.decls:
        if isinstance(decl, ObsDecl):
            b.features.append(FeatureNode(decl.name, decl.name, OBSERVED, decl.size))
        elif isinstance(decl, ParamDecl):
            b.param_index[decl.name] = len(b.values)
            b.values.append(decl.value)
            b.frozen.append(decl.frozen)
        elif isinstance(decl, NodeDecl):
            b.lower_decl(decl.name, decl.expr, LATENT, None)
        elif isinstance(decl, ActionDecl):
            b.lower_decl(decl.name, decl.expr, ACTION, (decl.clip_lo, decl.clip_hi))

    structure = PolicyStructure(b.features, b.operators, b.edges)
    issues = validate_structure(structure)
    if issues:
        # Budget overruns surface here; anything else is a compiler defect.
        diags = [Diagnostic(ERROR, i.rule, i.message, 0, 0) for i in issues]
        raise PgdlError("compiled graph is invalid", diags)

    hints: list[str] = []
    for decl in program.decls:
        hints.extend(decl.comments)
        if decl.trailing:
            hints.append(decl.trailing)
    hints.extend(program.trailing_comments)

    return CompiledPolicy(
        structure=structure,
        weights=WeightVector.of(b.values, b.frozen),
        program=program,
        source=source if source is not None else format_program(program),
        param_names=tuple(sorted(b.param_index, key=b.param_index.get)),
        hints=tuple(hints),
    )


# ---------------------------------------------------------------------------
# Lowering machinery

# A multiplicative prefix split off an expression: the residual core is None
# when the whole expression is constants and parameters.
@dataclass
class _Term:
    lit: float
    params: list[str]
    core: Expr | None

    def factors(self) -> list[object]:
        out: list[object] = []
        if self.lit != 1.0:
            out.append(self.lit)
        out.extend(("param", p) for p in self.params)
        return out


_FEATURE = "f"
_OPERATOR = "o"


class _Builder:
    def __init__(self, widths: dict[int, int]):
        self.widths = widths
        self.features: list[FeatureNode] = []
        self.operators: list[OperatorNode] = []
        self.edges: list[WeightedEdge] = []
        self.values: list[float] = []
        self.frozen: list[bool] = []
        self.param_index: dict[str, int] = {}
        self._counter = 0
        self._const: str | None = None

    # -- node factories

    def _fresh(self, stem: str) -> str:
        self._counter += 1
        return f"@{stem}{self._counter}"

    def new_op(self, op: str, args: tuple[float, ...] = ()) -> str:
        oid = self._fresh(op)
        self.operators.append(OperatorNode(oid, op, args))
        return oid

    def new_latent(self, width: int) -> str:
        fid = self._fresh("t")
        self.features.append(FeatureNode(fid, fid, LATENT, None if width == 1 else width))
        return fid

    def const_port(self) -> tuple[str, str]:
        if self._const is None:
            self._const = "@const"
            self.operators.append(OperatorNode(self._const, "constant", (1.0,)))
        return (_OPERATOR, self._const)

    # -- declarations

    def lower_decl(self, name: str, expr: Expr, kind: str, clip: tuple[float, float] | None) -> None:
        width = self.widths[id(expr)]
        self.features.append(FeatureNode(name, name, kind, None if width == 1 else width, clip))
        term = _as_term(expr, self.param_index)
        if term.core is None:
            self.wire(self.const_port(), (_FEATURE, name), term.factors(), 1)
        else:
            port = self.emit(term.core)
            self.wire(port, (_FEATURE, name), term.factors(), width)

    # -- expressions

    def emit(self, e: Expr) -> tuple[str, str]:
        """Build the graph for a core expression; returns its output port."""
        if isinstance(e, Ref):
            return (_FEATURE, e.name)
        if isinstance(e, Bin) and e.op in ("+", "-"):
            op = self.new_op("sum")
            for sign, part in _flatten_sum(e, 1.0):
                term = _as_term(part, self.param_index)
                term.lit *= sign
                self.attach(term, op)
            return (_OPERATOR, op)
        if isinstance(e, Bin):  # "*" with at least two non-constant factors
            terms = [_as_term(f, self.param_index) for f in _flatten_product(e)]
            cored = [t for t in terms if t.core is not None]
            op = self.new_op("product")
            for t in terms:
                if t.core is None:
                    cored[0].lit *= t.lit
                    cored[0].params = t.params + cored[0].params
            for t in cored:
                self.attach(t, op)
            return (_OPERATOR, op)
        if isinstance(e, Neg):  # only reachable on programmatic ASTs
            op = self.new_op("sum")
            term = _as_term(e.operand, self.param_index)
            term.lit *= -1.0
            self.attach(term, op)
            return (_OPERATOR, op)
        if isinstance(e, Call):
            if e.op == "neg":
                return self.emit(Neg(e.args[0], e.span))
            if e.op == "clamp":
                lo = e.args[1].value  # checked: literal
                hi = e.args[2].value
                op = self.new_op("clamp", (float(lo), float(hi)))
                self.attach(_as_term(e.args[0], self.param_index), op)
                return (_OPERATOR, op)
            op = self.new_op(e.op)
            for arg in e.args:
                self.attach(_as_term(arg, self.param_index), op)
            return (_OPERATOR, op)
        raise PgdlError(f"cannot lower expression node {type(e).__name__}")

    def attach(self, term: _Term, op_id: str) -> None:
        if term.core is None:
            self.wire(self.const_port(), (_OPERATOR, op_id), term.factors(), 1)
        else:
            port = self.emit(term.core)
            self.wire(port, (_OPERATOR, op_id), term.factors(), self.widths[id(term.core)])

    def wire(self, src: tuple[str, str], dst: tuple[str, str], factors: list[object], width: int) -> None:
        """Connect two ports through an alternating chain.

        The chain is as short as parity allows while giving every factor its
        own edge; leading edges pad with fixed 1.0 multipliers so the factors
        sit nearest the destination.
        """
        n = 1 if src[0] != dst[0] else 2
        while n < len(factors):
            n += 2
        kinds = [src[0]]
        for _ in range(n - 1):
            kinds.append(_FEATURE if kinds[-1] == _OPERATOR else _OPERATOR)
        nodes = [src[1]]
        for kind in kinds[1:]:
            nodes.append(self.new_latent(width) if kind == _FEATURE else self.new_op("sum"))
        nodes.append(dst[1])
        padded: list[object] = [1.0] * (n - len(factors)) + list(factors)
        for i in range(n):
            f = padded[i]
            if isinstance(f, tuple):
                self.edges.append(WeightedEdge(nodes[i], nodes[i + 1], index=self.param_index[f[1]]))
            else:
                self.edges.append(WeightedEdge(nodes[i], nodes[i + 1], value=float(f)))


def _as_term(e: Expr, params: dict[str, int]) -> _Term:
    """Split multiplicative constants and parameters off an expression."""
    if isinstance(e, Num):
        return _Term(e.value, [], None)
    if isinstance(e, Ref):
        if e.name in params:
            return _Term(1.0, [e.name], None)
        return _Term(1.0, [], e)
    if isinstance(e, Neg):
        t = _as_term(e.operand, params)
        t.lit = -t.lit
        return t
    if isinstance(e, Call) and e.op == "neg":
        t = _as_term(e.args[0], params)
        t.lit = -t.lit
        return t
    if isinstance(e, Bin) and e.op == "*":
        a = _as_term(e.left, params)
        b = _as_term(e.right, params)
        if a.core is None:
            return _Term(a.lit * b.lit, a.params + b.params, b.core)
        if b.core is None:
            return _Term(a.lit * b.lit, a.params + b.params, a.core)
        return _Term(1.0, [], e)
    return _Term(1.0, [], e)


def _flatten_sum(e: Expr, sign: float) -> list[tuple[float, Expr]]:
    if isinstance(e, Bin) and e.op == "+":
        return _flatten_sum(e.left, sign) + _flatten_sum(e.right, sign)
    if isinstance(e, Bin) and e.op == "-":
        return _flatten_sum(e.left, sign) + _flatten_sum(e.right, -sign)
    if isinstance(e, Neg):
        return _flatten_sum(e.operand, -sign)
    return [(sign, e)]


def _flatten_product(e: Expr) -> list[Expr]:
    if isinstance(e, Bin) and e.op == "*":
        return _flatten_product(e.left) + _flatten_product(e.right)
    return [e]
