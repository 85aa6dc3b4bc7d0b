"""Tokenizer, recursive-descent parser, AST, and canonical formatter.

The parser is total: any input produces a (possibly partial) program plus a
diagnostic list.  Recovery is per line, so one malformed declaration never
hides the rest of the file.  Comments survive parsing: a block of comment
lines attaches to the following declaration and a trailing comment stays on
its line, which lets downstream tooling surface them as summary hints.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Union

KEYWORDS = {"obs", "param", "node", "action", "clip", "frozen"}
OP_NAMES = {"sum", "product", "neg", "relu", "abs", "clamp", "min", "max", "select", "square", "mean", "stack"}

ERROR = "error"
WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    rule: str
    message: str
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.severity}[{self.rule}] {self.message}"


@dataclass(frozen=True)
class Span:
    line: int
    col: int


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Num:
    value: float
    span: Span = field(compare=False, default=Span(0, 0))


@dataclass(frozen=True)
class Ref:
    name: str
    span: Span = field(compare=False, default=Span(0, 0))


@dataclass(frozen=True)
class Neg:
    operand: "Expr"
    span: Span = field(compare=False, default=Span(0, 0))


@dataclass(frozen=True)
class Bin:
    op: str  # "+", "-", "*"
    left: "Expr"
    right: "Expr"
    span: Span = field(compare=False, default=Span(0, 0))


@dataclass(frozen=True)
class Call:
    op: str
    args: tuple["Expr", ...]
    span: Span = field(compare=False, default=Span(0, 0))


Expr = Union[Num, Ref, Neg, Bin, Call]


@dataclass(frozen=True)
class ObsDecl:
    name: str
    size: int | None
    span: Span = field(compare=False, default=Span(0, 0))
    comments: tuple[str, ...] = ()
    trailing: str | None = None


@dataclass(frozen=True)
class ParamDecl:
    name: str
    value: float
    frozen: bool = False
    span: Span = field(compare=False, default=Span(0, 0))
    comments: tuple[str, ...] = ()
    trailing: str | None = None


@dataclass(frozen=True)
class NodeDecl:
    name: str
    expr: Expr
    span: Span = field(compare=False, default=Span(0, 0))
    comments: tuple[str, ...] = ()
    trailing: str | None = None


@dataclass(frozen=True)
class ActionDecl:
    name: str
    expr: Expr
    clip_lo: float
    clip_hi: float
    span: Span = field(compare=False, default=Span(0, 0))
    comments: tuple[str, ...] = ()
    trailing: str | None = None


Decl = Union[ObsDecl, ParamDecl, NodeDecl, ActionDecl]


@dataclass(frozen=True)
class Program:
    decls: tuple[Decl, ...]
    trailing_comments: tuple[str, ...] = ()


@dataclass
class ParseResult:
    program: Program
    diagnostics: list[Diagnostic]

    @property
    def ok(self) -> bool:
        return not any(d.severity == ERROR for d in self.diagnostics)


# ---------------------------------------------------------------------------
# Lexer

@dataclass(frozen=True)
class _Token:
    kind: str  # IDENT KEYWORD OPNAME NUMBER PUNCT COMMENT
    text: str
    line: int
    col: int
    value: float = 0.0


_NUMBER_RE = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_PUNCT = {"(", ")", "[", "]", ",", "=", "+", "-", "*"}


def _lex_line(raw: str, line: int, diags: list[Diagnostic]) -> tuple[list[_Token], str | None]:
    """Tokens of one source line plus its trailing comment, if any."""
    tokens: list[_Token] = []
    comment: str | None = None
    i = 0
    while i < len(raw):
        ch = raw[i]
        if ch in " \t\r":
            i += 1
            continue
        if ch == "#":
            comment = raw[i + 1 :].strip()
            break
        m = _NUMBER_RE.match(raw, i)
        if m:
            try:
                value = float(m.group())
            except ValueError:  # pragma: no cover - regex keeps this finite
                value = math.inf
            if not math.isfinite(value):
                diags.append(Diagnostic(ERROR, "number-range", f"number {m.group()!r} overflows", line, i + 1))
                value = 0.0
            tokens.append(_Token("NUMBER", m.group(), line, i + 1, value))
            i = m.end()
            continue
        m = _IDENT_RE.match(raw, i)
        if m:
            word = m.group()
            kind = "KEYWORD" if word in KEYWORDS else ("OPNAME" if word in OP_NAMES else "IDENT")
            tokens.append(_Token(kind, word, line, i + 1))
            i = m.end()
            continue
        if ch in _PUNCT:
            tokens.append(_Token("PUNCT", ch, line, i + 1))
            i += 1
            continue
        diags.append(Diagnostic(ERROR, "unexpected-character", f"cannot read {ch!r}", line, i + 1))
        i += 1
    return tokens, comment


# ---------------------------------------------------------------------------
# Parser

class _ParseFail(Exception):
    def __init__(self, diag: Diagnostic):
        self.diag = diag


class _Cursor:
    def __init__(self, tokens: list[_Token], line: int):
        self.tokens = tokens
        self.pos = 0
        self.line = line

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> _Token | None:
        tok = self.peek()
        if tok is not None:
            self.pos += 1
        return tok

    def fail(self, rule: str, message: str) -> _ParseFail:
        tok = self.peek()
        col = tok.col if tok else (self.tokens[-1].col + len(self.tokens[-1].text) if self.tokens else 1)
        return _ParseFail(Diagnostic(ERROR, rule, message, self.line, col))

    def expect_punct(self, text: str) -> _Token:
        tok = self.peek()
        if tok is None or tok.kind != "PUNCT" or tok.text != text:
            got = tok.text if tok else "end of line"
            raise self.fail("expected-token", f"expected {text!r}, got {got!r}")
        return self.next()

    def expect_ident(self, what: str) -> _Token:
        tok = self.peek()
        if tok is None or tok.kind != "IDENT":
            if tok is not None and tok.kind in ("KEYWORD", "OPNAME"):
                raise self.fail("reserved-name", f"{tok.text!r} is reserved and cannot name a {what}")
            got = tok.text if tok else "end of line"
            raise self.fail("expected-name", f"expected a {what} name, got {got!r}")
        return self.next()

    def expect_number(self) -> tuple[float, _Token]:
        sign = 1.0
        tok = self.peek()
        if tok is not None and tok.kind == "PUNCT" and tok.text == "-":
            self.next()
            sign = -1.0
            tok = self.peek()
        if tok is None or tok.kind != "NUMBER":
            got = tok.text if tok else "end of line"
            raise self.fail("expected-number", f"expected a number, got {got!r}")
        self.next()
        return sign * tok.value, tok

    def at_end(self) -> bool:
        return self.pos >= len(self.tokens)

    def require_end(self) -> None:
        if not self.at_end():
            raise self.fail("trailing-tokens", f"unexpected {self.peek().text!r} after the declaration")


def parse(text: str) -> ParseResult:
    """Parse PGDL source.  Total: never raises on malformed input."""
    diags: list[Diagnostic] = []
    decls: list[Decl] = []
    pending: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens, comment = _lex_line(raw, lineno, diags)
        if not tokens:
            if comment is not None:
                pending.append(comment)
            continue
        cur = _Cursor(tokens, lineno)
        try:
            decl = _parse_decl(cur, tuple(pending), comment)
            decls.append(decl)
        except _ParseFail as fail:
            diags.append(fail.diag)
        pending = []
    return ParseResult(Program(tuple(decls), tuple(pending)), diags)


def _parse_decl(cur: _Cursor, comments: tuple[str, ...], trailing: str | None) -> Decl:
    head = cur.peek()
    if head.kind != "KEYWORD" or head.text not in ("obs", "param", "node", "action"):
        raise cur.fail("expected-declaration", f"a declaration starts with obs/param/node/action, got {head.text!r}")
    cur.next()
    span = Span(head.line, head.col)

    if head.text == "obs":
        name = cur.expect_ident("feature")
        size: int | None = None
        tok = cur.peek()
        if tok is not None and tok.kind == "PUNCT" and tok.text == "[":
            cur.next()
            num = cur.peek()
            if num is None or num.kind != "NUMBER" or num.value != int(num.value) or "." in num.text or "e" in num.text.lower():
                raise cur.fail("expected-size", "vector size must be a plain integer")
            cur.next()
            size = int(num.value)
            cur.expect_punct("]")
        cur.require_end()
        return ObsDecl(name.text, size, span, comments, trailing)

    if head.text == "param":
        name = cur.expect_ident("parameter")
        cur.expect_punct("=")
        value, _ = cur.expect_number()
        frozen = False
        tok = cur.peek()
        if tok is not None and tok.kind == "KEYWORD" and tok.text == "frozen":
            cur.next()
            frozen = True
        cur.require_end()
        return ParamDecl(name.text, value, frozen, span, comments, trailing)

    if head.text == "node":
        name = cur.expect_ident("node")
        cur.expect_punct("=")
        expr = _parse_expr(cur)
        cur.require_end()
        return NodeDecl(name.text, expr, span, comments, trailing)

    name = cur.expect_ident("action")
    cur.expect_punct("=")
    expr = _parse_expr(cur)
    tok = cur.peek()
    if tok is None or tok.kind != "KEYWORD" or tok.text != "clip":
        raise cur.fail("expected-clip", "an action declaration ends with clip(lo, hi)")
    cur.next()
    cur.expect_punct("(")
    lo, _ = cur.expect_number()
    cur.expect_punct(",")
    hi, _ = cur.expect_number()
    cur.expect_punct(")")
    cur.require_end()
    return ActionDecl(name.text, expr, lo, hi, span, comments, trailing)


def _parse_expr(cur: _Cursor) -> Expr:
    left = _parse_term(cur)
    while True:
        tok = cur.peek()
        if tok is not None and tok.kind == "PUNCT" and tok.text in ("+", "-"):
            cur.next()
            right = _parse_term(cur)
            left = Bin(tok.text, left, right, Span(tok.line, tok.col))
        else:
            return left


def _parse_term(cur: _Cursor) -> Expr:
    left = _parse_factor(cur)
    while True:
        tok = cur.peek()
        if tok is not None and tok.kind == "PUNCT" and tok.text == "*":
            cur.next()
            right = _parse_factor(cur)
            left = Bin("*", left, right, Span(tok.line, tok.col))
        else:
            return left


def _parse_factor(cur: _Cursor) -> Expr:
    tok = cur.peek()
    if tok is not None and tok.kind == "PUNCT" and tok.text == "-":
        cur.next()
        operand = _parse_factor(cur)
        if isinstance(operand, Num):  # fold literal signs so -0.3 is one atom
            return Num(-operand.value, operand.span)
        return Neg(operand, Span(tok.line, tok.col))
    return _parse_atom(cur)


def _parse_atom(cur: _Cursor) -> Expr:
    tok = cur.peek()
    if tok is None:
        raise cur.fail("expected-expression", "expected an expression, got end of line")
    if tok.kind == "NUMBER":
        cur.next()
        return Num(tok.value, Span(tok.line, tok.col))
    if tok.kind == "OPNAME":
        cur.next()
        cur.expect_punct("(")
        args = [_parse_expr(cur)]
        while True:
            nxt = cur.peek()
            if nxt is not None and nxt.kind == "PUNCT" and nxt.text == ",":
                cur.next()
                args.append(_parse_expr(cur))
            else:
                break
        cur.expect_punct(")")
        return Call(tok.text, tuple(args), Span(tok.line, tok.col))
    if tok.kind == "IDENT":
        cur.next()
        nxt = cur.peek()
        if nxt is not None and nxt.kind == "PUNCT" and nxt.text == "(":
            raise _ParseFail(Diagnostic(ERROR, "unknown-operator", f"{tok.text!r} is not an operator", tok.line, tok.col))
        return Ref(tok.text, Span(tok.line, tok.col))
    if tok.kind == "PUNCT" and tok.text == "(":
        cur.next()
        inner = _parse_expr(cur)
        cur.expect_punct(")")
        return inner
    if tok.kind == "KEYWORD":
        raise cur.fail("reserved-name", f"{tok.text!r} is reserved and cannot appear in an expression")
    raise cur.fail("expected-expression", f"expected an expression, got {tok.text!r}")


# ---------------------------------------------------------------------------
# Canonical formatter

_PREC = {"+": 1, "-": 1, "*": 2}
_NEG_PREC = 3
_ATOM_PREC = 4


def format_number(value: float) -> str:
    """Shortest decimal that round-trips to the same float."""
    return repr(float(value))


def _expr_prec(e: Expr) -> int:
    if isinstance(e, Bin):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _NEG_PREC
    if isinstance(e, Num) and e.value < 0:
        return _NEG_PREC  # prints with a leading sign
    return _ATOM_PREC


def format_expr(e: Expr) -> str:
    if isinstance(e, Num):
        return format_number(e.value)
    if isinstance(e, Ref):
        return e.name
    if isinstance(e, Neg):
        body = format_expr(e.operand)
        if _expr_prec(e.operand) < _NEG_PREC:
            body = f"({body})"
        return f"-{body}"
    if isinstance(e, Call):
        return f"{e.op}(" + ", ".join(format_expr(a) for a in e.args) + ")"
    left = format_expr(e.left)
    if _expr_prec(e.left) < _PREC[e.op]:
        left = f"({left})"
    right = format_expr(e.right)
    if _expr_prec(e.right) <= _PREC[e.op]:
        right = f"({right})"
    return f"{left} {e.op} {right}"


def _format_decl(decl: Decl) -> str:
    if isinstance(decl, ObsDecl):
        body = f"obs {decl.name}" + (f"[{decl.size}]" if decl.size is not None else "")
    elif isinstance(decl, ParamDecl):
        body = f"param {decl.name} = {format_number(decl.value)}" + (" frozen" if decl.frozen else "")
    elif isinstance(decl, NodeDecl):
        body = f"node {decl.name} = {format_expr(decl.expr)}"
    else:
        body = (f"action {decl.name} = {format_expr(decl.expr)} "
                f"clip({format_number(decl.clip_lo)}, {format_number(decl.clip_hi)})")
    return body


def format_program(program: Program) -> str:
    lines: list[str] = []
    for decl in program.decls:
        for comment in decl.comments:
            lines.append(f"# {comment}" if comment else "#")
        body = _format_decl(decl)
        if decl.trailing is not None:
            body += f"  # {decl.trailing}" if decl.trailing else "  #"
        lines.append(body)
    for comment in program.trailing_comments:
        lines.append(f"# {comment}" if comment else "#")
    return "\n".join(lines) + ("\n" if lines else "")


def format_source(text: str) -> tuple[str, list[Diagnostic]]:
    """Canonical formatting of raw source; formatting needs a clean parse."""
    result = parse(text)
    if not result.ok:
        return text, result.diagnostics
    return format_program(result.program), result.diagnostics
