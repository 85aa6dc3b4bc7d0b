"""PGDL: a tiny declarative language for policy graphs.

Programs declare observed inputs, learnable parameters, named intermediate
nodes, and clipped actions over a closed differentiable operator set.  The
surface syntax compiles to a sparse bipartite policy graph; parsing is
total (malformed input yields diagnostics, never exceptions) and the
canonical formatter round-trips the AST byte-for-byte.
"""

from .syntax import (
    ActionDecl,
    Bin,
    Call,
    Diagnostic,
    Neg,
    NodeDecl,
    Num,
    ObsDecl,
    ParamDecl,
    ParseResult,
    Program,
    Ref,
    format_expr,
    format_number,
    format_program,
    format_source,
    parse,
)
from .check import check
from .compile import CompiledPolicy, PgdlError, compile_program, compile_source
from .policyfile import POLICY_FORMAT, load_policy, save_policy
from .summary import render_summary

__all__ = [
    "ActionDecl", "Bin", "Call", "Diagnostic", "Neg", "NodeDecl", "Num",
    "ObsDecl", "ParamDecl", "ParseResult", "Program", "Ref",
    "format_expr", "format_number", "format_program", "format_source", "parse",
    "check", "CompiledPolicy", "PgdlError", "compile_program", "compile_source",
    "POLICY_FORMAT", "load_policy", "save_policy",
    "render_summary",
]
