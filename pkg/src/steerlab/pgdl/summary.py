"""Plain-language rendering of a policy program.

The transcript shown to users pairs each instruction round with a short
description of the structure that came back.  The rendering stays line per
declaration so it cannot blow up on deep programs, but it spells out what
each action responds to and where the learnable numbers start.
"""

from __future__ import annotations

from .syntax import (
    ActionDecl,
    NodeDecl,
    ObsDecl,
    ParamDecl,
    Program,
    format_expr,
    format_number,
)


def render_summary(program: Program) -> str:
    obs = [d for d in program.decls if isinstance(d, ObsDecl)]
    params = [d for d in program.decls if isinstance(d, ParamDecl)]
    nodes = [d for d in program.decls if isinstance(d, NodeDecl)]
    actions = [d for d in program.decls if isinstance(d, ActionDecl)]

    lines: list[str] = []
    lines.append(
        f"Drives {_count(len(actions), 'action')} from "
        f"{_count(len(obs), 'observation')} with "
        f"{_count(len(params), 'learnable parameter')}."
    )
    if obs:
        named = ", ".join(d.name if d.size is None else f"{d.name}[{d.size}]" for d in obs)
        lines.append(f"Reads: {named}.")
    if params:
        parts = []
        for d in params:
            tag = " (frozen)" if d.frozen else ""
            parts.append(f"{d.name} starts at {format_number(d.value)}{tag}")
        lines.append("Parameters: " + "; ".join(parts) + ".")
    for d in nodes:
        lines.append(f"Computes {d.name} = {format_expr(d.expr)}.")
    for d in actions:
        lines.append(
            f"Action {d.name} = {format_expr(d.expr)}, "
            f"clipped to [{format_number(d.clip_lo)}, {format_number(d.clip_hi)}]."
        )
    return "\n".join(lines)


def _count(n: int, noun: str) -> str:
    return f"{n} {noun}" + ("" if n == 1 else "s")
