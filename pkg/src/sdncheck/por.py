"""Partial-order reduction: safe-action classification and its audits.

Controller handler calls (ctrl, bsync, fsync) are the candidate safe class:
their queue mutations are disjoint from every non-handler action's, so a
handler action is safe when the program declares its handlers
order-insensitive and the property cannot see that handler's register
writes. A conservative static footprint check decides visibility, with an
explicit user assertion as the escape hatch for properties that read the
registers but are invariant under handler execution (the built-in load
property is such a case: scheduling and rebalancing both preserve it).

The reduced relation expands, at each state, exactly the safe enabled actions
when any exist and everything otherwise. audit_c1/audit_c4 re-check the
reduction conditions on a recorded exploration graph, and commutation_oracle
tests independence of a concrete action pair by running both interleavings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from .properties import CompiledProperty
from .semantics import HANDLER_KINDS, Action, ModelContext, apply, enabled_actions


@dataclass(frozen=True)
class PorContext:
    """Everything safe-action classification depends on."""

    program: object
    prop: CompiledProperty
    assume_phi_invariant: bool = False
    # Experimental widening hook beyond the handler class; widened kinds
    # still go through the same order-insensitivity and visibility gates.
    extra_safe_kinds: frozenset = frozenset()


def is_safe(action: Action, ctx: PorContext) -> bool:
    """Safe = a handler action of an order-insensitive program that the
    property cannot observe."""
    if action.kind not in HANDLER_KINDS and action.kind not in ctx.extra_safe_kinds:
        return False
    if not ctx.program.declared_order_insensitive:
        return False
    bases = ctx.prop.ctrl_reg_bases
    if not bases:
        return True  # no register atom occurs in the property
    writes = ctx.program.handler_writes.get(action.kind, frozenset())
    if "*" not in bases and bases.isdisjoint(writes):
        return True
    return ctx.assume_phi_invariant


def ample(state, enabled: list, ctx: PorContext) -> list:
    """The safe enabled actions, or all of them when none is safe."""
    safe = [a for a in enabled if is_safe(a, ctx)]
    return safe if safe else list(enabled)


def commutation_oracle(state, alpha: Action, beta: Action, mctx: ModelContext) -> bool:
    """Do alpha and beta stay mutually enabled and commute at this state?

    Checks both proof obligations for independence by direct execution:
    neither action may disable the other, and the two interleavings must land
    in canonically identical states.
    """
    assert alpha != beta, "commutation is asked of two distinct actions"
    enabled = enabled_actions(state, mctx)
    assert alpha in enabled and beta in enabled, "both actions must be enabled"
    s_a = apply(state, alpha, mctx)
    s_b = apply(state, beta, mctx)
    if beta not in enabled_actions(s_a, mctx):
        return False
    if alpha not in enabled_actions(s_b, mctx):
        return False
    return apply(s_a, beta, mctx).digest == apply(s_b, alpha, mctx).digest


@dataclass
class GraphNode:
    """Per-state record of a (possibly reduced) exploration."""

    enabled_count: int
    ample_count: int
    fully_expanded: bool
    ample_subset_ok: bool
    ample_all_safe: bool
    succ: list = field(default_factory=list)  # (action kind, digest)


def audit_c1(graph: dict) -> list:
    """Non-emptiness/subset violations: ample empty while actions were enabled,
    ample not a subset of enabled, or a reduced state containing unsafe actions."""
    bad = []
    for digest, node in graph.items():
        if (node.ample_count == 0) != (node.enabled_count == 0):
            bad.append((digest, "emptiness"))
        if not node.ample_subset_ok:
            bad.append((digest, "subset"))
        if not node.fully_expanded and not node.ample_all_safe:
            bad.append((digest, "unsafe-reduction"))
    return bad


def audit_c4(graph: dict) -> bool:
    """True iff no cycle of the recorded graph avoids fully expanded states."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {}
    sub = {}
    for digest, node in graph.items():
        if node.fully_expanded:
            continue
        sub[digest] = [
            t
            for _, t in node.succ
            if t in graph and not graph[t].fully_expanded
        ]
        color[digest] = WHITE
    for start in sub:
        if color[start] != WHITE:
            continue
        stack = [(start, iter(sub[start]))]
        color[start] = GRAY
        while stack:
            digest, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == GRAY:
                    return False  # back edge: a cycle of reduced states
                if color[nxt] == WHITE:
                    color[nxt] = GRAY
                    stack.append((nxt, iter(sub[nxt])))
                    advanced = True
                    break
            if not advanced:
                color[digest] = BLACK
                stack.pop()
    return True
