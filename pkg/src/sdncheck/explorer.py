"""Exhaustive reachability search over the full or reduced transition system.

Deduplication is by canonical state digest. The default breadth-first order
makes counterexamples shortest and state counts reproducible run to run at
workerCount=1; depth-first is available for cheap bug hunting. Every Violated
report carries a counterexample that has already been replayed through the
semantics before being returned.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .model import ConfigError, GlobalState, Topology, Workload, initial_state
from .por import GraphNode, PorContext, ample, commutation_oracle, is_safe
from .properties import CompiledProperty, compile_property
from .semantics import (
    ADD,
    CTRL,
    DROP,
    FRMVD,
    FSYNC,
    FWD,
    MATCH,
    MOD,
    NOMATCH,
    RECV,
    SEND,
    ModelContext,
    apply,
    enabled_actions,
)

VERDICT_HOLDS = "holds"
VERDICT_VIOLATED = "violated"
VERDICT_BOUND = "bound-exceeded"


@dataclass
class ExplorationOptions:
    por: bool = False
    search: str = "bfs"  # "bfs" | "dfs"
    max_states: Optional[int] = None
    record_graph: bool = False
    workers: int = 1
    deadline_s: Optional[float] = None
    check_commutation: bool = False  # test-only; expensive
    assume_phi_invariant: bool = False
    extra_safe_kinds: frozenset = frozenset()

    def validate(self):
        if self.search not in ("bfs", "dfs"):
            raise ConfigError(f"options.search: {self.search!r}")
        if self.max_states is not None and self.max_states < 1:
            raise ConfigError("options.max_states: must be >= 1 when set")
        if self.workers < 1:
            raise ConfigError("options.workers: must be >= 1")


@dataclass
class ExplorationReport:
    verdict: str
    states_explored: int
    transitions_fired: int
    elapsed_ms: int
    stop_reason: str
    por: bool
    search: str
    initial_digest: str
    counterexample: Optional[list] = None  # [(Action, post-state digest hex)]
    violation: Optional[dict] = None
    graph: Optional[dict] = None  # digest hex -> GraphNode
    parents: Optional[dict] = None  # digest -> (parent digest, Action); graph runs only
    commutation_failures: list = field(default_factory=list)
    commutation_checked: int = 0
    fsync_shrink_violations: int = 0
    fsync_fired: int = 0


def reconstruct_trace(parents: dict, root: bytes, target: bytes) -> list:
    """Shortest recorded action path root -> target as [(Action, digest hex)]."""
    if target != root and target not in parents:
        raise KeyError(f"unknown node {target.hex()}")
    steps = []
    d = target
    while d != root:
        pd, action = parents[d]
        steps.append((action, d.hex()))
        d = pd
    steps.reverse()
    return steps


def replay_trace(steps, topo: Topology, workload: Workload, program) -> GlobalState:
    """Re-apply a trace from the initial state, checking each recorded digest."""
    mctx = ModelContext(topo, program)
    s = initial_state(topo, workload, program)
    for action, digest_hex in steps:
        assert action in enabled_actions(s, mctx), f"replay: {action.kind} not enabled"
        s = apply(s, action, mctx)
        assert s.digest_hex() == digest_hex, "replay: digest mismatch"
    return s


def _pkt_key(pkt):
    return (pkt.src, pkt.dst)


def causal_audit(trace: list) -> bool:
    """Check a trace against the causal enabling order of the session life cycle.

    For each packet: nomatch only after its send, the handler call only after a
    nomatch, rule installs and packet-outs only after a handler ran, matches
    and timeouts only for rules actually installed, the removal handler only
    after the timeout fired, and rule modifications only after a removal
    handler ran.
    """
    sends, nomatches, ctrls, fwds, delivered = set(), set(), set(), set(), set()
    adds, frmvds = set(), set()
    n_ctrl = n_fsync = 0
    for action, _ in trace:
        k = action.kind
        if k == SEND:
            sends.add(_pkt_key(action.pkt))
        elif k == NOMATCH:
            if _pkt_key(action.pkt) not in sends:
                return False
            nomatches.add(_pkt_key(action.pkt))
        elif k == CTRL:
            if _pkt_key(action.pkt) not in nomatches:
                return False
            ctrls.add(_pkt_key(action.pkt))
            n_ctrl += 1
        elif k == ADD:
            if n_ctrl == 0:
                return False
            adds.add(action.rule)
        elif k == FWD:
            if _pkt_key(action.pkt) not in ctrls:
                return False
            fwds.add(_pkt_key(action.pkt))
            delivered.add(_pkt_key(action.pkt))
        elif k == MATCH:
            if action.rule not in adds:
                return False
            if action.rule.fwd_port != DROP:
                delivered.add(_pkt_key(action.pkt))
        elif k == FRMVD:
            if action.rule not in adds:
                return False
            frmvds.add(action.rule)
        elif k == FSYNC:
            if action.rule not in frmvds:
                return False
            n_fsync += 1
        elif k == MOD:
            if n_fsync == 0:
                return False
        elif k == RECV:
            if _pkt_key(action.pkt) not in delivered:
                return False
        # del/brepl/bsync carry no Fig-style parent here
    return True


class _Violation(Exception):
    def __init__(self, kind, trace, digest_hex, action=None):
        self.kind = kind
        self.trace = trace
        self.digest_hex = digest_hex
        self.action = action


def explore(
    topo: Topology,
    workload: Workload,
    program,
    prop,
    opts: Optional[ExplorationOptions] = None,
) -> ExplorationReport:
    """Visit every state reachable under the full (or reduced) relation.

    Evaluates the invariant on every visited state and every obligation on
    every fired transition; stops at the first violation, on frontier
    exhaustion, or when a bound (states, deadline, memory) is hit.
    """
    opts = opts or ExplorationOptions()
    opts.validate()
    mctx = ModelContext(topo, program)
    cprop = prop if isinstance(prop, CompiledProperty) else compile_property(prop, topo, program)
    pctx = PorContext(
        program=program,
        prop=cprop,
        assume_phi_invariant=opts.assume_phi_invariant,
        extra_safe_kinds=opts.extra_safe_kinds,
    )
    started = time.monotonic()
    deadline = started + opts.deadline_s if opts.deadline_s else None
    s0 = initial_state(topo, workload, program)
    root = s0.digest

    report = ExplorationReport(
        verdict=VERDICT_HOLDS,
        states_explored=1,
        transitions_fired=0,
        elapsed_ms=0,
        stop_reason="frontier-exhausted",
        por=opts.por,
        search=opts.search,
        initial_digest=root.hex(),
        graph={} if opts.record_graph else None,
    )
    parents: dict = {}

    def finish(verdict, reason):
        report.verdict = verdict
        report.stop_reason = reason
        report.elapsed_ms = int((time.monotonic() - started) * 1000)
        if opts.record_graph:
            report.parents = parents
        return report

    if not cprop.eval_invariant(s0):
        report.counterexample = []
        report.violation = {"kind": "invariant", "state": root.hex()}
        return finish(VERDICT_VIOLATED, "violation")

    try:
        if opts.workers == 1:
            _explore_serial(s0, mctx, cprop, pctx, opts, report, parents, deadline)
        else:
            _explore_threaded(s0, mctx, cprop, pctx, opts, report, parents, deadline)
    except _Violation as v:
        final = replay_trace(v.trace, topo, workload, program)
        if v.kind == "invariant":
            assert not cprop.eval_invariant(final), "counterexample does not replay"
        else:
            last_action = v.trace[-1][0]
            assert any(
                not ob.holds(last_action, final) for ob in cprop.obligations
            ), "obligation counterexample does not replay"
        report.counterexample = v.trace
        report.violation = {"kind": v.kind, "state": v.digest_hex}
        return finish(VERDICT_VIOLATED, "violation")
    except MemoryError:
        return finish(VERDICT_BOUND, "memory")

    if report.stop_reason in ("max-states", "deadline"):
        return finish(VERDICT_BOUND, report.stop_reason)
    return finish(VERDICT_HOLDS, "frontier-exhausted")


def _expand(s, mctx, pctx, opts, report):
    """Enabled actions plus the subset the search will fire, with bookkeeping."""
    enabled = enabled_actions(s, mctx)
    if opts.por:
        acts = ample(s, enabled, pctx)
    else:
        acts = enabled
    node = None
    if report.graph is not None:
        enabled_set = set(enabled)
        node = GraphNode(
            enabled_count=len(enabled),
            ample_count=len(acts),
            fully_expanded=len(acts) == len(enabled),
            ample_subset_ok=all(a in enabled_set for a in acts),
            ample_all_safe=all(is_safe(a, pctx) for a in acts)
            if len(acts) != len(enabled)
            else True,
        )
        report.graph[s.digest_hex()] = node
    if opts.check_commutation:
        for a in acts:
            if not is_safe(a, pctx):
                continue
            for b in enabled:
                if b == a:
                    continue
                report.commutation_checked += 1
                if not commutation_oracle(s, a, b, mctx):
                    if len(report.commutation_failures) < 25:
                        report.commutation_failures.append(
                            (s.digest_hex(), a, b)
                        )
                    else:
                        report.commutation_failures.append(None)
    return acts, node


def _explore_serial(s0, mctx, cprop, pctx, opts, report, parents, deadline):
    visited = {s0.digest: None}
    frontier = deque((s0,))
    pop = frontier.popleft if opts.search == "bfs" else frontier.pop
    obligations = cprop.obligations
    eval_inv = cprop.eval_invariant
    root = s0.digest

    while frontier:
        if deadline is not None and time.monotonic() > deadline:
            report.stop_reason = "deadline"
            return
        s = pop()
        acts, node = _expand(s, mctx, pctx, opts, report)
        sd = s.digest
        base_trace = None
        for a in acts:
            succ = apply(s, a, mctx)
            report.transitions_fired += 1
            if a.kind == FSYNC:
                report.fsync_fired += 1
                if len(succ.ctrl.frq) != len(s.ctrl.frq) - 1:
                    report.fsync_shrink_violations += 1
            d = succ.digest
            if node is not None:
                node.succ.append((a.kind, d.hex()))
            for ob in obligations:
                if not ob.holds(a, succ):
                    if base_trace is None:
                        base_trace = reconstruct_trace(parents, root, sd)
                    raise _Violation(
                        "obligation", base_trace + [(a, d.hex())], d.hex(), a
                    )
            if d not in visited:
                if opts.max_states is not None and report.states_explored >= opts.max_states:
                    report.stop_reason = "max-states"
                    return
                visited[d] = None
                parents[d] = (sd, a)
                report.states_explored += 1
                if not eval_inv(succ):
                    raise _Violation(
                        "invariant", reconstruct_trace(parents, root, d), d.hex()
                    )
                frontier.append(succ)


def _explore_threaded(s0, mctx, cprop, pctx, opts, report, parents, deadline):
    """Shared-frontier worker pool. Verdicts match the serial explorer; the
    states-explored count is only guaranteed reproducible at workers=1."""
    lock = threading.Lock()
    work_ready = threading.Condition(lock)
    visited = {s0.digest: None}
    frontier = deque((s0,))
    root = s0.digest
    state = {"active": 0, "stop": None, "done": False}
    obligations = cprop.obligations
    eval_inv = cprop.eval_invariant

    def worker():
        while True:
            with work_ready:
                while not frontier and state["active"] and not state["done"]:
                    work_ready.wait()
                if state["done"] or (not frontier and not state["active"]):
                    state["done"] = True
                    work_ready.notify_all()
                    return
                s = frontier.pop() if opts.search == "dfs" else frontier.popleft()
                state["active"] += 1
            try:
                if deadline is not None and time.monotonic() > deadline:
                    with work_ready:
                        report.stop_reason = "deadline"
                        state["done"] = True
                        work_ready.notify_all()
                    return
                acts, node = _expand(s, mctx, pctx, opts, report)
                succs = [(a, apply(s, a, mctx)) for a in acts]
                sd = s.digest
                with work_ready:
                    report.transitions_fired += len(succs)
                    for a, succ in succs:
                        d = succ.digest
                        if a.kind == FSYNC:
                            report.fsync_fired += 1
                            if len(succ.ctrl.frq) != len(s.ctrl.frq) - 1:
                                report.fsync_shrink_violations += 1
                        if node is not None:
                            node.succ.append((a.kind, d.hex()))
                        violated_ob = any(not ob.holds(a, succ) for ob in obligations)
                        if violated_ob:
                            trace = reconstruct_trace(parents, root, sd) + [(a, d.hex())]
                            state["stop"] = _Violation("obligation", trace, d.hex(), a)
                            state["done"] = True
                            work_ready.notify_all()
                            return
                        if d not in visited:
                            if (
                                opts.max_states is not None
                                and report.states_explored >= opts.max_states
                            ):
                                report.stop_reason = "max-states"
                                state["done"] = True
                                work_ready.notify_all()
                                return
                            visited[d] = None
                            parents[d] = (sd, a)
                            report.states_explored += 1
                            if not eval_inv(succ):
                                state["stop"] = _Violation(
                                    "invariant",
                                    reconstruct_trace(parents, root, d),
                                    d.hex(),
                                )
                                state["done"] = True
                                work_ready.notify_all()
                                return
                            frontier.append(succ)
                            work_ready.notify_all()
            finally:
                with work_ready:
                    state["active"] -= 1
                    if not frontier and not state["active"]:
                        state["done"] = True
                        work_ready.notify_all()

    threads = [threading.Thread(target=worker) for _ in range(opts.workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if state["stop"] is not None:
        raise state["stop"]
