"""The action-deterministic transition relation.

enabled_actions enumerates every action instance a state admits;
apply computes the unique successor for one of them. Both are pure
functions of immutable values, so they can be called from any number
of exploration workers.
"""

from __future__ import annotations

from typing import NamedTuple, Optional

from .model import (
    DROP,
    FM_ADD,
    FM_DEL,
    FM_MOD,
    HOST,
    SWITCH,
    UNSET,
    ControllerEnv,
    GlobalState,
    HostState,
    Packet,
    Rule,
    SwitchState,
    Topology,
    apply_patch,
    ft_del,
    ft_put,
    insort,
    pattern_matches,
    remove,
)

SEND = "send"
RECV = "recv"
MATCH = "match"
NOMATCH = "nomatch"
CTRL = "ctrl"
FWD = "fwd"
ADD = "add"
DEL = "del"
MOD = "mod"
BREPL = "brepl"
BSYNC = "bsync"
FRMVD = "frmvd"
FSYNC = "fsync"

HANDLER_KINDS = frozenset((CTRL, BSYNC, FSYNC))


class Action(NamedTuple):
    """One labelled transition. Unused parameters stay at their defaults.

    Handler actions (ctrl/bsync/fsync) carry the controller state they run
    against, as the transition label does; an action value therefore fully
    determines its successor from a given state.
    """

    kind: str
    host: int = -1
    sw: int = -1
    pkt: Optional[Packet] = None
    rule: Optional[Rule] = None
    port: int = -1
    barrier: int = -1
    pattern: Optional[tuple] = None
    patch: Optional[tuple] = None
    cs: Optional[tuple] = None


class ModelContext:
    """Topology + controller program, with lookup tables the hot path needs."""

    __slots__ = ("topo", "program", "reactions")

    def __init__(self, topo: Topology, program, reactions: Optional[dict] = None):
        self.topo = topo
        self.program = program
        # role -> receive reaction; none of the built-in roles define one,
        # so recv is never enabled in shipped scenarios.
        self.reactions = reactions or {}


def match_rule(ft: tuple, pkt: Packet) -> Optional[Rule]:
    """Highest-priority matching rule; ties break to the lowest encoding.

    The flow table is kept sorted by rule encoding, so the first hit at any
    given priority is already the tie-break winner.
    """
    best = None
    for r in ft:
        if (
            (r.match_src == UNSET or r.match_src == pkt.src)
            and (r.match_dst == UNSET or r.match_dst == pkt.dst)
            and (r.match_in_port == UNSET or r.match_in_port == pkt.in_port)
        ):
            if best is None or r.priority > best.priority:
                best = r
    return best


def enabled_actions(s: GlobalState, ctx: ModelContext) -> list:
    """All enabled action instances, in a fixed deterministic order.

    Switch control-plane work is urgent: while any FlowMod sits in a first
    control-queue segment, or an executed barrier awaits its reply, only
    those actions are enabled and the data plane, timeouts, and controller
    handlers wait. Each control message is still its own transition, so
    traces keep their add/del/mod steps; urgency only prunes interleavings
    in which unrelated actions overtake a switch that is mid-update.
    """
    out = []
    for sw, ss in enumerate(s.switches):
        for msg in ss.segments[0]:
            if msg[0] == FM_ADD:
                out.append(Action(ADD, sw=sw, rule=msg[1]))
            elif msg[0] == FM_DEL:
                out.append(Action(DEL, sw=sw, rule=msg[1]))
            else:
                out.append(Action(MOD, sw=sw, pattern=msg[1], patch=msg[2]))
        if ss.barriers and not ss.segments[0]:
            out.append(Action(BREPL, sw=sw, barrier=ss.barriers[0]))
    if out:
        return out
    topo = ctx.topo
    for h, hs in enumerate(s.hosts):
        for pkt in hs.send_buf:
            out.append(Action(SEND, host=h, pkt=pkt))
        if topo.roles[h] in ctx.reactions:
            for pkt in hs.rcvq:
                out.append(Action(RECV, host=h, pkt=pkt))
    for sw, ss in enumerate(s.switches):
        for pkt in ss.pq:
            r = match_rule(ss.ft, pkt)
            if r is None:
                out.append(Action(NOMATCH, sw=sw, pkt=pkt))
            else:
                out.append(Action(MATCH, sw=sw, pkt=pkt, rule=r))
        for pkt, pt in ss.fq:
            out.append(Action(FWD, sw=sw, pkt=pkt, port=pt))
        for r in ss.ft:
            if r.timeout:
                out.append(Action(FRMVD, sw=sw, rule=r))
    cs = s.ctrl.cs
    for sw, pkt in s.ctrl.rq:
        out.append(Action(CTRL, sw=sw, pkt=pkt, cs=cs))
    for sw, b in s.ctrl.brq:
        out.append(Action(BSYNC, sw=sw, barrier=b, cs=cs))
    for sw, r in s.ctrl.frq:
        out.append(Action(FSYNC, sw=sw, rule=r, cs=cs))
    return out


def _replace_switch(switches: tuple, sw: int, ss: SwitchState) -> tuple:
    return switches[:sw] + (ss,) + switches[sw + 1 :]


def _replace_host(hosts: tuple, h: int, hs: HostState) -> tuple:
    return hosts[:h] + (hs,) + hosts[h + 1 :]


def _deliver(hosts: tuple, switches: tuple, topo: Topology, sw: int, port: int, pkt: Packet):
    """Move a packet across the link at (sw, port), rewriting its in_port."""
    tag, dev, dport = topo.peer(SWITCH, sw, port)
    moved = Packet(pkt.src, pkt.dst, dport)
    if tag == HOST:
        hs = hosts[dev]
        rcvq = insort(hs.rcvq, moved)
        if rcvq is not hs.rcvq:
            hosts = _replace_host(hosts, dev, HostState(rcvq, hs.send_buf))
    else:
        ss = switches[dev]
        pq = insort(ss.pq, moved)
        if pq is not ss.pq:
            switches = _replace_switch(
                switches, dev, SwitchState(pq, ss.fq, ss.segments, ss.barriers, ss.ft)
            )
    return hosts, switches


def _plumb_emissions(switches: tuple, emissions: tuple, topo: Topology) -> tuple:
    """Append handler output to the target switches' queues, in emission order."""
    if not emissions:
        return switches
    for em in emissions:
        kind = em[0]
        sw = em[1]
        ss = switches[sw]
        if kind == "pktout":
            _, _, pkt, port = em
            assert port != DROP and (SWITCH, sw, port) in topo.links, "PacketOut to unknown port"
            fq = insort(ss.fq, (pkt, port))
            if fq is ss.fq:
                continue
            ss = SwitchState(ss.pq, fq, ss.segments, ss.barriers, ss.ft)
        elif kind == "flowmod":
            _, _, msg = em
            seg = insort(ss.segments[-1], msg)
            if seg is ss.segments[-1]:
                continue
            ss = SwitchState(ss.pq, ss.fq, ss.segments[:-1] + (seg,), ss.barriers, ss.ft)
        else:
            assert kind == "barrier"
            _, _, bid = em
            ss = SwitchState(
                ss.pq, ss.fq, ss.segments + ((),), ss.barriers + (bid,), ss.ft
            )
        switches = _replace_switch(switches, sw, ss)
    return switches


def apply(s: GlobalState, a: Action, ctx: ModelContext) -> GlobalState:
    """Successor of s under a. Enabledness violations are programming errors."""
    topo = ctx.topo
    kind = a.kind
    hosts = s.hosts
    switches = s.switches
    ctrl = s.ctrl

    if kind == SEND:
        hs = hosts[a.host]
        assert a.pkt in hs.send_buf, "send: packet not pending"
        sw, sport = topo.host_attach[a.host]
        hosts = _replace_host(hosts, a.host, HostState(hs.rcvq, remove(hs.send_buf, a.pkt)))
        ss = switches[sw]
        pq = insort(ss.pq, Packet(a.pkt.src, a.pkt.dst, sport))
        switches = _replace_switch(
            switches, sw, SwitchState(pq, ss.fq, ss.segments, ss.barriers, ss.ft)
        )
        return GlobalState(hosts, switches, ctrl)

    if kind == MATCH:
        ss = switches[a.sw]
        assert a.pkt in ss.pq and match_rule(ss.ft, a.pkt) == a.rule, "match: not enabled"
        if a.rule.fwd_port == DROP:
            return s  # packet stays in pq under the (0,inf) abstraction
        hosts, switches = _deliver(hosts, switches, topo, a.sw, a.rule.fwd_port, a.pkt)
        return GlobalState(hosts, switches, ctrl)

    if kind == NOMATCH:
        ss = switches[a.sw]
        assert a.pkt in ss.pq and match_rule(ss.ft, a.pkt) is None, "nomatch: not enabled"
        rq = insort(ctrl.rq, (a.sw, a.pkt))
        if rq is ctrl.rq:
            return s
        return GlobalState(hosts, switches, ControllerEnv(ctrl.cs, rq, ctrl.brq, ctrl.frq))

    if kind == FWD:
        ss = switches[a.sw]
        assert (a.pkt, a.port) in ss.fq, "fwd: no such forward-queue entry"
        ss = SwitchState(ss.pq, remove(ss.fq, (a.pkt, a.port)), ss.segments, ss.barriers, ss.ft)
        switches = _replace_switch(switches, a.sw, ss)
        hosts, switches = _deliver(hosts, switches, topo, a.sw, a.port, a.pkt)
        return GlobalState(hosts, switches, ctrl)

    if kind == ADD:
        ss = switches[a.sw]
        msg = (FM_ADD, a.rule)
        assert msg in ss.segments[0], "add: FlowMod not in first segment"
        segments = (remove(ss.segments[0], msg),) + ss.segments[1:]
        ss = SwitchState(ss.pq, ss.fq, segments, ss.barriers, ft_put(ss.ft, a.rule))
        return GlobalState(hosts, _replace_switch(switches, a.sw, ss), ctrl)

    if kind == DEL:
        ss = switches[a.sw]
        msg = (FM_DEL, a.rule)
        assert msg in ss.segments[0], "del: FlowMod not in first segment"
        segments = (remove(ss.segments[0], msg),) + ss.segments[1:]
        ss = SwitchState(ss.pq, ss.fq, segments, ss.barriers, ft_del(ss.ft, a.rule))
        return GlobalState(hosts, _replace_switch(switches, a.sw, ss), ctrl)

    if kind == MOD:
        ss = switches[a.sw]
        msg = (FM_MOD, a.pattern, a.patch)
        assert msg in ss.segments[0], "mod: FlowMod not in first segment"
        segments = (remove(ss.segments[0], msg),) + ss.segments[1:]
        ft = ss.ft
        hits = [r for r in ft if pattern_matches(a.pattern, r)]
        if hits:
            # Deterministic pick: lowest canonical encoding among the matches.
            victim = min(hits)
            ft = ft_put(tuple(r for r in ft if r != victim), apply_patch(a.patch, victim))
        ss = SwitchState(ss.pq, ss.fq, segments, ss.barriers, ft)
        return GlobalState(hosts, _replace_switch(switches, a.sw, ss), ctrl)

    if kind == BREPL:
        ss = switches[a.sw]
        assert ss.barriers and ss.barriers[0] == a.barrier and not ss.segments[0], (
            "brepl: barrier not at an executed prefix"
        )
        ss = SwitchState(ss.pq, ss.fq, ss.segments[1:], ss.barriers[1:], ss.ft)
        brq = insort(ctrl.brq, (a.sw, a.barrier))
        return GlobalState(
            hosts,
            _replace_switch(switches, a.sw, ss),
            ControllerEnv(ctrl.cs, ctrl.rq, brq, ctrl.frq),
        )

    if kind == FRMVD:
        ss = switches[a.sw]
        assert a.rule in ss.ft and a.rule.timeout, "frmvd: rule not removable"
        ss = SwitchState(ss.pq, ss.fq, ss.segments, ss.barriers, remove(ss.ft, a.rule))
        frq = insort(ctrl.frq, (a.sw, a.rule))
        return GlobalState(
            hosts,
            _replace_switch(switches, a.sw, ss),
            ControllerEnv(ctrl.cs, ctrl.rq, ctrl.brq, frq),
        )

    if kind == CTRL:
        assert (a.sw, a.pkt) in ctrl.rq, "ctrl: no such PacketIn"
        assert a.cs == ctrl.cs, "ctrl: stale controller state in action"
        cs2, emissions = ctx.program.pkt_in(ctrl.cs, a.sw, a.pkt)
        switches = _plumb_emissions(switches, emissions, topo)
        return GlobalState(
            hosts,
            switches,
            ControllerEnv(cs2, remove(ctrl.rq, (a.sw, a.pkt)), ctrl.brq, ctrl.frq),
        )

    if kind == BSYNC:
        assert (a.sw, a.barrier) in ctrl.brq, "bsync: no such barrier reply"
        assert a.cs == ctrl.cs, "bsync: stale controller state in action"
        cs2, emissions = ctx.program.barrier(ctrl.cs, a.sw, a.barrier)
        switches = _plumb_emissions(switches, emissions, topo)
        return GlobalState(
            hosts,
            switches,
            ControllerEnv(cs2, ctrl.rq, remove(ctrl.brq, (a.sw, a.barrier)), ctrl.frq),
        )

    if kind == FSYNC:
        assert (a.sw, a.rule) in ctrl.frq, "fsync: no such FlowRemoved"
        assert a.cs == ctrl.cs, "fsync: stale controller state in action"
        cs2, emissions = ctx.program.flow_removed(ctrl.cs, a.sw, a.rule)
        switches = _plumb_emissions(switches, emissions, topo)
        return GlobalState(
            hosts,
            switches,
            ControllerEnv(cs2, ctrl.rq, ctrl.brq, remove(ctrl.frq, (a.sw, a.rule))),
        )

    if kind == RECV:
        reaction = ctx.reactions.get(topo.roles[a.host])
        assert reaction is not None and a.pkt in hosts[a.host].rcvq, "recv: not enabled"
        return reaction(s, a.host, a.pkt, ctx)

    raise AssertionError(f"unknown action kind {kind!r}")
