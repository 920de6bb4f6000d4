"""Controller programs: the handler interface and the built-in load balancer.

A controller program is three pure handlers over an immutable register tuple,
plus the metadata the reduction machinery needs (a declared order-insensitivity
claim and the register footprint of the flow-removed handler).

Built-ins, selectable by name:
  rr-naive      round-robin scheduling, naive flow-removed handler
  lc-naive      least-connections scheduling, naive flow-removed handler
  lc-rebalance  least-connections scheduling, rebalancing flow-removed handler
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

from .model import (
    DROP,
    FM_ADD,
    FM_DEL,
    FM_MOD,
    UNSET,
    ConfigError,
    GlobalState,
    Packet,
    Rule,
    Topology,
    make_pattern,
)
from . import semantics
from .semantics import HANDLER_KINDS, Action, ModelContext, apply, enabled_actions

BUILTIN_CONTROLLERS = ("rr-naive", "lc-naive", "lc-rebalance")


# Handler emissions. PacketOut carries the packet and the out port; FlowMods
# carry the control message; barriers open a new control-queue segment.
def emit_packet_out(sw: int, pkt: Packet, port: int) -> tuple:
    return ("pktout", sw, pkt, port)


def emit_add(sw: int, rule: Rule) -> tuple:
    return ("flowmod", sw, (FM_ADD, rule))


def emit_del(sw: int, rule: Rule) -> tuple:
    return ("flowmod", sw, (FM_DEL, rule))


def emit_mod(sw: int, pattern: tuple, patch: tuple) -> tuple:
    return ("flowmod", sw, (FM_MOD, pattern, patch))


def emit_barrier(sw: int, barrier_id: int) -> tuple:
    return ("barrier", sw, barrier_id)


@dataclass(frozen=True)
class ControllerProgram:
    """Pure handlers over named registers, plus reduction metadata.

    Handlers map (cs, switch, payload) to (cs', emissions) and must be pure:
    the transition semantics calls them to build successor states, so any
    hidden mutable state would break action determinism.
    """

    name: str
    initial_cs: tuple
    pkt_in: Callable
    barrier: Callable
    flow_removed: Callable
    declared_order_insensitive: bool = False
    # Register bases each handler may write, keyed by the action kind that
    # runs it ("ctrl" / "bsync" / "fsync"); the reduction's visibility check
    # compares these against the registers the property reads.
    handler_writes: Mapping[str, frozenset] = field(default_factory=dict)
    registers: Mapping[str, Callable] = field(default_factory=dict)

    @property
    def flow_removed_writes(self) -> frozenset:
        return self.handler_writes.get(semantics.FSYNC, frozenset())


def register_base(name: str) -> str:
    """'sLoad[s1]' -> 'sLoad'; plain names map to themselves."""
    return name.split("[", 1)[0]


def _no_emissions(cs, sw, payload):
    return cs, ()


@dataclass(frozen=True)
class _LbConfig:
    """Topology facts the load balancer is configured with at deployment."""

    sw: int
    server_addr: tuple  # host index per server slot, ascending
    server_port: tuple  # switch port per server slot
    server_slot: Mapping[int, int]  # host index -> server slot
    dodgy: frozenset  # endpoint ids that are not whitelisted
    n_hosts: int


def _choose_round_robin(cursor: int, n: int) -> int:
    # The paper's cursor starts at 0 and rotates 1-based: next = cur mod n + 1.
    return cursor % n


def _choose_least_connections(sload: tuple) -> int:
    # argmin with lowest-slot tie-break, which index() gives us directly.
    return sload.index(min(sload))


def _cp1_pkt_in(cs, sw, pkt, cfg: _LbConfig, least_connections: bool):
    """PacketIn handler: firewall guard, scheduling, session rule deployment."""
    cursor, sload, depl = cs
    if pkt.src in cfg.dodgy:
        return cs, ()
    emissions = []
    if not depl[pkt.src]:
        if least_connections:
            si = _choose_least_connections(sload)
        else:
            si = _choose_round_robin(cursor, len(sload))
        cursor = si + 1
        srv_port = cfg.server_port[si]
        fwd_rule = Rule(pkt.src, UNSET, pkt.in_port, srv_port, 0, 0)
        sym_rule = Rule(cfg.server_addr[si], pkt.src, UNSET, pkt.in_port, 0, 1)
        emissions.append(emit_add(sw, fwd_rule))
        emissions.append(emit_add(sw, sym_rule))
        for d in sorted(cfg.dodgy):
            emissions.append(emit_add(sw, Rule(d, UNSET, UNSET, DROP, 0, 0)))
        sload = sload[:si] + (sload[si] + 1,) + sload[si + 1 :]
        depl = depl[: pkt.src] + (1,) + depl[pkt.src + 1 :]
    else:
        assert cursor >= 1, "deployed session with unset scheduling register"
        si = cursor - 1
    emissions.append(emit_packet_out(sw, pkt, cfg.server_port[si]))
    return (cursor, sload, depl), tuple(emissions)


def _naive_update(cs, rule: Rule, cfg: _LbConfig, check_underflow: bool):
    """Shared flow-removed bookkeeping: drop the session, clear the client flag."""
    cursor, sload, depl = cs
    si = cfg.server_slot.get(rule.match_src)
    assert si is not None, "flow-removed rule is not a symmetric rule"
    if check_underflow:
        assert sload[si] > 0, f"session count underflow for server slot {si}"
    sload = sload[:si] + (sload[si] - 1,) + sload[si + 1 :]
    client = rule.match_dst
    assert client != UNSET, "symmetric rule without a destination"
    depl = depl[:client] + (0,) + depl[client + 1 :]
    return (cursor, sload, depl)


def _cp2_flow_removed(cs, sw, rule, cfg: _LbConfig):
    """Naive handler: bookkeeping only, no rule updates."""
    return _naive_update(cs, rule, cfg, check_underflow=True), ()


def _cp3_flow_removed(cs, sw, rule, cfg: _LbConfig):
    """Rebalancing handler: naive update, then move one session max -> min.

    The moved rules are identified by field patterns resolved when the mod
    executes at the switch; a pattern that matches nothing is a no-op there.
    Pending rule traffic can make the decrement transiently undershoot zero,
    which the rebalance guard corrects within this same handler run, so the
    underflow check is deliberately not applied here.
    """
    cursor, sload, depl = _naive_update(cs, rule, cfg, check_underflow=False)
    emissions = ()
    mx, mn = max(sload), min(sload)
    if mx - mn > 1:
        i_max = sload.index(mx)
        i_min = sload.index(mn)
        emissions = (
            emit_mod(
                sw,
                make_pattern(fwd_port=cfg.server_port[i_max]),
                make_pattern(fwd_port=cfg.server_port[i_min]),
            ),
            emit_mod(
                sw,
                make_pattern(match_src=cfg.server_addr[i_max]),
                make_pattern(match_src=cfg.server_addr[i_min]),
            ),
        )
        sload = sload[:i_max] + (sload[i_max] - 1,) + sload[i_max + 1 :]
        sload = sload[:i_min] + (sload[i_min] + 1,) + sload[i_min + 1 :]
    return (cursor, sload, depl), emissions


def _lb_registers(topo: Topology, cfg: _LbConfig) -> dict:
    regs = {"server": lambda cs: cs[0]}

    def sload_reader(slot):
        return lambda cs: cs[1][slot]

    def depl_reader(host):
        return lambda cs: cs[2][host]

    for slot, addr in enumerate(cfg.server_addr):
        regs[f"sLoad[{topo.host_names[addr]}]"] = sload_reader(slot)
    for i in topo.clients:
        regs[f"deplSessions[{topo.host_names[i]}]"] = depl_reader(i)
    return regs


def builtin_program(name: str, topo: Topology) -> ControllerProgram:
    """Instantiate a built-in controller for a topology."""
    if name not in BUILTIN_CONTROLLERS:
        raise ConfigError(f"controller: unknown name {name!r}")
    if len(topo.switch_names) != 1:
        raise ConfigError("controller: built-in programs require exactly one switch")
    servers = topo.servers
    if not servers:
        raise ConfigError("controller: topology has no servers")
    cfg = _LbConfig(
        sw=0,
        server_addr=servers,
        server_port=tuple(topo.host_attach[i][1] for i in servers),
        server_slot={addr: slot for slot, addr in enumerate(servers)},
        dodgy=frozenset(topo.dodgy_hosts),
        n_hosts=len(topo.host_names),
    )
    least = name != "rr-naive"
    flow_removed = _cp3_flow_removed if name == "lc-rebalance" else _cp2_flow_removed
    initial_cs = (0, (0,) * len(servers), (0,) * cfg.n_hosts)
    return ControllerProgram(
        name=name,
        initial_cs=initial_cs,
        pkt_in=lambda cs, sw, pkt: _cp1_pkt_in(cs, sw, pkt, cfg, least),
        barrier=_no_emissions,
        flow_removed=lambda cs, sw, rule: flow_removed(cs, sw, rule, cfg),
        declared_order_insensitive=True,
        handler_writes={
            semantics.CTRL: frozenset({"server", "sLoad", "deplSessions"}),
            semantics.BSYNC: frozenset(),
            semantics.FSYNC: frozenset({"sLoad", "deplSessions"}),
        },
        registers=_lb_registers(topo, cfg),
    )


@dataclass
class OrderWitness:
    state: GlobalState
    first: Action
    second: Action
    digest_first_second: str
    digest_second_first: str


@dataclass
class OrderSensitivityReport:
    states_checked: int = 0
    pairs_checked: int = 0
    witness_count: int = 0
    witnesses: list = field(default_factory=list)

    @property
    def sensitive(self) -> bool:
        return self.witness_count > 0


def check_order_sensitivity(
    states, ctx: ModelContext, max_witnesses: int = 10
) -> OrderSensitivityReport:
    """Bounded search for handler pairs whose two orders end in different states.

    For every sampled state with two or more enabled handler actions, runs each
    unordered pair in both orders (the second handler re-reads the controller
    state the first one left behind) and reports pairs whose final states
    differ. An empty report is evidence, not proof, of order-insensitivity.
    """
    report = OrderSensitivityReport()
    for s in states:
        handlers = [a for a in enabled_actions(s, ctx) if a.kind in HANDLER_KINDS]
        if len(handlers) < 2:
            continue
        report.states_checked += 1
        for i in range(len(handlers)):
            for j in range(i + 1, len(handlers)):
                a, b = handlers[i], handlers[j]
                report.pairs_checked += 1
                s_ab = apply(s, a, ctx)
                s_ab = apply(s_ab, b._replace(cs=s_ab.ctrl.cs), ctx)
                s_ba = apply(s, b, ctx)
                s_ba = apply(s_ba, a._replace(cs=s_ba.ctrl.cs), ctx)
                if s_ab.digest != s_ba.digest:
                    report.witness_count += 1
                    if len(report.witnesses) < max_witnesses:
                        report.witnesses.append(
                            OrderWitness(
                                state=s,
                                first=a,
                                second=b,
                                digest_first_second=s_ab.digest_hex(),
                                digest_second_first=s_ba.digest_hex(),
                            )
                        )
    return report
