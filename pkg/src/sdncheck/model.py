"""Immutable network-model values: topology, packets, rules, queues, states.

Everything in this module is a value. Mutating operations elsewhere build new
objects; components precompute a canonical byte encoding at construction so
that state deduplication and hashing stay cheap during exploration.
"""

from __future__ import annotations

import hashlib
import marshal

_MARSHAL_V = 2  # no instance back-references: equal values encode to equal bytes
from dataclasses import dataclass
from typing import NamedTuple, Optional

# Sentinels kept as small negative ints so every model value is a nest of
# plain ints and tuples (orderable, marshal-encodable).
UNSET = -1  # absent match field
DROP = -1   # distinguished forward target; never a physical port number
KEEP = -2   # pattern/patch slot: don't care / leave unchanged

HOST = 0
SWITCH = 1

ROLE_CLIENT = "client"
ROLE_DODGY = "dodgy"
ROLE_SERVER = "server"
ROLES = (ROLE_CLIENT, ROLE_DODGY, ROLE_SERVER)


class ConfigError(ValueError):
    """Rejected topology/workload/property configuration; message names the key."""


class Packet(NamedTuple):
    """A packet header. in_port is rewritten on every hop; src/dst never are."""

    src: int
    dst: int
    in_port: int


class Rule(NamedTuple):
    """A flow-table entry. Match fields use UNSET when absent; timeout is 0/1."""

    match_src: int
    match_dst: int
    match_in_port: int
    fwd_port: int
    priority: int
    timeout: int

    def match_key(self) -> tuple:
        # Identity for table replacement and FlowModDel: match fields + priority,
        # ignoring the forward action and the timeout bit.
        return (self.match_src, self.match_dst, self.match_in_port, self.priority)

    def is_catch_all(self) -> bool:
        return (
            self.match_src == UNSET
            and self.match_dst == UNSET
            and self.match_in_port == UNSET
        )


# FlowMod messages as they sit in a switch control-queue segment.
# ("add", Rule) | ("del", Rule) | ("mod", pattern, patch)
# pattern/patch are 6-tuples aligned with Rule fields, KEEP = don't care.
FM_ADD = "add"
FM_DEL = "del"
FM_MOD = "mod"


def make_pattern(
    match_src: int = KEEP,
    match_dst: int = KEEP,
    match_in_port: int = KEEP,
    fwd_port: int = KEEP,
    priority: int = KEEP,
    timeout: int = KEEP,
) -> tuple:
    return (match_src, match_dst, match_in_port, fwd_port, priority, timeout)


def pattern_matches(pattern: tuple, rule: Rule) -> bool:
    return all(p == KEEP or p == f for p, f in zip(pattern, rule))


def apply_patch(patch: tuple, rule: Rule) -> Rule:
    return Rule(*(f if p == KEEP else p for p, f in zip(patch, rule)))


def _plain_msg(msg: tuple) -> tuple:
    kind = msg[0]
    if kind == FM_MOD:
        return msg  # pattern/patch already plain tuples
    return (kind, tuple(msg[1]))


class HostState:
    """Receive queue plus not-yet-injected packets, both as sorted tuples."""

    __slots__ = ("rcvq", "send_buf", "enc")

    def __init__(self, rcvq: tuple, send_buf: tuple):
        self.rcvq = rcvq
        self.send_buf = send_buf
        self.enc = marshal.dumps(
            (tuple(map(tuple, rcvq)), tuple(map(tuple, send_buf))), _MARSHAL_V
        )

    def __eq__(self, other):
        return isinstance(other, HostState) and self.enc == other.enc

    def __hash__(self):
        return hash(self.enc)

    def __repr__(self):
        return f"HostState(rcvq={self.rcvq!r}, send_buf={self.send_buf!r})"


class SwitchState:
    """Packet queue, forward queue, barrier-segmented control queue, flow table.

    segments is a tuple of FlowMod-message sets (sorted tuples); barriers holds
    the barrier ids separating them, so len(segments) == len(barriers) + 1.
    """

    __slots__ = ("pq", "fq", "segments", "barriers", "ft", "enc")

    def __init__(self, pq: tuple, fq: tuple, segments: tuple, barriers: tuple, ft: tuple):
        self.pq = pq
        self.fq = fq
        self.segments = segments
        self.barriers = barriers
        self.ft = ft
        self.enc = marshal.dumps(
            (
                tuple(map(tuple, pq)),
                tuple((tuple(p), pt) for p, pt in fq),
                tuple(tuple(_plain_msg(m) for m in seg) for seg in segments),
                barriers,
                tuple(map(tuple, ft)),
            ),
            _MARSHAL_V,
        )

    def __eq__(self, other):
        return isinstance(other, SwitchState) and self.enc == other.enc

    def __hash__(self):
        return hash(self.enc)

    def __repr__(self):
        return (
            f"SwitchState(pq={self.pq!r}, fq={self.fq!r}, segments={self.segments!r}, "
            f"barriers={self.barriers!r}, ft={self.ft!r})"
        )


EMPTY_CQ = ((),)  # one open segment, no pending barriers


class ControllerEnv:
    """Controller program state plus the three controller-side queues."""

    __slots__ = ("cs", "rq", "brq", "frq", "enc")

    def __init__(self, cs: tuple, rq: tuple, brq: tuple, frq: tuple):
        self.cs = cs
        self.rq = rq
        self.brq = brq
        self.frq = frq
        self.enc = marshal.dumps(
            (
                cs,
                tuple((sw, tuple(p)) for sw, p in rq),
                brq,
                tuple((sw, tuple(r)) for sw, r in frq),
            ),
            _MARSHAL_V,
        )

    def __eq__(self, other):
        return isinstance(other, ControllerEnv) and self.enc == other.enc

    def __hash__(self):
        return hash(self.enc)

    def __repr__(self):
        return (
            f"ControllerEnv(cs={self.cs!r}, rq={self.rq!r}, "
            f"brq={self.brq!r}, frq={self.frq!r})"
        )


class GlobalState:
    """One state of the whole network: host states, switch states, controller.

    Hosts and switches are positional (index order fixed by the topology), so
    equality of the concatenated component encodings is exactly equality of
    canonical serializations.
    """

    __slots__ = ("hosts", "switches", "ctrl", "digest")

    def __init__(self, hosts: tuple, switches: tuple, ctrl: ControllerEnv):
        self.hosts = hosts
        self.switches = switches
        self.ctrl = ctrl
        h = hashlib.sha256()
        for x in hosts:
            h.update(x.enc)
        for x in switches:
            h.update(x.enc)
        h.update(ctrl.enc)
        self.digest = h.digest()[:16]

    def canonical_bytes(self) -> bytes:
        parts = [x.enc for x in self.hosts]
        parts.extend(x.enc for x in self.switches)
        parts.append(self.ctrl.enc)
        return b"".join(parts)

    def digest_hex(self) -> str:
        return self.digest.hex()

    def __eq__(self, other):
        return (
            isinstance(other, GlobalState)
            and self.digest == other.digest
            and self.canonical_bytes() == other.canonical_bytes()
        )

    def __hash__(self):
        return hash(self.digest)

    def __repr__(self):
        return f"GlobalState<{self.digest.hex()}>"


def canonical_hash(state: GlobalState) -> str:
    """Hex digest of the state's canonical serialization (dedup key)."""
    return state.digest.hex()


def insort(tup: tuple, item) -> tuple:
    """Insert into a sorted tuple with set semantics (no-op when present)."""
    if item in tup:
        return tup
    return tuple(sorted(tup + (item,)))


def remove(tup: tuple, item) -> tuple:
    return tuple(x for x in tup if x != item)


def ft_put(ft: tuple, rule: Rule) -> tuple:
    """Install a rule, replacing any entry with the same match fields/priority."""
    key = rule.match_key()
    kept = tuple(r for r in ft if r.match_key() != key)
    return tuple(sorted(kept + (rule,)))


def ft_del(ft: tuple, rule: Rule) -> tuple:
    key = rule.match_key()
    return tuple(r for r in ft if r.match_key() != key)


@dataclass(frozen=True)
class Topology:
    """Validated topology: index spaces, one-port hosts, involutive link map."""

    host_names: tuple  # sorted; endpoint id of host i is i
    switch_names: tuple
    roles: tuple  # per host index, one of ROLES
    links: dict  # (tag, device index, port) -> (tag, device index, port)
    host_attach: tuple  # per host index: (switch index, switch port)
    host_port: tuple  # per host index: the host-side port number
    switch_ports: tuple  # per switch index: sorted tuple of its port numbers
    cluster_name: str
    cluster_addr: int  # equals len(host_names)

    def host_index(self, name: str) -> int:
        try:
            return self.host_names.index(name)
        except ValueError:
            raise ConfigError(f"unknown host: {name}") from None

    def switch_index(self, name: str) -> int:
        try:
            return self.switch_names.index(name)
        except ValueError:
            raise ConfigError(f"unknown switch: {name}") from None

    def endpoint_index(self, name: str) -> int:
        if name == self.cluster_name:
            return self.cluster_addr
        return self.host_index(name)

    def endpoint_name(self, idx: int) -> str:
        if idx == self.cluster_addr:
            return self.cluster_name
        return self.host_names[idx]

    @property
    def servers(self) -> tuple:
        return tuple(i for i, r in enumerate(self.roles) if r == ROLE_SERVER)

    @property
    def clients(self) -> tuple:
        return tuple(
            i for i, r in enumerate(self.roles) if r in (ROLE_CLIENT, ROLE_DODGY)
        )

    @property
    def dodgy_hosts(self) -> tuple:
        return tuple(i for i, r in enumerate(self.roles) if r == ROLE_DODGY)

    def peer(self, tag: int, dev: int, port: int) -> tuple:
        return self.links[(tag, dev, port)]


@dataclass(frozen=True)
class Workload:
    """Initial packets per host, already in canonical per-host order."""

    send_bufs: tuple  # per host index: sorted tuple of Packet


def build_topology(config: dict) -> Topology:
    """Validate a topology document and freeze it into index space.

    Raises ConfigError for non-bijective links, dangling ports, duplicate
    devices, multi-port hosts, or a workload-unusable host mix.
    """
    if not isinstance(config, dict):
        raise ConfigError("topology: expected a JSON object")
    hosts_cfg = config.get("hosts")
    switches_cfg = config.get("switches")
    links_cfg = config.get("links")
    if not hosts_cfg or not isinstance(hosts_cfg, list):
        raise ConfigError("topology.hosts: required non-empty list")
    if not switches_cfg or not isinstance(switches_cfg, list):
        raise ConfigError("topology.switches: required non-empty list")
    if links_cfg is None or not isinstance(links_cfg, list):
        raise ConfigError("topology.links: required list")

    names = {}
    for h in hosts_cfg:
        if not isinstance(h, dict) or "name" not in h or "role" not in h:
            raise ConfigError("topology.hosts: each entry needs name and role")
        if h["role"] not in ROLES:
            raise ConfigError(f"topology.hosts.{h.get('name')}.role: {h['role']!r}")
        if h["name"] in names:
            raise ConfigError(f"topology: duplicate device id {h['name']!r}")
        names[h["name"]] = h["role"]
    for s in switches_cfg:
        if s in names:
            raise ConfigError(f"topology: duplicate device id {s!r}")
        names[s] = None

    host_names = tuple(sorted(h["name"] for h in hosts_cfg))
    switch_names = tuple(sorted(switches_cfg))
    roles = tuple(names[n] for n in host_names)

    cluster_name = config.get("cluster_address", "cluster")
    if cluster_name in names:
        raise ConfigError(
            f"topology.cluster_address: {cluster_name!r} collides with a host address"
        )

    def dev_ref(name, port):
        if not isinstance(port, int) or port < 0:
            raise ConfigError(f"topology.links: bad port {port!r} on {name!r}")
        if name in host_names:
            return (HOST, host_names.index(name), port)
        if name in switch_names:
            return (SWITCH, switch_names.index(name), port)
        raise ConfigError(f"topology.links: unknown device {name!r}")

    links = {}
    for entry in links_cfg:
        if not (isinstance(entry, (list, tuple)) and len(entry) == 4):
            raise ConfigError("topology.links: entries are [dev, port, dev, port]")
        a = dev_ref(entry[0], entry[1])
        b = dev_ref(entry[2], entry[3])
        if a in links or b in links:
            raise ConfigError(
                f"topology.links: port reused or non-bijective at {entry!r}"
            )
        if a == b:
            raise ConfigError(f"topology.links: self-link at {entry!r}")
        links[a] = b
        links[b] = a

    # Involution holds by construction; check anyway so hand-built maps can't drift.
    for k, v in links.items():
        if links[v] != k:
            raise ConfigError(f"topology.links: not an involution at {k!r}")

    host_attach = []
    host_port = []
    for i in range(len(host_names)):
        ends = [(p, v) for (t, d, p), v in links.items() if t == HOST and d == i]
        if len(ends) != 1:
            raise ConfigError(
                f"topology.links: host {host_names[i]!r} must have exactly one link"
            )
        port, (ptag, pdev, pport) = ends[0]
        if ptag != SWITCH:
            raise ConfigError(
                f"topology.links: host {host_names[i]!r} must attach to a switch"
            )
        host_attach.append((pdev, pport))
        host_port.append(port)

    switch_ports = []
    for j in range(len(switch_names)):
        ports = sorted(p for (t, d, p) in links if t == SWITCH and d == j)
        switch_ports.append(tuple(ports))

    if not any(r == ROLE_SERVER for r in roles):
        raise ConfigError("topology.hosts: zero servers (built-in workload needs one)")
    if not any(r in (ROLE_CLIENT, ROLE_DODGY) for r in roles):
        raise ConfigError("topology.hosts: zero clients (built-in workload needs one)")

    return Topology(
        host_names=host_names,
        switch_names=switch_names,
        roles=roles,
        links=links,
        host_attach=tuple(host_attach),
        host_port=tuple(host_port),
        switch_ports=tuple(switch_ports),
        cluster_name=cluster_name,
        cluster_addr=len(host_names),
    )


def build_workload(topo: Topology, config: Optional[dict]) -> Workload:
    """Resolve a workload document; default is one packet per client to the cluster."""
    per_host = [[] for _ in topo.host_names]
    if config is None:
        for i in topo.clients:
            per_host[i].append(Packet(i, topo.cluster_addr, topo.host_port[i]))
    else:
        packets = config.get("packets")
        if not isinstance(packets, list):
            raise ConfigError("workload.packets: required list")
        for p in packets:
            if not isinstance(p, dict) or "src" not in p or "dst" not in p:
                raise ConfigError("workload.packets: each entry needs src and dst")
            src = topo.host_index(p["src"])
            dst = topo.endpoint_index(p["dst"])
            per_host[src].append(Packet(src, dst, topo.host_port[src]))
    return Workload(send_bufs=tuple(tuple(sorted(set(b))) for b in per_host))


def initial_state(topo: Topology, workload: Workload, program) -> GlobalState:
    """All queues and flow tables empty; send buffers and registers populated."""
    hosts = tuple(HostState((), buf) for buf in workload.send_bufs)
    switches = tuple(
        SwitchState((), (), EMPTY_CQ, (), ()) for _ in topo.switch_names
    )
    ctrl = ControllerEnv(program.initial_cs, (), (), ())
    return GlobalState(hosts, switches, ctrl)
