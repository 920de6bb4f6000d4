"""Specification logic: invariant state predicates and action obligations.

Atoms range over controller registers and over packets sitting in switch
packet queues or host receive queues; no other buffer is observable. A
Property couples one invariant (checked at every state) with a set of
obligations of the form "whenever action alpha(args) fired, P holds in the
post-state".

Name resolution happens once, at compile time, against a topology and a
controller program; evaluation is then plain closure calls, so a missing
register or device is a configuration error and never an evaluation error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .controller import ControllerProgram, register_base
from .model import DROP, ConfigError, GlobalState, Topology
from .semantics import Action

_OPS = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


# ---------------------------------------------------------------- AST nodes

@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class RegRef:
    name: str


@dataclass(frozen=True)
class AbsDiff:
    left: object
    right: object


@dataclass(frozen=True)
class FieldRef:
    """Field of a value bound by an obligation pattern, e.g. r.fwd_port."""

    var: str
    field: str


@dataclass(frozen=True)
class Compare:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class PacketsAtom:
    """Quantifier over one observable queue: ('pq', switch) or ('rcvq', host)."""

    quant: str  # "all" | "any"
    queue: tuple
    tests: tuple  # ((field, op, value-name-or-int), ...) conjunction


@dataclass(frozen=True)
class CsEquals:
    """Degenerate whole-register-state atom Q(q)."""

    value: tuple


@dataclass(frozen=True)
class BoolConst:
    value: bool


@dataclass(frozen=True)
class Not:
    sub: object


@dataclass(frozen=True)
class And:
    subs: tuple


@dataclass(frozen=True)
class Or:
    subs: tuple


@dataclass(frozen=True)
class Obligation:
    """[alpha(binders)] body - body may read bound parameters and the post-state."""

    action_kind: str
    binders: tuple  # ((action-param, variable-name), ...)
    body: object


@dataclass(frozen=True)
class Property:
    invariant: object
    obligations: tuple = ()


# ------------------------------------------------------------- compilation

def _resolve_value(name, topo: Topology):
    if isinstance(name, int):
        return name
    if name == "drop":
        return DROP
    return topo.endpoint_index(name)


def _compile_expr(node, topo, program, binders):
    if isinstance(node, Const):
        v = node.value
        return lambda state, env: v
    if isinstance(node, RegRef):
        reader = program.registers.get(node.name)
        if reader is None:
            raise ConfigError(f"property: unknown register {node.name!r}")
        return lambda state, env: reader(state.ctrl.cs)
    if isinstance(node, AbsDiff):
        lf = _compile_expr(node.left, topo, program, binders)
        rf = _compile_expr(node.right, topo, program, binders)
        return lambda state, env: abs(lf(state, env) - rf(state, env))
    if isinstance(node, FieldRef):
        if node.var not in binders:
            raise ConfigError(f"property: unbound variable {node.var!r}")
        var, fld = node.var, node.field
        return lambda state, env: getattr(env[var], fld)
    raise ConfigError(f"property: bad expression {node!r}")


def _compile_node(node, topo, program, binders, reg_bases):
    if isinstance(node, BoolConst):
        v = node.value
        return lambda state, env: v
    if isinstance(node, Not):
        f = _compile_node(node.sub, topo, program, binders, reg_bases)
        return lambda state, env: not f(state, env)
    if isinstance(node, And):
        fs = [_compile_node(x, topo, program, binders, reg_bases) for x in node.subs]
        return lambda state, env: all(f(state, env) for f in fs)
    if isinstance(node, Or):
        fs = [_compile_node(x, topo, program, binders, reg_bases) for x in node.subs]
        return lambda state, env: any(f(state, env) for f in fs)
    if isinstance(node, Compare):
        for side in (node.left, node.right):
            if isinstance(side, RegRef):
                reg_bases.add(register_base(side.name))
            if isinstance(side, AbsDiff):
                for inner in (side.left, side.right):
                    if isinstance(inner, RegRef):
                        reg_bases.add(register_base(inner.name))
        op = _OPS[node.op]
        lf = _compile_expr(node.left, topo, program, binders)
        rf = _compile_expr(node.right, topo, program, binders)
        return lambda state, env: op(lf(state, env), rf(state, env))
    if isinstance(node, CsEquals):
        reg_bases.add("*")  # reads the whole controller state
        v = node.value
        return lambda state, env: state.ctrl.cs == v
    if isinstance(node, PacketsAtom):
        kind, dev = node.queue
        if kind == "rcvq":
            idx = topo.host_index(dev)
            getq = lambda state: state.hosts[idx].rcvq
        elif kind == "pq":
            idx = topo.switch_index(dev)
            getq = lambda state: state.switches[idx].pq
        else:
            raise ConfigError(f"property: packets atom over {kind!r} is not allowed")
        tests = []
        for fld, op, value in node.tests:
            if fld not in ("src", "dst", "in_port"):
                raise ConfigError(f"property: unknown packet field {fld!r}")
            tests.append((fld, _OPS[op], _resolve_value(value, topo)))

        def pred(pkt):
            return all(op(getattr(pkt, fld), v) for fld, op, v in tests)

        if node.quant == "all":
            return lambda state, env: all(map(pred, getq(state)))
        if node.quant == "any":
            return lambda state, env: any(map(pred, getq(state)))
        raise ConfigError(f"property: bad quantifier {node.quant!r}")
    raise ConfigError(f"property: bad node {node!r}")


_BINDABLE = ("sw", "host", "pkt", "rule", "port", "barrier")


@dataclass
class CompiledObligation:
    action_kind: str
    binders: tuple
    body: Callable

    def holds(self, action: Action, post_state: GlobalState) -> bool:
        """Vacuously true unless the action unifies with the pattern."""
        if action.kind != self.action_kind:
            return True
        env = {var: getattr(action, param) for param, var in self.binders}
        return self.body(post_state, env)


@dataclass
class CompiledProperty:
    source: Property
    invariant: Callable
    obligations: list
    ctrl_reg_bases: frozenset

    def eval_invariant(self, state: GlobalState) -> bool:
        return self.invariant(state, None)


def compile_property(prop: Property, topo: Topology, program: ControllerProgram) -> CompiledProperty:
    reg_bases: set = set()
    inv = _compile_node(prop.invariant, topo, program, frozenset(), reg_bases)
    obligations = []
    for ob in prop.obligations:
        for param, _ in ob.binders:
            if param not in _BINDABLE:
                raise ConfigError(f"property: cannot bind action parameter {param!r}")
        names = frozenset(var for _, var in ob.binders)
        body = _compile_node(ob.body, topo, program, names, reg_bases)
        obligations.append(CompiledObligation(ob.action_kind, ob.binders, body))
    return CompiledProperty(
        source=prop,
        invariant=inv,
        obligations=obligations,
        ctrl_reg_bases=frozenset(reg_bases),
    )


def eval_state_pred(node, state: GlobalState, topo: Topology, program: ControllerProgram) -> bool:
    """One-off evaluation of a predicate AST against a state."""
    return _compile_node(node, topo, program, frozenset(), set())(state, None)


def eval_obligation(ob: Obligation, action: Action, post_state: GlobalState,
                    topo: Topology, program: ControllerProgram) -> bool:
    """One-off evaluation of an obligation against a fired action."""
    names = frozenset(var for _, var in ob.binders)
    body = _compile_node(ob.body, topo, program, names, set())
    return CompiledObligation(ob.action_kind, ob.binders, body).holds(action, post_state)


# ------------------------------------------------------------- built-ins

BUILTIN_PROPERTY = "lb-fairness-firewall"


def builtin_phi(server_names, dodgy_names, bound: int = 2) -> Property:
    """Load stays within `bound` across every server pair and no non-whitelisted
    packet ever shows up in a server's receive queue.

    The load clause compares session-count registers directly (it does not
    hide behind the packet quantifier), and ranges over unordered pairs; the
    ordered formulation is equivalent by symmetry of the absolute difference.
    """
    servers = tuple(server_names)
    if not servers:
        raise ConfigError("property: builtin needs at least one server")
    clauses = []
    for name in servers:
        for d in dodgy_names:
            clauses.append(
                PacketsAtom(quant="all", queue=("rcvq", name), tests=(("src", "!=", d),))
            )
    for i in range(len(servers)):
        for j in range(i + 1, len(servers)):
            clauses.append(
                Compare(
                    "<",
                    AbsDiff(RegRef(f"sLoad[{servers[i]}]"), RegRef(f"sLoad[{servers[j]}]")),
                    Const(bound),
                )
            )
    if not clauses:
        clauses.append(BoolConst(True))
    return Property(invariant=And(tuple(clauses)))


def builtin_property(name: str, topo: Topology, bound: int = 2) -> Property:
    if name != BUILTIN_PROPERTY:
        raise ConfigError(f"property: unknown built-in {name!r}")
    return builtin_phi(
        tuple(topo.host_names[i] for i in topo.servers),
        tuple(topo.host_names[i] for i in topo.dodgy_hosts),
        bound,
    )


# ------------------------------------------------------------- JSON loading

def _expr_from_json(doc):
    if isinstance(doc, int):
        return Const(doc)
    if not isinstance(doc, dict):
        raise ConfigError(f"property: bad expression {doc!r}")
    if "const" in doc:
        return Const(doc["const"])
    if "reg" in doc:
        return RegRef(doc["reg"])
    if "absdiff" in doc:
        a, b = doc["absdiff"]
        return AbsDiff(_expr_from_json(a), _expr_from_json(b))
    if "field" in doc:
        var, fld = doc["field"]
        return FieldRef(var, fld)
    raise ConfigError(f"property: bad expression {doc!r}")


def _node_from_json(doc):
    if doc is True or doc is False:
        return BoolConst(doc)
    if not isinstance(doc, dict):
        raise ConfigError(f"property: bad node {doc!r}")
    if "op" in doc:
        op = doc["op"]
        if op == "not":
            return Not(_node_from_json(doc["arg"]))
        if op in ("and", "or"):
            subs = tuple(_node_from_json(x) for x in doc["args"])
            return And(subs) if op == "and" else Or(subs)
        raise ConfigError(f"property: bad operator {op!r}")
    atom = doc.get("atom")
    if atom == "ctrl":
        return Compare(doc["cmp"], _expr_from_json(doc["left"]), _expr_from_json(doc["right"]))
    if atom == "packets":
        queue = doc["queue"]
        if "rcvq" in queue:
            q = ("rcvq", queue["rcvq"])
        elif "pq" in queue:
            q = ("pq", queue["pq"])
        else:
            raise ConfigError(f"property: bad queue {queue!r}")
        tests = tuple((f, op, v) for f, op, v in doc.get("where", []))
        return PacketsAtom(quant=doc.get("quant", "all"), queue=q, tests=tests)
    if atom == "cs-equals":
        def freeze(x):
            return tuple(freeze(e) for e in x) if isinstance(x, list) else x
        return CsEquals(freeze(doc["value"]))
    raise ConfigError(f"property: bad node {doc!r}")


def parse_property(doc: dict) -> Property:
    """Parse the JSON property AST (see docs/report-schema.md for the shape)."""
    if not isinstance(doc, dict) or "invariant" not in doc:
        raise ConfigError("property: document needs an 'invariant' key")
    obligations = []
    for ob in doc.get("obligations", []):
        binders = tuple((param, var) for param, var in sorted(ob.get("bind", {}).items()))
        obligations.append(
            Obligation(
                action_kind=ob["action"],
                binders=binders,
                body=_node_from_json(ob["body"]),
            )
        )
    return Property(
        invariant=_node_from_json(doc["invariant"]),
        obligations=tuple(obligations),
    )
