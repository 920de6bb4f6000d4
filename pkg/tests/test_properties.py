"""Invariant predicates, action obligations, the built-in property, JSON ASTs."""

import itertools

import pytest
from hypothesis import given, strategies as st

from sdncheck.model import (
    DROP,
    EMPTY_CQ,
    UNSET,
    ConfigError,
    ControllerEnv,
    GlobalState,
    HostState,
    Packet,
    Rule,
    SwitchState,
)
from sdncheck.properties import (
    AbsDiff,
    And,
    BoolConst,
    Compare,
    Const,
    CsEquals,
    FieldRef,
    Not,
    Obligation,
    Or,
    PacketsAtom,
    Property,
    RegRef,
    builtin_phi,
    compile_property,
    eval_obligation,
    eval_state_pred,
    parse_property,
)
from sdncheck.semantics import Action

from conftest import make_scenario


def state_with(topo, prog, sload=None, rcvq=None):
    """Assemble a state with the given session counts and receive queues."""
    cursor, load0, depl = prog.initial_cs
    cs = (cursor, tuple(sload) if sload else load0, depl)
    hosts = []
    for i, name in enumerate(topo.host_names):
        q = tuple(sorted((rcvq or {}).get(name, ())))
        hosts.append(HostState(q, ()))
    sw = SwitchState((), (), EMPTY_CQ, (), ())
    return GlobalState(tuple(hosts), (sw,), ControllerEnv(cs, (), (), ()))


@pytest.fixture(scope="module")
def lb():
    topo, wl, prog, prop = make_scenario(4, 2, 1, "lc-rebalance")
    return topo, prog, compile_property(prop, topo, prog)


def test_phi_holds_initially(lb):
    topo, prog, cprop = lb
    s0 = state_with(topo, prog)
    assert cprop.eval_invariant(s0)


def test_phi_rejects_dodgy_packet_in_server_rcvq(lb):
    topo, prog, cprop = lb
    dodgy = topo.host_index("d1")
    bad = state_with(topo, prog, rcvq={"s1": (Packet(dodgy, topo.cluster_addr, 0),)})
    assert not cprop.eval_invariant(bad)
    ok = state_with(
        topo, prog, rcvq={"s1": (Packet(topo.host_index("c1"), topo.cluster_addr, 0),)}
    )
    assert cprop.eval_invariant(ok)


def test_phi_rejects_unbalanced_load(lb):
    # |3 - 1| = 2 >= 2, independent of any queue contents.
    topo, prog, cprop = lb
    assert not cprop.eval_invariant(state_with(topo, prog, sload=(3, 1)))
    assert cprop.eval_invariant(state_with(topo, prog, sload=(2, 1)))


def test_phi_with_tighter_bound(lb):
    topo, prog, _ = lb
    phi1 = builtin_phi(("s1", "s2"), ("d1",), bound=1)
    cprop = compile_property(phi1, topo, prog)
    assert not cprop.eval_invariant(state_with(topo, prog, sload=(1, 0)))
    assert cprop.eval_invariant(state_with(topo, prog, sload=(1, 1)))


def test_phi_single_server_keeps_only_firewall_clause():
    topo, wl, prog, prop = make_scenario(2, 1, 1, "rr-naive")
    cprop = compile_property(prop, topo, prog)
    s = state_with(topo, prog, sload=(7,))
    assert cprop.eval_invariant(s)  # no pair to compare
    dodgy = topo.host_index("d1")
    bad = state_with(topo, prog, sload=(7,), rcvq={"s1": (Packet(dodgy, 0, 0),)})
    assert not cprop.eval_invariant(bad)


def test_builtin_phi_requires_servers():
    with pytest.raises(ConfigError, match="server"):
        builtin_phi((), ("d1",))


@given(st.tuples(st.integers(0, 4), st.integers(0, 4)))
def test_unordered_pairs_equal_ordered_pairs(load):
    """Symmetry: checking |a-b| on one unordered pair equals both orders."""
    topo, wl, prog, prop = make_scenario(3, 2, 1, "lc-naive")
    unordered = builtin_phi(("s1", "s2"), ("d1",))
    ordered = Property(
        invariant=And(
            tuple(
                Compare(
                    "<",
                    AbsDiff(RegRef(f"sLoad[{a}]"), RegRef(f"sLoad[{b}]")),
                    Const(2),
                )
                for a, b in itertools.permutations(("s1", "s2"), 2)
            )
        )
    )
    s = state_with(topo, prog, sload=load)
    r1 = compile_property(unordered, topo, prog).eval_invariant(s)
    r2 = compile_property(ordered, topo, prog).eval_invariant(s)
    assert r1 == r2


def test_eval_is_pure(lb):
    topo, prog, cprop = lb
    s = state_with(topo, prog, sload=(2, 1))
    assert cprop.eval_invariant(s) == cprop.eval_invariant(s)


def test_boolean_connectives(lb):
    topo, prog, _ = lb
    s = state_with(topo, prog, sload=(3, 1))
    load_ok = Compare("<", AbsDiff(RegRef("sLoad[s1]"), RegRef("sLoad[s2]")), Const(2))
    assert not eval_state_pred(load_ok, s, topo, prog)
    assert eval_state_pred(Not(load_ok), s, topo, prog)
    assert eval_state_pred(Or((load_ok, BoolConst(True))), s, topo, prog)
    assert not eval_state_pred(And((load_ok, BoolConst(True))), s, topo, prog)


def test_cs_equals_degenerate_atom(lb):
    topo, prog, _ = lb
    s = state_with(topo, prog)
    assert eval_state_pred(CsEquals(prog.initial_cs), s, topo, prog)
    assert not eval_state_pred(CsEquals((9, (9,), ())), s, topo, prog)


def test_unknown_register_fails_at_compile_time(lb):
    topo, prog, _ = lb
    bad = Property(invariant=Compare("<", RegRef("no-such-reg"), Const(1)))
    with pytest.raises(ConfigError, match="unknown register"):
        compile_property(bad, topo, prog)


def test_unknown_device_fails_at_compile_time(lb):
    topo, prog, _ = lb
    bad = Property(
        invariant=PacketsAtom(quant="all", queue=("rcvq", "ghost"), tests=())
    )
    with pytest.raises(ConfigError, match="unknown host"):
        compile_property(bad, topo, prog)


def test_packets_atom_never_ranges_over_hidden_queues(lb):
    topo, prog, _ = lb
    bad = Property(
        invariant=PacketsAtom(quant="all", queue=("frq", "sw1"), tests=())
    )
    with pytest.raises(ConfigError, match="not allowed"):
        compile_property(bad, topo, prog)


# ------------------------------------------------------------- obligations

def drop_obligation():
    return Obligation(
        action_kind="match",
        binders=(("rule", "r"),),
        body=Compare("==", FieldRef("r", "fwd_port"), Const(DROP)),
    )


def test_obligation_vacuous_for_other_kinds(lb):
    topo, prog, _ = lb
    s = state_with(topo, prog)
    send = Action("send", host=0, pkt=Packet(0, 6, 0))
    assert eval_obligation(drop_obligation(), send, s, topo, prog)


def test_obligation_on_matching_action(lb):
    topo, prog, _ = lb
    s = state_with(topo, prog)
    dropper = Rule(3, UNSET, UNSET, DROP, 0, 0)
    forwarder = Rule(0, UNSET, 1, 5, 0, 0)
    pkt = Packet(3, topo.cluster_addr, 4)
    assert eval_obligation(
        drop_obligation(), Action("match", sw=0, pkt=pkt, rule=dropper), s, topo, prog
    )
    assert not eval_obligation(
        drop_obligation(), Action("match", sw=0, pkt=pkt, rule=forwarder), s, topo, prog
    )


def test_always_true_obligation_satisfied_by_all(lb):
    topo, prog, _ = lb
    s = state_with(topo, prog)
    ob = Obligation(action_kind="match", binders=(), body=BoolConst(True))
    for kind in ("match", "send", "fsync"):
        action = Action(kind, sw=0, pkt=Packet(0, 6, 1), rule=Rule(0, -1, -1, 1, 0, 0))
        assert eval_obligation(ob, action, s, topo, prog)


# ------------------------------------------------------------- JSON AST

PHI_JSON = {
    "invariant": {
        "op": "and",
        "args": [
            {
                "atom": "packets",
                "quant": "all",
                "queue": {"rcvq": "s1"},
                "where": [["src", "!=", "d1"]],
            },
            {
                "atom": "ctrl",
                "cmp": "<",
                "left": {"absdiff": [{"reg": "sLoad[s1]"}, {"reg": "sLoad[s2]"}]},
                "right": {"const": 2},
            },
        ],
    },
    "obligations": [
        {
            "action": "match",
            "bind": {"rule": "r"},
            "body": {
                "atom": "ctrl",
                "cmp": "==",
                "left": {"field": ["r", "fwd_port"]},
                "right": {"const": DROP},
            },
        }
    ],
}


def test_parse_property_round_trips_through_eval(lb):
    topo, prog, _ = lb
    prop = parse_property(PHI_JSON)
    cprop = compile_property(prop, topo, prog)
    assert cprop.eval_invariant(state_with(topo, prog, sload=(1, 1)))
    assert not cprop.eval_invariant(state_with(topo, prog, sload=(3, 1)))
    assert len(cprop.obligations) == 1
    assert cprop.ctrl_reg_bases == frozenset({"sLoad"})


def test_parse_property_rejects_malformed_documents():
    with pytest.raises(ConfigError):
        parse_property({})
    with pytest.raises(ConfigError):
        parse_property({"invariant": {"op": "xor", "args": []}})
    with pytest.raises(ConfigError):
        parse_property({"invariant": {"atom": "packets", "queue": {"cq": "sw1"}}})
