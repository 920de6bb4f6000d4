"""Shared fixtures: topologies, programs, and a cached scenario runner."""

from __future__ import annotations

import functools

import pytest

import sdncheck as sc
from sdncheck.semantics import ModelContext


def make_scenario(clients, servers, dodgy=1, controller="lc-rebalance", workload=None):
    doc = sc.generate_topology(clients, servers, dodgy)
    topo = sc.build_topology(doc)
    wl = sc.build_workload(topo, workload)
    prog = sc.builtin_program(controller, topo)
    prop = sc.builtin_property(sc.BUILTIN_PROPERTY, topo)
    return topo, wl, prog, prop


@functools.lru_cache(maxsize=None)
def run_scenario(
    clients,
    servers,
    dodgy=1,
    controller="lc-rebalance",
    por=False,
    search="bfs",
    assume=False,
    record_graph=False,
    check_commutation=False,
    max_states=None,
):
    """Cached exploration so many tests can share the expensive runs."""
    topo, wl, prog, prop = make_scenario(clients, servers, dodgy, controller)
    opts = sc.ExplorationOptions(
        por=por,
        search=search,
        assume_phi_invariant=assume,
        record_graph=record_graph,
        check_commutation=check_commutation,
        max_states=max_states,
    )
    report = sc.explore(topo, wl, prog, prop, opts)
    return topo, wl, prog, prop, report


@pytest.fixture(scope="session")
def fig2():
    """The four-client/two-server star from the case study."""
    doc = sc.generate_topology(4, 2, 1)
    topo = sc.build_topology(doc)
    return doc, topo


@pytest.fixture(scope="session")
def tiny():
    """One client, one server, one switch."""
    topo, wl, prog, prop = make_scenario(1, 1, 0, controller="rr-naive")
    return topo, wl, prog, prop


def reachable_states(topo, wl, prog, limit=None):
    """Plain breadth-first enumeration of reachable states (test-side oracle)."""
    from collections import deque

    from sdncheck.semantics import apply, enabled_actions

    ctx = ModelContext(topo, prog)
    s0 = sc.initial_state(topo, wl, prog)
    seen = {s0.digest: s0}
    q = deque((s0,))
    while q:
        s = q.popleft()
        for a in enabled_actions(s, ctx):
            t = apply(s, a, ctx)
            if t.digest not in seen:
                seen[t.digest] = t
                q.append(t)
                if limit is not None and len(seen) >= limit:
                    return list(seen.values())
    return list(seen.values())
