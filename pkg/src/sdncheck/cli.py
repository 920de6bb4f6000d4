"""Command-line front end: check a property, generate topologies, run scaling grids.

Exit status: 0 property holds, 1 violated, 2 bound exceeded; configuration
problems use distinct codes >= 10 (see EXIT_* below) with a message naming
the offending key. Reports are JSON with sorted keys so that parsing and
re-serializing an emitted report is byte-stable.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .controller import BUILTIN_CONTROLLERS, builtin_program
from .explorer import ExplorationOptions, ExplorationReport, explore
from .model import (
    DROP,
    KEEP,
    UNSET,
    ConfigError,
    Topology,
    build_topology,
    build_workload,
)
from .properties import BUILTIN_PROPERTY, builtin_property, parse_property
from .semantics import Action

EXIT_HOLDS = 0
EXIT_VIOLATED = 1
EXIT_BOUND = 2
EXIT_IO = 10
EXIT_TOPOLOGY = 11
EXIT_CONTROLLER = 12
EXIT_PROPERTY = 13
EXIT_USAGE = 14

_VERDICT_EXIT = {"holds": EXIT_HOLDS, "violated": EXIT_VIOLATED, "bound-exceeded": EXIT_BOUND}


@dataclass
class RunConfig:
    topology: str
    controller: str
    property_name: Optional[str] = BUILTIN_PROPERTY
    property_file: Optional[str] = None
    property_bound: int = 2
    por: bool = False
    search: str = "bfs"
    max_states: Optional[int] = None
    workers: int = 1
    output: Optional[str] = None
    assume_phi_invariant: bool = False
    record_graph: bool = False
    deadline_s: Optional[float] = None
    quiet: bool = False


# ------------------------------------------------------------- rendering

def _endpoint(topo: Topology, idx: int) -> str:
    return topo.endpoint_name(idx)


def _pkt_doc(topo, pkt):
    return {"src": _endpoint(topo, pkt.src), "dst": _endpoint(topo, pkt.dst), "in_port": pkt.in_port}


def _rule_doc(topo, rule):
    return {
        "match_src": None if rule.match_src == UNSET else _endpoint(topo, rule.match_src),
        "match_dst": None if rule.match_dst == UNSET else _endpoint(topo, rule.match_dst),
        "match_in_port": None if rule.match_in_port == UNSET else rule.match_in_port,
        "fwd_port": "drop" if rule.fwd_port == DROP else rule.fwd_port,
        "priority": rule.priority,
        "timeout": bool(rule.timeout),
    }


_PATTERN_FIELDS = ("match_src", "match_dst", "match_in_port", "fwd_port", "priority", "timeout")


def _pattern_doc(topo, pattern):
    doc = {}
    for name, value in zip(_PATTERN_FIELDS, pattern):
        if value == KEEP:
            continue
        if name in ("match_src", "match_dst") and value != UNSET:
            doc[name] = _endpoint(topo, value)
        elif name == "fwd_port" and value == DROP:
            doc[name] = "drop"
        else:
            doc[name] = value
    return doc


def _cs_doc(cs):
    def unfreeze(x):
        return [unfreeze(e) for e in x] if isinstance(x, tuple) else x

    return unfreeze(cs)


def action_to_doc(action: Action, topo: Topology) -> dict:
    doc = {"kind": action.kind}
    if action.host >= 0:
        doc["host"] = topo.host_names[action.host]
    if action.sw >= 0:
        doc["switch"] = topo.switch_names[action.sw]
    if action.pkt is not None:
        doc["pkt"] = _pkt_doc(topo, action.pkt)
    if action.rule is not None:
        doc["rule"] = _rule_doc(topo, action.rule)
    if action.port >= 0:
        doc["port"] = action.port
    if action.barrier >= 0:
        doc["barrier"] = action.barrier
    if action.pattern is not None:
        doc["pattern"] = _pattern_doc(topo, action.pattern)
    if action.patch is not None:
        doc["patch"] = _pattern_doc(topo, action.patch)
    if action.cs is not None:
        doc["cs"] = _cs_doc(action.cs)
    return doc


def format_action(action: Action, topo: Topology) -> str:
    doc = action_to_doc(action, topo)
    kind = doc.pop("kind")
    doc.pop("cs", None)
    parts = []
    for key, value in doc.items():
        if isinstance(value, dict):
            inner = ",".join(f"{k}={v}" for k, v in value.items())
            parts.append(f"{key}({inner})")
        else:
            parts.append(f"{key}={value}")
    return f"{kind} " + " ".join(parts) if parts else kind


def trace_doc(trace, topo: Topology) -> dict:
    steps = [
        {"action": action_to_doc(a, topo), "state": digest}
        for a, digest in trace
    ]
    rendered = [
        f"{i + 1:3d}. {format_action(a, topo)}" for i, (a, _) in enumerate(trace)
    ]
    return {"steps": steps, "rendered": rendered}


def report_doc(report: ExplorationReport, topo: Topology, cfg: RunConfig) -> dict:
    doc = {
        "verdict": report.verdict,
        "states_explored": report.states_explored,
        "transitions": report.transitions_fired,
        "elapsed_ms": report.elapsed_ms,
        "por": report.por,
        "search": report.search,
        "stop_reason": report.stop_reason,
        "controller": cfg.controller,
        "property": cfg.property_file or cfg.property_name,
        "counterexample": None,
    }
    if report.counterexample is not None:
        doc["counterexample"] = trace_doc(report.counterexample, topo)
        doc["violation"] = report.violation
    return doc


def dump_report(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


# ------------------------------------------------------------- check

def run_check(cfg: RunConfig) -> tuple:
    """Run one exploration; returns (exit_status, report document or None)."""

    def fail(code, message):
        print(f"sdncheck: error: {message}", file=sys.stderr)
        return code, None

    try:
        raw = Path(cfg.topology).read_text()
    except OSError as e:
        return fail(EXIT_IO, f"topology {cfg.topology!r}: {e}")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        return fail(EXIT_IO, f"topology {cfg.topology!r}: invalid JSON: {e}")
    try:
        topo = build_topology(doc)
        workload = build_workload(topo, doc.get("workload"))
    except ConfigError as e:
        return fail(EXIT_TOPOLOGY, str(e))

    try:
        program = builtin_program(cfg.controller, topo)
    except ConfigError as e:
        return fail(EXIT_CONTROLLER, str(e))

    try:
        if cfg.property_file:
            pdoc = json.loads(Path(cfg.property_file).read_text())
            prop = parse_property(pdoc)
        else:
            prop = builtin_property(cfg.property_name, topo, cfg.property_bound)
    except OSError as e:
        return fail(EXIT_IO, f"property {cfg.property_file!r}: {e}")
    except json.JSONDecodeError as e:
        return fail(EXIT_IO, f"property {cfg.property_file!r}: invalid JSON: {e}")
    except ConfigError as e:
        return fail(EXIT_PROPERTY, str(e))

    opts = ExplorationOptions(
        por=cfg.por,
        search=cfg.search,
        max_states=cfg.max_states,
        workers=cfg.workers,
        record_graph=cfg.record_graph,
        deadline_s=cfg.deadline_s,
        assume_phi_invariant=cfg.assume_phi_invariant,
    )
    try:
        opts.validate()
    except ConfigError as e:
        return fail(EXIT_USAGE, str(e))
    try:
        report = explore(topo, workload, program, prop, opts)
    except ConfigError as e:
        return fail(EXIT_PROPERTY, str(e))

    doc = report_doc(report, topo, cfg)
    text = dump_report(doc)
    if cfg.output:
        Path(cfg.output).write_text(text)
    if not cfg.quiet:
        print(
            f"verdict={report.verdict} states={report.states_explored} "
            f"transitions={report.transitions_fired} elapsed_ms={report.elapsed_ms} "
            f"por={'on' if report.por else 'off'}"
        )
        if report.counterexample:
            print("counterexample:")
            for line in doc["counterexample"]["rendered"]:
                print("  " + line)
        if not cfg.output:
            sys.stdout.write(text)
    return _VERDICT_EXIT[report.verdict], doc


# ------------------------------------------------------------- gen-topo

def generate_topology(clients: int, servers: int, dodgy_count: int = 1) -> dict:
    """Single-switch star document: clients on switch ports 1..c (whitelisted
    first), servers on c+1..c+s, every host on its own port 0."""
    if clients < 1:
        raise ConfigError("gen-topo: clients must be >= 1")
    if servers < 1:
        raise ConfigError("gen-topo: servers must be >= 1")
    if not 0 <= dodgy_count <= clients:
        raise ConfigError("gen-topo: dodgy count must lie in [0, clients]")
    hosts = []
    names = []
    for i in range(clients - dodgy_count):
        names.append(f"c{i + 1}")
        hosts.append({"name": names[-1], "role": "client"})
    for i in range(dodgy_count):
        names.append(f"d{i + 1}")
        hosts.append({"name": names[-1], "role": "dodgy"})
    for i in range(servers):
        names.append(f"s{i + 1}")
        hosts.append({"name": names[-1], "role": "server"})
    links = [[name, 0, "sw1", port] for port, name in enumerate(names, start=1)]
    return {
        "switches": ["sw1"],
        "hosts": hosts,
        "links": links,
        "cluster_address": "cluster",
    }


# ------------------------------------------------------------- scaling

def _parse_range(text: str) -> list:
    text = text.strip()
    for sep in ("..", "-"):
        if sep in text:
            lo, hi = text.split(sep, 1)
            values = list(range(int(lo), int(hi) + 1))
            if not values:
                raise ConfigError(f"scaling: empty range {text!r}")
            return values
    return [int(text)]


def run_scaling_suite(
    client_range,
    server_range,
    timeout_s: float = 60.0,
    out_dir: Optional[str] = None,
    dodgy_count: int = 1,
) -> dict:
    """Grid of rebalancing-controller checks, reduction off and on per cell.

    Reduced cells run with the property-invariance assumption the reduction is
    designed to be deployed with for this controller. Cells that hit the
    timeout are recorded as non-terminating rather than failing the suite.
    """
    clients = list(client_range)
    servers = list(server_range)
    if not clients or not servers:
        raise ConfigError("scaling: client and server ranges must be non-empty")
    cells = []
    for c in clients:
        for s in servers:
            doc = generate_topology(c, s, min(dodgy_count, c))
            topo = build_topology(doc)
            workload = build_workload(topo, None)
            program = builtin_program("lc-rebalance", topo)
            prop = builtin_property(BUILTIN_PROPERTY, topo)
            for por in (False, True):
                opts = ExplorationOptions(
                    por=por,
                    deadline_s=timeout_s,
                    assume_phi_invariant=por,
                )
                report = explore(topo, workload, program, prop, opts)
                timed_out = report.stop_reason == "deadline"
                cells.append(
                    {
                        "clients": c,
                        "servers": s,
                        "por": por,
                        "verdict": None if timed_out else report.verdict,
                        "states": None if timed_out else report.states_explored,
                        "elapsed_ms": report.elapsed_ms,
                        "timed_out": timed_out,
                    }
                )
    table = {"controller": "lc-rebalance", "property": BUILTIN_PROPERTY, "cells": cells}
    if out_dir:
        path = Path(out_dir)
        path.mkdir(parents=True, exist_ok=True)
        (path / "scaling.json").write_text(json.dumps(table, sort_keys=True, indent=2) + "\n")
    return table


def _print_scaling(table: dict):
    print(f"{'clients':>8} {'servers':>8} {'por':>4} {'verdict':>14} {'states':>10} {'ms':>8}")
    for cell in table["cells"]:
        states = "-" if cell["states"] is None else str(cell["states"])
        verdict = "-" if cell["verdict"] is None else cell["verdict"]
        print(
            f"{cell['clients']:>8} {cell['servers']:>8} {'on' if cell['por'] else 'off':>4} "
            f"{verdict:>14} {states:>10} {cell['elapsed_ms']:>8}"
        )


# ------------------------------------------------------------- entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdncheck",
        description="Explicit-state model checker for SDNs with flow entries that time out.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", help="explore a topology under a controller and property")
    check.add_argument("--topology", required=True, help="topology+workload JSON document")
    check.add_argument("--controller", required=True, help="|".join(BUILTIN_CONTROLLERS))
    check.add_argument("--property", default=BUILTIN_PROPERTY, help="built-in property name")
    check.add_argument("--property-file", default=None, help="JSON property AST file")
    check.add_argument("--property-bound", type=int, default=2, help="bound for the built-in load clause")
    check.add_argument("--por", choices=("on", "off"), default="off")
    check.add_argument("--search", choices=("bfs", "dfs"), default="bfs")
    check.add_argument("--max-states", type=int, default=None)
    check.add_argument("--workers", type=int, default=1)
    check.add_argument("--timeout-s", type=float, default=None, help="wall-clock bound")
    check.add_argument("--assume-phi-invariant", action="store_true",
                       help="assert that flow-removed handling cannot flip the property")
    check.add_argument("--output", default=None, help="write the JSON report here")
    check.add_argument("--quiet", action="store_true")

    gen = sub.add_parser("gen-topo", help="emit a star topology document")
    gen.add_argument("--clients", type=int, required=True)
    gen.add_argument("--servers", type=int, required=True)
    gen.add_argument("--dodgy", type=int, default=1)
    gen.add_argument("--out", default=None)

    scaling = sub.add_parser("scaling", help="state-count grid for the rebalancing controller")
    scaling.add_argument("--clients", required=True, help="range, e.g. 3..5")
    scaling.add_argument("--servers", required=True, help="range, e.g. 2..5")
    scaling.add_argument("--timeout-s", type=float, default=60.0)
    scaling.add_argument("--out", default=None, help="directory for scaling.json")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "check":
            cfg = RunConfig(
                topology=args.topology,
                controller=args.controller,
                property_name=args.property,
                property_file=args.property_file,
                property_bound=args.property_bound,
                por=args.por == "on",
                search=args.search,
                max_states=args.max_states,
                workers=args.workers,
                deadline_s=args.timeout_s,
                assume_phi_invariant=args.assume_phi_invariant,
                output=args.output,
                quiet=args.quiet,
            )
            code, _ = run_check(cfg)
            return code
        if args.command == "gen-topo":
            doc = generate_topology(args.clients, args.servers, args.dodgy)
            text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
            if args.out:
                Path(args.out).write_text(text)
            else:
                sys.stdout.write(text)
            return 0
        if args.command == "scaling":
            table = run_scaling_suite(
                _parse_range(args.clients),
                _parse_range(args.servers),
                timeout_s=args.timeout_s,
                out_dir=args.out,
            )
            _print_scaling(table)
            return 0
    except ConfigError as e:
        print(f"sdncheck: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
