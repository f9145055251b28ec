"""Command line interface: `netfence analyze` and `netfence synthesize`.

analyze runs the full ruleset pipeline (parse, unfold, state
specialization, closure, translation, partition, service matrix, optional
spoofing certification) over an iptables-save dump.  synthesize goes the
other way: verify or construct policies from an invariant specification
and serialize them as iptables rules.

Exit codes: 0 success, 1 input/processing error, 2 certification failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import analysis, parser, semantics, simplefw, spoofing
from .errors import NetfenceError
from .invariants import all_hold
from .policy import PolicyGraph
from .serializer import binding_from_json, emit_iptables
from .stateful import StatefulPolicy, generate_stateful
from .synthesis import generate_valid_topology, generate_valid_topology3, policy_diff
from .templates import load_invariants
from .wordinterval import WordInterval, family_width


def _default_ipassmt(family):
    """Loopback is always known: lo carries 127.0.0.0/8 (::1 for v6)."""
    if family == "v6":
        return {"lo": WordInterval.single(1, 128)}
    lo = WordInterval.range(0x7F000000, 0x7FFFFFFF, 32)
    return {"lo": lo}


def analyze_pipeline(
    save_text,
    family="v4",
    chain="FORWARD",
    ipassmt=None,
    routing=None,
    service="ssh",
    tactic="in_doubt_allow",
    assumed_state="NEW",
):
    """parse -> unfold -> ctstate -> interface constraining -> closure ->
    translate -> partition -> matrix.  Returns a result namespace dict."""
    width = family_width(family)
    table = parser.parse_save(save_text, family)
    unfolded = semantics.unfold(table, chain)
    specialized = semantics.ctstate_specialize(unfolded, assumed_state)
    assignment = _default_ipassmt(family)
    if ipassmt:
        assignment.update(ipassmt)
    constrained = simplefw.iface_rewrite(
        semantics.normalize_rules(specialized), assignment, mode="constrain", field="in"
    )
    if routing:
        out_assignment = simplefw.routing_to_ipassmt(routing, width)
        constrained = simplefw.iface_rewrite(
            constrained, out_assignment, mode="constrain", field="out"
        )
    prepared = simplefw.prepare_for_simple(constrained, width)
    closed = semantics.closure(prepared, tactic)
    simple = simplefw.translate_to_simple(closed, width)
    no_ifaces = [
        r
        for r in (
            simplefw.SimpleRule(
                simplefw.SimpleMatch(
                    width,
                    "+",
                    "+",
                    r.match.src,
                    r.match.dst,
                    r.match.proto,
                    r.match.sports,
                    r.match.dports,
                ),
                r.accept,
            )
            for r in simple
        )
    ]
    svc = analysis.ServiceTemplate.preset(service)
    matrix = analysis.access_matrix(no_ifaces, svc, width)
    return {
        "table": table,
        "unfolded": unfolded,
        "specialized": specialized,
        "simple": simple,
        "matrix": matrix,
        "partition": analysis.ip_partition(no_ifaces, width),
    }


def _cmd_analyze(args):
    family = args.family
    save_text = Path(args.input).read_text()
    ipassmt = None
    if args.ipassmt:
        ipassmt = parser.parse_ipassmt(Path(args.ipassmt).read_text(), family)
    routing = None
    if args.routing:
        routing = parser.parse_routing(Path(args.routing).read_text(), family)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    closures = {"upper": ["in_doubt_allow"], "lower": ["in_doubt_deny"],
                "both": ["in_doubt_allow", "in_doubt_deny"]}[args.closure]
    exit_code = 0
    for tactic in closures:
        label = "upper" if tactic == "in_doubt_allow" else "lower"
        result = analyze_pipeline(
            save_text,
            family=family,
            chain=args.chain,
            ipassmt=ipassmt,
            routing=routing,
            service=args.service,
            tactic=tactic,
        )
        print(f"[{label}] {len(result['unfolded'])} unfolded rules, "
              f"{len(result['simple'])} simple rules, "
              f"{len(result['partition'])} partition blocks, "
              f"{len(result['matrix'].classes)} matrix classes")
        if args.emit == "dot":
            (out_dir / f"matrix-{label}.dot").write_text(result["matrix"].to_dot())
        elif args.emit == "json":
            (out_dir / f"matrix-{label}.json").write_text(result["matrix"].to_json())
        else:
            (out_dir / f"rules-{label}.txt").write_text(
                simplefw.simple_rules_table(result["simple"])
            )

    if args.spoofing:
        if not ipassmt:
            print("--spoofing requires --ipassmt", file=sys.stderr)
            return 1
        table = parser.parse_save(save_text, family)
        unfolded = semantics.unfold(table, args.chain)
        field = "out" if args.chain == "OUTPUT" else "in"
        verdicts = spoofing.sp_certify_all(unfolded, ipassmt, field)
        for v in verdicts.values():
            print(v.report_line(family))
        if not all(v.certified for v in verdicts.values()):
            exit_code = 2
    return exit_code


def _cmd_synthesize(args):
    invariants = load_invariants(Path(args.invariants).read_text())
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    manual = None
    if args.policy:
        manual = PolicyGraph.from_json(Path(args.policy).read_text())

    if args.verify:
        if manual is None:
            print("--verify needs --policy", file=sys.stderr)
            return 1
        report = all_hold(invariants, manual)
        diff = policy_diff(manual, invariants)
        (out_dir / "verify.json").write_text(report.to_json())
        (out_dir / "diff.dot").write_text(diff.to_dot(manual))
        print(f"verify: {'OK' if report.overall else 'VIOLATED'}; "
              f"{len(diff.violating)} violating, {len(diff.absent)} absent flows")
        if not report.overall:
            return 2

    graph = manual
    if args.construct or graph is None:
        if manual is not None:
            nodes = manual.nodes
        else:
            nodes = set()
            for inv in invariants:
                nodes |= set(inv.attr_map.partial)
            if not nodes:
                print("no hosts found in the invariant specification", file=sys.stderr)
                return 1
        start = PolicyGraph.of(nodes).allow_all()
        try:
            constructed = generate_valid_topology(invariants, start)
        except NetfenceError:
            constructed = generate_valid_topology3(invariants, start)
        if not constructed.edges:
            print("warning: invariants are contradictory, policy is deny-all",
                  file=sys.stderr)
        (out_dir / "policy.json").write_text(constructed.to_json())
        (out_dir / "policy.dot").write_text(constructed.to_dot())
        print(f"constructed policy with {len(constructed.edges)} flows")
        if graph is None:
            graph = constructed  # later steps run on the supplied policy if any

    stateful_policy = None
    if args.stateful:
        stateful_policy = generate_stateful(graph, invariants)
        (out_dir / "stateful.json").write_text(stateful_policy.to_json())
        (out_dir / "stateful.dot").write_text(stateful_policy.to_dot())
        print(f"stateful policy: {len(stateful_policy.stateful)} stateful flows")

    if args.emit_iptables:
        import json as _json

        binding = binding_from_json(
            _json.loads(Path(args.emit_iptables).read_text()), args.family
        )
        if stateful_policy is None:
            stateful_policy = StatefulPolicy(graph.nodes, graph.edges, frozenset())
        text = emit_iptables(stateful_policy, binding, family=args.family)
        (out_dir / "ruleset.iptables").write_text(text)
        print(f"wrote {out_dir / 'ruleset.iptables'}")
    return 0


def build_arg_parser():
    ap = argparse.ArgumentParser(prog="netfence")
    sub = ap.add_subparsers(dest="command", required=True)

    an = sub.add_parser("analyze", help="analyze an iptables-save dump")
    an.add_argument("--input", required=True, help="iptables-save file")
    an.add_argument("--family", choices=("v4", "v6"), default="v4")
    an.add_argument("--table", default="filter", choices=("filter",))
    an.add_argument("--chain", default="FORWARD", choices=("FORWARD", "INPUT", "OUTPUT"))
    an.add_argument("--ipassmt", help="interface address assignment file")
    an.add_argument("--routing", help="routing table file (output iface rewriting)")
    an.add_argument("--service", default="ssh", help="ssh | http | <proto>:<port>")
    an.add_argument("--spoofing", action="store_true", help="certify spoofing protection")
    an.add_argument("--emit", choices=("dot", "json", "table"), default="dot")
    an.add_argument("--closure", choices=("upper", "lower", "both"), default="upper")
    an.add_argument("--out-dir", default="out")
    an.set_defaults(func=_cmd_analyze)

    sy = sub.add_parser("synthesize", help="construct policies from invariants")
    sy.add_argument("--invariants", required=True, help="invariant spec (JSON)")
    sy.add_argument("--policy", help="manual policy graph (JSON)")
    sy.add_argument("--verify", action="store_true", help="check the manual policy")
    sy.add_argument("--construct", action="store_true", help="compute the maximum policy")
    sy.add_argument("--stateful", action="store_true", help="compute the stateful policy")
    sy.add_argument("--emit-iptables", help="host binding file (JSON); writes a ruleset")
    sy.add_argument("--family", choices=("v4", "v6"), default="v4")
    sy.add_argument("--out-dir", default="out")
    sy.set_defaults(func=_cmd_synthesize)
    return ap


def main(argv=None):
    args = build_arg_parser().parse_args(argv)
    try:
        return args.func(args)
    except NetfenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
