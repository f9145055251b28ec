"""IP address space partitioning and per-service access matrices.

The partition splits the address universe so that all addresses in one
block are treated identically by a simple-firewall ruleset, as source and
as destination.  The service matrix then merges behaviorally equal blocks
for one fixed service and records which classes may reach which.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .semantics import ALLOW, Packet
from .simplefw import SimpleRule, simple_fw_eval
from .wordinterval import WordInterval, format_interval, ip_format

SERVICE_PRESETS = {
    # protocol, destination port, representative client source port
    "ssh": (6, 22, 10000),
    "http": (6, 80, 10000),
}


@dataclass(frozen=True)
class ServiceTemplate:
    """The fixed packet shape a matrix is computed for; only src and dst
    addresses are left free."""

    protocol: int = 6
    dport: int = 22
    sport: int = 10000
    iiface: str = "in"
    oiface: str = "out"

    @classmethod
    def preset(cls, name):
        if ":" in name:
            proto_name, _, port = name.partition(":")
            from .ruleset import PROTO_NUMBERS

            return cls(PROTO_NUMBERS[proto_name], int(port))
        proto, dport, sport = SERVICE_PRESETS[name]
        return cls(proto, dport, sport)

    def packet(self, src, dst):
        return Packet(
            iiface=self.iiface,
            oiface=self.oiface,
            src=src,
            dst=dst,
            protocol=self.protocol,
            sport=self.sport,
            dport=self.dport,
        )


def ip_partition(rules, width=32) -> list:
    """Partition the address universe by every src/dst set in the ruleset.

    part S TS splits every block of TS into the part inside S and the part
    outside; folding over all rule address sets yields blocks that are,
    per block, uniformly treated by the ruleset.  Empty blocks are pruned.
    """
    blocks = [WordInterval.universe(width)]
    sets = []
    for r in rules:
        sets.append(r.match.src.interval())
        sets.append(r.match.dst.interval())
    for s in sets:
        next_blocks = []
        for block in blocks:
            inside = block.intersect(s)
            outside = block.difference(s)
            if not inside.is_empty():
                next_blocks.append(inside)
            if not outside.is_empty():
                next_blocks.append(outside)
        blocks = next_blocks
    return blocks


def _rule_applies_modulo(rule: SimpleRule, svc: ServiceTemplate, src=None, dst=None):
    """Does the rule match the fixed service fields plus the given src/dst
    representative (the other address side left free)?"""
    m = rule.match
    from .ruleset import match_iface

    if not match_iface(m.iiface, svc.iiface) or not match_iface(m.oiface, svc.oiface):
        return False
    if m.proto is not None and m.proto != svc.protocol:
        return False
    if not m.sports[0] <= svc.sport <= m.sports[1]:
        return False
    if not m.dports[0] <= svc.dport <= m.dports[1]:
        return False
    if src is not None and src not in m.src.interval():
        return False
    if dst is not None and dst not in m.dst.interval():
        return False
    return True


def _accepted_dsts(rules, svc, src_rep, width):
    """One ruleset pass: the destination addresses accepted for a fixed
    source representative (requires a final catch-all rule)."""
    accepted = WordInterval.empty(width)
    remaining = WordInterval.universe(width)
    for r in rules:
        if remaining.is_empty():
            break
        if not _rule_applies_modulo(r, svc, src=src_rep):
            continue
        covered = r.match.dst.interval().intersect(remaining)
        if r.accept:
            accepted = accepted.union(covered)
        remaining = remaining.difference(covered)
    if not remaining.is_empty():
        return None  # no default rule: caller must fall back
    return accepted


def _accepted_srcs(rules, svc, dst_rep, width):
    accepted = WordInterval.empty(width)
    remaining = WordInterval.universe(width)
    for r in rules:
        if remaining.is_empty():
            break
        if not _rule_applies_modulo(r, svc, dst=dst_rep):
            continue
        covered = r.match.src.interval().intersect(remaining)
        if r.accept:
            accepted = accepted.union(covered)
        remaining = remaining.difference(covered)
    if not remaining.is_empty():
        return None
    return accepted


@dataclass
class AccessMatrix:
    """Minimal behavior classes plus the directed reachability between them
    for one fixed service.  classes maps the representative (minimum)
    address of each class to its full interval."""

    classes: dict
    edges: set
    service: ServiceTemplate
    width: int = 32

    def class_of(self, address):
        for rep, wi in self.classes.items():
            if address in wi:
                return rep
        raise KeyError(address)

    def allows(self, src, dst):
        return (self.class_of(src), self.class_of(dst)) in self.edges

    def family(self):
        return "v6" if self.width == 128 else "v4"

    def to_dot(self):
        fam = self.family()
        lines = ["digraph access {"]
        for rep in sorted(self.classes):
            label = format_interval(self.classes[rep], fam)
            lines.append(f'  "{ip_format(rep, fam)}" [label="{label}"];')
        for a, b in sorted(self.edges):
            lines.append(f'  "{ip_format(a, fam)}" -> "{ip_format(b, fam)}";')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_json(self):
        fam = self.family()
        return json.dumps(
            {
                "service": {
                    "protocol": self.service.protocol,
                    "dport": self.service.dport,
                    "sport": self.service.sport,
                },
                "classes": {
                    ip_format(rep, fam): [
                        f"{ip_format(lo, fam)}-{ip_format(hi, fam)}"
                        for lo, hi in self.classes[rep].parts
                    ]
                    for rep in sorted(self.classes)
                },
                "edges": [
                    [ip_format(a, fam), ip_format(b, fam)] for a, b in sorted(self.edges)
                ],
            },
            indent=2,
        )


def access_matrix(rules, svc: ServiceTemplate, width=32) -> AccessMatrix:
    """Build the minimal service matrix.

    Starts from the address partition, computes each block's accepted
    source/destination sets with the linear per-representative pass (or a
    quadratic simple-fw fallback when the ruleset has no default rule),
    merges blocks with identical rows and columns, and derives the edges.
    """
    blocks = ip_partition(rules, width)
    reps = [b.min() for b in blocks]
    out_sets = {}
    in_sets = {}
    fast = True
    for b, rep in zip(blocks, reps):
        dsts = _accepted_dsts(rules, svc, rep, width)
        srcs = _accepted_srcs(rules, svc, rep, width)
        if dsts is None or srcs is None:
            fast = False
            break
        out_sets[rep] = dsts
        in_sets[rep] = srcs
    if not fast:
        out_sets, in_sets = _slow_rows(rules, svc, reps, width)

    def signature(rep):
        row = tuple(other in out_sets[rep] for other in reps)
        col = tuple(other in in_sets[rep] for other in reps)
        return row, col

    groups = {}
    for b, rep in zip(blocks, reps):
        groups.setdefault(signature(rep), []).append(b)
    classes = {}
    covered = WordInterval.empty(width)
    for members in groups.values():
        merged = members[0]
        for wi in members[1:]:
            merged = merged.union(wi)
        classes[merged.min()] = merged
        if not merged.isdisjoint(covered):
            raise AssertionError("matrix classes overlap")
        covered = covered.union(merged)
    if not covered.is_universe():
        raise AssertionError("matrix classes do not cover the address space")
    edges = set()
    for a, wa in classes.items():
        for b, wb in classes.items():
            if wb.min() in out_sets[_first_rep(reps, wa)]:
                edges.add((a, b))
    return AccessMatrix(classes, edges, svc, width)


def _first_rep(reps, wi):
    for rep in reps:
        if rep in wi:
            return rep
    raise AssertionError("class without representative")


def _slow_rows(rules, svc, reps, width):
    out_sets = {rep: WordInterval.empty(width) for rep in reps}
    in_sets = {rep: WordInterval.empty(width) for rep in reps}
    for a in reps:
        for b in reps:
            # an Undecided verdict counts as deny here
            if simple_fw_eval(rules, svc.packet(a, b)) == ALLOW:
                out_sets[a] = out_sets[a].union(WordInterval.single(b, width))
                in_sets[b] = in_sets[b].union(WordInterval.single(a, width))
    return out_sets, in_sets


def export_matrix(matrix: AccessMatrix, fmt="dot") -> str:
    if fmt == "dot":
        return matrix.to_dot()
    if fmt == "json":
        return matrix.to_json()
    raise ValueError(f"unknown matrix format {fmt!r}")
