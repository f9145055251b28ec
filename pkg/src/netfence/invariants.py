"""Generic security-invariant machinery.

A configured invariant is a predicate over policy graphs together with a
strategy tag.  Phi-structured invariants (a per-edge predicate over the
two endpoint attributes) admit a unique offending-flow set computable in
linear time; everything else falls back to bounded brute force.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import chain, combinations
from typing import Callable, Optional

from .errors import TooLargeForBruteForce
from .policy import AttrMap, PolicyGraph, Strategy

DEFAULT_BRUTE_FORCE_BOUND = 16


@dataclass(frozen=True)
class ConfiguredInvariant:
    """A security invariant with its scenario knowledge already applied.

    eval_fn decides whether a graph satisfies the invariant.  If `phi` is
    set, the invariant is Phi-structured: phi(attr_s, s, attr_r, r) is
    evaluated per edge (skipping reflexive edges when `norefl`), and
    eval_fn must agree with the conjunction over all edges.
    """

    template_id: str
    strategy: Strategy
    eval_fn: Callable[[PolicyGraph], bool]
    attr_map: AttrMap
    phi: Optional[Callable] = None
    norefl: bool = False
    brute_force_bound: int = DEFAULT_BRUTE_FORCE_BOUND

    def holds(self, graph: PolicyGraph) -> bool:
        return self.eval_fn(graph)

    def __repr__(self):
        return f"<{self.template_id} {self.strategy.value}>"


def _phi_failing_edges(inv, graph):
    p = inv.attr_map
    fails = set()
    for s, r in graph.edges:
        if inv.norefl and s == r:
            continue
        if not inv.phi(p(s), s, p(r), r):
            fails.add((s, r))
    return fails


def _powerset(items):
    return chain.from_iterable(combinations(items, k) for k in range(len(items) + 1))


def set_offending_flows(inv: ConfiguredInvariant, graph: PolicyGraph) -> frozenset:
    """All minimal edge sets whose removal repairs the invariant.

    Returns a frozenset of frozensets.  Phi-structured invariants have a
    unique member (all edges failing phi); the general definition
    enumerates subsets and is refused beyond the brute-force bound.
    """
    if inv.holds(graph):
        return frozenset()
    if inv.phi is not None:
        return frozenset({frozenset(_phi_failing_edges(inv, graph))})
    edges = graph.sorted_edges()
    if len(edges) > inv.brute_force_bound:
        raise TooLargeForBruteForce(
            f"{inv.template_id}: {len(edges)} edges exceed bound {inv.brute_force_bound};"
            " use minimalize_offending_overapprox"
        )
    out = []
    for subset in _powerset(edges):
        f = frozenset(subset)
        rest = graph.delete_edges(f)
        if not inv.holds(rest):
            continue
        if all(not inv.holds(PolicyGraph(graph.nodes, rest.edges | {e})) for e in f):
            out.append(f)
    return frozenset(out)


def offenders(flows, strategy: Strategy) -> frozenset:
    """The hosts blamed for a violation: senders under ACS, receivers under IFS."""
    if strategy is Strategy.ACS:
        return frozenset(s for s, _ in flows)
    return frozenset(r for _, r in flows)


def get_offending_flows(invariants, graph) -> frozenset:
    """Union of all invariants' offending-flow sets (a set of sets)."""
    out = frozenset()
    for inv in invariants:
        out |= set_offending_flows(inv, graph)
    return out


def get_ifs(invariants):
    return [m for m in invariants if m.strategy is Strategy.IFS]


def get_acs(invariants):
    return [m for m in invariants if m.strategy is Strategy.ACS]


@dataclass
class InvariantVerdict:
    template_id: str
    strategy: Strategy
    holds: bool
    offending: Optional[frozenset] = None  # None when not computable


@dataclass
class ComplianceReport:
    verdicts: list = field(default_factory=list)

    @property
    def overall(self) -> bool:
        return all(v.holds for v in self.verdicts)

    def violating_edges(self) -> frozenset:
        out = frozenset()
        for v in self.verdicts:
            if v.offending:
                for f in v.offending:
                    out |= f
        return out

    def to_json(self):
        return json.dumps(
            {
                "overall": self.overall,
                "invariants": [
                    {
                        "template": v.template_id,
                        "strategy": v.strategy.value,
                        "holds": v.holds,
                        "offending": None
                        if v.offending is None
                        else [sorted(list(e) for e in f) for f in sorted(v.offending, key=sorted)],
                    }
                    for v in self.verdicts
                ],
            },
            indent=2,
        )


def all_hold(invariants, graph: PolicyGraph) -> ComplianceReport:
    """Evaluate every invariant; the report's overall verdict is the conjunction."""
    report = ComplianceReport()
    for inv in invariants:
        ok = inv.holds(graph)
        offending = None
        if not ok:
            try:
                offending = set_offending_flows(inv, graph)
            except TooLargeForBruteForce:
                offending = None
        report.verdicts.append(InvariantVerdict(inv.template_id, inv.strategy, ok, offending))
    return report


def violation_dot(graph: PolicyGraph, report: ComplianceReport) -> str:
    bad = report.violating_edges()
    return graph.to_dot(
        edge_attrs={e: "style=dashed, color=red" for e in bad}
    )
