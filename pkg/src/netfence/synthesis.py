"""Automated policy construction and policy/requirement diffing."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import PreconditionViolated
from .invariants import ConfiguredInvariant, set_offending_flows
from .policy import PolicyGraph


def generate_valid_topology(invariants, graph: PolicyGraph) -> PolicyGraph:
    """Remove every offending flow of every invariant, computed on the
    starting graph.  Sound for monotonic invariants; started from the
    allow-all graph with Phi-structured invariants the result is the
    unique maximum policy."""
    removed = set()
    for inv in invariants:
        for flow_set in set_offending_flows(inv, graph):
            removed |= flow_set
    return graph.delete_edges(removed)


def minimalize_offending_overapprox(
    inv: ConfiguredInvariant, fs, keeps, graph: PolicyGraph
):
    """Shrink the over-approximation `fs` to one member of the offending-flow
    set, without ever enumerating the whole set.

    `fs` must be a distinct list of edges of the graph whose removal
    (together with `keeps`) repairs the invariant; the initial call uses
    keeps=[].  Edges listed first are preferred for removal testing, so the
    caller controls which member is found by ordering `fs`.
    """
    if inv.holds(graph):
        raise PreconditionViolated(f"{inv.template_id} already holds; nothing to minimalize")
    fs = list(fs)
    if len(set(fs)) != len(fs):
        raise PreconditionViolated("fs must be distinct")
    if not set(fs) <= graph.edges:
        raise PreconditionViolated("fs must be a subset of the graph's edges")
    keeps = list(keeps)
    if not inv.holds(graph.delete_edges(set(fs) | set(keeps))):
        raise PreconditionViolated("removing fs and keeps must repair the invariant")
    while fs:
        f = fs.pop(0)
        if inv.holds(graph.delete_edges(set(fs) | set(keeps))):
            continue  # removing the rest suffices, f bears no responsibility
        keeps.insert(0, f)
    return keeps


def generate_valid_topology3(invariants, graph: PolicyGraph) -> PolicyGraph:
    """Epsilon-choice construction: per violated invariant, remove only one
    member of its offending-flow set (found by minimalize).  Never brute
    forces, so it also handles non-Phi-structured invariants; the result is
    a superset of generate_valid_topology's."""
    removed = set()
    for inv in invariants:
        if inv.holds(graph):
            continue
        removed |= set(
            minimalize_offending_overapprox(inv, graph.sorted_edges(), [], graph)
        )
    return graph.delete_edges(removed)


@dataclass(frozen=True)
class DiffReport:
    """How a manual policy relates to what the invariants require."""

    kept: frozenset       # in the policy and allowed
    violating: frozenset  # in the policy but forbidden
    absent: frozenset     # allowed by the maximum policy but not specified

    def to_dot(self, graph: PolicyGraph) -> str:
        nodes = graph.nodes
        full = PolicyGraph(nodes, self.kept | self.violating | self.absent)
        attrs = {}
        for e in self.violating:
            attrs[e] = "style=dashed, color=red"
        for e in self.absent:
            attrs[e] = "style=dashed, color=gray"
        return full.to_dot(edge_attrs=attrs)


def policy_diff(manual: PolicyGraph, invariants) -> DiffReport:
    violating = set()
    for inv in invariants:
        for flow_set in set_offending_flows(inv, manual):
            violating |= flow_set
    maximum = generate_valid_topology(invariants, manual.allow_all())
    absent = maximum.edges - manual.edges
    kept = manual.edges - violating
    return DiffReport(frozenset(kept), frozenset(violating), frozenset(absent))
