"""Stateful policies: which flows may carry connection-state back-traffic.

A stateful policy upgrades some policy flows so that reply packets in the
opposite direction are allowed.  Upgrading is safe when the induced
directed policy still satisfies all information-flow invariants and any
access-control violations are confined to the newly added backflows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .invariants import get_acs, get_ifs, set_offending_flows
from .policy import PolicyGraph, backflows


@dataclass(frozen=True)
class StatefulPolicy:
    nodes: frozenset
    flows: frozenset      # E_tau
    stateful: frozenset   # E_sigma, subset of flows

    @classmethod
    def of(cls, nodes, flows, stateful):
        t = cls(frozenset(nodes), frozenset(flows), frozenset(stateful))
        t.validate()
        return t

    def validate(self):
        if not self.stateful <= self.flows:
            raise ValueError("stateful flows must be a subset of the flows")
        for s, r in self.flows:
            if s not in self.nodes or r not in self.nodes:
                raise ValueError(f"flow ({s}, {r}) references unknown nodes")

    def to_json(self):
        return json.dumps(
            {
                "nodes": sorted(self.nodes),
                "flows": [list(e) for e in sorted(self.flows)],
                "stateful": [list(e) for e in sorted(self.stateful)],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls.of(
            data["nodes"],
            [tuple(e) for e in data["flows"]],
            [tuple(e) for e in data["stateful"]],
        )

    def to_dot(self):
        g = PolicyGraph(self.nodes, self.flows)
        return g.to_dot(edge_attrs={e: "style=dashed" for e in sorted(self.stateful)})


def alpha(t: StatefulPolicy) -> PolicyGraph:
    """The directed policy induced by a stateful policy: flows plus the
    backflows of the stateful subset."""
    return PolicyGraph(t.nodes, t.flows | t.stateful | frozenset(backflows(t.stateful)))


@dataclass
class ComplianceVerdict:
    ifs_ok: bool
    acs_ok: bool
    ifs_failures: list
    acs_excess: frozenset  # ACS offending edges not explained by new backflows

    @property
    def ok(self):
        return self.ifs_ok and self.acs_ok


def compliance_check(t: StatefulPolicy, invariants) -> ComplianceVerdict:
    """Check the two stateful-compliance conditions.

    (1) every IFS invariant holds on alpha(T); (2, efficient form) the
    union of all ACS offending flows on alpha(T) is confined to the newly
    added backflows, i.e. backflows(E_sigma) minus E_tau.  The second
    check is linear and provably implies the exponential all-subsets
    condition, which lives in the test suite only.
    """
    a = alpha(t)
    ifs_failures = [m.template_id for m in get_ifs(invariants) if not m.holds(a)]
    tolerated = frozenset(backflows(t.stateful)) - t.flows
    offending = set()
    for m in get_acs(invariants):
        for flow_set in set_offending_flows(m, a):
            offending |= flow_set
    excess = frozenset(offending) - tolerated
    return ComplianceVerdict(not ifs_failures, not excess, ifs_failures, excess)


def filter_ifs(graph: PolicyGraph, invariants, order) -> list:
    """Greedily accumulate the edges whose backflows keep every IFS
    invariant satisfied.  Edges listed first in `order` are preferred."""
    ifs = get_ifs(invariants)
    acc = []
    seen = set()
    for e in order:
        if e in seen:
            continue  # only the first occurrence of an edge counts
        seen.add(e)
        candidate = alpha(StatefulPolicy(graph.nodes, graph.edges, frozenset(acc) | {e}))
        if all(m.holds(candidate) for m in ifs):
            acc.append(e)
    return acc


def filter_acs(graph: PolicyGraph, invariants, order) -> list:
    """Keep an edge when it is not already bidirectional and every ACS
    offending-flow set of the candidate policy stays within the added
    backflows."""
    acs = get_acs(invariants)
    already_bidirectional = backflows(graph.edges)
    acc = []
    seen = set()
    for e in order:
        if e in seen or e in already_bidirectional:
            continue
        seen.add(e)
        selected = frozenset(acc) | {e}
        candidate = alpha(StatefulPolicy(graph.nodes, graph.edges, selected))
        tolerated = backflows(selected)
        ok = True
        for m in acs:
            for flow_set in set_offending_flows(m, candidate):
                if not flow_set <= tolerated:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            acc.append(e)
    return acc


def generate_stateful(graph: PolicyGraph, invariants, order=None, mode="chain") -> StatefulPolicy:
    """Compute a maximal compliant stateful policy from a valid directed
    policy.  mode "chain" runs filter_acs on filter_ifs's output; mode
    "intersect" intersects both filters (empirically these agree)."""
    if order is None:
        order = graph.sorted_edges()
    if mode == "chain":
        selected = filter_acs(graph, invariants, filter_ifs(graph, invariants, order))
    elif mode == "intersect":
        acs_sel = set(filter_acs(graph, invariants, order))
        selected = [e for e in filter_ifs(graph, invariants, order) if e in acs_sel]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return StatefulPolicy(graph.nodes, graph.edges, frozenset(selected))
