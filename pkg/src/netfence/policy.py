"""Policy graphs and host-attribute maps.

A security policy is a directed graph over opaque host names; both the
synthesis pipeline (invariants -> ruleset) and the analysis pipeline
(ruleset -> access matrix) meet at this abstraction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .errors import DanglingEndpoint


class Strategy(Enum):
    IFS = "IFS"
    ACS = "ACS"


@dataclass(frozen=True)
class PolicyGraph:
    """Directed graph (nodes, edges); edge endpoints must be declared nodes.

    Nodes and edges are stored as frozensets; all iteration helpers return
    lexicographically sorted views so downstream algorithms are
    deterministic.
    """

    nodes: frozenset
    edges: frozenset

    @classmethod
    def of(cls, nodes, edges=()):
        g = cls(frozenset(nodes), frozenset(tuple(e) for e in edges))
        g.validate()
        return g

    def validate(self):
        for s, r in self.edges:
            if s not in self.nodes:
                raise DanglingEndpoint(s)
            if r not in self.nodes:
                raise DanglingEndpoint(r)

    def sorted_nodes(self):
        return sorted(self.nodes)

    def sorted_edges(self):
        return sorted(self.edges)

    def with_edges(self, edges):
        return PolicyGraph.of(self.nodes, edges)

    def delete_edges(self, removed):
        return PolicyGraph(self.nodes, self.edges - frozenset(removed))

    def allow_all(self):
        """The complete graph (V, V x V) over the same nodes."""
        return PolicyGraph(self.nodes, frozenset((a, b) for a in self.nodes for b in self.nodes))

    # -- serialization -------------------------------------------------

    def to_json(self):
        return json.dumps(
            {"nodes": self.sorted_nodes(), "edges": [list(e) for e in self.sorted_edges()]},
            indent=2,
        )

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls.of(data["nodes"], [tuple(e) for e in data["edges"]])

    def to_dot(self, edge_attrs=None):
        """Graphviz digraph; `edge_attrs` may map an edge to an attribute
        string such as 'style=dashed, color=red'."""
        lines = ["digraph policy {"]
        for n in self.sorted_nodes():
            lines.append(f'  "{n}";')
        for s, r in self.sorted_edges():
            extra = ""
            if edge_attrs:
                a = edge_attrs.get((s, r))
                if a:
                    extra = f" [{a}]"
            lines.append(f'  "{s}" -> "{r}"{extra};')
        lines.append("}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_dot(cls, text):
        """Parse the digraph dialect emitted by to_dot (quoted names only)."""
        nodes, edges = [], []
        for raw in text.splitlines():
            line = raw.strip().rstrip(";")
            if not line or line.startswith(("digraph", "}")):
                continue
            if "[" in line:
                line = line[: line.index("[")].strip()
            if "->" in line:
                a, _, b = line.partition("->")
                edges.append((a.strip().strip('"'), b.strip().strip('"')))
            else:
                nodes.append(line.strip('"'))
        return cls.of(set(nodes) | {h for e in edges for h in e}, edges)


def succ_tran(graph: PolicyGraph, v) -> set:
    """Hosts reachable from v via one or more edges (transitive closure image)."""
    from .errors import UnknownHost

    if v not in graph.nodes:
        raise UnknownHost(v)
    adjacency = {}
    for s, r in graph.edges:
        adjacency.setdefault(s, set()).add(r)
    seen = set()
    frontier = set(adjacency.get(v, ()))
    while frontier:
        seen |= frontier
        frontier = {n for f in frontier for n in adjacency.get(f, ())} - seen
    return seen


def undirected_reachable(graph: PolicyGraph, v) -> set:
    """Reachability pretending every edge were bidirectional, minus v itself."""
    both = graph.edges | {(r, s) for s, r in graph.edges}
    return succ_tran(PolicyGraph(graph.nodes, frozenset(both)), v) - {v}


def backflows(edges):
    return {(r, s) for s, r in edges}


@dataclass(frozen=True)
class AttrMap:
    """Total host-attribute lookup: explicit entries fall back to a default."""

    partial: Any = field(default_factory=dict)
    default: Any = None

    def __post_init__(self):
        object.__setattr__(self, "partial", dict(self.partial))

    def lookup(self, host):
        return self.partial.get(host, self.default)

    def __call__(self, host):
        return self.lookup(host)

    def override(self, host, value):
        new = dict(self.partial)
        new[host] = value
        return AttrMap(new, self.default)
