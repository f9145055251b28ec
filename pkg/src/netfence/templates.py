"""The ready-to-use invariant template library.

Fifteen templates plus the SystemBoundary meta template.  Each template
knows its strategy, its unique secure default attribute, how to validate
and decode attribute values, and how to build a ConfiguredInvariant.

Attribute encodings:
  BLPBasic               int security level, bottom = 0
  BLPTrusted             (level, trust) via BlpAttr, bottom = (0, False)
  CommPartners           "DontCare" | "Care" | Master(acl), bottom = DontCare
  CommWith               tuple of reachable hosts, bottom = ()
  NotCommWith            HostSet (supports symbolic UNIV), bottom = UNIV
  Dependability          int cap on reachable hosts, bottom = 0
  DependabilityNonRefl   same, self-loops not counted
  DomainHierarchy        DomAttr(path leaf-first, trust), bottom = below-all
  NoRefl                 "Refl" | "NoRefl", bottom = NoRefl
  NonInterference        "Interfering" | "Unrelated", bottom = Interfering
  PolEnforcePoint        role string, bottom = "Unassigned"
  Sink                   "Sink" | "SinkPool" | "Unassigned"
  Subnets                ("Subnet", n) | ("BorderRouter", n) |
                         ("BorderRouterPrime", n) | "InboundRouter" |
                         "Unassigned"
  SubnetsInGW            "Member" | "InboundGateway" | "Unassigned"
  TaintingSimple         frozenset of label strings, bottom = empty
  Tainting               TaintsSpec(taints, untaints), untaints subseteq taints
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .errors import AttrTypeMismatch, IllformedTaints, NoDefault
from .invariants import ConfiguredInvariant
from .policy import AttrMap, PolicyGraph, Strategy, succ_tran, undirected_reachable


# -- attribute value types ---------------------------------------------------


@dataclass(frozen=True)
class BlpAttr:
    level: int
    trust: bool = False


@dataclass(frozen=True)
class Master:
    acl: tuple

    def __init__(self, acl):
        object.__setattr__(self, "acl", tuple(acl))


@dataclass(frozen=True)
class HostSet:
    """Host set with a symbolic complement so UNIV stays representable."""

    members: frozenset
    complemented: bool = False

    def __contains__(self, host):
        return (host in self.members) != self.complemented

    @classmethod
    def univ(cls):
        return cls(frozenset(), True)

    def inverse(self):
        return HostSet(self.members, not self.complemented)


@dataclass(frozen=True)
class DomAttr:
    """Domain-hierarchy position: label path ordered leaf-first, plus a
    trust count that lets the host act that many levels higher."""

    path: Optional[tuple]  # None is the distinguished bottom, below everything
    trust: int = 0

    def __post_init__(self):
        # trust cannot lift the unassigned bottom; normalizing keeps the
        # default attribute unique
        if self.path is None and self.trust:
            object.__setattr__(self, "trust", 0)


def dom_below(a, b):
    """a is below or at b; b must be a suffix of a.  Bottom is below all."""
    if a is None:
        return True
    if b is None:
        return False
    return len(a) >= len(b) and a[len(a) - len(b):] == b


def dom_chop(path, trust):
    if path is None:
        return None
    return path[min(trust, len(path)):]


def parse_domain(text):
    """Leaf-first dotted notation: 'br.e.cc' is below 'e.cc' is below 'cc'."""
    text = text.strip()
    if not text:
        return None
    return tuple(text.split("."))


@dataclass(frozen=True)
class TaintsSpec:
    taints: frozenset
    untaints: frozenset

    def __post_init__(self):
        if not self.untaints <= self.taints:
            raise IllformedTaints(
                f"untaints {sorted(self.untaints)} not a subset of taints {sorted(self.taints)}"
            )

    @classmethod
    def of(cls, taints, untaints=()):
        """Normalizing constructor: X -- Y is stored as (X u Y) -- Y."""
        t, u = frozenset(taints), frozenset(untaints)
        return cls(t | u, u)


# -- template definitions ----------------------------------------------------


class Template:
    template_id: str
    strategy: Strategy
    phi_structured = False
    norefl = False
    has_default = True

    def default(self):
        raise NotImplementedError

    def validate_attr(self, value):
        raise AttrTypeMismatch(f"{self.template_id}: cannot use attribute {value!r}")

    def decode_attr(self, value):
        """Decode a JSON-level attribute value."""
        return value

    def attr_pool(self, hosts):
        """Small, representative attribute values for bounded model checks."""
        raise NotImplementedError

    def phi(self, attr_s, s, attr_r, r):
        raise NotImplementedError

    def make_eval(self, attr_map):
        def eval_fn(graph):
            for s, r in graph.edges:
                if self.norefl and s == r:
                    continue
                if not self.phi(attr_map(s), s, attr_map(r), r):
                    return False
            return True

        return eval_fn

    def instantiate(self, attrs) -> ConfiguredInvariant:
        partial = dict(attrs.partial) if isinstance(attrs, AttrMap) else dict(attrs)
        for host, value in partial.items():
            self.validate_attr(value)
        amap = AttrMap(partial, self.default())
        return ConfiguredInvariant(
            template_id=self.template_id,
            strategy=self.strategy,
            eval_fn=self.make_eval(amap),
            attr_map=amap,
            phi=self.phi if self.phi_structured else None,
            norefl=self.norefl,
        )


class BLPBasic(Template):
    template_id = "BLPBasic"
    strategy = Strategy.IFS
    phi_structured = True

    def default(self):
        return 0

    def validate_attr(self, value):
        if not isinstance(value, int) or value < 0:
            raise AttrTypeMismatch(f"BLPBasic level must be a natural number, got {value!r}")

    def attr_pool(self, hosts):
        return [0, 1, 2]

    def phi(self, attr_s, s, attr_r, r):
        return attr_s <= attr_r


class BLPTrusted(Template):
    template_id = "BLPTrusted"
    strategy = Strategy.IFS
    phi_structured = True

    def default(self):
        return BlpAttr(0, False)

    def validate_attr(self, value):
        if not isinstance(value, BlpAttr) or value.level < 0:
            raise AttrTypeMismatch(f"BLPTrusted needs BlpAttr(level, trust), got {value!r}")

    def decode_attr(self, value):
        return BlpAttr(int(value["level"]), bool(value.get("trust", False)))

    def attr_pool(self, hosts):
        return [BlpAttr(l, t) for l in (0, 1, 2) for t in (False, True)]

    def phi(self, attr_s, s, attr_r, r):
        return attr_r.trust or attr_s.level <= attr_r.level


class CommPartners(Template):
    template_id = "CommPartners"
    strategy = Strategy.ACS
    phi_structured = True
    norefl = True

    def default(self):
        return "DontCare"

    def validate_attr(self, value):
        if value in ("DontCare", "Care") or isinstance(value, Master):
            return
        raise AttrTypeMismatch(f"CommPartners attribute {value!r}")

    def decode_attr(self, value):
        if isinstance(value, dict) and "master" in value:
            return Master(value["master"])
        return value

    def attr_pool(self, hosts):
        hosts = sorted(hosts)
        return (
            ["DontCare", "Care", Master(())]
            + [Master((h,)) for h in hosts]
            + [Master(tuple(hosts))]
        )

    def phi(self, attr_s, s, attr_r, r):
        if isinstance(attr_r, Master):
            # DontCare senders never gain access through a stale ACL entry.
            return attr_s != "DontCare" and s in attr_r.acl
        return True


class CommWith(Template):
    template_id = "CommWith"
    strategy = Strategy.ACS

    def default(self):
        return ()

    def validate_attr(self, value):
        if not isinstance(value, (tuple, list)):
            raise AttrTypeMismatch(f"CommWith needs a host list, got {value!r}")

    def decode_attr(self, value):
        return tuple(value)

    def attr_pool(self, hosts):
        hosts = sorted(hosts)
        pool = [()]
        pool += [(h,) for h in hosts]
        pool.append(tuple(hosts))
        return pool

    def make_eval(self, attr_map):
        def eval_fn(graph):
            for v in graph.nodes:
                allowed = attr_map(v)
                if any(a not in allowed for a in succ_tran(graph, v)):
                    return False
            return True

        return eval_fn


class NotCommWith(Template):
    template_id = "NotCommWith"
    strategy = Strategy.ACS

    def default(self):
        return HostSet.univ()

    def validate_attr(self, value):
        if not isinstance(value, HostSet):
            raise AttrTypeMismatch(f"NotCommWith needs a HostSet, got {value!r}")

    def decode_attr(self, value):
        if isinstance(value, dict) and "all_but" in value:
            return HostSet(frozenset(value["all_but"]), complemented=True)
        return HostSet(frozenset(value))

    def attr_pool(self, hosts):
        hosts = sorted(hosts)
        pool = [HostSet.univ(), HostSet(frozenset())]
        pool += [HostSet(frozenset({h})) for h in hosts]
        pool += [HostSet(frozenset({h}), complemented=True) for h in hosts]
        return pool

    def make_eval(self, attr_map):
        def eval_fn(graph):
            for v in graph.nodes:
                forbidden = attr_map(v)
                if any(a in forbidden for a in succ_tran(graph, v)):
                    return False
            return True

        return eval_fn


class Dependability(Template):
    template_id = "Dependability"
    strategy = Strategy.ACS
    count_self = True

    def default(self):
        return 0

    def validate_attr(self, value):
        if not isinstance(value, int) or value < 0:
            raise AttrTypeMismatch(f"Dependability level must be a natural number, got {value!r}")

    def attr_pool(self, hosts):
        return [0, 1, 2, 3]

    def _reach(self, graph, v):
        reach = succ_tran(graph, v)
        if not self.count_self:
            reach -= {v}
        return reach

    def make_eval(self, attr_map):
        def eval_fn(graph):
            return all(len(self._reach(graph, v)) <= attr_map(v) for v in graph.nodes)

        return eval_fn


class DependabilityNonRefl(Dependability):
    template_id = "DependabilityNonRefl"
    count_self = False


class DomainHierarchy(Template):
    template_id = "DomainHierarchy"
    strategy = Strategy.ACS
    phi_structured = True

    def default(self):
        return DomAttr(None, 0)

    def validate_attr(self, value):
        if not isinstance(value, DomAttr) or value.trust < 0:
            raise AttrTypeMismatch(f"DomainHierarchy needs DomAttr(path, trust), got {value!r}")

    def decode_attr(self, value):
        return DomAttr(parse_domain(value["level"]), int(value.get("trust", 0)))

    def attr_pool(self, hosts):
        paths = [None, ("cc",), ("e", "cc"), ("br", "e", "cc")]
        return [DomAttr(p, t) for p in paths for t in (0, 1)]

    def phi(self, attr_s, s, attr_r, r):
        return dom_below(attr_r.path, dom_chop(attr_s.path, attr_s.trust))


class NoRefl(Template):
    template_id = "NoRefl"
    strategy = Strategy.ACS  # sender equals receiver here, so either reading works
    phi_structured = True

    def default(self):
        return "NoRefl"

    def validate_attr(self, value):
        if value not in ("Refl", "NoRefl"):
            raise AttrTypeMismatch(f"NoRefl attribute {value!r}")

    def attr_pool(self, hosts):
        return ["Refl", "NoRefl"]

    def phi(self, attr_s, s, attr_r, r):
        return s != r or attr_s == "Refl"


class NonInterference(Template):
    template_id = "NonInterference"
    strategy = Strategy.IFS

    def default(self):
        return "Interfering"

    def validate_attr(self, value):
        if value not in ("Interfering", "Unrelated"):
            raise AttrTypeMismatch(f"NonInterference attribute {value!r}")

    def attr_pool(self, hosts):
        return ["Interfering", "Unrelated"]

    def make_eval(self, attr_map):
        def eval_fn(graph):
            for v in graph.nodes:
                if attr_map(v) != "Interfering":
                    continue
                for other in undirected_reachable(graph, v):
                    if attr_map(other) == "Interfering":
                        return False
            return True

        return eval_fn


_PEP_ROLES = (
    "PolEnforcePoint",
    "PolEnforcePointIN",
    "DomainMember",
    "AccessibleMember",
    "Unassigned",
)


class PolEnforcePoint(Template):
    template_id = "PolEnforcePoint"
    strategy = Strategy.ACS
    phi_structured = True
    norefl = True

    def default(self):
        return "Unassigned"

    def validate_attr(self, value):
        if value not in _PEP_ROLES:
            raise AttrTypeMismatch(f"PolEnforcePoint role {value!r}")

    def attr_pool(self, hosts):
        return list(_PEP_ROLES)

    def phi(self, attr_s, s, attr_r, r):
        if attr_s in ("PolEnforcePoint", "PolEnforcePointIN"):
            return True
        if attr_s == "DomainMember":
            return attr_r != "DomainMember"
        if attr_s == "AccessibleMember":
            return attr_r != "DomainMember"
        # Unassigned: the outside world
        return attr_r in ("Unassigned", "PolEnforcePointIN", "AccessibleMember")


class Sink(Template):
    template_id = "Sink"
    strategy = Strategy.IFS
    phi_structured = True
    norefl = True

    def default(self):
        return "Unassigned"

    def validate_attr(self, value):
        if value not in ("Sink", "SinkPool", "Unassigned"):
            raise AttrTypeMismatch(f"Sink attribute {value!r}")

    def attr_pool(self, hosts):
        return ["Sink", "SinkPool", "Unassigned"]

    def phi(self, attr_s, s, attr_r, r):
        if attr_s == "Sink":
            return False
        if attr_s == "SinkPool":
            return attr_r in ("SinkPool", "Sink")
        return True


class Subnets(Template):
    template_id = "Subnets"
    strategy = Strategy.ACS
    phi_structured = True

    def default(self):
        return "Unassigned"

    def validate_attr(self, value):
        if value in ("Unassigned", "InboundRouter"):
            return
        if (
            isinstance(value, tuple)
            and len(value) == 2
            and value[0] in ("Subnet", "BorderRouter", "BorderRouterPrime")
            and isinstance(value[1], int)
        ):
            return
        raise AttrTypeMismatch(f"Subnets attribute {value!r}")

    def decode_attr(self, value):
        if isinstance(value, dict):
            if "subnet" in value:
                return ("Subnet", int(value["subnet"]))
            if "border_router" in value:
                return ("BorderRouter", int(value["border_router"]))
            if "border_router_prime" in value:
                return ("BorderRouterPrime", int(value["border_router_prime"]))
        return value

    def attr_pool(self, hosts):
        return [
            ("Subnet", 1),
            ("Subnet", 2),
            ("BorderRouter", 1),
            ("BorderRouter", 2),
            "Unassigned",
        ]

    def phi(self, attr_s, s, attr_r, r):
        skind = attr_s[0] if isinstance(attr_s, tuple) else attr_s
        rkind = attr_r[0] if isinstance(attr_r, tuple) else attr_r
        routers = ("BorderRouter", "BorderRouterPrime", "InboundRouter")
        if rkind == "InboundRouter":
            return True
        if skind == "Subnet":
            if rkind in ("Subnet", "BorderRouter", "BorderRouterPrime"):
                return attr_s[1] == attr_r[1]
            return True  # Unassigned receiver
        if skind == "BorderRouter":
            return rkind != "Subnet"
        if skind == "BorderRouterPrime":
            if rkind == "Subnet":
                return attr_s[1] == attr_r[1]
            return True
        if skind == "InboundRouter":
            return rkind != "Subnet"
        # Unassigned sender must not set up connections into the structure
        return rkind == "Unassigned"


class SubnetsInGW(Template):
    template_id = "SubnetsInGW"
    strategy = Strategy.ACS
    phi_structured = True

    def default(self):
        return "Unassigned"

    def validate_attr(self, value):
        if value not in ("Member", "InboundGateway", "Unassigned"):
            raise AttrTypeMismatch(f"SubnetsInGW attribute {value!r}")

    def attr_pool(self, hosts):
        return ["Member", "InboundGateway", "Unassigned"]

    def phi(self, attr_s, s, attr_r, r):
        if attr_s in ("Member", "InboundGateway"):
            return True
        return attr_r != "Member"


class TaintingSimple(Template):
    template_id = "TaintingSimple"
    strategy = Strategy.IFS
    phi_structured = True

    def default(self):
        return frozenset()

    def validate_attr(self, value):
        if not isinstance(value, frozenset):
            raise AttrTypeMismatch(f"TaintingSimple needs a frozenset of labels, got {value!r}")

    def decode_attr(self, value):
        return frozenset(value)

    def attr_pool(self, hosts):
        return [frozenset(), frozenset({"x"}), frozenset({"y"}), frozenset({"x", "y"})]

    def phi(self, attr_s, s, attr_r, r):
        return attr_s <= attr_r


class Tainting(Template):
    template_id = "Tainting"
    strategy = Strategy.IFS
    phi_structured = True

    def default(self):
        return TaintsSpec.of((), ())

    def validate_attr(self, value):
        if not isinstance(value, TaintsSpec):
            raise AttrTypeMismatch(f"Tainting needs a TaintsSpec, got {value!r}")

    def decode_attr(self, value):
        return TaintsSpec.of(value.get("taints", ()), value.get("untaints", ()))

    def attr_pool(self, hosts):
        labels = [frozenset(), frozenset({"x"}), frozenset({"y"}), frozenset({"x", "y"})]
        pool = {TaintsSpec.of(t, u) for t in labels for u in labels}
        return sorted(pool, key=lambda ts: (sorted(ts.taints), sorted(ts.untaints)))

    def phi(self, attr_s, s, attr_r, r):
        return (attr_s.taints - attr_s.untaints) <= attr_r.taints


class SystemBoundary(Template):
    """Meta template: expands to one access-control and one information-flow
    invariant which jointly wall off the internal components."""

    template_id = "SystemBoundary"
    strategy = Strategy.ACS
    has_default = False

    def default(self):
        raise NoDefault("SystemBoundary is a meta template without a default attribute")

    def instantiate(self, attrs):
        raise NoDefault("use system_boundary_expand for the meta template")


TEMPLATES = {
    t.template_id: t
    for t in (
        BLPBasic(),
        BLPTrusted(),
        CommPartners(),
        CommWith(),
        NotCommWith(),
        Dependability(),
        DependabilityNonRefl(),
        DomainHierarchy(),
        NoRefl(),
        NonInterference(),
        PolEnforcePoint(),
        Sink(),
        Subnets(),
        SubnetsInGW(),
        TaintingSimple(),
        Tainting(),
        SystemBoundary(),
    )
}

LIBRARY_IDS = [t for t in TEMPLATES if t != "SystemBoundary"]


def default_attribute(template_id):
    return TEMPLATES[template_id].default()


def instantiate(template_id, attrs) -> ConfiguredInvariant:
    return TEMPLATES[template_id].instantiate(attrs)


def dependability_autolevels(graph: PolicyGraph, refl=True) -> AttrMap:
    """Assign each host the size of its reachable set; always a valid
    configuration for the (non-)reflexive dependability template."""
    levels = {}
    for v in graph.nodes:
        reach = succ_tran(graph, v)
        if not refl:
            reach -= {v}
        levels[v] = len(reach)
    return AttrMap(levels, 0)


def system_boundary_expand(spec) -> list:
    """Translate a boundary description into its two member invariants.

    spec keys: "internal", "passive", "active" (lists of hosts; boundary
    hosts that are both passive and active may appear in both lists).
    """
    internal = list(spec.get("internal", ()))
    passive = list(spec.get("passive", ()))
    active = list(spec.get("active", ()))
    if not internal and not passive and not active:
        return []
    acs_attrs = {}
    ifs_attrs = {}
    for h in internal:
        acs_attrs[h] = "Member"
        ifs_attrs[h] = BlpAttr(1, False)
    for h in active:
        acs_attrs[h] = "Member"
        ifs_attrs[h] = BlpAttr(0, True)
    for h in passive:
        acs_attrs[h] = "InboundGateway"
        ifs_attrs[h] = BlpAttr(0, True)
    return [
        TEMPLATES["SubnetsInGW"].instantiate(acs_attrs),
        TEMPLATES["BLPTrusted"].instantiate(ifs_attrs),
    ]


def load_invariants(text) -> list:
    """Parse the JSON invariant specification file.

    Format: [{"template": "BLPTrusted",
              "attrs": {"SensorSink": {"level": 2, "trust": true}}}, ...]
    SystemBoundary entries carry "internal"/"passive"/"active" lists
    instead of "attrs" and expand to two invariants.
    """
    entries = json.loads(text)
    out = []
    for entry in entries:
        tid = entry["template"]
        if tid == "SystemBoundary":
            out.extend(system_boundary_expand(entry))
            continue
        template = TEMPLATES[tid]
        attrs = {h: template.decode_attr(v) for h, v in entry.get("attrs", {}).items()}
        out.append(template.instantiate(attrs))
    return out
