"""Abstract syntax for iptables filter rules.

Match expressions form a tiny algebra (primitive, negation, conjunction,
True); rules pair a match expression with an action; a table maps chain
names to rule lists plus the built-in chains' default policies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import UndefinedChainTarget
from .wordinterval import WordInterval, ip_format

PROTO_NAMES = {
    1: "icmp",
    6: "tcp",
    17: "udp",
    47: "gre",
    50: "esp",
    51: "ah",
    58: "ipv6-icmp",
    132: "sctp",
}
PROTO_NUMBERS = {name: num for num, name in PROTO_NAMES.items()}

TCP_FLAG_ORDER = ("FIN", "SYN", "RST", "PSH", "ACK", "URG")
CT_STATES = ("NEW", "ESTABLISHED", "RELATED", "INVALID", "UNTRACKED")


# -- primitives --------------------------------------------------------------


@dataclass(frozen=True)
class Src:
    addrs: WordInterval


@dataclass(frozen=True)
class Dst:
    addrs: WordInterval


@dataclass(frozen=True)
class IIface:
    name: str  # trailing '+' is a prefix wildcard


@dataclass(frozen=True)
class OIface:
    name: str


@dataclass(frozen=True)
class Protocol:
    number: int


@dataclass(frozen=True)
class SrcPorts:
    proto: int  # ports only exist relative to a concrete protocol
    ports: WordInterval


@dataclass(frozen=True)
class DstPorts:
    proto: int
    ports: WordInterval


@dataclass(frozen=True)
class MultiportSrc:
    proto: int
    ports: WordInterval


@dataclass(frozen=True)
class MultiportDst:
    proto: int
    ports: WordInterval


@dataclass(frozen=True)
class CtState:
    states: frozenset


@dataclass(frozen=True)
class TcpFlags:
    mask: frozenset
    comp: frozenset


@dataclass(frozen=True)
class Extra:
    text: str


PORT_PRIMITIVES = (SrcPorts, DstPorts, MultiportSrc, MultiportDst)


def match_iface(pattern: str, name: str) -> bool:
    """iptables interface matching: a trailing '+' matches any suffix."""
    if pattern.endswith("+"):
        return name.startswith(pattern[:-1])
    return name == pattern


def iface_conj(a: str, b: str) -> Optional[str]:
    """Conjunction of two interface patterns; None when unsatisfiable.
    Non-wildcard names dominate wildcard patterns."""
    a_wild, b_wild = a.endswith("+"), b.endswith("+")
    if not a_wild and not b_wild:
        return a if a == b else None
    if a_wild and not b_wild:
        return b if b.startswith(a[:-1]) else None
    if b_wild and not a_wild:
        return a if a.startswith(b[:-1]) else None
    ap, bp = a[:-1], b[:-1]
    if ap.startswith(bp):
        return a
    if bp.startswith(ap):
        return b
    return None


# -- match expressions -------------------------------------------------------


class MatchExpr:
    __slots__ = ()


class _MTrue(MatchExpr):
    __slots__ = ()

    def __repr__(self):
        return "MTrue"

    def __eq__(self, other):
        return isinstance(other, _MTrue)

    def __hash__(self):
        return hash("MTrue")


MTrue = _MTrue()


@dataclass(frozen=True)
class MPrim(MatchExpr):
    prim: object


@dataclass(frozen=True)
class MNot(MatchExpr):
    inner: MatchExpr


@dataclass(frozen=True)
class MAnd(MatchExpr):
    left: MatchExpr
    right: MatchExpr


MNotTrue = MNot(MTrue)


def mand(*exprs) -> MatchExpr:
    """Right-nested conjunction with True/NotTrue short-circuiting."""
    out = MTrue
    for e in reversed(exprs):
        if e == MNotTrue or out == MNotTrue:
            return MNotTrue
        if e == MTrue:
            continue
        out = e if out == MTrue else MAnd(e, out)
    return out


def conjuncts(m: MatchExpr):
    """Flatten a conjunction tree into its leaves (drops True)."""
    if m == MTrue:
        return []
    if isinstance(m, MAnd):
        return conjuncts(m.left) + conjuncts(m.right)
    return [m]


def opt_match(m: MatchExpr) -> MatchExpr:
    """Simplify away True and not-True subterms."""
    if isinstance(m, MAnd):
        left, right = opt_match(m.left), opt_match(m.right)
        if left == MNotTrue or right == MNotTrue:
            return MNotTrue
        if left == MTrue:
            return right
        if right == MTrue:
            return left
        return MAnd(left, right)
    if isinstance(m, MNot):
        inner = opt_match(m.inner)
        if isinstance(inner, MNot):
            return inner.inner
        return MNot(inner)
    return m


def map_primitives(m: MatchExpr, fn) -> MatchExpr:
    """Rebuild a match expression, replacing each MPrim via fn (which may
    return any match expression)."""
    if m == MTrue:
        return m
    if isinstance(m, MPrim):
        return fn(m.prim)
    if isinstance(m, MNot):
        return MNot(map_primitives(m.inner, fn))
    return MAnd(map_primitives(m.left, fn), map_primitives(m.right, fn))


def primitives_in(m: MatchExpr):
    if m == MTrue:
        return
    if isinstance(m, MPrim):
        yield m.prim
    elif isinstance(m, MNot):
        yield from primitives_in(m.inner)
    else:
        yield from primitives_in(m.left)
        yield from primitives_in(m.right)


# -- actions and rules -------------------------------------------------------


@dataclass(frozen=True)
class Action:
    kind: str
    chain: Optional[str] = None


ACCEPT = Action("accept")
DROP = Action("drop")
REJECT = Action("reject")
LOG = Action("log")
EMPTY = Action("empty")
RETURN = Action("return")


def call(chain):
    return Action("call", chain)


def goto(chain):
    return Action("goto", chain)


@dataclass(frozen=True)
class Rule:
    match: MatchExpr
    action: Action
    raw: Optional[str] = field(default=None, compare=False)


@dataclass
class Table:
    chains: dict
    policies: dict
    family: str = "v4"

    BUILTIN = ("INPUT", "FORWARD", "OUTPUT")

    def validate(self):
        for name, rules in self.chains.items():
            for rule in rules:
                if rule.action.kind in ("call", "goto") and rule.action.chain not in self.chains:
                    raise UndefinedChainTarget(
                        f"chain {name!r} targets undefined chain {rule.action.chain!r}"
                    )


# -- printing back to iptables-save text -------------------------------------


def _ports_text(wi: WordInterval) -> str:
    chunks = []
    for lo, hi in wi.parts:
        chunks.append(str(lo) if lo == hi else f"{lo}:{hi}")
    return ",".join(chunks)


def _addr_text(wi: WordInterval, family):
    """Render an address set as ('cidr', text) or ('range', lo-hi)."""
    if len(wi.parts) != 1:
        raise ValueError("cannot print a fragmented address set in one rule")
    cidrs = wi.to_cidrs()
    if len(cidrs) == 1:
        return "cidr", str(cidrs[0])
    lo, hi = wi.parts[0]
    return "range", f"{ip_format(lo, family)}-{ip_format(hi, family)}"


def _flags_text(flags: frozenset) -> str:
    if not flags:
        return "NONE"
    return ",".join(f for f in TCP_FLAG_ORDER if f in flags)


def prim_to_args(prim, negated=False, family="v4") -> str:
    bang = "! " if negated else ""
    if isinstance(prim, Src):
        kind, text = _addr_text(prim.addrs, family)
        if kind == "range":
            return f"-m iprange {bang}--src-range {text}"
        return f"{bang}-s {text}"
    if isinstance(prim, Dst):
        kind, text = _addr_text(prim.addrs, family)
        if kind == "range":
            return f"-m iprange {bang}--dst-range {text}"
        return f"{bang}-d {text}"
    if isinstance(prim, IIface):
        return f"{bang}-i {prim.name}"
    if isinstance(prim, OIface):
        return f"{bang}-o {prim.name}"
    if isinstance(prim, Protocol):
        return f"{bang}-p {PROTO_NAMES.get(prim.number, str(prim.number))}"
    if isinstance(prim, SrcPorts):
        mod = PROTO_NAMES.get(prim.proto, str(prim.proto))
        return f"-m {mod} {bang}--sport {_ports_text(prim.ports)}"
    if isinstance(prim, DstPorts):
        mod = PROTO_NAMES.get(prim.proto, str(prim.proto))
        return f"-m {mod} {bang}--dport {_ports_text(prim.ports)}"
    if isinstance(prim, MultiportSrc):
        return f"-m multiport {bang}--sports {_ports_text(prim.ports)}"
    if isinstance(prim, MultiportDst):
        return f"-m multiport {bang}--dports {_ports_text(prim.ports)}"
    if isinstance(prim, CtState):
        states = ",".join(s for s in CT_STATES if s in prim.states)
        return f"-m state {bang}--state {states}"
    if isinstance(prim, TcpFlags):
        return f"-m tcp {bang}--tcp-flags {_flags_text(prim.mask)} {_flags_text(prim.comp)}"
    if isinstance(prim, Extra):
        return f"{bang}{prim.text}"
    raise ValueError(f"cannot print primitive {prim!r}")


def match_to_args(m: MatchExpr, family="v4") -> str:
    pieces = []
    for leaf in conjuncts(m):
        if isinstance(leaf, MPrim):
            pieces.append(prim_to_args(leaf.prim, family=family))
        elif isinstance(leaf, MNot) and isinstance(leaf.inner, MPrim):
            pieces.append(prim_to_args(leaf.inner.prim, negated=True, family=family))
        else:
            raise ValueError(f"match not in printable NNF conjunction form: {leaf!r}")
    return " ".join(pieces)


def action_to_args(action: Action) -> str:
    kind = action.kind
    if kind == "call":
        return f"-j {action.chain}"
    if kind == "goto":
        return f"-g {action.chain}"
    if kind == "empty":
        return ""
    return "-j " + {"accept": "ACCEPT", "drop": "DROP", "reject": "REJECT",
                    "log": "LOG", "return": "RETURN"}[kind]


def table_to_save(table: Table) -> str:
    lines = ["*filter"]
    ordered = [c for c in Table.BUILTIN if c in table.chains]
    ordered += sorted(c for c in table.chains if c not in Table.BUILTIN)
    for chain in ordered:
        policy = table.policies.get(chain)
        ptext = {None: "-", ACCEPT: "ACCEPT", DROP: "DROP"}[policy]
        lines.append(f":{chain} {ptext} [0:0]")
    for chain in ordered:
        for rule in table.chains[chain]:
            args = match_to_args(rule.match, table.family)
            act = action_to_args(rule.action)
            body = " ".join(x for x in (args, act) if x)
            lines.append(f"-A {chain} {body}".rstrip())
    lines.append("COMMIT")
    return "\n".join(lines) + "\n"
