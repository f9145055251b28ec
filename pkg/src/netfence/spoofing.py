"""Certify spoofing protection of an unfolded ruleset, per interface.

The certifier walks the rule list once, accumulating an over-approximation
A of the source addresses an interface's packets may be accepted with and
an under-approximation D of the sources that are definitely dropped.  The
interface is certified when A minus D stays inside its assigned range.
Sound but deliberately incomplete in the presence of unknown matches.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import ruleset as rs
from .errors import IfaceNotInIpassmt, MissingFinalRule
from .ruleset import MNot, MPrim, MTrue, conjuncts, match_iface
from .semantics import normalize_nnf
from .wordinterval import WordInterval, format_interval


@dataclass
class SpoofVerdict:
    iface: str
    certified: bool
    failing_rule: Optional[int] = None   # first rule index where A \ D escapes
    residual: Optional[WordInterval] = None

    def report_line(self, family="v4"):
        if self.certified:
            return f"{self.iface}: CERTIFIED"
        where = f" at rule #{self.failing_rule}" if self.failing_rule is not None else ""
        extra = ""
        if self.residual is not None and not self.residual.is_empty():
            extra = f" (residual range {format_interval(self.residual, family)})"
        return f"{self.iface}: FAIL{where}{extra}"


def _rule_iface_field(field):
    return rs.IIface if field == "in" else rs.OIface


def _accept_sources(disjuncts, iface, width, field):
    """Over-approximation of the source IPs with which some packet on
    `iface` can match; None-safe union over the NNF disjunctions."""
    iface_type = _rule_iface_field(field)
    total = WordInterval.empty(width)
    for leaves in disjuncts:
        srcs = WordInterval.universe(width)
        feasible = True
        for leaf in leaves:
            negated = isinstance(leaf, MNot)
            node = leaf.inner if negated else leaf
            prim = node.prim if isinstance(node, MPrim) else None
            if isinstance(prim, iface_type):
                if negated:
                    # cannot bound what other interfaces may carry: stay safe
                    srcs = WordInterval.universe(width)
                    break
                if not match_iface(prim.name, iface):
                    feasible = False
                    break
            elif isinstance(prim, rs.Src):
                srcs = srcs.intersect(prim.addrs.complement() if negated else prim.addrs)
            # every other primitive might be satisfiable by some packet
        if feasible:
            total = total.union(srcs)
    return total


def _deny_sources(disjuncts, iface, width, field):
    """Under-approximation of the sources every packet on `iface` is
    guaranteed to match: only interface and source constraints may remain."""
    iface_type = _rule_iface_field(field)
    total = WordInterval.empty(width)
    for leaves in disjuncts:
        srcs = WordInterval.universe(width)
        guaranteed = True
        for leaf in leaves:
            negated = isinstance(leaf, MNot)
            node = leaf.inner if negated else leaf
            prim = node.prim if isinstance(node, MPrim) else None
            if isinstance(prim, iface_type):
                if negated or not match_iface(prim.name, iface):
                    guaranteed = False
                    break
            elif isinstance(prim, rs.Src):
                srcs = srcs.intersect(prim.addrs.complement() if negated else prim.addrs)
            else:
                guaranteed = False  # residual match is not unconditionally true
                break
        if guaranteed:
            total = total.union(srcs)
    return total


def sp_certify(rules, iface, ipassmt, field="in") -> SpoofVerdict:
    """Certify one interface of an unfolded Accept/Drop rule list.

    The list must end in an explicit catch-all rule (the unfolded default
    policy guarantees this).  `field` selects which interface side the
    certification is about: "in" for INPUT/FORWARD, "out" for OUTPUT.
    """
    if iface not in ipassmt:
        raise IfaceNotInIpassmt(iface)
    if not rules or rules[-1].match != MTrue or rules[-1].action.kind not in ("accept", "drop"):
        raise MissingFinalRule("ruleset must end with an explicit allow-all or deny-all rule")
    allowed_range = ipassmt[iface]
    width = allowed_range.width
    acc = WordInterval.empty(width)
    deny = WordInterval.empty(width)
    failing = None
    for idx, rule in enumerate(rules):
        disjuncts = [
            [l for l in conjuncts(d) if l != MTrue] for d in normalize_nnf(rule.match)
        ]
        if rule.action.kind == "accept":
            acc = acc.union(_accept_sources(disjuncts, iface, width, field))
        else:
            newly = _deny_sources(disjuncts, iface, width, field).difference(acc)
            deny = deny.union(newly)
        if failing is None and not acc.difference(deny).issubset(allowed_range):
            failing = idx
    residual = acc.difference(deny)
    certified = residual.issubset(allowed_range)
    return SpoofVerdict(
        iface,
        certified,
        None if certified else failing,
        None if certified else residual.difference(allowed_range),
    )


def sp_certify_all(rules, ipassmt, field="in") -> dict:
    """Pointwise certification for every interface in the assignment; the
    overall verdict is the conjunction.  An empty assignment certifies
    vacuously (with a warning left to the caller)."""
    return {iface: sp_certify(rules, iface, ipassmt, field) for iface in sorted(ipassmt)}
