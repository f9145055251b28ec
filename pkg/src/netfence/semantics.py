"""Executable firewall semantics and the ruleset transformations built on it.

The big-step evaluator serves as test oracle for everything else: chain
unfolding flattens Call/Return/Goto control flow into a plain rule list,
the ternary embedding abstracts match conditions the caller does not
understand, and the closure step resolves those Unknowns toward accept
(upper closure) or deny (lower closure).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

from . import ruleset as rs
from .errors import GotoUnsupported, IllformedRuleset, UnfoldBoundExceeded
from .ruleset import (
    MAnd,
    MNot,
    MPrim,
    MTrue,
    MNotTrue,
    MatchExpr,
    Rule,
    Table,
    mand,
    match_iface,
    opt_match,
)

ALLOW = "allow"
DENY = "deny"
UNDECIDED = "undecided"

TRUE = "true"
FALSE = "false"
UNKNOWN = "unknown"

UNFOLD_BOUND = 10_000

SYN_MASK = frozenset({"FIN", "SYN", "RST", "ACK"})
SYN_COMP = frozenset({"SYN"})


@dataclass(frozen=True)
class Packet:
    """An immutable packet as seen by the filter table; conntrack state is
    modeled as just another header field."""

    iiface: str = "eth0"
    oiface: str = "eth0"
    src: int = 0
    dst: int = 0
    protocol: int = 6
    sport: int = 10000
    dport: int = 80
    tcp_flags: frozenset = frozenset({"SYN"})
    ctstate: str = "NEW"

    def with_(self, **kwargs):
        return replace(self, **kwargs)


_PRIM_MATCHERS = {
    rs.Src: lambda prim, p: p.src in prim.addrs,
    rs.Dst: lambda prim, p: p.dst in prim.addrs,
    rs.IIface: lambda prim, p: match_iface(prim.name, p.iiface),
    rs.OIface: lambda prim, p: match_iface(prim.name, p.oiface),
    rs.Protocol: lambda prim, p: p.protocol == prim.number,
    rs.SrcPorts: lambda prim, p: p.protocol == prim.proto and p.sport in prim.ports,
    rs.MultiportSrc: lambda prim, p: p.protocol == prim.proto and p.sport in prim.ports,
    rs.DstPorts: lambda prim, p: p.protocol == prim.proto and p.dport in prim.ports,
    rs.MultiportDst: lambda prim, p: p.protocol == prim.proto and p.dport in prim.ports,
    rs.CtState: lambda prim, p: p.ctstate in prim.states,
    rs.TcpFlags: lambda prim, p: (p.tcp_flags & prim.mask) == prim.comp,
}


def match_primitive(prim, p: Packet) -> bool:
    """The supported exact matcher; Extra has no exact semantics and must
    be handled by the caller (oracle or ternary embedding)."""
    try:
        fn = _PRIM_MATCHERS[type(prim)]
    except KeyError:
        raise LookupError(f"no exact semantics for {prim!r}") from None
    return fn(prim, p)


def default_known(prim) -> bool:
    """Primitives the built-in matcher understands (everything but Extra)."""
    return not isinstance(prim, rs.Extra)


def constant_oracle(value: bool) -> Callable:
    def oracle(extra_text, packet):
        return value

    return oracle


def bool_matcher(oracle=None):
    """Exact Boolean matcher; Extra primitives are resolved by the given
    oracle (default: never match), making the 'magic oracle' concrete."""
    oracle = oracle or constant_oracle(False)

    def matcher(m: MatchExpr, p: Packet) -> bool:
        if m == MTrue:
            return True
        if isinstance(m, MPrim):
            if isinstance(m.prim, rs.Extra):
                return bool(oracle(m.prim.text, p))
            return match_primitive(m.prim, p)
        if isinstance(m, MNot):
            return not matcher(m.inner, p)
        return matcher(m.left, p) and matcher(m.right, p)

    return matcher


# -- big-step evaluation ------------------------------------------------------


def _check_calls(table: Table, start_chain: str):
    """Static sanity: all targets defined, call graph acyclic."""
    table.validate()
    if start_chain not in table.chains:
        raise IllformedRuleset(f"start chain {start_chain!r} does not exist")
    visiting, done = set(), set()

    def visit(chain):
        if chain in done:
            return
        if chain in visiting:
            raise IllformedRuleset(f"calling loop through chain {chain!r}")
        visiting.add(chain)
        for rule in table.chains[chain]:
            if rule.action.kind in ("call", "goto"):
                visit(rule.action.chain)
        visiting.remove(chain)
        done.add(chain)

    visit(start_chain)


def bigstep_evaluator(table: Table, start_chain: str, matcher=None, trace=None):
    """Build a packet -> state evaluator with the static checks done once;
    use this when evaluating many packets against the same ruleset."""
    _check_calls(table, start_chain)
    policy = table.policies.get(start_chain)
    if policy is None:
        raise IllformedRuleset(f"chain {start_chain!r} has no default policy")
    matcher = matcher or bool_matcher()
    default_state = ALLOW if policy == rs.ACCEPT else DENY

    def run_chain(name, rules, packet):
        """Returns ('decision', state) | ('fallthrough',) | ('return',)."""
        for idx, rule in enumerate(rules):
            matched = matcher(rule.match, packet)
            if trace is not None:
                trace.append(f"{name}:{idx} {'match' if matched else 'skip'} {rule.action.kind}")
            if not matched:
                continue
            kind = rule.action.kind
            if kind == "accept":
                return ("decision", ALLOW)
            if kind in ("drop", "reject"):
                return ("decision", DENY)
            if kind in ("log", "empty"):
                continue
            if kind == "return":
                return ("return",)
            if kind == "call":
                sub = run_chain(rule.action.chain, table.chains[rule.action.chain], packet)
                if sub[0] == "decision":
                    return sub
                continue  # a Return in the called chain resumes here
            if kind == "goto":
                sub = run_chain(rule.action.chain, table.chains[rule.action.chain], packet)
                if sub[0] == "decision":
                    return sub
                return ("fallthrough",)  # goto never comes back
            raise IllformedRuleset(f"action {kind!r} not supported by the semantics")
        return ("fallthrough",)

    def evaluate(packet: Packet) -> str:
        result = run_chain(start_chain, table.chains[start_chain], packet)
        if result[0] == "decision":
            return result[1]
        return default_state

    return evaluate


def bigstep_eval(
    table: Table,
    start_chain: str,
    packet: Packet,
    matcher=None,
    trace: Optional[list] = None,
) -> str:
    """Run a packet through a chain of the filter table.

    Evaluation is wrapped as [(True, Call start), (True, default-policy)],
    so a Return on top level of the start chain falls through to the
    default policy.  Deterministic; always returns ALLOW or DENY.
    """
    return bigstep_evaluator(table, start_chain, matcher, trace)(packet)


# -- custom chain unfolding ---------------------------------------------------


def add_match(m: MatchExpr, rules):
    """Conjoin m in front of every rule's match."""
    return [Rule(mand(m, r.match), r.action, r.raw) for r in rules]


def process_return(rules):
    """pr: Return rules vanish; later rules require the Return not to match."""
    out = []
    prefix = []  # negated matches of the Returns seen so far
    for r in rules:
        if r.action.kind == "return":
            prefix.append(MNot(r.match))
        else:
            out.append(Rule(mand(*prefix, r.match), r.action, r.raw))
    return out


def process_call(rules, chains):
    """pc: unfold one level of Call."""
    out = []
    for r in rules:
        if r.action.kind == "call":
            out.extend(add_match(r.match, process_return(chains[r.action.chain])))
        else:
            out.append(r)
    return out


def _chain_decides_unconditionally(rules) -> bool:
    """Sufficient condition for the Goto rewrite: the chain never falls
    through or returns (no Return/Call/Goto, final rule is an
    unconditional decision)."""
    for r in rules:
        if r.action.kind in ("return", "call", "goto"):
            return False
    if not rules:
        return False
    last = rules[-1]
    return last.match == MTrue and last.action.kind in ("accept", "drop", "reject")


def rewrite_goto(table: Table) -> Table:
    """(m, Goto c) :: rest becomes (m, Call c) :: add-match(not m, rest);
    only accepted when the rewrite is provably behavior-preserving."""
    new_chains = {}
    for name, rules in table.chains.items():
        out = []
        for i, r in enumerate(rules):
            if r.action.kind != "goto":
                out.append(r)
                continue
            rest = rules[i + 1:]
            if rest and not _chain_decides_unconditionally(table.chains[r.action.chain]):
                raise GotoUnsupported(
                    f"goto {r.action.chain!r} in chain {name!r} is followed by rules and"
                    " the target chain may fall through"
                )
            out.append(Rule(r.match, rs.call(r.action.chain), r.raw))
            out.extend(add_match(MNot(r.match), rest))
            break  # the rest was already appended (rewritten)
        new_chains[name] = out
    table2 = Table(new_chains, dict(table.policies), table.family)
    if any(r.action.kind == "goto" for rules in new_chains.values() for r in rules):
        return rewrite_goto(table2)
    return table2


def _truncate_after_final(rules):
    out = []
    for r in rules:
        out.append(r)
        if r.match == MTrue and r.action.kind in ("accept", "drop"):
            break
    return out


def optimize_rules(rules):
    """Simplify matches, drop never-matching and Log/Empty rules, rewrite
    Reject to Drop, and cut everything shadowed by a final catch-all."""
    out = []
    for r in rules:
        m = opt_match(r.match)
        if m == MNotTrue:
            continue
        action = r.action
        if action.kind == "reject":
            action = rs.DROP
        if action.kind in ("log", "empty"):
            continue
        out.append(Rule(m, action, r.raw))
    return _truncate_after_final(out)


def unfold(table: Table, start_chain: str) -> list:
    """Flatten a chain into an equivalent Accept/Drop rule list.

    The evaluation wrapper [(True, Call start), (True, default-policy)] is
    materialized, calls are unfolded to a fixpoint (bounded; exceeding the
    bound mirrors the kernel's rejection of looping rulesets), Rejects
    become Drops, Log/Empty disappear.
    """
    if start_chain not in table.chains:
        raise IllformedRuleset(f"start chain {start_chain!r} does not exist")
    policy = table.policies.get(start_chain)
    if policy is None or policy.kind not in ("accept", "drop"):
        raise IllformedRuleset(f"chain {start_chain!r} has no Accept/Drop default policy")
    table = rewrite_goto(table)
    rules = [Rule(MTrue, rs.call(start_chain)), Rule(MTrue, policy)]
    iterations = 0
    while any(r.action.kind == "call" for r in rules):
        rules = process_call(rules, table.chains)
        iterations += 1
        if iterations > UNFOLD_BOUND:
            raise UnfoldBoundExceeded(f"no fixpoint after {UNFOLD_BOUND} unfolding steps")
    rules = optimize_rules(rules)
    for r in rules:
        if r.action.kind not in ("accept", "drop"):
            raise IllformedRuleset(f"unfolding left a {r.action.kind} rule")
    return rules


def simple_list_eval(rules, packet: Packet, matcher=None) -> str:
    """First-match evaluation of an unfolded rule list (with default None)."""
    matcher = matcher or bool_matcher()
    for r in rules:
        if matcher(r.match, packet):
            if r.action.kind == "accept":
                return ALLOW
            if r.action.kind in ("drop", "reject"):
                return DENY
            raise IllformedRuleset(f"simple list cannot contain {r.action.kind!r}")
    return UNDECIDED


# -- ternary embedding ---------------------------------------------------------


def _ternary_not(v):
    if v == UNKNOWN:
        return UNKNOWN
    return FALSE if v == TRUE else TRUE


def _ternary_and(a, b):
    if a == FALSE or b == FALSE:
        return FALSE
    if a == UNKNOWN or b == UNKNOWN:
        return UNKNOWN
    return TRUE


def ternary_eval(m: MatchExpr, p: Packet, known=default_known) -> str:
    """Kleene three-valued evaluation: primitives the matcher does not
    understand yield Unknown."""
    if m == MTrue:
        return TRUE
    if isinstance(m, MPrim):
        if not known(m.prim):
            return UNKNOWN
        return TRUE if match_primitive(m.prim, p) else FALSE
    if isinstance(m, MNot):
        return _ternary_not(ternary_eval(m.inner, p, known))
    left = ternary_eval(m.left, p, known)
    if left == FALSE:
        return FALSE
    return _ternary_and(left, ternary_eval(m.right, p, known))


def ternary_list_eval(rules, packet, tactic, known=default_known) -> str:
    """Evaluate an Accept/Drop list under an in-doubt tactic."""
    for r in rules:
        v = ternary_eval(r.match, packet, known)
        if v == UNKNOWN:
            v = TRUE if (r.action.kind == "accept") == (tactic == "in_doubt_allow") else FALSE
        if v == TRUE:
            return ALLOW if r.action.kind == "accept" else DENY
    return UNDECIDED


# -- closures: removing unknowns ----------------------------------------------


def _pu(m: MatchExpr, action_kind: str, tactic: str, known) -> MatchExpr:
    """Rewrite unknown subexpressions to True / not-True per the tactic."""

    def for_unknown():
        matches = (action_kind == "accept") == (tactic == "in_doubt_allow")
        return MTrue if matches else MNotTrue

    if m == MTrue:
        return MTrue
    if isinstance(m, MPrim):
        return m if known(m.prim) else for_unknown()
    if isinstance(m, MAnd):
        return mand(_pu(m.left, action_kind, tactic, known),
                    _pu(m.right, action_kind, tactic, known))
    # m is a negation
    inner = m.inner
    if inner == MTrue:
        return MNotTrue
    if isinstance(inner, MPrim):
        return m if known(inner.prim) else for_unknown()
    if isinstance(inner, MNot):
        return _pu(inner.inner, action_kind, tactic, known)
    # negated conjunction: the specialized De Morgan case
    a = _pu(MNot(inner.left), action_kind, tactic, known)
    b = _pu(MNot(inner.right), action_kind, tactic, known)
    if a == MTrue or b == MTrue:
        return MTrue
    if a == MNotTrue:
        return b
    if b == MNotTrue:
        return a
    return MNot(MAnd(MNot(a), MNot(b)))


def closure(rules, tactic="in_doubt_allow", known=default_known) -> list:
    """Remove every unknown primitive from an Accept/Drop rule list.

    in_doubt_allow yields the upper closure (accepts a superset of the
    exact semantics), in_doubt_deny the lower closure (a subset).
    """
    if tactic not in ("in_doubt_allow", "in_doubt_deny"):
        raise ValueError(f"unknown tactic {tactic!r}")
    out = []
    for r in rules:
        if r.action.kind not in ("accept", "drop"):
            raise IllformedRuleset("closure needs an unfolded Accept/Drop list")
        out.append(Rule(_pu(r.match, r.action.kind, tactic, known), r.action, r.raw))
    return optimize_rules(out)


# -- NNF normalization ---------------------------------------------------------


def _complement_ports(prim):
    comp = prim.ports.complement()
    return type(prim)(prim.proto, comp)


def normalize_nnf(m: MatchExpr) -> list:
    """Split a match expression into a list of NNF conjunctions whose
    disjunction is equivalent to the input.

    Negated port primitives expand protocol-aware: not (proto ports)
    becomes [not proto, proto and complement-ports].
    """
    if m == MTrue:
        return [MTrue]
    if isinstance(m, MPrim):
        return [m]
    if isinstance(m, MAnd):
        out = []
        for x in normalize_nnf(m.left):
            for y in normalize_nnf(m.right):
                out.append(mand(x, y))
        return _dedup(out)
    inner = m.inner
    if inner == MTrue:
        return []
    if isinstance(inner, MNot):
        return normalize_nnf(inner.inner)
    if isinstance(inner, MAnd):
        return _dedup(normalize_nnf(MNot(inner.left)) + normalize_nnf(MNot(inner.right)))
    # negated primitive
    prim = inner.prim
    if isinstance(prim, rs.PORT_PRIMITIVES):
        return [
            MNot(MPrim(rs.Protocol(prim.proto))),
            mand(MPrim(rs.Protocol(prim.proto)), MPrim(_complement_ports(prim))),
        ]
    return [m]


def _dedup(items):
    seen = []
    for x in items:
        if x not in seen:
            seen.append(x)
    return seen


def normalize_rules(rules) -> list:
    """NNF-normalize a rule list; one input rule may become several."""
    out = []
    for r in rules:
        for m in normalize_nnf(r.match):
            out.append(Rule(m, r.action, r.raw))
    return optimize_rules(out)


# -- conntrack state specialization --------------------------------------------


def _conj_flags(a: rs.TcpFlags, b: rs.TcpFlags):
    """Conjunction of two flag matches: a single match or None (empty)."""
    if not (a.comp <= a.mask and b.comp <= b.mask):
        return None
    if a.mask & b.mask & a.comp != a.mask & b.mask & b.comp:
        return None
    return rs.TcpFlags(a.mask | b.mask, a.comp | b.comp)


_SYN = rs.TcpFlags(SYN_MASK, SYN_COMP)


def ctstate_specialize(rules, assumed="NEW") -> list:
    """Pre-evaluate conntrack state matches for packets in a fixed state.

    For NEW, the --syn assumption is applied to TCP flag matches: matches
    equal to --syn vanish, contradictory ones kill their rule, the rest
    keep the conjunction for later abstraction.
    """
    def rewrite(prim):
        if isinstance(prim, rs.CtState):
            return MTrue if assumed in prim.states else MNotTrue
        if assumed == "NEW" and isinstance(prim, rs.TcpFlags):
            merged = _conj_flags(prim, _SYN)
            if merged is None:
                return MNotTrue
            if merged == _SYN:
                return MTrue
            return MPrim(merged)
        return MPrim(prim)

    out = []
    for r in rules:
        m = _rewrite_positive(r.match, rewrite)
        out.append(Rule(m, r.action, r.raw))
    return optimize_rules(out)


def _rewrite_positive(m: MatchExpr, fn):
    """Apply fn to primitives in positive position; under a negation only
    state primitives are rewritten (flag assumptions are not sound there)."""
    if m == MTrue:
        return m
    if isinstance(m, MPrim):
        return fn(m.prim)
    if isinstance(m, MAnd):
        return mand(_rewrite_positive(m.left, fn), _rewrite_positive(m.right, fn))
    # negation: only constant-fold state lookups
    def neg_fn(prim):
        if isinstance(prim, rs.CtState):
            return fn(prim)
        return MPrim(prim)

    inner = _rewrite_positive(m.inner, neg_fn)
    return opt_match(MNot(inner))
