"""Parsers for iptables-save dumps, interface/IP assignments and routing
tables.

iptables-save grammar subset (line oriented):

    save      ::= line*
    line      ::= comment | '*' tablename | ':' chain policy counters
                | '-A' chain rulespec | '-I' chain [index] rulespec
                | '-P' chain policy | 'COMMIT'
    rulespec  ::= (['!'] primitive)* target
    target    ::= '-j' name | '-g' name

Recognized primitives: -s/-d (with the `a,b` multi-address sugar), -i/-o,
-p, -m tcp/udp/sctp port and flag options, -m multiport, -m state /
-m conntrack state lists, -m iprange.  Anything else is folded verbatim
into one Extra primitive per option group, which the ternary layer later
treats as Unknown.  Only the filter table is interpreted; other tables are
skipped with a warning.
"""

from __future__ import annotations

import logging
import shlex

from . import ruleset as rs
from .errors import SyntaxError_, UnknownAction
from .wordinterval import (
    WordInterval,
    family_width,
    parse_address_set,
    parse_cidr,
)

log = logging.getLogger(__name__)

# targets that are real iptables extensions, not user chains; rejected in
# the filter table rather than treated as chain calls
_EXTENSION_TARGETS = {
    "SNAT", "DNAT", "MASQUERADE", "REDIRECT", "NETMAP", "MARK", "CONNMARK",
    "NFQUEUE", "NFLOG", "TOS", "TTL", "CLASSIFY", "SET", "TRACE", "AUDIT",
    "CHECKSUM", "CT", "DSCP", "ECN", "HL", "LED", "RATEEST", "SECMARK",
    "SYNPROXY", "TCPMSS", "TCPOPTSTRIP", "TEE", "TPROXY", "ULOG",
}

_TOP_LEVEL_FLAGS = {"-m", "-j", "-g", "-i", "-o", "-s", "-d", "-p", "!"}

_TCP_FLAG_ALIASES = {"ALL": frozenset(rs.TCP_FLAG_ORDER), "NONE": frozenset()}


def _parse_flagset(text, lineno):
    if text in _TCP_FLAG_ALIASES:
        return _TCP_FLAG_ALIASES[text]
    flags = []
    for f in text.split(","):
        if f not in rs.TCP_FLAG_ORDER:
            raise SyntaxError_(f"unknown TCP flag {f!r}", lineno)
        flags.append(f)
    return frozenset(flags)


def _parse_port_spec(text, lineno):
    """One port token: '22', 'lo:hi', 'lo:' or ':hi'."""
    try:
        if ":" in text:
            lo, _, hi = text.partition(":")
            lo = int(lo) if lo else 0
            hi = int(hi) if hi else 65535
        else:
            lo = hi = int(text)
    except ValueError:
        raise SyntaxError_(f"bad port {text!r}", lineno) from None
    if not (0 <= lo <= 65535 and 0 <= hi <= 65535 and lo <= hi):
        raise SyntaxError_(f"port range {text!r} out of bounds", lineno)
    return WordInterval.range(lo, hi, 16)


def _parse_multiport_list(text, lineno):
    entries = text.split(",")
    if len(entries) > 15:
        raise SyntaxError_("multiport accepts at most 15 entries", lineno)
    wi = WordInterval.empty(16)
    for entry in entries:
        wi = wi.union(_parse_port_spec(entry, lineno))
    return wi


def _parse_protocol(text, lineno):
    if text in rs.PROTO_NUMBERS:
        return rs.PROTO_NUMBERS[text]
    try:
        num = int(text)
    except ValueError:
        raise SyntaxError_(f"unknown protocol {text!r}", lineno) from None
    if not 0 <= num <= 255:
        raise SyntaxError_(f"protocol number {num} out of range", lineno)
    return num


class _RuleParser:
    """Parses one rulespec token list into (match expr, action, extra_rules).

    The `-s a,b` sugar produces one parsed rule per address; the caller
    receives a list of complete rules.
    """

    def __init__(self, tokens, family, lineno):
        self.tokens = tokens
        self.family = family
        self.lineno = lineno
        self.pos = 0
        self.terms = []          # list of (negated, primitive)
        self.action = None
        self.src_alternatives = None
        self.dst_alternatives = None
        self.proto = None        # last positively matched protocol

    def error(self, message):
        raise SyntaxError_(message, self.lineno)

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self):
        if self.pos >= len(self.tokens):
            self.error("unexpected end of rule")
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def add(self, negated, prim):
        self.terms.append((negated, prim))

    # -- module option handlers -------------------------------------------

    def port_proto(self, module):
        if module in ("tcp", "udp", "sctp"):
            return rs.PROTO_NUMBERS[module]
        if self.proto in (6, 17, 132):
            return self.proto
        self.error("port match requires a tcp/udp/sctp protocol context")

    def parse_module(self, module):
        """Consume options of one -m group; unknown options become Extra."""
        extra_tokens = []
        while True:
            tok = self.peek()
            if tok is None or tok in _TOP_LEVEL_FLAGS:
                break
            if tok == "!":
                break
            if module in ("tcp", "udp", "sctp") and tok in (
                "--sport", "--source-port", "--dport", "--destination-port",
                "--tcp-flags", "--syn",
            ):
                self.next()
                self.parse_port_option(module, tok, negated=False)
                continue
            if module == "multiport" and tok in ("--sports", "--source-ports",
                                                 "--dports", "--destination-ports"):
                self.next()
                ports = _parse_multiport_list(self.next(), self.lineno)
                proto = self.port_proto(module)
                cls = rs.MultiportSrc if tok in ("--sports", "--source-ports") else rs.MultiportDst
                self.add(False, cls(proto, ports))
                continue
            if module in ("state", "conntrack") and tok in ("--state", "--ctstate"):
                self.next()
                states = frozenset(self.next().split(","))
                unknown = states - set(rs.CT_STATES)
                if unknown:
                    self.error(f"unknown conntrack states {sorted(unknown)}")
                self.add(False, rs.CtState(states))
                continue
            if module == "iprange" and tok in ("--src-range", "--dst-range"):
                self.next()
                wi = parse_address_set(self.next(), self.family)
                prim = rs.Src(wi) if tok == "--src-range" else rs.Dst(wi)
                self.add(False, prim)
                continue
            if module == "comment" and tok == "--comment":
                self.next()
                self.next()  # comments carry no match semantics
                continue
            # unknown option (possibly with values): swallow greedily
            self.next()
            extra_tokens.append(tok)
            while (p := self.peek()) is not None and not p.startswith(("-", "!")):
                extra_tokens.append(self.next())
        if extra_tokens or module not in (
            "tcp", "udp", "sctp", "multiport", "state", "conntrack", "iprange", "comment",
        ):
            self.add(False, rs.Extra(" ".join([f"-m {module}"] + extra_tokens)))

    def parse_port_option(self, module, option, negated):
        proto = self.port_proto(module)
        if option == "--syn":
            self.add(negated, rs.TcpFlags(frozenset({"FIN", "SYN", "RST", "ACK"}),
                                          frozenset({"SYN"})))
            return
        if option == "--tcp-flags":
            mask = _parse_flagset(self.next(), self.lineno)
            comp = _parse_flagset(self.next(), self.lineno)
            self.add(negated, rs.TcpFlags(mask, comp))
            return
        ports = _parse_port_spec(self.next(), self.lineno)
        if option in ("--sport", "--source-port"):
            self.add(negated, rs.SrcPorts(proto, ports))
        else:
            self.add(negated, rs.DstPorts(proto, ports))

    def parse_address(self, option, negated):
        value = self.next()
        entries = value.split(",")
        if len(entries) > 1:
            if negated:
                self.error("negation is not allowed with multiple addresses")
            sets = [parse_address_set(e, self.family) for e in entries]
            if option in ("-s", "--source", "--src"):
                self.src_alternatives = sets
            else:
                self.dst_alternatives = sets
            return
        wi = parse_address_set(value, self.family)
        prim = rs.Src(wi) if option in ("-s", "--source", "--src") else rs.Dst(wi)
        self.add(negated, prim)

    def parse_target(self, option):
        name = self.next()
        if option == "-g":
            self.action = rs.goto(name)
            return
        if name == "ACCEPT":
            self.action = rs.ACCEPT
        elif name == "DROP":
            self.action = rs.DROP
        elif name == "REJECT":
            self.action = rs.REJECT
            if self.peek() == "--reject-with":
                self.next(), self.next()
        elif name == "RETURN":
            self.action = rs.RETURN
        elif name in ("LOG", "NFLOG"):
            self.action = rs.LOG
            while (p := self.peek()) is not None and p.startswith("--log"):
                self.next(), self.next()
        elif name in _EXTENSION_TARGETS:
            raise UnknownAction(f"target {name} is not supported in the filter table",
                                self.lineno)
        else:
            self.action = rs.call(name)

    def parse(self):
        while (tok := self.peek()) is not None:
            negated = False
            if tok == "!":
                self.next()
                negated = True
                tok = self.peek()
                if tok is None:
                    self.error("dangling '!'")
            if tok in ("-j", "-g"):
                if negated:
                    self.error("cannot negate a jump")
                self.next()
                self.parse_target(tok)
            elif tok in ("-s", "--source", "--src", "-d", "--destination", "--dst"):
                self.next()
                self.parse_address(tok, negated)
            elif tok in ("-i", "--in-interface"):
                self.next()
                self.add(negated, rs.IIface(self.next()))
            elif tok in ("-o", "--out-interface"):
                self.next()
                self.add(negated, rs.OIface(self.next()))
            elif tok in ("-p", "--protocol"):
                self.next()
                value = self.next()
                if value == "all":
                    if negated:
                        self.error("'! -p all' matches nothing")
                    continue
                number = _parse_protocol(value, self.lineno)
                if not negated:
                    self.proto = number
                self.add(negated, rs.Protocol(number))
            elif tok == "-m":
                self.next()
                if negated:
                    self.error("cannot negate a module load")
                self.parse_module(self.next())
            elif tok in ("--sport", "--source-port", "--dport", "--destination-port",
                         "--tcp-flags", "--syn"):
                # plain iptables syntax without the explicit -m module
                self.next()
                module = rs.PROTO_NAMES.get(self.proto, "")
                self.parse_port_option(module, tok, negated)
            elif tok == "-f":
                self.next()
                self.add(negated, rs.Extra("-f"))
            else:
                # unrecognized top-level option group -> one Extra primitive
                self.next()
                group = [tok]
                while (p := self.peek()) is not None and p not in _TOP_LEVEL_FLAGS \
                        and not p.startswith("--"):
                    group.append(self.next())
                self.add(negated, rs.Extra(" ".join(group)))
        if self.action is None:
            self.action = rs.EMPTY
        return self.build_rules()

    def build_rules(self):
        base = [
            rs.MNot(rs.MPrim(p)) if negated else rs.MPrim(p) for negated, p in self.terms
        ]

        def rule_for(src_wi, dst_wi):
            prefix = []
            if src_wi is not None:
                prefix.append(rs.MPrim(rs.Src(src_wi)))
            if dst_wi is not None:
                prefix.append(rs.MPrim(rs.Dst(dst_wi)))
            return rs.mand(*(prefix + base)), self.action

        if self.src_alternatives is None and self.dst_alternatives is None:
            return [rule_for(None, None)]
        out = []
        for src_wi in self.src_alternatives or [None]:
            for dst_wi in self.dst_alternatives or [None]:
                out.append(rule_for(src_wi, dst_wi))
        return out


def _tokenize(line, lineno):
    try:
        return shlex.split(line, comments=False, posix=True)
    except ValueError as exc:
        raise SyntaxError_(f"tokenizer: {exc}", lineno) from None


def parse_save(text, family="v4") -> rs.Table:
    """Parse `iptables-save` output; only the filter table is interpreted."""
    chains: dict = {}
    policies: dict = {}
    current_table = None
    saw_filter = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("*"):
            current_table = line[1:].strip()
            if current_table != "filter":
                log.warning("ignoring table %r (only filter is analyzed)", current_table)
            else:
                saw_filter = True
            continue
        if line == "COMMIT":
            current_table = None
            continue
        if current_table is not None and current_table != "filter":
            continue
        tokens = _tokenize(line, lineno)
        if not tokens:
            continue
        head = tokens[0]
        if head.startswith(":"):
            name = head[1:]
            if len(tokens) < 2:
                raise SyntaxError_("chain header needs a policy", lineno)
            policy = tokens[1]
            chains.setdefault(name, [])
            if policy == "ACCEPT":
                policies[name] = rs.ACCEPT
            elif policy == "DROP":
                policies[name] = rs.DROP
            elif policy != "-":
                raise SyntaxError_(f"unsupported chain policy {policy!r}", lineno)
            continue
        if head == "-P":
            if len(tokens) != 3 or tokens[2] not in ("ACCEPT", "DROP"):
                raise SyntaxError_("bad -P line", lineno)
            chains.setdefault(tokens[1], [])
            policies[tokens[1]] = rs.ACCEPT if tokens[2] == "ACCEPT" else rs.DROP
            continue
        if head in ("-A", "-I"):
            if len(tokens) < 2:
                raise SyntaxError_(f"{head} needs a chain name", lineno)
            chain = tokens[1]
            rest = tokens[2:]
            index = 0
            if head == "-I":
                index = 1
                if rest and rest[0].isdigit():
                    index = int(rest[0])
                    rest = rest[1:]
            parsed = _RuleParser(rest, family, lineno).parse()
            rules = chains.setdefault(chain, [])
            new = [rs.Rule(m, a, raw=line) for m, a in parsed]
            if head == "-A":
                rules.extend(new)
            else:
                rules[index - 1:index - 1] = new
            continue
        if head in ("-N", "--new-chain"):
            chains.setdefault(tokens[1], [])
            continue
        raise SyntaxError_(f"unsupported directive {head!r}", lineno)
    if not saw_filter and not chains:
        raise SyntaxError_("no filter table found")
    table = rs.Table(chains, policies, family)
    table.validate()
    return table


def parse_ipassmt(text, family="v4") -> dict:
    """Interface/IP assignment file: one `name = [entries]` per line, where
    `all_but_those_ips` before the list complements the union."""
    width = family_width(family)
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        name, eq, rhs = line.partition("=")
        if not eq:
            raise SyntaxError_("expected 'iface = [ranges]'", lineno)
        name = name.strip()
        rhs = rhs.strip()
        complement = False
        if rhs.startswith("all_but_those_ips"):
            complement = True
            rhs = rhs[len("all_but_those_ips"):].strip()
        if not (rhs.startswith("[") and rhs.endswith("]")):
            raise SyntaxError_("expected a [list] of ranges", lineno)
        body = rhs[1:-1].strip()
        wi = WordInterval.empty(width)
        if body:
            for entry in body.split(","):
                wi = wi.union(parse_address_set(entry, family))
        if complement:
            wi = wi.complement()
        out[name] = wi
    return out


def parse_routing(text, family="v4") -> list:
    """Routing table lines: '<cidr> [via ip] dev <iface>' plus an optional
    'default [via ip] dev <iface>'.  Returns [(Cidr, iface)] in file order;
    longest-prefix-match semantics are applied by the consumer."""
    routes = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if tokens[0] == "default":
            cidr = parse_cidr("::/0" if family == "v6" else "0.0.0.0/0", family)
        else:
            cidr = parse_cidr(tokens[0], family)
        if "dev" not in tokens:
            raise SyntaxError_("route line is missing 'dev <iface>'", lineno)
        iface = tokens[tokens.index("dev") + 1]
        routes.append((cidr, iface))
    return routes
