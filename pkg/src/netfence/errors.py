"""Exception hierarchy shared by all netfence modules."""


class NetfenceError(Exception):
    """Base class for all errors raised by this package."""


class WidthMismatch(NetfenceError):
    pass


class IllformedCidr(NetfenceError):
    pass


class ParseError(NetfenceError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", col {column}" if column is not None else "") + ")"
        super().__init__(message + where)


class SyntaxError_(ParseError):
    """Syntax error in an input file.  Named with a trailing underscore to
    avoid shadowing the builtin."""


class UnknownAction(ParseError):
    pass


class UndefinedChainTarget(ParseError):
    pass


class DanglingEndpoint(NetfenceError):
    def __init__(self, host):
        self.host = host
        super().__init__(f"edge endpoint {host!r} is not a declared node")


class AttrTypeMismatch(NetfenceError):
    pass


class IllformedTaints(NetfenceError):
    pass


class NoDefault(NetfenceError):
    pass


class UnknownHost(NetfenceError):
    pass


class TooLargeForBruteForce(NetfenceError):
    pass


class PreconditionViolated(NetfenceError):
    pass


class IllformedRuleset(NetfenceError):
    pass


class UnfoldBoundExceeded(IllformedRuleset):
    pass


class GotoUnsupported(IllformedRuleset):
    pass


class UnsupportedResidue(NetfenceError):
    """A primitive survived to simple-firewall translation that the simple
    model cannot express; the abstraction step should have removed it."""


class ZoneSpanningInterfaces(NetfenceError):
    def __init__(self, pairs):
        self.pairs = pairs
        super().__init__(f"overlapping interface ranges: {pairs}")


class MissingFinalRule(NetfenceError):
    pass


class IfaceNotInIpassmt(NetfenceError):
    pass


class UnboundHost(NetfenceError):
    pass
