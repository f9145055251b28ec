"""Set algebra over fixed-width machine words.

One WordInterval is a union of inclusive (start, end) ranges over unsigned
integers of a fixed bit width.  The same type serves IPv4 addresses
(32 bit), IPv6 addresses (128 bit) and L4 ports (16 bit); the width is a
runtime attribute and binary operations refuse to mix widths.

Values are canonicalized on construction: parts are sorted, non-empty,
non-overlapping and non-adjacent, so structural equality is set equality.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass

from .errors import IllformedCidr, ParseError, WidthMismatch


def _normalize(parts):
    parts = sorted((lo, hi) for lo, hi in parts if lo <= hi)
    merged = []
    for lo, hi in parts:
        if merged and lo <= merged[-1][1] + 1:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return tuple(merged)


class WordInterval:
    """Canonical union of inclusive word ranges."""

    __slots__ = ("width", "parts")

    def __init__(self, parts, width):
        self.width = width
        maxval = (1 << width) - 1
        for lo, hi in parts:
            if lo < 0 or hi > maxval:
                raise ValueError(f"range {lo}..{hi} out of width-{width} bounds")
        self.parts = _normalize(parts)

    # -- constructors ------------------------------------------------------

    @classmethod
    def empty(cls, width):
        return cls((), width)

    @classmethod
    def universe(cls, width):
        return cls(((0, (1 << width) - 1),), width)

    @classmethod
    def single(cls, value, width):
        return cls(((value, value),), width)

    @classmethod
    def range(cls, lo, hi, width):
        return cls(((lo, hi),), width)

    # -- set operations ----------------------------------------------------

    def _check(self, other):
        if self.width != other.width:
            raise WidthMismatch(f"width {self.width} vs {other.width}")

    def union(self, other):
        self._check(other)
        return WordInterval(self.parts + other.parts, self.width)

    def intersect(self, other):
        self._check(other)
        out = []
        for alo, ahi in self.parts:
            for blo, bhi in other.parts:
                lo, hi = max(alo, blo), min(ahi, bhi)
                if lo <= hi:
                    out.append((lo, hi))
        return WordInterval(out, self.width)

    def difference(self, other):
        self._check(other)
        return self.intersect(other.complement())

    def complement(self):
        out = []
        cursor = 0
        for lo, hi in self.parts:
            if lo > cursor:
                out.append((cursor, lo - 1))
            cursor = hi + 1
        maxval = (1 << self.width) - 1
        if cursor <= maxval:
            out.append((cursor, maxval))
        return WordInterval(out, self.width)

    def issubset(self, other):
        return self.difference(other).is_empty()

    def isdisjoint(self, other):
        return self.intersect(other).is_empty()

    def is_empty(self):
        return not self.parts

    def is_universe(self):
        return self.parts == ((0, (1 << self.width) - 1),)

    def __contains__(self, value):
        return any(lo <= value <= hi for lo, hi in self.parts)

    def __eq__(self, other):
        return (
            isinstance(other, WordInterval)
            and self.width == other.width
            and self.parts == other.parts
        )

    def __hash__(self):
        return hash((self.width, self.parts))

    def __repr__(self):
        return f"WordInterval({list(self.parts)}, width={self.width})"

    def min(self):
        if not self.parts:
            raise ValueError("empty interval has no minimum")
        return self.parts[0][0]

    def size(self):
        return sum(hi - lo + 1 for lo, hi in self.parts)

    # -- CIDR conversion ---------------------------------------------------

    def to_cidrs(self):
        """Split into a covering, disjoint list of well-formed CIDR blocks.

        Deterministic: repeatedly take the lowest remaining element and
        split off the widest valid prefix that still fits.
        """
        out = []
        remaining = self
        while not remaining.is_empty():
            base = remaining.min()
            for plen in range(0, self.width + 1):
                low = (1 << (self.width - plen)) - 1
                if base & low:
                    continue
                block = WordInterval.range(base, base | low, self.width)
                if block.issubset(remaining):
                    out.append(Cidr(base, plen, self.width))
                    remaining = remaining.difference(block)
                    break
        return out


@dataclass(frozen=True)
class Cidr:
    """A single prefix block base/prefix over width-bit words."""

    base: int
    prefix: int
    width: int

    def __post_init__(self):
        if not 0 <= self.prefix <= self.width:
            raise IllformedCidr(f"prefix /{self.prefix} out of range for width {self.width}")
        if self.base & self.hostmask():
            raise IllformedCidr(f"{self.base}/{self.prefix}: bits set after the prefix")

    def hostmask(self):
        return (1 << (self.width - self.prefix)) - 1

    def interval(self):
        return WordInterval.range(self.base, self.base | self.hostmask(), self.width)

    def __str__(self):
        if self.width == 32:
            return f"{ip_format(self.base, 'v4')}/{self.prefix}"
        if self.width == 128:
            return f"{ip_format(self.base, 'v6')}/{self.prefix}"
        return f"{self.base}/{self.prefix}"


def wi_from_cidr(cidr: Cidr) -> WordInterval:
    return cidr.interval()


def wi_split_cidr(wi: WordInterval):
    return wi.to_cidrs()


# -- address text formats ---------------------------------------------------

_FAMILY_WIDTH = {"v4": 32, "v6": 128}


def family_width(family):
    try:
        return _FAMILY_WIDTH[family]
    except KeyError:
        raise ValueError(f"unknown address family {family!r}") from None


def ip_format(value, family="v4"):
    """Render an address word as text; v6 follows RFC 5952."""
    if family == "v4":
        return str(ipaddress.IPv4Address(value))
    if family == "v6":
        return str(ipaddress.IPv6Address(value))
    raise ValueError(f"unknown address family {family!r}")


def ip_parse(text, family="v4"):
    text = text.strip()
    try:
        if family == "v4":
            return int(ipaddress.IPv4Address(text))
        if family == "v6":
            return int(ipaddress.IPv6Address(text))
    except ipaddress.AddressValueError as exc:
        raise ParseError(f"bad {family} address {text!r}: {exc}") from None
    raise ValueError(f"unknown address family {family!r}")


def parse_cidr(text, family="v4"):
    """Parse 'addr' or 'addr/n' into a Cidr; plain addresses get a full prefix."""
    width = family_width(family)
    text = text.strip()
    if "/" in text:
        addr, _, plen = text.partition("/")
        try:
            plen = int(plen)
        except ValueError:
            raise ParseError(f"bad prefix length in {text!r}") from None
    else:
        addr, plen = text, width
    base = ip_parse(addr, family)
    if not 0 <= plen <= width:
        raise ParseError(f"prefix /{plen} out of range in {text!r}")
    base &= ~((1 << (width - plen)) - 1) & ((1 << width) - 1)
    return Cidr(base, plen, width)


def parse_address_set(text, family="v4"):
    """Parse one address token: 'a', 'a/n' or the iprange-style 'lo-hi'."""
    text = text.strip()
    width = family_width(family)
    if "-" in text and "/" not in text:
        lo, _, hi = text.partition("-")
        lo_v, hi_v = ip_parse(lo, family), ip_parse(hi, family)
        if lo_v > hi_v:
            raise ParseError(f"descending range {text!r}")
        return WordInterval.range(lo_v, hi_v, width)
    return parse_cidr(text, family).interval()


def format_interval(wi, family="v4"):
    """Human-readable union form used in figures: {lo .. hi} u {ip} ..."""
    chunks = []
    for lo, hi in wi.parts:
        if lo == hi:
            chunks.append("{%s}" % ip_format(lo, family))
        else:
            chunks.append("{%s .. %s}" % (ip_format(lo, family), ip_format(hi, family)))
    return " ∪ ".join(chunks) if chunks else "{}"
