"""Exact rational parsing and formatting.

Rationals are `fractions.Fraction` throughout: arbitrary-precision,
stored in lowest terms with a positive denominator.  The wire format is
"p/q", shortened to "p" when the denominator is 1.
"""

from __future__ import annotations

from fractions import Fraction


def parse_rational(text: str) -> Fraction:
    """Parse "p/q" or "p" into a Fraction.

    Accepts optional surrounding whitespace and a leading sign on the
    numerator.  Decimal notation is rejected: the formats must round-trip
    exactly.
    """
    s = str(text).strip()
    if "." in s:
        raise ValueError(f"decimal notation not allowed for rationals: {text!r}")
    if "/" in s:
        num, den = s.split("/", 1)
        return Fraction(int(num), int(den))
    return Fraction(int(s))


def format_rational(value) -> str:
    """Format a rational as "p/q", or "p" when the denominator is 1."""
    f = Fraction(value)
    if f.denominator == 1:
        return str(f.numerator)
    return f"{f.numerator}/{f.denominator}"


def parse_vector(text: str) -> tuple[Fraction, ...]:
    """Parse a comma-separated rational vector such as "0,9" or "99/10,99/10"."""
    parts = [p for p in str(text).split(",") if p.strip() != ""]
    if not parts:
        raise ValueError(f"empty rational vector: {text!r}")
    return tuple(parse_rational(p) for p in parts)


def format_vector(values) -> str:
    return ",".join(format_rational(v) for v in values)
