"""Exact quantity handling shared by the config loaders and report writers.

Every quantity is a :class:`fractions.Fraction`. Data is in bits, rates in
bits/second, and time in seconds internally; time is exchanged with the
outside world in integer picoseconds.
"""

from fractions import Fraction
from numbers import Rational

PS_PER_SECOND = 10**12

UNITS_HEADER = {"data": "bit", "rate": "bit/s", "time": "ps"}


def to_rational(value) -> Fraction:
    """Parse an int, Fraction, ``"num/den"`` string or ``{"num", "den"}`` dict.

    Floats are refused: they would silently bring rounding back in.
    """
    if isinstance(value, bool):
        raise TypeError(f"not a quantity: {value!r}")
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except ValueError:
            raise ValueError(f"not a rational quantity: {value!r}") from None
    if isinstance(value, dict) and "num" in value and "den" in value:
        return Fraction(int(value["num"]), int(value["den"]))
    raise TypeError(f"not an exact quantity: {value!r} (floats are not accepted)")


def ps_to_seconds(value) -> Fraction:
    return to_rational(value) / PS_PER_SECOND


def seconds_to_ps(t: Fraction) -> Fraction:
    return Fraction(t) * PS_PER_SECOND


def rational_json(q: Fraction) -> dict:
    q = Fraction(q)
    return {"num": q.numerator, "den": q.denominator, "decimal": decimal_str(q)}


def decimal_str(q: Fraction, places: int = 6) -> str:
    q = Fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    scaled = round(q * 10**places)
    sign = "-" if scaled < 0 else ""
    whole, frac = divmod(abs(scaled), 10**places)
    return f"{sign}{whole}.{frac:0{places}d}".rstrip("0").rstrip(".")


def fmt_us(t: Fraction) -> str:
    """Render a duration in microseconds, exact-rational annotated if needed."""
    us = Fraction(t) * 10**6
    if us.denominator == 1:
        return f"{us.numerator} us"
    return f"{decimal_str(us, 3)} us ({us.numerator}/{us.denominator})"


def fmt_bits(b: Fraction) -> str:
    b = Fraction(b)
    if b.denominator == 1:
        return f"{b.numerator} bits"
    return f"{decimal_str(b, 3)} bits ({b.numerator}/{b.denominator})"


def fmt_ps(t: Fraction) -> str:
    ps = seconds_to_ps(t)
    if ps.denominator == 1:
        return str(ps.numerator)
    return f"{ps.numerator}/{ps.denominator}"
