"""Closed-form min-plus calculus on the handful of curve shapes we need.

Curves are immutable tagged shapes rather than general piecewise-linear
functions, which keeps every deviation analytic and exact:

* :class:`TokenBucket`     ``r*t + b``                      (arrival curve)
* :class:`RateLatency`     ``R*max(t - T, 0)``              (service curve)
* :class:`Impulse`         ``0`` up to ``D``, ``+inf`` after (service curve)
* :class:`CappedArrival`   ``min(c*t + L, r*t + b)``        (arrival curve)

All results are :class:`fractions.Fraction`. Units are bits, bits/s, seconds.
"""

from dataclasses import dataclass
from fractions import Fraction

from .units import to_rational


class UnboundedError(ArithmeticError):
    """Raised when a deviation is infinite (service rate below arrival rate)."""


class _Infinity:
    """The ``+inf`` value of an impulse curve. Compares above every number."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("INFINITY")

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True


INFINITY = _Infinity()


def _q(x) -> Fraction:
    return to_rational(x)


@dataclass(frozen=True)
class TokenBucket:
    rate: Fraction
    burst: Fraction

    def __post_init__(self):
        object.__setattr__(self, "rate", _q(self.rate))
        object.__setattr__(self, "burst", _q(self.burst))
        if self.rate < 0 or self.burst < 0:
            raise ValueError(f"token bucket needs rate >= 0 and burst >= 0, got {self}")

    def __add__(self, other: "TokenBucket") -> "TokenBucket":
        return TokenBucket(self.rate + other.rate, self.burst + other.burst)


@dataclass(frozen=True)
class RateLatency:
    rate: Fraction
    latency: Fraction

    def __post_init__(self):
        object.__setattr__(self, "rate", _q(self.rate))
        object.__setattr__(self, "latency", _q(self.latency))
        if self.rate <= 0 or self.latency < 0:
            raise ValueError(f"rate-latency curve needs R > 0 and T >= 0, got {self}")


@dataclass(frozen=True)
class Impulse:
    delay: Fraction

    def __post_init__(self):
        object.__setattr__(self, "delay", _q(self.delay))
        if self.delay < 0:
            raise ValueError(f"impulse delay must be >= 0, got {self.delay}")


@dataclass(frozen=True)
class CappedArrival:
    """``min(line_rate*t + line_offset, bucket(t))``, e.g. a shaped aggregate
    arriving over a link of finite capacity."""

    line_rate: Fraction
    line_offset: Fraction
    bucket: TokenBucket

    def __post_init__(self):
        object.__setattr__(self, "line_rate", _q(self.line_rate))
        object.__setattr__(self, "line_offset", _q(self.line_offset))
        if self.line_offset < 0:
            raise ValueError("line offset must be >= 0")
        if self.line_rate <= self.bucket.rate:
            raise ValueError(
                "line rate must exceed the bucket rate, otherwise the minimum is the line alone"
            )

    @property
    def rate(self) -> Fraction:
        return self.bucket.rate

    def crossing(self) -> Fraction:
        """Time at which the bucket branch becomes the smaller one (0 if it
        already is at t = 0)."""
        gap = self.bucket.burst - self.line_offset
        if gap <= 0:
            return Fraction(0)
        return gap / (self.line_rate - self.bucket.rate)


def evaluate(curve, t):
    t = _q(t)
    if t < 0:
        raise ValueError(f"curves are defined for t >= 0, got {t}")
    if isinstance(curve, TokenBucket):
        return curve.rate * t + curve.burst
    if isinstance(curve, RateLatency):
        return curve.rate * max(t - curve.latency, Fraction(0))
    if isinstance(curve, Impulse):
        return Fraction(0) if t <= curve.delay else INFINITY
    if isinstance(curve, CappedArrival):
        return min(curve.line_rate * t + curve.line_offset, evaluate(curve.bucket, t))
    raise TypeError(f"unknown curve {curve!r}")


def _check_stable(arrival, service: RateLatency):
    if service.rate < arrival.rate:
        raise UnboundedError(
            f"service rate {service.rate} is below the arrival rate {arrival.rate}"
        )


def delay_bound(arrival, service: RateLatency) -> Fraction:
    """Horizontal deviation between an arrival curve and a rate-latency curve."""
    if not isinstance(service, RateLatency):
        raise TypeError("delay_bound expects a RateLatency service curve")
    _check_stable(arrival, service)
    if isinstance(arrival, TokenBucket):
        return service.latency + arrival.burst / service.rate
    if isinstance(arrival, CappedArrival):
        # T + alpha(t)/R - t is maximal at t = 0 or at the kink of alpha.
        candidates = [Fraction(0), arrival.crossing()]
        return max(service.latency + evaluate(arrival, t) / service.rate - t for t in candidates)
    raise TypeError(f"unsupported arrival curve {arrival!r}")


def backlog_bound(arrival, service) -> Fraction:
    """Vertical deviation ``sup_{s>=0} alpha(s) - beta(s)``."""
    if isinstance(service, Impulse):
        # beta is +inf after D, so the sup is attained at s = D.
        if not isinstance(arrival, (TokenBucket, CappedArrival)):
            raise TypeError(f"unsupported arrival curve {arrival!r}")
        return evaluate(arrival, service.delay)
    if not isinstance(service, RateLatency):
        raise TypeError(f"unsupported service curve {service!r}")
    _check_stable(arrival, service)
    if isinstance(arrival, TokenBucket):
        return arrival.burst + arrival.rate * service.latency
    if isinstance(arrival, CappedArrival):
        candidates = [service.latency, max(service.latency, arrival.crossing())]
        return max(evaluate(arrival, t) - evaluate(service, t) for t in candidates)
    raise TypeError(f"unsupported arrival curve {arrival!r}")


def deconvolve_affine(arrival: TokenBucket, service: RateLatency) -> TokenBucket:
    """Output arrival curve of a token-bucket flow through a rate-latency server."""
    _check_stable(arrival, service)
    return TokenBucket(arrival.rate, arrival.burst + arrival.rate * service.latency)


def upper_pseudo_inverse(service: RateLatency, y) -> Fraction:
    """Smallest t after which the service curve exceeds ``y`` bits."""
    y = _q(y)
    if y < 0:
        raise ValueError(f"pseudo-inverse is defined for y >= 0, got {y}")
    return service.latency + y / service.rate


def output_burst(shared: TokenBucket, other_burst, service: RateLatency) -> Fraction:
    """Burst of an aggregate leaving a rate-latency server that it shares with
    other traffic of total burst ``other_burst``."""
    other_burst = _q(other_burst)
    if other_burst < 0:
        raise ValueError("other_burst must be >= 0")
    return shared.burst + shared.rate * (service.latency + other_burst / service.rate)
