"""Scripted traffic for one simulation run.

A scenario lists, in picoseconds on disk and exact seconds in memory:

* source arrivals of every AVB flow (time and packet size),
* local best-effort packets and CDT traffic per output port; CDT may be
  discrete bursts or fluid segments of constant rate,
* how per-packet link and processing delays are realised
  (``max``, ``min`` or seeded ``random`` within the configured ranges).

An arrival marked ``pre`` happens just before the instant it is stamped
with: it is processed ahead of every other event at that time and sees the
state left over from before that instant. Scripted events sharing an
instant run in ``rank`` order, then in the order they are listed (local
traffic of each port before flow packets).
"""

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from ..network import NetworkSpec
from ..units import PS_PER_SECOND, UNITS_HEADER, ps_to_seconds, to_rational

DELAY_MODES = ("max", "min", "random")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Arrival:
    time: Fraction
    size: Fraction
    pre: bool = False
    rank: int = 0  # orders scripted events stamped with the same instant


@dataclass(frozen=True)
class FluidSegment:
    start: Fraction
    end: Fraction
    rate: Fraction
    pre: bool = False


@dataclass
class Scenario:
    flows: dict = field(default_factory=dict)  # flow id -> [Arrival]
    be: dict = field(default_factory=dict)  # (i, j) -> [Arrival]
    cdt: dict = field(default_factory=dict)  # (i, j) -> [Arrival]
    cdt_fluid: dict = field(default_factory=dict)  # (i, j) -> [FluidSegment]
    delays: str = "max"
    seed: int = 0
    packet_cap: int = 200_000
    notes: list = field(default_factory=list)

    def is_empty(self) -> bool:
        return not any(self.flows.values()) and not any(self.be.values()) and not any(
            self.cdt.values()
        ) and not any(self.cdt_fluid.values())

    def to_json(self) -> dict:
        def arr(a):
            d = {"time": _ps(a.time), "size": _q(a.size)}
            if a.pre:
                d["pre"] = True
            if a.rank:
                d["rank"] = a.rank
            return d

        def seg(s):
            d = {"start": _ps(s.start), "end": _ps(s.end), "rate": _q(s.rate)}
            if s.pre:
                d["pre"] = True
            return d

        return {
            "units": dict(UNITS_HEADER),
            "flows": {f: [arr(a) for a in v] for f, v in self.flows.items()},
            "local": {
                f"{i}->{j}": {
                    "be": [arr(a) for a in self.be.get((i, j), [])],
                    "cdt": [arr(a) for a in self.cdt.get((i, j), [])],
                    "cdt_fluid": [seg(s) for s in self.cdt_fluid.get((i, j), [])],
                }
                for (i, j) in sorted(set(self.be) | set(self.cdt) | set(self.cdt_fluid))
            },
            "delays": {"mode": self.delays, "seed": self.seed},
            "packet_cap": self.packet_cap,
            "notes": list(self.notes),
        }


def _q(x):
    x = Fraction(x)
    return x.numerator if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _ps(t):
    return _q(Fraction(t) * PS_PER_SECOND)


def _arrival(raw) -> Arrival:
    return Arrival(
        ps_to_seconds(raw["time"]), to_rational(raw["size"]), bool(raw.get("pre", False)), int(raw.get("rank", 0))
    )


def scenario_from_json(doc: dict) -> Scenario:
    if doc.get("units") != UNITS_HEADER:
        raise ScenarioError(f"scenario must declare units {UNITS_HEADER}")
    try:
        sc = Scenario(
            flows={f: [_arrival(a) for a in v] for f, v in doc.get("flows", {}).items()},
            delays=doc.get("delays", {}).get("mode", "max"),
            seed=int(doc.get("delays", {}).get("seed", 0)),
            packet_cap=int(doc.get("packet_cap", 200_000)),
            notes=list(doc.get("notes", [])),
        )
        for key, local in doc.get("local", {}).items():
            i, j = key.split("->")
            sc.be[(i, j)] = [_arrival(a) for a in local.get("be", [])]
            sc.cdt[(i, j)] = [_arrival(a) for a in local.get("cdt", [])]
            sc.cdt_fluid[(i, j)] = [
                FluidSegment(
                    ps_to_seconds(s["start"]), ps_to_seconds(s["end"]), to_rational(s["rate"]), bool(s.get("pre", False))
                )
                for s in local.get("cdt_fluid", [])
            ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario: {exc!r}") from exc
    return sc


def load_scenario(path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_json(doc)


# --------------------------------------------------------------------------- checks


def _integral_ps(t: Fraction) -> bool:
    return (Fraction(t) * PS_PER_SECOND).denominator == 1


def bucket_excess(arrivals, segments, rate, burst) -> Fraction:
    """Largest amount by which cumulative traffic exceeds ``rate*t + burst``
    over any closed interval (<= 0 means conformant)."""
    points = sorted({a.time for a in arrivals} | {s.start for s in segments} | {s.end for s in segments})
    if not points:
        return Fraction(-burst)

    def before(t):  # traffic strictly before t
        total = sum((a.size for a in arrivals if a.time < t), Fraction(0))
        for s in segments:
            total += s.rate * max(Fraction(0), min(t, s.end) - s.start)
        return total

    def upto(t):  # traffic up to and including t
        return before(t) + sum((a.size for a in arrivals if a.time == t), Fraction(0))

    worst = Fraction(-burst)
    for x, s in enumerate(points):
        lo = before(s)
        for t in points[x:]:
            worst = max(worst, upto(t) - lo - rate * (t - s) - burst)
    return worst


def validate_scenario(spec: NetworkSpec, sc: Scenario) -> list:
    """Raise :class:`ScenarioError` on anything the simulator cannot run;
    return informational notes."""
    notes = []
    if sc.delays not in DELAY_MODES:
        raise ScenarioError(f"delay mode must be one of {DELAY_MODES}")
    known = {f.id: f for f in spec.flows}
    for fid, arrivals in sc.flows.items():
        if fid not in known:
            raise ScenarioError(f"scenario references unknown flow {fid!r}")
        f = known[fid]
        prev = None
        for a in arrivals:
            if a.time < 0 or not _integral_ps(a.time):
                raise ScenarioError(f"flow {fid}: arrival time {a.time} s is not a non-negative integer ps")
            if not f.min_packet <= a.size <= f.max_packet:
                raise ScenarioError(f"flow {fid}: packet size {a.size} outside [{f.min_packet}, {f.max_packet}]")
            for i, j in f.links:
                if not _integral_ps(a.size / spec.link(i, j).capacity):
                    raise ScenarioError(
                        f"flow {fid}: {a.size} bits on {i}->{j} is not an integral number of ps"
                    )
            if prev is not None:
                if a.time < prev.time:
                    raise ScenarioError(f"flow {fid}: arrivals are not sorted")
                if f.regulator == "LRQ" and a.time - prev.time < prev.size / f.rate:
                    raise ScenarioError(f"flow {fid}: arrivals at {prev.time} and {a.time} violate LRQ spacing")
            prev = a
        if f.regulator == "LB" and bucket_excess(arrivals, [], f.rate, f.burst) > 0:
            raise ScenarioError(f"flow {fid}: arrivals violate the leaky bucket ({f.rate}, {f.burst})")

    for table in (sc.be, sc.cdt, sc.cdt_fluid):
        for key in table:
            if key not in spec.links:
                raise ScenarioError(f"scenario references unknown link {key[0]}->{key[1]}")
    for key, arrivals in sc.be.items():
        link = spec.links[key]
        for a in arrivals:
            if a.size <= 0 or a.size > link.be_max_packet:
                raise ScenarioError(f"BE packet of {a.size} bits on {key} exceeds be_max_packet")
            if a.time < 0 or not _integral_ps(a.time) or not _integral_ps(a.size / link.capacity):
                raise ScenarioError(f"BE packet on {key} at {a.time}: non-integral ps timing")
    for key in set(sc.cdt) | set(sc.cdt_fluid):
        link = spec.links[key]
        arrivals = sc.cdt.get(key, [])
        segments = sc.cdt_fluid.get(key, [])
        for a in arrivals:
            if a.size <= 0 or a.time < 0 or not _integral_ps(a.time):
                raise ScenarioError(f"CDT arrival on {key} at {a.time}: bad time or size")
        for s in segments:
            if not 0 <= s.start < s.end or s.rate < 0 or s.rate >= link.capacity:
                raise ScenarioError(f"CDT fluid segment on {key} is malformed: {s}")
        if bucket_excess(arrivals, segments, link.cdt.rate, link.cdt.burst) > 0:
            raise ScenarioError(f"CDT on {key} violates its arrival curve {link.cdt}")
    return notes
