"""What a simulation run leaves behind, and the queries on it."""

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction

from ..units import UNITS_HEADER, seconds_to_ps

METRICS = ("S", "H", "C", "e2e")


@dataclass
class HopRecord:
    """Timestamps of one packet at one output port ``link`` (then the
    regulator towards ``next``, if any)."""

    link: tuple
    next: str = None
    A: Fraction = None  # enters the class queue
    Q: Fraction = None  # starts transmission
    D: Fraction = None  # fully received at the next node
    Dp: Fraction = None  # processed, enters the regulator
    E: Fraction = None  # released by the regulator


@dataclass
class Packet:
    flow: str
    seq: int
    size: Fraction
    hops: list

    @property
    def key(self) -> str:
        return f"{self.flow}#{self.seq}"


def cbfs_queue_id(i, j, cls) -> str:
    return f"cbfs:{i}->{j}:{cls}"


def ir_queue_id(i, j, k, cls) -> str:
    return f"ir:{i}->{j}->{k}:{cls}"


@dataclass
class SimTrace:
    spec_name: str
    spec_hash: str
    packets: list = field(default_factory=list)
    events: list = field(default_factory=list)  # (t, node, queue, kind, flow, seq, bits)
    backlog: dict = field(default_factory=dict)  # queue id -> [(t, bits)]
    credit: dict = field(default_factory=dict)  # (i, j, cls) -> [(t, credit)]
    credit_max: dict = field(default_factory=dict)  # (i, j, cls) -> bound used by checks
    order: dict = field(default_factory=dict)  # queue id -> {"in": [...], "out": [...]}
    truncated: bool = False
    end_time: Fraction = Fraction(0)

    def packets_of(self, flow):
        return [p for p in self.packets if p.flow == flow]

    # ------------------------------------------------------------------ export

    def to_lines(self) -> str:
        out = []
        for t, node, queue, kind, flow, seq, bits in self.events:
            out.append(f"{_ps(t)} {node} {queue} {kind} {flow or '-'} {'-' if seq is None else seq} {_q(bits)}")
        return "\n".join(out) + ("\n" if out else "")

    def to_json(self) -> dict:
        return {
            "spec": self.spec_name,
            "spec_hash": self.spec_hash,
            "units": dict(UNITS_HEADER),
            "truncated": self.truncated,
            "packets": [
                {
                    "flow": p.flow,
                    "seq": p.seq,
                    "size": _q(p.size),
                    "hops": [
                        {
                            "link": list(h.link),
                            "next": h.next,
                            **{k: (None if getattr(h, k) is None else _ps(getattr(h, k))) for k in ("A", "Q", "D", "Dp", "E")},
                        }
                        for h in p.hops
                    ],
                }
                for p in self.packets
            ],
            "events": [
                [_ps(t), node, queue, kind, flow, seq, _q(bits)] for t, node, queue, kind, flow, seq, bits in self.events
            ],
        }

    def backlog_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["queue", "time_ps", "bits"])
        for qid in sorted(self.backlog):
            for t, bits in self.backlog[qid]:
                w.writerow([qid, _ps(t), _q(bits)])
        return buf.getvalue()

    def credit_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["port", "class", "time_ps", "credit_bits"])
        for (i, j, x) in sorted(self.credit):
            for t, v in self.credit[(i, j, x)]:
                w.writerow([f"{i}->{j}", x, _ps(t), _q(v)])
        return buf.getvalue()


def _q(x):
    x = Fraction(x)
    return x.numerator if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _ps(t):
    return _q(seconds_to_ps(t))


# --------------------------------------------------------------------------- queries


def _hop_match(h: HopRecord, hop) -> bool:
    if len(hop) == 2:
        return h.link == tuple(hop)
    if len(hop) == 3:
        return h.link == tuple(hop[:2]) and h.next == hop[2]
    raise ValueError(f"hop must be (i, j) or (i, j, k), got {hop!r}")


def observed(trace: SimTrace, f, hop, metric):
    """Yield ``(packet, value)`` for every packet of ``f`` whose timestamps
    for ``metric`` at ``hop`` are complete."""
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    for p in trace.packets_of(f):
        if metric == "e2e":
            first, last = p.hops[0], p.hops[-1]
            if first.A is not None and last.D is not None:
                yield p, last.D - first.A
            continue
        for h in p.hops:
            if not _hop_match(h, hop):
                continue
            if metric == "S" and h.D is not None:
                yield p, h.D - h.A
            elif metric == "H" and h.E is not None:
                yield p, h.E - h.Dp
            elif metric == "C" and h.E is not None:
                yield p, h.E - h.A


def worst_observed(trace: SimTrace, f, hop, metric) -> Fraction:
    """Largest observed value of ``metric`` for flow ``f`` at ``hop``.

    ``hop`` is ``(i, j)`` for S, ``(i, j, k)`` for H and C (the regulator at
    ``j`` feeding ``j -> k``) and ignored for e2e.
    """
    values = [v for _, v in observed(trace, f, hop, metric)]
    if not values:
        raise ValueError(f"no packet of {f} observed for {metric} at {hop}")
    return max(values)


def max_backlog(trace: SimTrace, queue: str) -> Fraction:
    if queue not in trace.backlog:
        raise KeyError(f"unknown queue {queue!r}")
    return max((b for _, b in trace.backlog[queue]), default=Fraction(0))


def dump_json(trace: SimTrace) -> str:
    return json.dumps(trace.to_json(), indent=1)
