"""Executable forms of the bounds and invariants, applied to a trace."""

from dataclasses import dataclass
from fractions import Fraction

from ..bounds import BoundsReport, cbs_service_curve
from ..curves import evaluate
from ..network import NetworkSpec
from .trace import SimTrace, cbfs_queue_id, ir_queue_id, max_backlog, observed


@dataclass(frozen=True)
class Violation:
    metric: str
    where: str
    packet: str  # packet key, or "" for queue-level metrics
    observed: Fraction
    bound: Fraction

    @property
    def margin(self) -> Fraction:
        return self.bound - self.observed

    def __str__(self):
        who = f" {self.packet}" if self.packet else ""
        return f"{self.metric} at {self.where}{who}: observed {self.observed} > bound {self.bound}"


def conformance_check(trace: SimTrace, report: BoundsReport) -> list:
    """Every observed S, H, C, e2e and backlog against its bound."""
    if trace.spec_hash != report.spec_hash:
        raise ValueError(f"trace is from spec {trace.spec_hash}, report from {report.spec_hash}")
    out = []
    for fid, fr in report.flows.items():
        for hb in fr.hops:
            i, j = hb.link
            checks = [("S", (i, j), hb.S)]
            if hb.next_node is not None:
                checks += [("H", (i, j, hb.next_node), hb.H), ("C", (i, j, hb.next_node), hb.C)]
            for metric, hop, bound in checks:
                for p, v in observed(trace, fid, hop, metric):
                    if v > bound:
                        out.append(Violation(metric, "->".join(hop), p.key, v, bound))
        for p, v in observed(trace, fid, None, "e2e"):
            if v > fr.e2e:
                out.append(Violation("e2e", fid, p.key, v, fr.e2e))
    for (i, j, x), bound in report.cbfs_backlog.items():
        qid = cbfs_queue_id(i, j, x)
        v = max_backlog(trace, qid)
        if v > bound:
            out.append(Violation("backlog", qid, "", v, bound))
    for (i, j, k, x), bound in report.ir_backlog.items():
        qid = ir_queue_id(i, j, k, x)
        v = max_backlog(trace, qid)
        if v > bound:
            out.append(Violation("backlog", qid, "", v, bound))
    return out


def _class_queue_packets(trace: SimTrace, i, j, x):
    """(A, Q, size) of every packet that went through class queue x at i -> j, in order."""
    by_key = {p.key: p for p in trace.packets}
    rows = []
    for key in trace.order[cbfs_queue_id(i, j, x)]["in"]:
        p = by_key[key]
        for h in p.hops:
            if h.link == (i, j):
                rows.append((h.A, h.Q, p.size))
    return rows


def check_service_curve(trace: SimTrace, spec: NetworkSpec) -> list:
    """At every start of service Q_n in a class queue there must be an
    ``m <= n`` with the bits served from m to n-1 reaching beta(Q_n - A_m)."""
    out = []
    for (i, j, x) in trace.credit:
        rows = _class_queue_packets(trace, i, j, x)
        if not rows:
            continue
        beta = cbs_service_curve(spec, i, j, x)
        for n, (_, Qn, _) in enumerate(rows):
            if Qn is None:
                break
            served = Fraction(0)
            ok = False
            for m in range(n, -1, -1):
                if m < n:
                    served += rows[m][2]
                if served >= evaluate(beta, Qn - rows[m][0]):
                    ok = True
                    break
            if not ok:
                out.append(Violation("service-curve", f"{i}->{j}:{x}", f"#{n}", Qn - rows[n][0], beta.latency))
    return out


def check_credit_ceiling(trace: SimTrace) -> list:
    out = []
    for key, series in trace.credit.items():
        bound = trace.credit_max.get(key)
        if bound is None:
            continue
        worst = max(v for _, v in series)
        if worst > bound:
            out.append(Violation("credit", "{}->{}:{}".format(*key), "", worst, bound))
    return out


def check_shaper_output(trace: SimTrace, spec: NetworkSpec) -> list:
    """Regulator output of each flow must conform to the flow's own regulation."""
    out = []
    for f in spec.flows:
        by_node = {}
        for p in trace.packets_of(f.id):
            for h in p.hops:
                if h.E is not None:
                    by_node.setdefault(h.link[1], []).append((h.E, p.size, p.key))
        for node, rows in by_node.items():
            rows.sort(key=lambda r: (r[0], int(r[2].rsplit("#", 1)[1])))
            if f.regulator == "LRQ":
                for (e0, l0, _), (e1, _, k1) in zip(rows, rows[1:]):
                    if e1 - e0 < l0 / f.rate:
                        out.append(Violation("LRQ-spacing", f"{f.id}@{node}", k1, e1 - e0, l0 / f.rate))
            else:
                for m in range(len(rows)):
                    total = Fraction(0)
                    for n in range(m, len(rows)):
                        total += rows[n][1]
                        allowed = f.burst + f.rate * (rows[n][0] - rows[m][0])
                        if total > allowed:
                            out.append(Violation("LB-output", f"{f.id}@{node}", rows[n][2], total, allowed))
    return out


def check_fifo(trace: SimTrace) -> list:
    out = []
    for qid, o in trace.order.items():
        if o["out"] != o["in"][: len(o["out"])]:
            out.append(Violation("fifo", qid, "", Fraction(len(o["out"])), Fraction(0)))
    return out


def check_timestamps(trace: SimTrace) -> list:
    """A <= Q <= D <= D' <= E at every hop, and each hop starts when the previous one released."""
    out = []
    for p in trace.packets:
        prev_e = None
        for h in p.hops:
            seq = [v for v in (h.A, h.Q, h.D, h.Dp, h.E) if v is not None]
            if any(a > b for a, b in zip(seq, seq[1:])):
                out.append(Violation("timestamps", "->".join(h.link), p.key, seq[-1], seq[0]))
            if prev_e is not None and h.A is not None and h.A != prev_e:
                out.append(Violation("timestamps", "->".join(h.link), p.key, h.A, prev_e))
            prev_e = h.E
    return out


def all_invariants(trace: SimTrace, spec: NetworkSpec) -> list:
    return (
        check_service_curve(trace, spec)
        + check_credit_ceiling(trace)
        + check_shaper_output(trace, spec)
        + check_fifo(trace)
        + check_timestamps(trace)
    )


@dataclass(frozen=True)
class ComparisonRow:
    metric: str
    where: str
    bound: Fraction
    observed: Fraction  # 0 when nothing was observed

    @property
    def utilization(self):
        return None if self.bound == 0 else self.observed / self.bound

    @property
    def violated(self) -> bool:
        return self.observed > self.bound


def comparison(trace: SimTrace, report: BoundsReport, flows=None) -> list:
    """Bound next to the worst observed value for every metric of the report
    (restricted to ``flows`` if given; queue rows are then left out)."""
    if trace.spec_hash != report.spec_hash:
        raise ValueError(f"trace is from spec {trace.spec_hash}, report from {report.spec_hash}")

    def worst(fid, hop, metric):
        return max((v for _, v in observed(trace, fid, hop, metric)), default=Fraction(0))

    rows = []
    for fid, fr in report.flows.items():
        if flows is not None and fid not in flows:
            continue
        for hb in fr.hops:
            i, j = hb.link
            rows.append(ComparisonRow("S", f"{fid} {i}->{j}", hb.S, worst(fid, (i, j), "S")))
            if hb.next_node is not None:
                k = hb.next_node
                rows.append(ComparisonRow("H", f"{fid} {i}->{j}->{k}", hb.H, worst(fid, (i, j, k), "H")))
                rows.append(ComparisonRow("C", f"{fid} {i}->{j}->{k}", hb.C, worst(fid, (i, j, k), "C")))
        rows.append(ComparisonRow("e2e", fid, fr.e2e, worst(fid, None, "e2e")))
    if flows is None:
        for (i, j, x), bound in report.cbfs_backlog.items():
            qid = cbfs_queue_id(i, j, x)
            rows.append(ComparisonRow("backlog", qid, bound, max_backlog(trace, qid)))
        for (i, j, k, x), bound in report.ir_backlog.items():
            qid = ir_queue_id(i, j, k, x)
            rows.append(ComparisonRow("backlog", qid, bound, max_backlog(trace, qid)))
    return rows
