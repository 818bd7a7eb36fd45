"""Delay and backlog bounds for CBS + interleaved-regulator TSN networks.

Naming follows the per-hop quantities of the model:

* ``S(f, i, j, x)``    response time of flow ``f`` in the class-``x`` CBFS at ``i``
                       (enqueue at ``i`` to reception at ``j``)
* ``C(i, j, k, x)``    CBFS at ``i`` plus interleaved regulator at ``j`` towards ``k``
* ``H(f, i, j, k, x)`` response time of ``f`` in that regulator
* ``D(i, j, k, x)``    worst ``H`` over the regulator's flows

Every function is pure and returns exact :class:`~fractions.Fraction` values.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction

from . import curves
from .curves import CappedArrival, Impulse, RateLatency, TokenBucket
from .network import CLASSES, NetworkSpec, flows_on_link, flows_through, link_aggregates
from .units import decimal_str, fmt_bits, fmt_us, rational_json

log = logging.getLogger(__name__)


class BoundsError(ValueError):
    """A bound query that has no meaning for the given spec."""


@dataclass(frozen=True)
class CbsCurveResult:
    curves: dict  # class -> RateLatency
    credit_max: dict  # class -> Fraction


def _flow_on(spec, f, i, j):
    f = spec.flow(f) if isinstance(f, str) else f
    if (i, j) not in f.links:
        raise BoundsError(f"flow {f.id} does not use link {i}->{j}")
    return f


def _nonempty(flows, what):
    if not flows:
        raise BoundsError(f"{what}: no flows (supremum over an empty set)")
    return flows


# --------------------------------------------------------------------------- service curves


def credit_maxima(spec: NetworkSpec, i, j) -> dict:
    """Upper bounds on the CBS credit of each configured class."""
    link = spec.link(i, j)
    agg = link_aggregates(spec, i, j, "A")
    c = link.capacity
    out = {}
    if "A" in link.cbs:
        out["A"] = agg.lbar_a * link.cbs["A"].idle_slope / c
    if "B" in link.cbs and "A" in link.cbs:
        a, b = link.cbs["A"], link.cbs["B"]
        out["B"] = b.idle_slope / c * (
            agg.be_max_packet + agg.max_packet["A"] - agg.lbar_a * a.idle_slope / a.send_slope
        )
    return out


def cbs_service_curve(spec: NetworkSpec, i, j, cls) -> RateLatency:
    """Rate-latency service curve offered by the CBFS at ``i`` to class ``cls``."""
    link = spec.link(i, j)
    if cls not in CLASSES:
        raise BoundsError(f"no CBS service curve for class {cls!r}")
    if cls not in link.cbs:
        raise BoundsError(f"link {i}->{j} has no CBS slopes for class {cls}")
    c, r, b = link.capacity, link.cdt.rate, link.cdt.burst
    if c <= r:
        raise BoundsError(f"link {i}->{j}: CDT rate {r} saturates capacity {c}")
    agg = link_aggregates(spec, i, j, cls)
    cdt_term = b + r * agg.lbar / c
    slopes = link.cbs[cls]
    if cls == "A":
        latency = (agg.lbar_a + cdt_term) / (c - r)
    else:
        if "A" not in link.cbs:
            raise BoundsError(f"link {i}->{j}: class B curve needs class A slopes")
        a = link.cbs["A"]
        blocking = agg.be_max_packet + agg.max_packet["A"] - agg.lbar_a * a.idle_slope / a.send_slope
        latency = (blocking + cdt_term) / (c - r)
    rate = slopes.idle_slope * (c - r) / (slopes.idle_slope - slopes.send_slope)
    return RateLatency(rate, latency)


def cbs_curves(spec: NetworkSpec, i, j) -> CbsCurveResult:
    link = spec.link(i, j)
    return CbsCurveResult(
        curves={x: cbs_service_curve(spec, i, j, x) for x in CLASSES if x in link.cbs},
        credit_max=credit_maxima(spec, i, j),
    )


# --------------------------------------------------------------------------- CBFS


def cbfs_waiting_bound(spec: NetworkSpec, f, i, j, packet_len=None) -> Fraction:
    """Bound on the queueing time (enqueue to start of transmission) of a
    packet of ``f``. For LB flows the bound depends on the packet length;
    it defaults to the smallest packet, which is the worst case."""
    f = _flow_on(spec, f, i, j)
    beta = cbs_service_curve(spec, i, j, f.cls)
    b_tot = link_aggregates(spec, i, j, f.cls).b_tot
    if f.regulator == "LRQ":
        psi = f.max_packet
    else:
        psi = f.min_packet if packet_len is None else Fraction(packet_len)
    return curves.upper_pseudo_inverse(beta, b_tot - psi)


def cbfs_response_bound(spec: NetworkSpec, f, i, j) -> Fraction:
    """``S(f, i, j, x)``."""
    f = _flow_on(spec, f, i, j)
    link = spec.link(i, j)
    beta = cbs_service_curve(spec, i, j, f.cls)
    b_tot = link_aggregates(spec, i, j, f.cls).b_tot
    psi = f.psi
    return beta.latency + (b_tot - psi) / beta.rate + psi / link.capacity + link.t_var_max


def classical_cbfs_bound(spec: NetworkSpec, i, j, cls) -> Fraction:
    """Aggregate FIFO bound ``T + b_tot/R + T_var_max`` (not per flow)."""
    link = spec.link(i, j)
    beta = cbs_service_curve(spec, i, j, cls)
    b_tot = link_aggregates(spec, i, j, cls).b_tot
    return beta.latency + b_tot / beta.rate + link.t_var_max


def combined_bound_sup(spec: NetworkSpec, i, j, k, cls) -> Fraction:
    """``C`` as the worst ``S`` over the regulator's flows plus processing."""
    fl = _nonempty(flows_through(spec, i, j, k, cls), f"C({i},{j},{k},{cls})")
    return max(cbfs_response_bound(spec, f, i, j) for f in fl) + spec.link(i, j).t_proc_max


def combined_bound(spec: NetworkSpec, i, j, k, cls) -> Fraction:
    """``C(i, j, k, x)``, computed algebraically and cross-checked against
    :func:`combined_bound_sup`."""
    fl = _nonempty(flows_through(spec, i, j, k, cls), f"C({i},{j},{k},{cls})")
    link = spec.link(i, j)
    beta = cbs_service_curve(spec, i, j, cls)
    b_tot = link_aggregates(spec, i, j, cls).b_tot
    worst = max(f.psi / link.capacity - f.psi / beta.rate for f in fl)
    value = beta.latency + b_tot / beta.rate + link.t_var_max + worst + link.t_proc_max
    other = combined_bound_sup(spec, i, j, k, cls)
    if value != other:
        raise AssertionError(f"C({i},{j},{k},{cls}): closed form {value} != sup form {other}")
    return value


# --------------------------------------------------------------------------- regulator


def ir_response_bound(spec: NetworkSpec, f, i, j, k, diagnostics=None) -> Fraction:
    """``H(f, i, j, k, x)``; clamped at 0 when timing parameters are inconsistent."""
    f = spec.flow(f) if isinstance(f, str) else f
    if f not in flows_through(spec, i, j, k, f.cls):
        raise BoundsError(f"flow {f.id} does not go {i}->{j}->{k}")
    link = spec.link(i, j)
    h = (
        combined_bound(spec, i, j, k, f.cls)
        - f.min_packet / link.capacity
        - link.t_var_min
        - link.t_proc_min
    )
    if h < 0:
        msg = f"H({f.id},{i},{j},{k}) = {h} < 0 clamped to 0"
        log.warning(msg)
        if diagnostics is not None:
            diagnostics.append(msg)
        return Fraction(0)
    return h


def ir_fifo_delay(spec: NetworkSpec, i, j, k, cls) -> Fraction:
    """``D(i, j, k, x)``: delay bound of the whole regulator FIFO."""
    fl = _nonempty(flows_through(spec, i, j, k, cls), f"D({i},{j},{k},{cls})")
    return max(ir_response_bound(spec, f, i, j, k) for f in fl)


def _other_flows_burst(spec, i, j, k, cls):
    """Bursts of class flows on (i, j) that leave ``j`` towards another
    regulator, and the same excluding nothing (flows ending at ``j`` too)."""
    mine = {f.id for f in flows_through(spec, i, j, k, cls)}
    to_other_ir = Fraction(0)
    all_other = Fraction(0)
    for f in flows_on_link(spec, i, j, cls):
        if f.id in mine:
            continue
        all_other += f.burst
        if f.path[-1] != j:
            to_other_ir += f.burst
    return to_other_ir, all_other


def ir_input_arrival(spec: NetworkSpec, i, j, k, cls) -> CappedArrival:
    """Arrival curve at the input of the regulator at ``j`` towards ``k``."""
    fl = _nonempty(flows_through(spec, i, j, k, cls), f"arrival({i},{j},{k},{cls})")
    link = spec.link(i, j)
    beta = cbs_service_curve(spec, i, j, cls)
    shared = sum((f.arrival_curve for f in fl), TokenBucket(0, 0))
    b_w, _ = _other_flows_burst(spec, i, j, k, cls)
    b_out = curves.output_burst(shared, b_w, beta)
    return CappedArrival(link.capacity, max(f.max_packet for f in fl), TokenBucket(shared.rate, b_out))


def ir_backlog(spec: NetworkSpec, i, j, k, cls) -> Fraction:
    """``B^IR`` of the regulator at ``j`` towards ``k`` fed by ``(i, j)``."""
    fl = _nonempty(flows_through(spec, i, j, k, cls), f"B_IR({i},{j},{k},{cls})")
    link = spec.link(i, j)
    beta = cbs_service_curve(spec, i, j, cls)
    d = ir_fifo_delay(spec, i, j, k, cls)
    r_s = sum(f.rate for f in fl)
    b_s = sum(f.burst for f in fl)
    b_w, _ = _other_flows_burst(spec, i, j, k, cls)
    return min(
        link.capacity * d + max(f.max_packet for f in fl),
        r_s * d + b_s + r_s * (beta.latency + b_w / beta.rate),
    )


def ir_backlog_via_curves(spec: NetworkSpec, i, j, k, cls) -> Fraction:
    """Same quantity as :func:`ir_backlog` through the generic deviation code."""
    return curves.backlog_bound(ir_input_arrival(spec, i, j, k, cls), Impulse(ir_fifo_delay(spec, i, j, k, cls)))


def cbfs_backlog(spec: NetworkSpec, i, j, cls) -> Fraction:
    """``B^CBFS`` of class ``cls`` at the output port ``(i, j)``."""
    fl = flows_on_link(spec, i, j, cls)
    if not fl:
        return Fraction(0)
    beta = cbs_service_curve(spec, i, j, cls)
    return sum(f.burst for f in fl) + sum(f.rate for f in fl) * beta.latency


# --------------------------------------------------------------------------- end to end


def _path_ok(f):
    if len(f.path) < 2:
        raise BoundsError(f"flow {f.id}: path too short")


def e2e_bound(spec: NetworkSpec, f) -> Fraction:
    f = spec.flow(f) if isinstance(f, str) else f
    _path_ok(f)
    p = f.path
    total = sum(
        (combined_bound(spec, p[h], p[h + 1], p[h + 2], f.cls) for h in range(len(p) - 2)),
        Fraction(0),
    )
    return total + cbfs_response_bound(spec, f, p[-2], p[-1])


def per_switch_delays(spec: NetworkSpec, f) -> list:
    """Per-node delay bounds ``H + S + T_proc_max`` along the path, the
    regulator term being zero at the source."""
    f = spec.flow(f) if isinstance(f, str) else f
    _path_ok(f)
    p = f.path
    out = []
    for h in range(len(p) - 1):
        s = cbfs_response_bound(spec, f, p[h], p[h + 1])
        if h == 0:
            out.append(s)
        else:
            inbound = spec.link(p[h - 1], p[h])
            out.append(ir_response_bound(spec, f, p[h - 1], p[h], p[h + 1]) + s + inbound.t_proc_max)
    return out


def additive_e2e(spec: NetworkSpec, f) -> Fraction:
    return sum(per_switch_delays(spec, f), Fraction(0))


# --------------------------------------------------------------------------- report


@dataclass
class HopBounds:
    link: tuple
    S: Fraction
    next_node: str = None
    C: Fraction = None
    H: Fraction = None
    D: Fraction = None


@dataclass
class FlowReport:
    flow: str
    cls: str
    hops: list
    e2e: Fraction
    additive: Fraction

    @property
    def ratio(self) -> Fraction:
        return self.e2e / self.additive


@dataclass
class BoundsReport:
    spec_name: str
    spec_hash: str
    flows: dict = field(default_factory=dict)  # id -> FlowReport
    cbfs_backlog: dict = field(default_factory=dict)  # (i, j, x) -> Fraction
    ir_backlog: dict = field(default_factory=dict)  # (i, j, k, x) -> Fraction
    service_curves: dict = field(default_factory=dict)  # (i, j, x) -> RateLatency
    diagnostics: list = field(default_factory=list)

    def hop(self, flow, i, j) -> HopBounds:
        for h in self.flows[flow].hops:
            if h.link == (i, j):
                return h
        raise KeyError(f"flow {flow} has no hop {i}->{j}")

    def to_json(self) -> dict:
        return report_to_json(self)


def full_report(spec: NetworkSpec) -> BoundsReport:
    rep = BoundsReport(spec_name=spec.name, spec_hash=spec.fingerprint())
    try:
        for (i, j) in sorted(spec.links):
            for x in CLASSES:
                fl = flows_on_link(spec, i, j, x)
                if not fl:
                    continue
                rep.service_curves[(i, j, x)] = cbs_service_curve(spec, i, j, x)
                rep.cbfs_backlog[(i, j, x)] = cbfs_backlog(spec, i, j, x)
                for k in sorted({f.path[f.path.index(j) + 1] for f in fl if f.path[-1] != j}):
                    rep.ir_backlog[(i, j, k, x)] = ir_backlog(spec, i, j, k, x)
                    b_w, b_all = _other_flows_burst(spec, i, j, k, x)
                    if b_w != b_all:
                        rep.diagnostics.append(
                            f"B_IR({i},{j},{k},{x}): other-flow burst {b_w} excludes flows ending at {j} "
                            f"(would be {b_all} counting them)"
                        )
        for f in spec.flows:
            hops = []
            p = f.path
            for h in range(len(p) - 1):
                i, j = p[h], p[h + 1]
                hb = HopBounds(link=(i, j), S=cbfs_response_bound(spec, f, i, j))
                if h + 2 < len(p):
                    k = p[h + 2]
                    hb.next_node = k
                    hb.C = combined_bound(spec, i, j, k, f.cls)
                    hb.H = ir_response_bound(spec, f, i, j, k, rep.diagnostics)
                    hb.D = ir_fifo_delay(spec, i, j, k, f.cls)
                hops.append(hb)
            rep.flows[f.id] = FlowReport(f.id, f.cls, hops, e2e_bound(spec, f), additive_e2e(spec, f))
    except (BoundsError, KeyError) as exc:
        raise BoundsError(f"while computing bounds for {spec.name or 'spec'}: {exc}") from exc
    return rep


def _qj(q):
    return None if q is None else rational_json(q)


def _key(t):
    return "->".join(t[:-1]) + ":" + t[-1]


def report_to_json(rep: BoundsReport) -> dict:
    return {
        "spec": rep.spec_name,
        "spec_hash": rep.spec_hash,
        "units": {"time": "s", "data": "bit", "rate": "bit/s"},
        "flows": {
            fid: {
                "class": fr.cls,
                "e2e": _qj(fr.e2e),
                "additive": _qj(fr.additive),
                "ratio": _qj(fr.ratio),
                "hops": [
                    {
                        "link": list(h.link),
                        "next": h.next_node,
                        "S": _qj(h.S),
                        "C": _qj(h.C),
                        "H": _qj(h.H),
                        "D": _qj(h.D),
                    }
                    for h in fr.hops
                ],
            }
            for fid, fr in rep.flows.items()
        },
        "cbfs_backlog": {_key(k): _qj(v) for k, v in rep.cbfs_backlog.items()},
        "ir_backlog": {_key(k): _qj(v) for k, v in rep.ir_backlog.items()},
        "service_curves": {
            _key(k): {"rate": _qj(v.rate), "latency": _qj(v.latency)} for k, v in rep.service_curves.items()
        },
        "diagnostics": list(rep.diagnostics),
    }


def _qparse(d):
    return None if d is None else Fraction(d["num"], d["den"])


def _unkey(s):
    nodes, cls = s.rsplit(":", 1)
    return tuple(nodes.split("->")) + (cls,)


def report_from_json(doc: dict) -> BoundsReport:
    rep = BoundsReport(spec_name=doc["spec"], spec_hash=doc["spec_hash"], diagnostics=list(doc["diagnostics"]))
    for fid, fr in doc["flows"].items():
        hops = [
            HopBounds(
                link=tuple(h["link"]),
                S=_qparse(h["S"]),
                next_node=h["next"],
                C=_qparse(h["C"]),
                H=_qparse(h["H"]),
                D=_qparse(h["D"]),
            )
            for h in fr["hops"]
        ]
        rep.flows[fid] = FlowReport(fid, fr["class"], hops, _qparse(fr["e2e"]), _qparse(fr["additive"]))
    rep.cbfs_backlog = {_unkey(k): _qparse(v) for k, v in doc["cbfs_backlog"].items()}
    rep.ir_backlog = {_unkey(k): _qparse(v) for k, v in doc["ir_backlog"].items()}
    rep.service_curves = {
        _unkey(k): RateLatency(_qparse(v["rate"]), _qparse(v["latency"])) for k, v in doc["service_curves"].items()
    }
    return rep


def percent(q: Fraction) -> str:
    """``q`` as a percentage with one decimal place, rounded half to even."""
    tenths = round(Fraction(q) * 1000)
    sign = "-" if tenths < 0 else ""
    whole, frac = divmod(abs(tenths), 10)
    return f"{sign}{whole}.{frac}%"


def render_table(rep: BoundsReport) -> str:
    lines = [f"bounds for {rep.spec_name} ({rep.spec_hash})", ""]
    for fid, fr in rep.flows.items():
        lines.append(
            f"flow {fid} (class {fr.cls}): e2e={fmt_us(fr.e2e)}  additive={fmt_us(fr.additive)}  "
            f"ratio={percent(fr.ratio)}"
        )
        for h in fr.hops:
            i, j = h.link
            row = f"  {i}->{j}: S={fmt_us(h.S)}"
            if h.next_node is not None:
                row += f"  C(->{h.next_node})={fmt_us(h.C)}  H@{j}={fmt_us(h.H)}  D={fmt_us(h.D)}"
            lines.append(row)
    lines.append("")
    lines.append("CBFS backlog bounds:")
    for (i, j, x), v in rep.cbfs_backlog.items():
        lines.append(f"  {i}->{j} class {x}: {fmt_bits(v)}")
    lines.append("interleaved regulator backlog bounds:")
    for (i, j, k, x), v in rep.ir_backlog.items():
        lines.append(f"  {i}->{j}->{k} class {x}: {fmt_bits(v)}")
    for d in rep.diagnostics:
        lines.append(f"note: {d}")
    return "\n".join(lines) + "\n"


def render_csv(rep: BoundsReport) -> str:
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["flow", "class", "link", "next", "S_us", "C_us", "H_us", "D_us", "e2e_us", "additive_us"])
    for fid, fr in rep.flows.items():
        for h in fr.hops:
            w.writerow(
                [
                    fid,
                    fr.cls,
                    "->".join(h.link),
                    h.next_node or "",
                    decimal_str(h.S * 10**6),
                    "" if h.C is None else decimal_str(h.C * 10**6),
                    "" if h.H is None else decimal_str(h.H * 10**6),
                    "" if h.D is None else decimal_str(h.D * 10**6),
                    decimal_str(fr.e2e * 10**6),
                    decimal_str(fr.additive * 10**6),
                ]
            )
    return buf.getvalue()
