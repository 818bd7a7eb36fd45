"""Declarative TSN network description: nodes, directed links, AVB flows.

Specs are loaded from a JSON document whose quantities are exact integers or
``"num/den"`` strings in bits, bits/s and picoseconds. See ``docs/spec-format.md``
for the schema.
"""

import hashlib
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from .curves import TokenBucket
from .units import UNITS_HEADER, ps_to_seconds, to_rational

CLASSES = ("A", "B")
REGULATORS = ("LRQ", "LB")


class SpecError(ValueError):
    """A network spec that cannot be used at all."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" | "warning" | "notice"
    where: str
    message: str

    def __str__(self):
        return f"{self.level}: {self.where}: {self.message}"


@dataclass(frozen=True)
class CbsSlopes:
    idle_slope: Fraction
    send_slope: Fraction


@dataclass(frozen=True)
class LinkParams:
    src: str
    dst: str
    capacity: Fraction
    t_proc_min: Fraction = Fraction(0)
    t_proc_max: Fraction = Fraction(0)
    t_var_min: Fraction = Fraction(0)
    t_var_max: Fraction = Fraction(0)
    be_max_packet: Fraction = Fraction(0)
    cdt: TokenBucket = TokenBucket(0, 0)
    cbs: dict = field(default_factory=dict)  # class -> CbsSlopes

    @property
    def key(self):
        return (self.src, self.dst)


@dataclass(frozen=True)
class FlowSpec:
    id: str
    cls: str
    path: tuple
    regulator: str
    rate: Fraction
    burst: Fraction
    max_packet: Fraction
    min_packet: Fraction

    @property
    def links(self):
        return list(zip(self.path, self.path[1:]))

    @property
    def psi(self) -> Fraction:
        """Packet size that makes this flow's CBFS response worst."""
        return self.max_packet if self.regulator == "LRQ" else self.min_packet

    @property
    def arrival_curve(self) -> TokenBucket:
        return TokenBucket(self.rate, self.burst)


@dataclass
class NetworkSpec:
    nodes: dict  # id -> "host" | "switch"
    links: dict  # (i, j) -> LinkParams
    flows: list  # [FlowSpec]
    name: str = ""
    notices: list = field(default_factory=list)

    def flow(self, flow_id) -> FlowSpec:
        for f in self.flows:
            if f.id == flow_id:
                return f
        raise KeyError(f"unknown flow {flow_id!r}")

    def link(self, i, j) -> LinkParams:
        try:
            return self.links[(i, j)]
        except KeyError:
            raise KeyError(f"unknown link {i}->{j}") from None

    def is_host(self, node) -> bool:
        return self.nodes[node] == "host"

    def to_json(self) -> dict:
        return spec_to_json(self)

    def fingerprint(self) -> str:
        text = json.dumps(spec_to_json(self), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


# --------------------------------------------------------------------------- loading


def _slopes(raw) -> dict:
    out = {}
    for cls, s in (raw or {}).items():
        out[cls] = CbsSlopes(to_rational(s["idle_slope"]), to_rational(s["send_slope"]))
    return out


def _link_from_json(raw: dict, defaults: dict) -> LinkParams:
    merged = dict(defaults)
    merged.update(raw)
    t_proc = merged.get("t_proc", [0, 0])
    t_var = merged.get("t_var", [0, 0])
    cdt = merged.get("cdt", {"rate": 0, "burst": 0})
    return LinkParams(
        src=str(merged["from"]),
        dst=str(merged["to"]),
        capacity=to_rational(merged["capacity"]),
        t_proc_min=ps_to_seconds(t_proc[0]),
        t_proc_max=ps_to_seconds(t_proc[1]),
        t_var_min=ps_to_seconds(t_var[0]),
        t_var_max=ps_to_seconds(t_var[1]),
        be_max_packet=to_rational(merged.get("be_max_packet", 0)),
        cdt=TokenBucket(to_rational(cdt["rate"]), to_rational(cdt["burst"])),
        cbs=_slopes(merged.get("cbs")),
    )


def spec_from_json(doc: dict) -> NetworkSpec:
    """Build a spec from a parsed JSON document.

    Raises :class:`SpecError` for malformed documents; semantic checks live
    in :func:`validate`.
    """
    if doc.get("units") != UNITS_HEADER:
        raise SpecError(f"spec must declare units {UNITS_HEADER}, got {doc.get('units')}")
    try:
        nodes = {}
        for n in doc["nodes"]:
            nodes[str(n["id"])] = n.get("role", "switch")
        defaults = doc.get("link_defaults", {})
        links = {}
        for raw in doc["links"]:
            link = _link_from_json(raw, defaults)
            if link.key in links:
                raise SpecError(f"duplicate link {link.src}->{link.dst}")
            links[link.key] = link
        flows = []
        for raw in doc["flows"]:
            max_packet = to_rational(raw["max_packet"])
            flows.append(
                FlowSpec(
                    id=str(raw["id"]),
                    cls=raw["class"],
                    path=tuple(str(p) for p in raw["path"]),
                    regulator=raw["regulator"],
                    rate=to_rational(raw["rate"]),
                    burst=to_rational(raw.get("burst", max_packet)),
                    max_packet=max_packet,
                    min_packet=to_rational(raw.get("min_packet", max_packet)),
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(f"malformed spec: {exc!r}") from exc

    spec = NetworkSpec(nodes=nodes, links=links, flows=flows, name=doc.get("name", ""))
    _normalise_lrq_bursts(spec)
    return spec


def _normalise_lrq_bursts(spec: NetworkSpec):
    # An LRQ flow conforms to r*t + L, so its burst is L regardless of input.
    for idx, f in enumerate(spec.flows):
        if f.regulator == "LRQ" and f.burst != f.max_packet:
            spec.notices.append(
                Diagnostic("notice", f"flow {f.id}", f"LRQ burst {f.burst} rewritten to max_packet {f.max_packet}")
            )
            spec.flows[idx] = replace(f, burst=f.max_packet)


def load_spec(path) -> NetworkSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"cannot read spec {path}: {exc}") from exc
    spec = spec_from_json(doc)
    if not spec.name:
        spec.name = path.stem
    return spec


def _q_out(q: Fraction):
    q = Fraction(q)
    return q.numerator if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def spec_to_json(spec: NetworkSpec) -> dict:
    ps = 10**12
    links = []
    for (i, j), l in sorted(spec.links.items()):
        links.append(
            {
                "from": i,
                "to": j,
                "capacity": _q_out(l.capacity),
                "t_proc": [_q_out(l.t_proc_min * ps), _q_out(l.t_proc_max * ps)],
                "t_var": [_q_out(l.t_var_min * ps), _q_out(l.t_var_max * ps)],
                "be_max_packet": _q_out(l.be_max_packet),
                "cdt": {"rate": _q_out(l.cdt.rate), "burst": _q_out(l.cdt.burst)},
                "cbs": {
                    c: {"idle_slope": _q_out(s.idle_slope), "send_slope": _q_out(s.send_slope)}
                    for c, s in sorted(l.cbs.items())
                },
            }
        )
    return {
        "name": spec.name,
        "units": dict(UNITS_HEADER),
        "nodes": [{"id": n, "role": r} for n, r in spec.nodes.items()],
        "links": links,
        "flows": [
            {
                "id": f.id,
                "class": f.cls,
                "path": list(f.path),
                "regulator": f.regulator,
                "rate": _q_out(f.rate),
                "burst": _q_out(f.burst),
                "max_packet": _q_out(f.max_packet),
                "min_packet": _q_out(f.min_packet),
            }
            for f in spec.flows
        ],
    }


# --------------------------------------------------------------------------- queries


def flows_on_link(spec: NetworkSpec, i, j, cls) -> list:
    """Flows of class ``cls`` crossing link ``(i, j)``, in declaration order."""
    spec.link(i, j)
    return [f for f in spec.flows if f.cls == cls and (i, j) in f.links]


def flows_through(spec: NetworkSpec, i, j, k, cls) -> list:
    """Flows of class ``cls`` on ``(i, j)`` that continue to ``k`` after ``j``."""
    for n in (i, j, k):
        if n not in spec.nodes:
            raise KeyError(f"unknown node {n!r}")
    out = []
    for f in flows_on_link(spec, i, j, cls):
        pos = f.links.index((i, j))
        if pos + 2 < len(f.path) and f.path[pos + 2] == k:
            out.append(f)
    return out


@dataclass(frozen=True)
class LinkAggregates:
    b_tot: Fraction
    r_tot: Fraction
    max_packet: dict  # class -> L^x_ij (0 when absent)
    be_max_packet: Fraction
    lbar_a: Fraction  # max(L^B, L^E)
    lbar: Fraction  # max(L^A, L^B, L^E)


def link_aggregates(spec: NetworkSpec, i, j, cls) -> LinkAggregates:
    link = spec.link(i, j)
    per_class = {c: flows_on_link(spec, i, j, c) for c in CLASSES}
    # Empty max is 0: an absent class contributes no blocking packet.
    lmax = {c: max((f.max_packet for f in fl), default=Fraction(0)) for c, fl in per_class.items()}
    mine = per_class[cls]
    return LinkAggregates(
        b_tot=sum((f.burst for f in mine), Fraction(0)),
        r_tot=sum((f.rate for f in mine), Fraction(0)),
        max_packet=lmax,
        be_max_packet=link.be_max_packet,
        lbar_a=max(lmax["B"], link.be_max_packet),
        lbar=max(lmax["A"], lmax["B"], link.be_max_packet),
    )


# --------------------------------------------------------------------------- validation


def validate(spec: NetworkSpec) -> list:
    """Return every diagnostic for ``spec``; errors are fatal, warnings are not."""
    from .bounds import cbs_service_curve  # circular at import time

    diags = list(spec.notices)

    def err(where, msg):
        diags.append(Diagnostic("error", where, msg))

    def warn(where, msg):
        diags.append(Diagnostic("warning", where, msg))

    for n, role in spec.nodes.items():
        if role not in ("host", "switch"):
            err(f"node {n}", f"role must be host or switch, got {role!r}")

    for (i, j), l in spec.links.items():
        where = f"link {i}->{j}"
        if i not in spec.nodes or j not in spec.nodes:
            err(where, "endpoint is not a declared node")
        if l.capacity <= 0:
            err(where, "capacity must be > 0")
        if not 0 <= l.t_proc_min <= l.t_proc_max:
            err(where, "need 0 <= t_proc_min <= t_proc_max")
        if not 0 <= l.t_var_min <= l.t_var_max:
            err(where, "need 0 <= t_var_min <= t_var_max")
        if l.be_max_packet < 0:
            err(where, "be_max_packet must be >= 0")
        if l.cdt.rate >= l.capacity:
            err(where, "CDT rate saturates the link (need cdt.rate < capacity)")
        for cls, s in l.cbs.items():
            if cls not in CLASSES:
                err(where, f"unknown CBS class {cls!r}")
            elif not s.send_slope < 0 < s.idle_slope:
                err(where, f"class {cls} needs idle_slope > 0 > send_slope")

    ids = [f.id for f in spec.flows]
    for dup in sorted({x for x in ids if ids.count(x) > 1}):
        err(f"flow {dup}", "duplicate flow id")

    for f in spec.flows:
        where = f"flow {f.id}"
        if f.cls not in CLASSES:
            err(where, f"class must be A or B, got {f.cls!r}")
        if f.regulator not in REGULATORS:
            err(where, f"regulator must be LRQ or LB, got {f.regulator!r}")
        if f.rate <= 0:
            err(where, "rate must be > 0")
        if not 0 < f.min_packet <= f.max_packet:
            err(where, "need 0 < min_packet <= max_packet")
        if f.burst < f.max_packet:
            err(where, "burst must be at least one max-size packet")
        if len(f.path) < 2:
            err(where, "path needs at least two nodes")
            continue
        if len(set(f.path)) != len(f.path):
            err(where, "path visits a node twice")
        for n in (f.path[0], f.path[-1]):
            if n in spec.nodes and spec.nodes[n] != "host":
                err(where, f"endpoint {n} is not a host")
        for n in f.path[1:-1]:
            if n in spec.nodes and spec.nodes[n] != "switch":
                err(where, f"intermediate node {n} is not a switch")
        for i, j in f.links:
            if (i, j) not in spec.links:
                err(where, f"no link {i}->{j}")
            elif f.cls in CLASSES and f.cls not in spec.links[(i, j)].cbs:
                err(where, f"link {i}->{j} has no CBS slopes for class {f.cls}")
            elif f.cls == "B" and "A" not in spec.links[(i, j)].cbs:
                err(where, f"link {i}->{j}: class B bounds need the class A slopes too")

    if any(d.level == "error" for d in diags):
        return diags

    # Stability: the per-hop bounds stay finite, but the output arrival curves
    # used for the regulator backlog need the class rate to fit the service rate.
    for (i, j) in sorted(spec.links):
        for cls in CLASSES:
            fl = flows_on_link(spec, i, j, cls)
            if not fl:
                continue
            beta = cbs_service_curve(spec, i, j, cls)
            load = sum(f.rate for f in fl)
            where = f"link {i}->{j} class {cls}"
            if load > beta.rate:
                warn(where, f"unstable: flow rates {load} exceed service rate {beta.rate}")
            elif load == beta.rate:
                warn(where, f"non-strict stability: flow rates equal service rate {beta.rate}")
    return diags


def has_errors(diags) -> bool:
    return any(d.level == "error" for d in diags)


def check(spec: NetworkSpec) -> list:
    """Validate and raise :class:`SpecError` on fatal problems; return the rest."""
    diags = validate(spec)
    if has_errors(diags):
        errors = [d for d in diags if d.level == "error"]
        raise SpecError("; ".join(str(d) for d in errors), diags)
    return diags
