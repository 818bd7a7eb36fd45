"""Random small networks and conformant traffic for property testing."""

import random
from fractions import Fraction

from ..bounds import BoundsError, full_report
from ..network import has_errors, spec_from_json, validate
from ..units import PS_PER_SECOND, UNITS_HEADER
from .scenario import Arrival, Scenario

CAPACITIES = (10**8, 25 * 10**7, 10**9)


def _bits(rng, lo_bytes, hi_bytes):
    return 8 * rng.randint(lo_bytes, hi_bytes)


def _ps(rng, lo_us, hi_us):
    return rng.randint(lo_us * 10**6, hi_us * 10**6)


def _switch_graph(rng, n):
    edges = set()
    for k in range(1, n):
        edges.add((rng.randrange(k), k))
    for _ in range(rng.randint(0, n)):
        a, b = rng.sample(range(n), 2) if n > 1 else (0, 0)
        if a != b:
            edges.add((min(a, b), max(a, b)))
    adj = {k: set() for k in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    return adj


def _random_path(rng, adj, a, b):
    """A random simple path from switch a to switch b."""
    for _ in range(20):
        path, seen, cur = [a], {a}, a
        while cur != b:
            options = [n for n in adj[cur] if n not in seen]
            if not options:
                break
            cur = rng.choice(options)
            path.append(cur)
            seen.add(cur)
        if cur == b:
            return path
    # fall back to a shortest path
    prev, frontier = {a: None}, [a]
    while frontier:
        nxt = []
        for u in frontier:
            for v in sorted(adj[u]):
                if v not in prev:
                    prev[v] = u
                    nxt.append(v)
        frontier = nxt
    path = [b]
    while path[-1] != a:
        path.append(prev[path[-1]])
    return path[::-1]


def random_spec_doc(rng: random.Random, name="random") -> dict:
    n_sw = rng.randint(1, 3)
    n_hosts = rng.randint(2, 6 - n_sw)
    adj = _switch_graph(rng, n_sw)
    attach = {f"H{h}": rng.randrange(n_sw) for h in range(n_hosts)}
    use_b = rng.random() < 0.4
    pairs = set()
    for a in adj:
        for b in adj[a]:
            pairs.add((str(a), str(b)))
    for h, sw in attach.items():
        pairs.add((h, str(sw)))
        pairs.add((str(sw), h))
    links = []
    for i, j in sorted(pairs):
        c = rng.choice(CAPACITIES)
        idle_a = Fraction(c * rng.randint(20, 60), 100)
        cbs = {"A": {"idle_slope": str(idle_a), "send_slope": str(idle_a - c)}}
        if use_b:
            idle_b = Fraction(c * rng.randint(10, 30), 100)
            cbs["B"] = {"idle_slope": str(idle_b), "send_slope": str(idle_b - c)}
        t_proc_max = _ps(rng, 0, 4)
        t_var_max = _ps(rng, 0, 2)
        links.append(
            {
                "from": i,
                "to": j,
                "capacity": c,
                "t_proc": [rng.randint(0, t_proc_max), t_proc_max],
                "t_var": [rng.randint(0, t_var_max), t_var_max],
                "be_max_packet": _bits(rng, 0, 1500),
                "cdt": {"rate": c * rng.randint(0, 15) // 100, "burst": _bits(rng, 0, 600)},
                "cbs": cbs,
            }
        )
    hosts = sorted(attach)
    flows = []
    for n in range(rng.randint(1, 8)):
        src, dst = rng.sample(hosts, 2)
        sw = _random_path(rng, adj, attach[src], attach[dst])
        path = [src] + [str(s) for s in sw] + [dst]
        cls = "B" if use_b and rng.random() < 0.4 else "A"
        max_packet = _bits(rng, 64, 1500)
        min_packet = 8 * rng.randint(64, max_packet // 8)
        regulator = rng.choice(("LRQ", "LB"))
        rate = 10**5 * rng.randint(5, 100)  # 0.5 to 10 Mb/s
        flow = {
            "id": f"f{n + 1}",
            "class": cls,
            "path": path,
            "regulator": regulator,
            "rate": rate,
            "max_packet": max_packet,
            "min_packet": min_packet,
        }
        if regulator == "LB":
            flow["burst"] = max_packet + _bits(rng, 0, 3000)
        flows.append(flow)
    nodes = [{"id": h, "role": "host"} for h in hosts] + [{"id": str(k), "role": "switch"} for k in adj]
    return {"name": name, "units": dict(UNITS_HEADER), "nodes": nodes, "links": links, "flows": flows}


def random_spec(rng: random.Random, name="random"):
    """A valid, stable random spec with at most 6 nodes and 8 flows whose
    bounds can all be computed."""
    for _ in range(200):
        spec = spec_from_json(random_spec_doc(rng, name))
        diags = validate(spec)
        if has_errors(diags) or any(d.level == "warning" for d in diags):
            continue
        try:
            full_report(spec)
        except BoundsError:
            continue
        return spec
    raise RuntimeError("could not draw a valid random spec")


def _t(ps):
    return Fraction(ps, PS_PER_SECOND)


def _ceil(t):
    return Fraction(-((-t * PS_PER_SECOND) // 1), PS_PER_SECOND)


def random_scenario(spec, rng: random.Random, packets_per_flow=(2, 8), window_us=400) -> Scenario:
    """Random traffic that respects every flow's regulation and every CDT bucket."""
    sc = Scenario(delays="random", seed=rng.randrange(2**31))
    greedy = rng.random() < 0.5
    for f in spec.flows:
        t = _t(_ps(rng, 0, 50))
        out = []
        level, last = f.burst, t
        for _ in range(rng.randint(*packets_per_flow)):
            size = max(f.min_packet, Fraction(8 * rng.randint(int(f.min_packet) // 8, int(f.max_packet) // 8)))
            if out:
                gap = 0 if greedy or rng.random() < 0.5 else _ps(rng, 0, 200)
                t = t + _t(gap)
                if f.regulator == "LRQ":
                    t = max(t, last + out[-1].size / f.rate)
            if f.regulator == "LB":
                avail = min(f.burst, level + f.rate * (t - last))
                if avail < size:
                    t = t + (size - avail) / f.rate
            t = _ceil(t)
            if f.regulator == "LB":
                level = min(f.burst, level + f.rate * (t - last)) - size
            out.append(Arrival(t, size))
            last = t
        sc.flows[f.id] = out
    for key, link in sorted(spec.links.items()):
        be = []
        if link.be_max_packet > 0:
            for _ in range(rng.randint(0, 4)):
                size = Fraction(8 * rng.randint(8, int(link.be_max_packet) // 8)) if link.be_max_packet >= 64 else link.be_max_packet
                be.append(Arrival(_t(_ps(rng, 0, window_us)), size))
        be.sort(key=lambda a: a.time)
        sc.be[key] = be
        cdt = []
        if link.cdt.burst > 0:
            level, last = link.cdt.burst, Fraction(0)
            for t_ps in sorted(_ps(rng, 0, window_us) for _ in range(rng.randint(0, 5))):
                t = _t(t_ps)
                level = min(link.cdt.burst, level + link.cdt.rate * (t - last))
                last = t
                size = Fraction(int(level))
                if size >= 8:
                    size = Fraction(rng.randint(1, int(size)))
                    cdt.append(Arrival(t, size))
                    level -= size
        sc.cdt[key] = cdt
    return sc
