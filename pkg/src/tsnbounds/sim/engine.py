"""Discrete-event simulation of the output-port pipeline.

Every output port ``i -> j`` holds a CDT FIFO, one CBS-shaped queue per AVB
class and a best-effort queue behind non-preemptive strict-priority
selection. Every switch holds one interleaved regulator per (input port,
output port, class).

Credit model: class ``x`` loses credit at its send slope while it transmits,
keeps it frozen while CDT transmits, and otherwise gains at its idle slope
when it is backlogged or below zero. Positive credit is dropped to 0 when
the class finishes a frame with its queue empty.

Events sharing an instant are handled in this order: scripted ``pre``
arrivals, frame completions and deliveries, regulator releases, scripted
arrivals, credit zero crossings. Ties go to the event created first.
Transmission selection runs after every event.
"""

import heapq
import math
import random
from collections import deque
from fractions import Fraction

from ..bounds import credit_maxima
from ..network import NetworkSpec
from ..units import PS_PER_SECOND
from .scenario import Scenario, validate_scenario
from .trace import HopRecord, Packet, SimTrace, cbfs_queue_id, ir_queue_id

PRE, FRAME, ELIGIBLE, ARRIVAL, CREDIT = range(5)
ZERO = Fraction(0)


class SimulationError(RuntimeError):
    pass


class _Port:
    def __init__(self, link):
        self.link = link
        self.key = link.key
        self.c = link.capacity
        self.classes = [x for x in ("A", "B") if x in link.cbs]
        self.queues = {x: deque() for x in self.classes}  # (packet, hop index)
        self.queued_bits = {x: ZERO for x in self.classes}
        self.be = deque()
        self.credit = {x: ZERO for x in self.classes}
        self.zero_at = {x: None for x in self.classes}
        self.zero_token = {x: 0 for x in self.classes}
        self.busy = None  # "CDT" | "A" | "B" | "BE"
        self.cdt_backlog = ZERO
        self.fluid = []  # started fluid segments
        self.cdt_token = 0
        self.t = ZERO
        self.last_D = ZERO
        self.last_Dp = ZERO

    def slope(self, x):
        if self.busy == x:
            return self.link.cbs[x].send_slope
        if self.busy == "CDT":
            return ZERO
        if self.queues[x] or self.credit[x] < 0:
            return self.link.cbs[x].idle_slope
        return ZERO

    def fluid_rate(self, t):
        return sum((s.rate for s in self.fluid if s.start <= t < s.end), ZERO)

    def fluid_volume(self, t0, t1):
        return sum((s.rate * max(ZERO, min(t1, s.end) - max(t0, s.start)) for s in self.fluid), ZERO)

    def advance(self, t):
        dt = t - self.t
        if dt < 0:
            raise SimulationError(f"port {self.key}: time went backwards ({self.t} -> {t})")
        if dt == 0:
            return
        for x in self.classes:
            self.credit[x] += self.slope(x) * dt
        self.cdt_backlog += self.fluid_volume(self.t, t)
        if self.busy == "CDT":
            self.cdt_backlog -= self.c * dt
        if self.cdt_backlog < 0:
            raise SimulationError(f"port {self.key}: CDT backlog went negative")
        self.t = t

    def drain_time(self, t):
        """When the CDT backlog empties if CDT keeps the link from ``t`` on."""
        backlog = self.cdt_backlog
        while True:
            net = self.c - self.fluid_rate(t)
            nxt = [p for s in self.fluid for p in (s.start, s.end) if p > t]
            done = t + backlog / net
            if not nxt or done <= min(nxt):
                return done
            step = min(nxt)
            backlog -= net * (step - t)
            t = step

    def eligible(self, x, t):
        return bool(self.queues[x]) and self.credit[x] >= 0 and self.zero_at[x] != t


class _Regulator:
    def __init__(self, qid, node, out_port):
        self.qid = qid
        self.node = node
        self.out = out_port
        self.fifo = deque()  # (packet, hop index)
        self.bits = ZERO
        self.token = 0


class _Engine:
    def __init__(self, spec: NetworkSpec, sc: Scenario, horizon):
        self.spec = spec
        self.sc = sc
        self.horizon = None if horizon is None else Fraction(horizon)
        self.rng = random.Random(sc.seed)
        self.heap = []
        self.seq = 0
        self.now = ZERO
        self.trace = SimTrace(spec.name, spec.fingerprint())
        self.ports = {key: _Port(link) for key, link in spec.links.items()}
        self.regs = {}
        self.flow_state = {}
        for (i, j), port in self.ports.items():
            cmax = credit_maxima(spec, i, j)
            for x in port.classes:
                self.trace.credit[(i, j, x)] = [(ZERO, ZERO)]
                self.trace.credit_max[(i, j, x)] = cmax.get(x)
                self._register(cbfs_queue_id(i, j, x))
        for f in spec.flows:
            for h in range(len(f.path) - 2):
                i, j, k = f.path[h : h + 3]
                key = (i, j, k, f.cls)
                if key not in self.regs:
                    qid = ir_queue_id(*key)
                    self.regs[key] = _Regulator(qid, j, self.ports[(j, k)])
                    self._register(qid)

    def _register(self, qid):
        self.trace.backlog[qid] = [(ZERO, ZERO)]
        self.trace.order[qid] = {"in": [], "out": []}

    # ------------------------------------------------------------------ plumbing

    def push(self, t, kind, fn, *args):
        self.seq += 1
        heapq.heappush(self.heap, (t, kind, self.seq, fn, args))

    def log(self, node, queue, kind, flow=None, seq=None, bits=ZERO):
        self.trace.events.append((self.now, node, queue, kind, flow, seq, bits))

    def backlog(self, qid, bits):
        # every change is kept, so peaks inside one instant stay visible
        self.trace.backlog[qid].append((self.now, bits))

    def sample(self, lo, hi):
        if self.sc.delays == "max" or lo == hi:
            return hi
        if self.sc.delays == "min":
            return lo
        a = math.ceil(lo * PS_PER_SECOND)
        b = math.floor(hi * PS_PER_SECOND)
        if a > b:
            return hi
        return Fraction(self.rng.randint(a, b), PS_PER_SECOND)

    # ------------------------------------------------------------------ scheduling

    def schedule_scripted(self):
        items = []
        idx = 0
        for key in sorted(set(self.sc.be) | set(self.sc.cdt) | set(self.sc.cdt_fluid)):
            for a in self.sc.be.get(key, []):
                items.append((a.time, PRE if a.pre else ARRIVAL, a.rank, idx, self.on_be, (key, a.size)))
                idx += 1
            for a in self.sc.cdt.get(key, []):
                items.append((a.time, PRE if a.pre else ARRIVAL, a.rank, idx, self.on_cdt, (key, a.size)))
                idx += 1
            for s in self.sc.cdt_fluid.get(key, []):
                items.append((s.start, PRE if s.pre else ARRIVAL, 0, idx, self.on_fluid, (key, s)))
                idx += 1
        count = 0
        for fid, arrivals in self.sc.flows.items():
            f = self.spec.flow(fid)
            for n, a in enumerate(arrivals):
                items.append((a.time, PRE if a.pre else ARRIVAL, a.rank, idx, self.on_source, (f, n, a.size)))
                idx += 1
                count += 1
        if count > self.sc.packet_cap:
            raise SimulationError(f"scenario has {count} packets, above the cap of {self.sc.packet_cap}")
        items.sort(key=lambda it: it[:4])
        for t, kind, _, _, fn, args in items:
            self.push(t, kind, fn, *args)

    def run(self):
        self.schedule_scripted()
        while self.heap:
            t, kind, _, fn, args = self.heap[0]
            if self.horizon is not None and t > self.horizon:
                self.trace.truncated = True
                break
            heapq.heappop(self.heap)
            self.now = t
            fn(*args)
        self.trace.end_time = self.now
        return self.trace

    # ------------------------------------------------------------------ ports

    def settle(self, port):
        t = self.now
        self.try_start(port)
        for x in port.classes:
            s = port.slope(x)
            if port.credit[x] < 0 and s > 0:
                z = t - port.credit[x] / s
                if port.zero_at[x] != z:
                    port.zero_at[x] = z
                    port.zero_token[x] += 1
                    self.push(z, CREDIT, self.on_credit, port, x, port.zero_token[x])
            elif port.zero_at[x] is not None and port.zero_at[x] != t:
                port.zero_at[x] = None
                port.zero_token[x] += 1
            series = self.trace.credit[(*port.key, x)]
            if series[-1] != (t, port.credit[x]):
                series.append((t, port.credit[x]))

    def try_start(self, port):
        t = self.now
        if port.busy is not None:
            return
        i, j = port.key
        if port.cdt_backlog > 0:
            port.busy = "CDT"
            port.cdt_token += 1
            self.log(i, f"cdt:{i}->{j}", "tx_start", bits=port.cdt_backlog)
            self.push(port.drain_time(t), FRAME, self.on_cdt_end, port, port.cdt_token)
            return
        for x in port.classes:
            if port.eligible(x, t):
                pkt, h = port.queues[x].popleft()
                port.queued_bits[x] -= pkt.size
                qid = cbfs_queue_id(i, j, x)
                self.backlog(qid, port.queued_bits[x])
                self.trace.order[qid]["out"].append(pkt.key)
                self.start_frame(port, x, pkt, h)
                return
        if port.be:
            size = port.be.popleft()
            port.busy = "BE"
            self.log(i, f"be:{i}->{j}", "tx_start", bits=size)
            self.push(t + size / port.c, FRAME, self.on_tx_end, port, None, size)
            return
        if port.fluid_rate(t) > 0:
            raise SimulationError(
                f"port {i}->{j}: fluid CDT arrives at {t} s while the link is idle and the CDT queue empty"
            )

    def start_frame(self, port, x, pkt, h):
        t = self.now
        i, j = port.key
        rec = pkt.hops[h]
        rec.Q = t
        port.busy = x
        end = t + pkt.size / port.c
        link = port.link
        D = max(end + self.sample(link.t_var_min, link.t_var_max), port.last_D)
        port.last_D = D
        if h + 1 < len(pkt.hops):
            Dp = max(D + self.sample(link.t_proc_min, link.t_proc_max), port.last_Dp)
            port.last_Dp = Dp
        else:
            Dp = D
        rec.D, rec.Dp = D, Dp
        self.log(i, cbfs_queue_id(i, j, x), "tx_start", pkt.flow, pkt.seq, pkt.size)
        self.push(end, FRAME, self.on_tx_end, port, pkt, pkt.size)
        self.push(Dp, FRAME, self.on_deliver, pkt, h)

    def enqueue(self, pkt, h):
        rec = pkt.hops[h]
        port = self.ports[rec.link]
        port.advance(self.now)
        rec.A = self.now
        x = self.spec.flow(pkt.flow).cls
        port.queues[x].append((pkt, h))
        port.queued_bits[x] += pkt.size
        qid = cbfs_queue_id(*rec.link, x)
        self.trace.order[qid]["in"].append(pkt.key)
        self.log(rec.link[0], qid, "arrive", pkt.flow, pkt.seq, pkt.size)
        self.backlog(qid, port.queued_bits[x])
        self.settle(port)

    # ------------------------------------------------------------------ handlers

    def on_source(self, f, n, size):
        hops = [HopRecord(link=(a, b), next=(f.path[h + 2] if h + 2 < len(f.path) else None))
                for h, (a, b) in enumerate(f.links)]
        pkt = Packet(f.id, n, size, hops)
        self.trace.packets.append(pkt)
        self.enqueue(pkt, 0)

    def on_be(self, key, size):
        port = self.ports[key]
        port.advance(self.now)
        port.be.append(size)
        self.log(key[0], f"be:{key[0]}->{key[1]}", "arrive", bits=size)
        self.settle(port)

    def on_cdt(self, key, size):
        port = self.ports[key]
        port.advance(self.now)
        port.cdt_backlog += size
        self.log(key[0], f"cdt:{key[0]}->{key[1]}", "arrive", bits=size)
        if port.busy == "CDT":
            port.cdt_token += 1
            self.push(port.drain_time(self.now), FRAME, self.on_cdt_end, port, port.cdt_token)
        self.settle(port)

    def on_fluid(self, key, seg):
        port = self.ports[key]
        port.advance(self.now)
        port.fluid.append(seg)
        self.log(key[0], f"cdt:{key[0]}->{key[1]}", "fluid_start", bits=seg.rate * (seg.end - seg.start))
        if port.busy == "CDT":
            port.cdt_token += 1
            self.push(port.drain_time(self.now), FRAME, self.on_cdt_end, port, port.cdt_token)
        self.settle(port)

    def on_cdt_end(self, port, token):
        if token != port.cdt_token:
            return
        port.advance(self.now)
        if port.cdt_backlog != 0:
            raise SimulationError(f"port {port.key}: CDT drain ended with {port.cdt_backlog} bits left")
        port.busy = None
        self.log(port.key[0], f"cdt:{port.key[0]}->{port.key[1]}", "tx_end")
        self.settle(port)

    def on_tx_end(self, port, pkt, size):
        port.advance(self.now)
        x = port.busy
        i, j = port.key
        if pkt is None:
            self.log(i, f"be:{i}->{j}", "tx_end", bits=size)
        else:
            self.log(i, cbfs_queue_id(i, j, x), "tx_end", pkt.flow, pkt.seq, size)
            if not port.queues[x] and port.credit[x] > 0:
                port.credit[x] = ZERO
        port.busy = None
        self.settle(port)

    def on_credit(self, port, x, token):
        if token != port.zero_token[x]:
            return
        port.advance(self.now)
        if port.credit[x] != 0:
            raise SimulationError(f"port {port.key}: credit of {x} is {port.credit[x]} at its zero crossing")
        port.zero_at[x] = None
        self.settle(port)

    def on_deliver(self, pkt, h):
        rec = pkt.hops[h]
        i, j = rec.link
        cls = self.spec.flow(pkt.flow).cls
        if rec.next is None:
            self.log(j, "sink", "deliver", pkt.flow, pkt.seq, pkt.size)
            return
        reg = self.regs[(i, j, rec.next, cls)]
        reg.fifo.append((pkt, h))
        reg.bits += pkt.size
        self.trace.order[reg.qid]["in"].append(pkt.key)
        self.log(j, reg.qid, "arrive", pkt.flow, pkt.seq, pkt.size)
        self.backlog(reg.qid, reg.bits)
        if len(reg.fifo) == 1:
            self.arm(reg)

    def on_eligible(self, reg, token):
        if token == reg.token:
            self.arm(reg)

    # ------------------------------------------------------------------ regulators

    def eligible_time(self, pkt, node):
        f = self.spec.flow(pkt.flow)
        st = self.flow_state.get((f.id, node))
        t = self.now
        if st is None:
            return t
        if f.regulator == "LRQ":
            return max(t, st)
        level, since = st
        level = min(f.burst, level + f.rate * (t - since))
        if level >= pkt.size:
            return t
        return t + (pkt.size - level) / f.rate

    def release_state(self, pkt, node):
        f = self.spec.flow(pkt.flow)
        t = self.now
        if f.regulator == "LRQ":
            self.flow_state[(f.id, node)] = t + pkt.size / f.rate
        else:
            level, since = self.flow_state.get((f.id, node), (f.burst, t))
            level = min(f.burst, level + f.rate * (t - since))
            self.flow_state[(f.id, node)] = (level - pkt.size, t)

    def arm(self, reg):
        while reg.fifo:
            pkt, h = reg.fifo[0]
            e = self.eligible_time(pkt, reg.node)
            if e > self.now:
                reg.token += 1
                self.push(e, ELIGIBLE, self.on_eligible, reg, reg.token)
                return
            reg.fifo.popleft()
            reg.bits -= pkt.size
            pkt.hops[h].E = self.now
            self.release_state(pkt, reg.node)
            self.trace.order[reg.qid]["out"].append(pkt.key)
            self.log(reg.node, reg.qid, "eligible", pkt.flow, pkt.seq, pkt.size)
            self.backlog(reg.qid, reg.bits)
            self.enqueue(pkt, h + 1)


def run(spec: NetworkSpec, scenario: Scenario, horizon=None) -> SimTrace:
    """Simulate ``scenario`` on ``spec`` until no events remain or the next
    event lies after ``horizon`` (seconds)."""
    validate_scenario(spec, scenario)
    return _Engine(spec, scenario, horizon).run()
