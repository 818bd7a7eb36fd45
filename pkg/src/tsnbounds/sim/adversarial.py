"""Scenarios that push a flow's CBFS response up to its computed bound.

One adversarial stage at output port ``i -> j`` with the target arriving at
time ``s`` looks like this (``c`` link rate, ``(r, b)`` the CDT bucket,
``L`` the largest best-effort packet):

1. a best-effort packet of ``L`` bits starts at ``s0 = s - L/c``;
2. a CDT burst ``b`` lands at ``s0`` and CDT keeps arriving at rate ``r``
   until its queue drains at ``s1``;
3. at ``s`` every other packet of the class arrives, then the target;
4. the others go out one by one, each followed by credit recovery;
5. just before the credit is back to zero (``s3``) another best-effort packet
   grabs the link, and just before it ends (``s4``) CDT replays the
   ``r*(s4 - s1)`` bits its bucket has regained, again sustained at ``r``;
6. the target starts when that CDT backlog drains (``s5``).

A chain repeats this at every hop of the flow, each stage shifted to the
time the target reaches the next port.
"""

import math
from fractions import Fraction

from ..network import NetworkSpec, flows_on_link, link_aggregates
from ..units import PS_PER_SECOND
from .scenario import Arrival, FluidSegment, Scenario


def _ceil_ps(t: Fraction) -> Fraction:
    return Fraction(math.ceil(Fraction(t) * PS_PER_SECOND), PS_PER_SECOND)


def _split(burst, lo, hi):
    """Packet sizes in [lo, hi] adding up to ``burst`` (as close as possible)."""
    sizes = []
    left = Fraction(burst)
    while left >= hi + lo or left == hi:
        sizes.append(hi)
        left -= hi
    if hi < left:
        sizes.extend([left - lo, lo])
    elif left >= lo:
        sizes.append(left)
    return sizes


class _Builder:
    def __init__(self, spec: NetworkSpec, target):
        self.spec = spec
        self.f = spec.flow(target) if isinstance(target, str) else target
        self.sc = Scenario(delays="max")
        self.notes = self.sc.notes

    def note(self, msg):
        if msg not in self.notes:
            self.notes.append(msg)

    def at(self, t, what):
        ct = _ceil_ps(t)
        if ct != t:
            self.note(f"{what} at {t} s rounded up to a whole picosecond; the bound may be missed slightly")
        return ct

    def send(self, fid, t, size, rank=0, pre=False):
        self.sc.flows.setdefault(fid, []).append(Arrival(self.at(t, f"flow {fid} packet"), Fraction(size), pre, rank))

    def local(self, table, key, t, size, pre=False, what="local traffic"):
        table.setdefault(key, []).append(Arrival(self.at(t, what), Fraction(size), pre))

    def stage(self, h, s) -> Fraction:
        """Adversarial traffic around the target's arrival at hop ``h`` at time ``s``.
        Returns the target's reception time at the next node."""
        f, spec = self.f, self.spec
        i, j = f.links[h]
        link = spec.link(i, j)
        c, r, b = link.capacity, link.cdt.rate, link.cdt.burst
        big_be = link.be_max_packet
        x = f.cls
        agg = link_aggregates(spec, i, j, x)
        slopes = link.cbs[x]
        where = f"{f.id} at {i}->{j}"
        if x != "A":
            self.note(f"{where}: the construction is tight for class A only; class B gets a best-effort run")
        if agg.lbar != big_be or agg.lbar_a != big_be:
            self.note(f"{where}: largest packet on the port is not best-effort, so the CDT and blocking terms are not both reachable")
        psi = f.psi
        s0 = s - big_be / c
        if s0 < 0:
            raise ValueError(f"{where}: stage would start before time 0")
        key = (i, j)
        if big_be > 0:
            self.local(self.sc.be, key, s0, big_be, what="best-effort packet")
        if b > 0:
            self.local(self.sc.cdt, key, s0, b, what="CDT burst")
        pending = b + r * big_be / c
        s1 = s + pending / (c - r) if pending > 0 else s
        if r > 0 and pending > 0:
            self.sc.cdt_fluid.setdefault(key, []).append(FluidSegment(s0, s1, r))

        others = Fraction(0)
        for g in flows_on_link(spec, i, j, x):
            if g.id == f.id:
                continue
            others += self.partner(g, h, i, j, s)
        own_extra = f.burst - psi if f.regulator == "LB" else Fraction(0)
        if own_extra > 0:
            if h > 0:
                self.note(f"{where}: the target's own burst can only be replayed at its first hop")
            else:
                for size in _split(own_extra, f.min_packet, f.max_packet):
                    self.send(f.id, s, size, rank=1)
                    others += size
        if h == 0:
            self.send(f.id, s, psi, rank=1)
        if others != agg.b_tot - psi:
            self.note(f"{where}: {others} bits queued ahead of the target, the bound assumes {agg.b_tot - psi}")

        if others == 0:
            self.note(f"{where}: nothing is queued ahead of the target, so no credit recovery can be stretched")
            s5 = s1
        else:
            s3 = s1 + others * (slopes.idle_slope - slopes.send_slope) / (c * slopes.idle_slope)
            s4 = s3 + big_be / c
            if big_be > 0:
                self.local(self.sc.be, key, s3, big_be, pre=True, what="second best-effort packet")
            replay = r * (s4 - s1)
            s5 = s4
            if replay > 0:
                s4r = self.at(s4, "CDT replay")
                self.local(self.sc.cdt, key, s4r, replay, pre=True, what="CDT replay")
                s5 = s4r + replay / (c - r)
                self.sc.cdt_fluid.setdefault(key, []).append(FluidSegment(s4r, s5, r, pre=True))
        return s5 + psi / c + link.t_var_max

    def partner(self, g, h, i, j, s) -> Fraction:
        """Make ``g``'s burst arrive at ``i -> j`` at time ``s``; returns the bits placed."""
        pos = g.path.index(i)
        sizes = _split(g.burst, g.min_packet, g.max_packet)
        if pos == 0:
            for size in sizes:
                self.send(g.id, s, size, rank=0)
            return sum(sizes, Fraction(0))
        if pos > 1:
            self.note(f"partner {g.id} reaches {i} over more than one hop and is left out")
            return Fraction(0)
        if len(sizes) > 1:
            self.note(f"partner {g.id} needs several packets at {i}; only the last arrives with the target")
        src = g.path[0]
        up = self.spec.link(src, i)
        t = s
        for size in reversed(sizes):
            t_send = t - size / up.capacity - up.t_var_max - up.t_proc_max
            if t_send < 0:
                self.note(f"partner {g.id} would have to leave {src} before time 0 and is left out")
                return Fraction(0)
            self.send(g.id, t_send, size)
            t = t_send + up.t_var_max + up.t_proc_max  # earlier packets go out right before
        return sum(sizes, Fraction(0))

    def follow_up(self, s, bound_s):
        """After the stage at the first hop, keep the target at its rate so a
        later packet hits the regulator chain, and give each partner one more
        packet alongside the target's last one."""
        f = self.f
        if f.regulator != "LRQ":
            self.note(f"{f.id}: follow-up packets are only generated for LRQ targets")
            return
        gap = f.max_packet / f.rate
        count = math.ceil(bound_s / gap) + 1
        last = s
        for n in range(1, count + 1):
            last = s + n * gap
            self.send(f.id, last, f.max_packet, rank=0)
        i, j = f.links[0]
        for g in flows_on_link(self.spec, i, j, f.cls):
            if g.id != f.id and g.path[0] == i:
                self.send(g.id, last, g.max_packet, rank=1)

    def make_conformant(self):
        """Shift packets later where a flow's own regulation forbids them."""
        for fid, arrivals in self.sc.flows.items():
            g = self.spec.flow(fid)
            arrivals.sort(key=lambda a: (a.time, a.rank))
            fixed = []
            level, since, nxt = g.burst, Fraction(0), Fraction(0)
            for a in arrivals:
                t = a.time
                if g.regulator == "LRQ":
                    t = max(t, nxt)
                    nxt = t + a.size / g.rate
                else:
                    lv = min(g.burst, level + g.rate * (t - since))
                    if lv < a.size:
                        t = _ceil_ps(t + (a.size - lv) / g.rate)
                        lv = min(g.burst, level + g.rate * (t - since))
                    level, since = lv - a.size, t
                if t != a.time:
                    self.note(f"flow {fid} packet moved from {a.time} s to {t} s to respect its regulation")
                fixed.append(Arrival(t, a.size, a.pre, a.rank))
            self.sc.flows[fid] = fixed


def adversarial_scenario(spec: NetworkSpec, target, hop=None, follow_up=True) -> Scenario:
    """Worst-case scenario for ``target``.

    With ``hop=(i, j)`` only that port is attacked (the target travels
    undisturbed before it) and, at the target's first hop, follow-up packets
    are added. With ``hop=None`` every hop of the path gets its own stage.
    Conditions that keep the bound out of reach are listed in
    ``scenario.notes``.
    """
    from ..bounds import cbfs_response_bound

    bld = _Builder(spec, target)
    f = bld.f
    links = f.links
    if hop is not None and tuple(hop) not in links:
        raise ValueError(f"flow {f.id} does not use {hop}")
    stages = range(len(links)) if hop is None else [links.index(tuple(hop))]
    first = links[0]
    s = spec.link(*first).be_max_packet / spec.link(*first).capacity
    if 0 not in stages:
        # target alone on the way to the attacked hop
        bld.send(f.id, Fraction(0), f.psi, rank=1)
        s = Fraction(0)
    start = s
    for h in range(stages[-1] + 1):
        link = spec.link(*links[h])
        if h in stages:
            d = bld.stage(h, s)
        else:
            d = s + f.psi / link.capacity + link.t_var_max
        s = d + link.t_proc_max
    if hop is not None and stages[0] == 0 and follow_up:
        bld.follow_up(start, cbfs_response_bound(spec, f, *first))
    bld.make_conformant()
    return bld.sc
