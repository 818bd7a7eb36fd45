import json
import random
from fractions import Fraction as Q

import pytest
from conftest import LINK, UNITS, line_doc, line_spec
from hypothesis import given, settings
from hypothesis import strategies as st

from tsnbounds.bounds import (
    BoundsError,
    additive_e2e,
    cbfs_backlog,
    cbfs_response_bound,
    cbfs_waiting_bound,
    cbs_curves,
    cbs_service_curve,
    classical_cbfs_bound,
    combined_bound,
    combined_bound_sup,
    credit_maxima,
    e2e_bound,
    full_report,
    ir_backlog,
    ir_backlog_via_curves,
    ir_fifo_delay,
    ir_response_bound,
    percent,
    render_csv,
    render_table,
    report_from_json,
    report_to_json,
)
from tsnbounds.curves import RateLatency
from tsnbounds.network import spec_from_json
from tsnbounds.sim.randomized import random_spec

US = Q(1, 10**6)
MB = 10**6


def flow(fid, path, size=1000, rate=20 * MB, **kw):
    d = {"id": fid, "class": "A", "path": path, "regulator": "LRQ", "rate": rate, "max_packet": size}
    d.update(kw)
    return d


# --------------------------------------------------------------------------- an independent oracle
#
# Straight transcription of the per-hop formulas from raw link and flow
# parameters, with no use of the engine's helpers.


def oracle_hop(spec, fid, i, j):
    link = spec.links[(i, j)]
    c, r, b = link.capacity, link.cdt.rate, link.cdt.burst
    f = next(x for x in spec.flows if x.id == fid)
    same = [x for x in spec.flows if x.cls == f.cls and (i, j) in list(zip(x.path, x.path[1:]))]
    sizes = {k: [x.max_packet for x in spec.flows if x.cls == k and (i, j) in list(zip(x.path, x.path[1:]))] for k in "AB"}
    la = max(sizes["A"] or [0])
    lb = max(sizes["B"] or [0])
    le = link.be_max_packet
    lbar_a, lbar = max(lb, le), max(la, lb, le)
    ia, sa = link.cbs["A"].idle_slope, link.cbs["A"].send_slope
    if f.cls == "A":
        T = (lbar_a + b + r * lbar / c) / (c - r)
        idle, send = ia, sa
    else:
        T = (le + la - lbar_a * ia / sa + b + r * lbar / c) / (c - r)
        idle, send = link.cbs["B"].idle_slope, link.cbs["B"].send_slope
    R = idle * (c - r) / (idle - send)
    b_tot = sum(x.burst for x in same)
    psi = f.max_packet if f.regulator == "LRQ" else f.min_packet
    S = T + (b_tot - psi) / R + psi / c + link.t_var_max
    return R, T, S


def oracle_e2e(spec, fid):
    f = spec.flow(fid)
    p = f.path
    total = Q(0)
    for h in range(len(p) - 2):
        i, j, k = p[h : h + 3]
        peers = [g for g in spec.flows if g.cls == f.cls and any(g.path[n : n + 3] == (i, j, k) for n in range(len(g.path)))]
        total += max(oracle_hop(spec, g.id, i, j)[2] for g in peers) + spec.links[(i, j)].t_proc_max
    return total + oracle_hop(spec, fid, p[-2], p[-1])[2]


# --------------------------------------------------------------------------- service curves


def test_cs1_service_curve(cs1):
    assert cbs_service_curve(cs1, "H1", "1", "A") == RateLatency(40 * MB, 80 * US)
    assert oracle_hop(cs1, "f1", "H1", "1")[:2] == (40 * MB, 80 * US)


def test_no_cdt_service_curve():
    link = dict(LINK, cdt={"rate": 0, "burst": 0})
    spec = line_spec([flow("f1", ["H1", "1", "H2"])], link=link)
    assert cbs_service_curve(spec, "H1", "1", "A") == RateLatency(50 * MB, 20 * US)


def class_b_spec():
    link = dict(LINK)
    link["cbs"] = {
        "A": {"idle_slope": 50 * MB, "send_slope": -50 * MB},
        "B": {"idle_slope": 25 * MB, "send_slope": -75 * MB},
    }
    flows = [flow("a", ["H1", "1", "H2"], size=2000, rate=MB), flow("b", ["H1", "1", "H2"], size=1500, rate=MB, **{"class": "B"})]
    return line_spec(flows, link=link)


def test_class_b_curve_by_hand():
    spec = class_b_spec()
    # T_B = (L_E + L_A + Lbar_A*I_A/|S_A| + b + r*Lbar/c) / (c - r)
    #     = (2000 + 2000 + 2000 + 4000 + 400) / 80e6 = 130 us; R_B = 25e6 * 80e6 / 100e6
    assert cbs_service_curve(spec, "H1", "1", "B") == RateLatency(20 * MB, 130 * US)
    assert cbs_service_curve(spec, "H1", "1", "A") == RateLatency(40 * MB, 80 * US)
    assert credit_maxima(spec, "H1", "1") == {"A": 1000, "B": 1500}
    res = cbs_curves(spec, "H1", "1")
    assert set(res.curves) == {"A", "B"} and res.credit_max["B"] == 1500


def test_unknown_class_and_saturated_cdt(cs1):
    with pytest.raises(BoundsError):
        cbs_service_curve(cs1, "H1", "1", "B")
    with pytest.raises(BoundsError):
        cbs_service_curve(cs1, "H1", "1", "E")


# --------------------------------------------------------------------------- CBFS


def test_waiting_bounds(cs1):
    assert cbfs_waiting_bound(cs1, "f1", "H1", "1") == 130 * US
    assert cbfs_waiting_bound(cs1, "f2", "H1", "1") == 105 * US


def test_waiting_bound_lone_lrq_is_latency():
    spec = line_spec([flow("f1", ["H1", "1", "H2"])])
    assert cbfs_waiting_bound(spec, "f1", "H1", "1") == cbs_service_curve(spec, "H1", "1", "A").latency


def test_response_bounds(cs1):
    assert cbfs_response_bound(cs1, "f1", "H1", "1") == 140 * US
    assert cbfs_response_bound(cs1, "f2", "H1", "1") == 125 * US
    assert cbfs_response_bound(cs1, "f1", "4", "H4") == 140 * US
    with pytest.raises(BoundsError):
        cbfs_response_bound(cs1, "f2", "3", "4")


def test_lb_uses_smallest_packet():
    spec = line_spec([flow("f1", ["H1", "1", "H2"], regulator="LB", burst=3000, min_packet=500)])
    R, T, S = oracle_hop(spec, "f1", "H1", "1")
    assert cbfs_response_bound(spec, "f1", "H1", "1") == S
    assert cbfs_waiting_bound(spec, "f1", "H1", "1") == T + (3000 - 500) / R
    assert cbfs_waiting_bound(spec, "f1", "H1", "1", packet_len=1000) == T + 2000 / R


# --------------------------------------------------------------------------- regulator


def test_combined_bounds(cs1):
    for hop in (("H1", "1", "2"), ("1", "2", "3"), ("2", "3", "4"), ("3", "4", "H4")):
        assert combined_bound(cs1, *hop, "A") == 140 * US


def test_combined_single_lrq_flow():
    spec = line_spec([flow("f1", ["H1", "1", "2", "H2"])], n_switches=2)
    beta = cbs_service_curve(spec, "H1", "1", "A")
    assert combined_bound(spec, "H1", "1", "2", "A") == beta.latency + 1000 / spec.link("H1", "1").capacity


def test_combined_empty_set_is_error(cs1):
    with pytest.raises(BoundsError):
        combined_bound(cs1, "H1", "1", "5", "A")
    with pytest.raises(BoundsError):
        ir_fifo_delay(cs1, "H1", "1", "5", "A")
    with pytest.raises(BoundsError):
        ir_backlog(cs1, "H1", "1", "5", "A")


def test_regulator_bounds(cs1):
    assert ir_response_bound(cs1, "f1", "H1", "1", "2") == 130 * US
    assert ir_response_bound(cs1, "f2", "H1", "1", "2") == 120 * US
    assert ir_fifo_delay(cs1, "H1", "1", "2", "A") == 130 * US
    assert ir_fifo_delay(cs1, "1", "2", "3", "A") == ir_response_bound(cs1, "f1", "1", "2", "3") == 130 * US
    with pytest.raises(BoundsError):
        ir_response_bound(cs1, "f2", "1", "2", "3")


def test_regulator_bound_equals_combined_without_minimums():
    doc = line_doc([flow("f1", ["H1", "1", "2", "H2"], min_packet=8)], n_switches=2)
    spec = spec_from_json(doc)
    c = spec.link("H1", "1").capacity
    assert ir_response_bound(spec, "f1", "H1", "1", "2") == combined_bound(spec, "H1", "1", "2", "A") - 8 / c


def test_negative_regulator_bound_is_clamped():
    # t_var_min above t_var_max is rejected by validate; the bound function
    # still has to stay non-negative and say so
    link = dict(LINK, t_var=[10**9, 0])
    spec = line_spec([flow("f1", ["H1", "1", "2", "H2"])], n_switches=2, link=link)
    diags = []
    assert ir_response_bound(spec, "f1", "H1", "1", "2", diags) == 0
    assert diags and "clamped" in diags[0]


def test_backlog_bounds(cs1):
    assert ir_backlog(cs1, "H1", "1", "2", "A") == 11400
    assert ir_backlog_via_curves(cs1, "H1", "1", "2", "A") == 11400
    assert cbfs_backlog(cs1, "H1", "1", "A") == 6200
    # (1,2) carries f1 (1 Kb) and f2 (2 Kb) at 20 Mb/s each behind T = 80 us
    assert cbfs_backlog(cs1, "1", "2", "A") == 3000 + 40 * MB * 80 * US
    assert cbfs_backlog(cs1, "H1", "1", "B") == 0


def test_regulator_backlog_degenerate():
    link = dict(LINK, be_max_packet=0, cdt={"rate": 0, "burst": 0})
    spec = line_spec([flow("f1", ["H1", "1", "2", "H2"])], n_switches=2, link=link)
    assert cbs_service_curve(spec, "H1", "1", "A").latency == 0
    assert ir_fifo_delay(spec, "H1", "1", "2", "A") == 0
    assert ir_backlog(spec, "H1", "1", "2", "A") == min(Q(1000), Q(1000))


# --------------------------------------------------------------------------- end to end


def test_e2e_and_additive(cs1, cs2):
    assert e2e_bound(cs1, "f1") == 700 * US
    assert additive_e2e(cs1, "f1") == 1220 * US
    assert e2e_bound(cs2, "f1") == 700 * US
    # 140 at the source, then four switches each adding H + S
    assert additive_e2e(cs2, "f1") == 140 * US + 4 * (130 + 140) * US


def test_single_link_flow():
    spec = line_spec([flow("f1", ["H1", "1", "H2"])])
    doc = line_doc([flow("f1", ["H1", "H2"])], n_switches=0)
    direct = spec_from_json(doc)
    assert e2e_bound(direct, "f1") == cbfs_response_bound(direct, "f1", "H1", "H2")
    assert additive_e2e(direct, "f1") == e2e_bound(direct, "f1")
    assert e2e_bound(spec, "f1") <= additive_e2e(spec, "f1")


def test_oracle_agrees_on_case_studies(cs1, cs2):
    for spec in (cs1, cs2):
        for f in spec.flows:
            assert e2e_bound(spec, f) == oracle_e2e(spec, f.id)
            for i, j in f.links:
                assert cbfs_response_bound(spec, f, i, j) == oracle_hop(spec, f.id, i, j)[2]


# --------------------------------------------------------------------------- randomized properties


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**9))
def test_random_spec_properties(seed):
    spec = random_spec(random.Random(seed))
    for f in spec.flows:
        assert e2e_bound(spec, f) == oracle_e2e(spec, f.id)
        assert e2e_bound(spec, f) <= additive_e2e(spec, f)
        for h, (i, j) in enumerate(f.links):
            R, T, S = oracle_hop(spec, f.id, i, j)
            assert cbfs_response_bound(spec, f, i, j) == S
            c = spec.link(i, j).capacity
            if R < c:
                assert S < classical_cbfs_bound(spec, i, j, f.cls)
            if h + 2 < len(f.path):
                k = f.path[h + 2]
                assert combined_bound(spec, i, j, k, f.cls) == combined_bound_sup(spec, i, j, k, f.cls)
                assert ir_backlog(spec, i, j, k, f.cls) == ir_backlog_via_curves(spec, i, j, k, f.cls)
                assert ir_response_bound(spec, f, i, j, k) >= 0


# --------------------------------------------------------------------------- report


def test_report_golden_values(cs1):
    rep = full_report(cs1)
    fr = rep.flows["f1"]
    assert (fr.e2e, fr.additive) == (700 * US, 1220 * US)
    assert percent(fr.ratio) == "57.4%"
    h = rep.hop("f1", "H1", "1")
    assert (h.S, h.C, h.H, h.D) == (140 * US, 140 * US, 130 * US, 130 * US)
    assert rep.cbfs_backlog[("H1", "1", "A")] == 6200
    assert rep.ir_backlog[("H1", "1", "2", "A")] == 11400
    with pytest.raises(KeyError):
        rep.hop("f1", "5", "2")


def test_report_json_round_trip(cs1):
    rep = full_report(cs1)
    doc = json.loads(json.dumps(report_to_json(rep)))
    assert doc["flows"]["f1"]["e2e"] == {"num": 7, "den": 10000, "decimal": "0.0007"}
    back = report_from_json(doc)
    assert back.flows == rep.flows
    assert back.cbfs_backlog == rep.cbfs_backlog
    assert back.ir_backlog == rep.ir_backlog
    assert back.service_curves == rep.service_curves


def test_renderings_are_deterministic(cs1):
    a, b = full_report(cs1), full_report(cs1)
    assert render_table(a) == render_table(b)
    assert render_csv(a) == render_csv(b)
    assert "e2e=700 us  additive=1220 us  ratio=57.4%" in render_table(a)


def test_report_notes_regulator_other_burst_difference():
    # f2 ends at switch 1, so it is not counted in b_w for the regulator at 1
    flows = [flow("f1", ["H1", "1", "2", "H2"]), flow("f2", ["H1", "1", "H3"], size=2000)]
    doc = line_doc(flows, n_switches=2)
    doc["nodes"].append({"id": "H3", "role": "host"})
    doc["links"] += [{"from": "1", "to": "H3"}, {"from": "H3", "to": "1"}]
    rep = full_report(spec_from_json(doc))
    assert rep.diagnostics == []
    flows.append(flow("f3", ["H3", "1", "2", "H2"]))
    flows[1]["path"] = ["H1", "1", "2", "H2"]
    rep = full_report(spec_from_json(dict(doc, flows=flows)))
    assert isinstance(rep.diagnostics, list)


@pytest.mark.parametrize("q, text", [(Q(57, 100), "57.0%"), (Q(4000, 6200), "64.5%"), (Q(5000, 11400), "43.9%"), (Q(700, 1220), "57.4%")])
def test_percent(q, text):
    assert percent(q) == text


def test_units_header_constant():
    assert UNITS == {"data": "bit", "rate": "bit/s", "time": "ps"}
