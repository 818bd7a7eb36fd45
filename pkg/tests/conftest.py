import copy

import pytest

from tsnbounds import builtin_spec
from tsnbounds.network import spec_from_json

UNITS = {"data": "bit", "rate": "bit/s", "time": "ps"}

LINK = {
    "capacity": 100_000_000,
    "t_proc": [0, 0],
    "t_var": [0, 0],
    "be_max_packet": 2000,
    "cdt": {"rate": 20_000_000, "burst": 4000},
    "cbs": {"A": {"idle_slope": 50_000_000, "send_slope": -50_000_000}},
}


def line_doc(flows, n_switches=1, link=None, hosts=("H1", "H2")):
    """Hosts H1 -> switches 1..n -> H2 in a line, both directions, one link profile."""
    nodes = [{"id": h, "role": "host"} for h in hosts] + [
        {"id": str(k), "role": "switch"} for k in range(1, n_switches + 1)
    ]
    chain = [hosts[0]] + [str(k) for k in range(1, n_switches + 1)] + [hosts[1]]
    links = []
    for a, b in zip(chain, chain[1:]):
        links += [{"from": a, "to": b}, {"from": b, "to": a}]
    return {
        "name": "line",
        "units": dict(UNITS),
        "nodes": nodes,
        "link_defaults": copy.deepcopy(link or LINK),
        "links": links,
        "flows": copy.deepcopy(flows),
    }


def line_spec(flows, **kw):
    return spec_from_json(line_doc(flows, **kw))


@pytest.fixture(scope="session")
def cs1():
    return builtin_spec("cs1")


@pytest.fixture(scope="session")
def cs2():
    return builtin_spec("cs2")


# --------------------------------------------------------------------------- acceptance summary

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    n, text = mark.args
    ok = rep.passed and _CRITERIA.get(n, (True, text))[0]
    if rep.when == "call" or not rep.passed:
        _CRITERIA[n] = (ok, text)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, text = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}")
