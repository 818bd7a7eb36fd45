"""``tsnbounds`` command line.

Exit codes: 0 ok, 1 a bound was exceeded, 2 bad input.
"""

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import DATA_DIR, builtin_spec
from .bounds import BoundsError, full_report, percent, render_csv, render_table, report_to_json
from .network import SpecError, has_errors, load_spec, validate
from .sim.adversarial import adversarial_scenario
from .sim.checks import comparison
from .sim.engine import SimulationError, run
from .sim.scenario import Scenario, ScenarioError, load_scenario
from .sim.trace import dump_json
from .units import decimal_str, fmt_bits, fmt_us, ps_to_seconds, rational_json

OK, VIOLATION, INPUT_ERROR = 0, 1, 2


class InputError(Exception):
    pass


def _spec(arg):
    path = Path(arg)
    if path.exists():
        return load_spec(path)
    if (DATA_DIR / f"{arg}.json").exists():
        return builtin_spec(arg)
    raise InputError(f"no spec file or built-in spec named {arg!r}")


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _parse_target(text):
    """``f1`` (whole path) or ``f1@H1->1`` (one hop)."""
    flow, _, hop = text.partition("@")
    if not hop:
        return flow, None
    parts = hop.replace(",", "->").split("->")
    if len(parts) != 2:
        raise InputError(f"hop must look like I->J, got {hop!r}")
    return flow, tuple(parts)


def _scenario(args, spec):
    if args.scenario and args.adversarial:
        raise InputError("give either --scenario or --adversarial, not both")
    if args.scenario:
        path = Path(args.scenario)
        if not path.exists() and (DATA_DIR / f"{args.scenario}.json").exists():
            path = DATA_DIR / f"{args.scenario}.json"
        return load_scenario(path)
    if args.adversarial:
        flow, hop = _parse_target(args.adversarial)
        return adversarial_scenario(spec, flow, hop)
    return Scenario()


def _horizon(args):
    return None if args.horizon is None else ps_to_seconds(args.horizon)


# --------------------------------------------------------------------------- rendering


def _value(metric, q):
    return fmt_bits(q) if metric == "backlog" else fmt_us(q)


def _rows_table(rows):
    lines = []
    for r in rows:
        util = "-" if r.utilization is None else percent(r.utilization)
        flag = "  VIOLATION" if r.violated else ""
        lines.append(
            f"{r.metric:8} {r.where:28} bound={_value(r.metric, r.bound):14} "
            f"observed={_value(r.metric, r.observed):14} {util}{flag}"
        )
    return "\n".join(lines) + "\n"


def _rows_json(rows, extra=None):
    doc = {
        "rows": [
            {
                "metric": r.metric,
                "where": r.where,
                "bound": rational_json(r.bound),
                "observed": rational_json(r.observed),
                "utilization": None if r.utilization is None else rational_json(r.utilization),
                "violated": r.violated,
            }
            for r in rows
        ]
    }
    doc.update(extra or {})
    return json.dumps(doc, indent=1) + "\n"


def _rows_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "where", "unit", "bound", "observed", "utilization"])
    for r in rows:
        scale, unit = (1, "bit") if r.metric == "backlog" else (10**6, "us")
        w.writerow(
            [
                r.metric,
                r.where,
                unit,
                decimal_str(r.bound * scale),
                decimal_str(r.observed * scale),
                "" if r.utilization is None else percent(r.utilization),
            ]
        )
    return buf.getvalue()


def _render_rows(rows, fmt, extra=None):
    if fmt == "json":
        return _rows_json(rows, extra)
    if fmt == "csv":
        return _rows_csv(rows)
    text = _rows_table(rows)
    for note in (extra or {}).get("notes", []):
        text += f"note: {note}\n"
    return text


# --------------------------------------------------------------------------- commands


def cmd_validate(args):
    spec = _spec(args.spec)
    diags = validate(spec)
    for d in diags:
        print(d)
    if has_errors(diags):
        return INPUT_ERROR
    print(f"{spec.name or args.spec}: ok ({len(spec.flows)} flows, {len(spec.links)} links)")
    return OK


def cmd_bounds(args):
    spec = _spec(args.spec)
    rep = full_report(spec)
    if args.format == "json":
        text = json.dumps(report_to_json(rep), indent=1) + "\n"
    elif args.format == "csv":
        text = render_csv(rep)
    else:
        text = render_table(rep)
    _emit(text, args.out)
    return OK


def cmd_simulate(args):
    spec = _spec(args.spec)
    sc = _scenario(args, spec)
    trace = run(spec, sc, _horizon(args))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trace.txt").write_text(trace.to_lines())
        (out / "trace.json").write_text(dump_json(trace))
        (out / "backlog.csv").write_text(trace.backlog_csv())
        (out / "credit.csv").write_text(trace.credit_csv())
        (out / "scenario.json").write_text(json.dumps(sc.to_json(), indent=1) + "\n")
    rows = comparison(trace, full_report(spec))
    print(f"simulated {len(trace.packets)} packets, {len(trace.events)} events"
          + (" (stopped at horizon)" if trace.truncated else ""))
    for r in rows:
        print(f"worst {r.metric:8} {r.where:28} {_value(r.metric, r.observed)}")
    for note in sc.notes:
        print(f"note: {note}")
    return OK


def cmd_compare(args):
    spec = _spec(args.spec)
    sc = _scenario(args, spec)
    trace = run(spec, sc, _horizon(args))
    rows = comparison(trace, full_report(spec))
    _emit(_render_rows(rows, args.format, {"notes": sc.notes}), args.out)
    return VIOLATION if any(r.violated for r in rows) else OK


def cmd_tighten(args):
    spec = _spec(args.spec)
    flow, hop = _parse_target(args.target)
    sc = adversarial_scenario(spec, flow, hop)
    trace = run(spec, sc, _horizon(args))
    rows = comparison(trace, full_report(spec), flows={flow})
    if hop is not None:
        rows = [r for r in rows if r.where.startswith(f"{flow} {hop[0]}->{hop[1]}")]
    _emit(_render_rows(rows, args.format, {"notes": sc.notes}), args.out)
    return VIOLATION if any(r.violated for r in rows) else OK


def build_parser():
    p = argparse.ArgumentParser(prog="tsnbounds", description="TSN latency and backlog bounds, and a simulator to check them")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, formats=True):
        sp.add_argument("--spec", required=True, help="spec file, or the name of a built-in spec (cs1, cs2)")
        if formats:
            sp.add_argument("--format", choices=("table", "json", "csv"), default="table")
            sp.add_argument("--out", help="write the output here instead of stdout")

    def traffic(sp):
        sp.add_argument("--scenario", help="scenario file, or a built-in one (cs1_adversarial, cs2_adversarial)")
        sp.add_argument("--adversarial", metavar="FLOW[@I->J]", help="generate the worst-case scenario for a flow")
        sp.add_argument("--horizon", type=int, metavar="PS", help="stop after this time (picoseconds)")

    sp = sub.add_parser("validate", help="check a spec")
    common(sp, formats=False)
    sp.set_defaults(fn=cmd_validate)

    sp = sub.add_parser("bounds", help="compute every bound of a spec")
    common(sp)
    sp.set_defaults(fn=cmd_bounds)

    sp = sub.add_parser("simulate", help="run a scenario and write the trace")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--out", metavar="DIR", help="directory for trace.txt, trace.json and the CSV series")
    traffic(sp)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("compare", help="worst observed value next to each bound")
    common(sp)
    traffic(sp)
    sp.set_defaults(fn=cmd_compare)

    sp = sub.add_parser("tighten", help="run the worst-case scenario for a flow and show how close it gets")
    common(sp)
    sp.add_argument("target", metavar="FLOW[@I->J]")
    sp.add_argument("--horizon", type=int, metavar="PS")
    sp.set_defaults(fn=cmd_tighten)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (InputError, SpecError, ScenarioError, BoundsError, SimulationError, KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        for d in getattr(exc, "diagnostics", []):
            print(f"  {d}", file=sys.stderr)
        return INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
