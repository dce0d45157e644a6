"""Command-line driver: ``btbsim run`` and ``btbsim plot``.

Exit codes: 0 success, 1 usage error, 2 parse error, 3 numerical
divergence or other model error, 4 comparison threshold exceeded.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import engine, oracle
from .errors import BtbError, ModelError, ScenarioError
from .network import LoadEvent
from .output import (
    COMPARE_COLUMNS,
    SimulationLog,
    deviation_report,
    emit_plot_script,
    settling_time,
    write_csv,
)
from .scenario import Scenario, load_scenario

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_MODEL = 3
EXIT_COMPARE = 4

#: Comparison thresholds, as fractions of the DC reference and converter rating.
V_DC_MAX_FRACTION = 0.005
POWER_RMS_FRACTION = 0.01
POWER_COLUMNS = ("p_g", "q_g", "p_m", "q_m")

SETTLING_BAND = 1.0  # volts


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="btbsim", description="Phasor-domain back-to-back converter simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="simulate a scenario and write a CSV log")
    run.add_argument("scenario", help="scenario file, or the name of a bundled scenario (scenario_a, scenario_b)")
    run.add_argument("--dt", type=_positive_float, help="time step in seconds (default: from the scenario)")
    run.add_argument("--t-stop", type=_positive_float, help="end time in seconds (default: from the scenario)")
    run.add_argument("--out", type=Path, help="CSV path (default: <scenario name>.csv)")
    run.add_argument("--stride", type=_positive_int, help="log every N-th step (default: from the scenario)")
    mode = run.add_mutually_exclusive_group()
    mode.add_argument("--oracle", action="store_true", help="run the fine-step RK4 reference instead")
    mode.add_argument("--compare", action="store_true", help="run both and report deviations")
    run.add_argument("--summary", action="store_true", help="print final values and settling times")

    plot = sub.add_parser("plot", help="write a matplotlib script for a CSV log")
    plot.add_argument("csv", type=Path)
    plot.add_argument("--out", type=Path, help="script path (default: <csv>.plot.py)")
    plot.add_argument("--panels", choices=("auto", "currents", "powers"), default="auto")
    return parser


# --- run ---------------------------------------------------------------------


def _configure(sc: Scenario, args) -> Scenario:
    changes = {}
    if args.dt is not None:
        changes["dt"] = args.dt
    if args.t_stop is not None:
        changes["t_stop"] = args.t_stop
    if args.stride is not None:
        changes["log_stride"] = args.stride
    return sc.with_simulation(**changes) if changes else sc


def _oracle_config(sc: Scenario) -> oracle.OracleConfig:
    sim = sc.simulation
    return oracle.OracleConfig(dt_fine=min(1e-5, sim.dt / 10), log_interval=sim.dt * sim.log_stride)


def comparison_report(sc: Scenario, phasor: SimulationLog, ref: SimulationLog) -> tuple[str, bool]:
    """Text report of per-column deviations and whether thresholds hold."""
    dev = deviation_report(phasor, ref, COMPARE_COLUMNS)
    v_limit = V_DC_MAX_FRACTION * sc.v_dc_ref
    p_limit = POWER_RMS_FRACTION * min(sc.gsc.s_rated, sc.msc.s_rated)
    lines = [f"{'column':<8} {'max |dev|':>14} {'rms dev':>14}"]
    for col, (mx, rms) in dev.items():
        lines.append(f"{col:<8} {mx:>14.6g} {rms:>14.6g}")
    ok_v = dev["v_dc"][0] <= v_limit
    worst_p = max(dev[c][1] for c in POWER_COLUMNS)
    ok_p = worst_p <= p_limit
    lines.append(f"v_dc max deviation {dev['v_dc'][0]:.6g} V (limit {v_limit:.6g} V): {'ok' if ok_v else 'EXCEEDED'}")
    lines.append(f"power rms deviation {worst_p:.6g} (limit {p_limit:.6g}): {'ok' if ok_p else 'EXCEEDED'}")
    return "\n".join(lines) + "\n", ok_v and ok_p


def _value_text(value) -> str:
    if isinstance(value, LoadEvent):
        return "off" if value.z is None else f"{value.z:g} ohm"
    return f"{value:g}"


def settling_report(sc: Scenario, log: SimulationLog) -> list[tuple[float, str, float | None]]:
    """(event time, description, settling time or None) per distinct event time."""
    t_end = float(log.t[-1]) + 1e-9
    times = sorted({ev.time for ev in sc.events if ev.time < t_end})
    v_ref = sc.v_dc_ref
    out = []
    for k, te in enumerate(times):
        group = [ev for ev in sc.events if ev.time == te]
        for ev in group:
            if ev.target == "gsc.v_dc_ref":
                v_ref = ev.value
        window_end = times[k + 1] if k + 1 < len(times) else t_end + 1.0
        desc = ", ".join(f"{ev.target}={_value_text(ev.value)}" for ev in group)
        out.append((te, desc, settling_time(log, te, window_end, v_ref, SETTLING_BAND)))
    return out


def summary_text(sc: Scenario, log: SimulationLog, wall: float) -> str:
    lines = [f"scenario {sc.name or '?'}: {len(log)} rows, {log.source} engine, {wall:.3f} s wall"]
    lines.append(f"final values at t = {log.t[-1]:.6g} s:")
    for col, unit in (("v_dc", "V"), ("i_dc_g", "A"), ("i_dc_m", "A"), ("p_g", "W"), ("q_g", "var"),
                      ("p_m", "W"), ("q_m", "var")):
        lines.append(f"  {col:<7} {log[col][-1]:>14.6f} {unit}")
    try:
        ss = oracle.steady_state(sc, after_events=True)
    except ModelError as exc:
        lines.append(f"steady-state solver: {exc}")
    else:
        lines.append("steady state after all events (solver):")
        for col, unit in (("v_dc", "V"), ("i_dc_g", "A"), ("i_dc_m", "A"), ("p_g", "W"), ("p_m", "W")):
            lines.append(f"  {col:<7} {ss.outputs[col]:>14.6f} {unit}")
    lines.append(f"v_dc settling to within +/-{SETTLING_BAND:g} V of the reference:")
    rep = settling_report(sc, log)
    if not rep:
        lines.append("  (no events)")
    for te, desc, ts in rep:
        lines.append(f"  t = {te:g} s  {desc}: " + (f"{ts:.3f} s" if ts is not None else "not settled"))
    return "\n".join(lines) + "\n"


def _run(args) -> int:
    sc = _configure(load_scenario(args.scenario), args)
    out = args.out or Path(f"{sc.name or 'btbsim'}.csv")
    t0 = time.perf_counter()
    try:
        if args.oracle:
            log = oracle.run_fine(sc, _oracle_config(sc))
        else:
            log = engine.run(sc)
    except ModelError as exc:
        if exc.log is not None and len(exc.log):
            write_csv(exc.log, out)
            print(f"btbsim: partial log ({len(exc.log)} rows) written to {out}", file=sys.stderr)
        print(f"btbsim: error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    wall = time.perf_counter() - t0
    write_csv(log, out)
    print(f"wrote {len(log)} rows to {out}")
    status = EXIT_OK
    if args.compare:
        try:
            ref = oracle.run_fine(sc, _oracle_config(sc))
        except ModelError as exc:
            print(f"btbsim: error: reference run failed: {exc}", file=sys.stderr)
            return EXIT_MODEL
        text, ok = comparison_report(sc, log, ref)
        report = out.with_suffix(".compare.txt")
        report.write_text(text)
        sys.stdout.write(text)
        print(f"wrote comparison report to {report}")
        if not ok:
            status = EXIT_COMPARE
    if args.summary:
        sys.stdout.write(summary_text(sc, log, wall))
    return status


def _plot(args) -> int:
    path = emit_plot_script(args.csv, args.out, args.panels)
    print(f"wrote plot script to {path}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args) if args.command == "run" else _plot(args)
    except ScenarioError as exc:
        print(f"btbsim: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ModelError as exc:
        print(f"btbsim: error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (BtbError, OSError) as exc:
        print(f"btbsim: error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
