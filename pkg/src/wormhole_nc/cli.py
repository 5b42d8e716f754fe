"""
Command-line front end.

Data goes to stdout (or ``--output``), diagnostics to stderr. Exit codes:
0 valid and schedulable, 1 some flow misses its deadline, 2 invalid input
or instability, 3 the simulator exceeded an analytic bound or deadlocked.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Sequence

from .analysis import (
    NOT_SCHEDULABLE,
    UNSTABLE,
    Analyzer,
    CyclicDependencyError,
    FlowResult,
)
from .blocking import BUFFER_AWARE, CONVENTIONAL, blocking_report
from .model import ConfigError, NetworkModel, Flow, parse_config, validate
from .simulator import exceeds_bound, parse_sim_section, sweep_offsets

EXIT_OK = 0
EXIT_MISS = 1
EXIT_INVALID = 2
EXIT_UNSOUND = 3

RESULT_COLUMNS = ("flow", "d_tr", "d_db", "d_ib", "d_eed", "deadline", "verdict")
HEADERS = {"d_tr": "D_TR", "d_db": "D_DB", "d_ib": "D_IB", "d_eed": "D_eed"}


class InputError(Exception):
    pass


def _load(path: str) -> tuple[dict, NetworkModel, list[Flow]]:
    try:
        with open(path, encoding="utf-8") as fh:
            document = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}") from None
    try:
        model, flows = parse_config(document)
    except ConfigError as exc:
        raise InputError(f"{path}: {exc}") from None
    return document, model, flows


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def _table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [list(header)] + [[_fmt(v) for v in row] for row in rows]
    widths = [max(len(r[c]) for r in cells) for c in range(len(header))]
    lines = []
    for n, row in enumerate(cells):
        lines.append("  ".join(v.rjust(w) if n and c else v.ljust(w)
                               for c, (v, w) in enumerate(zip(row, widths))).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else repr(v) if isinstance(v, float) else v
                         for v in row])
    return out.getvalue()


def _emit(text: str, output: str | None) -> None:
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _result_rows(results: Sequence[FlowResult]) -> list[list]:
    return [[getattr(r, c) for c in RESULT_COLUMNS] for r in results]


def _status(results: Sequence[FlowResult]) -> int:
    verdicts = {r.verdict for r in results}
    if UNSTABLE in verdicts:
        return EXIT_INVALID
    if NOT_SCHEDULABLE in verdicts:
        return EXIT_MISS
    return EXIT_OK


def _analyzer(model: NetworkModel, flows: list[Flow], fluid: bool = False) -> Analyzer:
    try:
        return Analyzer(model, flows, fluid=fluid)
    except CyclicDependencyError as exc:
        raise InputError(str(exc)) from None


def _report_violations(model: NetworkModel, flows: list[Flow]) -> bool:
    report = validate(model, flows)
    for v in report.violations:
        print(f"violation: {v}", file=sys.stderr)
    return report.ok


# --- commands ----------------------------------------------------------------

def cmd_validate(args) -> int:
    _, model, flows = _load(args.file)
    report = validate(model, flows)
    rows = [[v.kind, v.where, v.message] for v in report.violations]
    if args.format == "json":
        text = json.dumps({"valid": report.ok,
                           "violations": [dict(zip(("kind", "where", "message"), r))
                                          for r in rows]}, indent=2) + "\n"
    elif args.format == "csv":
        text = _csv(("kind", "where", "message"), rows)
    else:
        text = (f"{len(flows)} flows, {len(model.routers)} routers: "
                + ("valid\n" if report.ok else "INVALID\n"))
        if rows:
            text += _table(("kind", "where", "message"), rows)
    _emit(text, args.output)
    for v in report.violations:
        print(f"violation: {v}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_INVALID


def _modes(mode: str) -> list[str]:
    return [BUFFER_AWARE, CONVENTIONAL] if mode == "both" else [mode]


def cmd_analyze(args) -> int:
    _, model, flows = _load(args.file)
    if args.buffer is not None:
        model = model.with_buffer(args.buffer)
    _report_violations(model, flows)
    analyzer = _analyzer(model, flows, args.fluid)
    modes = _modes(args.mode)
    results = {m: analyzer.analyze(m) for m in modes}

    if args.format == "json":
        doc = {"buffer": model.buffer, "time_unit": model.time_unit, "modes": {}}
        for m in modes:
            doc["modes"][m] = {
                "flows": [r.to_dict() for r in results[m]],
                "blocking": blocking_report(model, flows, m).to_dict(),
            }
        text = json.dumps(doc, indent=2) + "\n"
    elif args.format == "csv":
        rows = [[m] + row for m in modes for row in _result_rows(results[m])]
        text = _csv(("mode",) + RESULT_COLUMNS, rows)
    else:
        header = [HEADERS.get(c, c) for c in RESULT_COLUMNS]
        text = ""
        for m in modes:
            text += f"mode {m}, buffer {model.buffer:g} bytes, times in {model.time_unit}\n"
            text += _table(header, _result_rows(results[m])) + "\n"
        if len(modes) == 2:
            rows = []
            for a, c in zip(results[BUFFER_AWARE], results[CONVENTIONAL]):
                delta = None if a.d_eed is None or c.d_eed is None else c.d_eed - a.d_eed
                rows.append([a.flow, a.d_eed, c.d_eed, delta])
            text += _table(("flow", "aware", "conventional", "delta"), rows)
    _emit(text, args.output)
    for m in modes:
        for r in results[m]:
            if r.verdict == UNSTABLE:
                print(f"{m}: {r.flow} unstable: {r.reason}", file=sys.stderr)
    return max(_status(results[m]) for m in modes)


def cmd_sweep(args) -> int:
    if args.buffer_min < 1 or args.step < 1 or args.buffer_min > args.buffer_max:
        raise InputError("sweep range needs 1 <= min <= max and step >= 1")
    _, model, flows = _load(args.file)
    _report_violations(model, flows)
    analyzer = _analyzer(model, flows, args.fluid)
    modes = _modes(args.mode)
    buffers = []
    b = args.buffer_min
    while b <= args.buffer_max + 1e-9:
        buffers.append(int(b) if float(b).is_integer() else b)
        b += args.step
    rows = []
    status = EXIT_OK
    for buf in buffers:
        for m in modes:
            results = analyzer.analyze(m, buf)
            status = max(status, _status(results))
            rows.extend([buf, r.flow, m, r.d_eed, r.verdict] for r in results)
    header = ("buffer", "flow", "mode", "d_eed", "verdict")
    if args.format == "json":
        text = json.dumps([dict(zip(header, r)) for r in rows], indent=2) + "\n"
    elif args.format == "csv":
        text = _csv(header, rows)
    else:
        text = _table(header, rows)
    _emit(text, args.output)
    return status


def cmd_simulate(args) -> int:
    document, model, flows = _load(args.file)
    if args.buffer is not None:
        model = model.with_buffer(args.buffer)
    if not _report_violations(model, flows):
        print("refusing to simulate an invalid or unstable network", file=sys.stderr)
        return EXIT_INVALID
    try:
        config = parse_sim_section(document, model, flows)
    except ConfigError as exc:
        raise InputError(f"{args.file}: {exc}") from None
    trials = args.trials if args.trials is not None else config.trials
    seed = args.seed if args.seed is not None else config.seed
    if trials < 1:
        raise InputError("--trials must be at least 1")
    report = sweep_offsets(config, trials, seed, workers=args.workers)
    bounds = {r.flow: r for r in _analyzer(model, flows, args.fluid).analyze(BUFFER_AWARE)}

    rows = []
    unsound = report.deadlock
    for f in flows:
        s = report.flows[f.id]
        bound = bounds[f.id].d_eed
        ratio = s.max_latency / bound if bound else None
        if bound is not None and exceeds_bound(s.max_latency, bound):
            unsound = True
            print(f"soundness violation: {f.id} observed {s.max_latency:g} "
                  f"> bound {bound:g}", file=sys.stderr)
        rows.append([f.id, s.packets, s.max_latency, bound, ratio])
    if report.deadlock:
        print("simulation deadlocked", file=sys.stderr)

    header = ("flow", "packets", "observed_max", "d_eed", "ratio")
    if args.format == "json":
        doc = report.to_dict()
        doc["comparison"] = [dict(zip(header, r)) for r in rows]
        text = json.dumps(doc, indent=2) + "\n"
    elif args.format == "csv":
        text = _csv(header, rows)
    else:
        text = (f"{trials} trials, seed {seed}, buffer {model.buffer:g} bytes, "
                f"times in {model.time_unit}\n" + _table(header, rows))
    _emit(text, args.output)
    return EXIT_UNSOUND if unsound else EXIT_OK


# --- argument parsing ----------------------------------------------------------

def _positive(value: str) -> float:
    v = float(value)
    if not v >= 1:
        raise argparse.ArgumentTypeError(f"expected a number >= 1, got {value}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wormhole-nc",
        description="Worst-case delay bounds for wormhole networks-on-chip.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("file", help="network and flow description (JSON)")
    common.add_argument("--format", choices=("table", "csv", "json"), default="table")
    common.add_argument("--output", "-o", help="write data here instead of stdout")
    common.add_argument("--fluid", action="store_true",
                        help="serve output shares as a fluid, ignoring that ports "
                             "are granted per packet (not sound against the simulator)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check structure and stability")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("analyze", parents=[common], help="per-flow delay bounds")
    p.add_argument("--mode", choices=(BUFFER_AWARE, CONVENTIONAL, "both"),
                   default=BUFFER_AWARE)
    p.add_argument("--buffer", type=_positive, help="override every input buffer (bytes)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", parents=[common], help="both modes side by side")
    p.add_argument("--buffer", type=_positive, help="override every input buffer (bytes)")
    p.set_defaults(func=cmd_analyze, mode="both")

    p = sub.add_parser("sweep", parents=[common], help="bounds over a range of buffer sizes")
    p.add_argument("--buffer-min", type=_positive, required=True)
    p.add_argument("--buffer-max", type=_positive, required=True)
    p.add_argument("--step", type=_positive, default=1.0)
    p.add_argument("--mode", choices=(BUFFER_AWARE, CONVENTIONAL, "both"),
                   default=BUFFER_AWARE)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", parents=[common],
                       help="flit-level simulation checked against the bounds")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--buffer", type=_positive, help="override every input buffer (bytes)")
    p.add_argument("--workers", type=int, default=1, help="parallel trial processes")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
