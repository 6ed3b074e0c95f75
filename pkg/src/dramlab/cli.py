"""Command-line front end.

Subcommands: ``asm``/``disasm``/``build`` move programs between the .dbasm
text form, the builder-script JSON form, and the binary image; ``run``
executes a program on a profile and reports; ``debug`` opens the interactive
session; ``study1``/``study2``/``study3`` run the seeded studies;
``calibrate`` fits a fault model and emits a profile document.

Failures print one JSON object ``{"error": <code>, "message": <text>}`` on
stderr and exit nonzero, so callers in other languages can match on the
error code.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__, isa
from .asm import parse_assembly
from .builder import from_script, load_image
from .calibrate import HammerTargets, calibrated_fault_model
from .config import initialize, load_config
from .core import trace_to_csv
from .debugger import DebugSession, run_repl
from .experiments import RUNNERS, StudyConfig
from .timing import violations_to_csv

_STUDY_NAMES = {"study1": "interleave", "study2": "data_pattern", "study3": "majority"}


def load_program_file(path: str):
    """Assemble ``.dbasm`` text or decode a binary image, by content."""
    blob = Path(path).read_bytes()
    if blob[: len(isa.MAGIC)] == isa.MAGIC:
        return load_image(blob)
    return parse_assembly(blob.decode("utf-8")).assemble()


def _write_or_print(text: str, dest: str | None) -> None:
    if dest in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(dest).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommand handlers


def cmd_asm(args) -> int:
    program = parse_assembly(Path(args.source).read_text(encoding="utf-8"))
    assembled = program.assemble()
    Path(args.output).write_bytes(assembled.to_bytes())
    print(f"{len(assembled)} instructions -> {args.output}")
    return 0


def cmd_disasm(args) -> int:
    assembled = load_image(Path(args.source).read_bytes())
    _write_or_print(assembled.disassemble_text(), args.output)
    return 0


def cmd_build(args) -> int:
    script = json.loads(Path(args.script).read_text(encoding="utf-8"))
    assembled = from_script(script).assemble()
    Path(args.output).write_bytes(assembled.to_bytes())
    if args.labels:
        doc = {"labels": assembled.labels, "hints": assembled.hints,
               "instructions": len(assembled)}
        Path(args.labels).write_text(json.dumps(doc, indent=1) + "\n",
                                     encoding="utf-8")
    print(f"{len(assembled)} instructions -> {args.output}")
    return 0


def _platform_for(args):
    overrides = {}
    if getattr(args, "refresh", None) is not None:
        overrides = {"scheduler": {"refresh_enabled": args.refresh == "on"}}
    return initialize(args.profile, overrides or None)


def cmd_run(args) -> int:
    platform = _platform_for(args)
    program = load_program_file(args.program)
    report = platform.execute(
        program,
        max_cycles=args.max_cycles,
        collect_trace=args.trace is not None,
    )
    if args.trace is not None:
        _write_or_print(trace_to_csv(report.trace), args.trace)
    if args.violations is not None:
        _write_or_print(violations_to_csv(report.timing_violations), args.violations)
    doc = report.to_dict()
    if args.data is not None:
        Path(args.data).write_bytes(platform.receive_data(report.transfers))
    if args.report_json is not None:
        _write_or_print(json.dumps(doc, indent=1) + "\n", args.report_json)
    else:
        hist = ", ".join(f"{op}:{n}" for op, n in sorted(doc["histogram"].items()))
        print(f"profile:    {platform.name}")
        print(f"cycles:     {doc['cycles']}  (wall slots {doc['wall_slots']})")
        print(f"commands:   {hist or '-'}")
        print(f"transfers:  {doc['transfers']}   flips: {doc['flips']}")
        print(
            f"violations: {doc['timing_violations']} timing, "
            f"{doc['state_violations']} state"
        )
        if doc["trap"]:
            print(f"trap:       {doc['trap']['kind']} at pc {doc['trap']['pc']}")
        elif not doc["halted"]:
            print("halted:     no (max cycles reached)")
    return 0


def cmd_debug(args) -> int:
    platform = _platform_for(args)
    program = load_program_file(args.program)
    session = DebugSession(platform, program, vcd=args.vcd is not None)
    run_repl(session, sys.stdin, sys.stdout)
    if args.vcd is not None:
        Path(args.vcd).write_text(session.vcd.render(), encoding="utf-8")
        print(f"waveform -> {args.vcd}")
    return 0


def cmd_study(args) -> int:
    kwargs = {
        "study": _STUDY_NAMES[args.command],
        "profile": args.profile,
        "seed": args.seed,
    }
    if getattr(args, "full_bank", False):
        kwargs["rows_tested"] = 4096
    cfg = StudyConfig(**kwargs)
    result = RUNNERS[cfg.study](cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, content in result.files.items():
        (out / name).write_text(content, encoding="utf-8")
    (out / "summary.txt").write_text(result.table + "\n", encoding="utf-8")
    (out / "summary.json").write_text(
        json.dumps(result.summary, indent=1, default=str) + "\n", encoding="utf-8"
    )
    print(result.table)
    print(f"results -> {out}")
    return 0


def cmd_calibrate(args) -> int:
    targets = None
    if args.targets:
        raw = json.loads(Path(args.targets).read_text(encoding="utf-8"))
        fields = {f.name for f in dataclasses.fields(HammerTargets)}
        targets = HammerTargets(**{k: v for k, v in raw.items() if k in fields})
    fault_model = calibrated_fault_model(args.profile, seed=args.seed, targets=targets)
    doc = load_config(args.base)
    doc["name"] = args.profile
    doc["fault_model"] = fault_model
    _write_or_print(json.dumps(doc, indent=1) + "\n", args.out)
    return 0


def cmd_version(args) -> int:
    print(__version__)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dramlab",
        description="program-driven DRAM testing on an emulated platform",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("asm", help="assemble .dbasm text to a binary image")
    p.add_argument("source")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("disasm", help="disassemble a binary image to .dbasm text")
    p.add_argument("source")
    p.add_argument("-o", "--output", default=None, help="default: stdout")

    p = sub.add_parser("build", help="assemble a builder-script JSON file")
    p.add_argument("script")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--labels", default=None, help="write labels/hints JSON here")

    p = sub.add_parser("run", help="execute a program on a profile")
    p.add_argument("program", help=".dbasm text or binary image")
    p.add_argument("--profile", default="ddr4_default")
    p.add_argument("--trace", default=None, help="write command trace CSV")
    p.add_argument("--violations", default=None, help="write violations CSV")
    p.add_argument("--max-cycles", type=int, default=10_000_000)
    p.add_argument("--refresh", choices=("on", "off"), default=None)
    p.add_argument("--report-json", default=None, help="write report JSON ('-' = stdout)")
    p.add_argument("--data", default=None,
                   help="write received readback transfers here (64 bytes each, binary)")

    p = sub.add_parser("debug", help="interactive debugging session")
    p.add_argument("program")
    p.add_argument("--profile", default="ddr4_default")
    p.add_argument("--vcd", default=None, help="write a value-change dump here")

    for name in ("study1", "study2", "study3"):
        p = sub.add_parser(name, help=f"run the {_STUDY_NAMES[name]} study")
        p.add_argument("--profile", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, help="output directory")
        if name == "study1":
            p.add_argument("--full-bank", action="store_true",
                           help="test every victim triple in the bank")

    p = sub.add_parser("calibrate", help="fit a fault model and emit a profile")
    p.add_argument("profile", help="target profile id (mfrA/mfrB/mfrC or custom)")
    p.add_argument("--targets", default=None, help="JSON file of endpoint targets")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--base", default="ddr4_default",
                   help="profile supplying geometry and timing")
    p.add_argument("--out", default=None, help="write profile JSON ('-' = stdout)")

    sub.add_parser("version", help="print the package version")
    return parser


_HANDLERS = {
    "asm": cmd_asm,
    "disasm": cmd_disasm,
    "build": cmd_build,
    "run": cmd_run,
    "debug": cmd_debug,
    "study1": cmd_study,
    "study2": cmd_study,
    "study3": cmd_study,
    "calibrate": cmd_calibrate,
    "version": cmd_version,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - single reporting point
        code = getattr(exc, "code", type(exc).__name__)
        print(json.dumps({"error": code, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
