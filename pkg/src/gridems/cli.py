"""Command-line driver: ``gridems run --case FILE [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .netmodel import CaseFormatError, Config, read_case
from .orchestrator import compare, run_procedure_a, run_procedure_b
from .report import comparison, summary, tabular
from .sced import ScedKind

log = logging.getLogger("gridems")


@dataclass(frozen=True)
class RunSpec:
    case: Path
    procedure: str
    model: ScedKind
    config: Config
    out: Path | None
    fmt: str
    compare: bool


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture by file name."""
    return Path(str(resources.files("gridems") / "fixtures" / name))


def resolve_case(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    bundled = fixture_path(p.name)
    if bundled.exists():
        return bundled
    raise FileNotFoundError(f"case file {arg} not found")


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text}")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gridems", description="Dispatch procedures on a grid case")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a dispatch procedure")
    run.add_argument("--case", required=True, help="case file (bundled fixtures found by name)")
    run.add_argument("--procedure", choices=["A", "B"], default="A")
    run.add_argument("--model", choices=[k.value for k in ScedKind], default="M1")
    run.add_argument("--pct", type=_positive, default=1.0)
    run.add_argument("--pctc", type=_positive, default=1.0)
    run.add_argument("--ted", type=_positive, default=5.0, help="dispatch interval (min)")
    run.add_argument("--tsr", type=_positive, default=10.0, help="reserve response time (min)")
    run.add_argument("--shed-penalty", type=_positive, default=5000.0)
    run.add_argument("--derate", type=_positive, default=1.0)
    run.add_argument("--compare", action="store_true", help="run A and B and compare")
    run.add_argument("--out", help="report file (default stdout)")
    run.add_argument("--format", choices=["text", "tabular"], default="tabular")
    run.add_argument("-v", "--verbose", action="store_true")
    return ap


def parse_spec(argv) -> RunSpec:
    ns = build_parser().parse_args(argv)
    cfg = Config(pct=ns.pct, pctc=ns.pctc, t_ed=ns.ted, t_sr=ns.tsr,
                 shed_penalty=ns.shed_penalty, derate=ns.derate)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING)
    return RunSpec(Path(ns.case), ns.procedure, ScedKind(ns.model), cfg,
                   Path(ns.out) if ns.out else None, ns.format, ns.compare)


def execute(spec: RunSpec) -> tuple[str, str]:
    """Returns (report text, console summary)."""
    case = read_case(resolve_case(str(spec.case)))
    fmt = tabular if spec.fmt == "tabular" else summary
    if spec.compare:
        a, b = compare(case, spec.config, spec.model)
        cmp = comparison(a, b)
        body = fmt(a) + "\n" + fmt(b) + "\n" + cmp
        return body, cmp + f"CCR {b.ccr:.6f}\n"
    run = run_procedure_a if spec.procedure == "A" else run_procedure_b
    rep = run(case, spec.config, spec.model)
    return fmt(rep), summary(rep)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        spec = parse_spec(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    except ValueError as exc:
        print(f"gridems: {exc}", file=sys.stderr)
        return 2
    try:
        body, console = execute(spec)
    except (FileNotFoundError, CaseFormatError) as exc:
        print(f"gridems: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # numerical or procedural failure
        log.debug("run failed", exc_info=True)
        print(f"gridems: run failed: {exc}", file=sys.stderr)
        return 1
    if spec.out is None:
        sys.stdout.write(body)
    else:
        spec.out.write_text(body, encoding="utf-8")
        sys.stdout.write(console)
    return 0


if __name__ == "__main__":
    sys.exit(main())
