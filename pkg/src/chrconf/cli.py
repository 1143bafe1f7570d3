"""Command-line front end: ``chrconf check`` and ``chrconf oracle``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from typing import List, Optional

from . import report
from .builtins import UnsupportedBuiltin
from .confluence import MODES, Limits, ModeError, check, probe_simulation
from .semantics import StateRepr, canonicalize, oracle_local_confluence, IDENTITY
from .specs import Spec, SpecEquivalence, parse_spec_file
from .syntax import ParseError, PreApplicationError, Program, parse_program_file

EXIT_USAGE = 3


@dataclass
class RunConfig:
    program_path: str
    mode: str = "classical"
    spec_path: Optional[str] = None
    assume_terminating: bool = False
    join_depth: int = 8
    split_depth: int = 4
    max_states: int = 10_000
    output_format: str = "text"
    export_dot: Optional[str] = None
    seed: int = 0
    probes: bool = False

    def validate(self) -> None:
        if self.mode != "classical" and not self.spec_path:
            raise ModeError(f"--mode {self.mode} needs --spec")

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chrconf", description="Confluence checking for CHR programs.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="check a program for (observable) confluence")
    c.add_argument("program")
    c.add_argument("--mode", choices=MODES, default="classical")
    c.add_argument("--spec", help=".cspec file with the invariant and equivalence")
    c.add_argument("--assume-terminating", action="store_true",
                   help="assert termination, so local confluence gives confluence")
    c.add_argument("--join-depth", type=int, default=8)
    c.add_argument("--split-depth", type=int, default=4)
    c.add_argument("--max-states", type=int, default=10_000)
    c.add_argument("--format", choices=("text", "json"), default="text")
    c.add_argument("--export-dot", metavar="DIR", help="write .dot, JSON, text and PNG evidence to DIR")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--probes", action="store_true", help="run sampled simulation-soundness probes")

    o = sub.add_parser("oracle", help="enumerate reachable states and audit their corners")
    o.add_argument("program")
    o.add_argument("--init", action="append", default=[],
                   help="initial state, e.g. 'item(a), set([])' or 'p(X) | X > 0'; repeatable")
    o.add_argument("--init-file", help="file with one initial state per line")
    o.add_argument("--spec", help=".cspec file; its equivalence is used when --mode mod-equiv")
    o.add_argument("--mode", choices=("classical", "mod-equiv"), default="classical")
    o.add_argument("--max-states", type=int, default=10_000)
    o.add_argument("--format", choices=("text", "json"), default="text")
    o.add_argument("--export-dot", metavar="DIR")
    return p


def _load(path: str, spec_path: Optional[str]):
    prog = parse_program_file(path)
    spec = parse_spec_file(spec_path) if spec_path else None
    return prog, spec


def run_check(args) -> int:
    cfg = RunConfig(args.program, args.mode, args.spec, args.assume_terminating, args.join_depth,
                    args.split_depth, args.max_states, args.format, args.export_dot, args.seed, args.probes)
    cfg.validate()
    prog, spec = _load(cfg.program_path, cfg.spec_path)
    limits = Limits(cfg.join_depth, cfg.split_depth, cfg.max_states, cfg.seed)
    verdict = check(prog, cfg.mode, spec, cfg.assume_terminating, limits)
    probes = None
    if cfg.probes:
        sim = probe_simulation(verdict, prog, seed=cfg.seed)
        covers = [s.probe for s in verdict.splits()]
        probes = {
            "simulation": {"transitions": sim.transitions, "samples": sim.samples, "passed": sim.passed,
                           "failures": sim.failures[:10]},
            "cover": {"splits": len(covers), "passed": all(p.passed for p in covers)},
        }
    data = report.to_json(verdict, prog, cfg.as_dict(), probes)
    if cfg.output_format == "json":
        print(json.dumps(data, indent=2))
    else:
        sys.stdout.write(report.to_text(data))
    if cfg.export_dot:
        report.export(data, cfg.export_dot)
    return verdict.exit_code


def _read_inits(args) -> List[str]:
    inits = list(args.init)
    if args.init_file:
        with open(args.init_file, encoding="utf-8") as f:
            inits += [ln.strip() for ln in f if ln.strip() and not ln.lstrip().startswith("%")]
    return inits


def run_oracle(args) -> int:
    prog, spec = _load(args.program, args.spec)
    texts = _read_inits(args)
    if not texts:
        raise UsageError("no initial states given (use --init or --init-file)")
    inits = []
    for t in texts:
        try:
            inits.append(canonicalize(StateRepr.parse(t)))
        except ParseError as e:
            raise ParseError(e.msg, e.line, e.col, f"--init {t!r}") from None
    equiv = IDENTITY
    if args.mode == "mod-equiv":
        if spec is None or spec.equiv is None:
            raise ModeError("--mode mod-equiv needs --spec with an equivalence")
        equiv = SpecEquivalence(spec.equiv)
    res = oracle_local_confluence(inits, prog, equiv, max_states=args.max_states, all_witnesses=True)
    finals = sorted(map(str, res.graph.finals()))
    data = {
        "schema": report.SCHEMA,
        "program": prog.path,
        "inits": [str(s) for s in inits],
        "states": len(res.graph.nodes),
        "truncated": res.graph.truncated,
        "finals": finals,
        "corners_checked": res.corners_checked,
        "verdict": res.verdict,
        "non_joinable": [str(c) for c in res.non_joinable],
    }
    if args.format == "json":
        print(json.dumps(data, indent=2))
    else:
        print(f"program: {prog.path}")
        print(f"reachable states: {len(res.graph.nodes)}" + (" (limit reached)" if res.graph.truncated else ""))
        print("final states:")
        for f in finals:
            print(f"  {f}")
        print(f"corners checked: {res.corners_checked}")
        for c in res.non_joinable:
            print(f"  not joinable: {c}")
        print(f"verdict: {res.verdict}")
    if args.export_dot:
        import os
        os.makedirs(args.export_dot, exist_ok=True)
        with open(os.path.join(args.export_dot, "states.dot"), "w", encoding="utf-8") as f:
            f.write(res.graph.to_dot())
        with open(os.path.join(args.export_dot, "oracle.json"), "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2)
    if res.verdict == "inconclusive":
        return 2
    return 0 if res.ok else 1


def main(argv: Optional[List[str]] = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else 0
    try:
        if args.command == "check":
            return run_check(args)
        return run_oracle(args)
    except ParseError as e:
        print(f"error: {e}", file=sys.stderr)
    except (ModeError, UsageError, PreApplicationError, UnsupportedBuiltin) as e:
        print(f"error: {e}", file=sys.stderr)
    except OSError as e:
        print(f"error: {e.filename}: {e.strerror}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
