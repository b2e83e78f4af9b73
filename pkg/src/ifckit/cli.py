"""Command line front end.

Exit status: 0 success, 1 a check or noninterference failure, 2 bad usage or
unreadable input.  Results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import analyzer, interp, lattice as lat, ni_checker
from .dsl import ParseError, TypeCheckError, parse, pretty_print, typecheck
from .erasure import erase_function
from .ifc_runtime import DYNAMIC, Ghost, GhostRefused, IfcContext, StaticResidual
from .values import ValueSyntaxError, format_value, parse_value
from .workbench.bench import BenchUsageError, parse_modes, run_bench
from .workbench.cases import resolve_source

OK, FAILED, USAGE = 0, 1, 2


class _Usage(Exception):
    pass


def _load(args):
    try:
        text = resolve_source(args.file)
    except (FileNotFoundError, OSError) as exc:
        raise _Usage(str(exc)) from None
    try:
        p = parse(text, allow_tcb=getattr(args, "tcb", False))
        typecheck(p)
    except (ParseError, TypeCheckError, lat.LatticeError) as exc:
        raise _Usage(f"{args.file}: {exc}") from None
    return p


def _label(spec, text):
    try:
        return spec.parse_label(text)
    except ValueError as exc:
        raise _Usage(str(exc)) from None


def _emit(doc):
    print(json.dumps(doc, indent=2, ensure_ascii=False))


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_laws(args) -> int:
    try:
        spec = lat.resolve(args.lattice)
    except lat.LatticeError as exc:
        raise _Usage(str(exc)) from None
    if args.mutate_join:
        spec = lat.mutate_join(spec)
    budget = "exhaustive" if args.samples is None else args.samples
    try:
        report = lat.check_laws(spec, budget, seed=args.seed)
    except lat.LatticeError as exc:
        raise _Usage(str(exc)) from None
    if args.json:
        _emit(report.to_dict())
    else:
        print(report.table())
    return OK if report.ok else FAILED


def cmd_parse(args) -> int:
    p = _load(args)
    sys.stdout.write(pretty_print(p))
    return OK


def cmd_analyze(args) -> int:
    p = _load(args)
    cert = analyzer.analyze(p)
    print(cert.to_json())
    if args.require_proved and not cert.fully_proved:
        print(f"unproved sites: {', '.join('@%d' % s for s in cert.needs_check_sites())}", file=sys.stderr)
        return FAILED
    return OK


def _certificate(args, p):
    if getattr(args, "cert", None):
        try:
            with open(args.cert) as fh:
                return analyzer.Certificate.from_json(fh.read(), p.lattice)
        except (OSError, ValueError, KeyError) as exc:
            raise _Usage(f"cannot read certificate: {exc}") from None
    return analyzer.analyze(p)


def cmd_residualize(args) -> int:
    p = _load(args)
    cert = _certificate(args, p)
    try:
        r = analyzer.residualize(p, cert)
    except analyzer.AnalyzerError as exc:
        raise _Usage(str(exc)) from None
    sys.stdout.write(pretty_print(r))
    return OK


def cmd_erase(args) -> int:
    p = _load(args)
    try:
        e = erase_function(p, args.entry)
    except KeyError as exc:
        raise _Usage(str(exc)) from None
    sys.stdout.write(pretty_print(e.program))
    return OK


def _ints(text):
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise _Usage(f"--ints expects comma-separated integers, got {text!r}") from None


def cmd_ni(args) -> int:
    p = _load(args)
    try:
        theorem = ni_checker.gen_ni_theorem(p, args.entry, ints=_ints(args.ints), max_list=args.max_list,
                                            clearances=not args.no_clearance)
    except KeyError as exc:
        raise _Usage(str(exc)) from None
    strategy = ni_checker.Random(args.seed, args.random) if args.random else ni_checker.Exhaustive()
    try:
        report = ni_checker.check_ni(theorem, strategy, args.fuel, allow_inconclusive=args.allow_inconclusive)
    except ValueError as exc:
        raise _Usage(str(exc)) from None
    doc = report.to_dict()
    doc["theorem"] = theorem.statement()
    _emit(doc)
    if not report.passed:
        what = "inconclusive cases" if report.counterexample is None else "counterexample found"
        print(f"noninterference check failed: {what}", file=sys.stderr)
        return FAILED
    return OK


def _mode(name, p):
    name = parse_modes(name)
    if len(name) != 1:
        raise _Usage("--mode takes exactly one of d, s, g")
    if name[0] == "dynamic":
        return DYNAMIC
    cert = analyzer.analyze(p)
    return StaticResidual(cert) if name[0] == "static" else Ghost(cert)


def cmd_run(args) -> int:
    p = _load(args)
    spec = p.lattice
    try:
        values = [parse_value(a, spec) for a in args.args]
    except ValueSyntaxError as exc:
        raise _Usage(str(exc)) from None
    cur = _label(spec, args.cur) if args.cur else spec.bottom
    clr = _label(spec, args.clearance) if args.clearance else None
    mode = _mode(args.mode, p)
    trace = [] if args.trace else None
    out = interp.eval_program(p, args.entry, values, IfcContext(cur, clr), mode, args.fuel, trace=trace)
    doc = {"entry": args.entry, "mode": type(mode).__name__}
    if out.ok:
        doc["value"] = format_value(out.value)
        doc["cur"] = None if out.final is None else out.final.cur.name
    else:
        doc["error"] = out.error.to_dict()
    if trace is not None:
        doc["trace"] = [[format_value(x) if not isinstance(x, (str, int, bool)) else x for x in ev] for ev in trace]
    _emit(doc)
    return OK if out.ok else FAILED


def cmd_bench(args) -> int:
    report = run_bench(args.case, args.modes, args.iters, args.seed, block=args.block)
    if args.csv:
        sys.stdout.write(report.to_csv())
    else:
        print(report.to_json())
    return OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ifckit", description="Floating-label IFC workbench")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("laws", help="check the lattice laws")
    s.add_argument("lattice")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--exhaustive", action="store_true", help="all triples (default)")
    g.add_argument("--samples", type=int, help="random triples instead")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mutate-join", action="store_true", help="check a copy whose join is broken")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_laws)

    def program(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("file")
        s.add_argument("--tcb", action="store_true", help="allow trusted forms such as setcurrent!")
        return s

    program("parse", "parse and pretty-print a program").set_defaults(func=cmd_parse)

    s = program("analyze", "emit the analyzer certificate")
    s.add_argument("--require-proved", action="store_true", help="exit 1 unless every site is proved")
    s.set_defaults(func=cmd_analyze)

    s = program("residualize", "print the program with proved checks removed")
    s.add_argument("--cert", help="certificate JSON (default: analyze now)")
    s.set_defaults(func=cmd_residualize)

    s = program("erase", "print the program with the erased copy of an entry")
    s.add_argument("--entry", required=True)
    s.set_defaults(func=cmd_erase)

    s = program("ni", "check noninterference of an entry")
    s.add_argument("--entry", required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--exhaustive", action="store_true", help="the whole grid (default)")
    g.add_argument("--random", type=int, metavar="N", help="N sampled cases")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--ints", default="0,1,2")
    s.add_argument("--max-list", type=int, default=2)
    s.add_argument("--fuel", type=int, default=interp.DEFAULT_FUEL)
    s.add_argument("--no-clearance", action="store_true", help="only contexts without a clearance")
    s.add_argument("--allow-inconclusive", action="store_true")
    s.set_defaults(func=cmd_ni)

    s = program("run", "evaluate an entry")
    s.add_argument("--entry", required=True)
    s.add_argument("--args", nargs="*", default=[], help="value literals, e.g. 3 '(labeled 1 High)'")
    s.add_argument("--cur")
    s.add_argument("--clearance")
    s.add_argument("--mode", default="d")
    s.add_argument("--fuel", type=int, default=interp.DEFAULT_FUEL)
    s.add_argument("--trace", action="store_true")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("bench", help="time the enforcement modes on a case study")
    s.add_argument("case", choices=["bus", "mmu", "datastar"])
    s.add_argument("--modes", default="d,s,g")
    s.add_argument("--iters", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--block", type=int, help="iterations per timing block (default: adaptive)")
    s.add_argument("--csv", action="store_true")
    s.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    try:
        return args.func(args)
    except _Usage as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    except GhostRefused as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    except (BenchUsageError, interp.UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
