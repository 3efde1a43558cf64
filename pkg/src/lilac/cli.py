"""``lilac`` command line: check, detect, rewrite, gen-harness, normalize, run.

Exit codes: 0 success, 1 unreadable or malformed input, 2 validation
failure (including refused rewrites), 3 no matches, 4 runtime trap,
5 matcher budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import IR_FORMAT_VERSION, SPEC_FORMAT_VERSION, __version__
from .analysis import normalize
from .errors import (
    BudgetExceeded,
    LilacError,
    MissingClass,
    OutOfBounds,
    ParseError,
    RewriteError,
    StepLimitExceeded,
    TypeTrap,
    UnboundVariable,
    UnregisteredHarness,
    ValidationFailed,
)
from .harnessgen import gen_all
from .interp import HarnessRegistry, Memory, bind_data, load_data, register_reference_harnesses, run, snapshot
from .ir import parse_ir, print_ir, verify
from .lilacfile import parse_lilac
from .matcher import DEFAULT_BUDGET, detect_with_diagnostics
from .rewrite import apply, plan

EXIT_OK, EXIT_PARSE, EXIT_INVALID, EXIT_NO_MATCH, EXIT_TRAP, EXIT_BUDGET = range(6)
RUNTIME_TRAPS = (OutOfBounds, StepLimitExceeded, TypeTrap, UnregisteredHarness, UnboundVariable)


class _Exit(Exception):
    def __init__(self, code: int, message: str = ""):
        self.code = code
        self.message = message


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise _Exit(EXIT_PARSE, f"{path}: {e.strerror or e}") from e


def _load_spec(path: str):
    try:
        return parse_lilac(_read(path))
    except ParseError as e:
        raise _Exit(EXIT_PARSE, f"{path}:{e}") from e


def _load_ir(path: str):
    try:
        m = parse_ir(_read(path))
    except ParseError as e:
        raise _Exit(EXIT_PARSE, f"{path}:{e}") from e
    diags = verify(m)
    if diags:
        raise _Exit(EXIT_INVALID, "\n".join(f"{path}: {d}" for d in diags))
    return m


def _what(spec, name: str):
    try:
        return spec.what(name)
    except KeyError:
        raise _Exit(EXIT_INVALID, f"no COMPUTATION named {name}") from None


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _format_value(v) -> str:
    if isinstance(v, float):
        return str(int(v)) if v.is_integer() and abs(v) < 2**53 else repr(v)
    if isinstance(v, list):
        return "[" + ",".join(_format_value(x) for x in v) + "]"
    return "void" if v is None else str(v)


# ---------------------------------------------------------------- commands


def cmd_check(args) -> int:
    spec = _load_spec(args.spec)
    diags = spec.validate()
    for d in diags:
        print(f"{args.spec}: {d}", file=sys.stderr)
    return EXIT_INVALID if diags else EXIT_OK


def _detect(args):
    spec = _load_spec(args.spec)
    m = _load_ir(args.program)
    result = detect_with_diagnostics(m, _what(spec, args.what), budget=args.budget)
    for d in result.diagnostics:
        print(f"{args.program}: {d}", file=sys.stderr)
    return spec, result


def cmd_detect(args) -> int:
    _, result = _detect(args)
    if args.format == "json":
        records = [mt.to_json(trace=args.trace) for mt in result.matches]
        print(json.dumps(records, indent=2, sort_keys=True))
    else:
        for mt in result.matches:
            binds = " ".join(f"{k}={v}" for k, v in mt.solution.names.items())
            print(f"{mt.function}:{mt.header} {mt.what} {binds}")
            if args.trace:
                for line in mt.trace.format().splitlines():
                    print("  " + line)
    if any(d.code == "BudgetExceeded" for d in result.diagnostics):
        return EXIT_BUDGET
    return EXIT_OK if result.matches else EXIT_NO_MATCH


def cmd_rewrite(args) -> int:
    spec, result = _detect(args)
    if args.harness is not None:
        try:
            h = spec.how.harness(args.harness)
        except KeyError:
            raise _Exit(EXIT_INVALID, f"no HARNESS named {args.harness}") from None
        if h.implements != args.what:
            raise _Exit(EXIT_INVALID, f"HARNESS {h.name} implements {h.implements}, not {args.what}")
    if not result.matches:
        _write(args.output, _read(args.program))
        return EXIT_BUDGET if result.diagnostics else EXIT_NO_MATCH
    plans = []
    for mt in result.matches:
        try:
            plans.append(plan(mt, whats=spec.whats, harness=args.harness))
        except RewriteError as e:
            print(f"{args.program}: {mt.function}:{mt.header}: {e.code}: {e}", file=sys.stderr)
    if not plans:
        _write(args.output, _read(args.program))
        return EXIT_INVALID
    try:
        out = apply(result.module, plans)
    except RewriteError as e:
        raise _Exit(EXIT_INVALID, f"{e.code}: {e}") from e
    _write(args.output, print_ir(out))
    for pl in plans:
        print(f"rewrote {pl.match.function}:{pl.match.header} -> @lilac.{pl.match.what}", file=sys.stderr)
    return EXIT_OK


def cmd_gen_harness(args) -> int:
    spec = _load_spec(args.spec)
    try:
        sources = gen_all(spec.how, spec.whats)
    except ValidationFailed as e:
        for d in e.diagnostics:
            print(f"{args.spec}: {d}", file=sys.stderr)
        return EXIT_INVALID
    except MissingClass as e:
        raise _Exit(EXIT_INVALID, str(e)) from e
    if args.harness is not None:
        if args.harness not in sources:
            raise _Exit(EXIT_INVALID, f"no HARNESS named {args.harness}")
        sources = {args.harness: sources[args.harness]}
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in sources.items():
        (out / f"{name}{args.ext}").write_text(text, encoding="utf-8")
        print(out / f"{name}{args.ext}")
    return EXIT_OK


def cmd_normalize(args) -> int:
    m = _load_ir(args.program)
    _write(args.output, print_ir(normalize(m)))
    return EXIT_OK


def cmd_run(args) -> int:
    m = _load_ir(args.program)
    try:
        data = load_data(args.data) if args.data else {}
    except (OSError, ValueError) as e:
        raise _Exit(EXIT_PARSE, f"{args.data}: {e}") from e
    except TypeTrap as e:
        raise _Exit(EXIT_PARSE, f"{args.data}: {e}") from e
    try:
        f = m.function(args.entry)
    except KeyError:
        raise _Exit(EXIT_INVALID, f"no function @{args.entry}") from None
    marshal = None
    registry = None
    page_backed = False
    if args.with_reference_harness:
        spec = _load_spec(args.with_reference_harness)
        registry = HarnessRegistry()
        if args.marshal_strategy:
            from .marshal import MarshalContext, Strategy

            marshal = MarshalContext(args.marshal_strategy)
            page_backed = marshal.strategy is Strategy.PAGEPROTECT
        register_reference_harnesses(registry, spec.whats, marshal=marshal)
    mem = Memory(page_backed=page_backed)
    try:
        call_args = bind_data(f, data, mem, wrap_scalars=True)
        ret, mem = run(m, args.entry, call_args, mem, step_limit=args.step_limit, harnesses=registry)
    except RUNTIME_TRAPS as e:
        raise _Exit(EXIT_TRAP, f"{e.code}: {e}") from e
    state = snapshot(f, call_args, ret, mem)
    stats = []
    if marshal is not None:
        for failure in marshal.release_all():
            print(f"{failure.code}: {failure}", file=sys.stderr)
        stats = marshal.stats()
    if args.format == "json":
        out = {k: v for k, v in state.items()}
        if args.stats:
            out["stats"] = stats
        print(json.dumps(out, sort_keys=True))
    else:
        if f.ret_type != "void":
            print(f"return={_format_value(ret)}")
        for name, _ in f.params:
            if name in state:
                print(f"{name}={_format_value(state[name])}")
        if args.stats:
            print("stats=" + json.dumps(stats, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lilac", description="Detect and replace linear-algebra loop nests.")
    p.add_argument(
        "--version",
        action="version",
        version=f"lilac {__version__} (ir format {IR_FORMAT_VERSION}, spec format {SPEC_FORMAT_VERSION})",
    )
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="parse and validate a .lilac specification")
    c.add_argument("spec")
    c.set_defaults(func=cmd_check)

    for name, func, help_ in (
        ("detect", cmd_detect, "find instances of a computation in an IR module"),
        ("rewrite", cmd_rewrite, "replace detected loop nests with harness calls"),
    ):
        d = sub.add_parser(name, help=help_)
        d.add_argument("--what", required=True, help="COMPUTATION to look for")
        d.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="search steps per candidate")
        d.add_argument("spec")
        d.add_argument("program")
        d.set_defaults(func=func)
        if name == "detect":
            d.add_argument("--trace", action="store_true", help="include the search trace")
            d.add_argument("--format", choices=("text", "json"), default="text")
        else:
            d.add_argument("--harness", help="HARNESS that will serve the call (checked against --what)")
            d.add_argument("-o", "--output", help="output file (default: stdout)")

    g = sub.add_parser("gen-harness", help="emit harness sources")
    g.add_argument("--harness", help="only this HARNESS")
    g.add_argument("--ext", default=".gen.cpp")
    g.add_argument("-o", "--output", required=True, help="output directory")
    g.add_argument("spec")
    g.set_defaults(func=cmd_gen_harness)

    n = sub.add_parser("normalize", help="run the normalization passes")
    n.add_argument("program")
    n.add_argument("-o", "--output")
    n.set_defaults(func=cmd_normalize)

    r = sub.add_parser("run", help="interpret a function")
    r.add_argument("program")
    r.add_argument("--entry", required=True)
    r.add_argument("--data", help="JSON object mapping parameter names to values")
    r.add_argument("--with-reference-harness", metavar="SPEC", help="serve @lilac.* calls from SPEC")
    r.add_argument("--marshal-strategy", choices=("pageprotect", "checksum", "exact", "naive"))
    r.add_argument("--stats", action="store_true", help="report marshal counters")
    r.add_argument("--step-limit", type=int, default=10**8)
    r.add_argument("--format", choices=("text", "json"), default="text")
    r.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Exit as e:
        if e.message:
            print(e.message, file=sys.stderr)
        return e.code
    except BudgetExceeded as e:
        print(f"BudgetExceeded: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except LilacError as e:
        print(f"{e.code}: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
