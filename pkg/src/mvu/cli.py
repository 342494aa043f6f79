"""Command line: `mvu check|run|fuzz|serve`.

Exit codes: 0 ok, 1 diagnostic (parse/type/injection error), 2 metatheory
violation (a preservation, error-freedom, or classification failure).
"""

from __future__ import annotations

import argparse
import json
import sys

from .check import MvuTypeError, check_program
from .harness import (
    Driver,
    FUZZ_PROGRAMS,
    MetatheoryViolation,
    digest,
    expand_record,
    final_model,
    fuzz_preservation,
    load_program,
    parse_trace,
)
from .parser import MvuParseError
from .pretty import pretty_term
from .runtime import ClassificationError, InjectionError, MvuRuntimeError


def _load_checked(path: str):
    prog = load_program(path)
    info = check_program(prog)
    return prog, info


def cmd_check(args) -> int:
    try:
        prog, info = _load_checked(args.file)
    except (MvuParseError, MvuTypeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if prog.main is None:
        print(f"{args.file}: definitions check (no main expression)")
    else:
        print(f"{args.file}: ok [{info.mode}] model={info.model} message={info.msg}")
    return 0


def cmd_run(args) -> int:
    try:
        prog, info = _load_checked(args.file)
        if prog.main is None:
            print("error: program has no main expression", file=sys.stderr)
            return 1
        records = []
        if args.trace:
            with open(args.trace, encoding="utf-8") as fh:
                records = parse_trace(fh.read())
        driver = Driver(prog, check_every_step=args.check_every_step, max_steps=args.max_steps)

        def log_step(config, result):
            print(f"{result.rule:16s} {digest(config)[:16]}")

        if args.log:
            print(f"mode={info.mode}")
        driver.settle() if not args.log else _settle_logged(driver, log_step)
        for rec in records:
            for kind, node_id, event in expand_record(driver.config, rec):
                driver.inject(kind, node_id, event)
                if args.log:
                    rule = "E-InteractS" if kind == "env" else "E-Interact"
                    print(f"{rule:16s} {digest(driver.config)[:16]}")
            if rec.settle:
                driver.settle() if not args.log else _settle_logged(driver, log_step)
        report = driver.finish()
    except (MvuParseError, MvuTypeError, InjectionError, MvuRuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (MetatheoryViolation, ClassificationError) as e:
        print(f"metatheory violation: {e}", file=sys.stderr)
        return 2
    model = final_model(report.final_config)
    print(f"steps:          {report.steps}")
    print(f"rules:          {dict(sorted(report.rules.items()))}")
    print(f"classification: {report.classification.case}")
    if model is not None:
        print(f"final model:    {pretty_term(model)}")
    print(f"digest:         {report.model_digest}")
    return 0


def _settle_logged(driver, log_step) -> None:
    while True:
        result = driver.runtime.step(driver.config)
        if result is None:
            return
        driver.config = result.config
        driver.report.steps += 1
        driver.report.rules[result.rule] += 1
        driver.report.rule_log.append(result.rule)
        driver._post_step()
        log_step(driver.config, result)


def cmd_fuzz(args) -> int:
    programs = args.programs.split(",") if args.programs else FUZZ_PROGRAMS
    try:
        summary = fuzz_preservation(
            programs, seed=args.seed, traces=args.traces, injections=args.injections,
            check_every_step=args.check_every_step)
    except MetatheoryViolation as e:
        print(f"metatheory violation: {e}", file=sys.stderr)
        return 2
    except (MvuParseError, MvuTypeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(json.dumps({**summary, "classifications": dict(summary["classifications"])}, indent=2))
    return 0


def cmd_serve(args) -> int:
    from .bridge import serve

    try:
        prog, info = _load_checked(args.file)
        if prog.main is None:
            print("error: program has no main expression", file=sys.stderr)
            return 1
    except (MvuParseError, MvuTypeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    host, _, port = args.listen.rpartition(":")
    serve(prog, host or "127.0.0.1", int(port))
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="mvu")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="typecheck a program")
    p.add_argument("file")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("run", help="run a program, optionally replaying a trace")
    p.add_argument("file")
    p.add_argument("--trace", help="JSONL trace file of injected events")
    p.add_argument("--check-every-step", action="store_true")
    p.add_argument("--max-steps", type=int, default=200000)
    p.add_argument("--log", action="store_true", help="print rule + configuration digest per step")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("fuzz", help="preservation/progress fuzzing over the corpus")
    p.add_argument("--programs", help="comma-separated corpus names")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--traces", type=int, default=100)
    p.add_argument("--injections", type=int, default=50)
    p.add_argument("--no-check-every-step", dest="check_every_step", action="store_false")
    p.set_defaults(fn=cmd_fuzz)

    p = sub.add_parser("serve", help="serve a program for a live frontend")
    p.add_argument("file")
    p.add_argument("--listen", default="127.0.0.1:8642")
    p.set_defaults(fn=cmd_serve)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
