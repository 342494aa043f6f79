#!/usr/bin/env python3
"""Replay every corpus trace with per-step configuration checking and print
a summary table: steps taken, key rules fired, final classification, and
whether the stored golden log still matches."""

import json

from mvu.harness import corpus_dir, load_program, parse_trace, run_trace

INTERESTING = ("E-Comm", "E-Transition", "E-Discard", "EP-Handle", "E-Handle", "E-EvtS")


def main() -> None:
    gdir = corpus_dir() / "golden"
    tdir = corpus_dir() / "traces"
    print(f"{'program':22s} {'steps':>5s} {'class':14s} rules")
    for gfile in sorted(gdir.glob("*.json")):
        golden = json.loads(gfile.read_text())
        prog = load_program(golden["program"])
        records = parse_trace((tdir / golden["trace"]).read_text())
        report = run_trace(prog, records, check_every_step=True)
        ok = (dict(sorted(report.rules.items())) == golden["rules"]
              and report.model_digest == golden["digest"])
        shown = {r: report.rules[r] for r in INTERESTING if report.rules.get(r)}
        mark = "" if ok else "   << DIVERGES FROM GOLDEN"
        print(f"{golden['program']:22s} {report.steps:5d} {report.classification.case:14s} {shown}{mark}")


if __name__ == "__main__":
    main()
