#!/usr/bin/env python3
"""Regenerate the stored golden logs (rule multisets + final digests) for the
corpus traces. Run from the repository root after any intentional semantics
change, then review the diff."""

import json

from mvu.harness import load_program, parse_trace, run_trace, corpus_dir

TRACES = {
    "reverse-string": "reverse_string_k.jsonl",
    "pingpong": "pingpong_click.jsonl",
    "pingpong-monolithic": "pingpong_click.jsonl",
    "naive-fib": "fib_click.jsonl",
    "mouse": "mouse_moves.jsonl",
    "deadlock": "deadlock_click.jsonl",
}


def main() -> None:
    tdir = corpus_dir() / "traces"
    gdir = corpus_dir() / "golden"
    for name, trace_file in TRACES.items():
        prog = load_program(name)
        records = parse_trace((tdir / trace_file).read_text())
        report = run_trace(prog, records, check_every_step=True)
        golden = {
            "program": name,
            "trace": trace_file,
            "rules": dict(sorted(report.rules.items())),
            "classification": report.classification.case,
            "digest": report.model_digest,
            "steps": report.steps,
        }
        out = gdir / f"{name}.json"
        out.write_text(json.dumps(golden, indent=2, sort_keys=True) + "\n")
        print(f"froze {out.name}: {report.steps} steps, {report.classification.case}")


if __name__ == "__main__":
    main()
