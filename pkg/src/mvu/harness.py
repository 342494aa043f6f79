"""Drivers: corpus loading, trace replay, and preservation fuzzing.

Trace files are JSON lines: {"target": nodeId | "tag:NAME" | "env",
"event": NAME, "payload": LITERAL} with optional "settle": false to inject
without running to quiescence first. Payload literals: null is the unit
value, integers and strings are themselves, a two-element array is a pair.
The synthetic event name "keystroke" expands to the click/keyDown/keyUp/input
burst a real key press produces; its payload is the field's new text.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import syntax as S
from .check import MvuTypeError, check_program
from .page import Event, erase, page_nodes, handlers
from .parser import Program, parse_program
from .pretty import pretty_term
from .registry import BY_EVENT, EVENT_SIGNATURES
from .rtcheck import ConfigChecker
from .runtime import (
    ClassificationError,
    Configuration,
    InjectionError,
    MvuRuntimeError,
    Runtime,
    classify,
    detect_error_process,
    initial_configuration,
    inject_dom_event,
    inject_env_event,
)
from .syntax import Term


def corpus_dir() -> Path:
    return Path(resources.files("mvu") / "corpus")


CORPUS = {
    "reverse-string": "reverse_string.mvu",
    "pingpong": "pingpong.mvu",
    "pingpong-monolithic": "pingpong_monolithic.mvu",
    "naive-fib": "naive_fib.mvu",
    "mouse": "mouse.mvu",
    "deadlock": "deadlock.mvu",
    "chat-types": "chat_types.mvu",
}

FUZZ_PROGRAMS = ("reverse-string", "pingpong", "pingpong-monolithic", "naive-fib", "mouse")


def load_program(path_or_name: str) -> Program:
    p = Path(path_or_name)
    if not p.exists() and path_or_name in CORPUS:
        p = corpus_dir() / CORPUS[path_or_name]
    return parse_program(p.read_text(encoding="utf-8"), str(p))


# ---------------------------------------------------------------------------
# Payload literals
# ---------------------------------------------------------------------------


def literal_to_value(lit) -> Term:
    if lit is None:
        return S.UNIT_TERM
    if isinstance(lit, bool):
        raise InjectionError("booleans are not payload literals")
    if isinstance(lit, int):
        return S.IntLit(lit)
    if isinstance(lit, str):
        return S.Str(lit)
    if isinstance(lit, list) and len(lit) == 2:
        return S.Pair(literal_to_value(lit[0]), literal_to_value(lit[1]))
    raise InjectionError(f"bad payload literal {lit!r}")


def value_to_literal(v: Term):
    cls = type(v)
    if cls is S.Unit:
        return None
    if cls is S.IntLit or cls is S.Str:
        return v.value
    if cls is S.Pair:
        return [value_to_literal(v.left), value_to_literal(v.right)]
    raise InjectionError(f"value {v!r} has no literal form")


# ---------------------------------------------------------------------------
# Trace records
# ---------------------------------------------------------------------------


@dataclass
class TraceRecord:
    target: object  # int node id | "tag:NAME" | "env"
    event: str
    payload: object
    settle: bool = True


def parse_trace(text: str) -> list:
    records = []
    for i, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise InjectionError(f"trace line {i}: {e}") from e
        records.append(TraceRecord(obj["target"], obj["event"],
                                   obj.get("payload"), obj.get("settle", True)))
    return records


def resolve_target(config: Configuration, target) -> int:
    if isinstance(target, int):
        return target
    if isinstance(target, str) and target.startswith("tag:"):
        want = target[4:]
        for node in page_nodes(config.page):
            if node.tag == want:
                return node.node_id
        raise InjectionError(f"no node with tag {want!r}")
    raise InjectionError(f"bad trace target {target!r}")


def expand_record(config: Configuration, rec: TraceRecord) -> list:
    """(kind, node_id|None, Event) triples for one trace record."""
    if rec.target == "env":
        return [("env", None, Event(rec.event, literal_to_value(rec.payload)))]
    node_id = resolve_target(config, rec.target)
    if rec.event == "keystroke":
        text = rec.payload
        if not isinstance(text, str) or not text:
            raise InjectionError("keystroke payload must be a non-empty string")
        code = ord(text[-1].upper())
        burst = [Event("click", S.UNIT_TERM), Event("keyDown", S.IntLit(code)),
                 Event("keyUp", S.IntLit(code)), Event("input", S.Str(text))]
        return [("dom", node_id, e) for e in burst]
    return [("dom", node_id, Event(rec.event, literal_to_value(rec.payload)))]


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


class MetatheoryViolation(Exception):
    pass


@dataclass
class RunReport:
    steps: int = 0
    rules: Counter = field(default_factory=Counter)
    rule_log: list = field(default_factory=list)
    classification: object = None
    final_config: Configuration = None
    checks: int = 0
    model_digest: str | None = None


def final_model(config: Configuration) -> Term | None:
    from . import runtime as R

    main = config.main()
    if isinstance(main, R.LoopProc) and isinstance(main.thread, R.Idle):
        return main.thread.model
    return None


def digest(config: Configuration) -> str:
    model = final_model(config)
    model_s = pretty_term(model) if model is not None else "<no-idle-model>"
    page_s = pretty_term(erase(config.page))
    return hashlib.sha256(f"{model_s}\n{page_s}".encode()).hexdigest()


class Driver:
    """Steps a configuration, optionally re-checking after every step."""

    def __init__(self, prog: Program, check_every_step: bool = False, max_steps: int = 200000):
        self.prog = prog
        self.info = check_program(prog)
        self.runtime = Runtime(prog.globals)
        self.checker = ConfigChecker({n: g.declared for n, g in prog.globals.items()})
        self.check_every_step = check_every_step
        self.max_steps = max_steps
        self.report = RunReport()
        self.config = initial_configuration(self.info.mode, prog.resolved_main())
        if check_every_step:
            self.checker.check_configuration(self.config)

    def _post_step(self) -> None:
        if self.check_every_step:
            try:
                self.checker.check_configuration(self.config)
            except MvuTypeError as e:
                raise MetatheoryViolation(
                    f"preservation failure after step {self.report.steps} "
                    f"({self.report.rule_log[-1]}): {e}") from e
            self.report.checks += 1
        if detect_error_process(self.runtime, self.config):
            raise MetatheoryViolation(
                f"error process reached after step {self.report.steps}")

    def settle(self, on_step=None) -> None:
        while True:
            result = self.runtime.step(self.config)
            if result is None:
                return
            self.config = result.config
            self.report.steps += 1
            if self.report.steps > self.max_steps:
                raise MvuRuntimeError(f"exceeded step budget {self.max_steps}")
            self.report.rules[result.rule] += 1
            self.report.rule_log.append(result.rule)
            self._post_step()
            if on_step is not None:
                on_step(self.config, result)

    def inject(self, kind: str, node_id, event: Event) -> None:
        if kind == "env":
            self.config = inject_env_event(self.config, event)
            rule = "E-InteractS"
        else:
            self.config = inject_dom_event(self.config, node_id, event)
            rule = "E-Interact"
        self.report.rules[rule] += 1
        self.report.rule_log.append(rule)

    def finish(self) -> RunReport:
        self.settle()
        self.report.final_config = self.config
        self.report.classification = classify(self.runtime, self.config)
        self.report.model_digest = digest(self.config)
        return self.report


def run_trace(prog: Program, records: list, check_every_step: bool = False,
              max_steps: int = 200000) -> RunReport:
    driver = Driver(prog, check_every_step, max_steps)
    driver.settle()
    for rec in records:
        for kind, node_id, event in expand_record(driver.config, rec):
            driver.inject(kind, node_id, event)
        if rec.settle:
            driver.settle()
    return driver.finish()


# ---------------------------------------------------------------------------
# Fuzzing
# ---------------------------------------------------------------------------


def _gen_payload(rng: random.Random, ty) -> Term:
    cls = type(ty)
    if cls is S.TUnit:
        return S.UNIT_TERM
    if cls is S.TInt:
        return S.IntLit(rng.randrange(0, 128))
    if cls is S.TString:
        return S.Str("".join(rng.choice("abcdefgh") for _ in range(rng.randrange(0, 4))))
    if cls is S.TProduct:
        return S.Pair(_gen_payload(rng, ty.left), _gen_payload(rng, ty.right))
    raise TypeError(ty)


def _dispatch_options(config: Configuration) -> list:
    """(node_id, event_name) pairs for nodes carrying a matching handler."""
    out = []
    for node in page_nodes(config.page):
        for sig in EVENT_SIGNATURES:
            if not sig.env and handlers(sig.event, node.attrs):
                out.append((node.node_id, sig.event))
    return out


def fuzz_preservation(program_names=FUZZ_PROGRAMS, seed: int = 0, traces: int = 100,
                      injections: int = 50, check_every_step: bool = True,
                      progress=None) -> dict:
    """Random valid injections; preservation + error-freedom + classification
    are asserted throughout. Any violation raises with a replayable seed."""
    summary = {"traces": 0, "injections": 0, "steps": 0, "checks": 0, "classifications": Counter()}
    for name in program_names:
        prog = load_program(name)
        for trace_i in range(traces):
            trace_seed = (seed, name, trace_i)
            rng = random.Random(repr(trace_seed))
            driver = Driver(prog, check_every_step)
            try:
                driver.settle()
                for _ in range(injections):
                    if driver.config.mode == "core-sub" and rng.random() < 0.7:
                        sig = BY_EVENT["mouseMove"]
                        driver.inject("env", None, Event(sig.event, _gen_payload(rng, sig.payload)))
                    else:
                        options = _dispatch_options(driver.config)
                        if not options:
                            nodes = list(page_nodes(driver.config.page))
                            if not nodes:
                                continue
                            node = rng.choice(nodes)
                            driver.inject("dom", node.node_id, Event("click", S.UNIT_TERM))
                        else:
                            node_id, ev = rng.choice(options)
                            sig = BY_EVENT[ev]
                            driver.inject("dom", node_id, Event(ev, _gen_payload(rng, sig.payload)))
                    driver.settle()
                report = driver.finish()
            except (MetatheoryViolation, MvuTypeError, MvuRuntimeError, ClassificationError) as e:
                raise MetatheoryViolation(f"[seed {trace_seed!r}] {e}") from e
            summary["traces"] += 1
            summary["injections"] += injections
            summary["steps"] += report.steps
            summary["checks"] += report.checks
            summary["classifications"][report.classification.case] += 1
    return summary
