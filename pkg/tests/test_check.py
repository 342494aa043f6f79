import pytest

from mvu import syntax as S
from mvu.check import (
    MODE_CORE,
    MODE_CORE_SUB,
    MODE_EXTENDED,
    MvuTypeError,
    check_program,
    check_term,
    kind_of,
    join_types,
)
from mvu.harness import corpus_dir, load_program
from mvu.parser import parse_program, parse_term, parse_type
from mvu.syntax import Kind


def synth(src: str, **kw):
    return check_term(parse_term(src), **kw)


def test_identity_function():
    ty, used = synth("fun(x: Int) { x }")
    assert ty == S.TFun(S.INT, S.INT, Kind.U)
    assert not used


def test_unused_linear_binding_rejected():
    with pytest.raises(MvuTypeError) as e:
        synth("fun(c: End) { () }")
    assert e.value.rule == "T-Var"


def test_send_advances_the_session():
    prog = parse_program("""
type S0 = !Int. ?String. End;
let f : S0 -> (?String. End) = fun(c: S0) { send(3, c) };
""")
    check_program(prog)


def test_send_through_recursive_type_unfolds():
    prog = parse_program("""
type Ping = [| Ping |];
type Pong = [| Pong |];
type PingPong = mu t. !Ping. ?Pong. t;
let f : PingPong -> (?Pong. PingPong) = fun(c: PingPong) { send(Ping, c) };
""")
    check_program(prog)


def test_pingpong_program_checks_with_expected_update_type():
    prog = load_program("pingpong")
    info = check_program(prog)
    assert info.mode == MODE_EXTENDED
    want = parse_type("(1, mu t. !1.?1.t) -> Transition(mu t. !1.?1.t, 1)")
    got = prog.globals["pUpdate"].declared
    join_types(got, want)


def test_corpus_modes():
    assert check_program(load_program("reverse-string")).mode == MODE_CORE
    assert check_program(load_program("mouse")).mode == MODE_CORE_SUB
    for name in ("pingpong", "pingpong-monolithic", "naive-fib", "deadlock"):
        assert check_program(load_program(name)).mode == MODE_EXTENDED
    check_program(load_program("chat-types"))  # check-only, no main


def test_env_kinding_lemma_on_checked_terms():
    """When a closed term synthesises an unrestricted type, it consumed no
    linear bindings (checked over every corpus definition)."""
    for name in ("reverse-string", "pingpong", "pingpong-monolithic", "naive-fib",
                 "mouse", "deadlock", "chat-types"):
        prog = load_program(name)
        gtypes = {n: g.declared for n, g in prog.globals.items()}
        for g in prog.globals.values():
            ty, used = check_term(g.term, globals_types=gtypes)
            if kind_of(ty) is Kind.U:
                assert not used


def test_try_shares_linear_environment():
    prog = parse_program("""
type S0 = !Int. End;
let f : S0 -> 1 = fun(c: S0) {
  try 3 as x in (let c2 = send(x, c) in close(c2))
  otherwise (let c3 = send(0, c) in close(c3))
};
""")
    check_program(prog)


def test_try_branches_must_agree_on_linear_usage():
    with pytest.raises(MvuTypeError) as e:
        parse_and_check("""
type S0 = !Int. End;
let f : S0 -> 1 = fun(c: S0) {
  try 3 as x in (let c2 = send(x, c) in close(c2)) otherwise ()
};
""")
    assert e.value.rule == "T-Try"


def parse_and_check(src: str):
    return check_program(parse_program(src))


def test_raise_types_at_anything():
    ty, used = synth("fun(x: Int) { if intLt(x, 0) then raise else x }")
    assert ty == S.TFun(S.INT, S.INT, Kind.U)


def test_new_requires_instantiation():
    prog = parse_program("""
let f : 1 -> 1 = fun(u: 1) {
  let (c, d) = new[!Int.End]() in
  let c2 = send(1, c) in
  let (n, d2) = receive d in
  close(c2); close(d2)
};
""")
    check_program(prog)


def test_negative_suite():
    expected = {
        "linear_unused.mvu": "T-Var",
        "linear_twice.mvu": "T-Split",
        "two_buttons.mvu": "T-Abs",
        "ulam_capture.mvu": "T-Abs",
        "send_wrong_payload.mvu": "T-AppK",
        "close_not_end.mvu": "T-AppK",
        "handler_wrong_payload.mvu": "T-EvtAttr",
        "update_wrong_type.mvu": "TP-Run",
        "linear_view_function.mvu": "TP-Run",
        "case_branch_mismatch.mvu": "T-Case",
        "attr_nonstring.mvu": "T-Attr",
        "rec_captures_linear.mvu": "T-Rec",
        "transition_inconsistent.mvu": "T-Transition",
        "raise_drops_linear.mvu": "T-Var",
    }
    negative = corpus_dir() / "negative"
    files = sorted(p.name for p in negative.glob("*.mvu"))
    assert set(files) == set(expected), "every negative program has an expected rule"
    for fname, rule in expected.items():
        src = (negative / fname).read_text()
        with pytest.raises(MvuTypeError) as e:
            check_program(parse_program(src))
        assert e.value.rule == rule, f"{fname}: got {e.value.rule}, want {rule}"
