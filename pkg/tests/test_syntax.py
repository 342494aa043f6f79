from hypothesis import given

from mvu import syntax as S
from mvu.syntax import alpha_equal, free_names, free_vars, is_value, substitute

from conftest import term_strategy, variables


def test_substitute_variable():
    assert substitute(S.Var("x"), "x", S.IntLit(5)) == S.IntLit(5)


def test_substitute_under_binder():
    body = S.Lam("y", S.UNIT, S.Var("x"))
    out = substitute(body, "x", S.UNIT_TERM)
    assert alpha_equal(out, S.Lam("y", S.UNIT, S.UNIT_TERM))


def test_substitute_shadowing():
    body = S.Lam("x", S.UNIT, S.Var("x"))
    assert substitute(body, "x", S.IntLit(5)) is body


def test_substitute_capture_avoidance():
    # (lam y. x){y/x} must not capture the substituted y
    body = S.Lam("y", S.UNIT, S.Var("x"))
    out = substitute(body, "x", S.Var("y"))
    assert isinstance(out, S.Lam)
    assert out.param != "y"
    assert out.body == S.Var("y")


def test_free_names_pair():
    assert free_names(S.Pair(S.Name("c"), S.Name("d"))) == ("c", "d")


def test_free_names_unit():
    assert free_names(S.UNIT_TERM) == ()


def test_free_names_inside_spawned_command():
    # hand-walk: cmdSpawn(send (Ping, c)) mentions exactly c
    ping = S.UNIT_TERM
    t = S.CmdSpawn(S.ConstApp(S.Const.SEND, S.Pair(ping, S.Name("c"))))
    assert free_names(t) == ("c",)


def test_free_names_duplicate_free_ordered():
    t = S.Pair(S.Pair(S.Name("d"), S.Name("c")), S.Name("d"))
    assert free_names(t) == ("d", "c")


def test_is_value_cases():
    lam = S.Lam("x", S.UNIT, S.Var("x"))
    assert is_value(lam)
    assert not is_value(S.App(lam, S.UNIT_TERM))
    # a spawned command is a value even when its body is not
    assert is_value(S.CmdSpawn(S.App(lam, S.UNIT_TERM)))
    assert is_value(S.TransitionT(S.UNIT_TERM, lam, lam, lam, S.CMD_EMPTY))
    assert not is_value(S.TransitionT(S.App(lam, S.UNIT_TERM), lam, lam, lam, S.CMD_EMPTY))


@given(term_strategy(), variables)
def test_substitute_noop_when_not_free(t, x):
    if x not in free_vars(t):
        assert substitute(t, x, S.IntLit(1)) is t


@given(term_strategy(), variables)
def test_substitute_idempotent_on_closed_value(t, x):
    once = substitute(t, x, S.UNIT_TERM)
    assert substitute(once, x, S.UNIT_TERM) is once


@given(term_strategy(), variables)
def test_free_names_of_substitution(t, x):
    value = S.Pair(S.Name("c9"), S.UNIT_TERM)
    out = substitute(t, x, value)
    if x in free_vars(t):
        assert set(free_names(out)) == set(free_names(t)) | {"c9"}
    else:
        assert out is t


@given(term_strategy())
def test_alpha_equal_reflexive(t):
    assert alpha_equal(t, t)


def test_alpha_equal_renames_binders():
    a = S.Lam("x", S.UNIT, S.Var("x"))
    b = S.Lam("y", S.UNIT, S.Var("y"))
    assert alpha_equal(a, b)
    assert not alpha_equal(a, S.Lam("y", S.UNIT, S.UNIT_TERM))
