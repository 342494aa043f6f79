import random

from mvu import syntax as S
from mvu.check import dual_session, kind_of, session_equal, unfold
from mvu.parser import parse_session, parse_type
from mvu.syntax import Kind

from conftest import random_session


# ---------------------------------------------------------------------------
# Brute-force kinding oracle: the coinductive definition read clause by
# clause, computing the full set of derivable kinds including subsumption.
# ---------------------------------------------------------------------------


def oracle_kinds(t) -> set:
    cls = type(t)
    if cls in (S.TUnit, S.TString, S.TInt, S.THtml, S.TAttr, S.TSub):
        base = {Kind.U}
    elif cls is S.TSession:
        base = {Kind.L}
    elif cls is S.TFun:
        base = {t.kind}
    elif cls is S.TCmd:
        base = oracle_kinds(t.msg)
    elif cls in (S.TProduct, S.TSum):
        base = oracle_kinds(t.left) & oracle_kinds(t.right)
    elif cls is S.TTransition:
        base = oracle_kinds(t.model) & oracle_kinds(t.msg)
    else:
        raise TypeError(t)
    if Kind.U in base:
        base = {Kind.U, Kind.L}  # subsumption: U <= L
    return base


_LEAVES = [S.UNIT, S.INT, S.TSession(S.END)]


def enumerate_types(depth: int) -> list:
    if depth <= 1:
        return list(_LEAVES)
    smaller = enumerate_types(depth - 1)
    out = list(smaller)
    for a in smaller:
        out.append(S.THtml(a))
        out.append(S.TAttr(a))
        out.append(S.TCmd(a))
        for b in smaller:
            out.append(S.TFun(a, b, Kind.U))
            out.append(S.TFun(a, b, Kind.L))
            out.append(S.TProduct(a, b))
            out.append(S.TSum(a, b))
            out.append(S.TTransition(a, b))
    return out


def random_type(rng: random.Random, depth: int):
    if depth <= 1:
        return rng.choice(_LEAVES)
    kind = rng.randrange(8)
    if kind == 0:
        return rng.choice(_LEAVES)
    if kind == 1:
        return S.THtml(random_type(rng, depth - 1))
    if kind == 2:
        return S.TCmd(random_type(rng, depth - 1))
    a = random_type(rng, depth - 1)
    b = random_type(rng, depth - 1)
    if kind == 3:
        return S.TFun(a, b, rng.choice((Kind.U, Kind.L)))
    if kind == 4:
        return S.TProduct(a, b)
    if kind == 5:
        return S.TSum(a, b)
    if kind == 6:
        return S.TTransition(a, b)
    return S.TAttr(b)


def _check_against_oracle(t) -> None:
    ks = oracle_kinds(t)
    least = Kind.U if Kind.U in ks else Kind.L
    assert kind_of(t) is least, f"kind_of({t}) = {kind_of(t)}, oracle least = {least}"


def test_kinding_examples():
    assert kind_of(S.TSession(S.END)) is Kind.L
    assert kind_of(S.INT) is Kind.U
    # product rule + subsumption, derived by hand
    assert kind_of(S.TProduct(S.INT, S.TSession(S.END))) is Kind.L
    assert kind_of(S.TFun(S.INT, S.INT, Kind.L)) is Kind.L
    assert kind_of(S.TCmd(S.TSession(S.END))) is Kind.L
    assert kind_of(S.THtml(S.TSession(S.END))) is Kind.U


def test_kinding_agrees_with_oracle_exhaustively():
    for t in enumerate_types(3):
        _check_against_oracle(t)


def test_kinding_agrees_with_oracle_depth4_sample():
    rng = random.Random(4)
    for _ in range(4000):
        _check_against_oracle(random_type(rng, 4))


# ---------------------------------------------------------------------------
# Duality
# ---------------------------------------------------------------------------


def test_dual_end():
    assert dual_session(S.END) == S.END


def test_dual_swaps_out_in():
    s = parse_session("!Int.?String.End")
    assert dual_session(s) == parse_session("?Int.!String.End")


def test_dual_of_recursive_pingpong():
    # hand-applied mu rule: the ponger receives then sends
    s = S.SRec("t", S.SOut(S.UNIT, S.SIn(S.UNIT, S.SVar("t"))))
    want = S.SRec("t", S.SIn(S.UNIT, S.SOut(S.UNIT, S.SVar("t"))))
    assert session_equal(dual_session(s), want)


def test_dual_involution_1000(rng):
    for i in range(1000):
        s = random_session(rng, 4)
        assert session_equal(dual_session(dual_session(s)), s), f"case {i}: {s}"


def test_dual_communication_compatibility(rng):
    # the dual of an output always unfolds to an input with the same payload
    for _ in range(200):
        s = random_session(rng, 3)
        head = unfold(s)
        if isinstance(head, S.SOut):
            d = unfold(dual_session(s))
            assert isinstance(d, S.SIn) and d.payload == head.payload


# ---------------------------------------------------------------------------
# Session equality (equirecursion)
# ---------------------------------------------------------------------------


def test_session_equal_unfolding():
    a = parse_session("mu t. !Int.t")
    b = S.SOut(S.INT, a)
    assert session_equal(a, b)


def test_session_equal_distinguishes_polarity():
    assert not session_equal(parse_session("!Int.End"), parse_session("?Int.End"))


def test_session_equal_two_state_vs_one_state():
    # brute-force bisimulation on the 2-state and 1-state automata agrees
    two = parse_session("mu t. !Int.!Int.t")
    one = parse_session("mu t. !Int.t")
    assert session_equal(two, one)
    assert not session_equal(two, parse_session("mu t. !Int.?Int.t"))


def test_session_equal_payload_mismatch():
    assert not session_equal(parse_session("mu t. !Int.t"), parse_session("mu t. !String.t"))


def test_session_equal_is_an_equivalence(rng):
    pool = [random_session(rng, 3) for _ in range(30)]
    for s in pool:
        assert session_equal(s, s)
    for a in pool:
        for b in pool:
            assert session_equal(a, b) == session_equal(b, a)


def test_unfold_reaches_a_communication_head(rng):
    for _ in range(200):
        s = random_session(rng, 4)
        head = unfold(s)
        assert isinstance(head, (S.SOut, S.SIn, S.SEnd))


def test_type_equality_through_sessions():
    a = parse_type("(Int, mu t. !Int.t)")
    b = parse_type("(Int, !Int. mu t. !Int.t)")
    from mvu.check import equal_types

    assert equal_types(a, b)
    assert not equal_types(a, parse_type("(Int, ?Int. mu t. !Int.t)"))
