import random

import pytest
from hypothesis import strategies as st

from mvu import syntax as S
from mvu.page import Event, NodeIdSupply, build_page
from mvu.registry import BY_EVENT


# ---------------------------------------------------------------------------
# Random session types (closed, contractive, plain recursion variables)
# ---------------------------------------------------------------------------

_PAYLOADS = [S.UNIT, S.INT, S.STRING, S.TProduct(S.INT, S.STRING)]


def random_session(rng: random.Random, depth: int, scope: tuple = ()) -> S.SessionType:
    choices = ["out", "in"]
    if depth <= 0:
        choices = ["end"] + (["var"] if scope else [])
    else:
        choices += ["end", "mu"]
        if scope:
            choices += ["var", "var"]
    kind = rng.choice(choices)
    if kind == "end":
        return S.END
    if kind == "var":
        return S.SVar(rng.choice(scope))
    if kind == "mu":
        var = f"t{len(scope)}"
        # contractive: the body is a communication, never a bare variable
        comm = rng.choice(["out", "in"])
        payload = rng.choice(_PAYLOADS)
        cont = random_session(rng, depth - 1, scope + (var,))
        body = S.SOut(payload, cont) if comm == "out" else S.SIn(payload, cont)
        return S.SRec(var, body)
    payload = rng.choice(_PAYLOADS)
    cont = random_session(rng, depth - 1, scope)
    return S.SOut(payload, cont) if kind == "out" else S.SIn(payload, cont)


# ---------------------------------------------------------------------------
# Random HTML values and pages
# ---------------------------------------------------------------------------

_TAGS = ["div", "span", "input", "button", "p"]
_ATTR_KEYS = ["id", "class", "value", "disabled"]


def random_attrs(rng: random.Random, depth: int) -> S.Term:
    kind = rng.randrange(5)
    if kind == 0 or depth <= 0:
        return S.ATTR_EMPTY
    if kind == 1:
        return S.AttrTerm(rng.choice(_ATTR_KEYS), S.Str(rng.choice("abxyz")))
    if kind == 2:
        handler = rng.choice(["onClick", "onInput"])
        payload = BY_EVENT["click" if handler == "onClick" else "input"].payload
        return S.AttrTerm(handler, S.Lam("x", payload, S.UNIT_TERM))
    return S.Append(random_attrs(rng, depth - 1), random_attrs(rng, depth - 1))


def random_html(rng: random.Random, depth: int) -> S.Term:
    kind = rng.randrange(6)
    if depth <= 0 or kind == 0:
        return S.HTML_EMPTY
    if kind == 1:
        return S.HtmlText(S.Str(rng.choice(["", "hi", "k", "text"])))
    if kind in (2, 3):
        return S.HtmlTag(rng.choice(_TAGS), random_attrs(rng, 2), random_html(rng, depth - 1))
    return S.Append(random_html(rng, depth - 1), random_html(rng, depth - 1))


def random_event(rng: random.Random) -> Event:
    name = rng.choice(["click", "input", "keyUp", "keyDown"])
    payload = {
        "click": S.UNIT_TERM,
        "input": S.Str("x"),
        "keyUp": S.IntLit(rng.randrange(0, 100)),
        "keyDown": S.IntLit(rng.randrange(0, 100)),
    }[name]
    return Event(name, payload)


def random_page(rng: random.Random, depth: int):
    """A page with populated queues, built from a random HTML value."""
    supply = NodeIdSupply(rng.randrange(0, 50))
    page = build_page(random_html(rng, depth), supply)
    return _decorate(rng, page)


def _decorate(rng: random.Random, page):
    from mvu.page import PageAppend, PageTag

    cls = type(page)
    if cls is PageTag:
        queue = tuple(random_event(rng) for _ in range(rng.randrange(0, 3)))
        return PageTag(page.tag, page.attrs, _decorate(rng, page.kids), queue, page.node_id)
    if cls is PageAppend:
        return PageAppend(_decorate(rng, page.left), _decorate(rng, page.right))
    return page


@pytest.fixture
def rng():
    return random.Random(20260810)


# hypothesis strategy for small terms used in substitution properties
variables = st.sampled_from(["x", "y", "z"])


def term_strategy():
    leaves = st.one_of(
        variables.map(S.Var),
        st.just(S.UNIT_TERM),
        st.integers(0, 9).map(S.IntLit),
        st.sampled_from(["a", "b"]).map(S.Str),
        st.sampled_from(["c0", "c1"]).map(S.Name),
    )

    def extend(children):
        return st.one_of(
            st.tuples(variables, children).map(lambda t: S.Lam(t[0], S.UNIT, t[1])),
            st.tuples(children, children).map(lambda t: S.App(t[0], t[1])),
            st.tuples(children, children).map(lambda t: S.Pair(t[0], t[1])),
            st.tuples(children, children).map(lambda t: S.Append(t[0], t[1])),
            children.map(S.CmdSpawn),
            children.map(lambda c: S.Inl(c, S.UNIT)),
            st.tuples(variables, variables, children, children).map(
                lambda t: S.LetPair(t[0], t[1], t[2], t[3])),
        )

    return st.recursive(leaves, extend, max_leaves=12)
