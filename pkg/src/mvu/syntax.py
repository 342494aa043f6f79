"""Core ASTs: kinds, types, session types, terms, and values.

Terms are immutable by convention. The interpreter constructs millions of
nodes per run, so terms are plain slotted classes with lazily cached
free-variable / free-name / value-ness fields rather than frozen dataclasses.
Types and session types are frozen dataclasses: they are small, constructed
rarely, and need hashing (bisimulation visited sets, kind memoisation).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum


class Kind(Enum):
    U = "U"  # unrestricted
    L = "L"  # linear

    def __le__(self, other: "Kind") -> bool:
        # subkinding: reflexive closure of U <= L
        return self is other or (self is Kind.U and other is Kind.L)


def kind_join(a: Kind, b: Kind) -> Kind:
    return Kind.U if (a is Kind.U and b is Kind.U) else Kind.L


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

class Type:
    pass


@dataclass(frozen=True)
class TUnit(Type):
    def __str__(self) -> str:
        return "1"


@dataclass(frozen=True)
class TString(Type):
    def __str__(self) -> str:
        return "String"


@dataclass(frozen=True)
class TInt(Type):
    def __str__(self) -> str:
        return "Int"


@dataclass(frozen=True)
class TBottom(Type):
    """Type of `raise`: compatible with every type.

    The declarative rule gives `raise` an arbitrary type; an algorithmic,
    synthesis-only checker represents that one existential as a bottom type
    that unifies with anything and is absorbed by joins.
    """

    def __str__(self) -> str:
        return "_|_"


@dataclass(frozen=True)
class TFun(Type):
    param: Type
    result: Type
    kind: Kind

    def __str__(self) -> str:
        arrow = "->" if self.kind is Kind.U else "-o"
        return f"({self.param} {arrow} {self.result})"


@dataclass(frozen=True)
class TProduct(Type):
    left: Type
    right: Type

    def __str__(self) -> str:
        return f"({self.left}, {self.right})"


@dataclass(frozen=True)
class TSum(Type):
    left: Type
    right: Type

    def __str__(self) -> str:
        return f"({self.left} + {self.right})"


@dataclass(frozen=True)
class THtml(Type):
    msg: Type

    def __str__(self) -> str:
        return f"Html({self.msg})"


@dataclass(frozen=True)
class TAttr(Type):
    msg: Type

    def __str__(self) -> str:
        return f"Attr({self.msg})"


@dataclass(frozen=True)
class TCmd(Type):
    msg: Type

    def __str__(self) -> str:
        return f"Cmd({self.msg})"


@dataclass(frozen=True)
class TTransition(Type):
    model: Type
    msg: Type

    def __str__(self) -> str:
        return f"Transition({self.model}, {self.msg})"


@dataclass(frozen=True)
class TSub(Type):
    msg: Type

    def __str__(self) -> str:
        return f"Sub({self.msg})"


@dataclass(frozen=True)
class TSession(Type):
    session: "SessionType"

    def __str__(self) -> str:
        return str(self.session)


# ---------------------------------------------------------------------------
# Session types
# ---------------------------------------------------------------------------

class SessionType:
    pass


@dataclass(frozen=True)
class SOut(SessionType):
    payload: Type
    cont: SessionType

    def __str__(self) -> str:
        return f"!{self.payload}.{self.cont}"


@dataclass(frozen=True)
class SIn(SessionType):
    payload: Type
    cont: SessionType

    def __str__(self) -> str:
        return f"?{self.payload}.{self.cont}"


@dataclass(frozen=True)
class SRec(SessionType):
    var: str
    body: SessionType

    def __str__(self) -> str:
        return f"mu {self.var}.{self.body}"


@dataclass(frozen=True)
class SVar(SessionType):
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class SDualVar(SessionType):
    name: str

    def __str__(self) -> str:
        return f"~{self.name}"


@dataclass(frozen=True)
class SEnd(SessionType):
    def __str__(self) -> str:
        return "End"


UNIT = TUnit()
STRING = TString()
INT = TInt()
BOTTOM = TBottom()
END = SEnd()

# Bool is artifact prelude sugar for 1 + 1 (False = inl (), True = inr ()).
BOOL = TSum(UNIT, UNIT)


def session_free_vars(s: SessionType, bound: frozenset = frozenset()) -> set:
    """Free (possibly dualised) recursion variables of a session type."""
    match s:
        case SOut(p, c) | SIn(p, c):
            out = type_session_free_vars(p, bound)
            out |= session_free_vars(c, bound)
            return out
        case SRec(v, b):
            return session_free_vars(b, bound | {v})
        case SVar(n) | SDualVar(n):
            return set() if n in bound else {n}
        case SEnd():
            return set()
    raise TypeError(s)


def type_session_free_vars(t: Type, bound: frozenset = frozenset()) -> set:
    match t:
        case TSession(s):
            return session_free_vars(s, bound)
        case TFun(p, r, _):
            return type_session_free_vars(p, bound) | type_session_free_vars(r, bound)
        case TProduct(a, b) | TSum(a, b) | TTransition(a, b):
            return type_session_free_vars(a, bound) | type_session_free_vars(b, bound)
        case THtml(a) | TAttr(a) | TCmd(a) | TSub(a):
            return type_session_free_vars(a, bound)
        case _:
            return set()


def is_contractive(s: SessionType) -> bool:
    """A mu body may not be (a chain of mus ending in) its own variable."""
    match s:
        case SRec(v, b):
            inner = b
            while isinstance(inner, SRec):
                inner = inner.body
            if isinstance(inner, (SVar, SDualVar)) and inner.name == v:
                return False
            return is_contractive(b)
        case SOut(p, c) | SIn(p, c):
            return type_is_contractive(p) and is_contractive(c)
        case _:
            return True


def type_is_contractive(t: Type) -> bool:
    match t:
        case TSession(s):
            return is_contractive(s)
        case TFun(p, r, _):
            return type_is_contractive(p) and type_is_contractive(r)
        case TProduct(a, b) | TSum(a, b) | TTransition(a, b):
            return type_is_contractive(a) and type_is_contractive(b)
        case THtml(a) | TAttr(a) | TCmd(a) | TSub(a):
            return type_is_contractive(a)
        case _:
            return True


# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------

class Const(Enum):
    SEND = "send"
    RECEIVE = "receive"
    NEW = "new"
    CANCEL = "cancel"
    CLOSE = "close"


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------

_term_counter = itertools.count()


class Term:
    __slots__ = ("_fv", "_fn", "_isv", "_dec", "_ty")

    def __init__(self) -> None:
        self._fv = None   # frozenset of free variable names
        self._fn = None   # tuple of free runtime names, traversal order
        self._isv = None  # cached is_value
        self._dec = None  # cached evaluation-context decomposition
        self._ty = None   # cached closed-term synthesis result

    def children(self) -> tuple:
        return ()

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if type(self) is not type(other):
            return NotImplemented
        return self._key() == other._key()  # type: ignore[attr-defined]

    def __hash__(self) -> int:
        return hash((type(self).__name__, self._key()))

    def _key(self):
        return ()

    def __repr__(self) -> str:
        from .pretty import pretty_term

        return pretty_term(self)


class Var(Term):
    __slots__ = ("name",)

    def __init__(self, name: str):
        super().__init__()
        self.name = name

    def _key(self):
        return self.name


class Global(Term):
    """Reference to a top-level definition; delta-expands in redex position."""

    __slots__ = ("name",)

    def __init__(self, name: str):
        super().__init__()
        self.name = name

    def _key(self):
        return self.name


class Lam(Term):
    __slots__ = ("param", "ptype", "body", "kind")

    def __init__(self, param: str, ptype: Type | None, body: Term, kind: Kind = Kind.U):
        super().__init__()
        self.param = param
        self.ptype = ptype
        self.body = body
        self.kind = kind

    def children(self):
        return (self.body,)

    def _key(self):
        return (self.param, self.ptype, self.body, self.kind)


class Rec(Term):
    """Anonymous recursive function rec f(x). M (always unrestricted)."""

    __slots__ = ("fname", "param", "ptype", "rtype", "body")

    def __init__(self, fname: str, param: str, ptype: Type | None, rtype: Type | None, body: Term):
        super().__init__()
        self.fname = fname
        self.param = param
        self.ptype = ptype
        self.rtype = rtype
        self.body = body

    def children(self):
        return (self.body,)

    def _key(self):
        return (self.fname, self.param, self.ptype, self.rtype, self.body)


class App(Term):
    __slots__ = ("fn", "arg")

    def __init__(self, fn: Term, arg: Term):
        super().__init__()
        self.fn = fn
        self.arg = arg

    def children(self):
        return (self.fn, self.arg)

    def _key(self):
        return (self.fn, self.arg)


class ConstApp(Term):
    __slots__ = ("const", "arg", "session")

    def __init__(self, const: Const, arg: Term, session: SessionType | None = None):
        super().__init__()
        self.const = const
        self.arg = arg
        self.session = session  # explicit instantiation, used by `new`

    def children(self):
        return (self.arg,)

    def _key(self):
        return (self.const, self.arg, self.session)


class Builtin(Term):
    """Primitive unrestricted function (intAdd, reverseString, ...)."""

    __slots__ = ("name",)

    def __init__(self, name: str):
        super().__init__()
        self.name = name

    def _key(self):
        return self.name


class Unit(Term):
    __slots__ = ()


class Str(Term):
    __slots__ = ("value",)

    def __init__(self, value: str):
        super().__init__()
        self.value = value

    def _key(self):
        return self.value


class IntLit(Term):
    __slots__ = ("value",)

    def __init__(self, value: int):
        super().__init__()
        self.value = value

    def _key(self):
        return self.value


class Pair(Term):
    __slots__ = ("left", "right")

    def __init__(self, left: Term, right: Term):
        super().__init__()
        self.left = left
        self.right = right

    def children(self):
        return (self.left, self.right)

    def _key(self):
        return (self.left, self.right)


class LetPair(Term):
    __slots__ = ("xname", "yname", "pair", "body")

    def __init__(self, xname: str, yname: str, pair: Term, body: Term):
        super().__init__()
        self.xname = xname
        self.yname = yname
        self.pair = pair
        self.body = body

    def children(self):
        return (self.pair, self.body)

    def _key(self):
        return (self.xname, self.yname, self.pair, self.body)


class Inl(Term):
    __slots__ = ("inner", "other")

    def __init__(self, inner: Term, other: Type | None = None):
        super().__init__()
        self.inner = inner
        self.other = other  # the right component of the sum

    def children(self):
        return (self.inner,)

    def _key(self):
        return (self.inner, self.other)


class Inr(Term):
    __slots__ = ("inner", "other")

    def __init__(self, inner: Term, other: Type | None = None):
        super().__init__()
        self.inner = inner
        self.other = other  # the left component of the sum

    def children(self):
        return (self.inner,)

    def _key(self):
        return (self.inner, self.other)


class Case(Term):
    __slots__ = ("scrutinee", "lname", "left", "rname", "right")

    def __init__(self, scrutinee: Term, lname: str, left: Term, rname: str, right: Term):
        super().__init__()
        self.scrutinee = scrutinee
        self.lname = lname
        self.left = left
        self.rname = rname
        self.right = right

    def children(self):
        return (self.scrutinee, self.left, self.right)

    def _key(self):
        return (self.scrutinee, self.lname, self.left, self.rname, self.right)


class HtmlTag(Term):
    __slots__ = ("tag", "attrs", "kids")

    def __init__(self, tag: str, attrs: Term, kids: Term):
        super().__init__()
        if not tag:
            raise ValueError("tag names are non-empty")
        self.tag = tag
        self.attrs = attrs
        self.kids = kids

    def children(self):
        return (self.attrs, self.kids)

    def _key(self):
        return (self.tag, self.attrs, self.kids)


class HtmlText(Term):
    __slots__ = ("text",)

    def __init__(self, text: Term):
        super().__init__()
        self.text = text

    def children(self):
        return (self.text,)

    def _key(self):
        return (self.text,)


class HtmlEmpty(Term):
    __slots__ = ()


class AttrTerm(Term):
    __slots__ = ("key", "body")

    def __init__(self, key: str, body: Term):
        super().__init__()
        if not key:
            raise ValueError("attribute keys are non-empty")
        self.key = key
        self.body = body

    def children(self):
        return (self.body,)

    def _key(self):
        return (self.key, self.body)


class AttrEmpty(Term):
    __slots__ = ()


class Append(Term):
    """The shared monoidal append for HTML, attributes, commands, subs."""

    __slots__ = ("left", "right")

    def __init__(self, left: Term, right: Term):
        super().__init__()
        self.left = left
        self.right = right

    def children(self):
        return (self.left, self.right)

    def _key(self):
        return (self.left, self.right)


class CmdSpawn(Term):
    __slots__ = ("body",)

    def __init__(self, body: Term):
        super().__init__()
        self.body = body

    def children(self):
        return (self.body,)

    def _key(self):
        return (self.body,)


class CmdEmpty(Term):
    __slots__ = ()


class TransitionT(Term):
    __slots__ = ("model", "view", "update", "extract", "cmd")

    def __init__(self, model: Term, view: Term, update: Term, extract: Term, cmd: Term):
        super().__init__()
        self.model = model
        self.view = view
        self.update = update
        self.extract = extract
        self.cmd = cmd

    def children(self):
        return (self.model, self.view, self.update, self.extract, self.cmd)

    def _key(self):
        return self.children()


class NoTransition(Term):
    __slots__ = ("model", "cmd")

    def __init__(self, model: Term, cmd: Term):
        super().__init__()
        self.model = model
        self.cmd = cmd

    def children(self):
        return (self.model, self.cmd)

    def _key(self):
        return self.children()


class Raise(Term):
    __slots__ = ()


class Try(Term):
    __slots__ = ("attempt", "xname", "success", "failure")

    def __init__(self, attempt: Term, xname: str, success: Term, failure: Term):
        super().__init__()
        self.attempt = attempt
        self.xname = xname
        self.success = success
        self.failure = failure

    def children(self):
        return (self.attempt, self.success, self.failure)

    def _key(self):
        return (self.attempt, self.xname, self.success, self.failure)


class SubTerm(Term):
    __slots__ = ("handler", "body")

    def __init__(self, handler: str, body: Term):
        super().__init__()
        self.handler = handler
        self.body = body

    def children(self):
        return (self.body,)

    def _key(self):
        return (self.handler, self.body)


class SubEmpty(Term):
    __slots__ = ()


class Name(Term):
    """A runtime channel endpoint."""

    __slots__ = ("name",)

    def __init__(self, name: str):
        super().__init__()
        self.name = name

    def _key(self):
        return self.name


UNIT_TERM = Unit()
HTML_EMPTY = HtmlEmpty()
ATTR_EMPTY = AttrEmpty()
CMD_EMPTY = CmdEmpty()
SUB_EMPTY = SubEmpty()
RAISE = Raise()

FALSE = Inl(UNIT_TERM, UNIT)
TRUE = Inr(UNIT_TERM, UNIT)


# ---------------------------------------------------------------------------
# Binder table: for each term class, the binders introduced per child index.
# ---------------------------------------------------------------------------

def _binders(t: Term, child_index: int) -> tuple:
    cls = type(t)
    if cls is Lam:
        return (t.param,)
    if cls is Rec:
        return (t.fname, t.param)
    if cls is LetPair:
        return () if child_index == 0 else (t.xname, t.yname)
    if cls is Case:
        if child_index == 1:
            return (t.lname,)
        if child_index == 2:
            return (t.rname,)
        return ()
    if cls is Try:
        return (t.xname,) if child_index == 1 else ()
    return ()


def free_vars(t: Term) -> frozenset:
    cached = t._fv
    if cached is not None:
        return cached
    cls = type(t)
    if cls is Var:
        out = frozenset((t.name,))
    else:
        out = frozenset()
        for i, child in enumerate(t.children()):
            sub = free_vars(child)
            binders = _binders(t, i)
            if binders:
                sub = sub.difference(binders)
            if sub:
                out = out | sub
    t._fv = out
    return out


_EMPTY_NAMES: tuple = ()


def free_names(t: Term) -> tuple:
    """Free runtime names, left-to-right depth-first, duplicate-free."""
    cached = t._fn
    if cached is not None:
        return cached
    if type(t) is Name:
        out: tuple = (t.name,)
    else:
        acc: list = []
        seen: set = set()
        for child in t.children():
            for n in free_names(child):
                if n not in seen:
                    seen.add(n)
                    acc.append(n)
        out = tuple(acc) if acc else _EMPTY_NAMES
    t._fn = out
    return out


# Value recognition (Fig-8-style grammar; cmdSpawn M is a value for any M).

def is_value(t: Term) -> bool:
    cached = t._isv
    if cached is not None:
        return cached
    cls = type(t)
    if cls in (Lam, Rec, Unit, Str, IntLit, HtmlEmpty, AttrEmpty, CmdEmpty,
               SubEmpty, Name, CmdSpawn, Builtin):
        v = True
    elif cls in (Pair, Append):
        v = is_value(t.left) and is_value(t.right)
    elif cls in (Inl, Inr):
        v = is_value(t.inner)
    elif cls is HtmlTag:
        v = is_value(t.attrs) and is_value(t.kids)
    elif cls is HtmlText:
        v = is_value(t.text)
    elif cls is AttrTerm:
        v = is_value(t.body)
    elif cls is SubTerm:
        v = is_value(t.body)
    elif cls is NoTransition:
        v = is_value(t.model) and is_value(t.cmd)
    elif cls is TransitionT:
        v = all(is_value(c) for c in t.children())
    else:
        v = False
    t._isv = v
    return v


# ---------------------------------------------------------------------------
# Substitution
# ---------------------------------------------------------------------------

def fresh_name(base: str, avoid) -> str:
    base = base.split("#")[0] or "x"
    candidate = f"{base}#{next(_term_counter)}"
    while candidate in avoid:
        candidate = f"{base}#{next(_term_counter)}"
    return candidate


def rename_var(t: Term, old: str, new: str) -> Term:
    return substitute(t, old, Var(new))


def substitute(body: Term, var: str, value: Term) -> Term:
    """Capture-avoiding substitution body{value/var}.

    Shares untouched subtrees: returns the original object whenever `var`
    does not occur free in it.
    """
    if var not in free_vars(body):
        return body
    cls = type(body)
    if cls is Var:
        return value  # free_vars guarantees body.name == var
    if cls is Lam:
        param = body.param
        inner = body.body
        if param in free_vars(value):
            renamed = fresh_name(param, free_vars(inner) | free_vars(value))
            inner = rename_var(inner, param, Var(renamed).name)
            param = renamed
        return Lam(param, body.ptype, substitute(inner, var, value), body.kind)
    if cls is Rec:
        fname, param, inner = body.fname, body.param, body.body
        val_fv = free_vars(value)
        if fname in val_fv:
            renamed = fresh_name(fname, free_vars(inner) | val_fv)
            inner = rename_var(inner, fname, renamed)
            fname = renamed
        if param in val_fv:
            renamed = fresh_name(param, free_vars(inner) | val_fv)
            inner = rename_var(inner, param, renamed)
            param = renamed
        return Rec(fname, param, body.ptype, body.rtype, substitute(inner, var, value))
    if cls is App:
        return App(substitute(body.fn, var, value), substitute(body.arg, var, value))
    if cls is ConstApp:
        return ConstApp(body.const, substitute(body.arg, var, value), body.session)
    if cls is Pair:
        return Pair(substitute(body.left, var, value), substitute(body.right, var, value))
    if cls is LetPair:
        pair = substitute(body.pair, var, value)
        xname, yname, inner = body.xname, body.yname, body.body
        if var in (xname, yname):
            return LetPair(xname, yname, pair, inner)
        val_fv = free_vars(value)
        if xname in val_fv:
            renamed = fresh_name(xname, free_vars(inner) | val_fv)
            inner = rename_var(inner, xname, renamed)
            xname = renamed
        if yname in val_fv:
            renamed = fresh_name(yname, free_vars(inner) | val_fv)
            inner = rename_var(inner, yname, renamed)
            yname = renamed
        return LetPair(xname, yname, pair, substitute(inner, var, value))
    if cls is Inl:
        return Inl(substitute(body.inner, var, value), body.other)
    if cls is Inr:
        return Inr(substitute(body.inner, var, value), body.other)
    if cls is Case:
        scrut = substitute(body.scrutinee, var, value)
        lname, left, rname, right = body.lname, body.left, body.rname, body.right
        val_fv = free_vars(value)
        if var != lname and var in free_vars(left):
            if lname in val_fv:
                renamed = fresh_name(lname, free_vars(left) | val_fv)
                left = rename_var(left, lname, renamed)
                lname = renamed
            left = substitute(left, var, value)
        if var != rname and var in free_vars(right):
            if rname in val_fv:
                renamed = fresh_name(rname, free_vars(right) | val_fv)
                right = rename_var(right, rname, renamed)
                rname = renamed
            right = substitute(right, var, value)
        return Case(scrut, lname, left, rname, right)
    if cls is HtmlTag:
        return HtmlTag(body.tag, substitute(body.attrs, var, value), substitute(body.kids, var, value))
    if cls is HtmlText:
        return HtmlText(substitute(body.text, var, value))
    if cls is AttrTerm:
        return AttrTerm(body.key, substitute(body.body, var, value))
    if cls is Append:
        return Append(substitute(body.left, var, value), substitute(body.right, var, value))
    if cls is CmdSpawn:
        return CmdSpawn(substitute(body.body, var, value))
    if cls is TransitionT:
        return TransitionT(*(substitute(c, var, value) for c in body.children()))
    if cls is NoTransition:
        return NoTransition(substitute(body.model, var, value), substitute(body.cmd, var, value))
    if cls is Try:
        attempt = substitute(body.attempt, var, value)
        xname, success, failure = body.xname, body.success, body.failure
        failure = substitute(failure, var, value)
        if var != xname and var in free_vars(success):
            val_fv = free_vars(value)
            if xname in val_fv:
                renamed = fresh_name(xname, free_vars(success) | val_fv)
                success = rename_var(success, xname, renamed)
                xname = renamed
            success = substitute(success, var, value)
        return Try(attempt, xname, success, failure)
    if cls is SubTerm:
        return SubTerm(body.handler, substitute(body.body, var, value))
    raise TypeError(f"substitute: unhandled node {cls.__name__}")


def substitute_many(body: Term, pairs: dict) -> Term:
    for var, value in pairs.items():
        body = substitute(body, var, value)
    return body


# ---------------------------------------------------------------------------
# Alpha equivalence (de Bruijn-style comparison via binder maps)
# ---------------------------------------------------------------------------

def alpha_equal(a: Term, b: Term) -> bool:
    return _alpha(a, b, {}, {}, [0])


def _alpha(a: Term, b: Term, env_a: dict, env_b: dict, depth: list) -> bool:
    if type(a) is not type(b):
        return False
    cls = type(a)
    if cls is Var:
        ia, ib = env_a.get(a.name, a.name), env_b.get(b.name, b.name)
        return ia == ib
    if cls in (Global, Name, Builtin):
        return a.name == b.name
    if cls is Str or cls is IntLit:
        return a.value == b.value
    if cls in (Unit, HtmlEmpty, AttrEmpty, CmdEmpty, SubEmpty, Raise):
        return True
    if cls is ConstApp:
        if a.const is not b.const or a.session != b.session:
            return False
    if cls is Lam and (a.ptype != b.ptype or a.kind is not b.kind):
        return False
    if cls is Rec and (a.ptype != b.ptype or a.rtype != b.rtype):
        return False
    if cls in (Inl, Inr) and a.other != b.other:
        return False
    if cls is HtmlTag and a.tag != b.tag:
        return False
    if cls is AttrTerm and a.key != b.key:
        return False
    if cls is SubTerm and a.handler != b.handler:
        return False
    kids_a, kids_b = a.children(), b.children()
    if len(kids_a) != len(kids_b):
        return False
    for i, (ka, kb) in enumerate(zip(kids_a, kids_b)):
        ba, bb = _binders(a, i), _binders(b, i)
        if len(ba) != len(bb):
            return False
        if ba:
            na, nb = dict(env_a), dict(env_b)
            for va, vb in zip(ba, bb):
                depth[0] += 1
                na[va] = depth[0]
                nb[vb] = depth[0]
            if not _alpha(ka, kb, na, nb, depth):
                return False
        else:
            if not _alpha(ka, kb, env_a, env_b, depth):
                return False
    return True
