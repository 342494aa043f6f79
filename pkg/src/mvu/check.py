"""Static semantics: kinding, duality, session equality, linear typing.

The checker synthesises types bottom-up. Context splitting is realised by
usage threading: each judgement returns the set of linear bindings it
consumed, multi-premise rules demand disjointness, and binder rules demand
their linear binders were consumed. `raise` synthesises a bottom type that
unifies with everything and is absorbed by joins; that is the algorithmic
rendering of its "any type" rule.

Diagnostics carry the name of the violated rule (T-Var, T-Abs, T-AppK, ...).
"""

from __future__ import annotations

from functools import lru_cache

from . import syntax as S
from .registry import BUILTIN_TYPES, is_handler_name, payload_type
from .syntax import (
    BOTTOM,
    Kind,
    SessionType,
    Term,
    Type,
    kind_join,
)


class MvuTypeError(Exception):
    def __init__(self, rule: str, msg: str):
        super().__init__(f"[{rule}] {msg}")
        self.rule = rule
        self.msg = msg


# ---------------------------------------------------------------------------
# Kinding
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def kind_of(t: Type) -> Kind:
    """Least kind assignable to a closed type."""
    cls = type(t)
    if cls in (S.TUnit, S.TString, S.TInt, S.THtml, S.TAttr, S.TBottom, S.TSub):
        return Kind.U
    if cls is S.TSession:
        return Kind.L
    if cls is S.TFun:
        return t.kind
    if cls is S.TCmd:
        return kind_of(t.msg)
    if cls in (S.TProduct, S.TSum):
        return kind_join(kind_of(t.left), kind_of(t.right))
    if cls is S.TTransition:
        return kind_join(kind_of(t.model), kind_of(t.msg))
    raise TypeError(t)


def has_kind(t: Type, k: Kind) -> bool:
    return kind_of(t) <= k


# ---------------------------------------------------------------------------
# Duality and session equality
# ---------------------------------------------------------------------------


def _subst_var_only(s: SessionType, var: str, repl: SessionType) -> SessionType:
    """Replace the plain variable `var` (S{repl/var}), leaving ~var alone."""
    match s:
        case S.SOut(p, c):
            return S.SOut(_subst_var_in_type(p, var, repl), _subst_var_only(c, var, repl))
        case S.SIn(p, c):
            return S.SIn(_subst_var_in_type(p, var, repl), _subst_var_only(c, var, repl))
        case S.SRec(v, b):
            if v == var:
                return s
            return S.SRec(v, _subst_var_only(b, var, repl))
        case S.SVar(n):
            return repl if n == var else s
        case _:
            return s


def _subst_var_in_type(t: Type, var: str, repl: SessionType) -> Type:
    match t:
        case S.TSession(sess):
            return S.TSession(_subst_var_only(sess, var, repl))
        case S.TFun(p, r, k):
            return S.TFun(_subst_var_in_type(p, var, repl), _subst_var_in_type(r, var, repl), k)
        case S.TProduct(a, b):
            return S.TProduct(_subst_var_in_type(a, var, repl), _subst_var_in_type(b, var, repl))
        case S.TSum(a, b):
            return S.TSum(_subst_var_in_type(a, var, repl), _subst_var_in_type(b, var, repl))
        case S.TTransition(a, b):
            return S.TTransition(_subst_var_in_type(a, var, repl), _subst_var_in_type(b, var, repl))
        case S.THtml(a):
            return S.THtml(_subst_var_in_type(a, var, repl))
        case S.TAttr(a):
            return S.TAttr(_subst_var_in_type(a, var, repl))
        case S.TCmd(a):
            return S.TCmd(_subst_var_in_type(a, var, repl))
        case S.TSub(a):
            return S.TSub(_subst_var_in_type(a, var, repl))
        case _:
            return t


@lru_cache(maxsize=8192)
def dual_session(s: SessionType) -> SessionType:
    """Homomorphic duality; mu per dual(mu t. S) = mu t. dual(S{~t/t})."""
    match s:
        case S.SOut(p, c):
            return S.SIn(p, dual_session(c))
        case S.SIn(p, c):
            return S.SOut(p, dual_session(c))
        case S.SEnd():
            return s
        case S.SRec(v, b):
            return S.SRec(v, dual_session(_subst_var_only(b, v, S.SDualVar(v))))
        case S.SDualVar(n):
            return S.SVar(n)
        case S.SVar(n):
            return S.SDualVar(n)
    raise TypeError(s)


def _subst_session(s: SessionType, var: str, repl: SessionType, dual_repl: SessionType) -> SessionType:
    """Replace both var and ~var (used by unfolding)."""
    match s:
        case S.SOut(p, c):
            return S.SOut(_subst_both_in_type(p, var, repl, dual_repl),
                          _subst_session(c, var, repl, dual_repl))
        case S.SIn(p, c):
            return S.SIn(_subst_both_in_type(p, var, repl, dual_repl),
                         _subst_session(c, var, repl, dual_repl))
        case S.SRec(v, b):
            if v == var:
                return s
            return S.SRec(v, _subst_session(b, var, repl, dual_repl))
        case S.SVar(n):
            return repl if n == var else s
        case S.SDualVar(n):
            return dual_repl if n == var else s
        case _:
            return s


def _subst_both_in_type(t: Type, var: str, repl: SessionType, dual_repl: SessionType) -> Type:
    match t:
        case S.TSession(sess):
            return S.TSession(_subst_session(sess, var, repl, dual_repl))
        case S.TFun(p, r, k):
            return S.TFun(_subst_both_in_type(p, var, repl, dual_repl),
                          _subst_both_in_type(r, var, repl, dual_repl), k)
        case S.TProduct(a, b):
            return S.TProduct(_subst_both_in_type(a, var, repl, dual_repl),
                              _subst_both_in_type(b, var, repl, dual_repl))
        case S.TSum(a, b):
            return S.TSum(_subst_both_in_type(a, var, repl, dual_repl),
                          _subst_both_in_type(b, var, repl, dual_repl))
        case S.TTransition(a, b):
            return S.TTransition(_subst_both_in_type(a, var, repl, dual_repl),
                                 _subst_both_in_type(b, var, repl, dual_repl))
        case S.THtml(a):
            return S.THtml(_subst_both_in_type(a, var, repl, dual_repl))
        case S.TAttr(a):
            return S.TAttr(_subst_both_in_type(a, var, repl, dual_repl))
        case S.TCmd(a):
            return S.TCmd(_subst_both_in_type(a, var, repl, dual_repl))
        case S.TSub(a):
            return S.TSub(_subst_both_in_type(a, var, repl, dual_repl))
        case _:
            return t


@lru_cache(maxsize=4096)
def unfold(s: SessionType) -> SessionType:
    """Unfold top-level mu binders until a communication head appears."""
    while isinstance(s, S.SRec):
        s = _subst_session(s.body, s.var, s, dual_session(s))
    return s


def session_equal(a: SessionType, b: SessionType) -> bool:
    try:
        _join_session(a, b, frozenset())
        return True
    except MvuTypeError:
        return False


def equal_types(a: Type, b: Type) -> bool:
    try:
        join_types(a, b)
        return True
    except MvuTypeError:
        return False


def join_types(a: Type, b: Type, assumed: frozenset = frozenset()) -> Type:
    """Equality-with-bottom; returns the more informative of the two.

    Session components are compared coinductively (bisimulation over the
    regular trees, `assumed` holding visited session pairs).
    """
    if a is b:
        return a
    ca, cb = type(a), type(b)
    if ca is S.TBottom:
        return b
    if cb is S.TBottom:
        return a
    if ca is not cb:
        raise MvuTypeError("T-Eq", f"type mismatch: {a} vs {b}")
    if ca in (S.TUnit, S.TString, S.TInt):
        return a
    if ca is S.TFun:
        if a.kind is not b.kind:
            raise MvuTypeError("T-Eq", f"function kind mismatch: {a} vs {b}")
        return S.TFun(join_types(a.param, b.param, assumed),
                      join_types(a.result, b.result, assumed), a.kind)
    if ca is S.TProduct:
        return S.TProduct(join_types(a.left, b.left, assumed), join_types(a.right, b.right, assumed))
    if ca is S.TSum:
        return S.TSum(join_types(a.left, b.left, assumed), join_types(a.right, b.right, assumed))
    if ca is S.THtml:
        return S.THtml(join_types(a.msg, b.msg, assumed))
    if ca is S.TAttr:
        return S.TAttr(join_types(a.msg, b.msg, assumed))
    if ca is S.TCmd:
        return S.TCmd(join_types(a.msg, b.msg, assumed))
    if ca is S.TSub:
        return S.TSub(join_types(a.msg, b.msg, assumed))
    if ca is S.TTransition:
        return S.TTransition(join_types(a.model, b.model, assumed), join_types(a.msg, b.msg, assumed))
    if ca is S.TSession:
        return S.TSession(_join_session(a.session, b.session, assumed))
    raise TypeError(a)


def _join_session(a: SessionType, b: SessionType, assumed: frozenset) -> SessionType:
    if a == b:
        return a
    if (a, b) in assumed:
        return a
    ua, ub = unfold(a), unfold(b)
    assumed = assumed | {(a, b)}
    ca, cb = type(ua), type(ub)
    if ca is not cb:
        raise MvuTypeError("T-Eq", f"session type mismatch: {a} vs {b}")
    if ca is S.SEnd:
        return ua
    if ca in (S.SOut, S.SIn):
        join_types(ua.payload, ub.payload, assumed)
        _join_session(ua.cont, ub.cont, assumed)
        return ua
    # free variables cannot appear after unfolding a closed type
    raise MvuTypeError("T-Eq", f"session type mismatch: {a} vs {b}")


# ---------------------------------------------------------------------------
# Linear term checking
# ---------------------------------------------------------------------------

EMPTY: frozenset = frozenset()


def _disjoint(rule: str, *useds: frozenset) -> frozenset:
    out = EMPTY
    for u in useds:
        if u:
            overlap = out & u
            if overlap:
                names = sorted(_display(n) for n in overlap)
                raise MvuTypeError(
                    rule, f"linear binding(s) used more than once: {names}")
            out = out | u
    return out


def _display(name: str) -> str:
    return name.split("#")[0] or name


_LEAF_NODES = (S.Var, S.Name, S.Global, S.Builtin, S.Unit, S.Str, S.IntLit,
               S.Raise, S.HtmlEmpty, S.AttrEmpty, S.CmdEmpty, S.SubEmpty)
_LEAF_SET = frozenset(_LEAF_NODES)


_NO_NAME_KEY = ((),)


class TermChecker:
    """Synthesis with usage threading. `globals_types` maps top-level names."""

    def __init__(self, globals_types: dict | None = None):
        self.globals_types = globals_types or {}
        self._gid = id(self.globals_types)

    # helpers ---------------------------------------------------------------

    def _binder_exit(self, rule: str, name: str, ty: Type, used: frozenset) -> frozenset:
        if name in used:
            return used - {name}
        if kind_of(ty) is Kind.L:
            raise MvuTypeError(rule, f"linear binding {_display(name)!r} is unused")
        return used

    @staticmethod
    def _expect_product(rule: str, t: Type, what: str) -> tuple:
        if isinstance(t, S.TProduct):
            return t.left, t.right
        if isinstance(t, S.TBottom):
            return BOTTOM, BOTTOM
        raise MvuTypeError(rule, f"{what} must be a pair, found {t}")

    @staticmethod
    def _expect_sum(rule: str, t: Type, what: str) -> tuple:
        if isinstance(t, S.TSum):
            return t.left, t.right
        if isinstance(t, S.TBottom):
            return BOTTOM, BOTTOM
        raise MvuTypeError(rule, f"{what} must be a sum, found {t}")

    @staticmethod
    def _expect_session(rule: str, t: Type, what: str) -> SessionType | None:
        if isinstance(t, S.TSession):
            return t.session
        if isinstance(t, S.TBottom):
            return None
        raise MvuTypeError(rule, f"{what} must be a session endpoint, found {t}")

    # main synthesis ---------------------------------------------------------

    def synth(self, t: Term, env: dict) -> tuple:
        """Memoised on closed terms: the environment only reaches a closed
        term through the session types of its free runtime names, which are
        part of the cache key."""
        cls = type(t)
        if cls in _LEAF_SET:
            return self._synth_inner(t, env)
        if S.free_vars(t):
            return self._synth_inner(t, env)
        names = t._fn
        if names is None:
            names = S.free_names(t)
        if names:
            key = (self._gid, tuple(env.get("#" + n) for n in names))
        else:
            key = self._gid
        cached = t._ty
        if cached is not None and cached[0] == key:
            return cached[1]
        result = self._synth_inner(t, env)
        t._ty = (key, result)
        return result

    def _synth_inner(self, t: Term, env: dict) -> tuple:
        cls = type(t)
        if cls is S.Var:
            ty = env.get(t.name)
            if ty is None:
                raise MvuTypeError("T-Var", f"unbound variable {_display(t.name)!r}")
            return ty, (frozenset((t.name,)) if kind_of(ty) is Kind.L else EMPTY)
        if cls is S.App:
            fty, fused = self.synth(t.fn, env)
            aty, aused = self.synth(t.arg, env)
            used = _disjoint("T-Split", fused, aused)
            if isinstance(fty, S.TBottom):
                return BOTTOM, used
            if not isinstance(fty, S.TFun):
                raise MvuTypeError("T-App", f"application of a non-function of type {fty}")
            try:
                join_types(aty, fty.param)
            except MvuTypeError as e:
                raise MvuTypeError("T-App", f"argument type {aty} does not match parameter {fty.param}") from e
            return fty.result, used
        if cls is S.Pair:
            lty, lused = self.synth(t.left, env)
            rty, rused = self.synth(t.right, env)
            return S.TProduct(lty, rty), _disjoint("T-Split", lused, rused)
        if cls is S.LetPair:
            pty, pused = self.synth(t.pair, env)
            a, b = self._expect_product("T-LetPair", pty, "let-pair scrutinee")
            env2 = dict(env)
            env2[t.xname] = a
            env2[t.yname] = b
            bty, bused = self.synth(t.body, env2)
            bused = self._binder_exit("T-Var", t.xname, a, bused)
            bused = self._binder_exit("T-Var", t.yname, b, bused)
            return bty, _disjoint("T-Split", pused, bused)
        if cls is S.Name:
            key = "#" + t.name
            ty = env.get(key)
            if ty is None:
                raise MvuTypeError("T-Name", f"unknown runtime name {t.name!r}")
            return ty, frozenset((key,))
        if cls is S.Global:
            ty = self.globals_types.get(t.name)
            if ty is None:
                raise MvuTypeError("T-Var", f"unknown global {t.name!r}")
            return ty, EMPTY
        if cls is S.Builtin:
            ty = BUILTIN_TYPES.get(t.name)
            if ty is None:
                raise MvuTypeError("T-Var", f"unknown builtin {t.name!r}")
            return ty, EMPTY
        if cls is S.Unit:
            return S.UNIT, EMPTY
        if cls is S.Str:
            return S.STRING, EMPTY
        if cls is S.IntLit:
            return S.INT, EMPTY
        if cls is S.Raise:
            return BOTTOM, EMPTY
        if cls is S.Lam:
            if t.ptype is None:
                raise MvuTypeError("T-Abs", "lambda parameter needs a type annotation")
            env2 = dict(env)
            env2[t.param] = t.ptype
            bty, bused = self.synth(t.body, env2)
            captured = self._binder_exit("T-Var", t.param, t.ptype, bused)
            if t.kind is Kind.U and captured:
                raise MvuTypeError(
                    "T-Abs",
                    "unrestricted function captures linear binding(s) "
                    f"{sorted(_display(n) for n in captured)}")
            return S.TFun(t.ptype, bty, t.kind), captured
        if cls is S.Rec:
            if t.ptype is None or t.rtype is None:
                raise MvuTypeError("T-Rec", "recursive function needs parameter and result annotations")
            fty = S.TFun(t.ptype, t.rtype, Kind.U)
            env2 = dict(env)
            env2[t.fname] = fty
            env2[t.param] = t.ptype
            bty, bused = self.synth(t.body, env2)
            join_types(bty, t.rtype)
            captured = self._binder_exit("T-Var", t.param, t.ptype, bused) - {t.fname}
            if captured:
                raise MvuTypeError(
                    "T-Rec",
                    "recursive function captures linear binding(s) "
                    f"{sorted(_display(n) for n in captured)}")
            return fty, EMPTY
        if cls is S.ConstApp:
            return self._synth_const(t, env)
        if cls is S.Inl:
            ity, used = self.synth(t.inner, env)
            if t.other is None:
                raise MvuTypeError("T-Inl", "sum injection needs its other-side annotation")
            return S.TSum(ity, t.other), used
        if cls is S.Inr:
            ity, used = self.synth(t.inner, env)
            if t.other is None:
                raise MvuTypeError("T-Inr", "sum injection needs its other-side annotation")
            return S.TSum(t.other, ity), used
        if cls is S.Case:
            sty, sused = self.synth(t.scrutinee, env)
            a, b = self._expect_sum("T-Case", sty, "case scrutinee")
            lenv = dict(env)
            lenv[t.lname] = a
            lty, lused = self.synth(t.left, lenv)
            lused = self._binder_exit("T-Var", t.lname, a, lused)
            renv = dict(env)
            renv[t.rname] = b
            rty, rused = self.synth(t.right, renv)
            rused = self._binder_exit("T-Var", t.rname, b, rused)
            if lused != rused:
                diff = sorted(_display(n) for n in lused.symmetric_difference(rused))
                raise MvuTypeError(
                    "T-Case", f"case branches consume different linear bindings: {diff}")
            return join_types(lty, rty), _disjoint("T-Split", sused, lused)
        if cls is S.HtmlTag:
            aty, aused = self.synth(t.attrs, env)
            kty, kused = self.synth(t.kids, env)
            msg_a = self._expect_msg("T-HtmlTag", aty, S.TAttr, "tag attributes")
            msg_k = self._expect_msg("T-HtmlTag", kty, S.THtml, "tag children")
            return S.THtml(join_types(msg_a, msg_k)), _disjoint("T-Split", aused, kused)
        if cls is S.HtmlText:
            ity, used = self.synth(t.text, env)
            join_types(ity, S.STRING)
            return S.THtml(BOTTOM), used
        if cls is S.HtmlEmpty:
            return S.THtml(BOTTOM), EMPTY
        if cls is S.AttrTerm:
            bty, used = self.synth(t.body, env)
            if is_handler_name(t.key):
                if isinstance(bty, S.TBottom):
                    return S.TAttr(BOTTOM), used
                if not isinstance(bty, S.TFun) or bty.kind is not Kind.U:
                    raise MvuTypeError(
                        "T-EvtAttr", f"handler {t.key!r} needs an unrestricted handler function, found {bty}")
                try:
                    join_types(bty.param, payload_type(t.key))
                except MvuTypeError as e:
                    raise MvuTypeError(
                        "T-EvtAttr",
                        f"handler {t.key!r} takes {bty.param}, its event payload is {payload_type(t.key)}") from e
                return S.TAttr(bty.result), used
            try:
                join_types(bty, S.STRING)
            except MvuTypeError as e:
                raise MvuTypeError("T-Attr", f"attribute {t.key!r} body must be a String, found {bty}") from e
            return S.TAttr(BOTTOM), used
        if cls is S.AttrEmpty:
            return S.TAttr(BOTTOM), EMPTY
        if cls is S.Append:
            lty, lused = self.synth(t.left, env)
            rty, rused = self.synth(t.right, env)
            used = _disjoint("T-Split", lused, rused)
            return self._join_monoid(lty, rty), used
        if cls is S.CmdSpawn:
            ity, used = self.synth(t.body, env)
            return S.TCmd(ity), used
        if cls is S.CmdEmpty:
            return S.TCmd(BOTTOM), EMPTY
        if cls is S.SubTerm:
            bty, used = self.synth(t.body, env)
            if not is_handler_name(t.handler):
                raise MvuTypeError("T-Sub", f"unknown handler name {t.handler!r}")
            if isinstance(bty, S.TBottom):
                return S.TSub(BOTTOM), used
            if not isinstance(bty, S.TFun) or bty.kind is not Kind.U:
                raise MvuTypeError("T-Sub", f"subscription body must be an unrestricted handler, found {bty}")
            join_types(bty.param, payload_type(t.handler))
            return S.TSub(bty.result), used
        if cls is S.SubEmpty:
            return S.TSub(BOTTOM), EMPTY
        if cls is S.TransitionT:
            return self._synth_transition(t, env)
        if cls is S.NoTransition:
            mty, mused = self.synth(t.model, env)
            cty, cused = self.synth(t.cmd, env)
            msg = self._expect_msg("T-NoTransition", cty, S.TCmd, "noTransition command")
            return S.TTransition(mty, msg), _disjoint("T-Split", mused, cused)
        if cls is S.Try:
            aty, aused = self.synth(t.attempt, env)
            env2 = dict(env)
            env2[t.xname] = aty
            sty, sused = self.synth(t.success, env2)
            sused = self._binder_exit("T-Var", t.xname, aty, sused)
            fty, fused = self.synth(t.failure, env)
            if sused != fused:
                diff = sorted(_display(n) for n in sused.symmetric_difference(fused))
                raise MvuTypeError(
                    "T-Try", f"try continuations consume different linear bindings: {diff}")
            return join_types(sty, fty), _disjoint("T-Split", aused, sused)
        raise TypeError(f"synth: unhandled node {cls.__name__}")

    @staticmethod
    def _expect_msg(rule: str, t: Type, wrapper: type, what: str) -> Type:
        if isinstance(t, wrapper):
            return t.msg
        if isinstance(t, S.TBottom):
            return BOTTOM
        raise MvuTypeError(rule, f"{what} has type {t}, expected {wrapper.__name__}")

    @staticmethod
    def _join_monoid(a: Type, b: Type) -> Type:
        if isinstance(a, S.TBottom):
            return b
        if isinstance(b, S.TBottom):
            return a
        if type(a) is not type(b) or not isinstance(a, (S.THtml, S.TAttr, S.TCmd, S.TSub)):
            raise MvuTypeError("T-Append", f"cannot append {a} and {b}")
        return type(a)(join_types(a.msg, b.msg))

    def _synth_const(self, t: S.ConstApp, env: dict) -> tuple:
        aty, used = self.synth(t.arg, env)
        k = t.const
        if k is S.Const.SEND:
            payload, chan = self._expect_product("T-AppK", aty, "send argument")
            sess = self._expect_session("T-AppK", chan, "send endpoint")
            if sess is None:
                return BOTTOM, used
            head = unfold(sess)
            if not isinstance(head, S.SOut):
                raise MvuTypeError("T-AppK", f"send on an endpoint of type {sess}, which is not an output")
            try:
                join_types(payload, head.payload)
            except MvuTypeError as e:
                raise MvuTypeError(
                    "T-AppK", f"send payload {payload} does not match protocol payload {head.payload}") from e
            return S.TSession(head.cont), used
        if k is S.Const.RECEIVE:
            sess = self._expect_session("T-AppK", aty, "receive endpoint")
            if sess is None:
                return BOTTOM, used
            head = unfold(sess)
            if not isinstance(head, S.SIn):
                raise MvuTypeError("T-AppK", f"receive on an endpoint of type {sess}, which is not an input")
            return S.TProduct(head.payload, S.TSession(head.cont)), used
        if k is S.Const.NEW:
            join_types(aty, S.UNIT)
            if t.session is None:
                raise MvuTypeError("T-AppK", "new needs an explicit session type instantiation")
            return S.TProduct(S.TSession(t.session), S.TSession(dual_session(t.session))), used
        if k is S.Const.CANCEL:
            self._expect_session("T-AppK", aty, "cancel argument")
            return S.UNIT, used
        if k is S.Const.CLOSE:
            sess = self._expect_session("T-AppK", aty, "close argument")
            if sess is not None and not isinstance(unfold(sess), S.SEnd):
                raise MvuTypeError("T-AppK", f"close on an endpoint of type {sess}, which is not End")
            return S.UNIT, used
        raise TypeError(k)

    def _synth_transition(self, t: S.TransitionT, env: dict) -> tuple:
        mty, mu = self.synth(t.model, env)
        vty, vu = self.synth(t.view, env)
        uty, uu = self.synth(t.update, env)
        ety, eu = self.synth(t.extract, env)
        cty, cu = self.synth(t.cmd, env)
        used = _disjoint("T-Split", mu, vu, uu, eu, cu)
        a, b, c = mty, BOTTOM, BOTTOM
        try:
            if not isinstance(vty, S.TBottom):
                if not isinstance(vty, S.TFun) or vty.kind is not Kind.U:
                    raise MvuTypeError("T-Transition", f"transition view has type {vty}")
                c = join_types(c, vty.param)
                b = join_types(b, self._expect_msg("T-Transition", vty.result, S.THtml, "view result"))
            if not isinstance(uty, S.TBottom):
                if not isinstance(uty, S.TFun) or uty.kind is not Kind.U:
                    raise MvuTypeError("T-Transition", f"transition update has type {uty}")
                ub, ua = self._expect_product("T-Transition", uty.param, "update parameter")
                a = join_types(a, ua)
                b = join_types(b, ub)
                res = uty.result
                if not isinstance(res, S.TBottom):
                    if not isinstance(res, S.TTransition):
                        raise MvuTypeError("T-Transition", f"transition update returns {res}")
                    a = join_types(a, res.model)
                    b = join_types(b, res.msg)
            if not isinstance(ety, S.TBottom):
                if not isinstance(ety, S.TFun) or ety.kind is not Kind.U:
                    raise MvuTypeError("T-Transition", f"transition extract has type {ety}")
                a = join_types(a, ety.param)
                ea, ec = self._expect_product("T-Transition", ety.result, "extract result")
                a = join_types(a, ea)
                c = join_types(c, ec)
            b = join_types(b, self._expect_msg("T-Transition", cty, S.TCmd, "transition command"))
        except MvuTypeError as e:
            raise MvuTypeError("T-Transition", f"inconsistent transition components: {e.msg}") from e
        if kind_of(c) is not Kind.U:
            raise MvuTypeError("T-Transition", f"unrestricted projection type {c} must have kind U")
        # the result's parameters are unconstrained by the new state's types
        return S.TTransition(BOTTOM, BOTTOM), used


def check_term(t: Term, env: dict | None = None, globals_types: dict | None = None) -> tuple:
    """Synthesise (type, consumed linear bindings) for a term."""
    return TermChecker(globals_types).synth(t, env or {})


# ---------------------------------------------------------------------------
# Whole-program checking
# ---------------------------------------------------------------------------

MODE_CORE = "core"
MODE_CORE_SUB = "core-sub"
MODE_EXTENDED = "extended"


class ProgramInfo:
    def __init__(self, mode: str, model: Type, msg: Type, umodel: Type | None):
        self.mode = mode
        self.model = model
        self.msg = msg
        self.umodel = umodel

    def __repr__(self) -> str:
        return f"ProgramInfo({self.mode}, model={self.model}, msg={self.msg})"


def _spine(t: Type, arity: int) -> list | None:
    out = []
    for _ in range(arity - 1):
        if not isinstance(t, S.TProduct):
            return None
        out.append(t.left)
        t = t.right
    out.append(t)
    return out


def _fun(t: Type, rule: str, what: str) -> S.TFun:
    if isinstance(t, S.TFun):
        return t
    raise MvuTypeError(rule, f"{what} has type {t}, expected a function")


def classify_main_type(ty: Type) -> ProgramInfo:
    """Match the main expression's type against the run-tuple shapes."""
    errors = []
    parts = _spine(ty, 6)
    if parts is not None:
        try:
            return _classify_extended(parts)
        except MvuTypeError as e:
            errors.append(f"as a 6-tuple: {e.msg}")
    parts = _spine(ty, 4)
    if parts is not None:
        try:
            return _classify_core(parts, subs=True)
        except MvuTypeError as e:
            errors.append(f"as a 4-tuple: {e.msg}")
    parts = _spine(ty, 3)
    if parts is not None:
        try:
            return _classify_core(parts, subs=False)
        except MvuTypeError as e:
            errors.append(f"as a 3-tuple: {e.msg}")
    raise MvuTypeError(
        "TP-Run",
        "main expression does not fit any run tuple "
        f"(model, view, update[, subs] | 6-tuple with transitions); tried: {'; '.join(errors) or ty}")


def _classify_core(parts: list, subs: bool) -> ProgramInfo:
    a = parts[0]
    vty = _fun(parts[1], "TP-Run", "view")
    uty = _fun(parts[2], "TP-Run", "update")
    # the event loop reuses the function state on every message
    for f, what in ((vty, "view"), (uty, "update")):
        if f.kind is not Kind.U:
            raise MvuTypeError("TP-Run", f"{what} must be an unrestricted function")
    model = join_types(a, vty.param)
    msg = _expect(vty.result, S.THtml, "view result")
    ub, ua = _product(uty.param, "update parameter")
    model = join_types(model, ua)
    model = join_types(model, uty.result)
    msg = join_types(msg, ub)
    if subs:
        sty = _fun(parts[3], "TP-Run", "subscriptions")
        if sty.kind is not Kind.U:
            raise MvuTypeError("TP-Run", "subscriptions must be an unrestricted function")
        model = join_types(model, sty.param)
        msg = join_types(msg, _expect(sty.result, S.TSub, "subscriptions result"))
    if kind_of(model) is not Kind.U:
        raise MvuTypeError("TP-Run", f"core-calculus model type {model} must be unrestricted")
    return ProgramInfo(MODE_CORE_SUB if subs else MODE_CORE, model, msg, None)


def _classify_extended(parts: list) -> ProgramInfo:
    a = parts[0]
    vty = _fun(parts[1], "TP-Run", "view")
    uty = _fun(parts[2], "TP-Run", "update")
    ety = _fun(parts[3], "TP-Run", "extract")
    cty = parts[4]
    sty = _fun(parts[5], "TP-Run", "server thread")
    for f, what in ((vty, "view"), (uty, "update"), (ety, "extract")):
        if f.kind is not Kind.U:
            raise MvuTypeError("TP-Run", f"{what} must be an unrestricted function")
    model = a
    umodel = vty.param
    msg = _expect(vty.result, S.THtml, "view result")
    ub, ua = _product(uty.param, "update parameter")
    model = join_types(model, ua)
    msg = join_types(msg, ub)
    ures = uty.result
    if not isinstance(ures, S.TBottom):
        if not isinstance(ures, S.TTransition):
            raise MvuTypeError("TP-Run", f"update must return a transition, found {ures}")
        model = join_types(model, ures.model)
        msg = join_types(msg, ures.msg)
    model = join_types(model, ety.param)
    ea, ec = _product(ety.result, "extract result")
    model = join_types(model, ea)
    umodel = join_types(umodel, ec)
    msg = join_types(msg, _expect(cty, S.TCmd, "initial command"))
    join_types(sty.param, S.UNIT)
    join_types(sty.result, S.UNIT)
    # U <= L: an unrestricted server function is accepted where 1 -oL 1 is expected
    if kind_of(umodel) is not Kind.U:
        raise MvuTypeError("TP-Run", f"unrestricted model type {umodel} must have kind U")
    return ProgramInfo(MODE_EXTENDED, model, msg, umodel)


def _expect(t: Type, wrapper: type, what: str) -> Type:
    if isinstance(t, wrapper):
        return t.msg
    if isinstance(t, S.TBottom):
        return BOTTOM
    raise MvuTypeError("TP-Run", f"{what} has type {t}, expected {wrapper.__name__}")


def _product(t: Type, what: str) -> tuple:
    if isinstance(t, S.TProduct):
        return t.left, t.right
    if isinstance(t, S.TBottom):
        return BOTTOM, BOTTOM
    raise MvuTypeError("TP-Run", f"{what} has type {t}, expected a pair")


def check_program(prog) -> ProgramInfo:
    """Typecheck all top-level definitions and the main expression."""
    globals_types = {name: g.declared for name, g in prog.globals.items()}
    checker = TermChecker(globals_types)
    for name, g in prog.globals.items():
        if kind_of(g.declared) is not Kind.U:
            raise MvuTypeError("T-Var", f"top-level definition {name!r} must have an unrestricted type")
        ty, used = checker.synth(g.term, {})
        if used:
            raise MvuTypeError("T-Split", f"top-level definition {name!r} consumes linear bindings")
        try:
            join_types(ty, g.declared)
        except MvuTypeError as e:
            raise MvuTypeError(
                "T-Def", f"definition {name!r} has type {ty}, declared {g.declared}") from e
    if prog.main is None:
        return ProgramInfo(MODE_CORE, BOTTOM, BOTTOM, None)
    mty, used = checker.synth(prog.main, {})
    if used:
        raise MvuTypeError("T-Split", "main expression consumes linear bindings")
    return classify_main_type(mty)
