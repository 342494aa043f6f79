"""Deterministic printer for types, session types, and core terms.

Output follows the concrete core-term grammar accepted by the parser (see
docs/surface_syntax.md), so printing a closed, name-free term and re-parsing
it yields an alpha-equivalent term. Internal uniquified binder names (x#12)
are re-rendered as plain identifiers.
"""

from __future__ import annotations

from . import syntax as S


def pretty_type(t: S.Type) -> str:
    match t:
        case S.TUnit():
            return "1"
        case S.TString():
            return "String"
        case S.TInt():
            return "Int"
        case S.TBottom():
            return "Bot"
        case S.TFun(p, r, k):
            arrow = "->" if k is S.Kind.U else "-o"
            return f"({pretty_type(p)} {arrow} {pretty_type(r)})"
        case S.TProduct(a, b):
            return f"({pretty_type(a)}, {pretty_type(b)})"
        case S.TSum(a, b):
            return f"({pretty_type(a)} + {pretty_type(b)})"
        case S.THtml(a):
            return f"Html({pretty_type(a)})"
        case S.TAttr(a):
            return f"Attr({pretty_type(a)})"
        case S.TCmd(a):
            return f"Cmd({pretty_type(a)})"
        case S.TTransition(a, b):
            return f"Transition({pretty_type(a)}, {pretty_type(b)})"
        case S.TSub(a):
            return f"Sub({pretty_type(a)})"
        case S.TSession(s):
            return pretty_session(s)
    raise TypeError(t)


def pretty_session(s: S.SessionType) -> str:
    match s:
        case S.SOut(p, c):
            return f"!{pretty_type(p)}.{pretty_session(c)}"
        case S.SIn(p, c):
            return f"?{pretty_type(p)}.{pretty_session(c)}"
        case S.SRec(v, b):
            return f"(mu {v}. {pretty_session(b)})"
        case S.SVar(n):
            return n
        case S.SDualVar(n):
            return f"~{n}"
        case S.SEnd():
            return "End"
    raise TypeError(s)


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")


class _Printer:
    def __init__(self) -> None:
        self.display: dict[str, str] = {}
        self.used: set[str] = set()

    def bind(self, name: str) -> str:
        base = name.split("#")[0] or "x"
        candidate = base
        i = 1
        while candidate in self.used:
            i += 1
            candidate = f"{base}_{i}"
        self.used.add(candidate)
        self.display[name] = candidate
        return candidate

    def scoped(self, names: tuple, body: S.Term) -> tuple:
        """Bind display names for `names`, print `body`, restore the scope.
        Returns (display names, printed body)."""
        saved = [(n, self.display.get(n)) for n in names]
        shown = tuple(self.bind(n) for n in names)
        out = self.term(body)
        for n, old in saved:
            if old is None:
                self.display.pop(n, None)
            else:
                self.display[n] = old
        return shown, out

    def var(self, name: str) -> str:
        return self.display.get(name, name.split("#")[0] or name)

    def wrapped(self, t: S.Term) -> str:
        out = self.term(t)
        if type(t) in _CONTROL_FORMS:
            return f"({out})"
        return out

    def term(self, t: S.Term) -> str:
        p = self.term
        match t:
            case S.Var(name=n):
                return self.var(n)
            case S.Global(name=n):
                return n
            case S.Builtin(name=n):
                return n
            case S.Name(name=n):
                return f"#{n}"
            case S.Unit():
                return "()"
            case S.Str(value=v):
                return f'"{_escape(v)}"'
            case S.IntLit(value=v):
                return str(v)
            case S.Lam():
                kw = "fun" if t.kind is S.Kind.U else "linfun"
                (x,), body = self.scoped((t.param,), t.body)
                ann = f": {pretty_type(t.ptype)}" if t.ptype is not None else ""
                return f"{kw}({x}{ann}) {{ {body} }}"
            case S.Rec():
                (f, x), body = self.scoped((t.fname, t.param), t.body)
                ann = f": {pretty_type(t.ptype)}" if t.ptype is not None else ""
                ret = f" : {pretty_type(t.rtype)}" if t.rtype is not None else ""
                return f"rec {f}({x}{ann}){ret} {{ {body} }}"
            case S.App(fn=f, arg=a):
                return f"({self.wrapped(f)} {self.wrapped(a)})"
            case S.ConstApp(const=k, arg=a, session=sess):
                if sess is not None:
                    return f"({k.value}[{pretty_session(sess)}] {self.wrapped(a)})"
                return f"({k.value} {self.wrapped(a)})"
            case S.Pair(left=a, right=b):
                return f"({p(a)}, {p(b)})"
            case S.LetPair():
                pair = p(t.pair)
                (x, y), body = self.scoped((t.xname, t.yname), t.body)
                return f"let ({x}, {y}) = {pair} in {body}"
            case S.Inl(inner=i, other=o):
                ann = f"[{pretty_type(o)}]" if o is not None else ""
                return f"inl{ann}({p(i)})"
            case S.Inr(inner=i, other=o):
                ann = f"[{pretty_type(o)}]" if o is not None else ""
                return f"inr{ann}({p(i)})"
            case S.Case():
                scrut = p(t.scrutinee)
                (x,), left = self.scoped((t.lname,), t.left)
                (y,), right = self.scoped((t.rname,), t.right)
                # branch bodies are parenthesised so `;` stays a separator
                return f"case {scrut} {{ inl {x} -> ({left}); inr {y} -> ({right}) }}"
            case S.HtmlTag(tag=tag, attrs=a, kids=k):
                return f'htmlTag("{tag}", {p(a)}, {p(k)})'
            case S.HtmlText(text=x):
                return f"htmlText({p(x)})"
            case S.HtmlEmpty():
                return "htmlEmpty"
            case S.AttrTerm(key=key, body=b):
                return f'attr("{key}", {p(b)})'
            case S.AttrEmpty():
                return "attrEmpty"
            case S.Append(left=a, right=b):
                return f"({self.wrapped(a)} ++ {self.wrapped(b)})"
            case S.CmdSpawn(body=b):
                return f"cmdSpawn({p(b)})"
            case S.CmdEmpty():
                return "cmdEmpty"
            case S.TransitionT():
                parts = ", ".join(p(c) for c in t.children())
                return f"transition({parts})"
            case S.NoTransition(model=m, cmd=c):
                return f"noTransition({p(m)}, {p(c)})"
            case S.Raise():
                return "raise"
            case S.Try():
                attempt = p(t.attempt)
                (x,), success = self.scoped((t.xname,), t.success)
                return f"try {attempt} as {x} in ({success}) otherwise ({p(t.failure)})"
            case S.SubTerm(handler=h, body=b):
                return f'sub("{h}", {p(b)})'
            case S.SubEmpty():
                return "subEmpty"
        raise TypeError(t)


_CONTROL_FORMS = (S.Lam, S.Rec, S.LetPair, S.Case, S.Try)


def pretty_term(t: S.Term) -> str:
    return _Printer().term(t)
