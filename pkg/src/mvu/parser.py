"""Concrete syntax: lexer, parser, and desugaring into core terms.

Programs are ML-flavoured (let / fun / case) with `html <...>` quasi-quote
blocks. Records and variants are surface sugar: fields and constructors are
laid out in lexicographic label order over right-nested pairs and binary
sums; a one-label record or variant is transparent. `let x = M in N` is
encoded as `let (x, _) = (M, ()) in N`, so the core needs no Let node.

Every binder is uniquified during desugaring (``x`` becomes ``x#17``), which
keeps the linear checker's usage sets exact under shadowing.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from . import syntax as S
from .registry import BUILTIN_TYPES, is_handler_name
from .syntax import Kind, Term, Type

# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class MvuParseError(Exception):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.msg = msg
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_PUNCT2 = ("[|", "|]", "->", "-o", "++", "/>", "</")
_PUNCT1 = "()[]{}<>,;:.=|!?~+-#"

_KEYWORDS = {
    "type", "let", "in", "fun", "linfun", "rec", "case", "if", "then",
    "else", "main", "html", "raise", "try", "as", "otherwise", "transition",
    "noTransition", "cmdSpawn", "cmdEmpty", "htmlEmpty", "htmlText",
    "htmlTag", "attr", "attrEmpty", "sub", "subEmpty", "send", "receive",
    "new", "cancel", "close", "End", "mu", "dual", "inl", "inr",
}


@dataclass
class Token:
    kind: str  # 'lident' | 'uident' | 'int' | 'string' | 'punct' | 'kw' | 'eof'
    value: str
    line: int
    col: int


class Lexer:
    def __init__(self, source: str):
        self.src = source
        self.pos = 0
        self.line = 1
        self.col = 1
        self._peeked: Token | None = None

    def error(self, msg: str) -> MvuParseError:
        return MvuParseError(msg, self.line, self.col)

    def _advance(self, n: int = 1) -> None:
        for _ in range(n):
            if self.pos < len(self.src):
                if self.src[self.pos] == "\n":
                    self.line += 1
                    self.col = 1
                else:
                    self.col += 1
                self.pos += 1

    def _skip_ws(self) -> None:
        while self.pos < len(self.src):
            ch = self.src[self.pos]
            if ch in " \t\r\n":
                self._advance()
            elif self.src.startswith("//", self.pos):
                while self.pos < len(self.src) and self.src[self.pos] != "\n":
                    self._advance()
            else:
                return

    def peek(self) -> Token:
        if self._peeked is None:
            self._peeked = self._lex()
        return self._peeked

    def next(self) -> Token:
        tok = self.peek()
        self._peeked = None
        return tok

    def _lex(self) -> Token:
        self._skip_ws()
        line, col = self.line, self.col
        if self.pos >= len(self.src):
            return Token("eof", "", line, col)
        ch = self.src[self.pos]
        if ch.isalpha() or ch == "_":
            start = self.pos
            while self.pos < len(self.src) and (self.src[self.pos].isalnum() or self.src[self.pos] in "_'"):
                self._advance()
            word = self.src[start:self.pos]
            if word in _KEYWORDS:
                return Token("kw", word, line, col)
            kind = "uident" if word[0].isupper() else "lident"
            return Token(kind, word, line, col)
        if ch.isdigit():
            start = self.pos
            while self.pos < len(self.src) and self.src[self.pos].isdigit():
                self._advance()
            return Token("int", self.src[start:self.pos], line, col)
        if ch == '"':
            return Token("string", self.read_string(), line, col)
        for p in _PUNCT2:
            if self.src.startswith(p, self.pos):
                self._advance(len(p))
                return Token("punct", p, line, col)
        if ch in _PUNCT1 or ch == "/":
            self._advance()
            return Token("punct", ch, line, col)
        raise self.error(f"unexpected character {ch!r}")

    def read_string(self) -> str:
        assert self.src[self.pos] == '"'
        self._advance()
        out = []
        while True:
            if self.pos >= len(self.src):
                raise self.error("unterminated string literal")
            ch = self.src[self.pos]
            if ch == '"':
                self._advance()
                return "".join(out)
            if ch == "\\":
                self._advance()
                if self.pos >= len(self.src):
                    raise self.error("unterminated escape")
                esc = self.src[self.pos]
                if esc == "n":
                    out.append("\n")
                elif esc in ('"', "\\"):
                    out.append(esc)
                else:
                    raise self.error(f"unknown escape \\{esc}")
                self._advance()
            else:
                out.append(ch)
                self._advance()

    # Raw-mode helpers for HTML quasi-quotes -------------------------------

    def html_skip_ws(self) -> None:
        while self.pos < len(self.src) and self.src[self.pos] in " \t\r\n":
            self._advance()

    def html_text_run(self) -> str:
        """Raw text up to the next '<' or '{'."""
        start = self.pos
        while self.pos < len(self.src) and self.src[self.pos] not in "<{":
            self._advance()
        return self.src[start:self.pos]

    def html_name(self) -> str:
        self.html_skip_ws()
        start = self.pos
        while self.pos < len(self.src) and (self.src[self.pos].isalnum() or self.src[self.pos] in "_-"):
            self._advance()
        if start == self.pos:
            raise self.error("expected a tag or attribute name")
        return self.src[start:self.pos]

    def html_char(self) -> str:
        return self.src[self.pos] if self.pos < len(self.src) else ""

    def html_eat(self, text: str) -> None:
        if not self.src.startswith(text, self.pos):
            raise self.error(f"expected {text!r}")
        self._advance(len(text))

    def drop_lookahead(self) -> None:
        """Forget a peeked token before switching to raw HTML scanning."""
        self._peeked = None


# ---------------------------------------------------------------------------
# Surface types
# ---------------------------------------------------------------------------


@dataclass
class STRef:
    name: str


@dataclass
class STBase:
    which: str  # 'unit' | 'string' | 'int'


@dataclass
class STFun:
    param: "SType"
    result: "SType"
    kind: Kind


@dataclass
class STTuple:
    items: list


@dataclass
class STRecord:
    fields: list  # [(label, SType)]


@dataclass
class STVariant:
    ctors: list  # [(label, SType | None)]


@dataclass
class STSum:
    left: "SType"
    right: "SType"


@dataclass
class STApp:
    head: str  # Html | Attr | Cmd | Sub
    arg: "SType"


@dataclass
class STTransition:
    model: "SType"
    msg: "SType"


@dataclass
class STDual:
    inner: "SType"


@dataclass
class STOut:
    payload: "SType"
    cont: "SType"


@dataclass
class STIn:
    payload: "SType"
    cont: "SType"


@dataclass
class STMu:
    var: str
    body: "SType"


@dataclass
class STSvar:
    name: str
    dual: bool


@dataclass
class STEnd:
    pass


SType = object


# ---------------------------------------------------------------------------
# Surface terms
# ---------------------------------------------------------------------------


@dataclass
class SugaredHtml:
    pass


@dataclass
class HTag(SugaredHtml):
    name: str
    attrs: list
    children: list
    line: int = 0
    col: int = 0


@dataclass
class HText(SugaredHtml):
    text: str


@dataclass
class HSplice(SugaredHtml):
    term: object


@dataclass
class SugaredAttr:
    pass


@dataclass
class AKeyValue(SugaredAttr):
    key: str
    body: object  # str literal or ESplice
    line: int = 0
    col: int = 0


@dataclass
class ASplice(SugaredAttr):
    term: object


@dataclass
class EVar:
    name: str
    line: int
    col: int


@dataclass
class ELit:
    value: object  # int | str | None for unit


@dataclass
class ELam:
    params: list  # [(pattern, SType)]
    body: object
    kind: Kind
    line: int = 0
    col: int = 0


@dataclass
class ERec:
    fname: str
    param: "Pattern"
    ptype: SType
    rtype: SType
    body: object


@dataclass
class EApp:
    fn: object
    arg: object


@dataclass
class EConst:
    const: S.Const
    session: SType | None
    line: int
    col: int


@dataclass
class ETuple:
    items: list


@dataclass
class ERecord:
    fields: list  # [(label, expr)]
    line: int = 0
    col: int = 0


@dataclass
class ELet:
    pattern: "Pattern"
    ann: SType | None
    bound: object
    body: object


@dataclass
class ECase:
    scrutinee: object
    branches: list  # [(Pattern, expr)]
    line: int = 0
    col: int = 0


@dataclass
class EIf:
    cond: object
    then: object
    other: object


@dataclass
class ETry:
    attempt: object
    name: str
    success: object
    failure: object


@dataclass
class EProj:
    record: object
    fieldname: str
    line: int = 0
    col: int = 0


@dataclass
class ECtor:
    name: str
    args: list
    line: int = 0
    col: int = 0


@dataclass
class EInj:
    left: bool
    other: SType | None
    inner: object


@dataclass
class EAppend:
    left: object
    right: object


@dataclass
class ECore:
    """Core-construct call: htmlTag/htmlText/attr/cmdSpawn/sub/transition/..."""

    head: str
    args: list


@dataclass
class EHtml:
    roots: list  # [SugaredHtml]


@dataclass
class ERaise:
    pass


@dataclass
class PVar:
    name: str


@dataclass
class PWild:
    pass


@dataclass
class PUnit:
    pass


@dataclass
class PTuple:
    items: list


@dataclass
class PCtor:
    name: str
    args: list
    line: int = 0
    col: int = 0


Pattern = object


# ---------------------------------------------------------------------------
# Parser proper
# ---------------------------------------------------------------------------


@dataclass
class Decl:
    pass


@dataclass
class TypeDecl(Decl):
    name: str
    body: SType
    line: int = 0


@dataclass
class LetDecl(Decl):
    name: str
    ann: SType
    body: object
    line: int = 0


@dataclass
class SurfaceProgram:
    decls: list
    main: object | None


class Parser:
    def __init__(self, source: str):
        self.lx = Lexer(source)

    # token helpers --------------------------------------------------------

    def peek(self) -> Token:
        return self.lx.peek()

    def next(self) -> Token:
        return self.lx.next()

    def at(self, kind: str, value: str | None = None) -> bool:
        t = self.peek()
        return t.kind == kind and (value is None or t.value == value)

    def eat(self, kind: str, value: str | None = None) -> Token:
        t = self.peek()
        if t.kind != kind or (value is not None and t.value != value):
            want = value or kind
            raise MvuParseError(f"expected {want!r}, found {t.value!r}", t.line, t.col)
        return self.next()

    def error(self, msg: str) -> MvuParseError:
        t = self.peek()
        return MvuParseError(msg, t.line, t.col)

    # program --------------------------------------------------------------

    def parse_program(self) -> SurfaceProgram:
        decls: list = []
        main = None
        while True:
            t = self.peek()
            if t.kind == "eof":
                break
            if t.kind == "kw" and t.value == "type":
                self.next()
                name = self.eat("uident").value
                self.eat("punct", "=")
                body = self.parse_type()
                self.eat("punct", ";")
                decls.append(TypeDecl(name, body, t.line))
            elif t.kind == "kw" and t.value == "let":
                self.next()
                name = self.eat("lident").value
                self.eat("punct", ":")
                ann = self.parse_type()
                self.eat("punct", "=")
                body = self.parse_control()  # decl-terminating ';' is not sequencing
                self.eat("punct", ";")
                decls.append(LetDecl(name, ann, body, t.line))
            elif t.kind == "kw" and t.value == "main":
                self.next()
                main = self.parse_expr()
                break
            else:
                raise self.error("expected a declaration or 'main'")
        trailing = self.peek()
        if trailing.kind != "eof":
            raise MvuParseError("trailing input after main expression", trailing.line, trailing.col)
        return SurfaceProgram(decls, main)

    # types ------------------------------------------------------------------

    def parse_type(self) -> SType:
        left = self.parse_type_sum()
        t = self.peek()
        if t.kind == "punct" and t.value in ("->", "-o"):
            self.next()
            right = self.parse_type()
            return STFun(left, right, Kind.U if t.value == "->" else Kind.L)
        return left

    def parse_type_sum(self) -> SType:
        left = self.parse_type_app()
        if self.at("punct", "+"):
            self.next()
            right = self.parse_type_sum()
            return STSum(left, right)
        return left

    def parse_type_app(self) -> SType:
        t = self.peek()
        if t.kind == "uident" and t.value in ("Html", "Attr", "Cmd", "Sub"):
            head = self.next().value
            self.eat("punct", "(")
            arg = self.parse_type()
            self.eat("punct", ")")
            return STApp(head, arg)
        if t.kind == "uident" and t.value == "Transition":
            self.next()
            self.eat("punct", "(")
            a = self.parse_type()
            self.eat("punct", ",")
            b = self.parse_type()
            self.eat("punct", ")")
            return STTransition(a, b)
        if t.kind == "kw" and t.value == "dual":
            self.next()
            self.eat("punct", "(")
            inner = self.parse_type()
            self.eat("punct", ")")
            return STDual(inner)
        return self.parse_type_atom()

    def parse_type_atom(self) -> SType:
        t = self.peek()
        if t.kind == "int" and t.value == "1":
            self.next()
            return STBase("unit")
        if t.kind == "uident":
            if t.value == "String":
                self.next()
                return STBase("string")
            if t.value == "Int":
                self.next()
                return STBase("int")
            return STRef(self.next().value)
        if t.kind == "kw" and t.value == "End":
            self.next()
            return STEnd()
        if t.kind == "kw" and t.value == "mu":
            self.next()
            var = self.eat("lident").value
            self.eat("punct", ".")
            return STMu(var, self.parse_type())
        if t.kind == "punct" and t.value == "!":
            self.next()
            payload = self.parse_type_app()
            self.eat("punct", ".")
            return STOut(payload, self.parse_type())
        if t.kind == "punct" and t.value == "?":
            self.next()
            payload = self.parse_type_app()
            self.eat("punct", ".")
            return STIn(payload, self.parse_type())
        if t.kind == "punct" and t.value == "~":
            self.next()
            return STSvar(self.eat("lident").value, dual=True)
        if t.kind == "lident":
            return STSvar(self.next().value, dual=False)
        if t.kind == "punct" and t.value == "[|":
            self.next()
            ctors = []
            while True:
                name = self.eat("uident").value
                payload = None
                if self.at("punct", ":"):
                    self.next()
                    payload = self.parse_type()
                ctors.append((name, payload))
                if self.at("punct", "|"):
                    self.next()
                    continue
                break
            self.eat("punct", "|]")
            return STVariant(ctors)
        if t.kind == "punct" and t.value == "(":
            self.next()
            # record type?
            first = self.peek()
            if first.kind == "lident":
                save_peeked = first
                self.next()
                if self.at("punct", ":"):
                    self.next()
                    fields = [(save_peeked.value, self.parse_type())]
                    while self.at("punct", ","):
                        self.next()
                        fname = self.eat("lident").value
                        self.eat("punct", ":")
                        fields.append((fname, self.parse_type()))
                    self.eat("punct", ")")
                    return STRecord(fields)
                # lone session variable in parens
                inner: SType = STSvar(save_peeked.value, dual=False)
            else:
                inner = self.parse_type()
            items = [inner]
            while self.at("punct", ","):
                self.next()
                items.append(self.parse_type())
            self.eat("punct", ")")
            return items[0] if len(items) == 1 else STTuple(items)
        raise self.error(f"expected a type, found {t.value!r}")

    # patterns ---------------------------------------------------------------

    def parse_pattern(self) -> Pattern:
        t = self.peek()
        if t.kind == "lident":
            name = self.next().value
            if name == "_":
                return PWild()
            return PVar(name)
        if t.kind == "uident":
            self.next()
            args: list = []
            if self.at("punct", "("):
                self.next()
                args.append(self.parse_pattern())
                while self.at("punct", ","):
                    self.next()
                    args.append(self.parse_pattern())
                self.eat("punct", ")")
            return PCtor(t.value, args, t.line, t.col)
        if t.kind == "punct" and t.value == "(":
            self.next()
            if self.at("punct", ")"):
                self.next()
                return PUnit()
            items = [self.parse_pattern()]
            while self.at("punct", ","):
                self.next()
                items.append(self.parse_pattern())
            self.eat("punct", ")")
            return items[0] if len(items) == 1 else PTuple(items)
        raise self.error("expected a pattern")

    # expressions -----------------------------------------------------------

    def parse_expr(self) -> object:
        left = self.parse_control()
        if self.at("punct", ";"):
            self.next()
            right = self.parse_expr()
            return ELet(PWild(), None, left, right)
        return left

    def parse_control(self) -> object:
        t = self.peek()
        if t.kind == "kw":
            if t.value == "let":
                self.next()
                pat = self.parse_pattern()
                ann = None
                if self.at("punct", ":"):
                    self.next()
                    ann = self.parse_type()
                self.eat("punct", "=")
                bound = self.parse_expr_nosemi()
                self.eat("kw", "in")
                body = self.parse_expr()
                return ELet(pat, ann, bound, body)
            if t.value == "case":
                self.next()
                scrut = self.parse_expr_nosemi()
                self.eat("punct", "{")
                branches = []
                while True:
                    pat = self.parse_case_pattern()
                    self.eat("punct", "->")
                    # `;` separates branches; parenthesise to sequence inside one
                    body = self.parse_control()
                    branches.append((pat, body))
                    if self.at("punct", ";"):
                        self.next()
                        if self.at("punct", "}"):
                            break
                        continue
                    break
                self.eat("punct", "}")
                return ECase(scrut, branches, t.line, t.col)
            if t.value == "if":
                self.next()
                cond = self.parse_expr_nosemi()
                self.eat("kw", "then")
                then = self.parse_control()
                self.eat("kw", "else")
                other = self.parse_control()
                return EIf(cond, then, other)
            if t.value in ("fun", "linfun"):
                self.next()
                kind = Kind.U if t.value == "fun" else Kind.L
                self.eat("punct", "(")
                params = []
                if not self.at("punct", ")"):
                    while True:
                        pat = self.parse_pattern()
                        self.eat("punct", ":")
                        params.append((pat, self.parse_type()))
                        if self.at("punct", ","):
                            self.next()
                            continue
                        break
                else:
                    params.append((PUnit(), STBase("unit")))
                self.eat("punct", ")")
                self.eat("punct", "{")
                body = self.parse_expr()
                self.eat("punct", "}")
                return ELam(params, body, kind, t.line, t.col)
            if t.value == "rec":
                self.next()
                fname = self.eat("lident").value
                self.eat("punct", "(")
                param = self.parse_pattern()
                self.eat("punct", ":")
                ptype = self.parse_type()
                self.eat("punct", ")")
                self.eat("punct", ":")
                rtype = self.parse_type()
                self.eat("punct", "{")
                body = self.parse_expr()
                self.eat("punct", "}")
                return ERec(fname, param, ptype, rtype, body)
            if t.value == "try":
                self.next()
                attempt = self.parse_expr_nosemi()
                self.eat("kw", "as")
                name = self.eat("lident").value
                self.eat("kw", "in")
                success = self.parse_control()
                self.eat("kw", "otherwise")
                failure = self.parse_control()
                return ETry(attempt, name, success, failure)
        return self.parse_append()

    def parse_expr_nosemi(self) -> object:
        # sub-expressions stop at their enclosing delimiter; `;` sequencing
        # is fine inside them because `,`, `)`, `}` and keywords terminate
        return self.parse_expr()

    _ARG_STARTER_KWS = frozenset((
        "send", "receive", "new", "cancel", "close", "htmlEmpty", "attrEmpty",
        "cmdEmpty", "subEmpty", "raise", "html", "htmlTag", "htmlText",
        "attr", "cmdSpawn", "sub", "inl", "inr",
    ))

    def _starts_arg(self) -> bool:
        t = self.peek()
        if t.kind in ("lident", "uident", "int", "string"):
            return True
        if t.kind == "punct" and t.value in ("(", "#"):
            return True
        return t.kind == "kw" and t.value in self._ARG_STARTER_KWS

    def parse_case_pattern(self) -> Pattern:
        t = self.peek()
        if t.kind == "kw" and t.value in ("inl", "inr"):
            self.next()
            name = self.eat("lident").value
            return ("raw", t.value, name)
        return self.parse_pattern()

    def parse_append(self) -> object:
        left = self.parse_juxt()
        if self.at("punct", "++"):
            self.next()
            right = self.parse_append()  # right fold
            return EAppend(left, right)
        return left

    def parse_juxt(self) -> object:
        head = self.parse_postfix()
        while self._starts_arg():
            head = EApp(head, self.parse_postfix())
        return head

    def parse_postfix(self) -> object:
        atom = self.parse_atom()
        while self.at("punct", "."):
            self.next()
            t = self.eat("lident")
            atom = EProj(atom, t.value, t.line, t.col)
        return atom

    def parse_atom(self) -> object:
        t = self.peek()
        if t.kind == "int":
            self.next()
            return ELit(int(t.value))
        if t.kind == "string":
            self.next()
            return ELit(t.value)
        if t.kind == "lident":
            self.next()
            return EVar(t.value, t.line, t.col)
        if t.kind == "uident":
            self.next()
            args: list = []
            if self.at("punct", "("):
                self.next()
                if not self.at("punct", ")"):
                    args.append(self.parse_expr_nosemi())
                    while self.at("punct", ","):
                        self.next()
                        args.append(self.parse_expr_nosemi())
                self.eat("punct", ")")
            return ECtor(t.value, args, t.line, t.col)
        if t.kind == "kw":
            kw = t.value
            if kw in ("send", "receive", "cancel", "close"):
                self.next()
                return EConst(S.Const(kw), None, t.line, t.col)
            if kw == "new":
                self.next()
                self.eat("punct", "[")
                sess = self.parse_type()
                self.eat("punct", "]")
                return EConst(S.Const.NEW, sess, t.line, t.col)
            if kw == "raise":
                self.next()
                return ERaise()
            if kw in ("htmlEmpty", "attrEmpty", "cmdEmpty", "subEmpty"):
                self.next()
                return ECore(kw, [])
            if kw in ("htmlTag", "htmlText", "attr", "cmdSpawn", "sub", "transition", "noTransition"):
                self.next()
                self.eat("punct", "(")
                args = [self.parse_expr_nosemi()]
                while self.at("punct", ","):
                    self.next()
                    args.append(self.parse_expr_nosemi())
                self.eat("punct", ")")
                return ECore(kw, args)
            if kw in ("inl", "inr"):
                self.next()
                ann = None
                if self.at("punct", "["):
                    self.next()
                    ann = self.parse_type()
                    self.eat("punct", "]")
                self.eat("punct", "(")
                inner = self.parse_expr_nosemi()
                self.eat("punct", ")")
                return EInj(kw == "inl", ann, inner)
            if kw == "html":
                self.next()
                return self.parse_html_block()
        if t.kind == "punct" and t.value == "#":
            self.next()
            name = self.eat("lident").value
            node = S.Name(name)
            return ("corename", node)
        if t.kind == "punct" and t.value == "(":
            self.next()
            if self.at("punct", ")"):
                self.next()
                return ELit(None)
            first = self.peek()
            if first.kind == "lident":
                # possible record literal: (label = expr, ...)
                name_tok = self.next()
                if self.at("punct", "="):
                    self.next()
                    fields = [(name_tok.value, self.parse_expr_nosemi())]
                    while self.at("punct", ","):
                        self.next()
                        fname = self.eat("lident").value
                        self.eat("punct", "=")
                        fields.append((fname, self.parse_expr_nosemi()))
                    self.eat("punct", ")")
                    return ERecord(fields, name_tok.line, name_tok.col)
                # not a record: re-parse from the identifier
                expr: object = EVar(name_tok.value, name_tok.line, name_tok.col)
                expr = self.continue_after_atom(expr)
            else:
                expr = self.parse_expr_nosemi()
            items = [expr]
            while self.at("punct", ","):
                self.next()
                items.append(self.parse_expr_nosemi())
            self.eat("punct", ")")
            return items[0] if len(items) == 1 else ETuple(items)
        raise self.error(f"expected an expression, found {t.value!r}")

    def continue_after_atom(self, atom: object) -> object:
        """Resume expression parsing given an already-parsed leading atom."""
        while self.at("punct", "."):
            self.next()
            t = self.eat("lident")
            atom = EProj(atom, t.value, t.line, t.col)
        head = atom
        while self._starts_arg():
            head = EApp(head, self.parse_postfix())
        if self.at("punct", "++"):
            self.next()
            head = EAppend(head, self.parse_append())
        if self.at("punct", ";"):
            self.next()
            head = ELet(PWild(), None, head, self.parse_expr())
        return head

    # HTML quasi-quotes ------------------------------------------------------

    def parse_html_block(self) -> EHtml:
        self.lx.drop_lookahead()
        self.lx.html_skip_ws()
        if self.lx.html_char() != "<":
            raise self.lx.error("expected '<' after html")
        roots = [self.parse_html_element()]
        while True:
            save = (self.lx.pos, self.lx.line, self.lx.col)
            self.lx.html_skip_ws()
            if self.lx.html_char() == "<" and not self.lx.src.startswith("</", self.lx.pos):
                roots.append(self.parse_html_element())
            else:
                self.lx.pos, self.lx.line, self.lx.col = save
                break
        return EHtml(roots)

    def parse_html_element(self) -> HTag:
        line, col = self.lx.line, self.lx.col
        self.lx.html_eat("<")
        name = self.lx.html_name()
        attrs: list = []
        while True:
            self.lx.html_skip_ws()
            ch = self.lx.html_char()
            if ch == "/":
                self.lx.html_eat("/>")
                return HTag(name, attrs, [], line, col)
            if ch == ">":
                self.lx.html_eat(">")
                break
            if ch == "{":
                self.lx.html_eat("{")
                term = self.parse_expr()
                self.eat("punct", "}")
                attrs.append(ASplice(term))
                continue
            akey_line, akey_col = self.lx.line, self.lx.col
            key = self.lx.html_name()
            self.lx.html_skip_ws()
            self.lx.html_eat("=")
            self.lx.html_skip_ws()
            if self.lx.html_char() == '"':
                value: object = self.lx.read_string()
            elif self.lx.html_char() == "{":
                self.lx.html_eat("{")
                term = self.parse_expr()
                self.eat("punct", "}")
                value = HSplice(term)
            else:
                raise self.lx.error("attribute bodies are string literals or {antiquotes}")
            attrs.append(AKeyValue(key, value, akey_line, akey_col))
        children: list = []
        while True:
            text = self.lx.html_text_run()
            if text.strip():
                children.append(HText(text.strip()))
            ch = self.lx.html_char()
            if ch == "{":
                self.lx.html_eat("{")
                term = self.parse_expr()
                self.eat("punct", "}")
                self.lx.drop_lookahead()
                children.append(HSplice(term))
                continue
            if ch == "<":
                if self.lx.src.startswith("</", self.lx.pos):
                    self.lx.html_eat("</")
                    closing = self.lx.html_name()
                    if closing != name:
                        raise self.lx.error(f"mismatched closing tag </{closing}> for <{name}>")
                    self.lx.html_skip_ws()
                    self.lx.html_eat(">")
                    return HTag(name, attrs, children, line, col)
                children.append(self.parse_html_element())
                continue
            raise self.lx.error(f"unclosed tag <{name}>")


# ---------------------------------------------------------------------------
# Desugaring
# ---------------------------------------------------------------------------


@dataclass
class RecordInfo:
    name: str
    fields: list  # [(label, Type)] lexicographically sorted


@dataclass
class VariantInfo:
    name: str
    ctors: list  # [(label, Type)] lexicographically sorted
    encoded: Type = None  # filled after expansion


@dataclass
class GlobalDef:
    name: str
    declared: Type
    term: Term


@dataclass
class Program:
    aliases: dict
    records: dict  # name -> RecordInfo
    variants: dict  # name -> VariantInfo
    ctor_variant: dict  # ctor label -> variant name
    field_records: dict  # field label -> set of record names
    globals: dict  # name -> GlobalDef (insertion ordered)
    main: Term | None
    source_path: str | None = None

    def resolved_main(self) -> Term | None:
        """Main term with one level of global references inlined."""
        if self.main is None:
            return None
        return _inline_globals(self.main, self.globals)


def _global_refs(t: Term, out: set) -> None:
    if isinstance(t, S.Global):
        out.add(t.name)
        return
    for k in t.children():
        _global_refs(k, out)


def _inline_acyclic_globals(globals_map: dict) -> None:
    """Inline definitions bottom-up through the reference DAG.

    References that take part in a cycle (mutually recursive definitions)
    stay as lazy global references; everything else is resolved once at load,
    which keeps runtime delta-expansion off the hot path.
    """
    deps: dict = {}
    for name, g in globals_map.items():
        refs: set = set()
        _global_refs(g.term, refs)
        deps[name] = refs & set(globals_map)
    resolved: set = {n for n, d in deps.items() if not d}
    changed = True
    while changed:
        changed = False
        for name, g in globals_map.items():
            if name in resolved or not deps[name]:
                continue
            ready = {r for r in deps[name] if r in resolved}
            if not ready:
                continue
            term = g.term
            for r in ready:
                term = _substitute_global(term, r, globals_map[r].term)
            deps[name] -= ready
            globals_map[name] = GlobalDef(name, g.declared, term)
            if not deps[name]:
                resolved.add(name)
            changed = True


def _substitute_global(t: Term, name: str, value: Term) -> Term:
    if isinstance(t, S.Global):
        return value if t.name == name else t
    kids = t.children()
    if not kids:
        return t
    new_kids = [_substitute_global(k, name, value) for k in kids]
    if all(a is b for a, b in zip(kids, new_kids)):
        return t
    return _rebuild(t, new_kids)


def _inline_globals(t: Term, globals_map: dict) -> Term:
    if isinstance(t, S.Global):
        g = globals_map.get(t.name)
        return g.term if g is not None else t
    kids = t.children()
    if not kids:
        return t
    new_kids = [_inline_globals(k, globals_map) for k in kids]
    if all(a is b for a, b in zip(kids, new_kids)):
        return t
    return _rebuild(t, new_kids)


def _rebuild(t: Term, kids: list) -> Term:
    cls = type(t)
    if cls is S.Lam:
        return S.Lam(t.param, t.ptype, kids[0], t.kind)
    if cls is S.Rec:
        return S.Rec(t.fname, t.param, t.ptype, t.rtype, kids[0])
    if cls is S.App:
        return S.App(*kids)
    if cls is S.ConstApp:
        return S.ConstApp(t.const, kids[0], t.session)
    if cls is S.Pair:
        return S.Pair(*kids)
    if cls is S.LetPair:
        return S.LetPair(t.xname, t.yname, kids[0], kids[1])
    if cls is S.Inl:
        return S.Inl(kids[0], t.other)
    if cls is S.Inr:
        return S.Inr(kids[0], t.other)
    if cls is S.Case:
        return S.Case(kids[0], t.lname, kids[1], t.rname, kids[2])
    if cls is S.HtmlTag:
        return S.HtmlTag(t.tag, kids[0], kids[1])
    if cls is S.HtmlText:
        return S.HtmlText(kids[0])
    if cls is S.AttrTerm:
        return S.AttrTerm(t.key, kids[0])
    if cls is S.Append:
        return S.Append(*kids)
    if cls is S.CmdSpawn:
        return S.CmdSpawn(kids[0])
    if cls is S.TransitionT:
        return S.TransitionT(*kids)
    if cls is S.NoTransition:
        return S.NoTransition(*kids)
    if cls is S.Try:
        return S.Try(kids[0], t.xname, kids[1], kids[2])
    if cls is S.SubTerm:
        return S.SubTerm(t.handler, kids[0])
    raise TypeError(cls)


class Desugarer:
    def __init__(self, surface: SurfaceProgram, path: str | None = None):
        self.surface = surface
        self.path = path
        self.aliases: dict = {}
        self.records: dict = {}
        self.variants: dict = {}
        self.ctor_variant: dict = {}
        self.field_records: dict = {}
        self.global_types: dict = {}
        self.counter = itertools.count(1)
        self._register_prelude()

    def _register_prelude(self) -> None:
        # Bool backs the if/then/else sugar and the comparison builtins.
        self.variants["Bool"] = VariantInfo("Bool", [("False", S.UNIT), ("True", S.UNIT)], S.BOOL)
        self.ctor_variant["False"] = "Bool"
        self.ctor_variant["True"] = "Bool"
        self.aliases["Bool"] = S.BOOL

    def err(self, msg: str, line: int = 0, col: int = 0) -> MvuParseError:
        return MvuParseError(msg, line, col)

    def fresh(self, base: str) -> str:
        return f"{base}#{next(self.counter)}"

    # type expansion ---------------------------------------------------------

    def expand_type(self, st: SType, stack: tuple = (), svars: frozenset = frozenset()) -> Type:
        match st:
            case STBase(which):
                return {"unit": S.UNIT, "string": S.STRING, "int": S.INT}[which]
            case STRef(name):
                if name in stack:
                    raise self.err(f"cyclic type alias {name!r} (recursion must go through mu)")
                if name in self.aliases:
                    return self.aliases[name]
                decl = self._find_type_decl(name)
                if decl is None:
                    raise self.err(f"unknown type alias {name!r}")
                expanded = self.expand_type(decl.body, stack + (name,), svars)
                if isinstance(decl.body, STRecord):
                    fields = sorted(
                        [(f, self.expand_type(ft, stack + (name,), svars)) for f, ft in decl.body.fields]
                    )
                    seen_fields = [f for f, _ in decl.body.fields]
                    if len(set(seen_fields)) != len(seen_fields):
                        raise self.err(f"duplicate field in record type {name}")
                    self.records[name] = RecordInfo(name, fields)
                    for f, _ in fields:
                        self.field_records.setdefault(f, set()).add(name)
                if isinstance(decl.body, STVariant):
                    ctors = sorted(
                        [(c, self.expand_type(ct, stack + (name,), svars) if ct is not None else S.UNIT)
                         for c, ct in decl.body.ctors]
                    )
                    labels = [c for c, _ in decl.body.ctors]
                    if len(set(labels)) != len(labels):
                        raise self.err(f"duplicate constructor in variant type {name}")
                    info = VariantInfo(name, ctors, expanded)
                    self.variants[name] = info
                    for c, _ in ctors:
                        if c in self.ctor_variant and self.ctor_variant[c] != name:
                            raise self.err(f"constructor {c!r} declared by two variant types")
                        self.ctor_variant[c] = name
                self.aliases[name] = expanded
                return expanded
            case STFun(p, r, k):
                return S.TFun(self.expand_type(p, stack, svars), self.expand_type(r, stack, svars), k)
            case STTuple(items):
                out = self.expand_type(items[-1], stack, svars)
                for item in reversed(items[:-1]):
                    out = S.TProduct(self.expand_type(item, stack, svars), out)
                return out
            case STRecord(fields):
                pairs = sorted([(f, self.expand_type(ft, stack, svars)) for f, ft in fields])
                return self._encode_product([t for _, t in pairs])
            case STVariant(ctors):
                pairs = sorted(
                    [(c, self.expand_type(ct, stack, svars) if ct is not None else S.UNIT) for c, ct in ctors]
                )
                return self._encode_sum([t for _, t in pairs])
            case STSum(left, right):
                return S.TSum(self.expand_type(left, stack, svars), self.expand_type(right, stack, svars))
            case STApp(head, arg):
                inner = self.expand_type(arg, stack, svars)
                return {"Html": S.THtml, "Attr": S.TAttr, "Cmd": S.TCmd, "Sub": S.TSub}[head](inner)
            case STTransition(a, b):
                return S.TTransition(self.expand_type(a, stack, svars), self.expand_type(b, stack, svars))
            case STDual(inner):
                t = self.expand_type(inner, stack, svars)
                if not isinstance(t, S.TSession):
                    raise self.err("dual(...) applies to session types")
                from .check import dual_session

                return S.TSession(dual_session(t.session))
            case STOut(p, c):
                payload = self.expand_type(p, stack, svars)
                cont = self._session_of(self.expand_type(c, stack, svars))
                return S.TSession(S.SOut(payload, cont))
            case STIn(p, c):
                payload = self.expand_type(p, stack, svars)
                cont = self._session_of(self.expand_type(c, stack, svars))
                return S.TSession(S.SIn(payload, cont))
            case STMu(v, b):
                body = self._session_of(self.expand_type(b, stack, svars | {v}))
                rec = S.SRec(v, body)
                if not S.is_contractive(rec):
                    raise self.err(f"non-contractive recursive session type mu {v}")
                return S.TSession(rec)
            case STSvar(name, dualised):
                if name not in svars:
                    raise self.err(f"unbound session variable {name!r}")
                return S.TSession(S.SDualVar(name) if dualised else S.SVar(name))
            case STEnd():
                return S.TSession(S.END)
        raise TypeError(st)

    def _find_type_decl(self, name: str):
        for d in self.surface.decls:
            if isinstance(d, TypeDecl) and d.name == name:
                return d
        return None

    @staticmethod
    def _session_of(t: Type) -> S.SessionType:
        if isinstance(t, S.TSession):
            return t.session
        raise MvuParseError(f"expected a session type, found {t}", 0, 0)

    @staticmethod
    def _encode_product(items: list) -> Type:
        if not items:
            return S.UNIT
        out = items[-1]
        for item in reversed(items[:-1]):
            out = S.TProduct(item, out)
        return out

    @staticmethod
    def _encode_sum(items: list) -> Type:
        if not items:
            raise MvuParseError("variant types need at least one constructor", 0, 0)
        out = items[-1]
        for item in reversed(items[:-1]):
            out = S.TSum(item, out)
        return out

    # variant encoding helpers -----------------------------------------------

    def ctor_info(self, label: str, line: int = 0, col: int = 0):
        vt = self.ctor_variant.get(label)
        if vt is None:
            raise self.err(f"unknown constructor {label!r}", line, col)
        info = self.variants[vt]
        labels = [c for c, _ in info.ctors]
        index = labels.index(label)
        return info, index

    def encode_ctor(self, label: str, payload: Term, line: int = 0, col: int = 0) -> Term:
        info, index = self.ctor_info(label, line, col)
        n = len(info.ctors)
        if n == 1:
            return payload
        comp_types = [t for _, t in info.ctors]
        # suffix sums: sums[i] encodes constructors i..n-1
        sums: list = [None] * n
        sums[n - 1] = comp_types[n - 1]
        for i in range(n - 2, -1, -1):
            sums[i] = S.TSum(comp_types[i], sums[i + 1])
        term = payload
        if index == n - 1:
            for i in range(n - 2, -1, -1):
                term = S.Inr(term, comp_types[i])
        else:
            term = S.Inl(term, sums[index + 1])
            for i in range(index - 1, -1, -1):
                term = S.Inr(term, comp_types[i])
        return term

    # pattern compilation ------------------------------------------------------

    def bind_pattern(self, pat: Pattern, scrut: Term, body_builder, scope: dict) -> Term:
        """Compile `let pat = scrut in body`, threading lexical scope."""
        match pat:
            case PVar(name):
                unique = self.fresh(name)
                scope2 = dict(scope)
                scope2[name] = unique
                body = body_builder(scope2)
                dummy = self.fresh("_")
                return S.LetPair(unique, dummy, S.Pair(scrut, S.UNIT_TERM), body)
            case PWild():
                unique = self.fresh("_")
                body = body_builder(scope)
                dummy = self.fresh("_")
                return S.LetPair(unique, dummy, S.Pair(scrut, S.UNIT_TERM), body)
            case PUnit():
                return self.bind_pattern(PWild(), scrut, body_builder, scope)
            case PTuple(items):
                if len(items) == 2:
                    return self._bind_pair(items[0], items[1], scrut, body_builder, scope)
                return self._bind_pair(items[0], PTuple(items[1:]), scrut, body_builder, scope)
            case PCtor(name, args, line, col):
                info, _ = self.ctor_info(name, line, col)
                if len(info.ctors) != 1:
                    raise self.err(
                        f"constructor pattern {name!r} outside case needs a single-constructor variant",
                        line, col,
                    )
                inner = self._ctor_args_pattern(args)
                return self.bind_pattern(inner, scrut, body_builder, scope)
        raise TypeError(pat)

    @staticmethod
    def _ctor_args_pattern(args: list) -> Pattern:
        if not args:
            return PWild()
        if len(args) == 1:
            return args[0]
        return PTuple(args)

    def _bind_pair(self, pl: Pattern, pr: Pattern, scrut: Term, body_builder, scope: dict) -> Term:
        xbase = pl.name if isinstance(pl, PVar) else "l"
        ybase = pr.name if isinstance(pr, PVar) else "r"
        x = self.fresh(xbase)
        y = self.fresh(ybase)

        def after_left(scope_l: dict) -> Term:
            def after_right(scope_r: dict) -> Term:
                return body_builder(scope_r)

            if isinstance(pr, PVar):
                scope_r = dict(scope_l)
                scope_r[pr.name] = y
                return body_builder(scope_r)
            if isinstance(pr, PWild) or isinstance(pr, PUnit):
                return body_builder(scope_l)
            return self.bind_pattern(pr, S.Var(y), after_right, scope_l)

        if isinstance(pl, PVar):
            scope_l = dict(scope)
            scope_l[pl.name] = x
            inner = after_left(scope_l)
        elif isinstance(pl, (PWild, PUnit)):
            inner = after_left(scope)
        else:
            inner = self.bind_pattern(pl, S.Var(x), after_left, scope)
        return S.LetPair(x, y, scrut, inner)

    # expression desugaring ----------------------------------------------------

    def desugar_expr(self, e: object, scope: dict) -> Term:
        t = self._desugar_raw(e, scope)
        if isinstance(t, _ConstMarker):
            raise self.err("session constants must be applied to an argument", t.line, t.col)
        return t

    def _desugar_raw(self, e: object, scope: dict):
        match e:
            case EVar(name, line, col):
                if name in scope:
                    return S.Var(scope[name])
                if name in self.global_types:
                    return S.Global(name)
                if name in BUILTIN_TYPES:
                    return S.Builtin(name)
                raise self.err(f"unbound variable {name!r}", line, col)
            case ELit(value):
                if value is None:
                    return S.UNIT_TERM
                if isinstance(value, int):
                    return S.IntLit(value)
                return S.Str(value)
            case ELam(params, body, kind, line, col):
                return self._desugar_lambda(params, body, kind, scope)
            case ERec(fname, param, ptype, rtype, body):
                funique = self.fresh(fname)
                ptype_c = self.expand_type(ptype)
                rtype_c = self.expand_type(rtype)
                xunique = self.fresh(param.name if isinstance(param, PVar) else "x")
                scope2 = dict(scope)
                scope2[fname] = funique

                def build(scope3: dict) -> Term:
                    return self.desugar_expr(body, scope3)

                if isinstance(param, PVar):
                    scope3 = dict(scope2)
                    scope3[param.name] = xunique
                    inner = build(scope3)
                else:
                    inner = self.bind_pattern(param, S.Var(xunique), build, scope2)
                return S.Rec(funique, xunique, ptype_c, rtype_c, inner)
            case EApp(fn, arg):
                fn_t = self._desugar_raw(fn, scope)
                arg_t = self.desugar_expr(arg, scope)
                if isinstance(fn_t, _ConstMarker):
                    return S.ConstApp(fn_t.const, arg_t, fn_t.session)
                return S.App(fn_t, arg_t)
            case EConst(const, session, line, col):
                sess = None
                if session is not None:
                    sess_t = self.expand_type(session)
                    sess = self._session_of(sess_t)
                return _ConstMarker(const, sess, line, col)
            case ETuple(items):
                out = self.desugar_expr(items[-1], scope)
                for item in reversed(items[:-1]):
                    out = S.Pair(self.desugar_expr(item, scope), out)
                return out
            case ERecord(fields, line, col):
                labels = [f for f, _ in fields]
                if len(set(labels)) != len(labels):
                    raise self.err("duplicate record field", line, col)
                ordered = sorted(fields)
                items = [self.desugar_expr(body, scope) for _, body in ordered]
                out = items[-1]
                for item in reversed(items[:-1]):
                    out = S.Pair(item, out)
                return out
            case ELet(pattern, ann, bound, body):
                bound_t = self.desugar_expr(bound, scope)

                def build(scope2: dict) -> Term:
                    return self.desugar_expr(body, scope2)

                return self.bind_pattern(pattern, bound_t, build, scope)
            case ECase(scrutinee, branches, line, col):
                scrut_t = self.desugar_expr(scrutinee, scope)
                return self._desugar_case(scrut_t, branches, scope, line, col)
            case EIf(cond, then, other):
                cond_t = self.desugar_expr(cond, scope)
                lname = self.fresh("_")
                rname = self.fresh("_")
                return S.Case(cond_t, lname, self.desugar_expr(other, scope),
                              rname, self.desugar_expr(then, scope))
            case ETry(attempt, name, success, failure):
                attempt_t = self.desugar_expr(attempt, scope)
                unique = self.fresh(name)
                scope2 = dict(scope)
                scope2[name] = unique
                return S.Try(attempt_t, unique, self.desugar_expr(success, scope2),
                             self.desugar_expr(failure, scope))
            case EProj(record, fieldname, line, col):
                return self._desugar_proj(record, fieldname, scope, line, col)
            case ECtor(name, args, line, col):
                info, _ = self.ctor_info(name, line, col)
                if not args:
                    payload: Term = S.UNIT_TERM
                elif len(args) == 1:
                    payload = self.desugar_expr(args[0], scope)
                else:
                    payload = self.desugar_expr(ETuple(args), scope)
                return self.encode_ctor(name, payload, line, col)
            case EInj(left, other, inner):
                ann = self.expand_type(other) if other is not None else None
                inner_t = self.desugar_expr(inner, scope)
                return S.Inl(inner_t, ann) if left else S.Inr(inner_t, ann)
            case EAppend(left, right):
                return S.Append(self.desugar_expr(left, scope), self.desugar_expr(right, scope))
            case ECore(head, args):
                return self._desugar_core(head, args, scope)
            case EHtml(roots):
                sugared = [self._sugared_html(h, scope) for h in roots]
                return desugar_html_seq(sugared)
            case ERaise():
                return S.RAISE
            case ("corename", node):
                return node
        raise TypeError(e)

    def _desugar_lambda(self, params: list, body: object, kind: Kind, scope: dict) -> Term:
        # several params = one argument destructured as a right-nested tuple
        types = [self.expand_type(st) for _, st in params]
        arg_type = self._encode_product(types) if len(types) > 1 else types[0]
        pats = [p for p, _ in params]
        pattern = pats[0] if len(pats) == 1 else PTuple(pats)
        if isinstance(pattern, PVar):
            unique = self.fresh(pattern.name)
            scope2 = dict(scope)
            scope2[pattern.name] = unique
            return S.Lam(unique, arg_type, self.desugar_expr(body, scope2), kind)
        unique = self.fresh("arg")

        def build(scope2: dict) -> Term:
            return self.desugar_expr(body, scope2)

        inner = self.bind_pattern(pattern, S.Var(unique), build, scope)
        return S.Lam(unique, arg_type, inner, kind)

    def _desugar_proj(self, record: object, fieldname: str, scope: dict, line: int, col: int) -> Term:
        owners = self.field_records.get(fieldname, set())
        if not owners:
            raise self.err(f"unknown record field {fieldname!r}", line, col)
        if len(owners) > 1:
            raise self.err(f"ambiguous record field {fieldname!r} ({sorted(owners)})", line, col)
        info = self.records[next(iter(owners))]
        labels = [f for f, _ in info.fields]
        index = labels.index(fieldname)
        n = len(labels)
        term = self.desugar_expr(record, scope)
        # walk the right-nested spine; all components must be unrestricted
        for _ in range(index):
            x = self.fresh("_")
            rest = self.fresh("r")
            term = S.LetPair(x, rest, term, S.Var(rest))
        if index < n - 1:
            x = self.fresh(fieldname)
            rest = self.fresh("_")
            term = S.LetPair(x, rest, term, S.Var(x))
        return term

    def _desugar_case(self, scrut: Term, branches: list, scope: dict, line: int, col: int) -> Term:
        if not branches:
            raise self.err("empty case", line, col)
        first = branches[0][0]
        if isinstance(first, tuple) and first[0] == "raw":
            # raw binary case: inl x -> ..; inr y -> ..
            if len(branches) != 2:
                raise self.err("raw case needs exactly inl and inr branches", line, col)
            by_side = {}
            for pat, body in branches:
                if not (isinstance(pat, tuple) and pat[0] == "raw"):
                    raise self.err("cannot mix raw inl/inr and constructor branches", line, col)
                by_side[pat[1]] = (pat[2], body)
            if set(by_side) != {"inl", "inr"}:
                raise self.err("raw case needs one inl and one inr branch", line, col)
            (ln, lbody), (rn, rbody) = by_side["inl"], by_side["inr"]
            lu, ru = self.fresh(ln), self.fresh(rn)
            lscope, rscope = dict(scope), dict(scope)
            lscope[ln] = lu
            rscope[rn] = ru
            return S.Case(scrut, lu, self.desugar_expr(lbody, lscope),
                          ru, self.desugar_expr(rbody, rscope))
        if not isinstance(first, PCtor):
            raise self.err("case branches must be constructor patterns or inl/inr", line, col)
        info, _ = self.ctor_info(first.name, first.line, first.col)
        wanted = [c for c, _ in info.ctors]
        seen: dict = {}
        for pat, body in branches:
            if not isinstance(pat, PCtor):
                raise self.err("cannot mix constructor and other patterns", line, col)
            if self.ctor_variant.get(pat.name) != info.name:
                raise self.err(f"constructor {pat.name!r} is not part of variant {info.name}", pat.line, pat.col)
            if pat.name in seen:
                raise self.err(f"duplicate case branch {pat.name!r}", pat.line, pat.col)
            seen[pat.name] = (pat, body)
        missing = [c for c in wanted if c not in seen]
        if missing:
            raise self.err(f"non-exhaustive case: missing {missing}", line, col)

        def compile_branches(value: Term, labels: list) -> Term:
            label = labels[0]
            pat, body = seen[label]
            inner_pat = self._ctor_args_pattern(pat.args)

            def build(scope2: dict) -> Term:
                return self.desugar_expr(body, scope2)

            if len(labels) == 1:
                return self.bind_pattern(inner_pat, value, build, scope)
            lx = self.fresh("v")
            rx = self.fresh("w")
            left = self.bind_pattern(inner_pat, S.Var(lx), build, scope)
            right = compile_branches(S.Var(rx), labels[1:])
            return S.Case(value, lx, left, rx, right)

        return compile_branches(scrut, wanted)

    def _desugar_core(self, head: str, args: list, scope: dict) -> Term:
        def arg(i: int) -> Term:
            return self.desugar_expr(args[i], scope)

        def want(n: int) -> None:
            if len(args) != n:
                raise self.err(f"{head} expects {n} argument(s)")

        if head == "htmlEmpty":
            return S.HTML_EMPTY
        if head == "attrEmpty":
            return S.ATTR_EMPTY
        if head == "cmdEmpty":
            return S.CMD_EMPTY
        if head == "subEmpty":
            return S.SUB_EMPTY
        if head == "htmlText":
            want(1)
            return S.HtmlText(arg(0))
        if head == "htmlTag":
            want(3)
            tag = args[0]
            if not (isinstance(tag, ELit) and isinstance(tag.value, str)):
                raise self.err("htmlTag's first argument is a tag-name string literal")
            return S.HtmlTag(tag.value, arg(1), arg(2))
        if head == "attr":
            want(2)
            key = args[0]
            if not (isinstance(key, ELit) and isinstance(key.value, str)):
                raise self.err("attr's first argument is a key string literal")
            return S.AttrTerm(key.value, arg(1))
        if head == "cmdSpawn":
            want(1)
            return S.CmdSpawn(arg(0))
        if head == "sub":
            want(2)
            key = args[0]
            if not (isinstance(key, ELit) and isinstance(key.value, str)):
                raise self.err("sub's first argument is a handler-name string literal")
            if not is_handler_name(key.value):
                raise self.err(f"unknown handler name {key.value!r}")
            return S.SubTerm(key.value, arg(1))
        if head == "transition":
            want(5)
            return S.TransitionT(arg(0), arg(1), arg(2), arg(3), arg(4))
        if head == "noTransition":
            want(2)
            return S.NoTransition(arg(0), arg(1))
        raise self.err(f"unknown core construct {head}")

    # sugared HTML --------------------------------------------------------------

    def _sugared_html(self, h: object, scope: dict):
        match h:
            case HTag(name, attrs, children, line, col):
                out_attrs = []
                for a in attrs:
                    match a:
                        case AKeyValue(key, body, aline, acol):
                            if is_handler_name(key):
                                if not isinstance(body, HSplice):
                                    raise self.err(
                                        f"handler attribute {key!r} needs an antiquoted handler function",
                                        aline, acol,
                                    )
                                out_attrs.append(DAttrKV(key, self.desugar_expr(body.term, scope), True))
                            elif isinstance(body, HSplice):
                                out_attrs.append(DAttrKV(key, self.desugar_expr(body.term, scope), True))
                            else:
                                out_attrs.append(DAttrKV(key, body, False))
                        case ASplice(term):
                            out_attrs.append(DAttrSplice(self.desugar_expr(term, scope)))
                return DTag(name, out_attrs, [self._sugared_html(c, scope) for c in children])
            case HText(text):
                return DText(text)
            case HSplice(term):
                return DSplice(self.desugar_expr(term, scope))
        raise TypeError(h)


@dataclass
class _ConstMarker:
    const: S.Const
    session: S.SessionType | None
    line: int
    col: int


# Desugared (scope-resolved) HTML trees: inputs to the Appendix-style fold.


@dataclass
class DTag:
    name: str
    attrs: list
    children: list


@dataclass
class DText:
    text: str


@dataclass
class DSplice:
    term: Term


@dataclass
class DAttrKV:
    key: str
    body: object  # Term if spliced, str literal otherwise
    spliced: bool


@dataclass
class DAttrSplice:
    term: Term


def desugar_html(h) -> Term:
    """One sugared HTML node into a core term."""
    match h:
        case DTag(name, attrs, children):
            return S.HtmlTag(name, desugar_attr_seq(attrs), desugar_html_seq(children))
        case DText(text):
            return S.HtmlText(S.Str(text))
        case DSplice(term):
            return term
    raise TypeError(h)


def desugar_html_seq(items: list) -> Term:
    if not items:
        return S.HTML_EMPTY
    out = desugar_html(items[-1])
    for item in reversed(items[:-1]):
        out = S.Append(desugar_html(item), out)
    return out


def desugar_attr(a) -> Term:
    match a:
        case DAttrKV(key, body, spliced):
            return S.AttrTerm(key, body if spliced else S.Str(body))
        case DAttrSplice(term):
            return term
    raise TypeError(a)


def desugar_attr_seq(items: list) -> Term:
    if not items:
        return S.ATTR_EMPTY
    out = desugar_attr(items[-1])
    for item in reversed(items[:-1]):
        out = S.Append(desugar_attr(item), out)
    return out


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def parse_program(source: str, path: str | None = None) -> Program:
    surface = Parser(source).parse_program()
    ds = Desugarer(surface, path)
    # expand type aliases first (registers records/variants/constructors)
    for d in surface.decls:
        if isinstance(d, TypeDecl):
            ds.expand_type(STRef(d.name))
    # validate alias bodies: closed and contractive
    for name, t in ds.aliases.items():
        if S.type_session_free_vars(t):
            raise MvuParseError(f"type alias {name} has unbound session variables", 0, 0)
        if not S.type_is_contractive(t):
            raise MvuParseError(f"type alias {name} is not contractive", 0, 0)
    # declare global types, then desugar bodies (lets mutual references check)
    lets = [d for d in surface.decls if isinstance(d, LetDecl)]
    for d in lets:
        if d.name in ds.global_types:
            raise MvuParseError(f"duplicate top-level definition {d.name!r}", d.line, 0)
        ds.global_types[d.name] = ds.expand_type(d.ann)
    globals_map: dict = {}
    for d in lets:
        term = ds.desugar_expr(d.body, {})
        if not S.is_value(term):
            raise MvuParseError(
                f"top-level definition {d.name!r} must be a value", d.line, 0)
        globals_map[d.name] = GlobalDef(d.name, ds.global_types[d.name], term)
    _inline_acyclic_globals(globals_map)
    main = ds.desugar_expr(surface.main, {}) if surface.main is not None else None
    return Program(
        aliases=ds.aliases,
        records=ds.records,
        variants=ds.variants,
        ctor_variant=ds.ctor_variant,
        field_records=ds.field_records,
        globals=globals_map,
        main=main,
        source_path=path,
    )


def parse_term(source: str, globals_from: Program | None = None) -> Term:
    """Parse a standalone core/surface expression (tests, round-trips).

    `globals_from` supplies top-level names so printed references resolve.
    """
    surface = Parser(source).parse_program() if source.lstrip().startswith("main") \
        else Parser(f"main {source}").parse_program()
    ds = Desugarer(surface)
    if globals_from is not None:
        for name, g in globals_from.globals.items():
            ds.global_types[name] = g.declared
    return ds.desugar_expr(surface.main, {})


def parse_type(source: str) -> Type:
    parser = Parser(source)
    st = parser.parse_type()
    ds = Desugarer(SurfaceProgram([], None))
    return ds.expand_type(st)


def parse_session(source: str) -> S.SessionType:
    t = parse_type(source)
    if not isinstance(t, S.TSession):
        raise MvuParseError("expected a session type", 0, 0)
    return t.session
