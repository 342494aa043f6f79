"""Event signature registry and primitive functions.

The registry maps event names to handler names bijectively, with an
unrestricted payload type per event. DOM events are dispatched to page nodes;
environment events are dispatched through the subscription value.
"""

from __future__ import annotations

from dataclasses import dataclass

from .syntax import (
    BOOL,
    FALSE,
    INT,
    STRING,
    TRUE,
    TFun,
    TProduct,
    TUnit,
    Type,
    IntLit,
    Kind,
    Pair,
    Str,
    Term,
    UNIT,
)


@dataclass(frozen=True)
class EventSignature:
    event: str
    handler: str
    payload: Type
    env: bool = False  # environment event (subscriptions) vs DOM event


EVENT_SIGNATURES: tuple[EventSignature, ...] = (
    EventSignature("click", "onClick", UNIT),
    EventSignature("input", "onInput", STRING),
    EventSignature("keyUp", "onKeyUp", INT),
    EventSignature("keyDown", "onKeyDown", INT),
    EventSignature("mouseMove", "onMouseMove", TProduct(INT, INT), env=True),
)

BY_EVENT = {sig.event: sig for sig in EVENT_SIGNATURES}
BY_HANDLER = {sig.handler: sig for sig in EVENT_SIGNATURES}

assert len(BY_EVENT) == len(EVENT_SIGNATURES) == len(BY_HANDLER), "event/handler mapping must be bijective"


def handler_for(event: str) -> str:
    return BY_EVENT[event].handler


def payload_type(name: str) -> Type:
    sig = BY_EVENT.get(name) or BY_HANDLER.get(name)
    if sig is None:
        raise KeyError(name)
    return sig.payload


def is_handler_name(key: str) -> bool:
    return key in BY_HANDLER


# ---------------------------------------------------------------------------
# Builtins: primitive unrestricted functions assumed by the examples
# (string reversal, integer arithmetic and comparison, int formatting).
# ---------------------------------------------------------------------------

_INT_PAIR = TProduct(INT, INT)

BUILTIN_TYPES: dict[str, TFun] = {
    "intAdd": TFun(_INT_PAIR, INT, Kind.U),
    "intSub": TFun(_INT_PAIR, INT, Kind.U),
    "intMul": TFun(_INT_PAIR, INT, Kind.U),
    "intLt": TFun(_INT_PAIR, BOOL, Kind.U),
    "intEq": TFun(_INT_PAIR, BOOL, Kind.U),
    "intToString": TFun(INT, STRING, Kind.U),
    "reverseString": TFun(STRING, STRING, Kind.U),
    "stringAppend": TFun(TProduct(STRING, STRING), STRING, Kind.U),
    "stringEq": TFun(TProduct(STRING, STRING), BOOL, Kind.U),
}


def _ints(arg: Term) -> tuple[int, int]:
    assert isinstance(arg, Pair) and isinstance(arg.left, IntLit) and isinstance(arg.right, IntLit)
    return arg.left.value, arg.right.value


def _strs(arg: Term) -> tuple[str, str]:
    assert isinstance(arg, Pair) and isinstance(arg.left, Str) and isinstance(arg.right, Str)
    return arg.left.value, arg.right.value


def _bool(b: bool) -> Term:
    return TRUE if b else FALSE


def apply_builtin(name: str, arg: Term) -> Term:
    if name == "intAdd":
        a, b = _ints(arg)
        return IntLit(a + b)
    if name == "intSub":
        a, b = _ints(arg)
        return IntLit(a - b)
    if name == "intMul":
        a, b = _ints(arg)
        return IntLit(a * b)
    if name == "intLt":
        a, b = _ints(arg)
        return _bool(a < b)
    if name == "intEq":
        a, b = _ints(arg)
        return _bool(a == b)
    if name == "intToString":
        assert isinstance(arg, IntLit)
        return Str(str(arg.value))
    if name == "reverseString":
        assert isinstance(arg, Str)
        return Str(arg.value[::-1])
    if name == "stringAppend":
        a, b = _strs(arg)
        return Str(a + b)
    if name == "stringEq":
        a, b = _strs(arg)
        return _bool(a == b)
    raise KeyError(f"unknown builtin {name}")
