"""Operational semantics: term steps, processes, and configuration reduction.

The process soup is kept in canonical form: all name restrictions are
scope-extruded into a flat channel table, zapper threads are a name list, and
the ordered `procs` tuple holds the main thread plus auxiliaries in creation
order. One `step` applies exactly one reduction, chosen by a fixed priority:

    E-Run;  E-Update/E-Transition;  E-Evt (leftmost node, oldest event);
    E-EvtS;  E-Handle (oldest same-version value thread);
    E-Discard/E-DiscardHalt;  E-Extract/E-ExtractT/E-Render/E-RenderT;
    exception rules;  session rules (E-New, E-Comm, E-Close, E-Cancel,
    E-SendZap, E-RecvZap, E-CloseZap, oldest pair first);
    E-LiftT round-robin over threads.

Garbage-collection equivalences (a fully-cancelled channel, a finished
server thread) are applied eagerly after every step.
"""

from __future__ import annotations

from . import syntax as S
from .page import (
    Event,
    NodeIdSupply,
    PAGE_EMPTY,
    Page,
    PageTag,
    build_page,
    diff,
    erase,
    find_node,
    handlers,
    page_nodes,
    procs as command_procs,
)
from .registry import BY_EVENT, apply_builtin
from .syntax import Term, free_names, is_value, substitute


class MvuRuntimeError(Exception):
    pass


# ---------------------------------------------------------------------------
# Term decomposition into evaluation contexts
# ---------------------------------------------------------------------------
# A frame is a tuple whose first element names the grammar production.

def plug_frame(frame: tuple, t: Term) -> Term:
    tag = frame[0]
    if tag == "app_fn":
        return S.App(t, frame[1])
    if tag == "app_arg":
        return S.App(frame[1], t)
    if tag == "constapp":
        return S.ConstApp(frame[1], t, frame[2])
    if tag == "pair_l":
        return S.Pair(t, frame[1])
    if tag == "pair_r":
        return S.Pair(frame[1], t)
    if tag == "letpair":
        return S.LetPair(frame[1], frame[2], t, frame[3])
    if tag == "inl":
        return S.Inl(t, frame[1])
    if tag == "inr":
        return S.Inr(t, frame[1])
    if tag == "case":
        return S.Case(t, frame[1], frame[2], frame[3], frame[4])
    if tag == "tag_attrs":
        return S.HtmlTag(frame[1], t, frame[2])
    if tag == "tag_kids":
        return S.HtmlTag(frame[1], frame[2], t)
    if tag == "text":
        return S.HtmlText(t)
    if tag == "attr":
        return S.AttrTerm(frame[1], t)
    if tag == "append_l":
        return S.Append(t, frame[1])
    if tag == "append_r":
        return S.Append(frame[1], t)
    if tag == "ntrans_m":
        return S.NoTransition(t, frame[1])
    if tag == "ntrans_c":
        return S.NoTransition(frame[1], t)
    if tag == "trans":
        parts = list(frame[1]) + [t] + list(frame[2])
        return S.TransitionT(*parts)
    if tag == "try":
        return S.Try(t, frame[1], frame[2], frame[3])
    if tag == "sub":
        return S.SubTerm(frame[1], t)
    raise TypeError(tag)


def plug(frames: list, t: Term) -> Term:
    for frame in reversed(frames):
        t = plug_frame(frame, t)
    return t


def frame_terms(frame: tuple):
    """Terms stored inside a frame (for free-name collection)."""
    tag = frame[0]
    if tag in ("app_fn", "app_arg", "pair_l", "pair_r", "ntrans_m", "ntrans_c"):
        return (frame[1],)
    if tag == "letpair":
        return (frame[3],)
    if tag == "case":
        return (frame[2], frame[4])
    if tag == "tag_attrs":
        return (frame[2],)
    if tag == "tag_kids":
        return (frame[2],)
    if tag == "attr" or tag == "text" or tag == "sub" or tag == "inl" or tag == "inr" or tag == "constapp":
        return ()
    if tag == "append_l" or tag == "append_r":
        return (frame[1],)
    if tag == "trans":
        return tuple(frame[1]) + tuple(frame[2])
    if tag == "try":
        return (frame[2], frame[3])
    raise TypeError(tag)


def frames_names(frames) -> list:
    out: list = []
    seen: set = set()
    for frame in frames:
        for t in frame_terms(frame):
            for n in free_names(t):
                if n not in seen:
                    seen.add(n)
                    out.append(n)
    return out


def decompose(t: Term):
    """(frames, focus) under call-by-value, left-to-right evaluation.

    focus is one of
      ("value",)
      ("redex", term)                  beta / delta / builtin / try-success
      ("action", kind, data)           kind in new/send/receive/close/cancel
      ("raise",)
    """
    cached = t._dec
    if cached is not None:
        return cached
    frames: list = []
    cur = t
    while True:
        if is_value(cur):
            focus = ("value",) if not frames else None
            if focus is None:
                raise MvuRuntimeError("decompose descended into a value")
            result = (frames, focus)
            break
        cls = type(cur)
        if cls is S.App:
            if not is_value(cur.fn):
                frames.append(("app_fn", cur.arg))
                cur = cur.fn
                continue
            if not is_value(cur.arg):
                frames.append(("app_arg", cur.fn))
                cur = cur.arg
                continue
            result = (frames, ("redex", cur))
            break
        if cls is S.Global:
            result = (frames, ("redex", cur))
            break
        if cls is S.ConstApp:
            if not is_value(cur.arg):
                frames.append(("constapp", cur.const, cur.session))
                cur = cur.arg
                continue
            result = (frames, ("action", cur.const.value, cur))
            break
        if cls is S.Raise:
            result = (frames, ("raise",))
            break
        if cls is S.Pair:
            if not is_value(cur.left):
                frames.append(("pair_l", cur.right))
                cur = cur.left
            else:
                frames.append(("pair_r", cur.left))
                cur = cur.right
            continue
        if cls is S.LetPair:
            if not is_value(cur.pair):
                frames.append(("letpair", cur.xname, cur.yname, cur.body))
                cur = cur.pair
                continue
            result = (frames, ("redex", cur))
            break
        if cls is S.Inl:
            frames.append(("inl", cur.other))
            cur = cur.inner
            continue
        if cls is S.Inr:
            frames.append(("inr", cur.other))
            cur = cur.inner
            continue
        if cls is S.Case:
            if not is_value(cur.scrutinee):
                frames.append(("case", cur.lname, cur.left, cur.rname, cur.right))
                cur = cur.scrutinee
                continue
            result = (frames, ("redex", cur))
            break
        if cls is S.HtmlTag:
            if not is_value(cur.attrs):
                frames.append(("tag_attrs", cur.tag, cur.kids))
                cur = cur.attrs
            else:
                frames.append(("tag_kids", cur.tag, cur.attrs))
                cur = cur.kids
            continue
        if cls is S.HtmlText:
            frames.append(("text",))
            cur = cur.text
            continue
        if cls is S.AttrTerm:
            frames.append(("attr", cur.key))
            cur = cur.body
            continue
        if cls is S.Append:
            if not is_value(cur.left):
                frames.append(("append_l", cur.right))
                cur = cur.left
            else:
                frames.append(("append_r", cur.left))
                cur = cur.right
            continue
        if cls is S.NoTransition:
            if not is_value(cur.model):
                frames.append(("ntrans_m", cur.cmd))
                cur = cur.model
            else:
                frames.append(("ntrans_c", cur.model))
                cur = cur.cmd
            continue
        if cls is S.TransitionT:
            parts = cur.children()
            for i, part in enumerate(parts):
                if not is_value(part):
                    frames.append(("trans", tuple(parts[:i]), tuple(parts[i + 1:])))
                    cur = part
                    break
            continue
        if cls is S.Try:
            if not is_value(cur.attempt):
                frames.append(("try", cur.xname, cur.success, cur.failure))
                cur = cur.attempt
                continue
            result = (frames, ("redex", cur))
            break
        if cls is S.SubTerm:
            frames.append(("sub", cur.handler))
            cur = cur.body
            continue
        if cls is S.Var:
            raise MvuRuntimeError(f"free variable {cur.name!r} at runtime")
        raise MvuRuntimeError(f"cannot evaluate {type(cur).__name__}")
    t._dec = result
    return result


def contract(redex: Term, globals_map: dict):
    """One beta/delta contraction. Returns (term, rule-detail)."""
    cls = type(redex)
    if cls is S.App:
        fn, arg = redex.fn, redex.arg
        fcls = type(fn)
        if fcls is S.Lam:
            return substitute(fn.body, fn.param, arg), "E-Lam"
        if fcls is S.Rec:
            return substitute(substitute(fn.body, fn.fname, fn), fn.param, arg), "E-Rec"
        if fcls is S.Builtin:
            return apply_builtin(fn.name, arg), "E-Builtin"
        raise MvuRuntimeError(f"application of non-function value {fn!r}")
    if cls is S.Global:
        g = globals_map.get(redex.name)
        if g is None:
            raise MvuRuntimeError(f"unknown global {redex.name!r}")
        return g.term, "E-Delta"
    if cls is S.LetPair:
        pair = redex.pair
        if type(pair) is not S.Pair:
            raise MvuRuntimeError(f"let-pair on non-pair value {pair!r}")
        body = substitute(redex.body, redex.xname, pair.left)
        return substitute(body, redex.yname, pair.right), "E-Pair"
    if cls is S.Case:
        scrut = redex.scrutinee
        if type(scrut) is S.Inl:
            return substitute(redex.left, redex.lname, scrut.inner), "E-Inl"
        if type(scrut) is S.Inr:
            return substitute(redex.right, redex.rname, scrut.inner), "E-Inr"
        raise MvuRuntimeError(f"case on non-sum value {scrut!r}")
    if cls is S.Try:
        return substitute(redex.success, redex.xname, redex.attempt), "E-Try"
    raise TypeError(redex)


def step_term(t: Term, globals_map: dict):
    """One term step: ("value",) | ("stuck", kind, data) | (term', detail)."""
    frames, focus = decompose(t)
    kind = focus[0]
    if kind == "value":
        return ("value",)
    if kind == "redex":
        out, detail = contract(focus[1], globals_map)
        return (plug(frames, out), detail)
    if kind == "action":
        return ("stuck", focus[1], focus[2])
    if kind == "raise":
        return ("stuck", "raise", None)
    raise TypeError(focus)


# ---------------------------------------------------------------------------
# Processes
# ---------------------------------------------------------------------------


class Proc:
    __slots__ = ("tid",)


class RunProc(Proc):
    __slots__ = ("term",)

    def __init__(self, term: Term, tid: int = 0):
        self.term = term
        self.tid = tid


class LoopProc(Proc):
    __slots__ = ("thread", "funs", "version")

    def __init__(self, thread, funs, version: int, tid: int = 0):
        self.thread = thread
        self.funs = funs
        self.version = version
        self.tid = tid


class HaltProc(Proc):
    __slots__ = ()

    def __init__(self, tid: int = 0):
        self.tid = tid


class MsgThread(Proc):
    __slots__ = ("term", "version")

    def __init__(self, term: Term, version: int, tid: int = 0):
        self.term = term
        self.version = version
        self.tid = tid


class ServerProc(Proc):
    __slots__ = ("term",)

    def __init__(self, term: Term, tid: int = 0):
        self.term = term
        self.tid = tid


# Active-thread states ------------------------------------------------------


class Idle:
    __slots__ = ("model",)

    def __init__(self, model: Term):
        self.model = model


class CoreProcessing:
    __slots__ = ("term",)

    def __init__(self, term: Term):
        self.term = term


class Updating:
    __slots__ = ("term",)

    def __init__(self, term: Term):
        self.term = term


class Extracting:
    __slots__ = ("cmd", "term")

    def __init__(self, cmd: Term, term: Term):
        self.cmd = cmd
        self.term = term


class ExtractingT:
    __slots__ = ("funs", "cmd", "term")

    def __init__(self, funs, cmd: Term, term: Term):
        self.funs = funs
        self.cmd = cmd
        self.term = term


class Rendering:
    __slots__ = ("model", "cmd", "term")

    def __init__(self, model: Term, cmd: Term, term: Term):
        self.model = model
        self.cmd = cmd
        self.term = term


class Transitioning:
    __slots__ = ("model", "funs", "cmd", "term")

    def __init__(self, model: Term, funs, cmd: Term, term: Term):
        self.model = model
        self.funs = funs
        self.cmd = cmd
        self.term = term


class CoreFuns:
    __slots__ = ("view", "update", "subs")

    def __init__(self, view: Term, update: Term, subs: Term | None):
        self.view = view
        self.update = update
        self.subs = subs


class ExtFuns:
    __slots__ = ("view", "update", "extract")

    def __init__(self, view: Term, update: Term, extract: Term):
        self.view = view
        self.update = update
        self.extract = extract


def state_term(thread) -> Term | None:
    """The term under evaluation inside an active-thread state, if any."""
    if type(thread) is Idle:
        return None
    return thread.term


def with_state_term(thread, term: Term):
    cls = type(thread)
    if cls is CoreProcessing:
        return CoreProcessing(term)
    if cls is Updating:
        return Updating(term)
    if cls is Extracting:
        return Extracting(thread.cmd, term)
    if cls is ExtractingT:
        return ExtractingT(thread.funs, thread.cmd, term)
    if cls is Rendering:
        return Rendering(thread.model, thread.cmd, term)
    if cls is Transitioning:
        return Transitioning(thread.model, thread.funs, thread.cmd, term)
    raise TypeError(thread)


def state_recorded_values(thread) -> list:
    """Values recorded by an active-thread state, zapped on unhandled raise."""
    cls = type(thread)
    if cls in (CoreProcessing, Updating):
        return []
    if cls is Extracting:
        return [thread.cmd]
    if cls is ExtractingT:
        return [thread.cmd]
    if cls is Rendering:
        return [thread.model, thread.cmd]
    if cls is Transitioning:
        return [thread.model, thread.cmd]
    return []


def zap_of(x) -> list:
    """Names to cancel when a value, a frame stack, or an active-thread
    state is discarded: one zapper per free runtime name, in order. For a
    state this is its recorded values followed by its term's context."""
    if isinstance(x, Term):
        return list(free_names(x))
    if isinstance(x, list):
        return frames_names(x)
    out: list = []
    seen: set = set()
    for v in state_recorded_values(x):
        for n in free_names(v):
            if n not in seen:
                seen.add(n)
                out.append(n)
    term = state_term(x)
    if term is not None:
        for n in free_names(term):
            if n not in seen:
                seen.add(n)
                out.append(n)
    return out


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


class Configuration:
    __slots__ = ("mode", "procs", "zappers", "channels", "channel_types",
                 "page", "subs", "env_queue", "supply", "lift_cursor", "tid_supply")

    def __init__(self, mode, procs, zappers, channels, channel_types, page,
                 subs, env_queue, supply, lift_cursor, tid_supply):
        self.mode = mode
        self.procs = procs            # tuple of Proc, creation order
        self.zappers = zappers        # tuple of names
        self.channels = channels      # tuple of (c, d) pairs, creation order
        self.channel_types = channel_types  # dict name -> SessionType
        self.page = page
        self.subs = subs              # subscription value
        self.env_queue = env_queue    # tuple of Event
        self.supply = supply          # name/node-id counter
        self.lift_cursor = lift_cursor
        self.tid_supply = tid_supply

    def replace(self, **kw) -> "Configuration":
        vals = {slot: getattr(self, slot) for slot in Configuration.__slots__}
        vals.update(kw)
        return Configuration(**vals)

    def main(self) -> Proc | None:
        for p in self.procs:
            if isinstance(p, (RunProc, LoopProc, HaltProc)):
                return p
        return None

    def main_version(self) -> int:
        m = self.main()
        return m.version if isinstance(m, LoopProc) else 0

    def partner(self, name: str) -> str | None:
        for c, d in self.channels:
            if c == name:
                return d
            if d == name:
                return c
        return None


def initial_configuration(mode: str, main_term: Term) -> Configuration:
    return Configuration(
        mode=mode,
        procs=(RunProc(main_term, tid=0),),
        zappers=(),
        channels=(),
        channel_types={},
        page=PAGE_EMPTY,
        subs=S.SUB_EMPTY,
        env_queue=(),
        supply=0,
        lift_cursor=0,
        tid_supply=1,
    )


# ---------------------------------------------------------------------------
# Injections (rule E-Interact / E-InteractS)
# ---------------------------------------------------------------------------


class InjectionError(Exception):
    pass


def inject_dom_event(config: Configuration, node_id: int, event: Event) -> Configuration:
    sig = BY_EVENT.get(event.name)
    if sig is None or sig.env:
        raise InjectionError(f"unknown DOM event {event.name!r}")
    _validate_payload(event)
    node = find_node(config.page, node_id)
    if node is None:
        raise InjectionError(f"no tag node with id {node_id}")
    new_page = _map_node(config.page, node_id,
                         lambda n: PageTag(n.tag, n.attrs, n.kids, n.queue + (event,), n.node_id))
    return config.replace(page=new_page)


def inject_env_event(config: Configuration, event: Event) -> Configuration:
    sig = BY_EVENT.get(event.name)
    if sig is None or not sig.env:
        raise InjectionError(f"unknown environment event {event.name!r}")
    if config.mode != "core-sub":
        raise InjectionError("environment events need the subscriptions extension")
    _validate_payload(event)
    return config.replace(env_queue=config.env_queue + (event,))


def _validate_payload(event: Event) -> None:
    from .check import MvuTypeError, check_term, join_types
    from .registry import payload_type

    if not is_value(event.payload) or free_names(event.payload):
        raise InjectionError(f"event payload must be a closed value: {event.payload!r}")
    try:
        ty, _ = check_term(event.payload)
        join_types(ty, payload_type(event.name))
    except MvuTypeError as e:
        raise InjectionError(f"payload type mismatch for {event.name!r}: {e}") from e


def _map_node(page: Page, node_id: int, fn) -> Page:
    from .page import PageAppend

    cls = type(page)
    if cls is PageTag:
        if page.node_id == node_id:
            return fn(page)
        kids = _map_node(page.kids, node_id, fn)
        if kids is page.kids:
            return page
        return PageTag(page.tag, page.attrs, kids, page.queue, page.node_id)
    if cls is PageAppend:
        left = _map_node(page.left, node_id, fn)
        if left is not page.left:
            return PageAppend(left, page.right)
        right = _map_node(page.right, node_id, fn)
        if right is not page.right:
            return PageAppend(page.left, right)
        return page
    return page


# ---------------------------------------------------------------------------
# The stepper
# ---------------------------------------------------------------------------


def _core_handle_term(model: Term, funs: CoreFuns, msg: Term, counter: list) -> Term:
    """let m' = u (msg, m) in (m', v m'[, s m']) as one term."""
    counter[0] += 1
    m2 = f"m'#h{counter[0]}"
    dummy = f"_#h{counter[0]}"
    call = S.App(funs.update, S.Pair(msg, model))
    if funs.subs is None:
        body = S.Pair(S.Var(m2), S.App(funs.view, S.Var(m2)))
    else:
        body = S.Pair(S.Var(m2), S.Pair(S.App(funs.view, S.Var(m2)),
                                        S.App(funs.subs, S.Var(m2))))
    return S.LetPair(m2, dummy, S.Pair(call, S.UNIT_TERM), body)


class StepResult:
    __slots__ = ("config", "rule", "detail")

    def __init__(self, config: Configuration, rule: str, detail: str | None = None):
        self.config = config
        self.rule = rule
        self.detail = detail


class Runtime:
    """Owns the globals table and a fresh-variable counter for handle terms."""

    def __init__(self, globals_map: dict | None = None):
        self.globals_map = globals_map or {}
        self._counter = [0]
        # (config object, start index) when the previous step was a lift
        # that left its thread still reducible: no higher-priority rule can
        # have become applicable, so the next step is again a lift
        self._lift_hint: tuple | None = None

    # -- status ------------------------------------------------------------

    def proc_term(self, p: Proc) -> Term | None:
        cls = type(p)
        if cls is RunProc or cls is MsgThread or cls is ServerProc:
            return p.term
        if cls is LoopProc:
            return state_term(p.thread)
        return None

    def status(self, term: Term):
        """("value",) | ("step",) | ("action", kind, redexdata) | ("raise",)"""
        if is_value(term):
            return ("value",)
        frames, focus = decompose(term)
        kind = focus[0]
        if kind == "redex":
            return ("step",)
        if kind == "action":
            return focus
        if kind == "raise":
            return ("raise",)
        raise TypeError(focus)

    def blocked_on(self, term: Term):
        """(action, channel-name) if the term is blocked on send/receive/close."""
        if is_value(term):
            return None
        _, focus = decompose(term)
        if focus[0] != "action":
            return None
        act = focus[1]
        node = focus[2]
        if act == "send":
            arg = node.arg
            if type(arg) is S.Pair and type(arg.right) is S.Name:
                return ("send", arg.right.name)
            return ("send", None)
        if act in ("receive", "close"):
            if type(node.arg) is S.Name:
                return (act, node.arg.name)
            return (act, None)
        return None

    # -- helpers -------------------------------------------------------------

    def _spawn_threads(self, config: Configuration, terms: list, version: int, procs: list) -> int:
        tid = config.tid_supply
        for t in terms:
            procs.append(MsgThread(t, version, tid=tid))
            tid += 1
        return tid

    @staticmethod
    def _replace_proc(procs: tuple, old: Proc, new) -> tuple:
        out = []
        for p in procs:
            if p is old:
                if isinstance(new, (list, tuple)):
                    out.extend(new)
                elif new is not None:
                    out.append(new)
            else:
                out.append(p)
        return tuple(out)

    def _gc(self, config: Configuration) -> Configuration:
        procs = config.procs
        drop = [p for p in procs if type(p) is ServerProc and type(p.term) is S.Unit]
        if drop:
            procs = tuple(p for p in procs if p not in drop)
        zapset = set(config.zappers)
        dead_pairs = [(c, d) for (c, d) in config.channels if c in zapset and d in zapset]
        channels = config.channels
        zappers = config.zappers
        channel_types = config.channel_types
        if dead_pairs:
            dead_names = {n for pair in dead_pairs for n in pair}
            channels = tuple(p for p in channels if p not in dead_pairs)
            zappers = tuple(z for z in zappers if z not in dead_names)
            channel_types = {k: v for k, v in channel_types.items() if k not in dead_names}
        if drop or dead_pairs:
            return config.replace(procs=procs, zappers=zappers, channels=channels,
                                  channel_types=channel_types)
        return config

    def assert_name_linearity(self, config: Configuration) -> None:
        """Each runtime name occurs free in at most one thread, plus at most
        one zapper. Free-name tuples are duplicate-free per term, so only
        cross-component duplication needs checking."""
        if not config.channels and not config.zappers:
            return  # no live names anywhere
        seen: set = set()
        for p in config.procs:
            term = self.proc_term(p)
            if term is not None:
                for n in free_names(term):
                    if n in seen:
                        raise MvuRuntimeError(f"runtime name {n!r} duplicated across threads")
                    seen.add(n)
            if type(p) is LoopProc:
                th = p.thread
                values = (th.model,) if type(th) is Idle else state_recorded_values(th)
                for v in values:
                    for n in free_names(v):
                        if n in seen:
                            raise MvuRuntimeError(f"runtime name {n!r} duplicated across threads")
                        seen.add(n)
        zaps = config.zappers
        if len(set(zaps)) != len(zaps):
            raise MvuRuntimeError("duplicate zapper thread")

    # -- the step relation ----------------------------------------------------

    def step(self, config: Configuration) -> StepResult | None:
        hint = self._lift_hint
        self._lift_hint = None
        if hint is not None and hint[0] is config:
            result = self._fire_lift(config, hint[1])
        else:
            result = self._step_inner(config)
        if result is None:
            return None
        gc = self._gc(result.config)
        if gc is not result.config:
            result = StepResult(gc, result.rule, result.detail)
        self.assert_name_linearity(result.config)
        return result

    def _step_inner(self, config: Configuration) -> StepResult | None:
        procs = config.procs
        main = config.main()

        # 1. E-Run
        if type(main) is RunProc and is_value(main.term):
            return self._fire_run(config, main)

        # 2. E-Update / E-Transition (also the core variant of E-Update)
        if type(main) is LoopProc:
            result = self._fire_update(config, main)
            if result is not None:
                return result

        # 3. E-Evt: leftmost node, oldest event
        for node in page_nodes(config.page):
            if node.queue:
                return self._fire_evt(config, node)

        # 4. E-EvtS
        if config.env_queue:
            return self._fire_evts(config)

        # 5. E-Handle (oldest same-version value thread, idle loop)
        if type(main) is LoopProc and type(main.thread) is Idle:
            for p in procs:
                if type(p) is MsgThread and p.version == main.version and is_value(p.term):
                    return self._fire_handle(config, main, p)

        # 6. E-Discard / E-DiscardHalt
        if type(main) is LoopProc:
            for p in procs:
                if type(p) is MsgThread and p.version != main.version and is_value(p.term):
                    new_procs = self._replace_proc(procs, p, None)
                    zappers = config.zappers + tuple(free_names(p.term))
                    return StepResult(config.replace(procs=new_procs, zappers=zappers), "E-Discard")
        if type(main) is HaltProc:
            for p in procs:
                if type(p) is MsgThread and is_value(p.term):
                    new_procs = self._replace_proc(procs, p, None)
                    zappers = config.zappers + tuple(free_names(p.term))
                    return StepResult(config.replace(procs=new_procs, zappers=zappers), "E-DiscardHalt")

        # 7. state-machine rules
        if type(main) is LoopProc:
            result = self._fire_state_machine(config, main)
            if result is not None:
                return result

        # 8. exception rules
        for p in procs:
            term = self.proc_term(p)
            if term is None or is_value(term):
                continue
            if self.status(term)[0] == "raise":
                return self._fire_raise(config, p, term)

        # 9. session rules
        result = self._fire_session(config)
        if result is not None:
            return result

        # 10. E-LiftT round-robin from the cursor
        return self._fire_lift(config, config.lift_cursor)

    def _fire_lift(self, config: Configuration, start: int) -> StepResult | None:
        procs = config.procs
        n = len(procs)
        if not n:
            return None
        start %= n
        for off in range(n):
            idx = (start + off) % n
            p = procs[idx]
            term = self.proc_term(p)
            if term is None or self.status(term)[0] != "step":
                continue
            new_term, detail = step_term(term, self.globals_map)
            new_p = self._with_proc_term(p, new_term)
            new_procs = self._replace_proc(procs, p, new_p)
            out = config.replace(procs=new_procs, lift_cursor=(idx + 1) % n)
            if not is_value(new_term):
                _, focus = decompose(new_term)
                if focus[0] == "redex":
                    self._lift_hint = (out, (idx + 1) % n)
            return StepResult(out, "E-LiftT", detail)
        return None

    @staticmethod
    def _with_proc_term(p: Proc, term: Term) -> Proc:
        cls = type(p)
        if cls is RunProc:
            return RunProc(term, tid=p.tid)
        if cls is MsgThread:
            return MsgThread(term, p.version, tid=p.tid)
        if cls is ServerProc:
            return ServerProc(term, tid=p.tid)
        if cls is LoopProc:
            return LoopProc(with_state_term(p.thread, term), p.funs, p.version, tid=p.tid)
        raise TypeError(p)

    # -- rule bodies ---------------------------------------------------------

    def _fire_run(self, config: Configuration, main: RunProc) -> StepResult:
        v = main.term
        mode = config.mode

        def split(t: Term, n: int) -> list:
            out = []
            for _ in range(n - 1):
                if type(t) is not S.Pair:
                    raise MvuRuntimeError(f"run tuple has the wrong shape: {v!r}")
                out.append(t.left)
                t = t.right
            out.append(t)
            return out

        if mode == "core":
            m, view, update = split(v, 3)
            thread = CoreProcessing(S.Pair(m, S.App(view, m)))
            loop = LoopProc(thread, CoreFuns(view, update, None), 0, tid=main.tid)
            return StepResult(config.replace(procs=self._replace_proc(config.procs, main, loop)), "E-Run")
        if mode == "core-sub":
            m, view, update, subs = split(v, 4)
            thread = CoreProcessing(S.Pair(m, S.Pair(S.App(view, m), S.App(subs, m))))
            loop = LoopProc(thread, CoreFuns(view, update, subs), 0, tid=main.tid)
            return StepResult(config.replace(procs=self._replace_proc(config.procs, main, loop)), "E-Run")
        m, view, update, extract, cmd, server = split(v, 6)
        thread = Extracting(cmd, S.App(extract, m))
        loop = LoopProc(thread, ExtFuns(view, update, extract), 0, tid=main.tid)
        if type(server) is S.Lam:
            server_term = substitute(server.body, server.param, S.UNIT_TERM)
        else:
            server_term = S.App(server, S.UNIT_TERM)
        srv = ServerProc(server_term, tid=config.tid_supply)
        procs = self._replace_proc(config.procs, main, [loop, srv])
        return StepResult(
            config.replace(procs=procs, tid_supply=config.tid_supply + 1), "E-Run")

    def _fire_update(self, config: Configuration, main: LoopProc) -> StepResult | None:
        th = main.thread
        cls = type(th)
        if cls is CoreProcessing and is_value(th.term):
            v = th.term
            if type(v) is not S.Pair:
                raise MvuRuntimeError(f"core processing produced a non-pair {v!r}")
            model = v.left
            if main.funs.subs is None:
                html = v.right
                new_subs = config.subs
            else:
                if type(v.right) is not S.Pair:
                    raise MvuRuntimeError("subscription processing must produce a triple")
                html = v.right.left
                new_subs = v.right.right
            supply = NodeIdSupply(config.supply)
            new_page = diff(html, config.page, supply)
            loop = LoopProc(Idle(model), main.funs, main.version, tid=main.tid)
            return StepResult(
                config.replace(procs=self._replace_proc(config.procs, main, loop),
                               page=new_page, subs=new_subs, supply=supply.next_id),
                "E-Update")
        if cls is Rendering and is_value(th.term):
            supply = NodeIdSupply(config.supply)
            new_page = diff(th.term, config.page, supply)
            loop = LoopProc(Idle(th.model), main.funs, main.version, tid=main.tid)
            new_procs = list(self._replace_proc(config.procs, main, loop))
            tid = self._spawn_threads(config, command_procs(th.cmd), main.version, new_procs)
            return StepResult(
                config.replace(procs=tuple(new_procs), page=new_page,
                               supply=supply.next_id, tid_supply=tid),
                "E-Update")
        if cls is Transitioning and is_value(th.term):
            supply = NodeIdSupply(config.supply)
            new_page = diff(th.term, config.page, supply)
            version = main.version + 1
            loop = LoopProc(Idle(th.model), th.funs, version, tid=main.tid)
            new_procs = list(self._replace_proc(config.procs, main, loop))
            tid = self._spawn_threads(config, command_procs(th.cmd), version, new_procs)
            return StepResult(
                config.replace(procs=tuple(new_procs), page=new_page,
                               supply=supply.next_id, tid_supply=tid),
                "E-Transition")
        return None

    def _fire_evt(self, config: Configuration, node: PageTag) -> StepResult:
        event = node.queue[0]
        rest = node.queue[1:]
        new_page = _map_node(config.page, node.node_id,
                             lambda n: PageTag(n.tag, n.attrs, n.kids, rest, n.node_id))
        hs = handlers(event.name, node.attrs)
        version = config.main_version()
        new_procs = list(config.procs)
        tid = self._spawn_threads(config, [S.App(h, event.payload) for h in hs], version, new_procs)
        return StepResult(
            config.replace(procs=tuple(new_procs), page=new_page, tid_supply=tid), "E-Evt")

    def _fire_evts(self, config: Configuration) -> StepResult:
        event = config.env_queue[0]
        rest = config.env_queue[1:]
        hs = handlers(event.name, config.subs)
        version = config.main_version()
        new_procs = list(config.procs)
        tid = self._spawn_threads(config, [S.App(h, event.payload) for h in hs], version, new_procs)
        return StepResult(
            config.replace(procs=tuple(new_procs), env_queue=rest, tid_supply=tid), "E-EvtS")

    def _fire_handle(self, config: Configuration, main: LoopProc, thread: MsgThread) -> StepResult:
        assert thread.version == main.version, "cross-version message delivery"
        model = main.thread.model
        if config.mode in ("core", "core-sub"):
            term = _core_handle_term(model, main.funs, thread.term, self._counter)
            loop = LoopProc(CoreProcessing(term), main.funs, main.version, tid=main.tid)
            rule = "EP-Handle"
        else:
            term = S.App(main.funs.update, S.Pair(thread.term, model))
            loop = LoopProc(Updating(term), main.funs, main.version, tid=main.tid)
            rule = "E-Handle"
        procs = self._replace_proc(config.procs, main, loop)
        procs = self._replace_proc(procs, thread, None)
        return StepResult(config.replace(procs=procs), rule)

    def _fire_state_machine(self, config: Configuration, main: LoopProc) -> StepResult | None:
        th = main.thread
        cls = type(th)
        if cls is Updating and is_value(th.term):
            v = th.term
            funs: ExtFuns = main.funs
            if type(v) is S.NoTransition:
                new_thread = Extracting(v.cmd, S.App(funs.extract, v.model))
                rule = "E-Extract"
            elif type(v) is S.TransitionT:
                new_funs = ExtFuns(v.view, v.update, v.extract)
                new_thread = ExtractingT(new_funs, v.cmd, S.App(v.extract, v.model))
                rule = "E-ExtractT"
            else:
                raise MvuRuntimeError(f"update produced a non-transition value {v!r}")
            loop = LoopProc(new_thread, main.funs, main.version, tid=main.tid)
            return StepResult(config.replace(procs=self._replace_proc(config.procs, main, loop)), rule)
        if cls is Extracting and is_value(th.term):
            v = th.term
            if type(v) is not S.Pair:
                raise MvuRuntimeError(f"extract produced a non-pair {v!r}")
            funs = main.funs
            new_thread = Rendering(v.left, th.cmd, S.App(funs.view, v.right))
            loop = LoopProc(new_thread, main.funs, main.version, tid=main.tid)
            return StepResult(config.replace(procs=self._replace_proc(config.procs, main, loop)), "E-Render")
        if cls is ExtractingT and is_value(th.term):
            v = th.term
            if type(v) is not S.Pair:
                raise MvuRuntimeError(f"extract produced a non-pair {v!r}")
            new_thread = Transitioning(v.left, th.funs, th.cmd, S.App(th.funs.view, v.right))
            loop = LoopProc(new_thread, main.funs, main.version, tid=main.tid)
            return StepResult(config.replace(procs=self._replace_proc(config.procs, main, loop)), "E-RenderT")
        return None

    def _fire_raise(self, config: Configuration, p: Proc, term: Term) -> StepResult:
        frames, _ = decompose(term)
        try_index = None
        for i in range(len(frames) - 1, -1, -1):
            if frames[i][0] == "try":
                try_index = i
                break
        if try_index is not None:
            # E-RaiseH: the innermost handler catches; the aborted pure
            # context's names are cancelled
            tframe = frames[try_index]
            discarded = frames[try_index + 1:]
            new_term = plug(frames[:try_index], tframe[3])
            zappers = config.zappers + tuple(frames_names(discarded))
            new_p = self._with_proc_term(p, new_term)
            return StepResult(
                config.replace(procs=self._replace_proc(config.procs, p, new_p), zappers=zappers),
                "E-RaiseH")
        zap: list = frames_names(frames)
        cls = type(p)
        if cls is RunProc:
            new_procs = self._replace_proc(config.procs, p, HaltProc(tid=p.tid))
            return StepResult(
                config.replace(procs=new_procs, zappers=config.zappers + tuple(zap)),
                "E-RaiseURun")
        if cls is LoopProc:
            for v in state_recorded_values(p.thread):
                for n in free_names(v):
                    if n not in zap:
                        zap.append(n)
            new_procs = self._replace_proc(config.procs, p, HaltProc(tid=p.tid))
            return StepResult(
                config.replace(procs=new_procs, zappers=config.zappers + tuple(zap)),
                "E-RaiseUMain")
        if cls is MsgThread:
            new_procs = self._replace_proc(config.procs, p, None)
            return StepResult(
                config.replace(procs=new_procs, zappers=config.zappers + tuple(zap)),
                "E-RaiseUThread")
        if cls is ServerProc:
            new_procs = self._replace_proc(config.procs, p, None)
            return StepResult(
                config.replace(procs=new_procs, zappers=config.zappers + tuple(zap)),
                "E-RaiseUServer")
        raise TypeError(p)

    def _fire_session(self, config: Configuration) -> StepResult | None:
        # gather per-proc session actions
        actions: dict = {}
        for p in config.procs:
            term = self.proc_term(p)
            if term is None or is_value(term):
                continue
            st = self.status(term)
            if st[0] == "action":
                actions[p] = st

        # E-New (first thread in order)
        for p, st in actions.items():
            if st[1] == "new":
                node = st[2]
                if node.session is None:
                    raise MvuRuntimeError("new without a session instantiation at runtime")
                from .check import dual_session

                n = config.supply
                c, d = f"c{n}", f"d{n}"
                frames, _ = decompose(self.proc_term(p))
                new_term = plug(frames, S.Pair(S.Name(c), S.Name(d)))
                new_p = self._with_proc_term(p, new_term)
                types = dict(config.channel_types)
                types[c] = node.session
                types[d] = dual_session(node.session)
                return StepResult(
                    config.replace(procs=self._replace_proc(config.procs, p, new_p),
                                   channels=config.channels + ((c, d),),
                                   channel_types=types, supply=n + 1),
                    "E-New")

        # build endpoint -> (proc, action, payload) map for blocked actions
        by_name: dict = {}
        for p, st in actions.items():
            act = st[1]
            node = st[2]
            if act == "send" and type(node.arg) is S.Pair and type(node.arg.right) is S.Name:
                by_name[node.arg.right.name] = (p, "send", node.arg.left)
            elif act in ("receive", "close") and type(node.arg) is S.Name:
                by_name[node.arg.name] = (p, act, None)

        # E-Comm (oldest pair)
        from .check import unfold

        for c, d in config.channels:
            for x, y in ((c, d), (d, c)):
                sx = by_name.get(x)
                sy = by_name.get(y)
                if sx and sy and sx[1] == "send" and sy[1] == "receive":
                    sender, _, payload = sx
                    receiver = sy[0]
                    if sender is receiver:
                        continue  # self-communication cannot rendezvous
                    sf, _ = decompose(self.proc_term(sender))
                    rf, _ = decompose(self.proc_term(receiver))
                    new_sender = self._with_proc_term(sender, plug(sf, S.Name(x)))
                    new_receiver = self._with_proc_term(receiver, plug(rf, S.Pair(payload, S.Name(y))))
                    procs = self._replace_proc(config.procs, sender, new_sender)
                    procs = self._replace_proc(procs, receiver, new_receiver)
                    types = dict(config.channel_types)
                    hx = unfold(types[x])
                    hy = unfold(types[y])
                    types[x] = hx.cont
                    types[y] = hy.cont
                    return StepResult(config.replace(procs=procs, channel_types=types), "E-Comm")

        # E-Close (both endpoints)
        for c, d in config.channels:
            sc, sd = by_name.get(c), by_name.get(d)
            if sc and sd and sc[1] == "close" and sd[1] == "close" and sc[0] is not sd[0]:
                pc, pd = sc[0], sd[0]
                fc, _ = decompose(self.proc_term(pc))
                fd, _ = decompose(self.proc_term(pd))
                procs = self._replace_proc(config.procs, pc, self._with_proc_term(pc, plug(fc, S.UNIT_TERM)))
                procs = self._replace_proc(procs, pd, self._with_proc_term(pd, plug(fd, S.UNIT_TERM)))
                types = {k: v for k, v in config.channel_types.items() if k not in (c, d)}
                channels = tuple(pair for pair in config.channels if pair != (c, d))
                return StepResult(
                    config.replace(procs=procs, channels=channels, channel_types=types),
                    "E-Close")

        # E-Cancel
        for p, st in actions.items():
            if st[1] == "cancel":
                node = st[2]
                if type(node.arg) is not S.Name:
                    raise MvuRuntimeError(f"cancel of a non-name value {node.arg!r}")
                frames, _ = decompose(self.proc_term(p))
                new_p = self._with_proc_term(p, plug(frames, S.UNIT_TERM))
                return StepResult(
                    config.replace(procs=self._replace_proc(config.procs, p, new_p),
                                   zappers=config.zappers + (node.arg.name,)),
                    "E-Cancel")

        # zap rules: peer endpoint cancelled
        zapset = set(config.zappers)
        for c, d in config.channels:
            for x, y in ((c, d), (d, c)):
                sx = by_name.get(x)
                if not sx or y not in zapset:
                    continue
                p, act, payload = sx
                frames, _ = decompose(self.proc_term(p))
                new_p = self._with_proc_term(p, plug(frames, S.RAISE))
                zappers = config.zappers + (x,)
                if act == "send":
                    zappers = zappers + tuple(n for n in free_names(payload) if n not in zappers)
                rule = {"send": "E-SendZap", "receive": "E-RecvZap", "close": "E-CloseZap"}[act]
                return StepResult(
                    config.replace(procs=self._replace_proc(config.procs, p, new_p),
                                   zappers=zappers),
                    rule)
        return None


# ---------------------------------------------------------------------------
# Quiescence classification and error processes
# ---------------------------------------------------------------------------


class ClassificationError(Exception):
    pass


class Classification:
    __slots__ = ("case", "threads")

    def __init__(self, case: str, threads: list):
        self.case = case
        self.threads = threads

    def __repr__(self) -> str:
        return f"Classification({self.case}, {self.threads})"


IDLE_NO_EVENTS = "Idle-NoEvents"
MAIN_BLOCKED = "Main-Blocked"
HALTED = "Halted"


def classify(runtime: Runtime, config: Configuration) -> Classification:
    """Case analysis of a quiescent configuration (canonical form is native)."""
    for node in page_nodes(config.page):
        if node.queue:
            raise ClassificationError(f"quiescent configuration with pending events on node {node.node_id}")
    if config.env_queue:
        raise ClassificationError("quiescent configuration with pending environment events")

    mains = [p for p in config.procs if isinstance(p, (RunProc, LoopProc, HaltProc))]
    if len(mains) != 1:
        raise ClassificationError(f"{len(mains)} main threads")
    main = mains[0]

    threads: list = []
    main_is_idle = type(main) is LoopProc and type(main.thread) is Idle
    for p in config.procs:
        if p is main:
            continue
        term = runtime.proc_term(p)
        if term is None:
            raise ClassificationError(f"untermed auxiliary {p!r}")
        if is_value(term):
            if main_is_idle or type(main) is HaltProc:
                raise ClassificationError("value thread left undelivered")
            threads.append((type(p).__name__, "value", None))
            continue
        blocked = runtime.blocked_on(term)
        if blocked is None:
            raise ClassificationError(f"auxiliary thread neither value nor blocked: {term!r}")
        threads.append((type(p).__name__, f"blocked-{blocked[0]}", blocked[1]))
    for z in config.zappers:
        threads.append(("Zap", "zapper", z))

    if type(main) is HaltProc:
        return Classification(HALTED, threads)
    if type(main) is RunProc:
        blocked = runtime.blocked_on(main.term)
        if blocked is None:
            raise ClassificationError("run main thread neither reducible nor blocked")
        threads.insert(0, ("RunProc", f"blocked-{blocked[0]}", blocked[1]))
        return Classification(MAIN_BLOCKED, threads)
    if main_is_idle:
        return Classification(IDLE_NO_EVENTS, threads)
    term = state_term(main.thread)
    blocked = runtime.blocked_on(term)
    if blocked is None:
        raise ClassificationError("event-loop term neither reducible nor blocked")
    threads.insert(0, ("EventLoop", f"blocked-{blocked[0]}", blocked[1]))
    return Classification(MAIN_BLOCKED, threads)


_ERROR_COMBOS = {("send", "send"), ("send", "close"), ("close", "send"),
                 ("receive", "receive"), ("receive", "close"), ("close", "receive")}


def detect_error_process(runtime: Runtime, config: Configuration) -> bool:
    """True iff some session exhibits a communication mismatch."""
    if not config.channels:
        return False
    by_name: dict = {}
    for p in config.procs:
        term = runtime.proc_term(p)
        if term is None or is_value(term):
            continue
        blocked = runtime.blocked_on(term)
        if blocked and blocked[1] is not None:
            by_name[blocked[1]] = blocked[0]
    for c, d in config.channels:
        ac, ad = by_name.get(c), by_name.get(d)
        if ac and ad and (ac, ad) in _ERROR_COMBOS:
            return True
    return False


def run_to_quiescence(runtime: Runtime, config: Configuration, max_steps: int = 100000,
                      on_step=None) -> tuple:
    """Step until no rule applies; returns (config, fired-rule list)."""
    log: list = []
    for _ in range(max_steps):
        result = runtime.step(config)
        if result is None:
            return config, log
        config = result.config
        log.append(result.rule)
        if on_step is not None:
            on_step(config, result)
    raise MvuRuntimeError(f"no quiescence within {max_steps} steps")
