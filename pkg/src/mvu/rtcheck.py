"""Runtime typing: pages, active threads, processes, whole configurations.

Used by the preservation harness after every reduction step. The judgement
is algorithmic: the event loop's model/message/projection types are
re-derived from its function state, every thread synthesises its type under
the runtime-name environment, and the linear discipline is enforced globally
(each live endpoint is consumed by exactly one thread or one zapper, name
pairs carry dual session types, and there is exactly one main thread).
"""

from __future__ import annotations

from . import runtime as R
from . import syntax as S
from .check import (
    MvuTypeError,
    TermChecker,
    classify_main_type,
    dual_session,
    join_types,
    kind_of,
    session_equal,
)
from .page import Page, PageAppend, PageTag, PageText
from .registry import payload_type
from .syntax import BOTTOM, Kind, Term


from functools import lru_cache


@lru_cache(maxsize=4096)
def _dual_pair_ok(sc, sd) -> bool:
    return session_equal(sc, dual_session(sd))


_EMPTY_PSI: dict = {}


class ConfigChecker:
    def __init__(self, globals_types: dict | None = None):
        self.tc = TermChecker(globals_types)
        self._page_cache: tuple | None = None  # (page object, msg type)
        self._funs_cache: dict = {}            # id(funs) -> (funs, derived, shapes)
        self._psi_cache: tuple | None = None   # (channel_types object, psi, live keys)

    # -- small helpers -------------------------------------------------------

    def _synth_closed(self, rule: str, t: Term, what: str) -> S.Type:
        if S.free_names(t):
            raise MvuTypeError(rule, f"{what} must not capture runtime names")
        ty, used = self.tc.synth(t, {})
        if used:
            raise MvuTypeError(rule, f"{what} consumes linear bindings")
        return ty

    @staticmethod
    def _fun(rule: str, ty: S.Type, what: str) -> S.TFun:
        if isinstance(ty, S.TFun):
            return ty
        raise MvuTypeError(rule, f"{what} has type {ty}, expected a function")

    @staticmethod
    def _expect(rule: str, ty: S.Type, wrapper: type, what: str) -> S.Type:
        if isinstance(ty, wrapper):
            return ty.msg
        if isinstance(ty, S.TBottom):
            return BOTTOM
        raise MvuTypeError(rule, f"{what} has type {ty}, expected {wrapper.__name__}")

    @staticmethod
    def _product(rule: str, ty: S.Type, what: str) -> tuple:
        if isinstance(ty, S.TProduct):
            return ty.left, ty.right
        if isinstance(ty, S.TBottom):
            return BOTTOM, BOTTOM
        raise MvuTypeError(rule, f"{what} has type {ty}, expected a pair")

    # -- function state ------------------------------------------------------

    def derive_funs(self, funs) -> tuple:
        """(model, msg, projection) types derived from a function state."""
        return self._funs_entry(funs)[0]

    def _funs_entry(self, funs) -> tuple:
        """((model, msg, proj), expected-shape templates) for a function
        state, cached by identity so per-step checks reuse the objects."""
        key = id(funs)
        hit = self._funs_cache.get(key)
        if hit is not None and hit[0] is funs:
            return hit[1], hit[2]
        derived = self._derive_funs_fresh(funs)
        a, b, c = derived
        shapes = {
            "core": S.TProduct(a, S.THtml(b)),
            "core-sub": S.TProduct(a, S.TProduct(S.THtml(b), S.TSub(b))),
            "transition": S.TTransition(a, b),
            "cmd": S.TCmd(b),
            "extract": S.TProduct(a, c) if c is not None else None,
            "html": S.THtml(b),
        }
        self._funs_cache[key] = (funs, derived, shapes)
        if len(self._funs_cache) > 256:
            self._funs_cache.clear()
            self._funs_cache[key] = (funs, derived, shapes)
        return derived, shapes

    def _derive_funs_fresh(self, funs) -> tuple:
        if isinstance(funs, R.CoreFuns):
            vty = self._fun("TF-State", self._synth_closed("TF-State", funs.view, "view"), "view")
            uty = self._fun("TF-State", self._synth_closed("TF-State", funs.update, "update"), "update")
            for f, what in ((vty, "view"), (uty, "update")):
                if f.kind is not Kind.U:
                    raise MvuTypeError("TF-State", f"{what} must be an unrestricted function")
            a = vty.param
            b = self._expect("TF-State", vty.result, S.THtml, "view result")
            ub, ua = self._product("TF-State", uty.param, "update parameter")
            a = join_types(a, ua)
            a = join_types(a, uty.result)
            b = join_types(b, ub)
            if funs.subs is not None:
                sty = self._fun("TF-State", self._synth_closed("TF-State", funs.subs, "subscriptions"),
                                "subscriptions")
                a = join_types(a, sty.param)
                b = join_types(b, self._expect("TF-State", sty.result, S.TSub, "subscriptions result"))
            if kind_of(a) is not Kind.U:
                raise MvuTypeError("TF-State", f"core model type {a} must be unrestricted")
            derived = (a, b, None)
        else:
            vty = self._fun("TF-State", self._synth_closed("TF-State", funs.view, "view"), "view")
            uty = self._fun("TF-State", self._synth_closed("TF-State", funs.update, "update"), "update")
            ety = self._fun("TF-State", self._synth_closed("TF-State", funs.extract, "extract"), "extract")
            for f, what in ((vty, "view"), (uty, "update"), (ety, "extract")):
                if f.kind is not Kind.U:
                    raise MvuTypeError("TF-State", f"{what} must be an unrestricted function")
            c = vty.param
            b = self._expect("TF-State", vty.result, S.THtml, "view result")
            ub, ua = self._product("TF-State", uty.param, "update parameter")
            a = ua
            b = join_types(b, ub)
            ures = uty.result
            if not isinstance(ures, S.TBottom):
                if not isinstance(ures, S.TTransition):
                    raise MvuTypeError("TF-State", f"update must return a transition, found {ures}")
                a = join_types(a, ures.model)
                b = join_types(b, ures.msg)
            a = join_types(a, ety.param)
            ea, ec = self._product("TF-State", ety.result, "extract result")
            a = join_types(a, ea)
            c = join_types(c, ec)
            if kind_of(c) is not Kind.U:
                raise MvuTypeError("TF-State", f"unrestricted model type {c} must have kind U")
            derived = (a, b, c)
        return derived

    # -- active thread -------------------------------------------------------

    def check_thread(self, thread, funs, psi: dict, mode: str) -> frozenset:
        (a, b, c), shapes = self._funs_entry(funs)
        cls = type(thread)
        if cls is R.Idle:
            ty, used = self.tc.synth(thread.model, psi)
            self._match("TT-Idle", ty, a, "idle model")
            return used
        if cls is R.CoreProcessing:
            ty, used = self.tc.synth(thread.term, psi)
            want = shapes["core-sub"] if mode == "core-sub" else shapes["core"]
            self._match("TS-Processing", ty, want, "processing term")
            return used
        if cls is R.Updating:
            ty, used = self.tc.synth(thread.term, psi)
            self._match("TT-Updating", ty, shapes["transition"], "updating term")
            return used
        if cls is R.Extracting:
            cty, cused = self.tc.synth(thread.cmd, psi)
            self._match("TT-Extracting", cty, shapes["cmd"], "recorded command")
            tty, tused = self.tc.synth(thread.term, psi)
            self._match("TT-Extracting", tty, shapes["extract"], "extracting term")
            return self._disjoint(cused, tused)
        if cls is R.ExtractingT:
            _, shapes2 = self._funs_entry(thread.funs)
            cty, cused = self.tc.synth(thread.cmd, psi)
            self._match("TT-ExtractingT", cty, shapes2["cmd"], "recorded command")
            tty, tused = self.tc.synth(thread.term, psi)
            self._match("TT-ExtractingT", tty, shapes2["extract"], "extracting term")
            return self._disjoint(cused, tused)
        if cls is R.Rendering:
            mty, mused = self.tc.synth(thread.model, psi)
            self._match("TT-Rendering", mty, a, "recorded model")
            cty, cused = self.tc.synth(thread.cmd, psi)
            self._match("TT-Rendering", cty, shapes["cmd"], "recorded command")
            tty, tused = self.tc.synth(thread.term, psi)
            self._match("TT-Rendering", tty, shapes["html"], "rendering term")
            return self._disjoint(mused, cused, tused)
        if cls is R.Transitioning:
            (a2, _, _), shapes2 = self._funs_entry(thread.funs)
            mty, mused = self.tc.synth(thread.model, psi)
            self._match("TT-Transitioning", mty, a2, "recorded model")
            cty, cused = self.tc.synth(thread.cmd, psi)
            self._match("TT-Transitioning", cty, shapes2["cmd"], "recorded command")
            tty, tused = self.tc.synth(thread.term, psi)
            self._match("TT-Transitioning", tty, shapes2["html"], "transitioning term")
            return self._disjoint(mused, cused, tused)
        raise TypeError(thread)

    @staticmethod
    def _match(rule: str, actual: S.Type, expected: S.Type, what: str) -> None:
        if actual is expected:
            return
        try:
            join_types(actual, expected)
        except MvuTypeError as e:
            raise MvuTypeError(rule, f"{what}: {e.msg}") from e

    @staticmethod
    def _disjoint(*useds: frozenset) -> frozenset:
        out: frozenset = frozenset()
        for u in useds:
            overlap = out & u
            if overlap:
                raise MvuTypeError("TP-Par", f"endpoint(s) used twice: {sorted(overlap)}")
            out |= u
        return out

    # -- pages ----------------------------------------------------------------

    def check_page(self, page: Page) -> S.Type:
        if self._page_cache is not None and self._page_cache[0] is page:
            return self._page_cache[1]
        msg = self._check_page(page)
        self._page_cache = (page, msg)
        return msg

    def _check_page(self, page: Page) -> S.Type:
        cls = type(page)
        if cls is PageTag:
            aty = self._synth_closed("TD-Tag", page.attrs, "page attributes")
            msg = self._expect("TD-Tag", aty, S.TAttr, "page attributes")
            for event in page.queue:
                self._check_event(event)
            return join_types(msg, self._check_page(page.kids))
        if cls is PageText:
            tty = self._synth_closed("TD-Text", page.text, "page text")
            self._match("TD-Text", tty, S.STRING, "page text")
            return BOTTOM
        if cls is PageAppend:
            return join_types(self._check_page(page.left), self._check_page(page.right))
        return BOTTOM  # PageEmpty

    def _check_event(self, event) -> None:
        try:
            want = payload_type(event.name)
        except KeyError:
            raise MvuTypeError("TE-Evt", f"unregistered event {event.name!r}") from None
        ty = self._synth_closed("TE-Evt", event.payload, f"payload of {event.name!r}")
        self._match("TE-Evt", ty, want, f"payload of {event.name!r}")
        if kind_of(want) is not Kind.U:
            raise MvuTypeError("TE-Evt", f"event payload type {want} must be unrestricted")

    # -- configurations --------------------------------------------------------

    def check_configuration(self, config: R.Configuration) -> None:
        ctypes = config.channel_types
        if not ctypes:
            psi: dict = _EMPTY_PSI
            live: frozenset = frozenset()
        elif self._psi_cache is not None and self._psi_cache[0] is ctypes:
            psi, live = self._psi_cache[1], self._psi_cache[2]
        else:
            psi = {"#" + n: S.TSession(ty) for n, ty in ctypes.items()}
            live = frozenset(psi)
            self._psi_cache = (ctypes, psi, live)

        mains = [p for p in config.procs if isinstance(p, (R.RunProc, R.LoopProc, R.HaltProc))]
        if len(mains) > 1:
            raise MvuTypeError("TP-Par", "two main threads (flag combination • + • is undefined)")
        if not mains:
            raise MvuTypeError("TC-System", "no main thread")
        main = mains[0]

        for c, d in config.channels:
            sc = config.channel_types.get(c)
            sd = config.channel_types.get(d)
            if sc is None or sd is None:
                raise MvuTypeError("TP-Nu", f"untyped endpoint in pair ({c}, {d})")
            if not _dual_pair_ok(sc, sd):
                raise MvuTypeError("TP-Nu", f"endpoints {c}:{sc} and {d}:{sd} are not dual")

        loop_msg: S.Type | None = None
        used_all: frozenset = frozenset()
        for p in config.procs:
            cls = type(p)
            if cls is R.RunProc:
                ty, used = self.tc.synth(p.term, psi)
                info = classify_main_type(ty)
                if info.mode != config.mode:
                    raise MvuTypeError(
                        "TP-Run", f"run tuple fits mode {info.mode}, configuration is {config.mode}")
                loop_msg = info.msg
            elif cls is R.LoopProc:
                used = self.check_thread(p.thread, p.funs, psi, config.mode)
                loop_msg = self.derive_funs(p.funs)[1]
            elif cls is R.HaltProc:
                used = frozenset()
            elif cls is R.MsgThread:
                ty, used = self.tc.synth(p.term, psi)
                if isinstance(main, R.LoopProc) and p.version == main.version:
                    self._match("TP-Thread", ty, self.derive_funs(main.funs)[1],
                                f"message thread at version {p.version}")
                # a version mismatch types the thread at an arbitrary type
            elif cls is R.ServerProc:
                ty, used = self.tc.synth(p.term, psi)
                self._match("TP-ServerThread", ty, S.UNIT, "server thread")
            else:
                raise TypeError(p)
            used_all = self._disjoint(used_all, used)

        if config.zappers or used_all or live:
            zap_keys = frozenset("#" + z for z in config.zappers)
            if len(zap_keys) != len(config.zappers):
                raise MvuTypeError("TP-Zap", "duplicate zapper")
            overlap = used_all & zap_keys
            if overlap:
                raise MvuTypeError("TP-Zap", f"endpoint(s) owned by a thread and a zapper: {sorted(overlap)}")
            if not zap_keys <= live:
                missing = sorted(k[1:] for k in zap_keys - live)
                raise MvuTypeError("TP-Zap", f"zapper for unknown endpoint(s) {missing}")
            leftover = live - (used_all | zap_keys)
            if leftover:
                raise MvuTypeError(
                    "TP-Nu", f"linear endpoint(s) not consumed by any thread: {sorted(n[1:] for n in leftover)}")

        page_msg = self.check_page(config.page)
        subs_ty = self._synth_closed("T-Sub", config.subs, "subscription value")
        subs_msg = self._expect("T-Sub", subs_ty, S.TSub, "subscription value")
        for event in config.env_queue:
            self._check_event(event)
        if isinstance(main, R.LoopProc) and loop_msg is not None:
            self._match("TC-System", page_msg, loop_msg, "page message type")
            self._match("TC-System", subs_msg, loop_msg, "subscription message type")


def check_configuration(config: R.Configuration, globals_types: dict | None = None) -> None:
    ConfigChecker(globals_types).check_configuration(config)
