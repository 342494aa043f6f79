import pytest

from mvu import runtime as R
from mvu import syntax as S
from mvu.check import MvuTypeError, dual_session
from mvu.harness import Driver, load_program, parse_trace, run_trace
from mvu.parser import parse_program, parse_session, parse_term
from mvu.rtcheck import check_configuration
from mvu.runtime import (
    Configuration,
    HALTED,
    IDLE_NO_EVENTS,
    MAIN_BLOCKED,
    MsgThread,
    Runtime,
    ServerProc,
    classify,
    decompose,
    detect_error_process,
    initial_configuration,
    step_term,
)


RT = Runtime()


def _step(src: str):
    return step_term(parse_term(src), {})


def test_beta_step():
    out = _step("(fun(x: Int) { x }) 5")
    assert out[0] == S.IntLit(5)
    assert out[1] == "E-Lam"


def test_try_success_step():
    out = _step("try 5 as x in intAdd(x, 1) otherwise 0")
    assert out[1] == "E-Try"


def test_receive_is_a_stuck_session_action():
    t = S.ConstApp(S.Const.RECEIVE, S.Name("c"))
    out = step_term(t, {})
    assert out[0] == "stuck" and out[1] == "receive"
    assert RT.blocked_on(t) == ("receive", "c")


def test_raise_reports_frames_split_at_innermost_try():
    t = parse_term("try (intAdd(raise, 1)) as x in x otherwise 9")
    frames, focus = decompose(t)
    assert focus == ("raise",)
    kinds = [f[0] for f in frames]
    assert "try" in kinds
    assert kinds.index("try") < len(kinds) - 1  # frames inside the handler


def _blocked_config(left_src: str, right_src: str, sa: str):
    """Two auxiliary threads over one channel pair c0/d0, plus an idle main."""
    prog = parse_program("""
type M0 = 1;
main ((), fun(m: 1) { html <div></div> }, fun(p: (1, 1)) { let (msg, m) = p in m })
""")
    driver = Driver(prog)
    driver.settle()
    config = driver.config
    sess = parse_session(sa)
    left = parse_term(left_src.replace("CH", "#c0"))
    right = parse_term(right_src.replace("CH", "#d0"))
    procs = config.procs + (MsgThread(left, 0, tid=10), MsgThread(right, 0, tid=11))
    return driver, config.replace(
        procs=procs, channels=(("c0", "d0"),),
        channel_types={"c0": sess, "d0": dual_session(sess)})


def test_error_process_send_send():
    driver, config = _blocked_config("send(1, CH)", "send(2, CH)", "!Int.End")
    assert detect_error_process(driver.runtime, config) is True


def test_send_receive_is_not_an_error_and_comms():
    driver, config = _blocked_config("send(1, CH)", "receive CH", "!Int.End")
    assert detect_error_process(driver.runtime, config) is False
    result = driver.runtime.step(config)
    assert result.rule == "E-Comm"


def test_error_process_receive_close():
    driver, config = _blocked_config("receive CH", "close(CH)", "?Int.End")
    assert detect_error_process(driver.runtime, config) is True


def test_close_close_succeeds_and_removes_the_pair():
    driver, config = _blocked_config("close(CH)", "close(CH)", "End")
    assert detect_error_process(driver.runtime, config) is False
    result = driver.runtime.step(config)
    assert result.rule == "E-Close"
    assert result.config.channels == ()


def test_cancel_then_send_raises_via_zap():
    driver, config = _blocked_config("send(1, CH)", "cancel(CH)", "!Int.End")
    r1 = driver.runtime.step(config)
    assert r1.rule == "E-Cancel"
    assert "d0" in r1.config.zappers
    # the canceller's unit value is delivered first; the blocked sender
    # then raises against the cancelled peer
    rules = []
    config = r1.config
    while "E-SendZap" not in rules and len(rules) < 50:
        r = driver.runtime.step(config)
        assert r is not None, rules
        rules.append(r.rule)
        config = r.config
    assert "E-SendZap" in rules
    # after both endpoints are cancelled the pair is garbage collected
    assert config.channels == ()


def test_zap_of_discarded_payload_names():
    # sending a pair that contains another endpoint: the payload is zapped too
    prog = parse_program("""
main ((), fun(m: 1) { html <div></div> }, fun(p: (1, 1)) { let (msg, m) = p in m })
""")
    driver = Driver(prog)
    driver.settle()
    sess = parse_session("!(!Int.End).End")
    inner = parse_session("!Int.End")
    left = S.ConstApp(S.Const.SEND, S.Pair(S.Name("c1"), S.Name("c0")))
    config = driver.config.replace(
        procs=driver.config.procs + (MsgThread(left, 0, tid=5),),
        channels=(("c0", "d0"), ("c1", "d1")),
        channel_types={"c0": sess, "d0": dual_session(sess),
                       "c1": inner, "d1": dual_session(inner)},
        zappers=("d0",))
    result = driver.runtime.step(config)
    assert result.rule == "E-SendZap"
    # c0 and the payload's c1 are zapped; the fully-cancelled (c0, d0) pair
    # is then garbage-collected eagerly, leaving only c1's zapper
    assert set(result.config.zappers) == {"c1"}
    assert result.config.channels == (("c1", "d1"),)


def test_zap_of_values_and_states():
    from mvu.runtime import Rendering, zap_of

    assert zap_of(S.UNIT_TERM) == []
    assert zap_of(S.Pair(S.Name("c"), S.Name("d"))) == ["c", "d"]
    # a discarded rendering state cancels its model, its command, and the
    # names in the aborted context, per the cancellation table
    vm = S.Name("c1")
    vc = S.CmdSpawn(S.ConstApp(S.Const.SEND, S.Pair(S.UNIT_TERM, S.Name("c2"))))
    term = S.App(S.Lam("x", S.UNIT, S.Var("x")), S.Name("c3"))
    assert zap_of(Rendering(vm, vc, term)) == ["c1", "c2", "c3"]


def test_classify_idle_no_events():
    prog = load_program("reverse-string")
    report = run_trace(prog, [])
    assert report.classification.case == IDLE_NO_EVENTS


def test_classify_deadlock_main_blocked():
    prog = load_program("deadlock")
    report = run_trace(prog, parse_trace('{"target": "tag:button", "event": "click", "payload": null}'))
    assert report.classification.case == MAIN_BLOCKED
    kinds = {t[1] for t in report.classification.threads}
    assert kinds == {"blocked-receive"}


def test_classify_halted_after_unhandled_exception():
    prog = parse_program("""
type S0 = !Int. End;
type Model = [| Holding: S0 |];
type Message = [| Tick |];
let view : 1 -> Html(Message) = fun(u: 1) {
  html <button onClick={fun(u2: 1) { Tick }}>t</button>
};
let update : (Message, Model) -> Transition(Model, Message) =
  fun(msg: Message, m: Model) { let Holding(c) = m in cancel(c); raise };
let extract : Model -> (Model, 1) = fun(m: Model) { (m, ()) };
main let (c, d) = new[S0]() in
  (Holding(c), view, update, extract, cmdEmpty,
   linfun(u: 1) { let (n, d2) = receive d in close(d2) })
""")
    report = run_trace(prog, parse_trace('{"target": "tag:button", "event": "click", "payload": null}'),
                       check_every_step=True)
    assert report.classification.case == HALTED
    assert report.rules["E-RaiseUMain"] == 1
    # cancelling the model's endpoint makes the server's receive raise too,
    # and the fully-cancelled pair is collected: nothing but halt remains
    assert report.rules["E-Cancel"] == 1
    assert report.rules["E-RecvZap"] == 1
    assert report.rules["E-RaiseUServer"] == 1
    assert report.classification.threads == []


def test_handler_exception_is_caught_by_innermost_try():
    prog = parse_program("""
type Model = [| Going |];
type Message = [| Tick | Nope |];
let view : 1 -> Html(Message) = fun(u: 1) {
  html <button onClick={fun(u2: 1) { try raise as x in Tick otherwise Nope }}>t</button>
};
let update : (Message, Model) -> Transition(Model, Message) =
  fun(msg: Message, m: Model) { noTransition(Going, cmdEmpty) };
let extract : Model -> (Model, 1) = fun(m: Model) { (m, ()) };
main (Going, view, update, extract, cmdEmpty, fun(u: 1) { () })
""")
    report = run_trace(prog, parse_trace('{"target": "tag:button", "event": "click", "payload": null}'),
                       check_every_step=True)
    assert report.rules["E-RaiseH"] == 1
    assert report.classification.case == IDLE_NO_EVENTS


def test_version_safety_no_cross_version_delivery():
    prog = load_program("pingpong")
    trace = parse_trace(
        '{"target": "tag:button", "event": "click", "payload": null, "settle": false}\n'
        '{"target": "tag:button", "event": "click", "payload": null}')
    report = run_trace(prog, trace, check_every_step=True)
    assert report.rules["E-Discard"] == 1
    assert report.classification.case == IDLE_NO_EVENTS


def test_two_main_threads_is_a_flag_error():
    prog = load_program("reverse-string")
    driver = Driver(prog)
    driver.settle()
    config = driver.config
    main = config.main()
    config2 = config.replace(procs=config.procs + (main,))
    with pytest.raises(MvuTypeError) as e:
        check_configuration(config2, {n: g.declared for n, g in prog.globals.items()})
    assert e.value.rule == "TP-Par"


def test_initial_configuration_checks():
    for name in ("reverse-string", "pingpong", "mouse", "deadlock"):
        prog = load_program(name)
        from mvu.check import check_program

        info = check_program(prog)
        config = initial_configuration(info.mode, prog.resolved_main())
        check_configuration(config, {n: g.declared for n, g in prog.globals.items()})


def test_corrupted_update_function_detected():
    """Negative control: an ill-typed function state smuggled past the
    checker is caught by the configuration checker."""
    prog = load_program("reverse-string")
    driver = Driver(prog)
    driver.settle()
    config = driver.config
    main = config.main()
    bad_funs = R.CoreFuns(main.funs.view, S.Lam("x", S.INT, S.Var("x")), None)
    bad_main = R.LoopProc(main.thread, bad_funs, main.version, tid=main.tid)
    config2 = config.replace(procs=driver.runtime._replace_proc(config.procs, main, bad_main))
    with pytest.raises(MvuTypeError):
        check_configuration(config2, {n: g.declared for n, g in prog.globals.items()})


def test_events_queued_after_halt_are_consumed_and_discarded():
    """E-Evt still fires under a halted main (version 0); the spawned
    value thread is then discarded, so no events linger at quiescence."""
    prog = parse_program("""
type S0 = !Int. End;
type Model = [| Holding: S0 |];
type Message = [| Tick |];
let view : 1 -> Html(Message) = fun(u: 1) {
  html <button onClick={fun(u2: 1) { Tick }}>t</button>
};
let update : (Message, Model) -> Transition(Model, Message) =
  fun(msg: Message, m: Model) { let Holding(c) = m in cancel(c); raise };
let extract : Model -> (Model, 1) = fun(m: Model) { (m, ()) };
main let (c, d) = new[S0]() in
  (Holding(c), view, update, extract, cmdEmpty,
   linfun(u: 1) { let (n, d2) = receive d in close(d2) })
""")
    click = '{"target": "tag:button", "event": "click", "payload": null}'
    report = run_trace(prog, parse_trace(click + "\n" + click), check_every_step=True)
    assert report.classification.case == HALTED
    assert report.rules["E-DiscardHalt"] == 1  # the post-halt click's thread
    assert report.rules["E-Evt"] == 2


def test_session_delegation_through_initial_command():
    """An endpoint is sent over another session (delegation): the payload
    name migrates between threads under per-step checking, the delegated
    endpoint is then used by its new owner, and the reply comes back
    through the run tuple's initial command."""
    prog = parse_program("""
type Inner = !Int. End;
type Outer = !Inner. End;
type Model = [| Done: Int | Waiting |];
type Message = [| Got: Int |];

let view : 1 -> Html(Message) = fun(u: 1) { html <div>d</div> };
let update : (Message, Model) -> Transition(Model, Message) =
  fun(msg: Message, m: Model) {
    let Got(n) = msg in
    case m {
      Done(k) -> noTransition(Done(k), cmdEmpty);
      Waiting -> noTransition(Done(n), cmdEmpty)
    }
  };
let extract : Model -> (Model, 1) = fun(m: Model) { (m, ()) };

main let (o, od) = new[Outer]() in
     let (i, idp) = new[Inner]() in
     (Waiting, view, update, extract,
      cmdSpawn(
        let o2 = send(i, o) in
        let u = close(o2) in
        let (n, idp2) = receive idp in
        let u2 = close(idp2) in
        Got(n)),
      linfun(u: 1) {
        let (got, od2) = receive od in
        let u1 = close(od2) in
        let got2 = send(7, got) in
        close(got2)
      })
""")
    report = run_trace(prog, [], check_every_step=True)
    assert report.classification.case == IDLE_NO_EVENTS
    from mvu.harness import final_model

    assert final_model(report.final_config) == S.Inl(S.IntLit(7), S.UNIT)
    assert report.rules["E-Comm"] == 2   # the delegation, then the integer
    assert report.rules["E-Close"] == 2  # both sessions completed
    assert report.final_config.channels == ()
    assert report.final_config.zappers == ()


def test_subscriptions_value_follows_the_model():
    """The update cycle installs the freshly computed subscription value:
    once the model passes the threshold, later environment events dispatch
    nothing."""
    prog = parse_program("""
type Model = (Int, Int);
type Message = [| Coords: (Int, Int) |];

let view : Model -> Html(Message) = fun(m: Model) {
  let (x, y) = m in html <div>{htmlText(intToString(x))}</div>
};
let update : (Message, Model) -> Model =
  fun(msg: Message, m: Model) { let Coords(p) = msg in p };
let subscriptions : Model -> Sub(Message) = fun(m: Model) {
  let (x, y) = m in
  if intLt(x, 5) then sub("onMouseMove", fun(p: (Int, Int)) { Coords(p) })
  else subEmpty
};
main ((0, 0), view, update, subscriptions)
""")
    trace = parse_trace(
        '{"target": "env", "event": "mouseMove", "payload": [10, 1]}\n'
        '{"target": "env", "event": "mouseMove", "payload": [2, 2]}\n')
    report = run_trace(prog, trace, check_every_step=True)
    # the first move crossed the threshold, so the second dispatched nothing
    from mvu.harness import final_model

    assert final_model(report.final_config) == S.Pair(S.IntLit(10), S.IntLit(1))
    assert report.rules["E-EvtS"] == 2
    assert report.rules["EP-Handle"] == 1
    assert report.final_config.subs == S.SUB_EMPTY


def test_identity_update_leaves_model_unchanged():
    prog = parse_program("""
type Message = [| Poke |];
let view : Int -> Html(Message) = fun(m: Int) {
  html <button onClick={fun(u: 1) { Poke }}>b</button>
};
let update : (Message, Int) -> Int = fun(msg: Message, m: Int) { m };
main (41, view, update)
""")
    report = run_trace(prog, parse_trace('{"target": "tag:button", "event": "click", "payload": null}'),
                       check_every_step=True)
    from mvu.harness import final_model

    assert final_model(report.final_config) == S.IntLit(41)
    assert report.rules["EP-Handle"] == 1


def test_discard_replaces_stale_thread_with_zappers():
    """A stale value thread carrying an endpoint is zapped, not delivered."""
    prog = load_program("pingpong")
    driver = Driver(prog)
    driver.settle()
    config = driver.config
    sess = parse_session("!Int.End")
    stale = MsgThread(S.Name("c9"), version=99, tid=50)
    holder = MsgThread(S.ConstApp(S.Const.RECEIVE, S.Name("d9")), version=99, tid=51)
    config = config.replace(
        procs=config.procs + (stale, holder),
        channels=config.channels + (("c9", "d9"),),
        channel_types={**config.channel_types, "c9": sess,
                       "d9": __import__("mvu.check", fromlist=["dual_session"]).dual_session(sess)})
    result = driver.runtime.step(config)
    assert result.rule == "E-Discard"
    assert "c9" in result.config.zappers
    assert all(p is not stale for p in result.config.procs)


def test_raise_handled_by_innermost_try_zaps_discarded_context():
    """A receive against a cancelled peer raises inside a try; the handler
    catches it and the aborted context's other endpoint is cancelled."""
    prog = parse_program("""
main ((), fun(m: 1) { html <div></div> }, fun(p: (1, 1)) { let (msg, m) = p in m })
""")
    driver = Driver(prog)
    driver.settle()
    sa = parse_session("?Int.End")
    sb = parse_session("!Int.End")
    # try (receive c, d-endpoint) as x in <consume x> otherwise ()
    attempt = S.Pair(S.ConstApp(S.Const.RECEIVE, S.Name("c7")), S.Name("c8"))
    succ = S.LetPair("v", "rest", S.Var("x"),
                     S.LetPair("n", "done", S.Var("v"),
                               S.LetPair("u1", "u2",
                                         S.Pair(S.ConstApp(S.Const.CLOSE, S.Var("done")),
                                                S.ConstApp(S.Const.CANCEL, S.Var("rest"))),
                                         S.UNIT_TERM)))
    thread = MsgThread(S.Try(attempt, "x", succ, S.UNIT_TERM), 0, tid=30)
    # a stale-version thread may carry any type (it would be discarded as a
    # value; blocked it just holds the endpoint)
    holder = MsgThread(S.ConstApp(S.Const.RECEIVE, S.Name("d8")), 7, tid=31)
    config = driver.config.replace(
        procs=driver.config.procs + (thread, holder),
        channels=(("c7", "d7"), ("c8", "d8")),
        channel_types={"c7": sa, "d7": dual_session(sa),
                       "c8": sb, "d8": dual_session(sb)},
        zappers=("d7",))
    checker_globals = {n: g.declared for n, g in prog.globals.items()}
    check_configuration(config, checker_globals)
    rules = []
    for _ in range(10):
        result = driver.runtime.step(config)
        if result is None:
            break
        config = result.config
        rules.append(result.rule)
        check_configuration(config, checker_globals)  # preservation at each step
        if result.rule == "EP-Handle":
            break
    assert "E-RecvZap" in rules
    assert "E-RaiseH" in rules
    # the aborted pure context held c8: it must now be cancelled
    assert "c8" in config.zappers


def test_linearity_assertion_catches_duplicated_names():
    prog = load_program("reverse-string")
    driver = Driver(prog)
    driver.settle()
    sa = parse_session("!Int.End")
    t1 = MsgThread(S.ConstApp(S.Const.SEND, S.Pair(S.IntLit(1), S.Name("c5"))), 0, tid=40)
    t2 = MsgThread(S.ConstApp(S.Const.SEND, S.Pair(S.IntLit(2), S.Name("c5"))), 0, tid=41)
    config = driver.config.replace(
        procs=driver.config.procs + (t1, t2),
        channels=(("c5", "d5"),),
        channel_types={"c5": sa, "d5": dual_session(sa)},
        zappers=("d5",))
    from mvu.runtime import MvuRuntimeError

    with pytest.raises(MvuRuntimeError):
        driver.runtime.assert_name_linearity(config)


def test_gc_removes_finished_server_threads():
    prog = load_program("naive-fib")
    driver = Driver(prog)
    driver.settle()
    assert not any(isinstance(p, ServerProc) for p in driver.config.procs)
