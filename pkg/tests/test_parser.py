import pytest

from mvu import syntax as S
from mvu.check import check_program, check_term
from mvu.harness import CORPUS, load_program
from mvu.parser import (
    DText,
    MvuParseError,
    desugar_attr_seq,
    desugar_html,
    desugar_html_seq,
    parse_program,
    parse_term,
)
from mvu.pretty import pretty_term
from mvu.syntax import alpha_equal


def test_empty_element():
    t = parse_term('html <div></div>')
    assert t == S.HtmlTag("div", S.ATTR_EMPTY, S.HTML_EMPTY)


def test_self_closing_element():
    assert parse_term('html <br/>') == S.HtmlTag("br", S.ATTR_EMPTY, S.HTML_EMPTY)


def test_unclosed_tag_is_an_error():
    with pytest.raises(MvuParseError):
        parse_term('html <div>')


def test_mismatched_tags_are_an_error():
    with pytest.raises(MvuParseError) as e:
        parse_term('html <div></span>')
    assert "mismatched" in str(e.value)


def test_parse_error_carries_position():
    with pytest.raises(MvuParseError) as e:
        parse_program("type = ;")
    assert e.value.line == 1 and e.value.col >= 1


def test_empty_children_desugar_to_html_empty():
    assert desugar_html_seq([]) == S.HTML_EMPTY


def test_text_desugars_to_html_text():
    assert desugar_html(DText("k")) == S.HtmlText(S.Str("k"))


def test_sibling_sequence_folds_with_append():
    t = parse_term('html <p></p><p></p>')
    assert isinstance(t, S.Append)
    assert t.left == S.HtmlTag("p", S.ATTR_EMPTY, S.HTML_EMPTY)


def test_empty_attr_list_desugars_to_attr_empty():
    assert desugar_attr_seq([]) == S.ATTR_EMPTY
    t = parse_term('html <div></div>')
    assert t.attrs == S.ATTR_EMPTY


def test_literal_attribute():
    t = parse_term('html <input type="text"/>')
    assert t.attrs == S.AttrTerm("type", S.Str("text"))


def test_handler_attribute_needs_antiquote():
    with pytest.raises(MvuParseError):
        parse_term('html <button onClick="nope"/>')


def test_handler_attribute_desugars_to_attr():
    t = parse_term('html <input onInput={fun(s: String) { s }}/>')
    assert isinstance(t.attrs, S.AttrTerm)
    assert t.attrs.key == "onInput"
    assert isinstance(t.attrs.body, S.Lam)


def test_plain_attribute_antiquote_body():
    t = parse_term('html <input value={"v"}/>')
    assert t.attrs == S.AttrTerm("value", S.Str("v"))


def test_intro_view_desugaring():
    """The reverse-string view desugars to the monoidal core term."""
    prog = load_program("reverse-string")
    view = prog.globals["view"].term
    expected_prog = parse_program('''
type Model = (contents: String);
type Message = [| UpdateBox: String |];
let view : Model -> Html(Message) = fun(model: Model) {
  htmlTag("input",
          attr("type", "text") ++ attr("value", model) ++
          attr("onInput", fun(str: String) { str }),
          htmlEmpty)
  ++ htmlTag("div", attrEmpty, htmlText(reverseString model))
};
''')
    assert alpha_equal(view, expected_prog.globals["view"].term)


def test_records_and_variants_encode_in_label_order():
    prog = parse_program('''
type R = (zeta: Int, alpha: String);
type V = [| Second: Int | First |];
let r : R = (zeta = 3, alpha = "a");
let mk : Int -> V = fun(n: Int) { Second(n) };
let first : V = First;
main ((), fun(m: 1) { html <div></div> }, fun(p: (1, 1)) { let (msg, m) = p in m })
''')
    # fields sort alphabetically: alpha before zeta
    assert prog.globals["r"].term == S.Pair(S.Str("a"), S.IntLit(3))
    # constructors sort alphabetically: First = inl, Second = inr
    assert prog.globals["first"].term == S.Inl(S.UNIT_TERM, S.INT)
    body = prog.globals["mk"].term.body
    assert isinstance(body, S.Inr)


def test_projection_of_single_field_record_is_transparent():
    prog = load_program("reverse-string")
    assert prog.aliases["Model"] == S.STRING


def test_corpus_round_trips_through_pretty_printer():
    for name in CORPUS:
        prog = load_program(name)
        for gname, g in prog.globals.items():
            printed = pretty_term(g.term)
            reparsed = parse_term(printed, globals_from=prog)
            assert alpha_equal(g.term, reparsed), f"{name}:{gname}"
        if prog.main is not None:
            printed = pretty_term(prog.main)
            assert alpha_equal(prog.main, parse_term(printed, globals_from=prog))


def test_desugaring_preserves_typing_across_round_trip():
    """Desugared terms typecheck at their declared types, before and after a
    pretty-print round trip."""
    for name in CORPUS:
        prog = load_program(name)
        check_program(prog)
        gtypes = {n: g.declared for n, g in prog.globals.items()}
        for gname, g in prog.globals.items():
            reparsed = parse_term(pretty_term(g.term), globals_from=prog)
            ty, used = check_term(reparsed, globals_types=gtypes)
            assert not used
            from mvu.check import join_types
            join_types(ty, g.declared)


def test_duplicate_definition_rejected():
    with pytest.raises(MvuParseError):
        parse_program("let a : Int = 1; let a : Int = 2;")


def test_cyclic_alias_rejected():
    with pytest.raises(MvuParseError) as e:
        parse_program("type A = (Int, B); type B = (Int, A);")
    assert "cyclic" in str(e.value)


def test_unknown_constructor_rejected():
    with pytest.raises(MvuParseError):
        parse_program("main Nope(3)")


def test_sequencing_is_let_encoded():
    t = parse_term("(); 3")
    assert isinstance(t, S.LetPair)


def test_random_terms_round_trip_through_printer():
    from hypothesis import given, settings

    from conftest import term_strategy

    @settings(max_examples=300, deadline=None)
    @given(term_strategy())
    def check(t):
        closed = S.Lam("x", S.UNIT, S.Lam("y", S.UNIT, S.Lam("z", S.UNIT, t)))
        printed = pretty_term(closed)
        assert alpha_equal(closed, parse_term(printed))

    check()
