import random

import pytest
from hypothesis import given, strategies as st

from gramtrace import (GrammarError, MalformedTrace, Tag, TraceNode, collect_markup,
                       derivation_count, enumerate_all, enumerate_derivations,
                       linearize_trace, parse_grammar, parse_linearized,
                       sample_derivation, serialize_trace, symbol_set)
from gramtrace.grammar import join_terminals

from conftest import random_grammar

GREET_TRACE = TraceNode("greet", (
    TraceNode("greet back", (TraceNode("use interlocutor first name"),)),
))

ANSWER_TRACE = TraceNode("answer", (
    TraceNode("answer how are you", (
        TraceNode("answer how are you neutrally"),
        TraceNode("ask", (
            TraceNode("ask how are you", (TraceNode("make small talk"),)),
        )),
    )),
))

WEATHER_TRACE = TraceNode("agree", (
    TraceNode("agree about the weather", (
        TraceNode("agree that the weather is good", (
            TraceNode("say something positive"),
            TraceNode("say something positive"),
        )),
    )),
))


def grammar_from(symbols, rules):
    import json
    return parse_grammar(json.dumps({"symbols": symbols, "rules": rules}))


class TestParseGrammar:
    def test_g0_counts(self, g0):
        assert len(g0.symbols) == 2
        assert sum(len(r) for r in g0.rules.values()) == 4

    def test_undefined_symbol_named(self):
        with pytest.raises(GrammarError, match="smalltalk"):
            grammar_from({"a": {}}, [{"lhs": "a", "rhs": [{"nt": "smalltalk"}]}])

    def test_self_recursion_rejected(self):
        with pytest.raises(GrammarError, match="recursion"):
            grammar_from({"a": {"top_level": True}},
                         [{"lhs": "a", "rhs": [{"nt": "a"}]},
                          {"lhs": "a", "rhs": [{"t": "x"}]}])

    def test_mutual_recursion_rejected(self):
        with pytest.raises(GrammarError, match="recursion"):
            grammar_from({"a": {}, "b": {}},
                         [{"lhs": "a", "rhs": [{"nt": "b"}]},
                          {"lhs": "b", "rhs": [{"nt": "a"}]},
                          {"lhs": "b", "rhs": [{"t": "x"}]}])

    def test_non_positive_weight(self):
        with pytest.raises(GrammarError, match="non-positive weight"):
            grammar_from({"a": {}}, [{"lhs": "a", "rhs": [{"t": "x"}], "weight": 0}])

    def test_syntax_error_reports_position(self):
        with pytest.raises(GrammarError, match=r"line \d+"):
            parse_grammar("{\n  broken")

    def test_symbol_without_rules(self):
        with pytest.raises(GrammarError, match="no production rules"):
            grammar_from({"a": {}, "b": {}}, [{"lhs": "a", "rhs": [{"t": "x"}]}])

    def test_paren_in_name_rejected(self):
        with pytest.raises(GrammarError, match="parenthesis"):
            grammar_from({"a(b": {}}, [{"lhs": "a(b", "rhs": [{"t": "x"}]}])

    def test_empty_terminal_rejected(self):
        with pytest.raises(GrammarError, match="empty terminal"):
            grammar_from({"a": {}}, [{"lhs": "a", "rhs": [{"t": "  "}]}])

    def test_underscore_collision_rejected(self):
        with pytest.raises(GrammarError, match="collide"):
            grammar_from({"a b": {}, "a_b": {}},
                         [{"lhs": "a b", "rhs": [{"t": "x"}]},
                          {"lhs": "a_b", "rhs": [{"t": "y"}]}])


class TestDerivationCount:
    def test_g0(self, g0):
        assert derivation_count(g0, "greet") == 2

    def test_product_rule(self):
        g = grammar_from({"s": {"top_level": True}, "a": {}},
                         [{"lhs": "s", "rhs": [{"nt": "a"}, {"nt": "a"}]},
                          {"lhs": "a", "rhs": [{"t": "x"}]},
                          {"lhs": "a", "rhs": [{"t": "y"}]}])
        assert derivation_count(g, "s") == 4

    def test_undefined_symbol(self, g0):
        with pytest.raises(GrammarError, match="undefined symbol"):
            derivation_count(g0, "nope")

    def test_matches_enumeration_on_random_grammars(self):
        for seed in range(40):
            g = random_grammar(seed)
            for symbol in g.symbols:
                assert derivation_count(g, symbol) == sum(1 for _ in enumerate_derivations(g, symbol))


class TestEnumerate:
    def test_g0_exact(self, g0):
        derivations = list(enumerate_derivations(g0, "greet"))
        assert [d.utterance for d in derivations] == ["hello", "hi"]
        assert all(d.trace == TraceNode("greet") for d in derivations)

    def test_two_by_two(self):
        g = grammar_from({"s": {"top_level": True}, "a": {}},
                         [{"lhs": "s", "rhs": [{"nt": "a"}, {"nt": "a"}]},
                          {"lhs": "a", "rhs": [{"t": "x"}]},
                          {"lhs": "a", "rhs": [{"t": "y"}]}])
        assert [d.utterance for d in enumerate_derivations(g, "s")] == ["x x", "x y", "y x", "y y"]

    def test_bundled_stream_length_matches_count(self, desk_grammar):
        total = sum(derivation_count(desk_grammar, s) for s in desk_grammar.top_level)
        assert sum(1 for _ in enumerate_all(desk_grammar)) == total

    def test_markup_matches_collect_markup(self, desk_grammar):
        for derivation in enumerate_derivations(desk_grammar, "answer"):
            assert derivation.markup == collect_markup(derivation.trace, desk_grammar)

    def test_deterministic_streams(self, desk_grammar):
        first = [serialize_trace(d.trace) + d.utterance for d in enumerate_derivations(desk_grammar, "greet")]
        second = [serialize_trace(d.trace) + d.utterance for d in enumerate_derivations(desk_grammar, "greet")]
        assert first == second


class TestSample:
    def test_heavy_weight_dominates(self):
        g = grammar_from({"s": {"top_level": True}},
                         [{"lhs": "s", "rhs": [{"t": "light"}], "weight": 1},
                          {"lhs": "s", "rhs": [{"t": "heavy"}], "weight": 1e9}])
        rng = random.Random(5)
        pulls = [sample_derivation(g, "s", rng).utterance for _ in range(10_000)]
        assert pulls.count("heavy") == 10_000

    def test_weighted_frequencies_chi_square(self):
        g = grammar_from({"s": {"top_level": True}},
                         [{"lhs": "s", "rhs": [{"t": "a"}], "weight": 1},
                          {"lhs": "s", "rhs": [{"t": "b"}], "weight": 3}])
        rng = random.Random(17)
        pulls = [sample_derivation(g, "s", rng).utterance for _ in range(10_000)]
        observed = {u: pulls.count(u) for u in ("a", "b")}
        expected = {"a": 2500.0, "b": 7500.0}
        chi2 = sum((observed[u] - expected[u]) ** 2 / expected[u] for u in expected)
        assert chi2 < 6.63          # 99th percentile of chi-square with 1 dof

    def test_single_rule_grammar_equals_enumeration(self):
        g = grammar_from({"s": {"top_level": True}, "a": {}},
                         [{"lhs": "s", "rhs": [{"t": "go"}, {"nt": "a"}]},
                          {"lhs": "a", "rhs": [{"t": "now"}]}])
        expected = list(enumerate_derivations(g, "s"))[0]
        for seed in range(5):
            assert sample_derivation(g, "s", random.Random(seed)) == expected

    def test_same_seed_same_derivation(self, desk_grammar):
        a = sample_derivation(desk_grammar, "greet", random.Random(42))
        b = sample_derivation(desk_grammar, "greet", random.Random(42))
        assert a == b

    def test_depth_guard(self):
        symbols = {f"s{i}": {} for i in range(60)}
        symbols["s59"]["top_level"] = True
        rules = [{"lhs": "s0", "rhs": [{"t": "x"}]}]
        rules += [{"lhs": f"s{i}", "rhs": [{"nt": f"s{i - 1}"}]} for i in range(1, 60)]
        g = grammar_from(symbols, rules)
        with pytest.raises(GrammarError, match="depth limit"):
            sample_derivation(g, "s59", random.Random(0))
        assert sum(1 for _ in enumerate_derivations(g, "s59")) == 1


class TestMarkup:
    def test_paper_greet_markup(self):
        g = grammar_from(
            {"greet": {"annotations": ["speech_act:greeting"], "top_level": True},
             "greet back": {"annotations": ["move:greet_back"]},
             "use interlocutor first name": {"annotations": ["style:address_by_name"]}},
            [{"lhs": "greet", "rhs": [{"nt": "greet back"}]},
             {"lhs": "greet back", "rhs": [{"nt": "use interlocutor first name"}]},
             {"lhs": "use interlocutor first name", "rhs": [{"t": "Andrew"}]}])
        markup = collect_markup(GREET_TRACE, g)
        assert markup == {Tag("speech_act", "greeting"), Tag("move", "greet_back"),
                          Tag("style", "address_by_name")}

    def test_unannotated_symbol_empty(self, g0):
        assert collect_markup(TraceNode("greet"), g0) == frozenset()

    def test_duplicate_tags_collapse(self):
        g = grammar_from(
            {"a": {"annotations": ["x:y"], "top_level": True}, "b": {"annotations": ["x:y"]}},
            [{"lhs": "a", "rhs": [{"nt": "b"}]}, {"lhs": "b", "rhs": [{"t": "t"}]}])
        trace = TraceNode("a", (TraceNode("b"),))
        assert collect_markup(trace, g) == {Tag("x", "y")}

    def test_unknown_symbol_raises(self, g0):
        with pytest.raises(GrammarError, match="unknown symbol"):
            collect_markup(TraceNode("mystery"), g0)


class TestSerialize:
    def test_paper_greet_trace(self):
        assert serialize_trace(GREET_TRACE) == "greet( greet back( use interlocutor first name ) )"

    def test_leaf(self):
        assert serialize_trace(TraceNode("say something positive")) == "say something positive"

    def test_paper_weather_trace(self):
        assert serialize_trace(WEATHER_TRACE) == (
            "agree( agree about the weather( agree that the weather is good"
            "( say something positive ) ( say something positive ) ) )")

    def test_paper_answer_trace_structure(self):
        rendered = serialize_trace(ANSWER_TRACE)
        assert rendered == ("answer( answer how are you( answer how are you neutrally )"
                            " ( ask( ask how are you( make small talk ) ) ) )")
        paper_print = ("answer (answer how are you (answer how are you neutrally)"
                       " (ask (ask how are you (make small talk) ) ) )")
        assert rendered.replace(" ", "") == paper_print.replace(" ", "")


class TestLinearize:
    def test_greet_trace_seven_tokens(self):
        assert linearize_trace(GREET_TRACE) == [
            "greet", "(", "greet_back", "(", "use_interlocutor_first_name", ")", ")"]

    def test_leaf_single_token(self):
        assert linearize_trace(TraceNode("greet")) == ["greet"]

    def test_roundtrip_bundled(self, desk_grammar):
        for derivation in enumerate_all(desk_grammar):
            tokens = linearize_trace(derivation.trace)
            assert parse_linearized(tokens, desk_grammar) == derivation.trace

    def test_unbalanced_prefix(self, g0):
        verdict = parse_linearized(["greet", "("], g0)
        assert isinstance(verdict, MalformedTrace)
        assert verdict.prefix == TraceNode("greet")

    def test_unknown_symbol_token(self, g0):
        verdict = parse_linearized(["blorp"], g0)
        assert isinstance(verdict, MalformedTrace)
        assert verdict.prefix is None

    def test_empty_sequence(self, g0):
        verdict = parse_linearized([], g0)
        assert isinstance(verdict, MalformedTrace)
        assert verdict.prefix is None

    def test_strict_mode_checks_rules(self, desk_grammar):
        bad = ["greet", "(", "make_small_talk", ")"]     # no greet rule yields that child
        verdict = parse_linearized(bad, desk_grammar, strict=True)
        assert isinstance(verdict, MalformedTrace)
        good = ["greet", "(", "greeting_word", ")"]
        assert parse_linearized(good, desk_grammar, strict=True) == TraceNode(
            "greet", (TraceNode("greeting word"),))


@st.composite
def bundled_traces(draw, names):
    """Arbitrary trees over bundled symbol names (not necessarily rule-valid)."""
    name = draw(st.sampled_from(names))
    depth = draw(st.integers(0, 2))
    if depth == 0:
        return TraceNode(name)
    children = draw(st.lists(bundled_traces(names=names), min_size=1, max_size=3))
    return TraceNode(name, tuple(children))


class TestProperties:
    @given(data=st.data())
    def test_linearize_parse_roundtrip(self, data, desk_grammar):
        trace = data.draw(bundled_traces(names=sorted(desk_grammar.symbols)))
        assert parse_linearized(linearize_trace(trace), desk_grammar) == trace

    def test_serialize_injective_on_bundled(self, desk_grammar):
        seen = {}
        for derivation in enumerate_all(desk_grammar):
            rendered = serialize_trace(derivation.trace)
            assert seen.setdefault(rendered, derivation.trace) == derivation.trace

    def test_join_terminals(self):
        assert join_terminals(["Oh", ",", "greetings", ",", "Andrew", "."]) == "Oh, greetings, Andrew."
        assert join_terminals(["I'm", "alright", ".", "Yourself", "?"]) == "I'm alright. Yourself?"
        assert join_terminals(["hello"]) == "hello"


class TestSymbolSet:
    def test_greet_trace(self):
        assert symbol_set(GREET_TRACE) == {"greet", "greet back", "use interlocutor first name"}

    def test_leaf_singleton(self):
        assert symbol_set(TraceNode("greet")) == {"greet"}

    def test_repeated_symbol_once(self):
        assert symbol_set(WEATHER_TRACE) == {
            "agree", "agree about the weather", "agree that the weather is good",
            "say something positive"}
