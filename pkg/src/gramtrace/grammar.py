"""Annotated probabilistic context-free grammars and their derivation traces.

A grammar file is a JSON document with two top-level keys:

``symbols``
    object mapping each nonterminal name to ``{"annotations": ["tagset:value",
    ...], "top_level": bool}``.  Both keys are optional per symbol.
``rules``
    list of ``{"lhs": name, "rhs": [{"t": text} | {"nt": name}, ...],
    "weight": number}``.  ``weight`` defaults to 1 and must be positive.

Names may contain spaces but no parentheses (reserved by the trace
serialization) and no tabs or newlines (the derived corpora are line
oriented).  Deriving an utterance records a trace: the ordered tree of
nonterminal expansions, with terminals left out.
"""

from __future__ import annotations

import hashlib
import json
import random
import string
from dataclasses import dataclass, field
from typing import Iterator, Union

PUNCTUATION = frozenset(string.punctuation)

OPEN_TOKEN = "("
CLOSE_TOKEN = ")"

SAMPLE_MAX_DEPTH = 50


class GrammarError(ValueError):
    """Raised for malformed grammar sources and invalid grammar queries."""


@dataclass(frozen=True, order=True)
class Tag:
    """One piece of mark-up: a value drawn from an author-defined tagset."""

    tagset: str
    value: str

    def __post_init__(self):
        if not self.tagset or not self.value:
            raise GrammarError(f"tag needs both tagset and value, got {self.tagset!r}:{self.value!r}")

    def __str__(self):
        return f"{self.tagset}:{self.value}"

    @classmethod
    def parse(cls, text: str) -> "Tag":
        tagset, sep, value = text.partition(":")
        if not sep:
            raise GrammarError(f"tag {text!r} is not of the form 'tagset:value'")
        return cls(tagset, value)


@dataclass(frozen=True)
class NonterminalSymbol:
    name: str
    annotations: frozenset[Tag] = frozenset()


@dataclass(frozen=True)
class Terminal:
    text: str


@dataclass(frozen=True)
class NonterminalRef:
    name: str


RuleElement = Union[Terminal, NonterminalRef]


@dataclass(frozen=True)
class ProductionRule:
    lhs: str
    rhs: tuple[RuleElement, ...]
    weight: float = 1.0

    def nonterminal_names(self) -> tuple[str, ...]:
        return tuple(el.name for el in self.rhs if isinstance(el, NonterminalRef))


@dataclass(frozen=True)
class TraceNode:
    """Nonterminal expansion tree.  Terminals never appear as nodes."""

    symbol: str
    children: tuple["TraceNode", ...] = ()


@dataclass(frozen=True)
class Derivation:
    utterance: str
    trace: TraceNode
    markup: frozenset[Tag]


@dataclass(frozen=True)
class MalformedTrace:
    """Verdict for token sequences that do not encode a valid trace.

    ``prefix`` is the parse of the longest token prefix that *is* valid,
    or None when not even the first token starts a trace.
    """

    prefix: TraceNode | None
    reason: str


@dataclass(frozen=True)
class Grammar:
    symbols: dict[str, NonterminalSymbol]
    rules: dict[str, tuple[ProductionRule, ...]]
    top_level: frozenset[str]
    token_to_name: dict[str, str] = field(default_factory=dict)
    source_digest: str = ""

    def symbol_token(self, name: str) -> str:
        """Output-vocabulary token for a symbol (spaces become underscores)."""
        return name.replace(" ", "_")

    def annotations(self, name: str) -> frozenset[Tag]:
        try:
            return self.symbols[name].annotations
        except KeyError:
            raise GrammarError(f"unknown symbol in trace: {name!r}") from None

    def require(self, name: str):
        if name not in self.symbols:
            raise GrammarError(f"undefined symbol: {name!r}")


def _symbol_token(name: str) -> str:
    return name.replace(" ", "_")


def _check_name(name: str):
    if not isinstance(name, str) or not name.strip():
        raise GrammarError(f"symbol name must be non-empty text, got {name!r}")
    if "(" in name or ")" in name:
        raise GrammarError(f"symbol name {name!r} contains a parenthesis (reserved by trace serialization)")
    for ch in "\t\n\r":
        if ch in name:
            raise GrammarError(f"symbol name {name!r} contains a control character")


def _check_terminal(text, lhs: str):
    if not isinstance(text, str) or not text.strip():
        raise GrammarError(f"rule for {lhs!r} has an empty terminal span")
    for ch in "\t\n\r":
        if ch in text:
            raise GrammarError(f"terminal {text!r} in rule for {lhs!r} contains a control character")


def _find_cycle(rules: dict[str, tuple[ProductionRule, ...]]) -> str | None:
    """Return a symbol on a reference cycle, or None when the graph is acyclic."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {name: WHITE for name in rules}
    for start in rules:
        if color[start] != WHITE:
            continue
        stack = [(start, iter_refs(rules, start))]
        color[start] = GRAY
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == GRAY:
                    return nxt
                if color[nxt] == WHITE:
                    color[nxt] = GRAY
                    stack.append((nxt, iter_refs(rules, nxt)))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()
    return None


def iter_refs(rules: dict[str, tuple[ProductionRule, ...]], name: str) -> Iterator[str]:
    for rule in rules.get(name, ()):
        for ref in rule.nonterminal_names():
            yield ref


def parse_grammar(source: str) -> Grammar:
    """Parse and validate a grammar document; raises GrammarError on any defect."""
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise GrammarError(f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise GrammarError("grammar document must be a JSON object")
    raw_symbols = doc.get("symbols")
    raw_rules = doc.get("rules")
    if not isinstance(raw_symbols, dict) or not isinstance(raw_rules, list):
        raise GrammarError("grammar document needs a 'symbols' object and a 'rules' list")

    symbols: dict[str, NonterminalSymbol] = {}
    top_level: set[str] = set()
    for name, spec in raw_symbols.items():
        _check_name(name)
        spec = spec or {}
        if not isinstance(spec, dict):
            raise GrammarError(f"symbol {name!r}: expected an object, got {type(spec).__name__}")
        annotations = frozenset(Tag.parse(t) for t in spec.get("annotations", ()))
        symbols[name] = NonterminalSymbol(name, annotations)
        if spec.get("top_level", False):
            top_level.add(name)

    rules: dict[str, list[ProductionRule]] = {name: [] for name in symbols}
    for pos, raw in enumerate(raw_rules):
        if not isinstance(raw, dict) or "lhs" not in raw or "rhs" not in raw:
            raise GrammarError(f"rule #{pos}: expected an object with 'lhs' and 'rhs'")
        lhs = raw["lhs"]
        if lhs not in symbols:
            raise GrammarError(f"rule #{pos}: undefined symbol {lhs!r} on the left-hand side")
        weight = raw.get("weight", 1)
        if not isinstance(weight, (int, float)) or not weight > 0:
            raise GrammarError(f"rule #{pos} for {lhs!r}: non-positive weight {weight!r}")
        elements: list[RuleElement] = []
        if not isinstance(raw["rhs"], list) or not raw["rhs"]:
            raise GrammarError(f"rule #{pos} for {lhs!r}: right-hand side must be a non-empty list")
        for el in raw["rhs"]:
            if isinstance(el, dict) and set(el) == {"t"}:
                _check_terminal(el["t"], lhs)
                elements.append(Terminal(el["t"]))
            elif isinstance(el, dict) and set(el) == {"nt"}:
                ref = el["nt"]
                if ref not in symbols:
                    raise GrammarError(f"rule #{pos} for {lhs!r}: undefined symbol {ref!r}")
                elements.append(NonterminalRef(ref))
            else:
                raise GrammarError(f"rule #{pos} for {lhs!r}: element must be {{'t': text}} or {{'nt': name}}")
        rules[lhs].append(ProductionRule(lhs, tuple(elements), float(weight)))

    for name in symbols:
        if not rules[name]:
            raise GrammarError(f"symbol {name!r} has no production rules")

    frozen = {name: tuple(rs) for name, rs in rules.items()}
    cyclic = _find_cycle(frozen)
    if cyclic is not None:
        raise GrammarError(f"unbounded recursion: symbol {cyclic!r} can derive itself, enumeration would not terminate")

    token_to_name: dict[str, str] = {}
    for name in symbols:
        token = _symbol_token(name)
        if token in token_to_name:
            raise GrammarError(f"symbols {token_to_name[token]!r} and {name!r} collide on linearized token {token!r}")
        token_to_name[token] = name

    digest = hashlib.sha256(source.encode("utf-8")).hexdigest()
    return Grammar(symbols, frozen, frozenset(top_level), token_to_name, digest)


def load_grammar(path) -> Grammar:
    with open(path, encoding="utf-8") as handle:
        return parse_grammar(handle.read())


def join_terminals(pieces) -> str:
    """Assemble an utterance from terminal spans.

    Spans are joined with single spaces; a span made solely of punctuation
    attaches to the preceding span without one.
    """
    out: list[str] = []
    for piece in pieces:
        if out and piece and all(ch in PUNCTUATION for ch in piece):
            out[-1] += piece
        else:
            out.append(piece)
    return " ".join(out)


def derivation_count(grammar: Grammar, symbol: str) -> int:
    """Number of distinct terminal derivations, by DP over rules (no enumeration)."""
    grammar.require(symbol)
    memo: dict[str, int] = {}

    def count(name: str) -> int:
        if name in memo:
            return memo[name]
        total = 0
        for rule in grammar.rules[name]:
            prod = 1
            for ref in rule.nonterminal_names():
                prod *= count(ref)
            total += prod
        memo[name] = total
        return total

    return count(symbol)


def _expand(grammar: Grammar, symbol: str) -> Iterator[tuple[tuple[str, ...], TraceNode]]:
    for rule in grammar.rules[symbol]:
        yield from _expand_rhs(grammar, rule, 0, [], [])


def _expand_rhs(grammar, rule, idx, pieces, children):
    if idx == len(rule.rhs):
        yield tuple(pieces), TraceNode(rule.lhs, tuple(children))
        return
    element = rule.rhs[idx]
    if isinstance(element, Terminal):
        pieces.append(element.text)
        yield from _expand_rhs(grammar, rule, idx + 1, pieces, children)
        pieces.pop()
    else:
        for sub_pieces, sub_trace in _expand(grammar, element.name):
            mark = len(pieces)
            pieces.extend(sub_pieces)
            children.append(sub_trace)
            yield from _expand_rhs(grammar, rule, idx + 1, pieces, children)
            del pieces[mark:]
            children.pop()


def enumerate_derivations(grammar: Grammar, symbol: str) -> Iterator[Derivation]:
    """Yield every terminal derivation of ``symbol`` exactly once.

    Order is deterministic: rules in authored order, right-hand-side
    alternatives varying rightmost-fastest.
    """
    grammar.require(symbol)
    for pieces, trace in _expand(grammar, symbol):
        yield Derivation(join_terminals(pieces), trace, collect_markup(trace, grammar))


def enumerate_all(grammar: Grammar) -> Iterator[Derivation]:
    """Every derivation of every top-level symbol, symbols in sorted order."""
    for symbol in sorted(grammar.top_level):
        yield from enumerate_derivations(grammar, symbol)


def sample_derivation(grammar: Grammar, symbol: str, rng: random.Random,
                      max_depth: int = SAMPLE_MAX_DEPTH) -> Derivation:
    """Top-down weighted sample; each rule drawn with probability weight/sum."""
    grammar.require(symbol)

    def expand(name: str, depth: int) -> tuple[list[str], TraceNode]:
        if depth > max_depth:
            raise GrammarError(f"depth limit exceeded while expanding {name!r} (max {max_depth})")
        rules = grammar.rules[name]
        total = sum(rule.weight for rule in rules)
        draw = rng.random() * total
        chosen = rules[-1]
        acc = 0.0
        for rule in rules:
            acc += rule.weight
            if draw < acc:
                chosen = rule
                break
        pieces: list[str] = []
        children: list[TraceNode] = []
        for element in chosen.rhs:
            if isinstance(element, Terminal):
                pieces.append(element.text)
            else:
                sub_pieces, sub_trace = expand(element.name, depth + 1)
                pieces.extend(sub_pieces)
                children.append(sub_trace)
        return pieces, TraceNode(name, tuple(children))

    pieces, trace = expand(symbol, 1)
    return Derivation(join_terminals(pieces), trace, collect_markup(trace, grammar))


def collect_markup(trace: TraceNode, grammar: Grammar) -> frozenset[Tag]:
    """Union of the annotations of every symbol occurring in the trace."""
    tags: set[Tag] = set()
    stack = [trace]
    while stack:
        node = stack.pop()
        tags |= grammar.annotations(node.symbol)
        stack.extend(node.children)
    return frozenset(tags)


def symbol_set(trace: TraceNode) -> frozenset[str]:
    """Distinct symbol names in the trace (set, not multiset)."""
    names: set[str] = set()
    stack = [trace]
    while stack:
        node = stack.pop()
        names.add(node.symbol)
        stack.extend(node.children)
    return frozenset(names)


def serialize_trace(trace: TraceNode) -> str:
    """Human-readable parenthesized form, e.g. ``greet( greet back( ... ) )``."""
    if not trace.children:
        return trace.symbol
    rendered = " ) ( ".join(serialize_trace(child) for child in trace.children)
    return f"{trace.symbol}( {rendered} )"


def linearize_trace(trace: TraceNode) -> list[str]:
    """Output-vocabulary token sequence: one token per symbol, parens around child lists."""
    out: list[str] = []

    def visit(node: TraceNode):
        out.append(_symbol_token(node.symbol))
        if node.children:
            out.append(OPEN_TOKEN)
            for child in node.children:
                visit(child)
            out.append(CLOSE_TOKEN)

    visit(trace)
    return out


class _ParseFailure(Exception):
    pass


def _parse_tokens(tokens, grammar: Grammar) -> TraceNode:
    def parse_node(pos: int) -> tuple[TraceNode, int]:
        if pos >= len(tokens):
            raise _ParseFailure("unexpected end of sequence")
        token = tokens[pos]
        if token in (OPEN_TOKEN, CLOSE_TOKEN):
            raise _ParseFailure(f"unexpected {token!r} at position {pos}")
        name = grammar.token_to_name.get(token)
        if name is None:
            raise _ParseFailure(f"unknown symbol token {token!r} at position {pos}")
        pos += 1
        children: list[TraceNode] = []
        if pos < len(tokens) and tokens[pos] == OPEN_TOKEN:
            pos += 1
            if pos < len(tokens) and tokens[pos] == CLOSE_TOKEN:
                raise _ParseFailure(f"empty child list at position {pos}")
            while pos < len(tokens) and tokens[pos] != CLOSE_TOKEN:
                child, pos = parse_node(pos)
                children.append(child)
            if pos >= len(tokens):
                raise _ParseFailure("unbalanced parentheses")
            pos += 1
        return TraceNode(name, tuple(children)), pos

    if not tokens:
        raise _ParseFailure("empty token sequence")
    node, end = parse_node(0)
    if end != len(tokens):
        raise _ParseFailure(f"trailing tokens from position {end}")
    return node


def _strict_violation(node: TraceNode, grammar: Grammar) -> str | None:
    child_names = tuple(child.symbol for child in node.children)
    if not any(rule.nonterminal_names() == child_names for rule in grammar.rules[node.symbol]):
        return f"no rule of {node.symbol!r} produces children {list(child_names)}"
    for child in node.children:
        reason = _strict_violation(child, grammar)
        if reason:
            return reason
    return None


def parse_linearized(tokens, grammar: Grammar, strict: bool = False):
    """Rebuild a TraceNode from linearized tokens, or return a MalformedTrace.

    Malformation is a value, not an error: decoder output may be arbitrary.
    In strict mode, child lists must additionally match some production rule
    of their parent.
    """
    tokens = list(tokens)

    def attempt(seq):
        node = _parse_tokens(seq, grammar)
        if strict:
            reason = _strict_violation(node, grammar)
            if reason:
                raise _ParseFailure(reason)
        return node

    try:
        return attempt(tokens)
    except _ParseFailure as exc:
        reason = str(exc)
    prefix = None
    for length in range(len(tokens) - 1, 0, -1):
        try:
            prefix = attempt(tokens[:length])
            break
        except _ParseFailure:
            continue
    return MalformedTrace(prefix, reason)


def grammar_stats(grammar: Grammar) -> dict:
    """Symbol/rule totals and per-top-level derivation counts."""
    counts = {name: derivation_count(grammar, name) for name in sorted(grammar.top_level)}
    return {
        "symbols": len(grammar.symbols),
        "rules": sum(len(rs) for rs in grammar.rules.values()),
        "derivations": counts,
        "total_derivations": sum(counts.values()),
    }
