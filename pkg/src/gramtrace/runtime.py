"""Online NLU: tokenize, repair, decode, validate the trace, collect mark-up,
update conversation state, and generate NPC replies from the same grammar."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Mapping, Optional

from .dataset import SPEAKER_PLACEHOLDER, tokenize
from .grammar import (Grammar, GrammarError, MalformedTrace, Tag, TraceNode,
                      collect_markup, linearize_trace, parse_linearized,
                      sample_derivation, serialize_trace, symbol_set)
from .oov import SpellChecker, repair_utterance
from .seq2seq.model import ModelConfig, ModelParams, decode_greedy, encode
from .seq2seq.vocab import Vocab

MAX_UTTERANCE_CHARS = 10_000

GREETING_TAG = Tag("speech_act", "greeting")
QUESTION_TAG = Tag("speech_act", "question")
ANSWER_TAG = Tag("speech_act", "answer")
FAREWELL_TAG = Tag("speech_act", "farewell")


@dataclass(frozen=True)
class ObligationRule:
    """A trigger tag raises an obligation; any satisfier tag in a later turn
    clears it.  A trigger that is itself a satisfier toggles (greeting begets
    greeting; the return greeting discharges it)."""

    trigger: Tag
    satisfiers: frozenset[Tag]


DEFAULT_OBLIGATION_RULES = (
    ObligationRule(GREETING_TAG, frozenset({GREETING_TAG})),
    ObligationRule(QUESTION_TAG, frozenset({ANSWER_TAG})),
    ObligationRule(FAREWELL_TAG, frozenset({FAREWELL_TAG})),
)


@dataclass(frozen=True)
class UnderstandingResult:
    utterance: str
    repaired_tokens: tuple[str, ...]
    decoded_tokens: tuple[str, ...]
    trace: Optional[TraceNode]
    symbols: frozenset[str]
    markup: frozenset[Tag]
    wellformed: bool

    def to_record(self) -> dict:
        return {
            "utterance": self.utterance,
            "repaired_tokens": list(self.repaired_tokens),
            "trace": serialize_trace(self.trace) if self.trace else None,
            "symbols": sorted(self.symbols),
            "tags": sorted(str(tag) for tag in self.markup),
            "wellformed": self.wellformed,
        }


@dataclass(frozen=True)
class Turn:
    speaker: str
    utterance: str
    markup: frozenset[Tag]
    wellformed: bool = True


@dataclass(frozen=True)
class ConversationState:
    player_name: str = "Player"
    npc_name: str = "NPC"
    turns: tuple[Turn, ...] = ()
    obligations: frozenset[Tag] = frozenset()

    @property
    def last_markup(self) -> frozenset[Tag]:
        return self.turns[-1].markup if self.turns else frozenset()


@dataclass
class NluPipeline:
    grammar: Grammar
    params: ModelParams
    config: ModelConfig
    in_vocab: Vocab
    out_vocab: Vocab
    spell: Optional[SpellChecker] = None
    nearest: Mapping[str, tuple[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        unresolved = [tok for tok in self.out_vocab.words
                      if tok not in ("(", ")") and tok not in self.grammar.token_to_name]
        if unresolved:
            raise GrammarError(f"model output tokens do not resolve to grammar symbols: {unresolved!r}")


def understand(pipeline: NluPipeline, utterance: str,
               speaker_name: str | None = None) -> UnderstandingResult:
    """Tokenize, repair, decode, and validate; never raises on arbitrary text.

    When ``speaker_name`` is given, tokens equal to it are normalized to the
    speaker placeholder the grammar was authored with.
    """
    utterance = utterance[:MAX_UTTERANCE_CHARS]
    tokens = tokenize(utterance)
    if speaker_name:
        name_token = speaker_name.lower()
        tokens = [SPEAKER_PLACEHOLDER if tok == name_token else tok for tok in tokens]
    if pipeline.spell is not None:
        repaired = repair_utterance(tokens, pipeline.in_vocab, pipeline.spell, pipeline.nearest)
    else:
        repaired = tuple(tokens)
    repaired = repaired[:pipeline.config.max_input_len]
    if not repaired:
        return UnderstandingResult(utterance, (), (), None, frozenset(), frozenset(), False)

    enc_out = encode(pipeline.params, pipeline.config, pipeline.in_vocab.encode(repaired))
    decoded_ids = decode_greedy(pipeline.params, enc_out, pipeline.config.max_output_len)
    decoded = tuple(pipeline.out_vocab.decode(decoded_ids))
    parsed = parse_linearized(decoded, pipeline.grammar)
    if isinstance(parsed, MalformedTrace):
        trace = parsed.prefix
        wellformed = False
    else:
        trace = parsed
        wellformed = True
    if trace is not None:
        markup = collect_markup(trace, pipeline.grammar)
        symbols = symbol_set(trace)
    else:
        markup = frozenset()
        symbols = frozenset()
    return UnderstandingResult(utterance, repaired, decoded, trace, symbols, markup, wellformed)


def apply_understanding(state: ConversationState, result: UnderstandingResult, speaker: str,
                        rules: Iterable[ObligationRule] = DEFAULT_OBLIGATION_RULES) -> ConversationState:
    """Pure state update: append the turn; malformed results leave obligations
    untouched."""
    turn = Turn(speaker, result.utterance, result.markup, result.wellformed)
    turns = state.turns + (turn,)
    if not result.wellformed:
        return replace(state, turns=turns)
    obligations = set(state.obligations)
    for rule in rules:
        if rule.trigger in obligations and result.markup & rule.satisfiers:
            obligations.discard(rule.trigger)
        elif rule.trigger in result.markup and rule.trigger not in state.obligations:
            obligations.add(rule.trigger)
    return replace(state, turns=turns, obligations=frozenset(obligations))


@dataclass(frozen=True)
class PolicyRule:
    required_tags: frozenset[Tag]
    response_symbol: str


@dataclass(frozen=True)
class ResponsePolicy:
    rules: tuple[PolicyRule, ...]
    fallback_symbol: str

    def validate(self, grammar: Grammar):
        for symbol in [rule.response_symbol for rule in self.rules] + [self.fallback_symbol]:
            if symbol not in grammar.top_level:
                raise GrammarError(f"policy symbol {symbol!r} is not top-level in the grammar")


def load_policy(text: str, grammar: Grammar | None = None) -> ResponsePolicy:
    doc = json.loads(text)
    rules = tuple(PolicyRule(frozenset(Tag.parse(t) for t in rule["required_tags"]),
                             rule["response_symbol"])
                  for rule in doc["rules"])
    policy = ResponsePolicy(rules, doc["fallback_symbol"])
    if grammar is not None:
        policy.validate(grammar)
    return policy


def respond(state: ConversationState, policy: ResponsePolicy, grammar: Grammar,
            rng: random.Random) -> tuple[str, TraceNode, frozenset[Tag]]:
    """Pick the first rule whose required tags all appear in the last incoming
    markup (or are all pending obligations), sample a reply from its symbol,
    and substitute the speaker placeholder with the NPC's name."""
    incoming = state.last_markup
    symbol = policy.fallback_symbol
    for rule in policy.rules:
        if rule.required_tags <= incoming or (rule.required_tags and rule.required_tags <= state.obligations):
            symbol = rule.response_symbol
            break
    derivation = sample_derivation(grammar, symbol, rng)
    text = derivation.utterance.replace(SPEAKER_PLACEHOLDER, state.npc_name)
    return text, derivation.trace, derivation.markup


def result_from_generation(text: str, trace: TraceNode, markup: frozenset[Tag]) -> UnderstandingResult:
    """Wrap an NPC generation so it flows through apply_understanding."""
    return UnderstandingResult(text, (), tuple(linearize_trace(trace)), trace,
                               symbol_set(trace), markup, True)


@dataclass
class Transcript:
    turns: list[Turn] = field(default_factory=list)

    def lines(self) -> list[str]:
        return [f"{turn.speaker}: {turn.utterance}" for turn in self.turns]

    def sidecar(self) -> list[dict]:
        return [{"speaker": turn.speaker, "utterance": turn.utterance,
                 "tags": sorted(str(tag) for tag in turn.markup),
                 "wellformed": turn.wellformed} for turn in self.turns]

    def write(self, path, sidecar_path=None):
        with open(path, "w", encoding="utf-8") as handle:
            for line in self.lines():
                handle.write(line + "\n")
        if sidecar_path is not None:
            with open(sidecar_path, "w", encoding="utf-8") as handle:
                json.dump(self.sidecar(), handle, indent=2)
                handle.write("\n")


def chat_loop(pipeline: NluPipeline, policy: ResponsePolicy, lines: Iterable[str],
              out: Optional[IO[str]] = None, rng: Optional[random.Random] = None,
              state: Optional[ConversationState] = None,
              rules: Iterable[ObligationRule] = DEFAULT_OBLIGATION_RULES) -> Transcript:
    """Alternate player input and NPC reply until a farewell is exchanged or
    the input stream ends."""
    rng = rng or random.Random(0)
    state = state or ConversationState()
    transcript = Transcript()
    player_farewell = False
    npc_farewell = False
    for raw in lines:
        utterance = raw.strip()
        if not utterance:
            continue
        result = understand(pipeline, utterance, speaker_name=state.player_name)
        state = apply_understanding(state, result, state.player_name, rules)
        transcript.turns.append(state.turns[-1])
        player_farewell = player_farewell or FAREWELL_TAG in result.markup

        reply, trace, markup = respond(state, policy, pipeline.grammar, rng)
        npc_result = result_from_generation(reply, trace, markup)
        state = apply_understanding(state, npc_result, state.npc_name, rules)
        transcript.turns.append(state.turns[-1])
        npc_farewell = npc_farewell or FAREWELL_TAG in markup
        if out is not None:
            out.write(f"{state.npc_name}: {reply}\n")
        if player_farewell and npc_farewell:
            break
    return transcript
