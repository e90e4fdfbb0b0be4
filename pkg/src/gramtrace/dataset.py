"""Build balanced, denoising-augmented utterance/trace corpora and split them.

Dataset files are line oriented: three tab-separated fields per record,
``variant``, space-joined input tokens, space-joined target tokens.  A JSON
manifest sidecar records per-group sampling statistics.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
import string
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

from .grammar import Derivation, Grammar, enumerate_all, linearize_trace

SPEAKER_PLACEHOLDER = "<SPEAKER>"

VARIANT_ORIGINAL = "original"
VARIANT_CORRUPTED = "corrupted"
VARIANT_STRIPPED = "punct_stripped"
VARIANTS = (VARIANT_ORIGINAL, VARIANT_CORRUPTED, VARIANT_STRIPPED)

_PUNCT = string.punctuation
_TOKEN_RE = re.compile(f"[{re.escape(_PUNCT)}]|[^\\s{re.escape(_PUNCT)}]+")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class UtteranceTracePair:
    input_tokens: tuple[str, ...]
    target_tokens: tuple[str, ...]
    variant: str = VARIANT_ORIGINAL
    group_key: str = ""


@dataclass(frozen=True)
class BalanceConfig:
    cap: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.cap < 1:
            raise DatasetError(f"balance cap must be >= 1, got {self.cap}")


@dataclass(frozen=True)
class SplitSpec:
    pieces: int = 11
    folds: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.pieces < 2:
            raise DatasetError(f"need at least 2 pieces, got {self.pieces}")
        if self.folds != self.pieces - 1:
            raise DatasetError(f"folds must equal pieces - 1, got {self.folds} folds for {self.pieces} pieces")


@dataclass
class GroupStat:
    population: int
    sampled: int


@dataclass
class DatasetManifest:
    groups: dict[str, GroupStat]
    totals: dict[str, int]
    seed: int
    cap: int
    grammar_digest: str = ""

    @property
    def balanced_size(self) -> int:
        return sum(stat.sampled for stat in self.groups.values())

    def to_json(self) -> str:
        doc = {
            "groups": {key: {"population": s.population, "sampled": s.sampled}
                       for key, s in sorted(self.groups.items())},
            "totals": dict(sorted(self.totals.items())),
            "seed": self.seed,
            "cap": self.cap,
            "grammar_digest": self.grammar_digest,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        doc = json.loads(text)
        groups = {key: GroupStat(val["population"], val["sampled"]) for key, val in doc["groups"].items()}
        return cls(groups, dict(doc["totals"]), doc["seed"], doc["cap"], doc.get("grammar_digest", ""))


def tokenize(utterance: str) -> list[str]:
    """Lowercase, split on whitespace, and split each punctuation mark into
    its own token.  The literal speaker placeholder stays one token."""
    tokens: list[str] = []
    for chunk in utterance.split():
        for part in _split_placeholder(chunk):
            if part == SPEAKER_PLACEHOLDER:
                tokens.append(part)
            else:
                tokens.extend(_TOKEN_RE.findall(part.lower()))
    return tokens


def _split_placeholder(chunk: str) -> list[str]:
    if SPEAKER_PLACEHOLDER not in chunk:
        return [chunk]
    parts: list[str] = []
    rest = chunk
    while SPEAKER_PLACEHOLDER in rest:
        before, rest = rest.split(SPEAKER_PLACEHOLDER, 1)
        if before:
            parts.append(before)
        parts.append(SPEAKER_PLACEHOLDER)
    if rest:
        parts.append(rest)
    return parts


def is_punctuation_token(token: str) -> bool:
    return bool(token) and all(ch in _PUNCT for ch in token)


def group_key_for_targets(target_tokens: Iterable[str]) -> str:
    """Canonical symbol-set key: sorted distinct symbol tokens, space joined."""
    return " ".join(sorted({t for t in target_tokens if t not in ("(", ")")}))


def _child_seed(seed: int, key: str) -> int:
    digest = hashlib.sha256(f"{seed}\x00{key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def build_balanced(derivations: Iterable[Derivation], config: BalanceConfig,
                   grammar_digest: str = "") -> tuple[list[UtteranceTracePair], DatasetManifest]:
    """Group derivations by trace symbol set and sample min(cap, population)
    per group without replacement.  Deterministic in (stream order, seed)."""
    groups: dict[str, list[UtteranceTracePair]] = {}
    for derivation in derivations:
        target = tuple(linearize_trace(derivation.trace))
        key = group_key_for_targets(target)
        pair = UtteranceTracePair(tuple(tokenize(derivation.utterance)), target, VARIANT_ORIGINAL, key)
        groups.setdefault(key, []).append(pair)
    if not groups:
        raise DatasetError("empty derivation stream")

    pairs: list[UtteranceTracePair] = []
    stats: dict[str, GroupStat] = {}
    for key in sorted(groups):
        population = groups[key]
        take = min(config.cap, len(population))
        rng = random.Random(_child_seed(config.seed, key))
        chosen = sorted(rng.sample(range(len(population)), take))
        pairs.extend(population[i] for i in chosen)
        stats[key] = GroupStat(len(population), take)

    totals = {VARIANT_ORIGINAL: len(pairs), VARIANT_CORRUPTED: 0, VARIANT_STRIPPED: 0}
    return pairs, DatasetManifest(stats, totals, config.seed, config.cap, grammar_digest)


def corrupt_utterance(tokens, rng: random.Random) -> tuple[str, ...]:
    """Remove floor(n/3) tokens uniformly without replacement, keeping order."""
    tokens = tuple(tokens)
    remove = len(tokens) // 3
    if remove == 0:
        return tokens
    dropped = set(rng.sample(range(len(tokens)), remove))
    return tuple(tok for i, tok in enumerate(tokens) if i not in dropped)


def strip_punctuation(tokens) -> tuple[str, ...]:
    return tuple(tok for tok in tokens if not is_punctuation_token(tok))


def augment(pairs: Iterable[UtteranceTracePair], rng: random.Random) -> list[UtteranceTracePair]:
    """Triple the corpus: each original gains a corrupted and a punctuation-
    stripped variant with the same target.  Variants whose tokens come out
    unchanged (or would come out empty) are still emitted, relabeled."""
    out: list[UtteranceTracePair] = []
    for pair in pairs:
        if pair.variant != VARIANT_ORIGINAL:
            raise DatasetError(f"augment expects original-variant pairs, got {pair.variant!r}")
        corrupted = corrupt_utterance(pair.input_tokens, rng)
        stripped = strip_punctuation(pair.input_tokens) or pair.input_tokens
        out.append(pair)
        out.append(UtteranceTracePair(corrupted, pair.target_tokens, VARIANT_CORRUPTED, pair.group_key))
        out.append(UtteranceTracePair(stripped, pair.target_tokens, VARIANT_STRIPPED, pair.group_key))
    return out


def build_dataset(grammar: Grammar, config: BalanceConfig) -> tuple[list[UtteranceTracePair], DatasetManifest]:
    """Enumerate, balance, and augment in one pass; pure in (grammar, seed)."""
    pairs, manifest = build_balanced(enumerate_all(grammar), config, grammar.source_digest)
    augmented = augment(pairs, random.Random(_child_seed(config.seed, "augment")))
    manifest.totals = dict(Counter(pair.variant for pair in augmented))
    return augmented, manifest


def split_for_eval(pairs, spec: SplitSpec) -> tuple[list[UtteranceTracePair], list[list[UtteranceTracePair]]]:
    """Seeded shuffle into ``pieces`` near-equal pieces; the last is held out,
    the rest are the cross-validation fold pieces."""
    pairs = list(pairs)
    if len(pairs) < spec.pieces:
        raise DatasetError(f"too few pairs: {len(pairs)} cannot fill {spec.pieces} pieces")
    random.Random(spec.seed).shuffle(pairs)
    base, remainder = divmod(len(pairs), spec.pieces)
    sizes = [base + 1] * remainder + [base] * (spec.pieces - remainder)
    pieces: list[list[UtteranceTracePair]] = []
    start = 0
    for size in sizes:
        pieces.append(pairs[start:start + size])
        start += size
    return pieces[-1], pieces[:-1]


def fold_splits(fold_pieces):
    """Yield (fold index, training pairs, validation piece) per fold."""
    for i, validation in enumerate(fold_pieces):
        training = [pair for j, piece in enumerate(fold_pieces) if j != i for pair in piece]
        yield i, training, validation


def write_dataset(pairs: Iterable[UtteranceTracePair], path):
    with open(path, "w", encoding="utf-8") as handle:
        for pair in pairs:
            handle.write(f"{pair.variant}\t{' '.join(pair.input_tokens)}\t{' '.join(pair.target_tokens)}\n")


def read_dataset(path) -> list[UtteranceTracePair]:
    pairs: list[UtteranceTracePair] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise DatasetError(f"line {lineno}: expected 3 tab-separated fields, got {len(fields)}")
            variant, raw_inputs, raw_targets = fields
            if variant not in VARIANTS:
                raise DatasetError(f"line {lineno}: unknown variant label {variant!r}")
            inputs = tuple(raw_inputs.split())
            targets = tuple(raw_targets.split())
            if not inputs or not targets:
                raise DatasetError(f"line {lineno}: empty token field")
            pairs.append(UtteranceTracePair(inputs, targets, variant, group_key_for_targets(targets)))
    return pairs


def write_manifest(manifest: DatasetManifest, path):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(manifest.to_json())


def read_manifest(path) -> DatasetManifest:
    with open(path, encoding="utf-8") as handle:
        return DatasetManifest.from_json(handle.read())
