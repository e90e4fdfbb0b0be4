"""Out-of-vocabulary repair: spell-check candidates, then embedding-nearest
in-vocabulary substitution, else an explicit OOV marker.

The repair cascade per token:

1. walk the ranked spell-check candidates (edit distance, then training
   frequency, then lexicographic);
2. the first candidate inside the training vocabulary wins;
3. otherwise the first candidate with an embedding maps to its precomputed
   nearest in-vocabulary word;
4. with candidates exhausted the token becomes the OOV marker.

A correctly spelled unknown word is its own distance-0 candidate because the
candidate lexicon includes the embedding vocabulary, so step 3 is reachable
for it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .seq2seq.vocab import OOV_TOKEN, Vocab


class OovError(ValueError):
    pass


@dataclass
class EmbeddingTable:
    words: list[str]
    vectors: np.ndarray                 # (N, dim) raw components
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {word: i for i, word in enumerate(self.words)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def vector(self, word: str) -> np.ndarray:
        return self.vectors[self.index[word]]

    def unit_vectors(self) -> np.ndarray:
        norms = np.linalg.norm(self.vectors, axis=1, keepdims=True)
        return self.vectors / norms

    def digest(self) -> str:
        hasher = hashlib.sha256()
        for word in self.words:
            hasher.update(word.encode("utf-8"))
        hasher.update(np.ascontiguousarray(self.vectors).tobytes())
        return hasher.hexdigest()


def load_embeddings(path) -> EmbeddingTable:
    """Read the standard text format: a "count dim" header, then one
    "word v1 ... v_dim" line per word.  Zero vectors are rejected."""
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().split()
        if len(header) != 2 or not all(part.isdigit() for part in header):
            raise OovError("embedding file must start with a 'count dimension' header")
        count, dim = int(header[0]), int(header[1])
        words: list[str] = []
        rows: list[list[float]] = []
        for lineno, line in enumerate(handle, start=2):
            parts = line.split()
            if not parts:
                continue
            word, comps = parts[0], parts[1:]
            if len(comps) != dim:
                raise OovError(f"line {lineno}: word {word!r} has {len(comps)} components, expected {dim}")
            try:
                vec = [float(c) for c in comps]
            except ValueError:
                raise OovError(f"line {lineno}: word {word!r} has a non-numeric component") from None
            if not all(np.isfinite(vec)):
                raise OovError(f"line {lineno}: word {word!r} has a non-finite component")
            if not any(vec):
                raise OovError(f"line {lineno}: word {word!r} has a zero vector")
            words.append(word)
            rows.append(vec)
    if len(words) != count:
        raise OovError(f"header declares {count} words but the file holds {len(words)}")
    return EmbeddingTable(words, np.array(rows, dtype=np.float64))


def precompute_nearest(embeddings: EmbeddingTable, vocab) -> dict[str, tuple[str, float]]:
    """Map every embedding word to its cosine-nearest in-vocabulary word.

    ``vocab`` is a Vocab or any iterable of words.  Ties break
    lexicographically; a vocab word present in the embeddings maps to itself.
    """
    vocab_words = vocab.words if isinstance(vocab, Vocab) else list(vocab)
    targets = sorted(word for word in vocab_words if word in embeddings)
    if not targets:
        raise OovError("no vocabulary word has an embedding")
    units = embeddings.unit_vectors()
    target_matrix = units[[embeddings.index[word] for word in targets]]
    similarities = units @ target_matrix.T          # (N, len(targets))
    best = np.argmax(similarities, axis=1)          # first max = smallest word
    return {word: (targets[best[i]], float(similarities[i, best[i]]))
            for i, word in enumerate(embeddings.words)}


def save_nearest(nearest: Mapping[str, tuple[str, float]], path, digest: str = ""):
    """TSV cache, sorted, with a header digest of the inputs.  Similarities
    are written with full precision so a reload is exact."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"#nearest\tv1\t{digest}\n")
        for word in sorted(nearest):
            target, sim = nearest[word]
            handle.write(f"{word}\t{target}\t{sim!r}\n")


def load_nearest(path, expected_digest: str | None = None) -> dict[str, tuple[str, float]]:
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().rstrip("\n").split("\t")
        if len(header) != 3 or header[0] != "#nearest" or header[1] != "v1":
            raise OovError("not a nearest-map cache file")
        if expected_digest is not None and header[2] != expected_digest:
            raise OovError("nearest-map cache was built from different inputs")
        nearest: dict[str, tuple[str, float]] = {}
        for lineno, line in enumerate(handle, start=2):
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 3:
                raise OovError(f"line {lineno}: malformed cache record")
            nearest[fields[0]] = (fields[1], float(fields[2]))
    return nearest


@dataclass
class SpellChecker:
    lexicon: frozenset[str]
    frequencies: dict[str, int]
    max_edit_distance: int = 2
    max_candidates: int = 10


def build_spell_checker(vocab, embedding_words: Iterable[str] = (),
                        frequencies: Mapping[str, int] | None = None,
                        max_edit_distance: int = 2, max_candidates: int = 10) -> SpellChecker:
    """Candidate lexicon is the training vocabulary plus the embedding
    vocabulary; frequencies default to zero for words outside the corpus."""
    vocab_words = vocab.words if isinstance(vocab, Vocab) else list(vocab)
    lexicon = frozenset(vocab_words) | frozenset(embedding_words)
    return SpellChecker(lexicon, dict(frequencies or {}), max_edit_distance, max_candidates)


def edit_distance(a: str, b: str, limit: int | None = None) -> int:
    """Levenshtein distance (insert/delete/substitute).  With ``limit`` the
    scan stops early and returns limit+1 once the bound is exceeded."""
    if a == b:
        return 0
    if limit is not None and abs(len(a) - len(b)) > limit:
        return limit + 1
    previous = list(range(len(b) + 1))
    for i, ch_a in enumerate(a, start=1):
        current = [i]
        for j, ch_b in enumerate(b, start=1):
            cost = 0 if ch_a == ch_b else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        if limit is not None and min(current) > limit:
            return limit + 1
        previous = current
    return previous[-1]


def spell_candidates(token: str, checker: SpellChecker) -> list[str]:
    """Lexicon words within the edit-distance bound, ranked by (distance,
    -frequency, word) and truncated to the candidate cap."""
    scored: list[tuple[int, int, str]] = []
    for word in checker.lexicon:
        distance = edit_distance(token, word, checker.max_edit_distance)
        if distance <= checker.max_edit_distance:
            scored.append((distance, -checker.frequencies.get(word, 0), word))
    scored.sort()
    return [word for _, _, word in scored[:checker.max_candidates]]


def repair_token(token: str, vocab, checker: SpellChecker,
                 nearest: Mapping[str, tuple[str, float]]) -> str:
    """Algorithm-1 cascade; idempotent because every possible output is
    either an in-vocabulary word or the OOV marker."""
    if token == OOV_TOKEN or token in vocab:
        return token
    for candidate in spell_candidates(token, checker):
        if candidate in vocab:
            return candidate
        if candidate in nearest:
            return nearest[candidate][0]
    return OOV_TOKEN


def repair_utterance(tokens, vocab, checker: SpellChecker,
                     nearest: Mapping[str, tuple[str, float]]) -> tuple[str, ...]:
    return tuple(repair_token(token, vocab, checker, nearest) for token in tokens)
