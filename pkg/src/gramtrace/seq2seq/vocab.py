"""Token/id tables with fixed reserved ids."""

from __future__ import annotations

from collections import Counter
from typing import Iterable

PAD_TOKEN = "<PAD>"
START_TOKEN = "<START>"
END_TOKEN = "<END>"
OOV_TOKEN = "<OOV>"
RESERVED = (PAD_TOKEN, START_TOKEN, END_TOKEN, OOV_TOKEN)
PAD_ID, START_ID, END_ID, OOV_ID = range(4)


class Vocab:
    """Bijective token/id map over non-reserved tokens; ids 0-3 are reserved."""

    def __init__(self, tokens: Iterable[str]):
        self.id_to_token: list[str] = list(RESERVED)
        self.token_to_id: dict[str, int] = {tok: i for i, tok in enumerate(RESERVED)}
        for token in tokens:
            if token in self.token_to_id:
                raise ValueError(f"duplicate or reserved token {token!r}")
            self.token_to_id[token] = len(self.id_to_token)
            self.id_to_token.append(token)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    @property
    def words(self) -> list[str]:
        return self.id_to_token[len(RESERVED):]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.token_to_id.get(tok, OOV_ID) for tok in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.id_to_token == other.id_to_token


def build_vocab(pairs, min_count: int = 1) -> tuple[Vocab, Vocab]:
    """Input vocab over utterance tokens seen at least ``min_count`` times;
    output vocab over every target token with no cutoff (each grammar symbol
    must stay emittable)."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot build vocabularies from an empty pair list")
    input_counts: Counter[str] = Counter()
    output_counts: Counter[str] = Counter()
    for pair in pairs:
        input_counts.update(pair.input_tokens)
        output_counts.update(pair.target_tokens)
    threshold = max(min_count, 1)
    kept = [tok for tok, n in input_counts.items() if n >= threshold]
    input_tokens = sorted(kept, key=lambda tok: (-input_counts[tok], tok))
    output_tokens = sorted(output_counts, key=lambda tok: (-output_counts[tok], tok))
    return Vocab(input_tokens), Vocab(output_tokens)
