import random
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from gramtrace import enumerate_all, symbol_set
from gramtrace.dataset import (BalanceConfig, DatasetError, SplitSpec, UtteranceTracePair,
                               augment, build_balanced, build_dataset, corrupt_utterance,
                               fold_splits, group_key_for_targets, read_dataset,
                               read_manifest, split_for_eval, strip_punctuation, tokenize,
                               write_dataset, write_manifest)


class TestTokenize:
    def test_paper_utterance(self):
        assert tokenize("Oh, greetings, Andrew.") == ["oh", ",", "greetings", ",", "andrew", "."]

    def test_single_word(self):
        assert tokenize("hello") == ["hello"]

    def test_empty(self):
        assert tokenize("") == []

    def test_punctuation_marks_split(self):
        assert tokenize("I'm alright. Yourself?") == ["i", "'", "m", "alright", ".", "yourself", "?"]

    def test_speaker_placeholder_atomic(self):
        assert tokenize("I'm <SPEAKER>, by the way.") == [
            "i", "'", "m", "<SPEAKER>", ",", "by", "the", "way", "."]


def make_pairs(count, tokens=("hello", "there", ".")):
    return [UtteranceTracePair(tuple(tokens), ("greet",), "original",
                               group_key_for_targets(("greet",)))
            for _ in range(count)]


class TestBuildBalanced:
    def test_min_rule_small_group(self, g0):
        pairs, manifest = build_balanced(enumerate_all(g0), BalanceConfig(cap=5000, seed=1))
        assert len(pairs) == 4
        for stat in manifest.groups.values():
            assert stat.sampled == stat.population

    def test_cap_applies(self, desk_grammar):
        pairs, manifest = build_balanced(enumerate_all(desk_grammar), BalanceConfig(cap=5, seed=1))
        assert all(stat.sampled == min(5, stat.population) for stat in manifest.groups.values())
        assert len(pairs) == manifest.balanced_size

    def test_balanced_size_is_sum_of_mins(self, desk_dataset, desk_grammar):
        _, manifest = desk_dataset
        populations = Counter()
        for derivation in enumerate_all(desk_grammar):
            populations[frozenset(symbol_set(derivation.trace))] += 1
        assert sorted(manifest.groups[k].population for k in manifest.groups) == \
            sorted(populations.values())
        assert manifest.balanced_size == sum(min(50, p) for p in populations.values())

    def test_no_duplicates_within_group(self, desk_grammar):
        pairs, _ = build_balanced(enumerate_all(desk_grammar), BalanceConfig(cap=50, seed=9))
        assert len(set(pairs)) == len(pairs)

    def test_deterministic_manifest(self, desk_grammar):
        _, m1 = build_balanced(enumerate_all(desk_grammar), BalanceConfig(cap=20, seed=3))
        _, m2 = build_balanced(enumerate_all(desk_grammar), BalanceConfig(cap=20, seed=3))
        assert m1.to_json() == m2.to_json()

    def test_empty_stream(self):
        with pytest.raises(DatasetError, match="empty"):
            build_balanced([], BalanceConfig())

    def test_cap_validation(self):
        with pytest.raises(DatasetError, match="cap"):
            BalanceConfig(cap=0)


class TestCorrupt:
    def test_nine_tokens_lose_three(self):
        tokens = tuple(f"t{i}" for i in range(9))
        out = corrupt_utterance(tokens, random.Random(1))
        assert len(out) == 6
        it = iter(tokens)
        assert all(any(tok == x for x in it) for tok in out)   # subsequence

    def test_two_tokens_unchanged(self):
        assert corrupt_utterance(("a", "b"), random.Random(1)) == ("a", "b")

    def test_each_position_removed_one_third(self):
        tokens = tuple(f"t{i}" for i in range(6))
        rng = random.Random(99)
        counts = [0] * 6
        runs = 10_000
        for _ in range(runs):
            survivors = corrupt_utterance(tokens, rng)
            for i, tok in enumerate(tokens):
                if tok not in survivors:
                    counts[i] += 1
        for c in counts:
            assert abs(c / runs - 1 / 3) < 0.02

    @given(st.lists(st.sampled_from("abcdef"), min_size=1, max_size=30), st.integers(0, 1000))
    def test_length_and_subsequence(self, tokens, seed):
        out = corrupt_utterance(tuple(tokens), random.Random(seed))
        assert len(out) == len(tokens) - len(tokens) // 3
        it = iter(tokens)
        assert all(any(tok == x for x in it) for tok in out)


class TestStrip:
    def test_paper_example(self):
        assert strip_punctuation(["oh", ",", "greetings", ",", "andrew", "."]) == \
            ("oh", "greetings", "andrew")

    def test_no_punctuation_unchanged(self):
        assert strip_punctuation(["plain", "words"]) == ("plain", "words")

    def test_all_punctuation(self):
        assert strip_punctuation([".", "!"]) == ()


class TestAugment:
    def test_triples_and_keeps_targets(self, desk_dataset):
        pairs, manifest = desk_dataset
        assert len(pairs) == 3 * manifest.balanced_size
        by_variant = Counter(p.variant for p in pairs)
        assert by_variant == {"original": manifest.balanced_size,
                              "corrupted": manifest.balanced_size,
                              "punct_stripped": manifest.balanced_size}
        assert manifest.totals == dict(by_variant)

    def test_single_pair_three_variants(self):
        out = augment(make_pairs(1, ("hello", "there", ".")), random.Random(0))
        assert len(out) == 3
        assert [p.variant for p in out] == ["original", "corrupted", "punct_stripped"]
        assert len({p.target_tokens for p in out}) == 1

    def test_unchanged_variants_still_emitted(self):
        out = augment(make_pairs(1, ("hi", "there")), random.Random(0))
        assert [p.input_tokens for p in out] == [("hi", "there")] * 3
        assert [p.variant for p in out] == ["original", "corrupted", "punct_stripped"]

    def test_rejects_non_original(self):
        pair = UtteranceTracePair(("a",), ("greet",), "corrupted", "greet")
        with pytest.raises(DatasetError, match="original"):
            augment([pair], random.Random(0))


class TestSplit:
    def test_22_items_11_pieces(self):
        held, folds = split_for_eval(make_pairs(22), SplitSpec(seed=1))
        assert len(held) == 2
        assert [len(p) for p in folds] == [2] * 10

    def test_paper_scale_sizes(self):
        pairs = list(range(1_035_000))     # split is generic over elements
        held, folds = split_for_eval(pairs, SplitSpec(seed=4))
        sizes = [len(p) for p in folds] + [len(held)]
        assert sum(sizes) == 1_035_000
        assert max(sizes) - min(sizes) <= 1
        assert min(sizes) == 94_090        # the paper's reported piece size
        for fold, training, validation in fold_splits(folds):
            assert len(training) + len(validation) + len(held) == 1_035_000
            assert abs(len(training) - 846_820) <= 1   # paper rounds its totals
            break

    @given(st.integers(11, 200), st.integers(0, 99))
    def test_partition(self, n, seed):
        pairs = list(range(n))
        held, folds = split_for_eval(pairs, SplitSpec(seed=seed))
        pieces = folds + [held]
        flat = [x for piece in pieces for x in piece]
        assert sorted(flat) == pairs
        sizes = [len(p) for p in pieces]
        assert max(sizes) - min(sizes) <= 1

    def test_too_few_pairs(self):
        with pytest.raises(DatasetError, match="too few"):
            split_for_eval(make_pairs(5), SplitSpec())

    def test_folds_must_match_pieces(self):
        with pytest.raises(DatasetError, match="folds"):
            SplitSpec(pieces=11, folds=9)


class TestIo:
    def test_roundtrip_random_pairs(self, tmp_path):
        rng = random.Random(8)
        words = ["hi", "lo", ",", "go"]
        pairs = []
        for _ in range(1000):
            inputs = tuple(rng.choice(words) for _ in range(rng.randint(1, 6)))
            targets = ("greet", "(", "greet_back", ")") if rng.random() < 0.5 else ("greet",)
            variant = rng.choice(["original", "corrupted", "punct_stripped"])
            pairs.append(UtteranceTracePair(inputs, targets, variant,
                                            group_key_for_targets(targets)))
        path = tmp_path / "data.tsv"
        write_dataset(pairs, path)
        assert read_dataset(path) == pairs

    def test_empty_roundtrip(self, tmp_path):
        path = tmp_path / "empty.tsv"
        write_dataset([], path)
        assert read_dataset(path) == []

    def test_truncated_line_names_line(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("original\thello there\tgreet\noriginal\tbroken-line\n")
        with pytest.raises(DatasetError, match="line 2"):
            read_dataset(path)

    def test_unknown_variant(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("mystery\thello\tgreet\n")
        with pytest.raises(DatasetError, match="variant"):
            read_dataset(path)

    def test_manifest_roundtrip(self, tmp_path, desk_dataset):
        _, manifest = desk_dataset
        path = tmp_path / "m.json"
        write_manifest(manifest, path)
        loaded = read_manifest(path)
        assert loaded.to_json() == manifest.to_json()


class TestPipelinePurity:
    def test_same_seed_same_pairs(self, desk_grammar):
        a, _ = build_dataset(desk_grammar, BalanceConfig(cap=10, seed=5))
        b, _ = build_dataset(desk_grammar, BalanceConfig(cap=10, seed=5))
        assert a == b

    def test_different_seed_differs(self, desk_grammar):
        a, _ = build_dataset(desk_grammar, BalanceConfig(cap=10, seed=5))
        b, _ = build_dataset(desk_grammar, BalanceConfig(cap=10, seed=6))
        assert a != b
