"""Perplexity and the k-fold cross-validation harness."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from ..dataset import SplitSpec, fold_splits, split_for_eval
from .model import ModelConfig, ModelParams, attend, encode, lstm_cell_step
from .training import TrainConfig, encode_pairs, make_batches, train
from .vocab import PAD_ID, Vocab, build_vocab


@dataclass
class PerplexityReport:
    token_count: int
    log_probs: np.ndarray          # log base-b of q(x_i), one entry per gold token
    value: float


def perplexity_from_probs(probs, base: float = 2.0) -> float:
    """Closed-form perplexity b**(-(1/N) * sum log_b q(x_i)).

    A uniform distribution over k outcomes scores exactly k; a perfect
    predictor scores 1; any zero probability makes it infinite.
    """
    probs = list(probs)
    if not probs:
        raise ValueError("no probabilities to score")
    if any(p < 0 or p > 1 for p in probs):
        raise ValueError("probabilities must lie in [0, 1]")
    if any(p == 0 for p in probs):
        return math.inf
    mean_log = sum(math.log(p, base) for p in probs) / len(probs)
    return base ** (-mean_log)


def _gold_logprobs(params: ModelParams, config: ModelConfig, enc_ids, dec_in, dec_tgt):
    """Natural-log probabilities of the gold tokens under teacher forcing."""
    enc_out = encode(params, config, enc_ids)
    states = [(h.copy(), c.copy()) for h, c in enc_out.finals]
    rows = []
    for t in range(dec_in.shape[1]):
        x = params.emb_out[dec_in[:, t]]
        for l, layer in enumerate(params.dec):
            h, c = lstm_cell_step(layer, x, *states[l])
            states[l] = (h, c)
            x = h
        context, _ = attend(params.attn, x, enc_out.top_states, enc_out.mask)
        comb = np.tanh(np.concatenate([x, context], axis=1) @ params.w_comb + params.b_comb)
        logits = comb @ params.w_out + params.b_out
        shifted = logits - logits.max(axis=1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        rows.append(logp[np.arange(len(dec_tgt)), dec_tgt[:, t]])
    gold = np.stack(rows, axis=1)                       # (B, T_out)
    mask = dec_tgt != PAD_ID
    return gold[mask]


def perplexity(params: ModelParams, config: ModelConfig, pairs, in_vocab: Vocab,
               out_vocab: Vocab, base: float = 2.0, batch_size: int = 64) -> PerplexityReport:
    """Teacher-forced perplexity over every gold target token, END included,
    PAD excluded."""
    encoded = encode_pairs(pairs, in_vocab, out_vocab, config)
    if not encoded:
        raise ValueError("no pairs to score")
    chunks = []
    for enc_ids, dec_in, dec_tgt in make_batches(encoded, batch_size):
        chunks.append(_gold_logprobs(params, config, enc_ids, dec_in, dec_tgt))
    natural = np.concatenate(chunks)
    log_b = natural / math.log(base)
    if np.any(np.isneginf(log_b)):
        value = math.inf
    else:
        value = float(base ** (-log_b.mean()))
    return PerplexityReport(int(natural.size), log_b, value)


@dataclass(frozen=True)
class FoldResult:
    fold: int
    cv_perplexity: float
    test_perplexity: float


def cross_validate(pairs, split_spec: SplitSpec, model_config: ModelConfig,
                   train_config: TrainConfig, min_count: int = 1,
                   base: float = 2.0,
                   progress: Optional[Callable[[FoldResult], None]] = None,
                   keep_models: bool = False):
    """Hold the last piece out, then for each remaining piece train on the
    others and report validation and held-out perplexity.  One row per fold,
    fully determined by the configured seeds."""
    held_out, fold_pieces = split_for_eval(pairs, split_spec)
    results: list[FoldResult] = []
    models = []
    for fold, training, validation in fold_splits(fold_pieces):
        in_vocab, out_vocab = build_vocab(training, min_count)
        fold_train_config = replace(train_config, seed=train_config.seed + fold)
        params, _ = train(fold_train_config, model_config, training, in_vocab, out_vocab)
        cv = perplexity(params, model_config, validation, in_vocab, out_vocab, base).value
        test = perplexity(params, model_config, held_out, in_vocab, out_vocab, base).value
        result = FoldResult(fold + 1, cv, test)
        results.append(result)
        if keep_models:
            models.append((params, in_vocab, out_vocab))
        if progress is not None:
            progress(result)
    if keep_models:
        return results, held_out, models
    return results


def format_cv_table(results) -> str:
    lines = ["fold\tcv_perplexity\ttest_perplexity"]
    for row in results:
        lines.append(f"{row.fold}\t{row.cv_perplexity:.6f}\t{row.test_perplexity:.6f}")
    return "\n".join(lines) + "\n"


def exact_symbol_set_accuracy(params: ModelParams, config: ModelConfig, pairs,
                              in_vocab: Vocab, out_vocab: Vocab) -> float:
    """Fraction of pairs whose greedy decode carries exactly the gold set of
    trace symbols (order and multiplicity ignored)."""
    from ..dataset import group_key_for_targets
    from .model import decode_greedy_batch
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no pairs to score")
    sequences = [in_vocab.encode(p.input_tokens)[:config.max_input_len] for p in pairs]
    decoded = decode_greedy_batch(params, config, sequences)
    hits = sum(group_key_for_targets(out_vocab.decode(ids)) == pair.group_key
               for pair, ids in zip(pairs, decoded))
    return hits / len(pairs)
