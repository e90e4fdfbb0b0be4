#!/usr/bin/env python3
"""Desk-scale analogue of the cross-validation experiment.

Builds the balanced + augmented corpus from the bundled grammar (cap 50),
splits it into 11 pieces, holds the last out, runs 10-fold cross validation
with the desk model, and reports per-fold perplexities plus exact-symbol-set
accuracy on the held-out originals.  Everything is reproducible from the
seeds printed in the header.
"""

import argparse
import pathlib
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from gramtrace import load_grammar
from gramtrace.dataset import BalanceConfig, SplitSpec, build_dataset
from gramtrace.seq2seq import (ModelConfig, TrainConfig, cross_validate,
                               exact_symbol_set_accuracy, format_cv_table)

DEFAULT_GRAMMAR = pathlib.Path(__file__).resolve().parent.parent / "src" / "gramtrace" / "data" / "desk_grammar.json"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--grammar", default=str(DEFAULT_GRAMMAR))
    parser.add_argument("--cap", type=int, default=50)
    parser.add_argument("--data-seed", type=int, default=7)
    parser.add_argument("--train-seed", type=int, default=3)
    parser.add_argument("--epochs", type=int, default=18)
    parser.add_argument("--lr", type=float, default=6e-3)
    parser.add_argument("--hidden", type=int, default=64)
    parser.add_argument("--layers", type=int, default=2)
    parser.add_argument("--embedding-size", type=int, default=32)
    parser.add_argument("--out", default="table1_analogue.tsv")
    args = parser.parse_args()

    grammar = load_grammar(args.grammar)
    pairs, manifest = build_dataset(grammar, BalanceConfig(cap=args.cap, seed=args.data_seed))
    print(f"grammar: {len(grammar.symbols)} symbols, corpus: {len(pairs)} pairs "
          f"({manifest.balanced_size} balanced x 3), groups: {len(manifest.groups)}")
    print(f"seeds: data={args.data_seed} train={args.train_seed}")

    spec = SplitSpec(pieces=11, folds=10, seed=args.data_seed)
    model_config = ModelConfig(encoder_layers=args.layers, decoder_layers=args.layers,
                               hidden_size=args.hidden, embedding_size=args.embedding_size)
    train_config = TrainConfig(learning_rate=args.lr, epochs=args.epochs, seed=args.train_seed)

    start = time.monotonic()
    print("fold\tcv_perplexity\ttest_perplexity")
    results, held_out, models = cross_validate(
        pairs, spec, model_config, train_config, keep_models=True,
        progress=lambda row: print(f"{row.fold}\t{row.cv_perplexity:.6f}\t{row.test_perplexity:.6f}"))

    originals = [p for p in held_out if p.variant == "original"]
    accuracies = [exact_symbol_set_accuracy(params, model_config, originals, in_v, out_v)
                  for params, in_v, out_v in models]
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write(format_cv_table(results))
    print(f"\nwrote {args.out}")
    print(f"held-out originals: {len(originals)}; exact-symbol-set accuracy per fold: "
          f"min={min(accuracies):.3f} max={max(accuracies):.3f}")
    print(f"total wall time: {(time.monotonic() - start) / 60:.1f} min")


if __name__ == "__main__":
    main()
