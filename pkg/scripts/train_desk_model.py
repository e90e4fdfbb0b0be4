#!/usr/bin/env python3
"""Train the desk-scale trace decoder on the bundled grammar and save it.

Produces the model file that `gramtrace translate` and `gramtrace chat`
consume, plus its training log.
"""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from gramtrace import load_grammar
from gramtrace.dataset import BalanceConfig, build_dataset, write_dataset, write_manifest
from gramtrace.seq2seq import (ModelConfig, TrainConfig, build_vocab, save_model,
                               train, write_training_log)

DEFAULT_GRAMMAR = pathlib.Path(__file__).resolve().parent.parent / "src" / "gramtrace" / "data" / "desk_grammar.json"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--grammar", default=str(DEFAULT_GRAMMAR))
    parser.add_argument("--cap", type=int, default=50)
    parser.add_argument("--data-seed", type=int, default=7)
    parser.add_argument("--train-seed", type=int, default=3)
    parser.add_argument("--epochs", type=int, default=18)
    parser.add_argument("--lr", type=float, default=6e-3)
    parser.add_argument("--out", default="desk_model.npz")
    parser.add_argument("--dataset-out", help="also write the corpus and manifest here")
    args = parser.parse_args()

    grammar = load_grammar(args.grammar)
    pairs, manifest = build_dataset(grammar, BalanceConfig(cap=args.cap, seed=args.data_seed))
    print(f"corpus: {len(pairs)} pairs from {len(manifest.groups)} symbol-set groups")
    if args.dataset_out:
        write_dataset(pairs, args.dataset_out)
        write_manifest(manifest, f"{args.dataset_out}.manifest.json")

    in_vocab, out_vocab = build_vocab(pairs)
    config = ModelConfig(encoder_layers=2, decoder_layers=2, hidden_size=64, embedding_size=32)
    params, log = train(TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                                    seed=args.train_seed),
                        config, pairs, in_vocab, out_vocab)
    save_model(args.out, params, config, in_vocab, out_vocab)
    write_training_log(log, f"{args.out}.log")
    print(f"final loss: {log[-1].loss:.4f}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
