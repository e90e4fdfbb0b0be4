"""Command-line entry point for the whole pipeline.

Every stage takes explicit seeds, so a run is replayable end to end:

    gramtrace grammar stats --grammar g.json
    gramtrace dataset build --grammar g.json --out data.tsv --cap 50 --seed 7
    gramtrace train --dataset data.tsv --out model.npz --epochs 10 --seed 7
    gramtrace eval --dataset data.tsv --out table.tsv --pieces 11 --folds 10
    gramtrace translate --model model.npz --grammar g.json --utterance "hello ."
    gramtrace chat --model model.npz --grammar g.json --policy policy.json
    gramtrace oov build --embeddings vectors.txt --model model.npz --out cache.tsv
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import random
import sys
from dataclasses import replace

from . import dataset as ds
from . import grammar as gm
from . import oov, runtime
from .seq2seq import (ModelConfig, ModelIOError, TrainConfig, TrainingDivergedError,
                      build_vocab, cross_validate, format_cv_table, load_model,
                      save_model, train, write_training_log)

DEFAULT_SEED = 0


class CliError(RuntimeError):
    pass


def _model_config(args) -> ModelConfig:
    return ModelConfig(encoder_layers=args.layers, decoder_layers=args.layers,
                       hidden_size=args.hidden, embedding_size=args.embedding_size,
                       perplexity_base=getattr(args, "base", 2.0))


def _train_config(args) -> TrainConfig:
    return TrainConfig(learning_rate=args.lr, batch_size=args.batch,
                       epochs=args.epochs, clip_norm=args.clip, seed=args.seed)


def _add_model_flags(parser):
    parser.add_argument("--hidden", type=int, default=64, help="LSTM cells per layer (desk default 64)")
    parser.add_argument("--layers", type=int, default=2, help="encoder and decoder depth (desk default 2)")
    parser.add_argument("--embedding-size", type=int, default=32)
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--clip", type=float, default=5.0)
    parser.add_argument("--min-count", type=int, default=1)


def _rank_frequencies(vocab) -> dict[str, int]:
    # Vocab ids are frequency-ordered, so rank stands in for corpus counts.
    return {word: len(vocab.id_to_token) - vocab.token_to_id[word] for word in vocab.words}


def _build_pipeline(args) -> runtime.NluPipeline:
    params, config, in_vocab, out_vocab = load_model(args.model)
    grammar = gm.load_grammar(args.grammar)
    embedding_words: tuple[str, ...] = ()
    nearest: dict[str, tuple[str, float]] = {}
    if args.embeddings:
        table = oov.load_embeddings(args.embeddings)
        embedding_words = tuple(table.words)
        cache = getattr(args, "nearest_cache", None)
        if cache:
            nearest = oov.load_nearest(cache)
        else:
            nearest = oov.precompute_nearest(table, in_vocab)
    spell = oov.build_spell_checker(in_vocab, embedding_words, _rank_frequencies(in_vocab))
    return runtime.NluPipeline(grammar, params, config, in_vocab, out_vocab, spell, nearest)


def cmd_grammar(args) -> int:
    grammar = gm.load_grammar(args.grammar)
    if args.action == "stats":
        stats = gm.grammar_stats(grammar)
        print(f"symbols: {stats['symbols']}, rules: {stats['rules']}")
        for symbol, count in stats["derivations"].items():
            print(f"derivations {symbol}: {count}")
        print(f"total derivations: {stats['total_derivations']}")
        return 0
    symbols = [args.symbol] if args.symbol else sorted(grammar.top_level)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for symbol in symbols:
            for derivation in gm.enumerate_derivations(grammar, symbol):
                tags = " ".join(sorted(str(tag) for tag in derivation.markup))
                out.write(f"{derivation.utterance}\t{gm.serialize_trace(derivation.trace)}\t{tags}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_dataset(args) -> int:
    if args.action == "build":
        grammar = gm.load_grammar(args.grammar)
        pairs, manifest = ds.build_dataset(grammar, ds.BalanceConfig(cap=args.cap, seed=args.seed))
        ds.write_dataset(pairs, args.out)
        ds.write_manifest(manifest, f"{args.out}.manifest.json")
        print(f"groups: {len(manifest.groups)}")
        print(f"balanced: {manifest.balanced_size}")
        print(f"augmented: {len(pairs)}")
        return 0
    pairs = ds.read_dataset(args.dataset)
    spec = ds.SplitSpec(pieces=args.pieces, folds=args.folds, seed=args.seed)
    held_out, fold_pieces = ds.split_for_eval(pairs, spec)
    os.makedirs(args.out_dir, exist_ok=True)
    index = {"pieces": [], "held_out": None,
             "folds": [{"validate": i, "train": [j for j in range(len(fold_pieces)) if j != i]}
                       for i in range(len(fold_pieces))]}
    for i, piece in enumerate(fold_pieces + [held_out]):
        name = f"piece_{i:02d}.tsv"
        ds.write_dataset(piece, os.path.join(args.out_dir, name))
        index["pieces"].append({"file": name, "size": len(piece)})
    index["held_out"] = index["pieces"][-1]["file"]
    with open(os.path.join(args.out_dir, "folds.json"), "w", encoding="utf-8") as handle:
        json.dump(index, handle, indent=2, sort_keys=True)
        handle.write("\n")
    print(f"pieces: {len(fold_pieces) + 1}")
    print(f"sizes: {[entry['size'] for entry in index['pieces']]}")
    return 0


def cmd_train(args) -> int:
    pairs = ds.read_dataset(args.dataset)
    in_vocab, out_vocab = build_vocab(pairs, args.min_count)
    params, log = train(_train_config(args), _model_config(args), pairs, in_vocab, out_vocab)
    save_model(args.out, params, _model_config(args), in_vocab, out_vocab)
    write_training_log(log, f"{args.out}.log")
    print(f"pairs: {len(pairs)}")
    print(f"final loss: {log[-1].loss:.6f}")
    return 0


def cmd_eval(args) -> int:
    pairs = ds.read_dataset(args.dataset)
    spec = ds.SplitSpec(pieces=args.pieces, folds=args.folds, seed=args.seed)
    print("fold\tcv_perplexity\ttest_perplexity")
    results = cross_validate(pairs, spec, _model_config(args), _train_config(args),
                             min_count=args.min_count, base=args.base,
                             progress=lambda row: print(f"{row.fold}\t{row.cv_perplexity:.6f}\t{row.test_perplexity:.6f}"))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(format_cv_table(results))
    return 0


def cmd_translate(args) -> int:
    pipeline = _build_pipeline(args)
    result = runtime.understand(pipeline, args.utterance, speaker_name=args.speaker_name)
    if args.strict_trace and result.trace is not None:
        strict = gm.parse_linearized(list(result.decoded_tokens), pipeline.grammar, strict=True)
        if isinstance(strict, gm.MalformedTrace):
            result = replace(result, wellformed=False)
    print(json.dumps(result.to_record(), sort_keys=True))
    return 0


def cmd_chat(args) -> int:
    pipeline = _build_pipeline(args)
    with open(args.policy, encoding="utf-8") as handle:
        policy = runtime.load_policy(handle.read(), pipeline.grammar)
    state = runtime.ConversationState(player_name=args.player_name, npc_name=args.npc_name)
    if args.script:
        with open(args.script, encoding="utf-8") as handle:
            lines = handle.readlines()
    else:
        lines = sys.stdin
    transcript = runtime.chat_loop(pipeline, policy, lines, out=sys.stdout,
                                   rng=random.Random(args.seed), state=state)
    if args.transcript:
        transcript.write(args.transcript, f"{args.transcript}.markup.json")
    return 0


def cmd_oov(args) -> int:
    table = oov.load_embeddings(args.embeddings)
    if args.model:
        _, _, in_vocab, _ = load_model(args.model)
        words = in_vocab
    elif args.vocab:
        with open(args.vocab, encoding="utf-8") as handle:
            words = [line.strip() for line in handle if line.strip()]
    else:
        raise CliError("oov build needs --model or --vocab")
    nearest = oov.precompute_nearest(table, words)
    vocab_words = words.words if hasattr(words, "words") else list(words)
    digest_src = table.digest() + "|" + ",".join(sorted(vocab_words))
    oov.save_nearest(nearest, args.out, hashlib.sha256(digest_src.encode("utf-8")).hexdigest())
    print(f"nearest map: {len(nearest)} entries")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gramtrace",
                                     description="Annotated-CFG NLU pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p_grammar = sub.add_parser("grammar", help="validate, count, or enumerate a grammar")
    p_grammar.add_argument("action", choices=["stats", "enumerate"])
    p_grammar.add_argument("--grammar", required=True)
    p_grammar.add_argument("--symbol")
    p_grammar.add_argument("--out")
    p_grammar.set_defaults(func=cmd_grammar)

    p_dataset = sub.add_parser("dataset", help="build or split a training corpus")
    p_dataset.add_argument("action", choices=["build", "split"])
    p_dataset.add_argument("--grammar")
    p_dataset.add_argument("--dataset")
    p_dataset.add_argument("--out")
    p_dataset.add_argument("--out-dir")
    p_dataset.add_argument("--cap", type=int, default=5000)
    p_dataset.add_argument("--pieces", type=int, default=11)
    p_dataset.add_argument("--folds", type=int, default=10)
    p_dataset.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_dataset.set_defaults(func=cmd_dataset)

    p_train = sub.add_parser("train", help="train a trace decoder")
    p_train.add_argument("--dataset", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--seed", type=int, default=DEFAULT_SEED)
    _add_model_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="k-fold cross validation with a held-out piece")
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--out")
    p_eval.add_argument("--pieces", type=int, default=11)
    p_eval.add_argument("--folds", type=int, default=10)
    p_eval.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_eval.add_argument("--base", type=float, default=2.0)
    _add_model_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_translate = sub.add_parser("translate", help="one-shot understanding")
    p_translate.add_argument("--model", required=True)
    p_translate.add_argument("--grammar", required=True)
    p_translate.add_argument("--utterance", required=True)
    p_translate.add_argument("--embeddings")
    p_translate.add_argument("--nearest-cache")
    p_translate.add_argument("--speaker-name")
    p_translate.add_argument("--strict-trace", action="store_true")
    p_translate.set_defaults(func=cmd_translate)

    p_chat = sub.add_parser("chat", help="interactive REPL against the trained model")
    p_chat.add_argument("--model", required=True)
    p_chat.add_argument("--grammar", required=True)
    p_chat.add_argument("--policy", required=True)
    p_chat.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p_chat.add_argument("--player-name", default="Player")
    p_chat.add_argument("--npc-name", default="NPC")
    p_chat.add_argument("--embeddings")
    p_chat.add_argument("--nearest-cache")
    p_chat.add_argument("--script", help="file of player lines instead of stdin")
    p_chat.add_argument("--transcript", help="write the transcript (plus .markup.json sidecar)")
    p_chat.set_defaults(func=cmd_chat)

    p_oov = sub.add_parser("oov", help="precompute the nearest-in-vocab map")
    p_oov.add_argument("action", choices=["build"])
    p_oov.add_argument("--embeddings", required=True)
    p_oov.add_argument("--model")
    p_oov.add_argument("--vocab", help="plain word list, one per line")
    p_oov.add_argument("--out", required=True)
    p_oov.set_defaults(func=cmd_oov)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (gm.GrammarError, ds.DatasetError, oov.OovError, ModelIOError,
            TrainingDivergedError, CliError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
