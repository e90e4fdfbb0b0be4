import random

import pytest
from hypothesis import HealthCheck, settings

from gramtrace import load_grammar, parse_grammar
from gramtrace.dataset import BalanceConfig, build_dataset
from gramtrace.runtime import NluPipeline
from gramtrace.seq2seq import TrainConfig, build_vocab, desk_config, save_model, train

settings.register_profile("suite", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")

from pathlib import Path

DATA_DIR = str(Path(__file__).resolve().parent.parent / "src" / "gramtrace" / "data")
GRAMMAR_PATH = f"{DATA_DIR}/desk_grammar.json"
POLICY_PATH = f"{DATA_DIR}/desk_policy.json"
EMBEDDINGS_PATH = f"{DATA_DIR}/mini_embeddings.txt"
STATS_PATH = f"{DATA_DIR}/desk_grammar.stats.json"
ORACLE_DIR = str(Path(__file__).resolve().parent / "data")

G0_SOURCE = """{
  "symbols": {"greet": {"top_level": true}, "farewell": {"top_level": true}},
  "rules": [
    {"lhs": "greet", "rhs": [{"t": "hello"}]},
    {"lhs": "greet", "rhs": [{"t": "hi"}]},
    {"lhs": "farewell", "rhs": [{"t": "bye"}]},
    {"lhs": "farewell", "rhs": [{"t": "goodbye"}]}
  ]
}"""

DESK_TRAIN_CONFIG = TrainConfig(learning_rate=6e-3, epochs=18, seed=3)


@pytest.fixture
def g0():
    return parse_grammar(G0_SOURCE)


@pytest.fixture(scope="session")
def desk_grammar():
    return load_grammar(GRAMMAR_PATH)


@pytest.fixture(scope="session")
def desk_dataset(desk_grammar):
    """(pairs, manifest) for the acceptance configuration: cap 50, seed 7."""
    return build_dataset(desk_grammar, BalanceConfig(cap=50, seed=7))


@pytest.fixture(scope="session")
def desk_model(desk_dataset):
    """A converged desk-scale model trained on the full bundled dataset."""
    pairs, _ = desk_dataset
    in_vocab, out_vocab = build_vocab(pairs)
    config = desk_config()
    params, log = train(DESK_TRAIN_CONFIG, config, pairs, in_vocab, out_vocab)
    return params, config, in_vocab, out_vocab, log


@pytest.fixture(scope="session")
def desk_model_file(desk_model, tmp_path_factory):
    params, config, in_vocab, out_vocab, _ = desk_model
    path = tmp_path_factory.mktemp("model") / "desk_model.npz"
    save_model(path, params, config, in_vocab, out_vocab)
    return str(path)


@pytest.fixture(scope="session")
def desk_pipeline(desk_grammar, desk_model):
    params, config, in_vocab, out_vocab, _ = desk_model
    return NluPipeline(desk_grammar, params, config, in_vocab, out_vocab)


def random_grammar(seed: int, max_symbols: int = 7):
    """Small random acyclic grammar: symbol i may only reference symbols j < i,
    so enumeration always terminates."""
    rng = random.Random(seed)
    n = rng.randint(2, max_symbols)
    words = ["ka", "ro", "mi", "ta", "zu", "lee", "po", "nor", "vel", "shu"]
    symbols = {}
    rules = []
    for i in range(n):
        name = f"s{i}"
        symbols[name] = {"top_level": i == n - 1}
        for _ in range(rng.randint(1, 3)):
            rhs = []
            for _ in range(rng.randint(1, 3)):
                if i > 0 and rng.random() < 0.4:
                    rhs.append({"nt": f"s{rng.randrange(i)}"})
                else:
                    rhs.append({"t": rng.choice(words)})
            rules.append({"lhs": name, "rhs": rhs})
    import json
    return parse_grammar(json.dumps({"symbols": symbols, "rules": rules}))
