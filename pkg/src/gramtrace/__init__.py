"""gramtrace: from an annotated probabilistic CFG to a working NLU pipeline.

Author a grammar whose nonterminal symbols carry tagset:value mark-up,
enumerate its utterance/trace pairs into a balanced denoised corpus, train a
stacked-LSTM attention seq2seq model to map utterances back to grammatical
traces, repair out-of-vocabulary input, and chat.
"""

from . import dataset, grammar, oov, runtime, seq2seq
from .grammar import (Derivation, Grammar, GrammarError, MalformedTrace, Tag,
                      TraceNode, collect_markup, derivation_count,
                      enumerate_all, enumerate_derivations, linearize_trace,
                      load_grammar, parse_grammar, parse_linearized,
                      sample_derivation, serialize_trace, symbol_set)

__all__ = [
    "Derivation", "Grammar", "GrammarError", "MalformedTrace", "Tag", "TraceNode",
    "collect_markup", "dataset", "derivation_count", "enumerate_all",
    "enumerate_derivations", "grammar", "linearize_trace", "load_grammar", "oov",
    "parse_grammar", "parse_linearized", "runtime", "sample_derivation",
    "seq2seq", "serialize_trace", "symbol_set",
]

__version__ = "0.1.0"
