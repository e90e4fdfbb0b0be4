"""Sequence-to-sequence trace decoder: stacked LSTMs with soft attention."""

from .evaluate import (FoldResult, PerplexityReport, cross_validate,
                       exact_symbol_set_accuracy, format_cv_table, perplexity,
                       perplexity_from_probs)
from .io import ModelIOError, load_model, save_model, write_training_log
from .model import (EncoderOutput, LstmLayer, ModelConfig, ModelParams, attend,
                    decode_greedy, decode_greedy_batch, desk_config, encode,
                    init_params, lstm_cell_step, paper_config, softmax)
from .training import (Adam, GradCheckReport, TrainConfig, TrainingDivergedError,
                       TrainLogEntry, evaluate_loss, gradient_check, train)
from .vocab import (END_ID, END_TOKEN, OOV_ID, OOV_TOKEN, PAD_ID, PAD_TOKEN,
                    RESERVED, START_ID, START_TOKEN, Vocab, build_vocab)

__all__ = [
    "Adam", "EncoderOutput", "FoldResult", "GradCheckReport", "LstmLayer",
    "ModelConfig", "ModelIOError", "ModelParams", "PerplexityReport",
    "TrainConfig", "TrainingDivergedError", "TrainLogEntry", "Vocab",
    "attend", "build_vocab", "cross_validate", "decode_greedy",
    "decode_greedy_batch", "desk_config", "encode", "evaluate_loss",
    "exact_symbol_set_accuracy", "format_cv_table", "gradient_check",
    "init_params", "load_model",
    "lstm_cell_step", "paper_config", "perplexity", "perplexity_from_probs",
    "save_model", "softmax", "train", "write_training_log",
    "PAD_ID", "START_ID", "END_ID", "OOV_ID",
    "PAD_TOKEN", "START_TOKEN", "END_TOKEN", "OOV_TOKEN", "RESERVED",
]
