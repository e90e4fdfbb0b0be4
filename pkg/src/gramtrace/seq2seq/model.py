"""Stacked-LSTM encoder/decoder with soft attention, in plain numpy.

All math runs in float64.  The decoder stack mirrors the encoder stack
(same depth and width) and is initialized from the encoder's final
per-layer states; attention is applied at the top decoder layer only,
with a bilinear score against the top encoder states.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .vocab import END_ID, PAD_ID, START_ID


@dataclass(frozen=True)
class ModelConfig:
    encoder_layers: int = 3
    decoder_layers: int = 3
    hidden_size: int = 384
    embedding_size: int = 384
    max_input_len: int = 80
    max_output_len: int = 80
    perplexity_base: float = 2.0

    def __post_init__(self):
        for name in ("encoder_layers", "decoder_layers", "hidden_size", "embedding_size",
                     "max_input_len", "max_output_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.perplexity_base <= 1:
            raise ValueError("perplexity_base must exceed 1")
        if self.encoder_layers != self.decoder_layers:
            raise ValueError("decoder stack mirrors the encoder stack; layer counts must match")


def paper_config(**overrides) -> ModelConfig:
    """Full-scale topology: 3+3 layers of 384 cells."""
    return ModelConfig(**overrides)


def desk_config(**overrides) -> ModelConfig:
    """Laptop-scale topology for tests and demos."""
    defaults = dict(encoder_layers=2, decoder_layers=2, hidden_size=64, embedding_size=32)
    defaults.update(overrides)
    return ModelConfig(**defaults)


class LstmLayer:
    """Fused gate parameters for one layer: w is (input+hidden, 4*hidden) in
    gate order [input, forget, output, candidate]; b is (4*hidden,)."""

    def __init__(self, w: np.ndarray, b: np.ndarray):
        self.w = w
        self.b = b
        self.hidden = w.shape[1] // 4

    @property
    def w_i(self): return self.w[:, :self.hidden]
    @property
    def w_f(self): return self.w[:, self.hidden:2 * self.hidden]
    @property
    def w_o(self): return self.w[:, 2 * self.hidden:3 * self.hidden]
    @property
    def w_g(self): return self.w[:, 3 * self.hidden:]
    @property
    def b_i(self): return self.b[:self.hidden]
    @property
    def b_f(self): return self.b[self.hidden:2 * self.hidden]
    @property
    def b_o(self): return self.b[2 * self.hidden:3 * self.hidden]
    @property
    def b_g(self): return self.b[3 * self.hidden:]


@dataclass
class ModelParams:
    emb_in: np.ndarray
    emb_out: np.ndarray
    enc: list[LstmLayer]
    dec: list[LstmLayer]
    attn: np.ndarray
    w_comb: np.ndarray
    b_comb: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = {"emb_in": self.emb_in, "emb_out": self.emb_out}
        for i, layer in enumerate(self.enc):
            out[f"enc{i}.w"] = layer.w
            out[f"enc{i}.b"] = layer.b
        for i, layer in enumerate(self.dec):
            out[f"dec{i}.w"] = layer.w
            out[f"dec{i}.b"] = layer.b
        out.update(attn=self.attn, w_comb=self.w_comb, b_comb=self.b_comb,
                   w_out=self.w_out, b_out=self.b_out)
        return out

    def copy(self) -> "ModelParams":
        return params_from_arrays({name: arr.copy() for name, arr in self.named_arrays().items()},
                                  len(self.enc), len(self.dec))


def params_from_arrays(arrays: dict[str, np.ndarray], encoder_layers: int, decoder_layers: int) -> ModelParams:
    enc = [LstmLayer(arrays[f"enc{i}.w"], arrays[f"enc{i}.b"]) for i in range(encoder_layers)]
    dec = [LstmLayer(arrays[f"dec{i}.w"], arrays[f"dec{i}.b"]) for i in range(decoder_layers)]
    return ModelParams(arrays["emb_in"], arrays["emb_out"], enc, dec,
                       arrays["attn"], arrays["w_comb"], arrays["b_comb"],
                       arrays["w_out"], arrays["b_out"])


def init_params(config: ModelConfig, input_vocab_size: int, output_vocab_size: int,
                seed: int = 0) -> ModelParams:
    """Seeded uniform initialization in +-1/sqrt(fan_in); biases start at zero."""
    rng = np.random.default_rng(seed)
    h, e = config.hidden_size, config.embedding_size

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    def layer(input_size):
        return LstmLayer(uniform((input_size + h, 4 * h), input_size + h), np.zeros(4 * h))

    enc = [layer(e if i == 0 else h) for i in range(config.encoder_layers)]
    dec = [layer(e if i == 0 else h) for i in range(config.decoder_layers)]
    return ModelParams(
        emb_in=uniform((input_vocab_size, e), e),
        emb_out=uniform((output_vocab_size, e), e),
        enc=enc,
        dec=dec,
        attn=uniform((h, h), h),
        w_comb=uniform((2 * h, h), 2 * h),
        b_comb=np.zeros(h),
        w_out=uniform((h, output_vocab_size), h),
        b_out=np.zeros(output_vocab_size),
    )


def zero_params_like(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.named_arrays().items()}


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def lstm_cell_step(layer: LstmLayer, x: np.ndarray, h_prev: np.ndarray,
                   c_prev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One cell update.  The memory is retained additively:
    c' = f*c + i*g, h' = o*tanh(c')."""
    h = layer.hidden
    z = np.concatenate([x, h_prev], axis=-1)
    pre = z @ layer.w + layer.b
    i = sigmoid(pre[..., :h])
    f = sigmoid(pre[..., h:2 * h])
    o = sigmoid(pre[..., 2 * h:3 * h])
    g = np.tanh(pre[..., 3 * h:])
    c_new = f * c_prev + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


def attend(attn: np.ndarray, decoder_state: np.ndarray, encoder_states: np.ndarray,
           mask: Optional[np.ndarray] = None) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear soft attention.

    Scores are decoder_state . attn . encoder_state_t; the softmax over them
    masks the encoder states (weights in [0, 1], summing to 1) and the
    context is the weighted sum of encoder states.  Works on a single state
    (T, H) or a batch (B, T, H).
    """
    if encoder_states.ndim == 2:
        context, weights = attend(attn, decoder_state[None, :], encoder_states[None, :, :],
                                  None if mask is None else mask[None, :])
        return context[0], weights[0]
    query = decoder_state @ attn                                    # (B, H)
    scores = np.einsum("bh,bth->bt", query, encoder_states)         # (B, T)
    if mask is not None:
        scores = np.where(mask > 0, scores, -1e30)
    weights = softmax(scores, axis=-1)
    context = np.einsum("bt,bth->bh", weights, encoder_states)
    return context, weights


@dataclass
class EncoderOutput:
    top_states: np.ndarray            # (B, T, H) top-layer hidden states
    finals: list[tuple[np.ndarray, np.ndarray]]  # per layer (h, c), each (B, H)
    mask: np.ndarray                  # (B, T), 1.0 where the input is real


def encode(params: ModelParams, config: ModelConfig, input_ids) -> EncoderOutput:
    """Run the encoder stack over one sequence or a padded batch.

    PAD positions carry the previous state through unchanged, so the final
    states are those at the last real token and padded tails are inert.
    """
    ids = np.asarray(input_ids, dtype=np.intp)
    single = ids.ndim == 1
    if single:
        ids = ids[None, :]
    if ids.shape[1] > config.max_input_len:
        raise ValueError(f"input length {ids.shape[1]} exceeds max_input_len {config.max_input_len}")
    if ids.size and (ids.min() < 0 or ids.max() >= params.emb_in.shape[0]):
        raise ValueError("input id out of vocabulary range")
    batch, steps = ids.shape
    h_size = config.hidden_size
    mask = (ids != PAD_ID).astype(np.float64)

    x = params.emb_in[ids]                                          # (B, T, E)
    finals: list[tuple[np.ndarray, np.ndarray]] = []
    for layer in params.enc:
        h = np.zeros((batch, h_size))
        c = np.zeros((batch, h_size))
        outputs = np.zeros((batch, steps, h_size))
        for t in range(steps):
            h_raw, c_raw = lstm_cell_step(layer, x[:, t, :], h, c)
            keep = mask[:, t:t + 1]
            h = keep * h_raw + (1.0 - keep) * h
            c = keep * c_raw + (1.0 - keep) * c
            outputs[:, t, :] = h
        finals.append((h, c))
        x = outputs
    return EncoderOutput(x, finals, mask)


def decoder_step(params: ModelParams, token_id: int, states: list[tuple[np.ndarray, np.ndarray]],
                 encoder_output: EncoderOutput) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Advance the decoder stack one step for a single sequence; returns
    output logits and the updated per-layer states."""
    x = params.emb_out[token_id]
    new_states: list[tuple[np.ndarray, np.ndarray]] = []
    for layer, (h, c) in zip(params.dec, states):
        h, c = lstm_cell_step(layer, x, h, c)
        new_states.append((h, c))
        x = h
    top = encoder_output.top_states
    if top.ndim == 3:
        top = top[0]
        mask = encoder_output.mask[0]
    else:
        mask = encoder_output.mask
    context, _ = attend(params.attn, x, top, mask)
    combined = np.tanh(np.concatenate([x, context]) @ params.w_comb + params.b_comb)
    logits = combined @ params.w_out + params.b_out
    return logits, new_states


def decode_greedy(params: ModelParams, encoder_output: EncoderOutput,
                  max_output_len: int) -> list[int]:
    """Greedy decoding: start from START, emit the locally most likely token,
    feed it back, stop at END or the length cap."""
    states = [(h[0] if h.ndim == 2 else h, c[0] if c.ndim == 2 else c)
              for h, c in encoder_output.finals]
    token = START_ID
    out: list[int] = []
    for _ in range(max_output_len):
        logits, states = decoder_step(params, token, states, encoder_output)
        token = int(np.argmax(logits))
        if token == END_ID:
            break
        out.append(token)
    return out


def decode_greedy_batch(params: ModelParams, config: ModelConfig,
                        id_sequences: list[list[int]]) -> list[list[int]]:
    """Greedy-decode many inputs at once; same results as decode_greedy."""
    if not id_sequences:
        return []
    batch = len(id_sequences)
    t_in = max(len(seq) for seq in id_sequences)
    enc_ids = np.full((batch, t_in), PAD_ID, dtype=np.intp)
    for row, seq in enumerate(id_sequences):
        enc_ids[row, :len(seq)] = seq
    enc_out = encode(params, config, enc_ids)
    states = [(h.copy(), c.copy()) for h, c in enc_out.finals]
    tokens = np.full(batch, START_ID, dtype=np.intp)
    done = np.zeros(batch, dtype=bool)
    outputs: list[list[int]] = [[] for _ in range(batch)]
    for _ in range(config.max_output_len):
        x = params.emb_out[tokens]
        for l, layer in enumerate(params.dec):
            h, c = lstm_cell_step(layer, x, *states[l])
            states[l] = (h, c)
            x = h
        context, _ = attend(params.attn, x, enc_out.top_states, enc_out.mask)
        comb = np.tanh(np.concatenate([x, context], axis=1) @ params.w_comb + params.b_comb)
        logits = comb @ params.w_out + params.b_out
        tokens = np.argmax(logits, axis=1)
        done |= tokens == END_ID
        for row in range(batch):
            if not done[row]:
                outputs[row].append(int(tokens[row]))
        if done.all():
            break
    return outputs
