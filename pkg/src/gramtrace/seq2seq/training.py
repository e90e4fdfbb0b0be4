"""Teacher-forced training with hand-written backpropagation.

The loss is mean per-token cross-entropy (natural log) over non-PAD target
positions, END included.  Gradients are exact; ``gradient_check`` compares
them against central finite differences on a tiny model.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import (LstmLayer, ModelConfig, ModelParams, init_params,
                    log_softmax, sigmoid, softmax, zero_params_like)
from .vocab import END_ID, PAD_ID, START_ID, Vocab


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 10
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")


@dataclass(frozen=True)
class TrainLogEntry:
    epoch: int
    loss: float
    wall_time: float


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


def encode_pairs(pairs, in_vocab: Vocab, out_vocab: Vocab, config: ModelConfig):
    """Map token pairs to id pairs, truncating to the configured maxima."""
    encoded = []
    for pair in pairs:
        enc = in_vocab.encode(pair.input_tokens)[:config.max_input_len]
        tgt = out_vocab.encode(pair.target_tokens)[:config.max_output_len - 1]
        encoded.append((enc, tgt))
    return encoded


def make_batches(encoded, batch_size: int, order=None):
    """Pad id pairs into (enc_ids, dec_in, dec_tgt) integer batches."""
    if order is None:
        order = range(len(encoded))
    batches = []
    chunk: list = []
    for idx in order:
        chunk.append(encoded[idx])
        if len(chunk) == batch_size:
            batches.append(_pad_batch(chunk))
            chunk = []
    if chunk:
        batches.append(_pad_batch(chunk))
    return batches


def _pad_batch(chunk):
    batch = len(chunk)
    t_in = max(len(enc) for enc, _ in chunk)
    t_out = max(len(tgt) for _, tgt in chunk) + 1          # room for END / START shift
    enc_ids = np.full((batch, t_in), PAD_ID, dtype=np.intp)
    dec_in = np.full((batch, t_out), PAD_ID, dtype=np.intp)
    dec_tgt = np.full((batch, t_out), PAD_ID, dtype=np.intp)
    for row, (enc, tgt) in enumerate(chunk):
        enc_ids[row, :len(enc)] = enc
        dec_in[row, 0] = START_ID
        dec_in[row, 1:len(tgt) + 1] = tgt
        dec_tgt[row, :len(tgt)] = tgt
        dec_tgt[row, len(tgt)] = END_ID
    return enc_ids, dec_in, dec_tgt


def _stack_forward(layers: list[LstmLayer], x: np.ndarray, mask: Optional[np.ndarray]):
    """Run an LSTM stack over (B, T, D) inputs; returns top outputs, final
    per-layer states, and per-layer caches for the backward pass."""
    batch, steps, _ = x.shape
    inp = x
    finals = []
    caches = []
    for layer in layers:
        h_size = layer.hidden
        h = np.zeros((batch, h_size))
        c = np.zeros((batch, h_size))
        out = np.empty((batch, steps, h_size))
        cache = {"z": [], "i": [], "f": [], "o": [], "g": [],
                 "c_raw": [], "tanh_c": [], "c_prev": []}
        for t in range(steps):
            z = np.concatenate([inp[:, t, :], h], axis=1)
            pre = z @ layer.w + layer.b
            i = sigmoid(pre[:, :h_size])
            f = sigmoid(pre[:, h_size:2 * h_size])
            o = sigmoid(pre[:, 2 * h_size:3 * h_size])
            g = np.tanh(pre[:, 3 * h_size:])
            c_raw = f * c + i * g
            tanh_c = np.tanh(c_raw)
            h_raw = o * tanh_c
            cache["z"].append(z)
            cache["i"].append(i)
            cache["f"].append(f)
            cache["o"].append(o)
            cache["g"].append(g)
            cache["c_raw"].append(c_raw)
            cache["tanh_c"].append(tanh_c)
            cache["c_prev"].append(c)
            if mask is not None:
                keep = mask[:, t:t + 1]
                h = keep * h_raw + (1.0 - keep) * h
                c = keep * c_raw + (1.0 - keep) * c
            else:
                h, c = h_raw, c_raw
            out[:, t, :] = h
        finals.append((h, c))
        caches.append(cache)
        inp = out
    return inp, finals, caches


def _cell_backward(layer: LstmLayer, cache, t: int, dh: np.ndarray, dc: np.ndarray,
                   grad_w: np.ndarray, grad_b: np.ndarray):
    """Backward through one cached cell step; returns (dx, dh_prev, dc_prev)."""
    i, f, o, g = cache["i"][t], cache["f"][t], cache["o"][t], cache["g"][t]
    tanh_c, c_prev, z = cache["tanh_c"][t], cache["c_prev"][t], cache["z"][t]
    do = dh * tanh_c
    dc_total = dc + dh * o * (1.0 - tanh_c ** 2)
    di = dc_total * g
    df = dc_total * c_prev
    dg = dc_total * i
    dc_prev = dc_total * f
    da = np.concatenate([di * i * (1.0 - i), df * f * (1.0 - f),
                         do * o * (1.0 - o), dg * (1.0 - g ** 2)], axis=1)
    grad_w += z.T @ da
    grad_b += da.sum(axis=0)
    dz = da @ layer.w.T
    d_in = z.shape[1] - layer.hidden
    return dz[:, :d_in], dz[:, d_in:], dc_prev


def forward_backward(params: ModelParams, config: ModelConfig, enc_ids: np.ndarray,
                     dec_in: np.ndarray, dec_tgt: np.ndarray, compute_grads: bool = True):
    """One teacher-forced pass.  Returns (loss, token_count, grads_or_None)."""
    batch, t_in = enc_ids.shape
    t_out = dec_in.shape[1]
    h_size = config.hidden_size
    enc_mask = (enc_ids != PAD_ID).astype(np.float64)
    tgt_mask = (dec_tgt != PAD_ID).astype(np.float64)
    n_tokens = tgt_mask.sum()

    x_enc = params.emb_in[enc_ids]
    enc_top, enc_finals, enc_caches = _stack_forward(params.enc, x_enc, enc_mask)

    x_dec = params.emb_out[dec_in]
    dec_states = [(h.copy(), c.copy()) for h, c in enc_finals]
    dec_caches = [{"z": [], "i": [], "f": [], "o": [], "g": [],
                   "c_raw": [], "tanh_c": [], "c_prev": []} for _ in params.dec]
    top_steps, weights_steps, query_steps, comb_steps, comb_in_steps = [], [], [], [], []
    for t in range(t_out):
        x = x_dec[:, t, :]
        for l, layer in enumerate(params.dec):
            h, c = dec_states[l]
            cache = dec_caches[l]
            z = np.concatenate([x, h], axis=1)
            pre = z @ layer.w + layer.b
            i = sigmoid(pre[:, :h_size])
            f = sigmoid(pre[:, h_size:2 * h_size])
            o = sigmoid(pre[:, 2 * h_size:3 * h_size])
            g = np.tanh(pre[:, 3 * h_size:])
            c_new = f * c + i * g
            tanh_c = np.tanh(c_new)
            h_new = o * tanh_c
            cache["z"].append(z)
            cache["i"].append(i)
            cache["f"].append(f)
            cache["o"].append(o)
            cache["g"].append(g)
            cache["c_raw"].append(c_new)
            cache["tanh_c"].append(tanh_c)
            cache["c_prev"].append(c)
            dec_states[l] = (h_new, c_new)
            x = h_new
        h_top = x
        query = h_top @ params.attn
        scores = np.einsum("bh,bth->bt", query, enc_top)
        scores = np.where(enc_mask > 0, scores, -1e30)
        weights = softmax(scores, axis=-1)
        context = np.einsum("bt,bth->bh", weights, enc_top)
        comb_in = np.concatenate([h_top, context], axis=1)
        comb = np.tanh(comb_in @ params.w_comb + params.b_comb)
        top_steps.append(h_top)
        query_steps.append(query)
        weights_steps.append(weights)
        comb_in_steps.append(comb_in)
        comb_steps.append(comb)

    comb_seq = np.stack(comb_steps, axis=1)                     # (B, T_out, H)
    logits = comb_seq @ params.w_out + params.b_out
    logp = log_softmax(logits, axis=-1)
    gold = np.take_along_axis(logp, dec_tgt[:, :, None], axis=2)[:, :, 0]
    loss = float(-(gold * tgt_mask).sum() / n_tokens)

    if not compute_grads:
        return loss, n_tokens, None

    grads = zero_params_like(params)
    grad_layers_enc = [(grads[f"enc{i}.w"], grads[f"enc{i}.b"]) for i in range(len(params.enc))]
    grad_layers_dec = [(grads[f"dec{i}.w"], grads[f"dec{i}.b"]) for i in range(len(params.dec))]

    probs = np.exp(logp)
    dlogits = probs
    np.put_along_axis(dlogits, dec_tgt[:, :, None],
                      np.take_along_axis(dlogits, dec_tgt[:, :, None], axis=2) - 1.0, axis=2)
    dlogits *= tgt_mask[:, :, None] / n_tokens

    grads["w_out"] += comb_seq.reshape(-1, h_size).T @ dlogits.reshape(-1, logits.shape[2])
    grads["b_out"] += dlogits.sum(axis=(0, 1))
    dcomb_seq = dlogits @ params.w_out.T                        # (B, T_out, H)

    denc_top = np.zeros_like(enc_top)
    dh_next = [np.zeros((batch, h_size)) for _ in params.dec]
    dc_next = [np.zeros((batch, h_size)) for _ in params.dec]
    demb_out = grads["emb_out"]
    for t in reversed(range(t_out)):
        comb, comb_in = comb_steps[t], comb_in_steps[t]
        h_top, query, weights = top_steps[t], query_steps[t], weights_steps[t]
        dpre_comb = dcomb_seq[:, t, :] * (1.0 - comb ** 2)
        grads["w_comb"] += comb_in.T @ dpre_comb
        grads["b_comb"] += dpre_comb.sum(axis=0)
        dcomb_in = dpre_comb @ params.w_comb.T
        dh_top = dcomb_in[:, :h_size]
        dctx = dcomb_in[:, h_size:]

        dweights = np.einsum("bh,bth->bt", dctx, enc_top)
        denc_top += weights[:, :, None] * dctx[:, None, :]
        dscores = weights * (dweights - (dweights * weights).sum(axis=1, keepdims=True))
        dscores *= enc_mask
        dquery = np.einsum("bt,bth->bh", dscores, enc_top)
        denc_top += np.einsum("bt,bh->bth", dscores, query)
        grads["attn"] += h_top.T @ dquery
        dh_top = dh_top + dquery @ params.attn.T

        dh = dh_top + dh_next[-1]
        dc = dc_next[-1]
        for l in reversed(range(len(params.dec))):
            dx, dh_prev, dc_prev = _cell_backward(params.dec[l], dec_caches[l], t, dh, dc,
                                                  *grad_layers_dec[l])
            dh_next[l] = dh_prev
            dc_next[l] = dc_prev
            if l > 0:
                dh = dx + dh_next[l - 1]
                dc = dc_next[l - 1]
            else:
                np.add.at(demb_out, dec_in[:, t], dx)

    # Decoder initial states were copies of the encoder finals.
    d_final_h = dh_next
    d_final_c = dc_next

    demb_in = grads["emb_in"]
    dh_next_enc = [d_final_h[l].copy() for l in range(len(params.enc))]
    dc_next_enc = [d_final_c[l].copy() for l in range(len(params.enc))]
    dx_above = [None] * len(params.enc)
    for t in reversed(range(t_in)):
        keep = enc_mask[:, t:t + 1]
        for l in reversed(range(len(params.enc))):
            dh_total = dh_next_enc[l].copy()
            if l == len(params.enc) - 1:
                dh_total += denc_top[:, t, :]
            elif dx_above[l + 1] is not None:
                dh_total += dx_above[l + 1]
            dc_total = dc_next_enc[l]
            dh_raw = keep * dh_total
            dc_raw = keep * dc_total
            dx, dh_prev, dc_prev = _cell_backward(params.enc[l], enc_caches[l], t, dh_raw, dc_raw,
                                                  *grad_layers_enc[l])
            dh_next_enc[l] = dh_prev + (1.0 - keep) * dh_total
            dc_next_enc[l] = dc_prev + (1.0 - keep) * dc_total
            dx_above[l] = dx
        np.add.at(demb_in, enc_ids[:, t], dx_above[0])
        dx_above = [None] * len(params.enc)

    return loss, n_tokens, grads


def clip_gradients(grads: dict, clip_norm: float) -> float:
    total = 0.0
    for arr in grads.values():
        total += float((arr * arr).sum())
    norm = float(np.sqrt(total))
    if norm > clip_norm:
        scale = clip_norm / norm
        for arr in grads.values():
            arr *= scale
    return norm


class Adam:
    """Adaptive-moment gradient descent over a named-array parameter dict."""

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        for name, param in arrays.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(param))
            v = self.v.setdefault(name, np.zeros_like(param))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(train_config: TrainConfig, model_config: ModelConfig, pairs,
          in_vocab: Vocab, out_vocab: Vocab) -> tuple[ModelParams, list[TrainLogEntry]]:
    """Train to convergence on the given pairs; deterministic in the seed."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot train on an empty pair list")
    encoded = encode_pairs(pairs, in_vocab, out_vocab, model_config)
    params = init_params(model_config, len(in_vocab), len(out_vocab), seed=train_config.seed)
    arrays = params.named_arrays()
    optimizer = Adam(train_config.learning_rate)
    shuffle_rng = np.random.default_rng(train_config.seed)
    log: list[TrainLogEntry] = []
    start = time.monotonic()
    for epoch in range(1, train_config.epochs + 1):
        order = shuffle_rng.permutation(len(encoded))
        total_loss = 0.0
        total_tokens = 0.0
        for enc_ids, dec_in, dec_tgt in make_batches(encoded, train_config.batch_size, order):
            loss, n_tokens, grads = forward_backward(params, model_config, enc_ids, dec_in, dec_tgt)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            clip_gradients(grads, train_config.clip_norm)
            optimizer.step(arrays, grads)
            total_loss += loss * n_tokens
            total_tokens += n_tokens
        epoch_loss = total_loss / total_tokens
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(epoch, epoch_loss)
        log.append(TrainLogEntry(epoch, float(epoch_loss), time.monotonic() - start))
    return params, log


def evaluate_loss(params: ModelParams, model_config: ModelConfig, pairs,
                  in_vocab: Vocab, out_vocab: Vocab, batch_size: int = 64) -> float:
    """Mean per-token cross-entropy (nats) without updating parameters."""
    encoded = encode_pairs(pairs, in_vocab, out_vocab, model_config)
    total_loss = 0.0
    total_tokens = 0.0
    for enc_ids, dec_in, dec_tgt in make_batches(encoded, batch_size):
        loss, n_tokens, _ = forward_backward(params, model_config, enc_ids, dec_in, dec_tgt,
                                             compute_grads=False)
        total_loss += loss * n_tokens
        total_tokens += n_tokens
    return total_loss / total_tokens


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    per_param: dict[str, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def gradient_check(model_config: ModelConfig, tolerance: float = 1e-4, step: float = 1e-5,
                   seed: int = 0, tamper: Optional[Callable[[dict], None]] = None) -> GradCheckReport:
    """Compare analytic gradients with central finite differences for every
    parameter of a tiny synthetic model.  ``tamper`` lets tests corrupt the
    analytic gradients to prove the check can fail."""
    if model_config.hidden_size > 8:
        raise ValueError("gradient_check is meant for tiny configs (hidden_size <= 8)")
    rng = np.random.default_rng(seed)
    in_size, out_size = 9, 10
    enc_ids = np.array([[4, 5, 6, 7], [5, 8, PAD_ID, PAD_ID]], dtype=np.intp)
    tgt = [[4, 6, 5], [7, 4]]
    t_out = max(len(t) for t in tgt) + 1
    dec_in = np.full((2, t_out), PAD_ID, dtype=np.intp)
    dec_tgt = np.full((2, t_out), PAD_ID, dtype=np.intp)
    for row, seq in enumerate(tgt):
        dec_in[row, 0] = START_ID
        dec_in[row, 1:len(seq) + 1] = seq
        dec_tgt[row, :len(seq)] = seq
        dec_tgt[row, len(seq)] = END_ID

    params = init_params(model_config, in_size, out_size, seed=int(rng.integers(1 << 31)))
    arrays = params.named_arrays()
    _, _, grads = forward_backward(params, model_config, enc_ids, dec_in, dec_tgt)
    if tamper is not None:
        tamper(grads)

    def loss_at() -> float:
        loss, _, _ = forward_backward(params, model_config, enc_ids, dec_in, dec_tgt,
                                      compute_grads=False)
        return loss

    per_param: dict[str, float] = {}
    worst_name, worst = "", 0.0
    for name, arr in arrays.items():
        flat = arr.reshape(-1)
        grad_flat = grads[name].reshape(-1)
        local_max = 0.0
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            up = loss_at()
            flat[idx] = orig - step
            down = loss_at()
            flat[idx] = orig
            numeric = (up - down) / (2 * step)
            analytic = grad_flat[idx]
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-5)
            local_max = max(local_max, rel)
        per_param[name] = local_max
        if local_max > worst:
            worst, worst_name = local_max, name
    return GradCheckReport(worst, worst_name, per_param, tolerance)
