"""Model container persistence: one .npz holding version, config, both
vocabularies, every parameter tensor, and a content digest."""

from __future__ import annotations

import hashlib
import io as _io
import json
from dataclasses import asdict

import numpy as np

from .model import ModelConfig, ModelParams, params_from_arrays
from .vocab import Vocab

FORMAT_VERSION = 1


class ModelIOError(RuntimeError):
    pass


def _content_digest(arrays: dict[str, np.ndarray], config: ModelConfig,
                    in_tokens: list[str], out_tokens: list[str]) -> str:
    hasher = hashlib.sha256()
    hasher.update(json.dumps({"config": asdict(config), "in": in_tokens, "out": out_tokens},
                             sort_keys=True).encode("utf-8"))
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        hasher.update(name.encode("utf-8"))
        hasher.update(str(arr.shape).encode("utf-8"))
        hasher.update(arr.tobytes())
    return hasher.hexdigest()


def save_model(path, params: ModelParams, config: ModelConfig,
               in_vocab: Vocab, out_vocab: Vocab):
    arrays = params.named_arrays()
    in_tokens = in_vocab.words
    out_tokens = out_vocab.words
    meta = {
        "version": FORMAT_VERSION,
        "config": asdict(config),
        "in_vocab": in_tokens,
        "out_vocab": out_tokens,
        "digest": _content_digest(arrays, config, in_tokens, out_tokens),
    }
    payload = dict(arrays)
    payload["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"),
                                        dtype=np.uint8)
    buffer = _io.BytesIO()
    np.savez(buffer, **payload)
    with open(path, "wb") as handle:
        handle.write(buffer.getvalue())


def load_model(path, expected_config: ModelConfig | None = None):
    """Read back (params, config, in_vocab, out_vocab), verifying the format
    version, the content digest, and optionally the expected config."""
    try:
        with np.load(path) as data:
            payload = {name: data[name] for name in data.files}
    except Exception as exc:
        raise ModelIOError(f"cannot read model file {path}: {exc}") from None
    if "__meta__" not in payload:
        raise ModelIOError("model file is missing its metadata record")
    meta = json.loads(bytes(payload.pop("__meta__")).decode("utf-8"))
    if meta.get("version") != FORMAT_VERSION:
        raise ModelIOError(f"version mismatch: file is v{meta.get('version')}, "
                           f"this build reads v{FORMAT_VERSION}")
    config = ModelConfig(**meta["config"])
    if expected_config is not None and config != expected_config:
        raise ModelIOError("version mismatch: stored config differs from the expected config")
    digest = _content_digest(payload, config, meta["in_vocab"], meta["out_vocab"])
    if digest != meta.get("digest"):
        raise ModelIOError("digest mismatch: model file content is corrupted")
    params = params_from_arrays(payload, config.encoder_layers, config.decoder_layers)
    return params, config, Vocab(meta["in_vocab"]), Vocab(meta["out_vocab"])


def write_training_log(log, path):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("epoch\tloss\twall_time_s\n")
        for entry in log:
            handle.write(f"{entry.epoch}\t{entry.loss:.6f}\t{entry.wall_time:.3f}\n")
