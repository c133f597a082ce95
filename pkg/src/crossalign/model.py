"""Toy encoder plus the shared intent (IC), entity (EC) and presence (CA) heads.

The encoder is a stand-in for a pretrained cross-lingual transformer: token and
position embeddings followed by ``num_layers`` single-head self-attention
blocks with tanh feed-forwards and residual connections (no layer norm).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import Tensor

CHECKPOINT_VERSION = 1

# pre-softmax bias for padded keys; exp() of it underflows to exactly 0
MASK_BIAS = -1e30


@dataclass
class EncoderConfig:
    vocab_size: int
    num_intents: int
    num_entity_classes: int
    hidden_size: int = 64
    num_layers: int = 1
    seq_len: int = 24
    pooling_mode: str = "cls"
    encoder_kind: str = "transformer"

    def validate(self) -> None:
        if self.seq_len < 2:
            raise ValueError("seq_len must be >= 2 (position 0 holds CLS)")
        if self.num_entity_classes < 2:
            raise ValueError("num_entity_classes must be >= 2 (O plus one entity type)")
        if self.vocab_size < 3:
            raise ValueError("vocab_size must cover the reserved PAD, CLS and OOV ids")
        for name in ("num_intents", "hidden_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.num_layers < 0:
            raise ValueError("num_layers must be >= 0")
        if self.pooling_mode not in ("cls", "mean"):
            raise ValueError(f"unknown pooling_mode {self.pooling_mode!r}")
        if self.encoder_kind not in ("transformer", "bag"):
            raise ValueError(f"unknown encoder_kind {self.encoder_kind!r}")


@dataclass
class ModelParams:
    config: EncoderConfig
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.items())

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.tensors.items()}


@dataclass
class EncoderOutput:
    cls: Tensor     # batch x H sentence representation (per pooling_mode)
    tokens: Tensor  # batch x seq_len x H
    mask: np.ndarray


def _layer_shapes(cfg: EncoderConfig) -> list[tuple[str, tuple[int, ...]]]:
    h = cfg.hidden_size
    shapes = []
    for i in range(cfg.num_layers):
        p = f"layers.{i}."
        if cfg.encoder_kind == "transformer":
            shapes += [(p + "wq", (h, h)), (p + "wk", (h, h)), (p + "wv", (h, h)),
                       (p + "wo", (h, h))]
        shapes += [(p + "w1", (h, h)), (p + "b1", (h,)), (p + "w2", (h, h)), (p + "b2", (h,))]
    return shapes


def param_shapes(cfg: EncoderConfig) -> list[tuple[str, tuple[int, ...]]]:
    h, e, s = cfg.hidden_size, cfg.num_entity_classes, cfg.seq_len
    return ([("token_embeddings", (cfg.vocab_size, h)), ("position_embeddings", (s, h))]
            + _layer_shapes(cfg)
            + [("ic.weight", (h, cfg.num_intents)), ("ic.bias", (cfg.num_intents,)),
               ("ec.weight", (h, e)), ("ec.bias", (e,)),
               ("ca.weight", (s * e, e)), ("ca.bias", (e,))])


def init_model(config: EncoderConfig, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases, drawn in a fixed name order."""
    config.validate()
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(config):
        if len(shape) == 1:
            data = np.zeros(shape)
        else:
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            data = rng.uniform(-bound, bound, size=shape)
        tensors[name] = T.parameter(data)
    return ModelParams(config, tensors)


def _check_inputs(params: ModelParams, token_ids: np.ndarray, mask: np.ndarray) -> None:
    cfg = params.config
    if token_ids.ndim != 2 or token_ids.shape[1] != cfg.seq_len:
        raise T.ShapeError("encode", f"(batch, {cfg.seq_len}) token ids", token_ids.shape)
    if mask.shape != token_ids.shape:
        raise T.ShapeError("encode", token_ids.shape, mask.shape)
    if token_ids.min() < 0 or token_ids.max() >= cfg.vocab_size:
        raise IndexError(f"encode: token id outside vocabulary of {cfg.vocab_size}")
    if np.any(mask[:, 0] != 1):
        raise ValueError("encode: position 0 (CLS) must be unmasked")


def _pool_weights(mask: np.ndarray) -> np.ndarray:
    m = mask.astype(np.float64)
    return (m / m.sum(axis=1, keepdims=True))[:, None, :]


def encode(params: ModelParams, token_ids, mask, pooling_mode: str | None = None) -> EncoderOutput:
    cfg = params.config
    token_ids = np.asarray(token_ids, dtype=np.int64)
    mask = np.asarray(mask, dtype=np.int64)
    _check_inputs(params, token_ids, mask)
    pooling_mode = pooling_mode or cfg.pooling_mode
    b, s = token_ids.shape
    h = cfg.hidden_size

    x = T.gather_rows(params["token_embeddings"], token_ids.reshape(-1))
    x = T.add(T.reshape(x, (b, s, h)), params["position_embeddings"])

    pool = T.constant(_pool_weights(mask))
    key_bias = T.constant(np.where(mask[:, None, :] == 1, 0.0, MASK_BIAS))
    for i in range(cfg.num_layers):
        p = f"layers.{i}."
        if cfg.encoder_kind == "transformer":
            q = T.matmul(x, params[p + "wq"])
            k = T.matmul(x, params[p + "wk"])
            v = T.matmul(x, params[p + "wv"])
            scores = T.scale(T.matmul(q, T.transpose2d(k)), 1.0 / np.sqrt(h))
            attn = T.softmax_rows(T.add(scores, key_bias))
            x = T.add(x, T.matmul(T.matmul(attn, v), params[p + "wo"]))
        else:
            # bag-of-words context: masked mean broadcast back to every position
            x = T.add(x, T.matmul(pool, x))
        hidden = T.tanh(T.add(T.matmul(x, params[p + "w1"]), params[p + "b1"]))
        x = T.add(x, T.add(T.matmul(hidden, params[p + "w2"]), params[p + "b2"]))

    if pooling_mode == "cls":
        sentence = T.gather_rows(T.reshape(x, (b * s, h)), np.arange(b) * s)
    elif pooling_mode == "mean":
        sentence = T.reshape(T.matmul(pool, x), (b, h))
    else:
        raise ValueError(f"unknown pooling_mode {pooling_mode!r}")
    return EncoderOutput(sentence, x, mask)


def intent_logits(params: ModelParams, cls: Tensor) -> Tensor:
    w = params["ic.weight"]
    if cls.ndim != 2 or cls.shape[1] != w.shape[0]:
        raise T.ShapeError("intent_logits", f"(batch, {w.shape[0]})", cls.shape)
    return T.add(T.matmul(cls, w), params["ic.bias"])


def entity_logits(params: ModelParams, tokens: Tensor) -> Tensor:
    w = params["ec.weight"]
    if tokens.ndim != 3 or tokens.shape[2] != w.shape[0]:
        raise T.ShapeError("entity_logits", f"(batch, seq_len, {w.shape[0]})", tokens.shape)
    return T.add(T.matmul(tokens, w), params["ec.bias"])


def crossaligner_predict(params: ModelParams, ec_logits: Tensor) -> Tensor:
    """Flatten each example's seq_len x E logit matrix row-major and apply the CA head."""
    w = params["ca.weight"]
    cfg = params.config
    expected = (cfg.seq_len, cfg.num_entity_classes)
    if ec_logits.ndim != 3 or ec_logits.shape[1:] != expected:
        raise T.ShapeError("crossaligner_predict", ("batch",) + expected, ec_logits.shape)
    b = ec_logits.shape[0]
    flat = T.reshape(ec_logits, (b, expected[0] * expected[1]))
    if flat.shape[1] != w.shape[0]:
        raise T.ShapeError("crossaligner_predict", w.shape[0], flat.shape[1])
    return T.add(T.matmul(flat, w), params["ca.bias"])


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, params: ModelParams, meta: dict | None = None) -> Path:
    """Write config, free-form metadata and every named array to one ``.npz`` file."""
    path = Path(path)
    header = {"version": CHECKPOINT_VERSION, "config": asdict(params.config), "meta": meta or {}}
    arrays = {f"param/{k}": v.data for k, v in params.tensors.items()}
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    with np.load(Path(path), allow_pickle=False) as npz:
        header = json.loads(str(npz["header"]))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')!r}")
        config = EncoderConfig(**header["config"])
        tensors = {}
        for name, _ in param_shapes(config):
            tensors[name] = T.parameter(npz[f"param/{name}"])
    return ModelParams(config, tensors), header["meta"]
