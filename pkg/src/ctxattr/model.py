"""A small pre-layernorm decoder-only transformer in float64 numpy.

The forward pass can record every tensor needed to split each attention
block's output into per-source-token pieces (see :class:`LayerTrace`).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int
    num_heads: int
    d_model: int
    d_head: int
    d_ff: int
    vocab_size: int
    max_seq_len: int
    layernorm_epsilon: float = 1e-5
    stop_id: int = 256
    bos_id: int = 257

    def __post_init__(self):
        for name in ("num_layers", "num_heads", "d_model", "d_head", "d_ff", "max_seq_len"):
            if int(getattr(self, name)) < 1:
                raise InputError(f"{name} must be a positive integer")
        if self.num_heads * self.d_head != self.d_model:
            raise InputError(
                f"num_heads * d_head must equal d_model ({self.num_heads}*{self.d_head} != {self.d_model})"
            )
        if self.vocab_size < 2:
            raise InputError("vocab_size must be >= 2")
        if not (0 < self.layernorm_epsilon < 1):
            raise InputError("layernorm_epsilon must be a small positive real")
        for name in ("stop_id", "bos_id"):
            if not 0 <= getattr(self, name) < self.vocab_size:
                raise InputError(f"{name} must be a valid token id")


@dataclass
class LayerWeights:
    ln1_gain: np.ndarray  # (d,)
    ln1_bias: np.ndarray
    wq: np.ndarray  # (H, d, d_head)
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray  # (d, d); rows h*d_head:(h+1)*d_head belong to head h
    attn_bias: np.ndarray  # (d,)
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray
    w1: np.ndarray  # (d, d_ff)
    b1: np.ndarray
    w2: np.ndarray  # (d_ff, d)
    b2: np.ndarray


LAYER_TENSORS = (
    "ln1_gain", "ln1_bias", "wq", "wk", "wv", "wo", "attn_bias",
    "ln2_gain", "ln2_bias", "w1", "b1", "w2", "b2",
)


@dataclass
class ModelWeights:
    config: ModelConfig
    tok_embedding: np.ndarray  # (V, d)
    pos_embedding: np.ndarray  # (max_seq_len, d)
    layers: list[LayerWeights]
    final_ln_gain: np.ndarray
    final_ln_bias: np.ndarray
    unembedding: np.ndarray  # (d, V)

    def __post_init__(self):
        self.validate()

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        c = self.config
        d, h, dh = c.d_model, c.num_heads, c.d_head
        shapes = {
            "tok_embedding": (c.vocab_size, d),
            "pos_embedding": (c.max_seq_len, d),
            "final_ln_gain": (d,),
            "final_ln_bias": (d,),
            "unembedding": (d, c.vocab_size),
        }
        per_layer = {
            "ln1_gain": (d,), "ln1_bias": (d,),
            "wq": (h, d, dh), "wk": (h, d, dh), "wv": (h, d, dh),
            "wo": (d, d), "attn_bias": (d,),
            "ln2_gain": (d,), "ln2_bias": (d,),
            "w1": (d, c.d_ff), "b1": (c.d_ff,), "w2": (c.d_ff, d), "b2": (d,),
        }
        for i in range(c.num_layers):
            for k, s in per_layer.items():
                shapes[f"layers.{i}.{k}"] = s
        return shapes

    def tensors(self) -> dict[str, np.ndarray]:
        """Flat name -> array view, in a stable order."""
        out = {
            "tok_embedding": self.tok_embedding,
            "pos_embedding": self.pos_embedding,
        }
        for i, layer in enumerate(self.layers):
            for k in LAYER_TENSORS:
                out[f"layers.{i}.{k}"] = getattr(layer, k)
        out["final_ln_gain"] = self.final_ln_gain
        out["final_ln_bias"] = self.final_ln_bias
        out["unembedding"] = self.unembedding
        return out

    @classmethod
    def from_tensors(cls, config: ModelConfig, tensors: dict[str, np.ndarray]) -> "ModelWeights":
        def get(name):
            if name not in tensors:
                raise InputError(f"missing tensor {name!r}")
            return np.ascontiguousarray(tensors[name], dtype=np.float64)

        layers = [
            LayerWeights(**{k: get(f"layers.{i}.{k}") for k in LAYER_TENSORS})
            for i in range(config.num_layers)
        ]
        return cls(
            config=config,
            tok_embedding=get("tok_embedding"),
            pos_embedding=get("pos_embedding"),
            layers=layers,
            final_ln_gain=get("final_ln_gain"),
            final_ln_bias=get("final_ln_bias"),
            unembedding=get("unembedding"),
        )

    def validate(self):
        if len(self.layers) != self.config.num_layers:
            raise InputError(f"expected {self.config.num_layers} layers, got {len(self.layers)}")
        expected = self.expected_shapes()
        for name, arr in self.tensors().items():
            if arr.shape != expected[name]:
                raise InputError(f"tensor {name!r} has shape {arr.shape}, expected {expected[name]}")
            if not np.all(np.isfinite(arr)):
                raise InputError(f"tensor {name!r} has non-finite entries")


@dataclass
class LayerTrace:
    """Internals of one attention block over ``n`` positions.

    The block output decomposes exactly as

        outputs[i] = sum_j transformed(i, j) + bias
        transformed(i, j) = sum_h attn[h, i, j] * head_values[h, j] + (i == j) * residual[i]

    i.e. the residual pass-through is folded into the self term.
    """

    attn: np.ndarray  # (H, n, n), causal, rows are distributions
    ln_input: np.ndarray  # (n, d) layernormed block input
    residual: np.ndarray  # (n, d) block input (residual stream)
    head_values: np.ndarray  # (H, n, d) value vectors pushed through each head's slice of W_O
    bias: np.ndarray  # (d,)
    outputs: np.ndarray  # (n, d) residual + attention output, before the MLP

    @property
    def n(self) -> int:
        return self.outputs.shape[0]

    def transformed(self) -> np.ndarray:
        """Materialize the (n, n, d) tensor of per-source-token vectors (zero above the diagonal)."""
        t = np.einsum("hij,hjd->ijd", self.attn, self.head_values)
        idx = np.arange(self.n)
        t[idx, idx] += self.residual
        return t


@dataclass
class TraceBundle:
    tokens: np.ndarray
    layers: list[LayerTrace] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.tokens)

    @property
    def num_layers(self) -> int:
        return len(self.layers)


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)))


def causal_softmax(scores: np.ndarray) -> np.ndarray:
    """Row softmax over the last two axes with j > i forced to exactly zero."""
    n = scores.shape[-1]
    mask = np.tril(np.ones((n, n), dtype=bool))
    s = np.where(mask, scores, -np.inf)
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def _check_tokens(config: ModelConfig, tokens: Sequence[int]) -> np.ndarray:
    ids = np.asarray(tokens, dtype=np.int64).reshape(-1)
    if ids.size < 1:
        raise InputError("token sequence is empty")
    if ids.size > config.max_seq_len:
        raise InputError(f"sequence of length {ids.size} exceeds max_seq_len={config.max_seq_len}")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise InputError(f"token id out of range [0, {config.vocab_size})")
    return ids


def _attention_block(layer: LayerWeights, x: np.ndarray, config: ModelConfig) -> LayerTrace:
    h = layer_norm(x, layer.ln1_gain, layer.ln1_bias, config.layernorm_epsilon)
    q = h @ layer.wq  # (H, n, d_head)
    k = h @ layer.wk
    v = h @ layer.wv
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(config.d_head)
    attn = causal_softmax(scores)
    wo = layer.wo.reshape(config.num_heads, config.d_head, config.d_model)
    head_values = v @ wo  # (H, n, d)
    mixed = (attn @ head_values).sum(axis=0)
    outputs = x + mixed + layer.attn_bias
    return LayerTrace(attn=attn, ln_input=h, residual=x, head_values=head_values,
                      bias=layer.attn_bias, outputs=outputs)


def _mlp(layer: LayerWeights, y: np.ndarray, config: ModelConfig) -> np.ndarray:
    m = layer_norm(y, layer.ln2_gain, layer.ln2_bias, config.layernorm_epsilon)
    return y + gelu(m @ layer.w1 + layer.b1) @ layer.w2 + layer.b2


def _run(weights: ModelWeights, ids: np.ndarray, keep_trace: bool):
    cfg = weights.config
    x = weights.tok_embedding[ids] + weights.pos_embedding[: len(ids)]
    traces = []
    for layer in weights.layers:
        lt = _attention_block(layer, x, cfg)
        if keep_trace:
            traces.append(lt)
        x = _mlp(layer, lt.outputs, cfg)
    xf = layer_norm(x, weights.final_ln_gain, weights.final_ln_bias, cfg.layernorm_epsilon)
    logits = xf @ weights.unembedding
    return logits, TraceBundle(tokens=ids, layers=traces)


def forward_logits(weights: ModelWeights, tokens: Sequence[int]) -> np.ndarray:
    """Logits (n, V) without keeping the trace."""
    ids = _check_tokens(weights.config, tokens)
    return _run(weights, ids, keep_trace=False)[0]


def forward_trace(weights: ModelWeights, tokens: Sequence[int]) -> tuple[np.ndarray, TraceBundle]:
    """Run the model and return ``(logits, trace)``; logits has one V-vector per position."""
    ids = _check_tokens(weights.config, tokens)
    return _run(weights, ids, keep_trace=True)


class _DecodeCache:
    """Per-layer keys and values for incremental decoding."""

    def __init__(self, weights: ModelWeights):
        self.weights = weights
        self.keys: list[np.ndarray] = []
        self.values: list[np.ndarray] = []
        self.n = 0

    def extend(self, ids: np.ndarray) -> np.ndarray:
        """Feed ``ids`` at positions ``n, n+1, ...``; returns logits of the last one."""
        w, cfg = self.weights, self.weights.config
        m = len(ids)
        x = w.tok_embedding[ids] + w.pos_embedding[self.n:self.n + m]
        first = not self.keys
        for li, layer in enumerate(w.layers):
            h = layer_norm(x, layer.ln1_gain, layer.ln1_bias, cfg.layernorm_epsilon)
            q, k, v = h @ layer.wq, h @ layer.wk, h @ layer.wv
            if first:
                self.keys.append(k)
                self.values.append(v)
            else:
                self.keys[li] = np.concatenate([self.keys[li], k], axis=1)
                self.values[li] = np.concatenate([self.values[li], v], axis=1)
            K, V = self.keys[li], self.values[li]
            scores = q @ K.transpose(0, 2, 1) / np.sqrt(cfg.d_head)  # (H, m, n+m)
            mask = np.arange(self.n + m)[None, :] <= (self.n + np.arange(m))[:, None]
            scores = np.where(mask, scores, -np.inf)
            scores = scores - scores.max(axis=-1, keepdims=True)
            a = np.exp(scores)
            a /= a.sum(axis=-1, keepdims=True)
            wo = layer.wo.reshape(cfg.num_heads, cfg.d_head, cfg.d_model)
            y = x + ((a @ V) @ wo).sum(axis=0) + layer.attn_bias
            x = _mlp(layer, y, cfg)
        self.n += m
        xf = layer_norm(x[-1], w.final_ln_gain, w.final_ln_bias, cfg.layernorm_epsilon)
        return xf @ w.unembedding


def greedy_generate(
    weights: ModelWeights,
    prompt: Sequence[int],
    max_new: int,
    stop_ids: Iterable[int] = (),
) -> tuple[list[int], TraceBundle]:
    """Greedy decoding; the stop token, when emitted, is kept as the last generated token.

    Decoding runs incrementally over cached keys/values; the returned trace is a
    fresh full pass over prompt + generated tokens.
    """
    cfg = weights.config
    ids = _check_tokens(cfg, prompt)
    if max_new < 1:
        raise InputError("max_new must be >= 1")
    if len(ids) + max_new > cfg.max_seq_len:
        raise InputError(
            f"prompt length {len(ids)} + max_new {max_new} exceeds max_seq_len={cfg.max_seq_len}"
        )
    stops = set(int(s) for s in stop_ids)
    cache = _DecodeCache(weights)
    logits = cache.extend(ids)
    generated: list[int] = []
    while True:
        # np.argmax returns the first maximum, i.e. the lowest id on ties
        nxt = int(np.argmax(logits))
        generated.append(nxt)
        if nxt in stops or len(generated) == max_new:
            break
        logits = cache.extend(np.array([nxt], dtype=np.int64))
    _, trace = forward_trace(weights, np.concatenate([ids, np.asarray(generated, dtype=np.int64)]))
    return generated, trace


def random_weights(config: ModelConfig, seed: int) -> ModelWeights:
    """Seeded toy weights.

    Generator: ``numpy.random.default_rng(seed)`` (PCG64). Embeddings are
    N(0, 1); every projection matrix is N(0, 1/fan_in); biases are N(0, 0.02^2);
    layernorm gains are 1 and their biases 0.
    """
    rng = np.random.default_rng(seed)
    c = config
    d, h, dh = c.d_model, c.num_heads, c.d_head

    def normal(shape, std):
        return rng.normal(0.0, std, size=shape)

    tok = normal((c.vocab_size, d), 1.0)
    pos = normal((c.max_seq_len, d), 1.0)
    layers = []
    for _ in range(c.num_layers):
        layers.append(LayerWeights(
            ln1_gain=np.ones(d), ln1_bias=np.zeros(d),
            wq=normal((h, d, dh), d ** -0.5),
            wk=normal((h, d, dh), d ** -0.5),
            wv=normal((h, d, dh), d ** -0.5),
            wo=normal((d, d), d ** -0.5),
            attn_bias=normal((d,), 0.02),
            ln2_gain=np.ones(d), ln2_bias=np.zeros(d),
            w1=normal((d, c.d_ff), d ** -0.5),
            b1=normal((c.d_ff,), 0.02),
            w2=normal((c.d_ff, d), c.d_ff ** -0.5),
            b2=normal((d,), 0.02),
        ))
    return ModelWeights(
        config=c,
        tok_embedding=tok,
        pos_embedding=pos,
        layers=layers,
        final_ln_gain=np.ones(d),
        final_ln_bias=np.zeros(d),
        unembedding=normal((d, c.vocab_size), d ** -0.5),
    )
