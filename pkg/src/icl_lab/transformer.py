"""Encoder-only transformer on real-vector prompts.

The prompt embeds as an (n+1) x d_model matrix whose rows carry
(x_i, y_i, 0...0, 0) for the examples and (x, 0, 0...0, 1) for the
query; the final column is the positional flag identifying the query.
Each block applies residual multi-head softmax attention, with the
1/sqrt(d_model) scaling inside the softmax argument, followed by a
residual one-hidden-layer FFN applied rowwise.  The prediction is read
from the query row's response slot, entry (n+1, d+1).

One parameter set serves every context length n in [1, N]; nothing in
the architecture depends on n.  No layer normalization by default (an
optional flag adds a parameter-free pre-norm for stability studies).
"""

from dataclasses import dataclass, field, asdict
import json
import os

import numpy as np

from . import autodiff as ad
from .errors import ContextLengthError


@dataclass(frozen=True)
class TFConfig:
    blocks: int = 3
    heads: int = 1
    d_model: int = 32
    d_ffn: int = 64
    activation: str = "gelu"
    max_context: int = 512
    clip: float = 10.0
    input_dim: int = 1
    layer_norm: bool = False

    def __post_init__(self):
        if self.d_model < self.input_dim + 2:
            raise ValueError("d_model must be at least input_dim + 2")
        if self.max_context < 1 or self.blocks < 1 or self.heads < 1:
            raise ValueError("blocks, heads and max_context must be positive")
        if self.clip <= 0:
            raise ValueError("clip bound must be positive")
        if self.activation not in ("relu", "gelu", "silu"):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class AttnHeadParams:
    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray


@dataclass
class FfnParams:
    W1: np.ndarray
    W2: np.ndarray
    v: np.ndarray


@dataclass
class TransformerParams:
    config: TFConfig
    blocks: list = field(default_factory=list)  # [(list[AttnHeadParams], FfnParams)]

    def named_tensors(self):
        """Deterministic (name, array) walk used for checkpoints and grads."""
        for b, (heads, ffn) in enumerate(self.blocks):
            for h, head in enumerate(heads):
                yield f"block{b}.head{h}.Q", head.Q
                yield f"block{b}.head{h}.K", head.K
                yield f"block{b}.head{h}.V", head.V
            yield f"block{b}.ffn.W1", ffn.W1
            yield f"block{b}.ffn.W2", ffn.W2
            yield f"block{b}.ffn.v", ffn.v

    def tensor_arrays(self):
        return [arr for _, arr in self.named_tensors()]


def init_params(cfg: TFConfig, scheme: str = "default",
                rng: np.random.Generator = None) -> TransformerParams:
    """Gaussian init (std 0.02) for projections and the FFN input layer;
    the FFN output and biases start at zero, so the fresh network is the
    identity on the embedding and predicts 0 everywhere."""
    if scheme not in ("default", "zero"):
        raise ValueError(f"unknown init scheme {scheme!r}")
    if scheme == "default" and rng is None:
        raise ValueError("default init needs a generator")
    dm, dffn = cfg.d_model, cfg.d_ffn

    def proj():
        if scheme == "zero":
            return np.zeros((dm, dm))
        return 0.02 * rng.standard_normal((dm, dm))

    blocks = []
    for _ in range(cfg.blocks):
        heads = [AttnHeadParams(proj(), proj(), proj()) for _ in range(cfg.heads)]
        W1 = np.zeros((dm, dffn)) if scheme == "zero" \
            else 0.02 * rng.standard_normal((dm, dffn))
        ffn = FfnParams(W1, np.zeros((dffn, dm)), np.zeros(dffn))
        blocks.append((heads, ffn))
    return TransformerParams(cfg, blocks)


# ---------------------------------------------------------------------------
# Embedding and plain (inference) forward
# ---------------------------------------------------------------------------

def embed_prompt(xs, ys, query, d_model: int, max_context: int = None) -> np.ndarray:
    """(n+1) x d_model input matrix with the query flag in the last column."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.asarray(ys, dtype=float)
    n, d = xs.shape
    if n == 0 or (max_context is not None and n > max_context):
        raise ContextLengthError(f"context length {n} outside [1, {max_context}]")
    if d_model < d + 2:
        raise ValueError("d_model too small for the input dimension")
    Z = np.zeros((n + 1, d_model))
    Z[:n, :d] = xs
    Z[:n, d] = ys
    Z[n, :d] = np.atleast_1d(np.asarray(query, dtype=float))
    Z[n, d_model - 1] = 1.0
    return Z


def _softmax_rows(a: np.ndarray) -> np.ndarray:
    e = np.exp(a - a.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _layernorm_rows(a: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    mu = a.mean(axis=-1, keepdims=True)
    var = ((a - mu) ** 2).mean(axis=-1, keepdims=True)
    return (a - mu) / np.sqrt(var + eps)


def attention_forward(heads, Z: np.ndarray, layer_norm: bool = False) -> np.ndarray:
    """Z + sum_h softmax(Z Q_h K_h^T Z^T / sqrt(d_model)) Z V_h."""
    dm = Z.shape[-1]
    src = _layernorm_rows(Z) if layer_norm else Z
    out = Z.copy()
    for head in heads:
        scores = (src @ head.Q) @ np.swapaxes(src @ head.K, -1, -2) / np.sqrt(dm)
        out = out + _softmax_rows(scores) @ (src @ head.V)
    return out


def ffn_forward(ffn: FfnParams, Z: np.ndarray, rho: str,
                layer_norm: bool = False) -> np.ndarray:
    """Z + rho(Z W1 + 1 v^T) W2, the activation applied entrywise."""
    src = _layernorm_rows(Z) if layer_norm else Z
    hidden = src @ ffn.W1 + ffn.v
    if rho == "relu":
        act = np.maximum(hidden, 0.0)
    elif rho == "gelu":
        act = hidden * ad._gauss_cdf(hidden)
    else:
        act = hidden / (1.0 + np.exp(-hidden))
    return Z + act @ ffn.W2


def forward_matrix(params: TransformerParams, Z: np.ndarray) -> np.ndarray:
    cfg = params.config
    for heads, ffn in params.blocks:
        Z = attention_forward(heads, Z, cfg.layer_norm)
        Z = ffn_forward(ffn, Z, cfg.activation, cfg.layer_norm)
    return Z


def tf_forward(params: TransformerParams, xs, ys, query) -> float:
    """Read . TF . embed: the scalar prediction at the query."""
    cfg = params.config
    Z = embed_prompt(xs, ys, query, cfg.d_model, cfg.max_context)
    out = forward_matrix(params, Z)
    n = len(np.asarray(ys))
    return float(out[n, cfg.input_dim])


def predict_clipped(params: TransformerParams, xs, ys, query,
                    clip: float = None) -> float:
    bound = params.config.clip if clip is None else clip
    if bound <= 0:
        raise ValueError("clip bound must be positive")
    raw = tf_forward(params, xs, ys, query)
    return float(min(max(raw, -bound), bound))


# ---------------------------------------------------------------------------
# Taped forward for training (batched over episodes)
# ---------------------------------------------------------------------------

def embed_batch(eps_xs: np.ndarray, eps_ys: np.ndarray, queries: np.ndarray,
                cfg: TFConfig) -> np.ndarray:
    """(B, n+1, d_model) embedding of B same-length episodes."""
    B, n, d = eps_xs.shape
    if n == 0 or n > cfg.max_context:
        raise ContextLengthError(f"context length {n} outside [1, {cfg.max_context}]")
    Z = np.zeros((B, n + 1, cfg.d_model))
    Z[:, :n, :d] = eps_xs
    Z[:, :n, d] = eps_ys
    Z[:, n, :d] = queries
    Z[:, n, cfg.d_model - 1] = 1.0
    return Z


def params_to_tape(tape: ad.Tape, params: TransformerParams):
    """Wrap every parameter array as a tape parameter, in checkpoint order."""
    return [tape.param(arr) for arr in params.tensor_arrays()]


def forward_tape(tape: ad.Tape, cfg: TFConfig, tensors: list,
                 Z_batch: np.ndarray) -> ad.Tensor:
    """Taped forward returning the (B,) vector of read-out predictions."""
    n_plus_1 = Z_batch.shape[1]
    Z = tape.tensor(Z_batch)
    it = iter(tensors)
    for _ in range(cfg.blocks):
        src = ad.rowwise_layernorm(Z) if cfg.layer_norm else Z
        acc = Z
        for _ in range(cfg.heads):
            Q, K, V = next(it), next(it), next(it)
            zq = ad.matmul(src, Q)
            zk = ad.matmul(src, K)
            scores = ad.scale(ad.matmul(zq, ad.transpose(zk)), 1.0 / np.sqrt(cfg.d_model))
            attn = ad.rowwise_softmax(scores)
            acc = ad.add(acc, ad.matmul(attn, ad.matmul(src, V)))
        Z = acc
        src = ad.rowwise_layernorm(Z) if cfg.layer_norm else Z
        W1, W2, v = next(it), next(it), next(it)
        hidden = ad.activation(ad.add(ad.matmul(src, W1), v), cfg.activation)
        Z = ad.add(Z, ad.matmul(hidden, W2))
    return ad.pick(Z, n_plus_1 - 1, cfg.input_dim)


def batch_loss(tape: ad.Tape, cfg: TFConfig, tensors: list, Z_batch: np.ndarray,
               targets: np.ndarray) -> ad.Tensor:
    """Mean squared prediction error over a batch of episodes."""
    preds = forward_tape(tape, cfg, tensors, Z_batch)
    return ad.mse_loss(preds, tape.tensor(targets))


# ---------------------------------------------------------------------------
# Checkpoints: manifest JSON plus raw little-endian doubles
# ---------------------------------------------------------------------------

def save_checkpoint(params: TransformerParams, json_path: str,
                    extra_tensors: dict = None, meta: dict = None):
    """Write ``json_path`` (manifest) and the sibling ``.bin`` payload.

    Tensors are concatenated in manifest order as little-endian float64.
    """
    extra_tensors = extra_tensors or {}
    entries = []
    blobs = []
    offset = 0
    for name, arr in list(params.named_tensors()) + sorted(extra_tensors.items()):
        a = np.asarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape),
                        "offset": offset, "size": int(a.size)})
        blobs.append(a.tobytes())
        offset += a.size
    manifest = {
        "config": asdict(params.config),
        "tensors": entries,
        "meta": meta or {},
    }
    bin_path = os.path.splitext(json_path)[0] + ".bin"
    with open(json_path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    with open(bin_path, "wb") as fh:
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(json_path: str):
    """(params, extra tensors, meta) from a manifest/payload pair."""
    with open(json_path) as fh:
        manifest = json.load(fh)
    cfg = TFConfig(**manifest["config"])
    bin_path = os.path.splitext(json_path)[0] + ".bin"
    flat = np.fromfile(bin_path, dtype="<f8")
    tensors = {}
    for entry in manifest["tensors"]:
        chunk = flat[entry["offset"]:entry["offset"] + entry["size"]]
        tensors[entry["name"]] = chunk.reshape(entry["shape"]).astype(np.float64)
    params = init_params(cfg, scheme="zero")
    for name, arr in params.named_tensors():
        arr[...] = tensors.pop(name)
    return params, tensors, manifest.get("meta", {})
