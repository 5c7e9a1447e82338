"""Step extraction, fixed-size resampling, and the cross-attention decoder.

The decoder alternates multi-head cross-attention and MLP blocks with
LayerNorm applied before each block and a residual connection after it.
Query step tokens attend over exemplar step tokens (keys and values); the
MLP block is two layers with a GELU between them. Fixed sinusoidal temporal
encodings are added by the prepare_* helpers, not inside the decoder, so the
raw attention primitive stays position-free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .autodiff.ops import interp_matrix
from .data import FeatureSequence


class DegenerateStepError(ValueError):
    """A step slice would be empty."""


class HeadDivisibilityError(ValueError):
    """Model width is not divisible by the head count."""


@dataclass
class DecoderConfig:
    d_model: int
    layers: int = 3
    heads: int = 8
    l_step: int = 5
    mlp_ratio: int = 4

    def __post_init__(self) -> None:
        if self.layers < 1:
            raise ValueError("need at least one decoder layer")
        if self.d_model % self.heads != 0:
            raise HeadDivisibilityError(
                f"d_model {self.d_model} not divisible by {self.heads} heads"
            )

    @property
    def d_head(self) -> int:
        return self.d_model // self.heads


def extract_steps(values: np.ndarray, transitions: Sequence[int]) -> list[np.ndarray]:
    """Cut the timeline into len(transitions)+1 consecutive step slices.

    With 1-based transitions (t1, ..., tL) the steps cover frames
    [1..t1], (t1..t2], ..., (tL..T]; every frame lands in exactly one step.
    """
    t = values.shape[0]
    edges = [0, *map(int, transitions), t]
    for a, b in zip(edges, edges[1:]):
        if not a < b:
            raise DegenerateStepError(
                f"transitions {tuple(transitions)} leave an empty step on T={t}"
            )
    return [values[a:b] for a, b in zip(edges, edges[1:])]


def resample_step(step: np.ndarray, l_step: int) -> np.ndarray:
    """Linearly interpolate a step to exactly l_step frames along axis 0."""
    if step.shape[0] == 0:
        raise DegenerateStepError("cannot resample an empty step")
    a = interp_matrix(step.shape[0], l_step)
    if step.ndim == 2:
        return a @ step
    return np.einsum("ot,tpd->opd", a, step)


def sinusoidal_positions(length: int, d: int) -> np.ndarray:
    """Fixed sin/cos temporal encodings, one row per frame position."""
    pos = np.arange(length)[:, None]
    i = np.arange(d)[None, :]
    angles = pos / np.power(10000.0, (2 * (i // 2)) / d)
    pe = np.where(i % 2 == 0, np.sin(angles), np.cos(angles))
    return pe


def prepare_query_steps(
    features: FeatureSequence,
    transitions: Sequence[int],
    l_step: int,
) -> list[np.ndarray]:
    """Per-step query tokens: one (l_step, D) block per step, plus positions."""
    pe = sinusoidal_positions(l_step, features.d)
    steps = extract_steps(features.frame_tokens(), transitions)
    return [resample_step(s, l_step) + pe for s in steps]


def prepare_exemplar_steps(
    features: FeatureSequence,
    transitions: Sequence[int],
    l_step: int,
) -> list[np.ndarray]:
    """Per-step key/value tokens: (l_step * P, D) per step.

    All patch tokens of a frame share that frame's position encoding, keeping
    whatever spatial detail the features carry available to attention.
    """
    pe = sinusoidal_positions(l_step, features.d)
    steps = extract_steps(features.patch_tokens(), transitions)
    out = []
    for s in steps:
        r = resample_step(s, l_step) + pe[:, None, :]
        out.append(r.reshape(-1, features.d))
    return out


def init_decoder_params(
    cfg: DecoderConfig, rng: np.random.Generator, prefix: str = "dec."
) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    d, hidden = cfg.d_model, cfg.d_model * cfg.mlp_ratio

    def w(*shape, fan_in):
        return Tensor(rng.normal(0.0, np.sqrt(1.0 / fan_in), shape), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    def ones(*shape):
        return Tensor(np.ones(shape), requires_grad=True)

    for r in range(cfg.layers):
        p = f"{prefix}l{r}."
        params[p + "ln1.g"], params[p + "ln1.b"] = ones(d), zeros(d)
        for name in ("wq", "wk", "wv", "wo"):
            params[p + name] = w(d, d, fan_in=d)
        # no key bias: softmax is invariant to the per-row score shift it
        # would produce, so the parameter would be structurally inert
        for name in ("bq", "bv", "bo"):
            params[p + name] = zeros(d)
        params[p + "ln2.g"], params[p + "ln2.b"] = ones(d), zeros(d)
        params[p + "mlp.w1"] = w(d, hidden, fan_in=d)
        params[p + "mlp.b1"] = zeros(hidden)
        params[p + "mlp.w2"] = w(hidden, d, fan_in=hidden)
        params[p + "mlp.b2"] = zeros(d)
    return params


def _mca(
    x: Tensor, kv: Tensor, params: dict[str, Tensor], p: str, heads: int
) -> Tensor:
    q = ad.add_bias(ad.matmul(x, params[p + "wq"]), params[p + "bq"])
    k = ad.matmul(kv, params[p + "wk"])
    v = ad.add_bias(ad.matmul(kv, params[p + "wv"]), params[p + "bv"])
    att = ad.multi_head_attention(q, k, v, heads)
    return ad.add_bias(ad.matmul(att, params[p + "wo"]), params[p + "bo"])


def decoder_forward(
    query_tokens: np.ndarray | Tensor,
    exemplar_tokens: np.ndarray | Tensor,
    params: dict[str, Tensor],
    cfg: DecoderConfig,
    prefix: str = "dec.",
) -> Tensor:
    """Procedure-aware embedding of one step: query tokens refined over
    exemplar keys/values for cfg.layers rounds. Output shape equals the
    query shape."""
    x = ad.as_tensor(query_tokens)
    kv = ad.as_tensor(exemplar_tokens)
    if x.data.ndim != 2 or x.shape[1] != cfg.d_model:
        raise ad.ShapeMismatchError(f"query tokens must be (*, {cfg.d_model})")
    if kv.data.ndim != 2 or kv.shape[1] != cfg.d_model:
        raise ad.ShapeMismatchError(f"exemplar tokens must be (*, {cfg.d_model})")
    for r in range(cfg.layers):
        p = f"{prefix}l{r}."
        pre = ad.layer_norm(x, params[p + "ln1.g"], params[p + "ln1.b"])
        x = ad.add(_mca(pre, kv, params, p, cfg.heads), x)
        pre = ad.layer_norm(x, params[p + "ln2.g"], params[p + "ln2.b"])
        h = ad.gelu(ad.add_bias(ad.matmul(pre, params[p + "mlp.w1"]),
                                params[p + "mlp.b1"]))
        h = ad.add_bias(ad.matmul(h, params[p + "mlp.w2"]), params[p + "mlp.b2"])
        x = ad.add(h, x)
    return x
