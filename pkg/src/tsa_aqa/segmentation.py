"""Procedure segmentation: the down-up block, the linear block, transition
decoding, and the per-frame binary cross-entropy objective.

Each down-up sub-block (m, n) runs two temporal convolutions (kernel 3, same
padding) that widen the channel budget to 2m, halves channels to m with a
spatial max-pool, and resamples the timeline to n frames by linear
interpolation. The linear block is a three-layer per-frame MLP whose hidden
width equals the channel width of the last sub-block; a sigmoid turns its
logits into independent per-frame transition probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import FeatureSequence, OutOfRangeError


@dataclass
class SegConfig:
    in_channels: int
    t_out: int
    blocks: tuple[tuple[int, int], ...]
    l_transitions: int = 2

    def __post_init__(self) -> None:
        if self.l_transitions < 1:
            raise ValueError("need at least one step transition")
        if not self.blocks:
            raise ValueError("need at least one down-up sub-block")
        ms = [m for m, _ in self.blocks]
        ns = [n for _, n in self.blocks]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError(f"temporal sizes must strictly increase, got {ns}")
        if any(b >= a for a, b in zip(ms, ms[1:])):
            raise ValueError(f"channel sizes must strictly decrease, got {ms}")
        if ns[-1] != self.t_out:
            raise ValueError(f"last temporal size {ns[-1]} must equal t_out {self.t_out}")

    @property
    def hidden(self) -> int:
        return self.blocks[-1][0]


def init_seg_params(
    cfg: SegConfig, rng: np.random.Generator, prefix: str = "seg."
) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}

    def he(*shape, fan_in):
        return Tensor(rng.normal(0.0, np.sqrt(2.0 / fan_in), shape), requires_grad=True)

    c_in = cfg.in_channels
    for i, (m, _) in enumerate(cfg.blocks):
        wide = 2 * m
        params[f"{prefix}b{i}.conv1.w"] = he(3, c_in, wide, fan_in=3 * c_in)
        params[f"{prefix}b{i}.conv1.b"] = Tensor(np.zeros(wide), requires_grad=True)
        params[f"{prefix}b{i}.conv2.w"] = he(3, wide, wide, fan_in=3 * wide)
        params[f"{prefix}b{i}.conv2.b"] = Tensor(np.zeros(wide), requires_grad=True)
        c_in = m
    h = cfg.hidden
    dims = [(cfg.blocks[-1][0], h), (h, h), (h, cfg.l_transitions)]
    for j, (a, b) in enumerate(dims):
        params[f"{prefix}mlp{j}.w"] = he(a, b, fan_in=a)
        params[f"{prefix}mlp{j}.b"] = Tensor(np.zeros(b), requires_grad=True)
    return params


def seg_forward(
    features: FeatureSequence | np.ndarray,
    params: dict[str, Tensor],
    cfg: SegConfig,
    prefix: str = "seg.",
) -> Tensor:
    """Transition probabilities, one row per transition: (L, t_out) in (0, 1)."""
    values = features.frame_tokens() if isinstance(features, FeatureSequence) else features
    if values.ndim != 2 or values.shape[1] != cfg.in_channels:
        raise ad.ShapeMismatchError(
            f"expected (T, {cfg.in_channels}) features, got {values.shape}"
        )
    x = Tensor(values)
    # gelu rather than relu: the sum-reduced BCE pushes almost every frame's
    # logit down early in training, and a relu trunk can die wholesale under
    # that pressure, freezing the output at a constant
    for i, (_, n) in enumerate(cfg.blocks):
        x = ad.gelu(ad.conv1d(x, params[f"{prefix}b{i}.conv1.w"],
                              params[f"{prefix}b{i}.conv1.b"]))
        x = ad.gelu(ad.conv1d(x, params[f"{prefix}b{i}.conv2.w"],
                              params[f"{prefix}b{i}.conv2.b"]))
        x = ad.max_pool(x, axis=1, k=2)
        x = ad.resample_linear(x, n)
    for j in range(2):
        x = ad.gelu(ad.add_bias(ad.matmul(x, params[f"{prefix}mlp{j}.w"]),
                                params[f"{prefix}mlp{j}.b"]))
    logits = ad.add_bias(ad.matmul(x, params[f"{prefix}mlp2.w"]), params[f"{prefix}mlp2.b"])
    return ad.transpose(ad.sigmoid(logits))


def window_bounds(t: int, l: int, k: int) -> tuple[int, int]:
    """1-based inclusive frame range of decode window k (1-based k).

    Window k holds the frames t with t*l > t_total*(k-1) and t*l <= t_total*k;
    integer arithmetic keeps the bounds exact for any t, l.
    """
    lo = t * (k - 1) // l + 1
    hi = t * k // l
    return lo, hi


def decode_transitions(probs: np.ndarray | Tensor) -> list[int]:
    """Per-row argmax restricted to its window; ties resolve to the smallest
    frame. Returns 1-based frame indices, one per transition row."""
    p = probs.data if isinstance(probs, Tensor) else np.asarray(probs)
    l, t = p.shape
    out = []
    for k in range(1, l + 1):
        lo, hi = window_bounds(t, l, k)
        out.append(lo + int(np.argmax(p[k - 1, lo - 1 : hi])))
    return out


def one_hot_targets(gt_transitions: Sequence[int], l: int, t_out: int) -> np.ndarray:
    targets = np.zeros((l, t_out))
    if len(gt_transitions) != l:
        raise OutOfRangeError(
            f"expected {l} ground-truth transitions, got {len(gt_transitions)}"
        )
    for k, tk in enumerate(gt_transitions):
        if not 1 <= tk <= t_out:
            raise OutOfRangeError(f"transition {tk} outside [1, {t_out}]")
        targets[k, tk - 1] = 1.0
    return targets


def seg_loss(probs: Tensor, gt_transitions: Sequence[int]) -> Tensor:
    """Sum over transitions of framewise BCE against the one-hot target rows."""
    l, t_out = probs.shape
    targets = one_hot_targets(gt_transitions, l, t_out)
    return ad.binary_cross_entropy(probs, targets)
