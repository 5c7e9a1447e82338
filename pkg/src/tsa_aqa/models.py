"""The three scorer variants wired from the shared building blocks.

- DirectScorer: whole-video pooled features through the regression head;
  trained with plain MSE. No segmentation, no attention.
- SegmentedScorer: adds the segmentation net; the score becomes the mean of
  per-step head outputs over steps cut at the predicted transitions, trained
  with BCE + MSE.
- ContrastiveScorer: the full model; per-step query tokens cross-attend the
  paired exemplar's step tokens and the head regresses per-step relative
  scores that are averaged and added to the exemplar's known score.

Checkpoints are self-describing: structural settings ride along as meta.*
tensors inside the same flat binary format as the weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .attention import (
    DecoderConfig,
    decoder_forward,
    init_decoder_params,
    prepare_exemplar_steps,
    prepare_query_steps,
)
from .autodiff import Tensor
from .data import FeatureSequence, Instance, frame_to_feature_index
from .regression import (
    assemble_score,
    init_head_params,
    joint_loss,
    relative_scores,
    step_score,
)
from .segmentation import SegConfig, decode_transitions, init_seg_params, seg_forward

VARIANTS = ("FR", "FSR", "TSA")


class IncompatibleCheckpointError(ValueError):
    """Checkpoint does not match the requested model structure."""


@dataclass(frozen=True)
class ModelSpec:
    """Structural description shared by training, checkpoints, and the CLI."""

    variant: str
    d_model: int
    t_out: int
    l_transitions: int = 2
    l_step: int = 5
    decoder_layers: int = 3
    heads: int = 8
    mlp_ratio: int = 4
    head_hidden: int = 64
    seg_blocks: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant}")
        if self.variant != "FR" and not self.seg_blocks:
            object.__setattr__(self, "seg_blocks", default_seg_blocks(self.t_out))

    def seg_config(self) -> SegConfig:
        return SegConfig(
            in_channels=self.d_model,
            t_out=self.t_out,
            blocks=tuple(tuple(b) for b in self.seg_blocks),
            l_transitions=self.l_transitions,
        )

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(
            d_model=self.d_model,
            layers=self.decoder_layers,
            heads=self.heads,
            l_step=self.l_step,
            mlp_ratio=self.mlp_ratio,
        )


def default_seg_blocks(t_out: int, start_channels: int = 16) -> tuple[tuple[int, int], ...]:
    """Halve channels while doubling time until the timeline reaches t_out."""
    blocks = []
    n = max(2, t_out // 4)
    m = start_channels
    while n < t_out:
        blocks.append((m, n))
        m = max(2, m // 2)
        n *= 2
    blocks.append((m, t_out))
    return tuple(blocks)


def feature_transitions(instance: Instance) -> tuple[int, int]:
    """Ground-truth canonical transitions mapped onto the feature timeline."""
    t1, t2 = instance.annotation.canonical_transitions()
    fc = instance.annotation.frame_count
    t = instance.features.t
    return (
        frame_to_feature_index(t1, fc, t),
        frame_to_feature_index(t2, fc, t),
    )


def cut_safe(transitions: Sequence[int], t: int) -> list[int]:
    """Clamp decoded transitions so no step slice is empty.

    The last decode window includes frame t, which would leave an empty final
    step; clamping walks backwards keeping the list strictly increasing.
    """
    out = list(map(int, transitions))
    limit = t - 1
    for i in range(len(out) - 1, -1, -1):
        out[i] = min(out[i], limit)
        limit = out[i] - 1
    if out[0] < 1:
        raise ValueError(f"timeline of {t} frames cannot host {len(out)} transitions")
    return out


def cached_transitions(
    model, features: FeatureSequence,
    cache: Optional[dict[str, Optional[list[int]]]] = None,
) -> Optional[list[int]]:
    """Decode transitions once per video while parameters are frozen."""
    if cache is not None and features.video_id in cache:
        return cache[features.video_id]
    predicted = model.predict_transitions(features)
    if cache is not None:
        cache[features.video_id] = predicted
    return predicted


class _ScorerBase:
    spec: ModelSpec
    params: dict[str, Tensor]

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def predict_transitions(self, features: FeatureSequence) -> Optional[list[int]]:
        return None

    def transitions_for(
        self, instance: Instance, use_gt: bool,
        cache: Optional[dict[str, Optional[list[int]]]] = None,
    ) -> list[int]:
        """Step-cutting transitions: predicted ones made safe for slicing, or
        the ground truth in oracle mode. The cache holds raw decoded
        transitions and is only valid while the parameters stay fixed."""
        if use_gt:
            return list(feature_transitions(instance))
        predicted = cached_transitions(self, instance.features, cache)
        if predicted is None:
            return list(feature_transitions(instance))
        return cut_safe(predicted, instance.features.t)


class DirectScorer(_ScorerBase):
    """Pooled whole-video features straight into the regression head."""

    variant = "FR"

    def __init__(self, spec: ModelSpec, params: dict[str, Tensor]):
        self.spec = spec
        self.params = params

    @classmethod
    def init(cls, spec: ModelSpec, rng: np.random.Generator) -> "DirectScorer":
        return cls(spec, init_head_params(spec.d_model, spec.head_hidden, rng))

    def _score_graph(self, features: FeatureSequence) -> Tensor:
        return step_score(features.frame_tokens(), self.params)

    def loss_graph(self, query: Instance, exemplar: Instance,
                   use_gt: bool = False, mse_weight: float = 1.0):
        y_hat = self._score_graph(query.features)
        mse = ad.squared_error(y_hat, Tensor(query.annotation.score))
        loss = mse if mse_weight == 1.0 else ad.scale(mse, mse_weight)
        return loss, 0.0, mse.item()

    def pair_relative(self, query: Instance, exemplar: Instance,
                      use_gt: bool = False,
                      cache: Optional[dict[str, list[int]]] = None) -> float:
        with ad.no_grad():
            absolute = self._score_graph(query.features).item()
        return absolute - exemplar.annotation.score


class SegmentedScorer(_ScorerBase):
    """Segmentation-aware direct regression: per-step pooled features."""

    variant = "FSR"

    def __init__(self, spec: ModelSpec, params: dict[str, Tensor]):
        self.spec = spec
        self.params = params
        self._seg_cfg = spec.seg_config()

    @classmethod
    def init(cls, spec: ModelSpec, rng: np.random.Generator) -> "SegmentedScorer":
        params = init_seg_params(spec.seg_config(), rng)
        params.update(init_head_params(spec.d_model, spec.head_hidden, rng))
        return cls(spec, params)

    def probs_graph(self, features: FeatureSequence) -> Tensor:
        return seg_forward(features, self.params, self._seg_cfg)

    def predict_transitions(self, features: FeatureSequence) -> list[int]:
        with ad.no_grad():
            probs = self.probs_graph(features)
        return decode_transitions(probs.data)

    def _score_graph(self, features: FeatureSequence, transitions: Sequence[int]) -> Tensor:
        steps = prepare_query_steps(features, transitions, self.spec.l_step)
        rel = relative_scores(steps, self.params)
        return assemble_score(rel, 0.0)

    def loss_graph(self, query: Instance, exemplar: Instance,
                   use_gt: bool = False, mse_weight: float = 1.0):
        probs = self.probs_graph(query.features)
        gt = feature_transitions(query)
        cut = self.transitions_for(query, use_gt)
        y_hat = self._score_graph(query.features, cut)
        loss = joint_loss(probs, gt, y_hat, query.annotation.score, mse_weight)
        mse = (y_hat.item() - query.annotation.score) ** 2
        return loss, loss.item() - mse_weight * mse, mse

    def pair_relative(self, query: Instance, exemplar: Instance,
                      use_gt: bool = False,
                      cache: Optional[dict[str, list[int]]] = None) -> float:
        cut = self.transitions_for(query, use_gt, cache)
        with ad.no_grad():
            absolute = self._score_graph(query.features, cut).item()
        return absolute - exemplar.annotation.score


class ContrastiveScorer(_ScorerBase):
    """The full model: segmentation, cross-attention, contrastive regression."""

    variant = "TSA"

    def __init__(self, spec: ModelSpec, params: dict[str, Tensor]):
        self.spec = spec
        self.params = params
        self._seg_cfg = spec.seg_config()
        self._dec_cfg = spec.decoder_config()

    @classmethod
    def init(cls, spec: ModelSpec, rng: np.random.Generator) -> "ContrastiveScorer":
        params = init_seg_params(spec.seg_config(), rng)
        params.update(init_decoder_params(spec.decoder_config(), rng))
        params.update(init_head_params(spec.d_model, spec.head_hidden, rng))
        return cls(spec, params)

    def probs_graph(self, features: FeatureSequence) -> Tensor:
        return seg_forward(features, self.params, self._seg_cfg)

    def predict_transitions(self, features: FeatureSequence) -> list[int]:
        with ad.no_grad():
            probs = self.probs_graph(features)
        return decode_transitions(probs.data)

    def step_embeddings(
        self,
        query: FeatureSequence,
        query_transitions: Sequence[int],
        exemplar: FeatureSequence,
        exemplar_transitions: Sequence[int],
    ) -> list[Tensor]:
        q_steps = prepare_query_steps(query, query_transitions, self.spec.l_step)
        z_steps = prepare_exemplar_steps(exemplar, exemplar_transitions, self.spec.l_step)
        return [
            decoder_forward(q, z, self.params, self._dec_cfg)
            for q, z in zip(q_steps, z_steps)
        ]

    def _relative_graph(
        self, query: Instance, exemplar: Instance,
        query_transitions: Sequence[int], exemplar_transitions: Sequence[int],
    ) -> Tensor:
        embeddings = self.step_embeddings(
            query.features, query_transitions, exemplar.features, exemplar_transitions
        )
        rel = relative_scores(embeddings, self.params)
        return assemble_score(rel, 0.0)

    def loss_graph(self, query: Instance, exemplar: Instance,
                   use_gt: bool = False, mse_weight: float = 1.0):
        probs = self.probs_graph(query.features)
        gt = feature_transitions(query)
        q_cut = self.transitions_for(query, use_gt)
        # exemplar labels exist in the training set: cut it at ground truth
        z_cut = list(feature_transitions(exemplar))
        rel = self._relative_graph(query, exemplar, q_cut, z_cut)
        y_hat = ad.add(rel, Tensor(exemplar.annotation.score))
        loss = joint_loss(probs, gt, y_hat, query.annotation.score, mse_weight)
        mse = (y_hat.item() - query.annotation.score) ** 2
        return loss, loss.item() - mse_weight * mse, mse

    def pair_relative(self, query: Instance, exemplar: Instance,
                      use_gt: bool = False,
                      cache: Optional[dict[str, list[int]]] = None) -> float:
        q_cut = self.transitions_for(query, use_gt, cache)
        z_cut = self.transitions_for(exemplar, use_gt, cache)
        with ad.no_grad():
            return self._relative_graph(query, exemplar, q_cut, z_cut).item()


class GroundTruthScorer(_ScorerBase):
    """Oracle plumbing for harness verification: predicts from labels."""

    variant = "ORACLE"

    def __init__(self):
        self.spec = None
        self.params = {}

    def pair_relative(self, query: Instance, exemplar: Instance,
                      use_gt: bool = False,
                      cache: Optional[dict[str, list[int]]] = None) -> float:
        return query.annotation.score - exemplar.annotation.score

    def loss_graph(self, query, exemplar, use_gt: bool = False,
                   mse_weight: float = 1.0):
        raise NotImplementedError("the oracle has no trainable objective")


_MODEL_CLASSES = {
    "FR": DirectScorer,
    "FSR": SegmentedScorer,
    "TSA": ContrastiveScorer,
}


def init_model(spec: ModelSpec, seed: int = 0):
    rng = np.random.default_rng(seed)
    return _MODEL_CLASSES[spec.variant].init(spec, rng)


_META_FIELDS = (
    "d_model", "t_out", "l_transitions", "l_step",
    "decoder_layers", "heads", "mlp_ratio", "head_hidden",
)


def save_model(model, path) -> None:
    blob: dict[str, np.ndarray] = {k: v.data for k, v in model.params.items()}
    spec = model.spec
    blob["meta.variant"] = np.asarray(float(VARIANTS.index(spec.variant)))
    for name in _META_FIELDS:
        blob[f"meta.{name}"] = np.asarray(float(getattr(spec, name)))
    blob["meta.seg_blocks"] = np.asarray(spec.seg_blocks, dtype=np.float64).reshape(-1, 2) \
        if spec.seg_blocks else np.zeros((0, 2))
    ad.save_checkpoint(blob, path)


def load_model(path, expected_spec: ModelSpec | None = None):
    blob = ad.load_checkpoint(path)
    meta = {k[5:]: v for k, v in blob.items() if k.startswith("meta.")}
    weights = {k: v for k, v in blob.items() if not k.startswith("meta.")}
    try:
        variant = VARIANTS[int(meta["variant"])]
        kwargs = {name: int(meta[name]) for name in _META_FIELDS}
        seg_blocks = tuple(
            (int(m), int(n)) for m, n in meta["seg_blocks"].reshape(-1, 2)
        )
    except (KeyError, IndexError) as exc:
        raise IncompatibleCheckpointError(f"missing checkpoint metadata: {exc}") from exc
    spec = ModelSpec(variant=variant, seg_blocks=seg_blocks, **kwargs)
    if expected_spec is not None and spec != expected_spec:
        raise IncompatibleCheckpointError(
            f"checkpoint spec {spec} does not match expected {expected_spec}"
        )
    model = init_model(spec, seed=0)
    for name, tensor in model.params.items():
        if name not in weights:
            raise IncompatibleCheckpointError(f"checkpoint missing tensor {name!r}")
        if weights[name].shape != tensor.data.shape:
            raise IncompatibleCheckpointError(
                f"tensor {name!r}: checkpoint shape {weights[name].shape} "
                f"!= model shape {tensor.data.shape}"
            )
        tensor.data = weights[name].astype(tensor.data.dtype)
    extra = set(weights) - set(model.params)
    if extra:
        raise IncompatibleCheckpointError(f"unexpected tensors in checkpoint: {sorted(extra)}")
    return model
