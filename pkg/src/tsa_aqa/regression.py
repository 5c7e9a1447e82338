"""Contrastive score regression: per-step relative scores, score assembly,
and the joint segmentation + scoring objective.

One shared head serves every step: mean-pool the step embedding over frames,
then a three-layer MLP with ReLU to a single relative score. The predicted
score is the average of the per-step relative scores plus the exemplar's
ground-truth score, and the pair objective is the sum of the segmentation
BCE and the squared score error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .segmentation import seg_loss


@dataclass(frozen=True)
class ScorePrediction:
    per_step_relative: tuple[float, ...]
    predicted_score: float
    exemplar_score: float

    def __post_init__(self) -> None:
        expected = float(np.mean(self.per_step_relative)) + self.exemplar_score
        if self.predicted_score != expected:
            raise ValueError("predicted_score must equal mean(relative) + exemplar")


def init_head_params(
    d_model: int, hidden: int, rng: np.random.Generator, prefix: str = "head."
) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    dims = [(d_model, hidden), (hidden, hidden), (hidden, 1)]
    for j, (a, b) in enumerate(dims):
        w = rng.normal(0.0, np.sqrt(2.0 / a), (a, b))
        params[f"{prefix}mlp{j}.w"] = Tensor(w, requires_grad=True)
        params[f"{prefix}mlp{j}.b"] = Tensor(np.zeros(b), requires_grad=True)
    return params


def step_score(
    embedding: Tensor | np.ndarray, params: dict[str, Tensor], prefix: str = "head."
) -> Tensor:
    """Relative quality of one step: frame-pooled embedding through the MLP."""
    x = ad.as_tensor(embedding)
    if x.data.ndim != 2:
        raise ad.ShapeMismatchError(f"step embedding must be 2-D, got {x.shape}")
    if x.shape[1] != params[f"{prefix}mlp0.w"].shape[0]:
        raise ad.ShapeMismatchError(
            f"embedding width {x.shape[1]} does not match head input "
            f"{params[f'{prefix}mlp0.w'].shape[0]}"
        )
    h = ad.reshape(ad.mean(x, axis=0), (1, x.shape[1]))
    for j in range(2):
        h = ad.relu(ad.add_bias(ad.matmul(h, params[f"{prefix}mlp{j}.w"]),
                                params[f"{prefix}mlp{j}.b"]))
    out = ad.add_bias(ad.matmul(h, params[f"{prefix}mlp2.w"]), params[f"{prefix}mlp2.b"])
    return ad.reshape(out, ())


def relative_scores(
    embeddings: Sequence[Tensor | np.ndarray],
    params: dict[str, Tensor],
    prefix: str = "head.",
) -> list[Tensor]:
    return [step_score(e, params, prefix) for e in embeddings]


def assemble_score(rel_scores: Sequence[Tensor | float], y_z: float) -> Tensor:
    """Predicted score: average of per-step relative scores plus the exemplar
    score."""
    if not rel_scores:
        raise ValueError("need at least one per-step score")
    acc: Tensor | None = None
    for r in rel_scores:
        r = r if isinstance(r, Tensor) else Tensor(float(r))
        acc = r if acc is None else ad.add(acc, r)
    return ad.add(ad.scale(acc, 1.0 / len(rel_scores)), Tensor(float(y_z)))


def predict_score(
    embeddings: Sequence[Tensor | np.ndarray],
    y_z: float,
    params: dict[str, Tensor],
    prefix: str = "head.",
) -> ScorePrediction:
    rel = [float(r.data) for r in relative_scores(embeddings, params, prefix)]
    return ScorePrediction(
        per_step_relative=tuple(rel),
        predicted_score=float(np.mean(rel)) + float(y_z),
        exemplar_score=float(y_z),
    )


def joint_loss(
    probs: Tensor,
    gt_transitions: Sequence[int],
    y_hat: Tensor,
    y_x: float,
    mse_weight: float = 1.0,
) -> Tensor:
    """Pair objective: segmentation BCE plus (weighted) squared score error."""
    mse = ad.squared_error(y_hat, Tensor(float(y_x)))
    if mse_weight != 1.0:
        mse = ad.scale(mse, mse_weight)
    return ad.add(seg_loss(probs, gt_transitions), mse)
