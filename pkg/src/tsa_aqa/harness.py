"""Training loop, pairing, optimization, and end-to-end evaluation.

Every run is reproducible: pairing uses a generator derived from
(seed, epoch), parameters are initialized from the run seed, batches keep
dataset order, and gradient accumulation averages pairs in a fixed order, so
(config, seed, platform) determine every logged number.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .autodiff import backward
from .autodiff.tensor import Tensor
from .data import Instance
from .evaluation import (
    WITH_DN,
    WITHOUT_DN,
    MetricReport,
    aiou,
    relative_l2,
    select_exemplars,
    spearman,
    vote,
)
from .models import (
    ModelSpec,
    cached_transitions,
    feature_transitions,
    init_model,
    load_model,
    save_model,
)


@dataclass
class RunConfig:
    variant: str = "TSA"
    dn_mode: str = WITH_DN
    epochs: int = 50
    lr: float = 1e-3
    batch_size: int = 8
    m_exemplars: int = 10
    l_transitions: int = 2
    l_step: int = 5
    decoder_layers: int = 3
    heads: int = 8
    mlp_ratio: int = 4
    head_hidden: int = 64
    seg_blocks: Optional[tuple[tuple[int, int], ...]] = None
    mse_weight: float = 1.0
    weight_decay: float = 0.0
    seed: int = 0
    use_gt_transitions: bool = False

    def __post_init__(self) -> None:
        if self.m_exemplars < 1:
            raise ValueError("m_exemplars must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.dn_mode not in (WITH_DN, WITHOUT_DN):
            raise ValueError(f"unknown dn_mode {self.dn_mode!r}")

    def model_spec(self, d_model: int, t_out: int) -> ModelSpec:
        return ModelSpec(
            variant=self.variant,
            d_model=d_model,
            t_out=t_out,
            l_transitions=self.l_transitions,
            l_step=self.l_step,
            decoder_layers=self.decoder_layers,
            heads=self.heads,
            mlp_ratio=self.mlp_ratio,
            head_hidden=self.head_hidden,
            seg_blocks=self.seg_blocks or (),
        )

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in doc.items() if k in known}
        if kwargs.get("seg_blocks"):
            kwargs["seg_blocks"] = tuple(tuple(b) for b in kwargs["seg_blocks"])
        return cls(**kwargs)


@dataclass
class EpochStats:
    epoch: int
    mean_joint: float
    mean_bce: float
    mean_mse: float
    wall_time: float


@dataclass
class TrainLog:
    epochs: list[EpochStats] = field(default_factory=list)
    checkpoint_path: Optional[str] = None

    def append(self, stats: EpochStats) -> None:
        self.epochs.append(stats)

    def to_json(self) -> str:
        return json.dumps(
            {
                "epochs": [asdict(e) for e in self.epochs],
                "checkpoint_path": self.checkpoint_path,
            },
            indent=2,
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


class Adam:
    """Adam over a named parameter dict; iteration order is fixed by name."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name in sorted(self.params):
            p = self.params[name]
            g = p.grad
            if g is None:
                continue
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def build_pairs(
    train_set: Sequence[Instance], dn_mode: str, seed: int, epoch: int = 0
) -> list[tuple[Instance, Instance]]:
    """One (query, exemplar) pair per training instance, resampled per epoch."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, epoch]))
    pairs = []
    for query in train_set:
        exemplar = select_exemplars(
            train_set, query.annotation, m=1, mode=dn_mode, rng=rng
        )[0]
        pairs.append((query, exemplar))
    return pairs


def _dataset_dims(dataset: Sequence[Instance]) -> tuple[int, int]:
    if not dataset:
        raise ValueError("empty dataset")
    t, d = dataset[0].features.t, dataset[0].features.d
    for inst in dataset:
        if inst.features.t != t or inst.features.d != d:
            raise ValueError("all instances must share the same (T, D)")
    return d, t


def train(
    config: RunConfig,
    train_set: Sequence[Instance],
    checkpoint_path=None,
    verbose: bool = False,
) -> tuple[object, TrainLog]:
    """Optimize a fresh model of the configured variant on the training set."""
    d_model, t_out = _dataset_dims(train_set)
    model = init_model(config.model_spec(d_model, t_out), seed=config.seed)
    opt = Adam(model.params, lr=config.lr, weight_decay=config.weight_decay)
    log = TrainLog()
    for epoch in range(config.epochs):
        started = time.perf_counter()
        pairs = build_pairs(train_set, config.dn_mode, config.seed, epoch)
        joint_sum = bce_sum = mse_sum = 0.0
        for lo in range(0, len(pairs), config.batch_size):
            batch = pairs[lo : lo + config.batch_size]
            opt.zero_grad()
            for query, exemplar in batch:
                loss, bce_part, mse_part = model.loss_graph(
                    query, exemplar, use_gt=config.use_gt_transitions,
                    mse_weight=config.mse_weight,
                )
                backward(loss, seed=np.asarray(1.0 / len(batch)))
                joint_sum += loss.item()
                bce_sum += bce_part
                mse_sum += mse_part
            opt.step()
        stats = EpochStats(
            epoch=epoch,
            mean_joint=joint_sum / len(pairs),
            mean_bce=bce_sum / len(pairs),
            mean_mse=mse_sum / len(pairs),
            wall_time=time.perf_counter() - started,
        )
        log.append(stats)
        if verbose:
            print(
                f"epoch {epoch:3d}  J {stats.mean_joint:10.4f}  "
                f"bce {stats.mean_bce:10.4f}  mse {stats.mean_mse:10.4f}  "
                f"{stats.wall_time:6.2f}s",
                flush=True,
            )
    if checkpoint_path is not None:
        save_model(model, checkpoint_path)
        log.checkpoint_path = str(checkpoint_path)
    return model, log


def predict_scores(
    model,
    test_set: Sequence[Instance],
    train_set: Sequence[Instance],
    m: int,
    dn_mode: str = WITH_DN,
    seed: int = 0,
    use_gt_transitions: bool = False,
) -> dict:
    """Voted score predictions plus transition lists for every test instance."""
    if not test_set:
        raise ValueError("empty test set")
    rng = np.random.default_rng(seed)
    cache: dict[str, Optional[list[int]]] = {}
    y_true: list[float] = []
    y_pred: list[float] = []
    pred_transitions: list[Optional[list[int]]] = []
    gt_transitions: list[list[int]] = []
    for query in test_set:
        exemplars = select_exemplars(
            train_set, query.annotation, m=m, mode=dn_mode, rng=rng
        )
        pairs = [
            (model.pair_relative(query, z, use_gt=use_gt_transitions, cache=cache),
             z.annotation.score)
            for z in exemplars
        ]
        y_pred.append(vote(pairs))
        y_true.append(query.annotation.score)
        gt = list(feature_transitions(query))
        gt_transitions.append(gt)
        if use_gt_transitions:
            pred_transitions.append(gt)
        else:
            pred_transitions.append(
                cached_transitions(model, query.features, cache)
            )
    return {
        "y_true": y_true,
        "y_pred": y_pred,
        "pred_transitions": pred_transitions,
        "gt_transitions": gt_transitions,
    }


def evaluate(
    model,
    test_set: Sequence[Instance],
    train_set: Sequence[Instance],
    m: int = 10,
    dn_mode: str = WITH_DN,
    seed: int = 0,
    use_gt_transitions: bool = False,
    thresholds: Sequence[float] = (0.5, 0.75),
) -> MetricReport:
    """Multi-exemplar voted evaluation on a held-out set."""
    out = predict_scores(
        model, test_set, train_set, m, dn_mode, seed, use_gt_transitions
    )
    y, y_hat = out["y_true"], out["y_pred"]
    aiou_map: dict[float, float] = {}
    if all(p is not None for p in out["pred_transitions"]):
        for d in thresholds:
            aiou_map[d] = aiou(out["pred_transitions"], out["gt_transitions"], d)
        if use_gt_transitions:
            # oracle transitions coincide with the targets by construction
            assert all(v == 1.0 for v in aiou_map.values())
    return MetricReport(
        aiou=aiou_map,
        spearman_rho=spearman(y, y_hat),
        relative_l2=relative_l2(y, y_hat, max(y), min(y)),
        n=len(test_set),
    ).validate()


def evaluate_checkpoint(
    checkpoint_path,
    test_set: Sequence[Instance],
    train_set: Sequence[Instance],
    m: int = 10,
    dn_mode: str = WITH_DN,
    seed: int = 0,
    use_gt_transitions: bool = False,
) -> MetricReport:
    model = load_model(checkpoint_path)
    return evaluate(
        model, test_set, train_set, m=m, dn_mode=dn_mode, seed=seed,
        use_gt_transitions=use_gt_transitions,
    )
