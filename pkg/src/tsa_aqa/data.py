"""Feature-file ingestion, annotation schema, and the synthetic generator.

Feature files use the "FDFT" binary layout: magic, version u32, T u32, D u32,
P u32 (P=1 means no patch axis), then T*P*D little-endian float32 values in
row-major order. Annotations travel as one JSON document holding an array of
records. The synthetic generator replaces a video backbone at desk scale with
procedure-structured features that a segmenter and scorer can actually learn.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import lexicon
from .autodiff.checkpoint import BadMagicError, TruncatedFileError
from .autodiff.tensor import NonFiniteValueError

FEATURE_MAGIC = b"FDFT"
FEATURE_VERSION = 1


class OutOfRangeError(ValueError):
    """Frame index outside the annotated range."""


class AnnotationError(ValueError):
    """Annotation record violates the schema."""


@dataclass
class FeatureSequence:
    """Temporal feature matrix for one action instance.

    values is (T, D), or (T, P, D) when patch tokens are present.
    """

    video_id: str
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim not in (2, 3):
            raise ValueError(f"values must be (T,D) or (T,P,D), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteValueError(f"{self.video_id}: non-finite feature values")

    @property
    def t(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[-1]

    @property
    def p(self) -> int:
        return self.values.shape[1] if self.values.ndim == 3 else 1

    def frame_tokens(self) -> np.ndarray:
        """One token per frame: patch tokens are mean-pooled if present."""
        if self.values.ndim == 2:
            return self.values
        return self.values.mean(axis=1)

    def patch_tokens(self) -> np.ndarray:
        """(T, P, D) view regardless of whether a patch axis is stored."""
        if self.values.ndim == 3:
            return self.values
        return self.values[:, None, :]


@dataclass
class ProcedureAnnotation:
    video_id: str
    action_code: str
    difficulty: float
    score: float
    frame_count: int
    boundaries: tuple[int, ...]
    judge_scores: Optional[tuple[float, ...]] = None

    def __post_init__(self) -> None:
        self.boundaries = tuple(int(b) for b in self.boundaries)

    def validate(self) -> "ProcedureAnnotation":
        lexicon.validate_code(self.action_code)
        expected = lexicon.step_count(self.action_code) - 1
        if len(self.boundaries) != expected:
            raise AnnotationError(
                f"{self.video_id}: {self.action_code} needs {expected} boundaries, "
                f"got {len(self.boundaries)}"
            )
        if self.score < 0:
            raise AnnotationError(f"{self.video_id}: negative score")
        if any(b2 <= b1 for b1, b2 in zip(self.boundaries, self.boundaries[1:])):
            raise AnnotationError(f"{self.video_id}: boundaries not strictly increasing")
        if self.boundaries and not (
            1 <= self.boundaries[0] and self.boundaries[-1] <= self.frame_count - 1
        ):
            raise AnnotationError(
                f"{self.video_id}: boundaries must lie in [1, {self.frame_count - 1}]"
            )
        return self

    def canonical_transitions(self) -> tuple[int, int]:
        return lexicon.canonical_transitions(self.boundaries)


@dataclass
class Instance:
    features: FeatureSequence
    annotation: ProcedureAnnotation


@dataclass
class SynthConfig:
    n_instances: int
    t: int = 48
    d: int = 32
    p: int = 1
    sigma: float = 0.1
    score_range: tuple[float, float] = (0.0, 100.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.score_range[1] <= self.score_range[0]:
            raise ValueError("score range must satisfy y_max > y_min")
        if self.t < 8:
            raise ValueError("t must be >= 8 so five-step actions fit the timeline")


def save_features(fs: FeatureSequence, path) -> None:
    values = fs.patch_tokens().astype("<f4")
    t, p, d = values.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<IIII", FEATURE_VERSION, t, d, p))
        fh.write(values.tobytes(order="C"))


def load_features(path, video_id: str | None = None) -> FeatureSequence:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FEATURE_MAGIC:
            raise BadMagicError(f"not an FDFT feature file: {path}")
        header = fh.read(16)
        if len(header) != 16:
            raise TruncatedFileError(f"{path}: truncated header")
        version, t, d, p = struct.unpack("<IIII", header)
        if version != FEATURE_VERSION:
            raise ValueError(f"{path}: unsupported feature file version {version}")
        payload = fh.read(4 * t * p * d)
        if len(payload) != 4 * t * p * d:
            raise TruncatedFileError(f"{path}: expected {t}x{p}x{d} float32 values")
    values = np.frombuffer(payload, dtype="<f4").reshape(t, p, d).astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteValueError(f"{path}: non-finite feature values")
    if p == 1:
        values = values[:, 0, :]
    return FeatureSequence(video_id or path.stem, values)


def save_annotations(annotations: Sequence[ProcedureAnnotation], path) -> None:
    doc = [
        {
            "video_id": a.video_id,
            "action_code": a.action_code,
            "difficulty": a.difficulty,
            "score": a.score,
            "judge_scores": list(a.judge_scores) if a.judge_scores else None,
            "frame_count": a.frame_count,
            "boundaries": list(a.boundaries),
        }
        for a in annotations
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)


def load_annotations(path) -> list[ProcedureAnnotation]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    out = []
    for row in doc:
        judge = row.get("judge_scores")
        out.append(
            ProcedureAnnotation(
                video_id=row["video_id"],
                action_code=row["action_code"],
                difficulty=float(row["difficulty"]),
                score=float(row["score"]),
                frame_count=int(row["frame_count"]),
                boundaries=tuple(row["boundaries"]),
                judge_scores=tuple(judge) if judge else None,
            ).validate()
        )
    return out


def frame_to_feature_index(frame: int, frame_count: int, t: int) -> int:
    """Map a 1-based video frame onto the 1-based feature timeline."""
    if not 1 <= frame <= frame_count:
        raise OutOfRangeError(f"frame {frame} outside [1, {frame_count}]")
    return min(max(frame * t // frame_count, 1), t)


def quality_to_score(qualities: Sequence[float], y_min: float, y_max: float) -> float:
    return y_min + (y_max - y_min) * float(np.mean(qualities))


def _place_boundaries(
    rng: np.random.Generator, t: int, n_steps: int
) -> tuple[int, ...]:
    """Boundary frames whose first/last land in the two decode windows.

    The last canonical transition stays below t so the entry step is never
    empty; interior flight boundaries are distinct frames strictly between
    the canonical pair.
    """
    half = t // 2
    n_mid = n_steps - 3
    t1 = int(rng.integers(1, half + 1))
    lo = max(half + 1, t1 + n_mid + 1)
    t2 = int(rng.integers(lo, t))
    if n_mid == 0:
        return (t1, t2)
    mids = rng.choice(np.arange(t1 + 1, t2), size=n_mid, replace=False)
    return (t1, *sorted(int(m) for m in mids), t2)


def _instance_features(
    steps: Sequence[lexicon.SubActionLabel],
    boundaries: Sequence[int],
    qualities: np.ndarray,
    embeddings: dict[str, np.ndarray],
    direction: np.ndarray,
    sigma: float,
    t: int,
    p: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Frame features: sub-action embedding + quality shift + Gaussian noise."""
    t1, t2 = boundaries[0], boundaries[-1]
    edges = (0, *boundaries, t)
    values = np.empty((t, p, len(direction)))
    for step, (lo, hi) in zip(steps, zip(edges, edges[1:])):
        values[lo:hi] = embeddings[step.name]
    canon = np.full(t, 1)
    canon[:t1] = 0
    canon[t2:] = 2
    values += qualities[canon][:, None, None] * direction[None, None, :]
    if sigma > 0:
        values += rng.normal(0.0, sigma, size=values.shape)
    return values if p > 1 else values[:, 0, :]


def generate_synthetic(config: SynthConfig) -> list[Instance]:
    """Deterministic procedure-structured dataset standing in for a backbone.

    Per instance: an action code drawn uniformly from the lexicon, canonical
    transitions placed inside the decode windows, per-step qualities in [0,1],
    and a score that is linear in the mean step quality. Frame features are
    the sub-action embedding plus the step quality along a fixed unit
    direction plus optional Gaussian noise, so the scoring target is
    realizable by the model family.
    """
    rng = np.random.default_rng(config.seed)
    codes = lexicon.all_codes()
    names = sorted({s.name for c in codes for s in lexicon.parse_dive_code(c)})
    d = config.d
    embeddings = {n: rng.normal(0.0, 1.0, d) / math.sqrt(d) for n in names}
    direction = rng.normal(0.0, 1.0, d)
    direction /= np.linalg.norm(direction)
    y_min, y_max = config.score_range

    out: list[Instance] = []
    for i in range(config.n_instances):
        code = codes[int(rng.integers(len(codes)))]
        steps = lexicon.parse_dive_code(code)
        boundaries = _place_boundaries(rng, config.t, len(steps))
        qualities = rng.uniform(0.0, 1.0, size=3)
        score = quality_to_score(qualities, y_min, y_max)
        difficulty = round(float(rng.uniform(2.0, 4.0)), 1)
        values = _instance_features(
            steps, boundaries, qualities, embeddings, direction,
            config.sigma, config.t, config.p, rng,
        )
        video_id = f"synth-{config.seed}-{i:04d}"
        ann = ProcedureAnnotation(
            video_id=video_id,
            action_code=code,
            difficulty=difficulty,
            score=score,
            frame_count=config.t,
            boundaries=boundaries,
        ).validate()
        out.append(Instance(FeatureSequence(video_id, values), ann))
    return out


def split_dataset(
    instances: Sequence[Instance],
    train_fraction: float = 0.75,
    seed: int = 0,
    stratify: bool = True,
) -> tuple[list[Instance], list[Instance]]:
    """Train/test split, stratified by action code so same-code exemplars exist.

    The stratified path hits round(train_fraction * N) exactly: per-code
    quotas start at the floor (at least one instance stays in train) and the
    remainder goes to the codes with the largest fractional parts.
    """
    rng = np.random.default_rng(seed)
    total_train = int(round(train_fraction * len(instances)))
    if not stratify:
        order = rng.permutation(len(instances))
        return (
            [instances[i] for i in order[:total_train]],
            [instances[i] for i in order[total_train:]],
        )
    groups: dict[str, list[int]] = {}
    for i, inst in enumerate(instances):
        groups.setdefault(inst.annotation.action_code, []).append(i)
    quota = {
        code: min(len(idx), max(1, int(train_fraction * len(idx))))
        for code, idx in groups.items()
    }
    remainder = {
        code: train_fraction * len(idx) - quota[code] for code, idx in groups.items()
    }
    short = total_train - sum(quota.values())
    order = sorted(groups, key=lambda c: (-remainder[c], c))
    while short > 0:
        for code in order:
            if short == 0:
                break
            if quota[code] < len(groups[code]):
                quota[code] += 1
                short -= 1
    while short < 0:
        for code in reversed(order):
            if short == 0:
                break
            if quota[code] > 1:
                quota[code] -= 1
                short += 1
    train_idx: list[int] = []
    test_idx: list[int] = []
    for code in sorted(groups):
        idx = groups[code]
        perm = rng.permutation(len(idx))
        train_idx.extend(idx[j] for j in perm[: quota[code]])
        test_idx.extend(idx[j] for j in perm[quota[code] :])
    return (
        [instances[i] for i in sorted(train_idx)],
        [instances[i] for i in sorted(test_idx)],
    )


def write_dataset(instances: Sequence[Instance], out_dir) -> None:
    """Write FDFT feature files plus one annotations.json into out_dir."""
    out_dir = Path(out_dir)
    features_dir = out_dir / "features"
    features_dir.mkdir(parents=True, exist_ok=True)
    for inst in instances:
        save_features(inst.features, features_dir / f"{inst.features.video_id}.fdft")
    save_annotations([i.annotation for i in instances], out_dir / "annotations.json")


def read_dataset(data_dir) -> list[Instance]:
    """Load a directory written by write_dataset."""
    data_dir = Path(data_dir)
    annotations = load_annotations(data_dir / "annotations.json")
    out = []
    for ann in annotations:
        fs = load_features(data_dir / "features" / f"{ann.video_id}.fdft", ann.video_id)
        out.append(Instance(fs, ann))
    return out
