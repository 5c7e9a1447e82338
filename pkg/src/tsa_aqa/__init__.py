"""Procedure-aware action quality assessment at desk scale.

Segments an action into steps, cross-attends paired query/exemplar steps,
regresses per-step relative scores, votes over exemplars, and evaluates with
AIoU, Spearman correlation, and relative L2 error.
"""

from .data import (
    FeatureSequence,
    Instance,
    ProcedureAnnotation,
    SynthConfig,
    generate_synthetic,
    load_features,
    read_dataset,
    save_features,
    split_dataset,
    write_dataset,
)
from .evaluation import MetricReport, aiou, relative_l2, select_exemplars, spearman, vote
from .harness import RunConfig, TrainLog, evaluate, evaluate_checkpoint, train
from .lexicon import parse_dive_code, step_count
from .models import ModelSpec, init_model, load_model, save_model

__version__ = "0.1.0"

__all__ = [
    "FeatureSequence", "Instance", "ProcedureAnnotation", "SynthConfig",
    "generate_synthetic", "load_features", "save_features", "read_dataset",
    "write_dataset", "split_dataset",
    "MetricReport", "aiou", "spearman", "relative_l2", "select_exemplars", "vote",
    "RunConfig", "TrainLog", "train", "evaluate", "evaluate_checkpoint",
    "parse_dive_code", "step_count",
    "ModelSpec", "init_model", "save_model", "load_model",
]
