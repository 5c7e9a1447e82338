import math

import numpy as np
import pytest

from tsa_aqa import autodiff as ad
from tsa_aqa.autodiff import Tensor, gradient_check
from tsa_aqa.regression import (
    ScorePrediction,
    assemble_score,
    init_head_params,
    joint_loss,
    predict_score,
    step_score,
)


def head(rng, d=6, hidden=4):
    return init_head_params(d, hidden, rng)


def test_zero_final_layer_scores_zero():
    rng = np.random.default_rng(0)
    params = head(rng)
    params["head.mlp2.w"] = Tensor(np.zeros((4, 1)), requires_grad=True)
    params["head.mlp2.b"] = Tensor(np.zeros(1), requires_grad=True)
    for _ in range(5):
        s = step_score(rng.standard_normal((5, 6)), params)
        assert s.item() == 0.0


def test_step_score_is_finite_scalar():
    rng = np.random.default_rng(1)
    params = head(rng)
    s = step_score(rng.standard_normal((5, 6)), params)
    assert s.shape == ()
    assert math.isfinite(s.item())


def test_step_score_shape_mismatch():
    rng = np.random.default_rng(2)
    params = head(rng)
    with pytest.raises(ad.ShapeMismatchError):
        step_score(rng.standard_normal((5, 7)), params)


def test_assemble_score_examples():
    assert assemble_score([0.0, 0.0, 0.0], 71.5).item() == pytest.approx(71.5)
    assert assemble_score([3.0, -3.0, 0.0], 60.0).item() == pytest.approx(60.0)
    assert assemble_score([1.5, 1.5, 1.5], 80.0).item() == pytest.approx(81.5)


def test_score_prediction_invariant():
    p = predict_score(
        [np.zeros((5, 6)), np.zeros((5, 6))], 50.0,
        head(np.random.default_rng(3)),
    )
    assert p.predicted_score == float(np.mean(p.per_step_relative)) + 50.0
    with pytest.raises(ValueError):
        ScorePrediction((1.0, 2.0), 99.0, 50.0)


def test_score_shift_equivariance():
    rng = np.random.default_rng(4)
    params = head(rng)
    embeddings = [rng.standard_normal((5, 6)) for _ in range(3)]
    base = predict_score(embeddings, 60.0, params).predicted_score
    shifted = predict_score(embeddings, 60.0 + 7.25, params).predicted_score
    assert shifted == pytest.approx(base + 7.25, abs=1e-12)


def test_head_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    params = head(rng, d=4, hidden=3)
    emb = rng.standard_normal((4, 4))
    names = sorted(params)
    tensors = [params[n] for n in names]

    def fn(*ts):
        return step_score(emb, dict(zip(names, ts)))

    assert gradient_check(fn, tensors, rng=rng) <= 1e-4


def test_joint_loss_decomposition():
    probs = Tensor(np.full((2, 12), 0.5), requires_grad=True)
    seg_term = 2 * 12 * math.log(2)
    y_hat = assemble_score([2.0], 70.0)  # 72
    j = joint_loss(probs, [4, 9], y_hat, 70.0)
    assert j.item() == pytest.approx(seg_term + 4.0, rel=1e-12)


def test_joint_loss_perfect_pair_is_tiny():
    eps = 1e-7
    p = np.full((2, 12), eps)
    p[0, 3] = 1 - eps
    p[1, 8] = 1 - eps
    y_hat = assemble_score([0.0, 0.0, 0.0], 81.0)
    j = joint_loss(Tensor(p, requires_grad=True), [4, 9], y_hat, 81.0)
    assert 0.0 <= j.item() <= 1e-5


def test_zero_mse_weight_recovers_pure_segmentation():
    rng = np.random.default_rng(6)
    probs = Tensor(rng.uniform(0.1, 0.9, (2, 12)), requires_grad=True)
    y_hat = assemble_score([5.0], 70.0)
    from tsa_aqa.segmentation import seg_loss

    j = joint_loss(probs, [4, 9], y_hat, 60.0, mse_weight=0.0)
    assert j.item() == pytest.approx(seg_loss(probs, [4, 9]).item())


def test_joint_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    params = head(rng, d=4, hidden=3)
    embeddings = [rng.standard_normal((3, 4)) for _ in range(3)]
    probs_seed = rng.uniform(0.2, 0.8, (2, 8))
    names = sorted(params)
    tensors = [params[n] for n in names] + [Tensor(probs_seed, requires_grad=True)]

    def fn(*ts):
        p = dict(zip(names, ts[:-1]))
        rel = [step_score(e, p) for e in embeddings]
        y_hat = assemble_score(rel, 70.0)
        return joint_loss(ts[-1], [3, 6], y_hat, 74.0)

    assert gradient_check(fn, tensors, rng=rng) <= 1e-4
