import numpy as np
import pytest

from tsa_aqa.data import SynthConfig, generate_synthetic
from tsa_aqa.evaluation import (
    WITH_DN,
    WITHOUT_DN,
    DegenerateSeriesError,
    EmptyListError,
    LengthMismatchError,
    MetricReport,
    NoExemplarAvailableError,
    ZeroRangeError,
    aiou,
    interval_iou,
    relative_l2,
    select_exemplars,
    spearman,
    vote,
)


@pytest.fixture(scope="module")
def train_set():
    return generate_synthetic(SynthConfig(n_instances=120, t=16, d=8, seed=11))


# ---------------- exemplar selection ----------------

def test_forced_single_exemplar(train_set):
    query = train_set[0].annotation
    pool = [i for i in train_set
            if i.annotation.action_code == query.action_code
            and i.annotation.video_id != query.video_id]
    forced = [train_set[0], pool[0]]
    picked = select_exemplars(forced, query, m=1, mode=WITH_DN, seed=0)
    assert picked[0].annotation.video_id == pool[0].annotation.video_id


def test_query_never_selected(train_set):
    query = train_set[3].annotation
    for seed in range(20):
        for mode in (WITH_DN, WITHOUT_DN):
            picked = select_exemplars(train_set, query, m=10, mode=mode, seed=seed)
            assert all(p.annotation.video_id != query.video_id for p in picked)
            if mode == WITH_DN:
                assert all(
                    p.annotation.action_code == query.action_code for p in picked
                )


def test_selection_deterministic(train_set):
    query = train_set[5].annotation
    a = select_exemplars(train_set, query, m=10, mode=WITHOUT_DN, seed=0)
    b = select_exemplars(train_set, query, m=10, mode=WITHOUT_DN, seed=0)
    assert [x.annotation.video_id for x in a] == [x.annotation.video_id for x in b]
    c = select_exemplars(train_set, query, m=10, mode=WITHOUT_DN, seed=1)
    assert [x.annotation.video_id for x in a] != [x.annotation.video_id for x in c]


def test_selection_without_replacement_when_possible(train_set):
    query = train_set[5].annotation
    picked = select_exemplars(train_set, query, m=10, mode=WITHOUT_DN, seed=0)
    ids = [x.annotation.video_id for x in picked]
    assert len(set(ids)) == 10


def test_no_exemplar_available(train_set):
    query = train_set[0].annotation
    with pytest.raises(NoExemplarAvailableError):
        select_exemplars([train_set[0]], query, m=1, mode=WITH_DN, seed=0)


# ---------------- voting ----------------

def test_vote_identical_pairs_equals_single():
    assert vote([(2.0, 70.0)] * 7) == pytest.approx(72.0)


def test_vote_mean():
    assert vote([(0.0, 70.0), (0.0, 80.0)]) == pytest.approx(75.0)
    assert vote([(0.0, 70.0), (0.0, 72.0), (0.0, 77.0)]) == pytest.approx(73.0)


def test_vote_permutation_invariant():
    rng = np.random.default_rng(0)
    pairs = [(float(r), float(z)) for r, z in rng.uniform(0, 10, (9, 2))]
    base = vote(pairs)
    for _ in range(10):
        rng.shuffle(pairs)
        assert vote(pairs) == pytest.approx(base, abs=1e-12)


def test_vote_empty():
    with pytest.raises(EmptyListError):
        vote([])


# ---------------- AIoU ----------------

def test_iou_exact_match_hits_every_threshold():
    pred = [[10, 20], [5, 30]]
    for d in (0.1, 0.5, 0.75, 1.0):
        assert aiou(pred, pred, d) == 1.0


def test_iou_worked_example():
    v = interval_iou([10, 20], [12, 22])
    assert v == pytest.approx(8.0 / 12.0)
    assert aiou([[10, 20]], [[12, 22]], 0.5) == 1.0
    assert aiou([[10, 20]], [[12, 22]], 0.75) == 0.0


def test_aiou_two_samples():
    preds = [[10, 20], [10, 20]]
    gts = [[12, 22], [16, 26]]  # IoUs 8/12 and 4/16
    assert aiou(preds, gts, 0.5) == pytest.approx(0.5)


def test_aiou_non_increasing_in_threshold():
    rng = np.random.default_rng(1)
    preds, gts = [], []
    for _ in range(60):
        p = sorted(rng.integers(1, 40, 2).tolist())
        g = sorted(rng.integers(1, 40, 2).tolist())
        preds.append([p[0], p[0] + 1 + p[1]])
        gts.append([g[0], g[0] + 1 + g[1]])
    values = [aiou(preds, gts, d) for d in (0.0, 0.25, 0.5, 0.75, 0.9, 1.0)]
    assert values == sorted(values, reverse=True)
    assert values[0] == 1.0  # d=0 counts every overlapping pair


def brute_force_iou_l2(pred, gt):
    p1, p2 = pred
    g1, g2 = gt
    inter = max(0.0, min(p2, g2) - max(p1, g1))
    union = (p2 - p1) + (g2 - g1) - inter
    return inter / union if union > 0 else 1.0


def test_interval_iou_matches_brute_force_l2():
    rng = np.random.default_rng(2)
    for _ in range(500):
        t1 = int(rng.integers(1, 24))
        t2 = int(rng.integers(t1 + 1, 48))
        g1 = int(rng.integers(1, 24))
        g2 = int(rng.integers(g1 + 1, 48))
        assert interval_iou([t1, t2], [g1, g2]) == pytest.approx(
            brute_force_iou_l2([t1, t2], [g1, g2]), abs=1e-12
        )


def test_interval_iou_union_of_intervals_for_l3():
    # pred boxes [2,5],[5,9]; gt boxes [3,6],[6,10]: union [2,10], inter [3,9]
    assert interval_iou([2, 5, 9], [3, 6, 10]) == pytest.approx(6.0 / 8.0)


def test_aiou_length_mismatch():
    with pytest.raises(LengthMismatchError):
        aiou([[1, 2]], [[1, 2], [3, 4]], 0.5)
    with pytest.raises(LengthMismatchError):
        interval_iou([1, 2, 3], [1, 2])
    with pytest.raises(LengthMismatchError):
        interval_iou([1], [2])


# ---------------- Spearman ----------------

def closed_form_rho(rank_a, rank_b):
    n = len(rank_a)
    d2 = sum((a - b) ** 2 for a, b in zip(rank_a, rank_b))
    return 1 - 6 * d2 / (n * (n**2 - 1))


def test_spearman_identical_and_reversed():
    y = [3.0, 1.0, 4.0, 1.5, 9.0]
    assert spearman(y, y) == pytest.approx(1.0)
    assert spearman(y, [-v for v in y]) == pytest.approx(-1.0)


def test_spearman_worked_example():
    assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)


def test_spearman_matches_closed_form_on_permutations():
    rng = np.random.default_rng(3)
    for _ in range(200):
        n = int(rng.integers(3, 30))
        a = rng.permutation(n) + 1.0
        b = rng.permutation(n) + 1.0
        assert spearman(a, b) == pytest.approx(closed_form_rho(a, b), abs=1e-12)


def test_spearman_invariant_under_monotone_transform():
    rng = np.random.default_rng(4)
    y = rng.standard_normal(20)
    z = rng.standard_normal(20)
    base = spearman(y, z)
    assert spearman(np.exp(y), z) == pytest.approx(base, abs=1e-12)
    assert spearman(y, 3.0 * z + 7.0) == pytest.approx(base, abs=1e-12)


def test_spearman_ties_use_average_ranks():
    # ranks of [1,2,2,4]: 1, 2.5, 2.5, 4
    rho = spearman([1.0, 2.0, 2.0, 4.0], [1.0, 2.0, 3.0, 4.0])
    ra = np.array([1.0, 2.5, 2.5, 4.0])
    rb = np.array([1.0, 2.0, 3.0, 4.0])
    expected = np.corrcoef(ra, rb)[0, 1]
    assert rho == pytest.approx(expected, abs=1e-12)


def test_spearman_degenerate():
    with pytest.raises(DegenerateSeriesError):
        spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(DegenerateSeriesError):
        spearman([1.0], [1.0])


# ---------------- relative L2 ----------------

def test_relative_l2_examples():
    assert relative_l2([80.0, 90.0, 100.0], [85.0, 90.0, 95.0], 100.0, 80.0) == (
        pytest.approx(10.0 / 3.0 / 20.0)
    )
    assert relative_l2([50.0], [50.0], 100.0, 0.0) == 0.0
    assert relative_l2([0.0], [100.0], 100.0, 0.0) == 1.0


def test_relative_l2_translation_invariance():
    y = [60.0, 70.0, 85.0]
    yh = [62.0, 69.0, 80.0]
    base = relative_l2(y, yh, 100.0, 50.0)
    c = 13.5
    shifted = relative_l2(
        [v + c for v in y], [v + c for v in yh], 100.0 + c, 50.0 + c
    )
    assert shifted == pytest.approx(base, abs=1e-12)


def test_relative_l2_zero_range():
    with pytest.raises(ZeroRangeError):
        relative_l2([1.0], [1.0], 50.0, 50.0)


# ---------------- MetricReport ----------------

def test_metric_report_validation_and_json():
    report = MetricReport(
        aiou={0.5: 0.8, 0.75: 0.3}, spearman_rho=0.91, relative_l2=0.004, n=200
    ).validate()
    doc = report.to_json()
    assert '"relative_l2_x100": 0.4' in doc
    row = report.table_row()
    assert "80.00" in row and "30.00" in row
    with pytest.raises(ValueError):
        MetricReport(
            aiou={0.5: 0.2, 0.75: 0.4}, spearman_rho=0.9, relative_l2=0.1, n=5
        ).validate()
