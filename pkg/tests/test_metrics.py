from __future__ import annotations

import numpy as np
import pytest

from cloneforge.metrics import (
    LabeledScores,
    auprc,
    auroc,
    best_f1,
    calibration_sweep,
    confusion_at,
    default_deltas,
    prf1,
)


def pairwise_auroc_oracle(pos: np.ndarray, neg: np.ndarray) -> float:
    """Mean over all (p, n) pairs of [s_p > s_n] + 0.5 [s_p == s_n]."""
    total = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                total += 1.0
            elif sp == sn:
                total += 0.5
    return total / (len(pos) * len(neg))


def auprc_oracle(pos: np.ndarray, neg: np.ndarray) -> float:
    """Enumerate every distinct threshold, integrate precision over recall."""
    thresholds = sorted(set(np.concatenate([pos, neg])), reverse=True)
    points = [(0.0, None)]
    for t in thresholds:
        tp = int(np.sum(pos >= t))
        fp = int(np.sum(neg >= t))
        points.append((tp / len(pos), tp / (tp + fp)))
    points[0] = (0.0, points[1][1])
    area = 0.0
    for (r0, p0), (r1, p1) in zip(points, points[1:]):
        area += (r1 - r0) * (p0 + p1) / 2.0
    return area


def random_scores(rng, allow_ties=True):
    p = int(rng.integers(1, 60))
    n = int(rng.integers(1, 60))
    if allow_ties and rng.uniform() < 0.5:
        # quantize to force tie groups, including cross-class ties
        pos = np.round(rng.normal(size=p), 1)
        neg = np.round(rng.normal(size=n), 1)
    else:
        pos = rng.normal(size=p)
        neg = rng.normal(size=n)
    return pos, neg


class TestConfusion:
    def test_perfect_separation(self):
        scores = LabeledScores(pos_scores=[-1.0, -2.0], neg_scores=[-5.0, -6.0])
        tp, fp, fn, tn = confusion_at(scores, tau=3.0)
        assert (tp, fp, fn, tn) == (2, 0, 0, 2)

    def test_everything_negative(self):
        scores = LabeledScores(pos_scores=[-1.0, -2.0], neg_scores=[-3.0])
        tp, fp, fn, tn = confusion_at(scores, tau=-10.0)  # -tau above all scores
        assert (tp, fp) == (0, 0)
        assert (fn, tn) == (2, 1)

    def test_hand_tally_with_boundary(self):
        scores = LabeledScores(pos_scores=[-1.0, -3.0], neg_scores=[-2.0, -5.0])
        tp, fp, fn, tn = confusion_at(scores, tau=2.0)
        assert (tp, fp, fn, tn) == (1, 1, 1, 1)  # -2 sits on the boundary and counts

    def test_counts_partition_the_sets(self):
        rng = np.random.default_rng(0)
        pos, neg = rng.normal(size=13), rng.normal(size=17)
        scores = LabeledScores(pos_scores=pos, neg_scores=neg)
        for tau in (-2.0, 0.0, 0.7, 3.0):
            tp, fp, fn, tn = confusion_at(scores, tau)
            assert tp + fn == 13
            assert fp + tn == 17


class TestPrf1:
    def test_arithmetic(self):
        p, r, f1 = prf1(99, 1, 5)
        assert p == pytest.approx(0.99)
        assert r == pytest.approx(99 / 104)
        assert f1 == pytest.approx(2 * p * r / (p + r))

    def test_zero_tp_convention(self):
        assert prf1(0, 0, 0) == (0.0, 0.0, 0.0)
        assert prf1(0, 3, 4) == (0.0, 0.0, 0.0)

    def test_standard_formula_not_the_halved_one(self):
        # P=0.9919, R=0.9460 must give ~0.9685 (2PR/(P+R)), not ~0.4842
        p, r = 0.9919, 0.9460
        f1 = 2 * p * r / (p + r)
        assert f1 == pytest.approx(0.9684, abs=5e-4)


class TestAuroc:
    def test_perfect_ordering(self):
        scores = LabeledScores(pos_scores=[3.0, 2.0], neg_scores=[1.0, 0.0])
        assert auroc(scores) == 1.0

    def test_identical_multisets(self):
        v = [0.1, 0.5, 0.9]
        assert auroc(LabeledScores(pos_scores=v, neg_scores=v)) == 0.5

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            auroc(LabeledScores(pos_scores=[], neg_scores=[1.0]))

    def test_matches_pairwise_oracle_exactly(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            pos, neg = random_scores(rng)
            got = auroc(LabeledScores(pos_scores=pos, neg_scores=neg))
            assert abs(got - pairwise_auroc_oracle(pos, neg)) < 1e-12

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(2)
        pos, neg = rng.normal(size=20), rng.normal(size=25)
        a = auroc(LabeledScores(pos_scores=pos, neg_scores=neg))
        b = auroc(LabeledScores(pos_scores=np.exp(pos), neg_scores=np.exp(neg)))
        assert a == pytest.approx(b, abs=1e-12)

    def test_swap_complements_to_one(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            pos, neg = random_scores(rng)
            a = auroc(LabeledScores(pos_scores=pos, neg_scores=neg))
            b = auroc(LabeledScores(pos_scores=neg, neg_scores=pos))
            assert a + b == pytest.approx(1.0, abs=1e-12)


class TestAuprc:
    def test_perfect_separation(self):
        scores = LabeledScores(pos_scores=[3.0, 2.0], neg_scores=[1.0, 0.0])
        assert auprc(scores) == pytest.approx(1.0)

    def test_all_tied_gives_base_rate(self):
        scores = LabeledScores(pos_scores=[1.0] * 3, neg_scores=[1.0] * 9)
        assert auprc(scores) == pytest.approx(3 / 12)

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            pos, neg = random_scores(rng)
            got = auprc(LabeledScores(pos_scores=pos, neg_scores=neg))
            assert abs(got - auprc_oracle(pos, neg)) < 1e-9

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            auprc(LabeledScores(pos_scores=[1.0], neg_scores=[]))


class TestCalibration:
    def test_grid_default_shape(self):
        deltas = default_deltas()
        assert len(deltas) == 21
        assert deltas[0] == -0.5 and deltas[-1] == 0.5

    def test_delta_zero_matches_base_operating_point(self):
        rng = np.random.default_rng(5)
        scores = LabeledScores(pos_scores=-rng.uniform(1, 2, 40), neg_scores=-rng.uniform(2, 4, 40))
        tau = 2.1
        rows = calibration_sweep(scores, tau)
        mid = rows[10]
        assert mid[0] == 0.0
        tp, fp, fn, _ = confusion_at(scores, tau)
        assert mid[1:] == prf1(tp, fp, fn)

    def test_recall_nondecreasing_always(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            pos, neg = random_scores(rng)
            rows = calibration_sweep(LabeledScores(pos_scores=pos, neg_scores=neg), tau=float(rng.normal()))
            recalls = [r[2] for r in rows]
            assert all(b >= a for a, b in zip(recalls, recalls[1:]))

    def test_separated_scores_monotone_both_ways(self):
        # with every positive outranking every negative and a sweep that
        # never empties the prediction set, precision is nonincreasing
        # and recall nondecreasing over the grid
        rng = np.random.default_rng(7)
        scores = LabeledScores(
            pos_scores=-rng.uniform(0.9, 1.1, 50),
            neg_scores=-rng.uniform(1.3, 3.0, 50),
        )
        rows = calibration_sweep(scores, tau=1.5)
        precisions = [r[1] for r in rows]
        recalls = [r[2] for r in rows]
        assert all(b <= a for a, b in zip(precisions, precisions[1:]))
        assert all(b >= a for a, b in zip(recalls, recalls[1:]))


class TestBestF1:
    def test_upper_bounds_operating_f1(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            pos, neg = random_scores(rng)
            scores = LabeledScores(pos_scores=pos, neg_scores=neg)
            tp, fp, fn, _ = confusion_at(scores, tau=float(rng.normal()))
            assert best_f1(scores) >= prf1(tp, fp, fn)[2] - 1e-12

    def test_perfect_separation_reaches_one(self):
        scores = LabeledScores(pos_scores=[5.0, 4.0], neg_scores=[1.0])
        assert best_f1(scores) == pytest.approx(1.0)
