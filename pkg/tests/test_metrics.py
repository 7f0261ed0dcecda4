import numpy as np
import pytest

from promptseg.core import BinaryMask, ScoreMap
from promptseg.errors import DimensionMismatchError, UndefinedMetricError
from promptseg.kernels import connected_components
from promptseg.metrics import (
    HIGHER_BETTER,
    LOWER_BETTER,
    MetricReport,
    MetricValue,
    aggregate,
    auroc,
    average_precision,
    ber,
    dice,
    iou,
    mae,
    pro,
    s_measure,
    weighted_f_measure,
)

from bruteforce import (
    ap_bruteforce,
    auroc_bruteforce,
    pro_bruteforce,
    s_measure_bruteforce,
    weighted_f_bruteforce,
)
from conftest import random_blob_gt, random_disk_gt, random_mask, random_quantized_pred


def masks(pred_bits, gt_bits):
    return BinaryMask(pred_bits), BinaryMask(gt_bits)


class TestMAE:
    def test_identity(self, rng):
        gt = BinaryMask(random_blob_gt(rng, 16))
        assert mae(gt.to_scores(), gt).value == 0.0

    def test_inversion(self, rng):
        gt = BinaryMask(random_blob_gt(rng, 16))
        inv = ScoreMap(1.0 - gt.bits.astype(float))
        assert mae(inv, gt).value == 1.0

    def test_hand_sum(self):
        pred = ScoreMap(np.array([[0.25, 0.75]]))
        gt = BinaryMask(np.array([[False, True]]))
        assert mae(pred, gt).value == pytest.approx(0.25, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            mae(ScoreMap(np.zeros((2, 2))), BinaryMask.zeros(3, 3))

    def test_joint_inversion_symmetry(self, rng):
        pred = ScoreMap(random_quantized_pred(rng, 16))
        gt = BinaryMask(random_blob_gt(rng, 16))
        flipped = ScoreMap(1.0 - pred.scores)
        assert mae(pred, gt).value == pytest.approx(mae(flipped, ~gt).value, abs=1e-12)


class TestSMeasure:
    def test_perfect_match(self, rng):
        gt = BinaryMask(random_blob_gt(rng, 32))
        assert s_measure(gt.to_scores(), gt).value == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_empty_gt(self):
        gt = BinaryMask.zeros(8, 8)
        pred = ScoreMap(np.zeros((8, 8)))
        assert s_measure(pred, gt).value == 1.0
        assert s_measure(ScoreMap(np.full((8, 8), 0.25)), gt).value == pytest.approx(0.75)

    def test_degenerate_full_gt(self):
        gt = BinaryMask.full(8, 8)
        assert s_measure(ScoreMap(np.full((8, 8), 0.8)), gt).value == pytest.approx(0.8)

    def test_direct_definition_oracle_32x32(self, rng):
        for _ in range(20):
            gt = random_blob_gt(rng, 32)
            pred = random_quantized_pred(rng, 32)
            got = s_measure(ScoreMap(pred), BinaryMask(gt)).value
            assert got == pytest.approx(s_measure_bruteforce(pred, gt), abs=1e-9)


class TestWeightedF:
    def test_perfect_match(self, rng):
        gt = BinaryMask(random_blob_gt(rng, 32))
        assert weighted_f_measure(gt.to_scores(), gt).value == pytest.approx(1.0, abs=1e-9)

    def test_zero_recall(self):
        # interior blob: the Gaussian window's zero padding never reaches it
        from conftest import disk_mask

        gt = disk_mask(24, 12, 12, 5)
        assert weighted_f_measure(ScoreMap(np.zeros((24, 24))), gt).value == pytest.approx(
            0.0, abs=1e-12
        )

    def test_empty_gt_flagged_zero(self):
        out = weighted_f_measure(ScoreMap(np.full((8, 8), 0.5)), BinaryMask.zeros(8, 8))
        assert out.value == 0.0 and out.flag == "empty_gt"

    def test_direct_definition_oracle_32x32(self, rng):
        for _ in range(15):
            gt = random_blob_gt(rng, 32)
            pred = random_quantized_pred(rng, 32)
            got = weighted_f_measure(ScoreMap(pred), BinaryMask(gt)).value
            assert got == pytest.approx(weighted_f_bruteforce(pred, gt), abs=1e-9)


class TestBER:
    def test_identity(self, rng):
        gt = BinaryMask(random_blob_gt(rng, 16))
        assert ber(gt, gt).value == 0.0

    def test_complement(self, rng):
        gt = BinaryMask(random_blob_gt(rng, 16))
        assert ber(~gt, gt).value == 1.0

    def test_confusion_counts(self):
        # TP=8 FN=2 FP=1 TN=9 -> (0.1 + 0.2) / 2
        gt = np.zeros((4, 5), dtype=bool)
        gt.ravel()[:10] = True
        pred = gt.copy()
        pred.ravel()[8:10] = False  # 2 FN
        pred.ravel()[10] = True  # 1 FP
        p, g = masks(pred, gt)
        assert ber(p, g).value == pytest.approx(0.15)

    def test_zero_denominator_contributes_zero(self):
        gt = BinaryMask.full(4, 4)  # no negatives: FPR term drops to 0
        pred = BinaryMask.zeros(4, 4)
        assert ber(pred, gt).value == 0.5


class TestIoUDice:
    def test_identity(self, rng):
        gt = BinaryMask(random_blob_gt(rng, 16))
        assert iou(gt, gt).value == 1.0 and dice(gt, gt).value == 1.0

    def test_disjoint(self):
        a = np.zeros((4, 4), dtype=bool)
        b = np.zeros((4, 4), dtype=bool)
        a[0, 0] = True
        b[3, 3] = True
        p, g = masks(a, b)
        assert iou(p, g).value == 0.0 and dice(p, g).value == 0.0

    def test_pixel_counts(self):
        # |P ∩ G| = 6, |P ∪ G| = 10, |P| = |G| = 8
        p = np.zeros((3, 5), dtype=bool)
        g = np.zeros((3, 5), dtype=bool)
        p.ravel()[0:8] = True
        g.ravel()[2:10] = True
        pm, gm = masks(p, g)
        assert iou(pm, gm).value == pytest.approx(0.6)
        assert dice(pm, gm).value == pytest.approx(0.75)

    def test_both_empty(self):
        assert iou(BinaryMask.zeros(2, 2), BinaryMask.zeros(2, 2)).value == 1.0
        assert dice(BinaryMask.zeros(2, 2), BinaryMask.zeros(2, 2)).value == 1.0

    def test_dice_from_iou_identity(self, rng):
        for _ in range(100):
            p = random_mask(rng, 16, rng.uniform(0.1, 0.9))
            g = random_mask(rng, 16, rng.uniform(0.1, 0.9))
            i = iou(p, g).value
            d = dice(p, g).value
            assert d == pytest.approx(2 * i / (1 + i), abs=1e-12)
            assert i <= d + 1e-15


class TestRanking:
    def test_perfect_separation(self):
        assert auroc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]).value == 1.0
        assert average_precision([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]).value == 1.0

    def test_all_ties_is_half(self):
        assert auroc([0.5] * 6, [1, 0, 1, 0, 1, 0]).value == 0.5

    def test_pair_counting_example(self):
        assert auroc([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]).value == pytest.approx(0.75)

    def test_single_class_errors(self):
        with pytest.raises(UndefinedMetricError):
            auroc([0.1, 0.2], [1, 1])
        with pytest.raises(UndefinedMetricError):
            average_precision([0.1, 0.2], [0, 0])

    def test_monotone_invariance(self, rng):
        scores = random_quantized_pred(rng, 8).ravel()
        labels = (rng.random(64) < 0.5).astype(int)
        if labels.sum() in (0, labels.size):
            labels[0] = 1 - labels[0]
        base = auroc(scores, labels).value
        for transform in (lambda s: 0.2 + 0.5 * s, lambda s: s**3, lambda s: np.expm1(s) / 2):
            assert auroc(transform(scores), labels).value == pytest.approx(base, abs=1e-12)

    def test_oracle_equivalence(self, rng):
        for _ in range(20):
            scores = random_quantized_pred(rng, 8).ravel()
            labels = (rng.random(64) < rng.uniform(0.2, 0.8)).astype(int)
            if labels.sum() in (0, labels.size):
                labels[0] = 1 - labels[0]
            assert auroc(scores, labels).value == pytest.approx(
                auroc_bruteforce(scores, labels), abs=1e-12
            )
            assert average_precision(scores, labels).value == pytest.approx(
                ap_bruteforce(scores, labels), abs=1e-12
            )


class TestPRO:
    def test_perfect_match(self, rng):
        gt = BinaryMask(random_disk_gt(rng, 32))
        assert pro([gt.to_scores()], [gt]).value == pytest.approx(1.0, abs=1e-12)

    def test_zero_scores(self, rng):
        gt = BinaryMask(random_disk_gt(rng, 32))
        assert pro([ScoreMap(np.zeros((32, 32)))], [gt]).value == 0.0

    def test_no_anomalies_error(self):
        with pytest.raises(UndefinedMetricError):
            pro([ScoreMap(np.zeros((8, 8)))], [BinaryMask.zeros(8, 8)])

    def test_staircase_two_components(self):
        gt = np.zeros((8, 8), dtype=bool)
        gt[1:3, 1:3] = True
        gt[5:7, 5:7] = True
        scores = (np.arange(64, dtype=np.float64) / 63.0).reshape(8, 8)
        comps = connected_components(BinaryMask(gt))
        comp_list = [(0, comps.label_map == k) for k in range(1, comps.count + 1)]
        got = pro([ScoreMap(scores)], [gt_m := BinaryMask(gt)], 0.3).value
        want = pro_bruteforce([scores], [gt], 0.3, comp_list)
        assert got == pytest.approx(want, abs=1e-6)

    def test_multi_map_oracle(self, rng):
        score_maps, gts, comp_list = [], [], []
        for i in range(3):
            gt = random_disk_gt(rng, 24)
            score_maps.append(random_quantized_pred(rng, 24))
            gts.append(gt)
            comps = connected_components(BinaryMask(gt))
            comp_list.extend((i, comps.label_map == k) for k in range(1, comps.count + 1))
        got = pro([ScoreMap(s) for s in score_maps], [BinaryMask(g) for g in gts], 0.3).value
        want = pro_bruteforce(score_maps, gts, 0.3, comp_list)
        assert got == pytest.approx(want, abs=1e-6)


class TestBounds:
    def test_all_metrics_in_unit_interval(self, rng):
        for _ in range(25):
            gt = BinaryMask(random_blob_gt(rng, 16))
            pred_map = ScoreMap(random_quantized_pred(rng, 16))
            pred_mask = pred_map.binarize(0.5)
            values = [
                mae(pred_map, gt),
                s_measure(pred_map, gt),
                weighted_f_measure(pred_map, gt),
                ber(pred_mask, gt),
                iou(pred_mask, gt),
                dice(pred_mask, gt),
            ]
            for mv in values:
                assert 0.0 <= mv.value <= 1.0

    def test_polarity_registry(self, rng):
        gt = BinaryMask(random_blob_gt(rng, 16))
        assert mae(gt.to_scores(), gt).polarity == LOWER_BETTER
        assert ber(gt, gt).polarity == LOWER_BETTER
        for mv in (s_measure(gt.to_scores(), gt), iou(gt, gt), dice(gt, gt)):
            assert mv.polarity == HIGHER_BETTER

    def test_metric_value_requires_finite(self):
        with pytest.raises(ValueError):
            MetricValue(name="mae", value=float("nan"), polarity=LOWER_BETTER)


def mv(name, value):
    from promptseg.metrics import polarity_of

    return MetricValue(name=name, value=value, polarity=polarity_of(name))


class TestReportsAndAggregation:
    def test_build_means(self):
        report = MetricReport.build(
            [("a", [mv("iou", 1.0)]), ("b", [mv("iou", 0.0)])], dataset="d"
        )
        assert report.aggregate_value("iou") == 0.5

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            MetricReport.build([("a", [mv("iou", 1.0)]), ("a", [mv("iou", 0.5)])])

    def test_single_report_unchanged(self):
        report = MetricReport.build([("a", [mv("dice", 0.8)])], dataset="only")
        out = aggregate([report], "per_dataset_mean")
        assert out[0].aggregate_value("dice") == pytest.approx(0.8)

    def test_cross_dataset_mean_ignores_sizes(self):
        big = MetricReport.build(
            [(f"s{i}", [mv("iou", 0.8)]) for i in range(10)], dataset="big"
        )
        small = MetricReport.build([("t0", [mv("iou", 0.6)])], dataset="small")
        cross = aggregate([big, small], "cross_dataset_mean")
        assert cross.aggregate_value("iou") == pytest.approx(0.7)

    def test_cross_requires_same_metric_set(self):
        a = MetricReport.build([("a", [mv("iou", 0.5)])], dataset="a")
        b = MetricReport.build([("b", [mv("dice", 0.5)])], dataset="b")
        with pytest.raises(ValueError):
            aggregate([a, b], "cross_dataset_mean")

    def test_empty_input_errors(self):
        with pytest.raises(ValueError):
            aggregate([], "cross_dataset_mean")
