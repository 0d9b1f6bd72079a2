"""Setting filters, greedy matching, and the log-average miss rate."""

import math

import numpy as np
import pytest

from msfusion.evaluation import (
    FPPI_REFERENCE_POINTS,
    STANDARD_SETTINGS,
    FrameRecord,
    GroundTruthBox,
    apply_setting,
    evaluate_matrix,
    log_average_miss_rate,
    match_frame,
    miss_rate_curve,
)
from msfusion.geometry import BBox, Detection
from oracles import match_frame_ref

RNG = np.random.default_rng


def gt(x0, y0, x1, y1, occlusion="none", ignore=False):
    return GroundTruthBox(BBox(x0, y0, x1, y1), occlusion, ignore)


def det(x0, y0, x1, y1, score, frame="f0"):
    return Detection(BBox(x0, y0, x1, y1), score, "fused", "s80", frame)


class TestApplySetting:
    def test_reasonable_inclusion_rules(self):
        setting = STANDARD_SETTINGS["reasonable"]
        tall_clear = gt(0, 0, 30, 60)  # height 60, unoccluded
        short = gt(0, 0, 30, 50)  # height 50
        tall_heavy = gt(0, 0, 30, 80, occlusion="heavy")
        tall_partial = gt(0, 0, 30, 80, occlusion="partial")
        evaluated, ignored = apply_setting(
            [tall_clear, short, tall_heavy, tall_partial], setting
        )
        assert evaluated == [tall_clear, tall_partial]
        assert ignored == [short, tall_heavy]

    def test_boundary_height_55_is_excluded(self):
        evaluated, ignored = apply_setting(
            [gt(0, 0, 30, 55)], STANDARD_SETTINGS["reasonable"]
        )
        assert evaluated == [] and len(ignored) == 1

    def test_medium_boundaries_are_closed(self):
        setting = STANDARD_SETTINGS["medium"]
        low = gt(0, 0, 30, 45)
        high = gt(0, 0, 30, 115)
        evaluated, _ = apply_setting([low, high], setting)
        assert evaluated == [low, high]

    def test_near_and_far_boundaries_are_open(self):
        assert apply_setting([gt(0, 0, 30, 115)], STANDARD_SETTINGS["near"])[0] == []
        assert apply_setting([gt(0, 0, 30, 45)], STANDARD_SETTINGS["far"])[0] == []

    def test_ignore_flag_always_ignored(self):
        evaluated, ignored = apply_setting(
            [gt(0, 0, 30, 80, ignore=True)], STANDARD_SETTINGS["all"]
        )
        assert evaluated == [] and len(ignored) == 1

    def test_partition_is_disjoint_and_complete(self):
        rng = RNG(1)
        gts = [
            gt(0, 0, 20, float(rng.uniform(20, 150)), occ, bool(rng.uniform() < 0.2))
            for occ in rng.choice(["none", "partial", "heavy"], size=30)
        ]
        for setting in STANDARD_SETTINGS.values():
            evaluated, ignored = apply_setting(gts, setting)
            assert len(evaluated) + len(ignored) == len(gts)
            assert not (set(map(id, evaluated)) & set(map(id, ignored)))


class TestMatchFrame:
    def test_exact_hit(self):
        result = match_frame([det(0, 0, 30, 90, 0.9)], [gt(0, 0, 30, 90)], [], 0.5)
        assert (result.tp, result.fp, result.misses) == (1, 0, 0)

    def test_no_detections_all_missed(self):
        result = match_frame([], [gt(0, 0, 30, 90)], [], 0.5)
        assert (result.tp, result.fp, result.misses) == (0, 0, 1)

    def test_detection_on_ignored_gt_is_neutral(self):
        result = match_frame(
            [det(0, 0, 30, 90, 0.9)], [], [gt(0, 0, 30, 90, ignore=True)], 0.5
        )
        assert (result.tp, result.fp, result.misses) == (0, 0, 0)
        assert result.outcomes[0][1] == "ignored"

    def test_counts_identities(self):
        rng = RNG(2)
        for _ in range(30):
            dets = [
                det(x, y, x + w, y + h, round(float(rng.uniform(0, 1)), 3))
                for x, y, w, h in rng.uniform(0, 40, (6, 4)) + [0, 0, 5, 5]
            ]
            gts = [
                gt(x, y, x + w, y + h)
                for x, y, w, h in rng.uniform(0, 40, (4, 4)) + [0, 0, 5, 5]
            ]
            evaluated, ignored = gts[:3], gts[3:]
            result = match_frame(dets, evaluated, ignored, 0.5)
            assert result.tp + result.misses == len(evaluated)
            assert result.tp + result.fp <= len(dets)

    def test_matches_greedy_oracle(self):
        rng = RNG(3)
        for _ in range(50):
            dets = [
                det(x, y, x + w, y + h, round(float(rng.uniform(0, 1)), 3))
                for x, y, w, h in rng.uniform(0, 30, (6, 4)) + [0, 0, 8, 8]
            ]
            gts = [
                gt(x, y, x + w, y + h)
                for x, y, w, h in rng.uniform(0, 30, (4, 4)) + [0, 0, 8, 8]
            ]
            evaluated, ignored = gts[:3], gts[3:]
            result = match_frame(dets, evaluated, ignored, 0.4)
            want = match_frame_ref(dets, evaluated, ignored, 0.4)
            assert (result.tp, result.fp, result.misses) == want


def _hand_corpus():
    """Three frames, six ground truths, hand-placed tps and fps.

    Sweep of the seven distinct scores gives the staircase
    fppi 0 -> miss 4/6, 1/3 -> 3/6, 2/3 -> 2/6, 1 -> 2/6.
    """
    g1 = (0.0, 0.0, 50.0, 100.0)
    g2 = (200.0, 0.0, 250.0, 100.0)
    far = (400.0, 0.0, 450.0, 100.0)
    frames = []
    # frame 1: both gts hit (0.9, 0.8), one fp (0.7)
    frames.append(
        FrameRecord(
            "f1",
            "day",
            gts=[gt(*g1), gt(*g2)],
            detections={
                "det": [
                    det(*g1, 0.9, "f1"),
                    det(*g2, 0.8, "f1"),
                    det(*far, 0.7, "f1"),
                ]
            },
        )
    )
    # frame 2: one tp (0.6), one fp (0.5), one miss
    frames.append(
        FrameRecord(
            "f2",
            "day",
            gts=[gt(*g1), gt(*g2)],
            detections={"det": [det(*g1, 0.6, "f2"), det(*far, 0.5, "f2")]},
        )
    )
    # frame 3: one tp (0.4), one fp (0.3), one miss
    frames.append(
        FrameRecord(
            "f3",
            "night",
            gts=[gt(*g1), gt(*g2)],
            detections={"det": [det(*g1, 0.4, "f3"), det(*far, 0.3, "f3")]},
        )
    )
    return frames


class TestLogAverageMissRate:
    def test_hand_computed_curve(self):
        records = _hand_corpus()
        curve = miss_rate_curve(records, STANDARD_SETTINGS["all"], "det")
        want_curve = [
            (0.0, 5 / 6),
            (0.0, 4 / 6),
            (1 / 3, 4 / 6),
            (1 / 3, 3 / 6),
            (2 / 3, 3 / 6),
            (2 / 3, 2 / 6),
            (1.0, 2 / 6),
        ]
        assert len(curve) == len(want_curve)
        for (fppi, miss), (wf, wm) in zip(curve, want_curve):
            assert fppi == pytest.approx(wf, abs=1e-12)
            assert miss == pytest.approx(wm, abs=1e-12)
        # seven reference points fall below fppi 1/3 (best miss there 4/6),
        # one picks up fppi 1/3 (3/6), the last picks fppi 1 (2/6)
        expected = 100.0 * math.exp(
            (7 * math.log(4 / 6) + math.log(3 / 6) + math.log(2 / 6)) / 9.0
        )
        got = log_average_miss_rate(records, STANDARD_SETTINGS["all"], "det")
        assert got == pytest.approx(expected, abs=1e-6)

    def test_perfect_detector_reports_exact_zero(self):
        g = (0.0, 0.0, 30.0, 90.0)
        records = [
            FrameRecord("f0", "day", gts=[gt(*g)], detections={"det": [det(*g, 0.9)]})
        ]
        assert log_average_miss_rate(records, STANDARD_SETTINGS["all"], "det") == 0.0

    def test_constant_miss_rate_is_scaled(self):
        # one of two gts found, no fps: miss rate 0.5 at every sample point
        g1 = (0.0, 0.0, 30.0, 90.0)
        g2 = (100.0, 0.0, 130.0, 90.0)
        records = [
            FrameRecord(
                "f0", "day", gts=[gt(*g1), gt(*g2)], detections={"det": [det(*g1, 0.9)]}
            )
        ]
        assert log_average_miss_rate(
            records, STANDARD_SETTINGS["all"], "det"
        ) == pytest.approx(50.0, abs=1e-9)

    def test_no_detections_gives_full_miss(self):
        records = [
            FrameRecord("f0", "day", gts=[gt(0, 0, 30, 90)], detections={"det": []})
        ]
        assert log_average_miss_rate(
            records, STANDARD_SETTINGS["all"], "det"
        ) == pytest.approx(100.0, abs=1e-9)

    def test_empty_setting_rejected(self):
        records = [FrameRecord("f0", "day", gts=[], detections={"det": []})]
        with pytest.raises(ValueError, match="empty setting"):
            log_average_miss_rate(records, STANDARD_SETTINGS["all"], "det")

    def test_removing_fp_never_increases_mr(self):
        records = _hand_corpus()
        base = log_average_miss_rate(records, STANDARD_SETTINGS["all"], "det")
        # drop the 0.7 false positive from frame 1
        records[0].detections["det"] = [
            d for d in records[0].detections["det"] if d.score != 0.7
        ]
        assert log_average_miss_rate(records, STANDARD_SETTINGS["all"], "det") <= base

    def test_removing_tp_never_decreases_mr(self):
        records = _hand_corpus()
        base = log_average_miss_rate(records, STANDARD_SETTINGS["all"], "det")
        records[0].detections["det"] = [
            d for d in records[0].detections["det"] if d.score != 0.9
        ]
        assert log_average_miss_rate(records, STANDARD_SETTINGS["all"], "det") >= base

    def test_mr_bounds(self):
        records = _hand_corpus()
        for setting in ("all", "reasonable"):
            mr = log_average_miss_rate(records, STANDARD_SETTINGS[setting], "det")
            assert 0.0 <= mr <= 100.0


class TestEvaluateMatrix:
    def test_day_only_corpus_marks_night_na(self):
        records = [r for r in _hand_corpus() if r.time_of_day == "day"]
        table = evaluate_matrix(
            records, ["det"], {"all": STANDARD_SETTINGS["all"]}
        )
        assert table[("all", "night", "det")] is None
        assert table[("all", "day", "det")] is not None
        assert table[("all", "all", "det")] == table[("all", "day", "det")]

    def test_grid_matches_per_cell_recomputation(self):
        records = _hand_corpus()
        settings = {k: STANDARD_SETTINGS[k] for k in ("all", "reasonable", "heavy")}
        table = evaluate_matrix(records, ["det"], settings)

        def cell_oracle(setting, split):
            subset = [
                r for r in records if split == "all" or r.time_of_day == split
            ]
            total_gt = 0
            outcomes = []
            for r in subset:
                evaluated = [g for g in r.gts if setting.admits(g)]
                ignored = [g for g in r.gts if not setting.admits(g)]
                total_gt += len(evaluated)
                outcomes.append((r, evaluated, ignored))
            if total_gt == 0:
                return None
            scores = sorted(
                {
                    d.score
                    for r in subset
                    for d in r.detections["det"]
                },
                reverse=True,
            )
            points = []
            for threshold in scores:
                tp = fp = 0
                for r, evaluated, ignored in outcomes:
                    kept = [d for d in r.detections["det"] if d.score >= threshold]
                    t, f, _ = match_frame_ref(kept, evaluated, ignored, 0.5)
                    tp += t
                    fp += f
                points.append((fp / len(subset), 1.0 - tp / total_gt))
            best = {}
            for fppi, miss in points:
                best[fppi] = min(miss, best.get(fppi, 1.0))
            stair = sorted(best.items())
            top = max(m for _, m in points) if points else 1.0
            sampled = []
            for ref in FPPI_REFERENCE_POINTS:
                ok = [m for f, m in stair if f <= ref]
                sampled.append(ok[-1] if ok else top)
            if all(m == 0.0 for m in sampled):
                return 0.0
            return 100.0 * math.exp(
                sum(math.log(max(m, 1e-10)) for m in sampled) / len(sampled)
            )

        for (setting_name, split, _), value in table.items():
            want = cell_oracle(settings[setting_name], split)
            if want is None:
                assert value is None
            else:
                assert value == pytest.approx(want, abs=1e-9)

    def test_strategy_independence(self):
        records = _hand_corpus()
        for r in records:
            r.detections["other"] = [det(400, 0, 450, 100, 0.99, r.frame_id)]
        with_other = evaluate_matrix(records, ["det"], {"all": STANDARD_SETTINGS["all"]})
        for r in records:
            del r.detections["other"]
        without = evaluate_matrix(records, ["det"], {"all": STANDARD_SETTINGS["all"]})
        assert with_other == without
