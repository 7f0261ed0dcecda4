import numpy as np
import pytest

from promptseg.adapter.oracles import GTOracle
from promptseg.core import BinaryMask, EvalConfig
from promptseg.errors import EmptyMaskError
from promptseg.kernels import connected_components, distance_to_background
from promptseg.prompts import (
    box_prompt_run,
    icl_context,
    mask_prompt_run,
    ofs_filter,
    simulate_clicks,
)

from conftest import EchoMaskOracle, EmptyOracle, RecordingOracle, disk_mask, local_handle


def two_blob_mask(size=48):
    bits = disk_mask(size, 12, 12, 6).bits | disk_mask(size, 34, 34, 5).bits
    return BinaryMask(bits)


class TestSimulateClicks:
    def test_component_oracle_one_click(self):
        gt = disk_mask(32, 16, 16, 8)
        handle = local_handle(GTOracle({"img": gt}))
        pred, log = simulate_clicks(gt, handle, EvalConfig(), "img")
        assert pred == gt
        assert len(log.clicks) == 1
        assert log.stop_reason == "iou_reached"
        assert log.final_iou() == 1.0
        # the click sits at the max-inscribed-distance pixel
        click = log.clicks[0][0]
        dist = distance_to_background(gt)
        assert dist[click.y, click.x] == dist.max()
        assert click.label == 1

    def test_empty_oracle_exhausts_click_budget(self):
        gt = disk_mask(32, 16, 16, 8)
        handle = local_handle(EmptyOracle(32, 32))
        cfg = EvalConfig()
        pred, log = simulate_clicks(gt, handle, cfg, "img")
        assert pred.is_empty()
        assert len(log.clicks) == cfg.click_limit == 6
        assert log.stop_reason == "click_limit"
        assert all(p.label == 1 for p, _ in log.clicks)  # FN region = GT each round

    def test_gt_on_first_call_stops_at_iou(self):
        gt = two_blob_mask()
        handle = local_handle(RecordingOracle(GTEchoLike(gt)))
        pred, log = simulate_clicks(gt, handle, EvalConfig(), "img")
        assert len(log.clicks) == 1 and log.stop_reason == "iou_reached"
        assert log.final_iou() >= 0.9

    def test_no_duplicate_click_coordinates(self):
        gt = disk_mask(32, 16, 16, 8)
        handle = local_handle(EmptyOracle(32, 32))
        _, log = simulate_clicks(gt, handle, EvalConfig(), "img")
        coords = [(p.x, p.y, p.label) for p, _ in log.clicks]
        assert len(coords) == len(set(coords))

    def test_every_click_inside_preceding_error_region(self):
        gt = two_blob_mask()
        oracle = RecordingOracle(GTOracle({"img": gt}))
        handle = local_handle(oracle)
        cfg = EvalConfig(iou_stop=0.99)
        pred, log = simulate_clicks(gt, handle, cfg, "img")
        # replay: reconstruct the prediction before each click
        prev = BinaryMask.zeros(48, 48)
        for i, (click, _) in enumerate(log.clicks):
            fn = gt - prev
            fp = prev - gt
            region = fn if fn.foreground_count() >= fp.foreground_count() else fp
            assert region.bits[click.y, click.x]
            prompt = oracle.segment_calls[i][1]
            prev = GTOracle({"img": gt}).segment("img", prompt)[1]

    def test_tiny_region_stops_early_without_duplicates(self):
        gt = BinaryMask(np.array([[True, True]]))  # 2 clickable pixels
        handle = local_handle(EmptyOracle(1, 2))
        _, log = simulate_clicks(gt, handle, EvalConfig(), "img")
        assert len(log.clicks) == 2
        assert log.stop_reason == "click_limit"
        assert log.notes  # exhaustion recorded

    def test_empty_gt_rejected(self):
        handle = local_handle(EmptyOracle(4, 4))
        with pytest.raises(EmptyMaskError):
            simulate_clicks(BinaryMask.zeros(4, 4), handle, EvalConfig(), "img")


class GTEchoLike:
    """Minimal oracle returning the full GT for any prompt."""

    name = "echo"
    capabilities = frozenset({"points", "boxes", "mask", "everything"})

    def __init__(self, gt):
        self._gt = gt

    def segment(self, image_ref, prompt):
        return "mask", self._gt

    def segment_sequence(self, frame_refs, schedule, prompts):
        return [self._gt for _ in frame_refs]


class TestBoxPromptRun:
    def test_two_components_reassembled(self):
        gt = two_blob_mask()
        handle = local_handle(GTOracle({"img": gt}))
        assert box_prompt_run(gt, handle, "img") == gt

    def test_one_call_per_component(self):
        gt = two_blob_mask()
        oracle = RecordingOracle(GTOracle({"img": gt}))
        handle = local_handle(oracle)
        box_prompt_run(gt, handle, "img")
        assert len(oracle.segment_calls) == connected_components(gt).count == 2
        assert all(p.kind == "boxes" and len(p.boxes) == 1 for _, p in oracle.segment_calls)

    def test_single_component_single_call(self):
        gt = disk_mask(24, 12, 12, 6)
        oracle = RecordingOracle(GTOracle({"img": gt}))
        handle = local_handle(oracle)
        box_prompt_run(gt, handle, "img")
        assert len(oracle.segment_calls) == 1

    def test_empty_gt_rejected(self):
        handle = local_handle(EmptyOracle(4, 4))
        with pytest.raises(EmptyMaskError):
            box_prompt_run(BinaryMask.zeros(4, 4), handle, "img")


def entity_with_overlap(gt: BinaryMask, inside: int, outside: int, band: int) -> BinaryMask:
    """An entity with ``inside`` pixels in the GT and ``outside`` out, built
    from its own two-row band so entities stay disjoint."""
    bits = np.zeros(gt.shape, dtype=bool)
    rows = (2 * band, 2 * band + 1)
    in_ys, in_xs = np.nonzero(gt.bits)
    out_ys, out_xs = np.nonzero(~gt.bits)
    sel_in = np.flatnonzero(np.isin(in_ys, rows))[:inside]
    bits[in_ys[sel_in], in_xs[sel_in]] = True
    sel_out = np.flatnonzero(np.isin(out_ys, rows))[:outside]
    bits[out_ys[sel_out], out_xs[sel_out]] = True
    assert bits.sum() == inside + outside
    return BinaryMask(bits)


class TestOFSFilter:
    def test_strictly_greater_than_threshold(self):
        gt = BinaryMask(np.pad(np.ones((60, 60), dtype=bool), ((0, 0), (0, 40))))
        fractions = [(95, 5), (91, 9), (90, 10), (89, 11), (50, 50)]
        entities = [
            entity_with_overlap(gt, inside, outside, row)
            for row, (inside, outside) in enumerate(fractions)
        ]
        kept = ofs_filter(entities, gt, 0.9)
        want = entities[0] | entities[1]  # 0.95 and 0.91 only; 0.90 excluded
        assert kept == want

    def test_no_entities_empty_mask(self):
        gt = disk_mask(16, 8, 8, 4)
        assert ofs_filter([], gt, 0.9).is_empty()

    def test_contained_entity_unchanged(self):
        gt = disk_mask(24, 12, 12, 8)
        entity = disk_mask(24, 12, 12, 4)
        assert ofs_filter([entity], gt, 0.9) == entity

    def test_output_subset_of_input_union(self, rng):
        gt = BinaryMask(rng.random((24, 24)) < 0.4)
        entities = [BinaryMask(rng.random((24, 24)) < 0.1) for _ in range(5)]
        out = ofs_filter(entities, gt, 0.5)
        union = BinaryMask.zeros(24, 24)
        for e in entities:
            union = union | e
        assert not (out.bits & ~union.bits).any()

    def test_idempotent_on_components(self):
        gt = two_blob_mask()
        entities = [disk_mask(48, 12, 12, 5), disk_mask(48, 34, 34, 4), disk_mask(48, 40, 8, 4)]
        once = ofs_filter(entities, gt, 0.9)
        comps = connected_components(once)
        again = ofs_filter(comps.masks(), gt, 0.9)
        assert once == again


class TestMaskPromptRun:
    def test_identity_oracle_echoes(self):
        prompt = disk_mask(16, 8, 8, 4)
        handle = local_handle(EchoMaskOracle())
        assert mask_prompt_run(prompt, handle, "img") == prompt

    def test_empty_prompt_rejected(self):
        handle = local_handle(EchoMaskOracle())
        with pytest.raises(EmptyMaskError):
            mask_prompt_run(BinaryMask.zeros(4, 4), handle, "img")

    def test_gt_oracle_returns_gt(self):
        gt = disk_mask(16, 8, 8, 5)
        handle = local_handle(GTOracle({"img": gt}))
        assert mask_prompt_run(gt, handle, "img") == gt


class TestICLContext:
    def pairs(self, n):
        return [(f"img{i}", disk_mask(8, 4, 4, 2)) for i in range(n)]

    def test_minimum(self):
        out = icl_context(self.pairs(5), 1)
        assert [r for r, _ in out] == ["img0"]

    def test_whole_set_in_order(self):
        out = icl_context(self.pairs(20), 20)
        assert [r for r, _ in out] == [f"img{i}" for i in range(20)]

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            icl_context(self.pairs(19), 20)
