import numpy as np
import pytest

from promptseg.core import (
    BinaryMask,
    BoxPrompt,
    EvalConfig,
    PointPrompt,
    Prompt,
    ScoreMap,
    SequenceRecord,
    binarize,
)
from promptseg.errors import ConfigError, DimensionMismatchError


class TestBinaryMask:
    def test_shape_and_counts(self):
        m = BinaryMask(np.array([[True, False], [True, True]]))
        assert (m.width, m.height) == (2, 2)
        assert m.foreground_count() == 3
        assert m.foreground_fraction() == 0.75

    def test_rejects_empty_extent(self):
        with pytest.raises(ValueError):
            BinaryMask(np.zeros((0, 4), dtype=bool))

    def test_immutable(self):
        m = BinaryMask.zeros(2, 2)
        with pytest.raises(ValueError):
            m.bits[0, 0] = True

    def test_set_algebra_requires_same_shape(self):
        with pytest.raises(DimensionMismatchError):
            BinaryMask.zeros(2, 2) | BinaryMask.zeros(3, 3)


class TestScoreMap:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            ScoreMap(np.array([[0.5, 1.2]]))
        with pytest.raises(ValueError):
            ScoreMap(np.array([[-0.1, 0.5]]))

    def test_binarize_zero_map(self):
        out = binarize(ScoreMap(np.zeros((3, 4))), 0.5)
        assert out.is_empty() and out.shape == (3, 4)

    def test_binarize_recovers_lifted_mask(self):
        mask = BinaryMask(np.array([[True, False], [False, True]]))
        assert binarize(mask.to_scores(), 0.5) == mask

    def test_binarize_per_pixel(self):
        # strict >: 0.5 stays background at t=0.5
        sm = ScoreMap(np.array([[0.4, 0.6], [0.5, 0.51]]))
        out = binarize(sm, 0.5)
        assert out.bits.tolist() == [[False, True], [False, True]]

    def test_binarize_threshold_domain(self):
        sm = ScoreMap(np.zeros((1, 1)))
        with pytest.raises(ValueError):
            binarize(sm, 1.0)
        with pytest.raises(ValueError):
            binarize(sm, -0.01)

    def test_binarize_idempotent_through_lift(self, rng):
        sm = ScoreMap(rng.random((8, 8)))
        once = binarize(sm, 0.3)
        again = binarize(once.to_scores(), 0.3)
        assert once == again

    def test_binarize_monotone_in_threshold(self, rng):
        sm = ScoreMap(rng.random((16, 16)))
        counts = [binarize(sm, t).foreground_count() for t in (0.0, 0.25, 0.5, 0.75, 0.99)]
        assert counts == sorted(counts, reverse=True)


class TestPrompts:
    def test_point_label_validation(self):
        with pytest.raises(ValueError):
            PointPrompt(1, 1, label=2)

    def test_box_validation(self):
        with pytest.raises(ValueError):
            BoxPrompt(3, 3, 3, 5)
        box = BoxPrompt(3, 4, 4, 5)
        assert (box.width, box.height) == (1, 1)
        assert box.shorter_side() == 1

    def test_exactly_one_kind(self):
        with pytest.raises(ValueError):
            Prompt(kind="points", points=(), boxes=(BoxPrompt(0, 0, 1, 1),))
        with pytest.raises(ValueError):
            Prompt(kind="points")  # no payload
        p = Prompt.everything()
        assert p.kind == "everything" and not p.points

    def test_context_rides_along(self):
        mask = BinaryMask.zeros(2, 2)
        p = Prompt.from_points([PointPrompt(0, 0)], context=[("a", mask)])
        assert p.context[0][0] == "a"


class TestSequenceRecord:
    def test_frames_must_share_shape(self):
        with pytest.raises(DimensionMismatchError):
            SequenceRecord(
                frames=[("f0", BinaryMask.zeros(2, 2)), ("f1", BinaryMask.zeros(3, 3))],
                kind="video",
            )

    def test_one_prediction_per_frame(self):
        frames = [("f0", BinaryMask.zeros(2, 2)), ("f1", BinaryMask.zeros(2, 2))]
        with pytest.raises(ValueError):
            SequenceRecord(frames=frames, kind="video", predictions=[BinaryMask.zeros(2, 2)])
        rec = SequenceRecord(frames=frames, kind="volume").with_predictions(
            [BinaryMask.zeros(2, 2), BinaryMask.zeros(2, 2)]
        )
        assert len(rec.predictions) == 2


class TestEvalConfig:
    def test_defaults(self):
        cfg = EvalConfig()
        assert cfg.click_limit == 6
        assert cfg.iou_stop == 0.9
        assert cfg.ofs_threshold == 0.9
        assert cfg.icl_count == 20
        assert cfg.n_trials == 5

    def test_validation(self):
        with pytest.raises(ConfigError):
            EvalConfig(iou_stop=0.0)
        with pytest.raises(ConfigError):
            EvalConfig(iou_stop=1.5)
        with pytest.raises(ConfigError):
            EvalConfig(click_limit=0)

    def test_file_round_trip(self, tmp_path):
        cfg = EvalConfig(click_limit=4, iou_stop=0.85, rng_seed=123456789, wfm_sigma=7)
        path = tmp_path / "run.cfg"
        cfg.save(path)
        assert EvalConfig.load(path) == cfg

    def test_loads_partial_and_comments(self):
        cfg = EvalConfig.loads("# comment\nclick_limit = 3\n\niou_stop = 0.8  # inline\n")
        assert cfg.click_limit == 3 and cfg.iou_stop == 0.8
        assert cfg.ofs_threshold == 0.9  # untouched default

    def test_loads_rejects_unknown_key(self):
        with pytest.raises(ConfigError):
            EvalConfig.loads("clicks = 3\n")
