import numpy as np
import pytest
from PIL import Image

from promptseg.core import BinaryMask
from promptseg.datasets import (
    gt_lookup_for,
    icl_pairs,
    load_mask,
    load_sequence,
    save_mask,
    scan_dataset,
)
from promptseg.errors import DatasetError

from conftest import disk_mask, make_image_dataset, make_sequence_dataset


class TestScanImage:
    def test_empty_root_is_error(self, tmp_path):
        (tmp_path / "images").mkdir()
        (tmp_path / "masks").mkdir()
        with pytest.raises(DatasetError, match="no image/mask pairs"):
            scan_dataset(tmp_path, "image")

    def test_missing_root(self, tmp_path):
        with pytest.raises(DatasetError):
            scan_dataset(tmp_path / "nope", "image")

    def test_happy_path(self, tmp_path):
        masks = {f"s{i}": disk_mask(8, 4, 4, 2) for i in range(3)}
        root = make_image_dataset(tmp_path, masks)
        manifest = scan_dataset(root, "image")
        assert manifest.sample_count() == 3
        assert manifest.warnings == ()
        assert [s.sample_id for s in manifest.samples] == ["s0", "s1", "s2"]

    def test_unmatched_files_warn(self, tmp_path):
        masks = {f"s{i}": disk_mask(8, 4, 4, 2) for i in range(3)}
        root = make_image_dataset(tmp_path, masks)
        (root / "masks" / "s2.png").unlink()  # 3 images, 2 masks
        manifest = scan_dataset(root, "image")
        assert manifest.sample_count() == 2
        assert len(manifest.warnings) == 1 and "s2" in manifest.warnings[0]

    def test_expected_count_warns_only(self, tmp_path):
        root = make_image_dataset(tmp_path, {"a": disk_mask(8, 4, 4, 2)})
        manifest = scan_dataset(root, "image", expected_count=5019)
        assert manifest.sample_count() == 1
        assert any("5019" in w for w in manifest.warnings)

    def test_numeric_stem_ordering(self, tmp_path):
        masks = {name: disk_mask(8, 4, 4, 2) for name in ["10", "9", "0002"]}
        root = make_image_dataset(tmp_path, masks)
        manifest = scan_dataset(root, "image")
        assert [s.sample_id for s in manifest.samples] == ["0002", "9", "10"]


class TestScanSequences:
    def test_video_layout(self, tmp_path):
        root = make_sequence_dataset(
            tmp_path,
            {
                "seq_a": [disk_mask(8, 4, 4, 2)] * 3,
                "seq_b": [disk_mask(8, 4, 4, 1)] * 2,
            },
        )
        manifest = scan_dataset(root, "video")
        assert [s.name for s in manifest.sequences] == ["seq_a", "seq_b"]
        assert manifest.sample_count() == 5
        assert manifest.sequences[0].frames[0].sample_id == "seq_a/0000"

    def test_load_sequence(self, tmp_path):
        frames = [disk_mask(8, 4, 4, 2), disk_mask(8, 4, 4, 1)]
        root = make_sequence_dataset(tmp_path, {"s": frames})
        manifest = scan_dataset(root, "volume")
        record = load_sequence(manifest.sequences[0], "volume")
        assert record.kind == "volume" and len(record) == 2
        assert record.frames[0][1] == frames[0]


class TestLoadMask:
    def test_saturation_and_zero(self, tmp_path):
        full = tmp_path / "full.png"
        Image.fromarray(np.full((4, 4), 255, dtype=np.uint8), mode="L").save(full)
        assert load_mask(full) == BinaryMask.full(4, 4)
        empty = tmp_path / "empty.png"
        Image.fromarray(np.zeros((4, 4), dtype=np.uint8), mode="L").save(empty)
        assert load_mask(empty).is_empty()

    def test_127_is_background(self, tmp_path):
        path = tmp_path / "mid.png"
        arr = np.array([[127, 128]], dtype=np.uint8)
        Image.fromarray(arr, mode="L").save(path)
        out = load_mask(path)
        assert out.bits.tolist() == [[False, True]]

    def test_non_grayscale_rejected_with_hint(self, tmp_path):
        path = tmp_path / "rgb.png"
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8), mode="RGB").save(path)
        with pytest.raises(DatasetError, match="grayscale"):
            load_mask(path)

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / "junk.png"
        path.write_bytes(b"not a png")
        with pytest.raises(DatasetError):
            load_mask(path)

    def test_save_load_round_trip(self, tmp_path, rng):
        mask = BinaryMask(rng.random((12, 9)) < 0.5)
        path = tmp_path / "m.png"
        save_mask(mask, path)
        assert load_mask(path) == mask


class TestLookupsAndPairs:
    def test_gt_lookup(self, tmp_path):
        gt = disk_mask(8, 4, 4, 2)
        root = make_image_dataset(tmp_path, {"a": gt})
        manifest = scan_dataset(root, "image")
        lookup = gt_lookup_for(manifest)
        assert lookup(manifest.samples[0].image_ref) == gt
        with pytest.raises(DatasetError):
            lookup("unknown.png")

    def test_icl_pairs_lazy_order(self, tmp_path):
        masks = {f"t{i}": disk_mask(8, 4, 4, 1 + i % 2) for i in range(4)}
        root = make_image_dataset(tmp_path, masks)
        manifest = scan_dataset(root, "image", split="train")
        pairs = icl_pairs(manifest)
        assert len(pairs) == 4
        ref, mask = pairs[0]
        assert ref.endswith("t0.png") and mask == masks["t0"]
        assert [r.split("/")[-1] for r, _ in pairs[:2]] == ["t0.png", "t1.png"]
