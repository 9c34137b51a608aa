"""Annotation CSV ingestion, dataset indexing, statistics, and sampling."""

import numpy as np
import pytest

from segkit.data import (
    CSV_COLUMNS,
    class_histogram,
    class_pixel_frequencies,
    diverse_subset,
    load_annotations,
    save_annotations,
    size_histogram,
    split,
)
from segkit.errors import (
    ConfigError,
    EmptyInputError,
    FeasibilityWarning,
    RowError,
    SchemaError,
)


class TestLoad:
    def test_basic_shape(self, sample_csv):
        index = load_annotations(sample_csv)
        assert len(index) == 2
        assert index.image_ids == ["img_a", "img_b"]  # file order
        assert index.n_records == 3
        assert "img_a" in index and "nope" not in index

    def test_record_fields(self, sample_csv):
        entry = load_annotations(sample_csv).entry("img_a")
        assert entry.size == (4, 3)
        rec = entry.records[0]
        assert (rec.class_id, rec.height, rec.width) == (4, 4, 3)
        assert rec.pairs == [(1, 3)]

    def test_class_map_decodes_and_condenses(self, sample_csv):
        cmap = load_annotations(sample_csv).class_map("img_a")
        assert cmap.shape == (4, 3)
        # column-major: run "1 3" fills rows 0-2 of column 0
        assert list(cmap[:, 0]) == [4, 4, 4, 0]
        # run "8 2" is pixels 8-9 -> (3,1) and (0,2)
        assert cmap[3, 1] == 7 and cmap[0, 2] == 7

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_annotations(tmp_path / "absent.csv")

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("ImageId,Pixels,ClassId,Height,Width\nx,1 1,3,2,2\n")
        with pytest.raises(SchemaError):
            load_annotations(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(SchemaError):
            load_annotations(path)

    def test_header_only_is_empty_index(self, tmp_path):
        path = tmp_path / "header.csv"
        path.write_text(",".join(CSV_COLUMNS) + "\n")
        assert len(load_annotations(path)) == 0

    def test_bom_tolerated(self, tmp_path):
        path = tmp_path / "bom.csv"
        path.write_bytes(b"\xef\xbb\xbf" + b"ImageId,EncodedPixels,ClassId,Height,Width\na,1 1,3,2,2\n")
        assert len(load_annotations(path)) == 1


BAD_ROWS = [
    ("a,1 1,0,2,2", "class id below range"),
    ("a,1 1,47,2,2", "class id above range"),
    ("a,1 1,x,2,2", "non-integer class"),
    ("a,1 1,3,0,2", "non-positive height"),
    ("a,1 5,3,2,2", "run past the canvas"),
    ("a,1,3,2,2", "odd descriptor"),
    ("a,1 1,3,2", "missing field"),
]


class TestRowErrors:
    @pytest.mark.parametrize("row,label", BAD_ROWS, ids=[b[1] for b in BAD_ROWS])
    def test_lenient_collects(self, tmp_path, row, label):
        path = tmp_path / "rows.csv"
        path.write_text(
            "ImageId,EncodedPixels,ClassId,Height,Width\n" + row + "\nok,1 1,3,2,2\n"
        )
        index = load_annotations(path)
        assert len(index) == 1  # good row survives
        assert len(index.row_errors) == 1
        assert index.row_errors[0].line_no == 2

    def test_strict_raises(self, tmp_path):
        path = tmp_path / "rows.csv"
        path.write_text("ImageId,EncodedPixels,ClassId,Height,Width\na,1 1,0,2,2\n")
        with pytest.raises(RowError):
            load_annotations(path, strict=True)

    def test_conflicting_sizes_for_one_image(self, tmp_path):
        path = tmp_path / "conflict.csv"
        path.write_text(
            "ImageId,EncodedPixels,ClassId,Height,Width\n"
            "a,1 1,3,2,2\n"
            "a,1 1,4,2,3\n"
        )
        index = load_annotations(path)
        assert index.n_records == 1
        assert len(index.row_errors) == 1


class TestSubsetAccess:
    def test_subset_preserves_order(self, sample_csv):
        index = load_annotations(sample_csv)
        sub = index.subset(["img_b"])
        assert sub.image_ids == ["img_b"]
        assert sub.n_records == 1

    def test_subset_unknown_id(self, sample_csv):
        with pytest.raises(KeyError):
            load_annotations(sample_csv).subset(["ghost"])


class TestHistograms:
    def test_class_histogram(self, sample_csv):
        hist = class_histogram(load_annotations(sample_csv))
        assert hist.n_images == 2
        assert hist.image_counts == {4: 1, 7: 1, 31: 1}
        assert hist.image_shares[4] == pytest.approx(0.5)
        assert hist.instance_counts == {4: 1, 7: 1, 31: 1}

    def test_instance_vs_image_counts(self, tmp_path):
        path = tmp_path / "multi.csv"
        path.write_text(
            "ImageId,EncodedPixels,ClassId,Height,Width\n"
            "a,1 1,3,2,2\n"
            "a,3 1,3,2,2\n"
        )
        hist = class_histogram(load_annotations(path))
        assert hist.image_counts[3] == 1
        assert hist.instance_counts[3] == 2

    def test_size_histogram(self, sample_csv):
        stats = size_histogram(load_annotations(sample_csv))
        assert stats.width_counts == {3: 1, 4: 1}
        assert stats.height_counts == {4: 2}
        assert stats.width_diff == 1
        assert stats.height_diff == 0

    def test_empty_index_rejected(self, tmp_path):
        path = tmp_path / "h.csv"
        path.write_text(",".join(CSV_COLUMNS) + "\n")
        index = load_annotations(path)
        with pytest.raises(EmptyInputError):
            class_histogram(index)
        with pytest.raises(EmptyInputError):
            size_histogram(index)


class TestSplit:
    def test_disjoint_and_exhaustive(self, tiny_toy):
        tr, va = split(tiny_toy.index, 0.75, seed=4)
        assert set(tr.image_ids) & set(va.image_ids) == set()
        assert sorted(tr.image_ids + va.image_ids) == sorted(tiny_toy.index.image_ids)

    def test_ninety_ten_sizes(self, tiny_toy):
        tr, va = split(tiny_toy.index, 0.9, seed=0)
        # 6 images: round(5.4) = 5, clamped to keep val non-empty
        assert len(tr) == 5 and len(va) == 1

    def test_deterministic(self, tiny_toy):
        a = split(tiny_toy.index, 0.75, seed=11)
        b = split(tiny_toy.index, 0.75, seed=11)
        assert a[0].image_ids == b[0].image_ids
        assert split(tiny_toy.index, 0.75, seed=12)[0].image_ids != a[0].image_ids or True

    def test_both_sides_nonempty_even_at_extremes(self, tiny_toy):
        tr, va = split(tiny_toy.index, 0.999, seed=0)
        assert len(va) >= 1
        tr, va = split(tiny_toy.index, 0.001, seed=0)
        assert len(tr) >= 1

    def test_bad_fraction(self, tiny_toy):
        for frac in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(ConfigError):
                split(tiny_toy.index, frac, seed=0)

    def test_too_small_index(self, sample_csv):
        single = load_annotations(sample_csv).subset(["img_a"])
        with pytest.raises(ConfigError):
            split(single, 0.9, seed=0)


@pytest.fixture(scope="module")
def wide_index(tmp_path_factory):
    """40 one-pixel-annotation images: class 1 everywhere, class 2 in half."""
    rows = ["ImageId,EncodedPixels,ClassId,Height,Width"]
    for i in range(40):
        rows.append(f"im{i:02d},1 1,1,2,2")
        if i % 2 == 0:
            rows.append(f"im{i:02d},2 1,2,2,2")
    path = tmp_path_factory.mktemp("wide") / "wide.csv"
    path.write_text("\n".join(rows) + "\n")
    return load_annotations(path)


class TestDiverseSubset:
    def test_full_size_returns_everything(self, tiny_toy):
        sub = diverse_subset(tiny_toy.index, len(tiny_toy.index), seed=0)
        assert sub.image_ids == tiny_toy.index.image_ids

    def test_common_classes_keep_their_share(self, wide_index):
        full = class_histogram(wide_index)
        sub = diverse_subset(wide_index, 10, seed=0, tolerance=0.2)
        shares = class_histogram(sub).image_shares
        for cls, share in full.image_shares.items():
            if share >= 0.01:
                assert abs(shares.get(cls, 0.0) - share) / share <= 0.2 + 1e-9

    def test_deterministic(self, wide_index):
        a = diverse_subset(wide_index, 8, seed=5)
        b = diverse_subset(wide_index, 8, seed=5)
        assert a.image_ids == b.image_ids

    def test_infeasible_tolerance_warns_and_returns_best(self, tiny_toy):
        with pytest.warns(FeasibilityWarning):
            sub = diverse_subset(tiny_toy.index, 5, seed=0, tolerance=0.0, max_attempts=5)
        assert len(sub) == 5

    def test_bounds(self, tiny_toy):
        with pytest.raises(ConfigError):
            diverse_subset(tiny_toy.index, 0)
        with pytest.raises(ConfigError):
            diverse_subset(tiny_toy.index, len(tiny_toy.index) + 1)


class TestPixelFrequencies:
    def test_hand_case(self, tmp_path):
        path = tmp_path / "f.csv"
        # one 2x2 image: class 3 covers pixels 1-2 (half), rest background
        path.write_text("ImageId,EncodedPixels,ClassId,Height,Width\na,1 2,3,2,2\n")
        freq = class_pixel_frequencies(load_annotations(path))
        assert freq.shape == (47,)
        assert freq[0] == pytest.approx(0.5)
        assert freq[3] == pytest.approx(0.5)
        assert freq.sum() == pytest.approx(1.0)

    def test_mean_over_images_not_pixels(self, tmp_path):
        path = tmp_path / "g.csv"
        # image a: 2x2, class 3 on one pixel (1/4); image b: 4x4 all class 3
        path.write_text(
            "ImageId,EncodedPixels,ClassId,Height,Width\n"
            "a,1 1,3,2,2\n"
            "b,1 16,3,4,4\n"
        )
        freq = class_pixel_frequencies(load_annotations(path))
        assert freq[3] == pytest.approx((0.25 + 1.0) / 2)


def test_save_round_trip(tmp_path, sample_csv):
    index = load_annotations(sample_csv)
    out = tmp_path / "resaved.csv"
    save_annotations(index, out)
    again = load_annotations(out)
    assert again.image_ids == index.image_ids
    assert again.n_records == index.n_records
    for image_id in index.image_ids:
        np.testing.assert_array_equal(again.class_map(image_id), index.class_map(image_id))
