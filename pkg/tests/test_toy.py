"""Synthetic shape dataset: determinism, annotation round-trips, persistence."""

import json

import numpy as np
import pytest

from segkit.errors import ConfigError
from segkit.rle import condense, rle_decode
from segkit.toy import (
    BACKGROUND_GRAY,
    ToySpec,
    generate_toy,
    load_toy_dataset,
    save_toy_dataset,
)


def small_spec(**overrides):
    base = dict(
        n_images=4,
        image_size=(16, 16),
        class_ids=(1, 2, 3),
        spawn_probs=(0.9, 0.6, 0.3),
        shapes_per_image=(1, 3),
        shape_scale=(0.2, 0.4),
        noise_level=5.0,
        seed=7,
    )
    base.update(overrides)
    return ToySpec(**base)


class TestSpecValidation:
    def test_defaults_are_valid(self):
        ToySpec(n_images=1)

    @pytest.mark.parametrize(
        "overrides",
        [
            dict(n_images=0),
            dict(class_ids=()),
            dict(class_ids=(0,)),
            dict(class_ids=(47,)),
            dict(class_ids=(1, 1)),
            dict(spawn_probs=(0.5,)),  # length mismatch with class_ids
            dict(spawn_probs=(0.9, 0.6, 1.5)),
            dict(shapes_per_image=(0, 3)),  # every image needs >= 1 shape
            dict(shapes_per_image=(4, 2)),
            dict(image_size=(8, 8)),
            dict(noise_level=-1.0),
        ],
    )
    def test_rejects(self, overrides):
        with pytest.raises(ConfigError):
            small_spec(**overrides)

    def test_payload_round_trip(self):
        spec = small_spec()
        assert ToySpec.from_payload(json.loads(spec.to_json())) == spec


class TestGenerate:
    def test_counts_and_shapes(self):
        ds = generate_toy(small_spec())
        assert len(ds) == 4
        for image_id in ds.index.image_ids:
            assert ds.images[image_id].shape == (16, 16, 3)
            assert ds.images[image_id].dtype == np.uint8
            assert ds.class_maps[image_id].shape == (16, 16)

    def test_deterministic(self):
        a = generate_toy(small_spec())
        b = generate_toy(small_spec())
        for image_id in a.index.image_ids:
            np.testing.assert_array_equal(a.images[image_id], b.images[image_id])
            np.testing.assert_array_equal(a.class_maps[image_id], b.class_maps[image_id])

    def test_seed_changes_content(self):
        a = generate_toy(small_spec())
        b = generate_toy(small_spec(seed=8))
        assert any(
            not np.array_equal(a.class_maps[i], b.class_maps[i])
            for i in a.index.image_ids
        )

    def test_every_image_has_annotations(self):
        ds = generate_toy(small_spec())
        lo, hi = 1, 3
        for image_id in ds.index.image_ids:
            n = len(ds.index.entry(image_id).records)
            assert lo <= n <= hi

    def test_annotations_reconstruct_class_map_exactly(self):
        """Records decoded and condensed in file order equal the stored map."""
        ds = generate_toy(small_spec())
        for image_id in ds.index.image_ids:
            entry = ds.index.entry(image_id)
            layers = [
                (rle_decode(rec.pairs, size=entry.size), rec.class_id)
                for rec in entry.records
            ]
            rebuilt = condense(layers, size=entry.size)
            np.testing.assert_array_equal(rebuilt, ds.class_maps[image_id])

    def test_class_ids_within_spec(self):
        ds = generate_toy(small_spec())
        allowed = {0, 1, 2, 3}
        for image_id in ds.index.image_ids:
            assert set(np.unique(ds.class_maps[image_id])) <= allowed

    def test_zero_noise_background_is_flat(self):
        ds = generate_toy(small_spec(noise_level=0.0))
        for image_id in ds.index.image_ids:
            bg = ds.class_maps[image_id] == 0
            if bg.any():
                pixels = ds.images[image_id][bg]
                assert (pixels == BACKGROUND_GRAY).all()

    def test_foreground_differs_from_background(self):
        ds = generate_toy(small_spec(noise_level=0.0))
        image_id = ds.index.image_ids[0]
        fg = ds.class_maps[image_id] > 0
        if fg.any():
            pixels = ds.images[image_id][fg]
            assert not (pixels == BACKGROUND_GRAY).all()


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        ds = generate_toy(small_spec())
        root = tmp_path / "toy"
        save_toy_dataset(ds, root)
        assert (root / "annotations.csv").exists()
        assert (root / "manifest.json").exists()

        back = load_toy_dataset(root)
        assert back.spec == ds.spec
        assert back.index.image_ids == ds.index.image_ids
        for image_id in ds.index.image_ids:
            np.testing.assert_array_equal(back.images[image_id], ds.images[image_id])
            np.testing.assert_array_equal(
                back.class_maps[image_id], ds.class_maps[image_id]
            )

    def test_load_requires_manifest(self, tmp_path):
        with pytest.raises((ConfigError, OSError)):
            load_toy_dataset(tmp_path)

    def test_save_is_idempotent(self, tmp_path):
        ds = generate_toy(small_spec())
        root = tmp_path / "toy"
        save_toy_dataset(ds, root)
        first = (root / "annotations.csv").read_bytes()
        image_id = ds.index.image_ids[0]
        png_first = (root / "images" / f"{image_id}.png").read_bytes()
        save_toy_dataset(ds, root)
        assert (root / "annotations.csv").read_bytes() == first
        assert (root / "images" / f"{image_id}.png").read_bytes() == png_first
