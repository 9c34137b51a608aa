"""Synthetic shape dataset for desk-scale experiments.

Each active class is rendered as one shape family (rectangle, ellipse, or
triangle, cycling by class id) in its own hue band, so a model that learns
color and shape cues can separate the classes. Class imbalance is driven
by per-class spawn probabilities, mimicking corpora where some categories
appear in most images and others in a fraction of a percent.

Ground truth is exact by construction: the label map is composited from
the same binary masks that are RLE-encoded into the annotation CSV, so
decoding and condensing the annotations reproduces the stored map
pixel for pixel.
"""

from __future__ import annotations

import colorsys
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .data import (
    AnnotationRecord,
    DatasetIndex,
    ImageEntry,
    load_annotations,
    save_annotations,
)
from .errors import ConfigError
from .palette import load_classmap_png, save_classmap_png
from .rle import format_rle, rle_encode

BACKGROUND_GRAY = 205

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class ToySpec:
    """Parameters of one synthetic dataset.

    spawn_probs[i] is the chance that class_ids[i] contributes a shape to
    an image; shapes_per_image then clamps the spawned count (padding by
    resampling from the spawn distribution, truncating at random).
    shape_scale bounds shape extent as a fraction of the short image side.
    """

    n_images: int
    image_size: tuple[int, int] = (256, 256)
    class_ids: tuple[int, ...] = (1, 2, 3, 4, 5)
    spawn_probs: tuple[float, ...] = (0.9, 0.7, 0.5, 0.3, 0.1)
    shapes_per_image: tuple[int, int] = (1, 6)
    shape_scale: tuple[float, float] = (0.15, 0.45)
    noise_level: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.n_images < 1:
            raise ConfigError(f"n_images must be >= 1, got {self.n_images}")
        if len(self.class_ids) < 1:
            raise ConfigError("need at least one active class")
        if len(set(self.class_ids)) != len(self.class_ids):
            raise ConfigError("class_ids must be unique")
        for cls in self.class_ids:
            if not 1 <= cls <= 46:
                raise ConfigError(f"class id {cls} outside [1, 46]")
        if len(self.spawn_probs) != len(self.class_ids):
            raise ConfigError(
                f"{len(self.spawn_probs)} spawn_probs for {len(self.class_ids)} classes"
            )
        for p in self.spawn_probs:
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"spawn probability {p} outside [0, 1]")
        lo, hi = self.shapes_per_image
        if not 1 <= lo <= hi:
            # every image must end up with >= 1 annotation record, else it
            # would drop out of the CSV round-trip
            raise ConfigError(f"bad shapes_per_image range ({lo}, {hi})")
        h, w = self.image_size
        if h < 16 or w < 16:
            raise ConfigError(f"image size {h}x{w} too small to draw shapes")
        if self.noise_level < 0:
            raise ConfigError(f"noise_level must be >= 0, got {self.noise_level}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_payload(cls, payload: dict) -> "ToySpec":
        return cls(
            n_images=payload["n_images"],
            image_size=tuple(payload["image_size"]),
            class_ids=tuple(payload["class_ids"]),
            spawn_probs=tuple(payload["spawn_probs"]),
            shapes_per_image=tuple(payload["shapes_per_image"]),
            shape_scale=tuple(payload["shape_scale"]),
            noise_level=payload["noise_level"],
            seed=payload["seed"],
        )


@dataclass
class ToyDataset:
    """In-memory synthetic dataset: RGB images, exact label maps, annotations."""

    spec: ToySpec
    images: dict[str, np.ndarray] = field(default_factory=dict)
    class_maps: dict[str, np.ndarray] = field(default_factory=dict)
    index: DatasetIndex = field(default_factory=DatasetIndex)

    def __len__(self) -> int:
        return len(self.images)


def class_color(class_id: int) -> tuple[int, int, int]:
    """Deterministic per-class fill color, hues spread by golden-ratio steps."""
    hue = (class_id * 0.618033988749895) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 0.85)
    return int(r * 255), int(g * 255), int(b * 255)


def _draw_shape(draw: ImageDraw.ImageDraw, class_id: int, box: tuple[int, int, int, int]):
    x0, y0, x1, y1 = box
    kind = class_id % 3
    if kind == 0:
        draw.rectangle([x0, y0, x1, y1], fill=1)
    elif kind == 1:
        draw.ellipse([x0, y0, x1, y1], fill=1)
    else:
        xm = (x0 + x1) // 2
        draw.polygon([(xm, y0), (x0, y1), (x1, y1)], fill=1)


def _shape_mask(
    rng: np.random.Generator,
    class_id: int,
    size: tuple[int, int],
    scale: tuple[float, float],
) -> np.ndarray:
    height, width = size
    short = min(height, width)
    w = max(3, int(rng.uniform(*scale) * short))
    h = max(3, int(rng.uniform(*scale) * short))
    w = min(w, width - 1)
    h = min(h, height - 1)
    x0 = int(rng.integers(0, width - w))
    y0 = int(rng.integers(0, height - h))
    canvas = Image.new("L", (width, height), 0)
    _draw_shape(ImageDraw.Draw(canvas), class_id, (x0, y0, x0 + w, y0 + h))
    return np.asarray(canvas, dtype=np.uint8)


def _spawn_classes(rng: np.random.Generator, spec: ToySpec) -> list[int]:
    spawned = [
        cls for cls, p in zip(spec.class_ids, spec.spawn_probs) if rng.random() < p
    ]
    lo, hi = spec.shapes_per_image
    if len(spawned) > hi:
        keep = rng.permutation(len(spawned))[:hi]
        spawned = [spawned[i] for i in sorted(keep)]
    total = sum(spec.spawn_probs)
    if len(spawned) < lo:
        if total == 0:
            raise ConfigError(
                "cannot reach the minimum shape count: all spawn probabilities are zero"
            )
        probs = np.asarray(spec.spawn_probs) / total
        while len(spawned) < lo:
            spawned.append(int(rng.choice(spec.class_ids, p=probs)))
    rng.shuffle(spawned)
    return spawned


def generate_toy(spec: ToySpec) -> ToyDataset:
    """Render the dataset described by spec, deterministically.

    Shapes are painted in a random order and later shapes overwrite
    earlier ones; annotation rows are written in the same order so the
    codec's last-wins stacking reproduces the label map exactly.
    """
    rng = np.random.default_rng(spec.seed)
    height, width = spec.image_size
    dataset = ToyDataset(spec=spec)

    for i in range(spec.n_images):
        image_id = f"toy_{i:05d}"
        color = np.full((height, width, 3), BACKGROUND_GRAY, dtype=np.float64)
        class_map = np.zeros((height, width), dtype=np.int16)
        records = []
        for cls in _spawn_classes(rng, spec):
            mask = _shape_mask(rng, cls, spec.image_size, spec.shape_scale)
            on = mask == 1
            class_map[on] = cls
            color[on] = class_color(cls)
            records.append(
                AnnotationRecord(
                    image_id=image_id,
                    encoded_pixels=format_rle(rle_encode(mask)),
                    class_id=cls,
                    height=height,
                    width=width,
                )
            )
        if spec.noise_level > 0:
            color += rng.normal(0.0, spec.noise_level, size=color.shape)
        image = np.clip(np.rint(color), 0, 255).astype(np.uint8)

        dataset.images[image_id] = image
        dataset.class_maps[image_id] = class_map
        dataset.index.entries[image_id] = ImageEntry(
            image_id, (height, width), records
        )
    return dataset


def save_toy_dataset(dataset: ToyDataset, out_dir: str | Path) -> Path:
    """Write images, indexed-color label maps, annotations, and a manifest.

    Layout:
        out_dir/images/<id>.png   lossless RGB
        out_dir/masks/<id>.png    indexed-color label map
        out_dir/annotations.csv   standard annotation schema
        out_dir/manifest.json     the ToySpec, seed included
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    for image_id, image in dataset.images.items():
        Image.fromarray(image, mode="RGB").save(out_dir / "images" / f"{image_id}.png")
        save_classmap_png(dataset.class_maps[image_id], out_dir / "masks" / f"{image_id}.png")
    save_annotations(dataset.index, out_dir / "annotations.csv")
    (out_dir / MANIFEST_NAME).write_text(dataset.spec.to_json() + "\n")
    return out_dir


def load_toy_dataset(root: str | Path) -> ToyDataset:
    """Read a dataset written by save_toy_dataset."""
    root = Path(root)
    manifest = root / MANIFEST_NAME
    if not manifest.is_file():
        raise ConfigError(f"{root} has no {MANIFEST_NAME}; not a toy dataset directory")
    spec = ToySpec.from_payload(json.loads(manifest.read_text()))
    index = load_annotations(root / "annotations.csv")
    dataset = ToyDataset(spec=spec, index=index)
    for image_id in index.image_ids:
        with Image.open(root / "images" / f"{image_id}.png") as img:
            dataset.images[image_id] = np.asarray(img.convert("RGB"), dtype=np.uint8)
        dataset.class_maps[image_id] = load_classmap_png(root / "masks" / f"{image_id}.png")
    return dataset
