"""Annotation CSV ingestion, exploration statistics, and sampling.

The CSV schema is one row per mask instance:

    ImageId,EncodedPixels,ClassId,Height,Width

Rows for the same ImageId are grouped in file order, which is the order
condense() applies them (last one wins on overlap).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    ConfigError,
    EmptyInputError,
    FeasibilityWarning,
    RowError,
    SchemaError,
    SegkitError,
)
from .rle import NUM_CLASSES, RlePairs, condense, parse_rle, rle_decode

CSV_COLUMNS = ("ImageId", "EncodedPixels", "ClassId", "Height", "Width")

COMMON_CLASS_SHARE = 0.01  # classes rarer than this are matched best-effort


@dataclass(frozen=True)
class AnnotationRecord:
    """One mask instance: an RLE-encoded region of a single class."""

    image_id: str
    encoded_pixels: str
    class_id: int
    height: int
    width: int

    @property
    def pairs(self) -> RlePairs:
        return parse_rle(self.encoded_pixels)


@dataclass
class ImageEntry:
    """All records of one image, in file order, plus its declared size."""

    image_id: str
    size: tuple[int, int]  # (height, width)
    records: list[AnnotationRecord] = field(default_factory=list)


@dataclass
class DatasetIndex:
    """Annotation records grouped by image, preserving file order."""

    entries: dict[str, ImageEntry] = field(default_factory=dict)
    row_errors: list[RowError] = field(default_factory=list)
    source: Path | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self.entries

    def __iter__(self) -> Iterator[ImageEntry]:
        return iter(self.entries.values())

    @property
    def image_ids(self) -> list[str]:
        return list(self.entries)

    @property
    def n_records(self) -> int:
        return sum(len(e.records) for e in self.entries.values())

    def entry(self, image_id: str) -> ImageEntry:
        return self.entries[image_id]

    def class_map(self, image_id: str) -> np.ndarray:
        """Decode and stack every record of an image into one label map."""
        entry = self.entries[image_id]
        try:
            masks = [(rle_decode(r.pairs, entry.size), r.class_id) for r in entry.records]
        except SegkitError as exc:
            raise type(exc)(f"image {image_id}: {exc}") from exc
        return condense(masks, entry.size)

    def subset(self, image_ids: Sequence[str]) -> "DatasetIndex":
        """New index containing the given images, in this index's order."""
        wanted = set(image_ids)
        missing = wanted - set(self.entries)
        if missing:
            raise KeyError(f"unknown image ids: {sorted(missing)[:5]}")
        entries = {iid: e for iid, e in self.entries.items() if iid in wanted}
        return DatasetIndex(entries=entries, source=self.source)


def _parse_row(line_no: int, row: list[str]) -> AnnotationRecord:
    if len(row) != len(CSV_COLUMNS):
        raise RowError(line_no, f"expected {len(CSV_COLUMNS)} fields, got {len(row)}")
    image_id, encoded, class_str, height_str, width_str = row
    if not image_id:
        raise RowError(line_no, "empty ImageId")
    try:
        class_id = int(class_str)
        height = int(height_str)
        width = int(width_str)
    except ValueError as exc:
        raise RowError(line_no, f"non-integer field: {exc}") from exc
    if not 1 <= class_id <= NUM_CLASSES - 1:
        raise RowError(line_no, f"class_id {class_id} outside [1, {NUM_CLASSES - 1}]")
    if height < 1 or width < 1:
        raise RowError(line_no, f"non-positive size {height}x{width}")
    try:
        pairs = parse_rle(encoded)
    except SegkitError as exc:
        raise RowError(line_no, f"bad EncodedPixels: {exc}") from exc
    if pairs:
        last_start, last_len = pairs[-1]
        if last_start + last_len - 1 > height * width:
            raise RowError(
                line_no,
                f"run ends at {last_start + last_len - 1} but image has "
                f"{height * width} pixels",
            )
    return AnnotationRecord(image_id, encoded, class_id, height, width)


def load_annotations(path: str | Path, strict: bool = False) -> DatasetIndex:
    """Read an annotation CSV into a DatasetIndex.

    Malformed rows are collected on the returned index (with 1-based line
    numbers) instead of aborting the load. In strict mode the first bad
    row raises instead.

    Raises:
        SchemaError: header is not exactly the required five columns.
        RowError: only in strict mode.
    """
    path = Path(path)
    index = DatasetIndex(source=path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file: missing CSV header") from None
        if header and header[0].startswith("﻿"):
            header[0] = header[0].lstrip("﻿")
        if tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise SchemaError(
                f"expected header {','.join(CSV_COLUMNS)}, got {','.join(header)}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                record = _parse_row(line_no, row)
                entry = index.entries.get(record.image_id)
                if entry is None:
                    index.entries[record.image_id] = ImageEntry(
                        record.image_id,
                        (record.height, record.width),
                        [record],
                    )
                elif entry.size != (record.height, record.width):
                    raise RowError(
                        line_no,
                        f"size {record.height}x{record.width} conflicts with "
                        f"{entry.size[0]}x{entry.size[1]} declared earlier for "
                        f"{record.image_id}",
                    )
                else:
                    entry.records.append(record)
            except RowError as exc:
                if strict:
                    raise
                index.row_errors.append(exc)
    return index


@dataclass
class ClassHistogram:
    """Image-level class occurrence statistics.

    image_counts[c] is the number of images containing at least one record
    of class c; image_shares normalizes by the image count. instance_counts
    tallies annotation rows instead, since published per-class histograms
    do not always say which of the two they plot.
    """

    n_images: int
    image_counts: dict[int, int]
    image_shares: dict[int, float]
    instance_counts: dict[int, int]

    def to_payload(self) -> dict:
        return {
            "n_images": self.n_images,
            "image_counts": {str(k): v for k, v in sorted(self.image_counts.items())},
            "image_shares": {str(k): v for k, v in sorted(self.image_shares.items())},
            "instance_counts": {
                str(k): v for k, v in sorted(self.instance_counts.items())
            },
        }


def class_histogram(index: DatasetIndex) -> ClassHistogram:
    """Count, per class, how many images contain it and how many records exist."""
    if len(index) == 0:
        raise EmptyInputError("cannot build a class histogram from an empty index")
    image_counts: dict[int, int] = {}
    instance_counts: dict[int, int] = {}
    for entry in index:
        present = set()
        for record in entry.records:
            instance_counts[record.class_id] = instance_counts.get(record.class_id, 0) + 1
            present.add(record.class_id)
        for cls in present:
            image_counts[cls] = image_counts.get(cls, 0) + 1
    shares = {cls: count / len(index) for cls, count in image_counts.items()}
    return ClassHistogram(
        n_images=len(index),
        image_counts=image_counts,
        image_shares=shares,
        instance_counts=instance_counts,
    )


@dataclass
class SizeStats:
    """Width/height distributions and their extremes."""

    n_images: int
    width_counts: dict[int, int]
    height_counts: dict[int, int]
    width_min: int
    width_max: int
    height_min: int
    height_max: int

    @property
    def width_diff(self) -> int:
        """Largest pairwise width difference (max - min)."""
        return self.width_max - self.width_min

    @property
    def height_diff(self) -> int:
        return self.height_max - self.height_min

    def to_payload(self) -> dict:
        return {
            "n_images": self.n_images,
            "width": {
                "min": self.width_min,
                "max": self.width_max,
                "max_pairwise_diff": self.width_diff,
                "counts": {str(k): v for k, v in sorted(self.width_counts.items())},
            },
            "height": {
                "min": self.height_min,
                "max": self.height_max,
                "max_pairwise_diff": self.height_diff,
                "counts": {str(k): v for k, v in sorted(self.height_counts.items())},
            },
        }


def size_histogram(index: DatasetIndex) -> SizeStats:
    """Distribution of declared image sizes, one sample per image."""
    if len(index) == 0:
        raise EmptyInputError("cannot build a size histogram from an empty index")
    widths: dict[int, int] = {}
    heights: dict[int, int] = {}
    for entry in index:
        h, w = entry.size
        widths[w] = widths.get(w, 0) + 1
        heights[h] = heights.get(h, 0) + 1
    return SizeStats(
        n_images=len(index),
        width_counts=widths,
        height_counts=heights,
        width_min=min(widths),
        width_max=max(widths),
        height_min=min(heights),
        height_max=max(heights),
    )


def split(
    index: DatasetIndex,
    train_fraction: float = 0.9,
    seed: int = 0,
) -> tuple[DatasetIndex, DatasetIndex]:
    """Disjoint, exhaustive image-level split, deterministic given seed.

    The train side gets round(train_fraction * N) images, clamped so both
    sides stay non-empty.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(index)
    if n < 2:
        raise ConfigError(f"need at least 2 images to split, got {n}")
    rng = np.random.default_rng(seed)
    ids = index.image_ids
    order = rng.permutation(n)
    n_train = int(round(train_fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    train_ids = [ids[i] for i in order[:n_train]]
    val_ids = [ids[i] for i in order[n_train:]]
    return index.subset(train_ids), index.subset(val_ids)


def _max_relative_deviation(
    subset_shares: dict[int, float],
    full_shares: dict[int, float],
    common: list[int],
) -> float:
    worst = 0.0
    for cls in common:
        dev = abs(subset_shares.get(cls, 0.0) - full_shares[cls]) / full_shares[cls]
        worst = max(worst, dev)
    return worst


def diverse_subset(
    index: DatasetIndex,
    n: int,
    seed: int = 0,
    tolerance: float = 0.2,
    max_attempts: int = 200,
) -> DatasetIndex:
    """Sample n images whose class mix resembles the full index.

    Every class present in at least 1% of images must keep its share of
    the subset within the relative tolerance; rarer classes are
    best-effort. Uses bounded randomized rejection sampling: if no draw
    meets the tolerance, the best one found is returned along with a
    FeasibilityWarning reporting the deviation achieved.
    """
    if n < 1:
        raise ConfigError(f"subset size must be >= 1, got {n}")
    if n > len(index):
        raise ConfigError(f"subset size {n} exceeds index size {len(index)}")
    if n == len(index):
        return index.subset(index.image_ids)

    full = class_histogram(index)
    common = [cls for cls, share in full.image_shares.items() if share >= COMMON_CLASS_SHARE]
    rng = np.random.default_rng(seed)
    ids = index.image_ids

    best_ids: list[str] = []
    best_dev = np.inf
    for _ in range(max_attempts):
        chosen = [ids[i] for i in rng.choice(len(ids), size=n, replace=False)]
        candidate = index.subset(chosen)
        shares = class_histogram(candidate).image_shares
        dev = _max_relative_deviation(shares, full.image_shares, common)
        if dev < best_dev:
            best_dev = dev
            best_ids = chosen
        if dev <= tolerance:
            return candidate
    warnings.warn(
        f"no {n}-image subset met relative tolerance {tolerance} within "
        f"{max_attempts} attempts; best achieved deviation {best_dev:.4f}",
        FeasibilityWarning,
        stacklevel=2,
    )
    return index.subset(best_ids)


def class_pixel_frequencies(index: DatasetIndex) -> np.ndarray:
    """Per-class mean pixel fraction over images, background included.

    f[c] is the mean over images of (pixels of class c / pixels in the
    image), computed from decoded ground-truth maps at their native size.
    The entries sum to 1 by construction.
    """
    if len(index) == 0:
        raise EmptyInputError("cannot compute pixel frequencies of an empty index")
    freq = np.zeros(NUM_CLASSES, dtype=np.float64)
    for entry in index:
        class_map = index.class_map(entry.image_id)
        counts = np.bincount(class_map.ravel(), minlength=NUM_CLASSES)
        freq += counts / class_map.size
    return freq / len(index)


def save_annotations(index: DatasetIndex, path: str | Path) -> None:
    """Write an index back out in the standard CSV schema, file order kept."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for entry in index:
            for r in entry.records:
                writer.writerow([r.image_id, r.encoded_pixels, r.class_id, r.height, r.width])
