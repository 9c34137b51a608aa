"""Run-length-encoded mask codec.

Annotations arrive as whitespace-separated integer strings of alternating
(start, length) pairs. Pixel positions are 1-indexed over the flattened
image; the flattening order is column-major by default (top to bottom,
then left to right), matching the challenge CSV convention. Masks and
class maps are numpy arrays of shape (height, width).
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import (
    InvalidClassError,
    InvalidRunError,
    MalformedDescriptorError,
    MaskShapeError,
    OutOfBoundsError,
)

NUM_CLASSES = 47  # 46 annotated categories plus background label 0

RlePairs = list[tuple[int, int]]


class PixelOrder(Enum):
    """Flattening order for 1-indexed pixel positions."""

    COLUMN_MAJOR = "column-major"
    ROW_MAJOR = "row-major"

    @property
    def numpy_order(self) -> str:
        return "F" if self is PixelOrder.COLUMN_MAJOR else "C"


def parse_rle(text: str) -> RlePairs:
    """Parse RLE text into canonical (start, length) pairs.

    Canonical form is sorted ascending by start with non-overlapping runs;
    unsorted input is reordered rather than rejected. An empty or
    whitespace-only string denotes an empty mask.

    Raises:
        MalformedDescriptorError: odd token count or non-integer token.
        InvalidRunError: non-positive length, start < 1, or overlapping runs.
    """
    tokens = text.split()
    if not tokens:
        return []
    if len(tokens) % 2 != 0:
        raise MalformedDescriptorError(
            f"expected an even number of integers, got {len(tokens)} tokens"
        )
    try:
        values = [int(t) for t in tokens]
    except ValueError as exc:
        raise MalformedDescriptorError(f"non-integer token in RLE text: {exc}") from exc

    pairs = list(zip(values[0::2], values[1::2]))
    for start, length in pairs:
        if length < 1:
            raise InvalidRunError(f"run at start {start} has length {length} (must be >= 1)")
        if start < 1:
            raise InvalidRunError(f"run start {start} is not a 1-indexed position")
    pairs.sort(key=lambda p: p[0])
    for (s0, l0), (s1, _) in zip(pairs, pairs[1:]):
        if s1 <= s0 + l0 - 1:
            raise InvalidRunError(f"runs starting at {s0} and {s1} overlap")
    return pairs


def format_rle(pairs: RlePairs) -> str:
    """Render pairs back to the space-separated text form."""
    return " ".join(f"{s} {l}" for s, l in pairs)


def rle_decode(
    pairs: RlePairs,
    size: tuple[int, int],
    order: PixelOrder = PixelOrder.COLUMN_MAJOR,
) -> np.ndarray:
    """Decode (start, length) pairs into a binary mask.

    Args:
        pairs: canonical RLE pairs (see parse_rle).
        size: (height, width) of the target mask.
        order: flattening order of the 1-indexed pixel positions.

    Returns:
        uint8 array of shape (height, width) with exactly sum(lengths) ones.

    Raises:
        OutOfBoundsError: a run extends past height * width.
    """
    height, width = size
    if height < 1 or width < 1:
        raise MaskShapeError(f"mask size must be positive, got {size}")
    total = height * width
    flat = np.zeros(total, dtype=np.uint8)
    for start, length in pairs:
        end = start + length - 1
        if end > total:
            raise OutOfBoundsError(
                f"run ({start}, {length}) ends at pixel {end} but the image has {total} pixels"
            )
        flat[start - 1 : end] = 1
    return flat.reshape((height, width), order=order.numpy_order)


def rle_encode(mask: np.ndarray, order: PixelOrder = PixelOrder.COLUMN_MAJOR) -> RlePairs:
    """Encode a binary mask as canonical (start, length) pairs.

    Inverse of rle_decode: rle_decode(rle_encode(m), m.shape, order) == m
    for any {0,1} mask. The all-zero mask encodes to [].
    """
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise MaskShapeError(f"expected a 2-D mask, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise MaskShapeError("mask values must be exactly 0 or 1")
    flat = arr.flatten(order=order.numpy_order).astype(np.int8)
    padded = np.concatenate([[0], flat, [0]])
    changes = np.flatnonzero(padded[1:] != padded[:-1])
    starts = changes[0::2] + 1  # 1-indexed
    lengths = changes[1::2] - changes[0::2]
    return list(zip(starts.tolist(), lengths.tolist()))


def condense(
    masks: list[tuple[np.ndarray, int]],
    size: tuple[int, int],
) -> np.ndarray:
    """Stack per-instance binary masks into a single class map.

    Where masks overlap, the last annotation in sequence order wins.
    Uncovered pixels keep the background label 0.

    Args:
        masks: (binary mask, class_id) pairs; class ids must be in [1, 46].
        size: (height, width) every mask must match.

    Returns:
        int16 array of shape (height, width) with labels in [0, 46].
    """
    height, width = size
    out = np.zeros((height, width), dtype=np.int16)
    for i, (mask, class_id) in enumerate(masks):
        if not 1 <= class_id <= NUM_CLASSES - 1:
            raise InvalidClassError(
                f"mask {i}: class id {class_id} outside [1, {NUM_CLASSES - 1}]"
            )
        arr = np.asarray(mask)
        if arr.shape != (height, width):
            raise MaskShapeError(
                f"mask {i}: shape {arr.shape} does not match declared size {(height, width)}"
            )
        out[arr != 0] = class_id
    return out


def resize_classmap(class_map: np.ndarray, target: tuple[int, int] = (256, 256)) -> np.ndarray:
    """Resize a label map with nearest-neighbor sampling.

    Labels are categorical, so no interpolation: each target pixel copies
    the source pixel whose center is nearest. Output labels are therefore
    always a subset of the input labels.
    """
    arr = np.asarray(class_map)
    if arr.ndim != 2:
        raise MaskShapeError(f"expected a 2-D class map, got shape {arr.shape}")
    src_h, src_w = arr.shape
    dst_h, dst_w = target
    if dst_h < 1 or dst_w < 1:
        raise MaskShapeError(f"target size must be positive, got {target}")
    if (src_h, src_w) == (dst_h, dst_w):
        return arr.copy()
    rows = np.minimum((np.arange(dst_h) + 0.5) * src_h / dst_h, src_h - 1).astype(np.intp)
    cols = np.minimum((np.arange(dst_w) + 0.5) * src_w / dst_w, src_w - 1).astype(np.intp)
    return arr[np.ix_(rows, cols)]


def one_hot(class_map: np.ndarray, num_classes: int = NUM_CLASSES) -> np.ndarray:
    """Expand a label map into a per-class indicator stack.

    Returns a float64 array of shape (height, width, num_classes) where
    each pixel has exactly one channel set to 1.
    """
    arr = np.asarray(class_map)
    if arr.ndim != 2:
        raise MaskShapeError(f"expected a 2-D class map, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
        bad = arr.min() if arr.min() < 0 else arr.max()
        raise InvalidClassError(f"label {bad} outside [0, {num_classes - 1}]")
    out = np.zeros(arr.shape + (num_classes,), dtype=np.float64)
    rows, cols = np.indices(arr.shape)
    out[rows, cols, arr.astype(np.intp)] = 1.0
    return out
