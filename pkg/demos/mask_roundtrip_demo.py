"""Walk a mask through its whole life: CSV text -> pixels -> CSV text.

Annotations store each class mask as 1-indexed (start, length) runs over
the column-major-flattened image. This script decodes a tiny hand-written
example, condenses overlapping class masks into one label image, renders
it, and encodes it back to prove nothing is lost.

Run:  python3 demos/mask_roundtrip_demo.py
"""

from pathlib import Path

import numpy as np

from segkit.palette import save_classmap_png
from segkit.rle import (
    PixelOrder,
    condense,
    format_rle,
    parse_rle,
    resize_classmap,
    rle_decode,
    rle_encode,
)

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

# A 6x6 image with two annotations, written the way they would sit in the
# CSV: a shirt-like blob (class 4) and a belt crossing it (class 23).
HEIGHT, WIDTH = 6, 6
SHIRT = "8 4 14 4 20 4 26 4"
BELT = "10 1 16 1 22 1 28 1"

print("descriptor for class 4 :", SHIRT)
print("descriptor for class 23:", BELT)

shirt_pairs = parse_rle(SHIRT)
belt_pairs = parse_rle(BELT)
print("\nparsed runs:", shirt_pairs)

shirt_mask = rle_decode(shirt_pairs, (HEIGHT, WIDTH))
belt_mask = rle_decode(belt_pairs, (HEIGHT, WIDTH))
print("\nshirt mask (note the column-major fill):")
print(shirt_mask)

# Later classes win overlapping pixels, so the belt stays visible on top.
class_map = condense([(shirt_mask, 4), (belt_mask, 23)], (HEIGHT, WIDTH))
print("\ncondensed label image (0 = background):")
print(class_map)

save_classmap_png(class_map, OUT / "roundtrip_map.png")
big = resize_classmap(class_map, (96, 96))
save_classmap_png(big, OUT / "roundtrip_map_96.png")
print(f"\nwrote {OUT / 'roundtrip_map.png'} and a 96x96 nearest-neighbor blowup")
assert set(np.unique(big)) == set(np.unique(class_map)), "resize invented labels"

# The codec itself is lossless: each binary mask re-encodes to exactly
# the text it came from.
for name, mask, original in [("shirt", shirt_mask, SHIRT), ("belt", belt_mask, BELT)]:
    recovered = format_rle(rle_encode(mask))
    status = "ok" if recovered == original else "MISMATCH"
    print(f"{name}: re-encoded -> {recovered!r}  [{status}]")
    assert recovered == original

# Condensing, by contrast, is deliberately lossy at overlaps: the belt
# claimed a stripe of shirt pixels, so the shirt runs split around it.
shirt_after = format_rle(rle_encode((class_map == 4).astype(np.uint8)))
belt_after = format_rle(rle_encode((class_map == 23).astype(np.uint8)))
print(f"\nshirt runs after condensing: {shirt_after}")
print(f"belt runs after condensing:  {belt_after}  (unchanged: it won the overlap)")
assert belt_after == BELT
assert shirt_after != SHIRT

# The same pixels flattened row-major give different runs: the belt is a
# horizontal stripe, so four scattered column-major runs fuse into one.
row_major = format_rle(rle_encode(belt_mask, PixelOrder.ROW_MAJOR))
print(f"\nbelt runs if flattened row-major instead: {row_major}")
back = rle_decode(parse_rle(row_major), (HEIGHT, WIDTH), PixelOrder.ROW_MAJOR)
assert np.array_equal(back, belt_mask)
print("row-major round trip ok")
