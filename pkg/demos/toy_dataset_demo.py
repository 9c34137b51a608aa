"""Generate a synthetic shape dataset and look at what came out.

The generator drops colored rectangles, ellipses, and triangles on a gray
background and emits the same artifacts a real annotation dump would have:
an RLE CSV, per-image PNGs, and a manifest that makes regeneration exact.

Run:  python3 demos/toy_dataset_demo.py
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from segkit.data import class_histogram, class_pixel_frequencies, load_annotations
from segkit.palette import colorize, overlay
from segkit.toy import ToySpec, generate_toy, load_toy_dataset, save_toy_dataset

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

spec = ToySpec(
    n_images=9,
    image_size=(64, 64),
    class_ids=(1, 2, 3),
    spawn_probs=(0.9, 0.5, 0.25),
    shapes_per_image=(1, 3),
    seed=42,
)
ds = generate_toy(spec)
print(f"generated {len(ds.index)} images of {spec.image_size[0]}x{spec.image_size[1]}")

# Spawn probabilities directly induce class imbalance, the property the
# losses in this package exist to handle.
hist = class_histogram(ds.index)
print("\nclass  images containing it  share")
for cls in sorted(hist.image_counts):
    print(f"  {cls}    {hist.image_counts[cls]:>3}                  "
          f"{hist.image_shares[cls]:.2f}")
freqs = class_pixel_frequencies(ds.index)
print(f"\nmean pixel share: background {freqs[0]:.3f}, "
      + ", ".join(f"class {c} {freqs[c]:.3f}" for c in sorted(hist.image_counts)))

root = save_toy_dataset(ds, OUT / "toyset")
print(f"\nsaved dataset under {root}")
reloaded = load_toy_dataset(root)
iid = ds.index.image_ids[0]
assert np.array_equal(reloaded.class_maps[iid], ds.class_maps[iid])
print("reloaded dataset matches the in-memory one")

# The CSV alone reconstructs every mask; the PNGs are a convenience.
index = load_annotations(root / "annotations.csv")
assert np.array_equal(index.class_map(iid), ds.class_maps[iid])
print("annotations.csv alone reproduces the label images")

fig, axes = plt.subplots(3, 6, figsize=(12, 6.2))
for i, image_id in enumerate(ds.index.image_ids):
    row, col = divmod(i, 3)
    img = ds.images[image_id]
    cmap = ds.class_maps[image_id]
    axes[row][2 * col].imshow(img)
    axes[row][2 * col].set_title(image_id, fontsize=8)
    axes[row][2 * col + 1].imshow(overlay(img, cmap))
    axes[row][2 * col + 1].set_title("labels", fontsize=8)
for ax in axes.ravel():
    ax.axis("off")
fig.suptitle("toy images and their label overlays")
fig.tight_layout()
fig.savefig(OUT / "toy_montage.png", dpi=110)
plt.close(fig)
print(f"wrote {OUT / 'toy_montage.png'}")

lone = colorize(ds.class_maps[iid])
plt.imsave(OUT / "toy_first_labels.png", lone)
print(f"wrote {OUT / 'toy_first_labels.png'}")
