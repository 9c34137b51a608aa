"""The cheapest possible training sanity check: memorize one image.

If a model/loss/optimizer combination cannot drive one image to near-perfect
accuracy, no amount of data will save it. This runs a small U-Net on a single
32x32 toy image with SGD + focal loss and watches the binary IoU climb off
the floor once the network stops predicting background everywhere.

Run:  python3 demos/overfit_one_demo.py   (about half a minute on CPU)
"""

import time
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from segkit.palette import overlay
from segkit.plots import plot_curves
from segkit.toy import ToySpec, generate_toy
from segkit.train import TrainConfig, build_model_from_config, overfit_single, predict

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

ds = generate_toy(ToySpec(n_images=1, image_size=(32, 32), class_ids=(1, 2),
                          spawn_probs=(0.9, 0.45), seed=8))
iid = ds.index.image_ids[0]
image, cmap = ds.images[iid], ds.class_maps[iid]
print(f"target image {iid}: {100 * (cmap != 0).mean():.1f}% foreground")

config = TrainConfig(
    model="unet",
    stage="overfit-one",
    loss="focal",
    gamma=2.0,
    optimizer="sgd",
    lr=0.2,
    epochs=120,
    seed=0,
    image_size=32,
    num_classes=3,
    unet_depth=2,
    unet_base_channels=8,
    early_stop=True,
)
net = build_model_from_config(config)
print(f"model: {config.model} with {net.n_params:,} parameters\n")

t0 = time.perf_counter()
log = overfit_single(net, image, cmap, config)
elapsed = time.perf_counter() - t0

print("epoch   loss     accuracy  binary IoU")
records = log.records
step = max(1, len(records) // 8)
for rec in records[::step] + ([records[-1]] if (len(records) - 1) % step else []):
    print(f"  {rec['epoch']:>3}   {rec['train_loss']:.4f}   {rec['val_acc']:.4f}    "
          f"{rec['val_biou']:.4f}")
verdict = "reached" if log.success else "did NOT reach"
print(f"\n{verdict} acc >= 0.99 and bIoU >= 0.90 after {len(records)} epochs "
      f"({elapsed:.0f}s)")

plot_curves(records, OUT / "overfit_curves.png")
print(f"wrote {OUT / 'overfit_curves.png'}")

pred = predict(net, image, config.input_scale)
fig, axes = plt.subplots(1, 3, figsize=(9, 3.2))
for ax, (title, shown_img) in zip(axes, [
    ("input", image),
    ("ground truth", overlay(image, cmap)),
    ("prediction", overlay(image, pred)),
]):
    ax.imshow(shown_img)
    ax.set_title(title)
    ax.axis("off")
fig.tight_layout()
fig.savefig(OUT / "overfit_prediction.png", dpi=120)
plt.close(fig)
print(f"wrote {OUT / 'overfit_prediction.png'}")
