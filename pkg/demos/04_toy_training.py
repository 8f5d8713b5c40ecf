"""End-to-end miniature training run through the library API.

Fabricates a small synthetic dataset, trains the teacher part for a few
hundred iterations, and reports the held-out PSNR before/after. Takes a
couple of minutes on one CPU core; scale `EPOCHS`/`ITERS` up for a real
run (the defaults in TrainConfig mirror the full-scale recipe).

Run:  python3 demos/04_toy_training.py
"""

import os
import tempfile

import numpy as np

from turbmit import iqa
from turbmit import turbsim as ts
from turbmit.trainer import FrameDataset, TrainConfig, train

EPOCHS, ITERS = 2, 150

root = tempfile.mkdtemp(prefix="turbmit_demo_")
clean_dir = os.path.join(root, "clean")
ts.synth_clean_images(clean_dir, 80, size=32, seed=5)
dataset = os.path.join(root, "synthetic")
# correlation length and tilt amplitude scaled to the 32px frames
ts.build_dataset(clean_dir, dataset, 80, "synthetic", seed=9,
                 corr_length=4.0, t0=0.4)
manifest = os.path.join(dataset, ts.TRAIN_MANIFEST)
print(f"dataset: 80 records under {dataset}")

config = TrainConfig(
    mode="syn_atm", epochs=EPOCHS, iters_per_epoch=ITERS, batch_size=8,
    crop_size=32, seed=0, val_count=12, teacher_manifest=manifest,
    base_width=16, disc_width=16, rnet_width=16,
    lr_init=1e-3, lr_final=1e-4,
)

held_out = FrameDataset(ts.load_manifest(manifest), with_clean=True,
                        with_params=True, val_count=12)
baseline = float(np.mean([iqa.psnr(item["clean"], item["degraded"])
                          for item in held_out.val_items()]))
print(f"held-out degraded-input PSNR: {baseline:.3f} dB")

state, logs = train(config, verbose=True)

print("\nper-epoch held-out metrics:")
for epoch in logs["epochs"]:
    print(f"  epoch {epoch['epoch']}: PSNR {epoch['val_psnr']:.3f} dB "
          f"(gain {epoch['val_psnr'] - baseline:+.3f}), "
          f"SSIM {epoch['val_ssim']:.4f}")
print(f"\ntrained state: iteration {state.iteration}, "
      f"{sum(p.numel() for p in state.gen.parameters())} generator params")
