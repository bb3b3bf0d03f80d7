"""
Training on a toy corpus
========================

Sine tones against white noise: small enough to train on a laptop CPU in
seconds, and a quick sanity check that the whole loop learns.
"""

# %%
import numpy as np

from aclnet import NetworkConfig, build
from aclnet.audio import AudioClip, AugmentConfig
from aclnet.trainer import TrainConfig, evaluate, train

rate = 16000
rng = np.random.default_rng(0)
t = np.arange(rate) / rate
items = []
for _ in range(10):
    f = rng.uniform(200, 2000)
    items.append((AudioClip(0.5 * np.sin(2 * np.pi * f * t), rate), 0))
    items.append((AudioClip(0.3 * rng.standard_normal(rate), rate), 1))

# %% [markdown]
# A narrow network (WM 1/16), half-second crops, no mixup.

# %%
EPOCHS = 40
model = NetworkConfig(width_multiplier=1 / 16, num_classes=2)
tc = TrainConfig(lr_phases=((0.05, EPOCHS),), batch_size=8, mixup=None, eval_every=10,
                 augment=AugmentConfig(crop_seconds=0.5, pre_crop_seconds=1.0))
state = train(model, items, tc, val_items=items,
              on_epoch=lambda row: row["val_accuracy"] is not None
              and print(f"epoch {row['epoch']:3d} loss {row['train_loss']:.4f} acc {row['val_accuracy']:.2f}"))

# %% [markdown]
# Evaluation feeds each whole clip, so the confusion matrix covers every file once.

# %%
res = evaluate(build(model, rate), state.weights, items)
print(res.confusion)
print("accuracy", res.accuracy)
