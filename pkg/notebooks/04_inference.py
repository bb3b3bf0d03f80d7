"""
Inference on clips of any length
================================

Save a model, load it back and classify inputs of different durations
with the same weights.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from aclnet import NetworkConfig, build, init_weights, predict, store
from aclnet.audio import AudioClip, normalize

cfg = NetworkConfig(width_multiplier=1 / 32, num_classes=50)
path = Path(tempfile.mkdtemp()) / "tiny.acln"
store.save(cfg, init_weights(build(cfg, 16000), seed=0), path)
print(path.stat().st_size, "bytes on disk")

# %%
cfg, weights = store.load(path)
rng = np.random.default_rng(0)
for seconds in (0.01, 1.0, 1.28, 5.0):
    n = round(seconds * cfg.sample_rate)
    x = normalize(AudioClip(rng.standard_normal(n), cfg.sample_rate)).samples
    p = predict(build(cfg, n), weights, x)
    top = np.argsort(p)[::-1][:3]
    print(f"{seconds:5.2f} s  sum {p.sum():.6f}  top-3 {top.tolist()}")

# %% [markdown]
# The CLI does the same from a WAV file:
#
#     aclnet infer --model tiny.acln --wav clip.wav --top 5
