"""
Waveform augmentation and mixup
===============================

What the training pipeline does to a clip before it reaches the network.
"""

# %%
import numpy as np

from aclnet.audio import AudioClip, AugmentConfig, augment_example, example_rng, resample_linear
from aclnet.mixup import LabeledExample, MixupConfig, mixup_batch, one_hot, sample_beta

rate = 16000
t = np.arange(3 * rate) / rate
tone = AudioClip(0.4 * np.sin(2 * np.pi * 440 * t), rate)

# %% [markdown]
# Resampling by 1.25 shortens the clip and raises the pitch by the same factor.
# Count sign changes to estimate the frequency.

# %%
def zc_freq(x, rate):
    s = np.signbit(x)
    return np.count_nonzero(s[1:] != s[:-1]) / 2 / (len(x) / rate)

for factor in (0.8, 1.0, 1.25):
    y = resample_linear(tone, factor).samples
    print(f"factor {factor:4.2f}: {len(y)} samples, ~{zc_freq(y, rate):.0f} Hz")

# %% [markdown]
# Each training example gets its own generator keyed by (seed, epoch, index),
# so a draw can be replayed exactly.

# %%
cfg = AugmentConfig()
for i in range(4):
    out, draw = augment_example(tone, cfg, example_rng(0, 0, i), return_draw=True)
    print(len(out), f"factor {draw.factor:.3f}", f"gain {draw.gain_db:+.2f} dB", f"crop at {draw.crop_offset}")

# %% [markdown]
# Mixup weights. Small alpha keeps most pairs close to one of the two inputs.

# %%
for alpha in (0.1, 0.4, 1.0):
    lam = sample_beta(alpha, np.random.default_rng(1), size=100_000)
    print(f"alpha {alpha}: mean {lam.mean():.3f}, share outside [0.1, 0.9] {np.mean((lam < .1) | (lam > .9)):.2f}")

# %%
rng = np.random.default_rng(2)
batch = [LabeledExample(rng.standard_normal(8), one_hot(k, 5)) for k in range(4)]
for ex in mixup_batch(batch, MixupConfig(alpha=0.4, warmup_epochs=0), epoch=0, rng=rng):
    print(np.round(ex.y, 3))
