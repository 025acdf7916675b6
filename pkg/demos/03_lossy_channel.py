"""
Simulating a lossy link
=======================

Shared feature maps cross a channel that overwrites a random subset of values
with uniform noise, either scalar by scalar or whole channels at a time.
"""

import numpy as np

from v2vlc.channel import CHANNELWISE_LOSSY, GLOBAL_LOSSY, ChannelConfig, FeatureMap, apply_channel, rng_stream

rng = np.random.default_rng(0)
clean = FeatureMap(rng.uniform(0.0, 3.0, (9, 10, 10)))

for p in (0.1, 0.3, 0.7):
    _, mask = apply_channel(clean, ChannelConfig(GLOBAL_LOSSY, p), rng_stream(0, 1))
    print(f"global p={p}: replaced {mask.stats()['replaced_fraction']:.3f} of scalars")

out, mask = apply_channel(clean, ChannelConfig(CHANNELWISE_LOSSY, 0.5), rng_stream(0, 2))
print("channelwise p=0.5 on 9 channels corrupts", mask.channels)
untouched = [c for c in range(9) if c not in mask.channels]
print("untouched channels bit-identical:", np.array_equal(out.data[untouched], clean.data[untouched]))

# During lossy training every transmission draws a fresh p from U[0, 1].
resample = ChannelConfig(GLOBAL_LOSSY, "uniform")
fractions = [apply_channel(clean, resample, rng_stream(0, 3, k))[1].stats()["replaced_fraction"] for k in range(5)]
print("per-transmission fractions:", np.round(fractions, 2))
