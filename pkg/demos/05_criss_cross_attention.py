"""
Criss-cross attention
=====================

Each position attends to its own row and column only, H + W - 1 keys instead
of H * W. Two stacked passes still connect every pair of positions.
"""

import numpy as np

from v2vlc.attention import affinity_count, criss_cross_attention, criss_cross_dense_mask, dense_attention
from v2vlc.numerics import Tensor

rng = np.random.default_rng(0)
q, k, v = (Tensor(rng.standard_normal((4, 6, 6))) for _ in range(3))

sparse = criss_cross_attention(q, k, v).data
oracle = dense_attention(q, k, v, mask=criss_cross_dense_mask(6, 6)).data
print("max |sparse - masked dense| =", np.abs(sparse - oracle).max())
print("affinities on 32x32: criss-cross", affinity_count(32, 32), "vs dense", affinity_count(32, 32, "dense"))

# Receptive field of output (0, 0): one pass reaches row 0 and column 0 only,
# a second pass over the first pass's output reaches everything.
x = Tensor(rng.standard_normal((2, 4, 4)), requires_grad=True)
criss_cross_attention(x, x, x)[:, 0, 0].sum().backward()
print("one pass:\n", (np.abs(x.grad).sum(0) > 0).astype(int))

x2 = Tensor(x.data, requires_grad=True)
first = criss_cross_attention(x2, x2, x2)
criss_cross_attention(first, first, first)[:, 0, 0].sum().backward()
print("two passes:\n", (np.abs(x2.grad).sum(0) > 0).astype(int))
