"""
A tiny reverse-mode tape
========================

Every layer in the package is built from a handful of numpy primitives that
record themselves on a tape. This script differentiates a small expression,
then uses the finite-difference checker on a convolution.
"""

import numpy as np

from v2vlc import numerics as nx
from v2vlc.numerics import Tensor, gradcheck

# Leaves that should receive gradients are flagged explicitly.
x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
y = (nx.relu(x) * x).sum()
y.backward()
print("d/dx sum(relu(x) * x) =", x.grad)  # 2x where x > 0, else 0

# The checker compares the tape against central differences, norm-wise.
rng = np.random.default_rng(0)
inputs = [Tensor(rng.standard_normal((2, 6, 6))), Tensor(rng.standard_normal((4, 2, 3, 3)))]
report = gradcheck(lambda a, w: nx.conv2d(a, w, stride=2), inputs)
print(report)

# Shape mistakes surface as errors that name both operands.
try:
    nx.matmul(np.ones((2, 3)), np.ones((4, 5)))
except nx.DimensionError as err:
    print("caught:", err)

# Tensors travel between tools in a small binary format.
buf = nx.encode_tensor(np.arange(6.0).reshape(2, 3))
print(buf[:4], len(buf), "bytes;", nx.decode_tensor(buf).data.tolist())
