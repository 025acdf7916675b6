from .gradcheck import GradcheckError, GradcheckReport, gradcheck
from .io import (
    TensorFormatError,
    decode_tensor,
    encode_tensor,
    load_checkpoint,
    load_tensor,
    save_checkpoint,
    save_tensor,
)
from .ops import (
    abs,
    add,
    clip,
    concat,
    conv2d,
    div,
    einsum,
    exp,
    index,
    log,
    matmul,
    mean,
    mul,
    pad2d,
    pool_channel,
    power,
    relu,
    reshape,
    sigmoid,
    softmax,
    sub,
    sum,
    transpose,
    upsample_nearest,
)
from .tensor import DTYPE, DimensionError, Op, Tensor, as_tensor

DifferentiableOp = Op
