"""Dense NCHW tensors, reverse-mode autodiff and layer primitives."""

from .functional import (
    ConfigurationError,
    DimensionError,
    avg_pool,
    broadcast_label,
    channel_max,
    channel_mean,
    concat_channels,
    cond_instance_norm,
    conv2d,
    conv2d_transposed,
    cross_entropy,
    global_avg_pool,
    instance_norm,
    leaky_relu,
    linear,
    pad2d,
    relu,
    sigmoid,
    spectral_divide,
    take_row,
    tanh,
    upsample_nearest,
)
from .labels import StyleLabel
from .tensor import (
    GraphError,
    Tensor,
    as_tensor,
    get_default_dtype,
    is_grad_enabled,
    no_grad,
    precision,
    set_default_dtype,
    tensor,
    track_branches,
)
