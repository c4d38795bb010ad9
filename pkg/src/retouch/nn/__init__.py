from .tensor import (
    Tensor,
    no_grad,
    add,
    sub,
    mul,
    matmul,
    dense,
    conv2d,
    conv1d_valid,
    leaky_relu,
    softmax_columns,
    log_softmax_columns,
    log,
    sqrt,
    square,
    clamp_min,
    tsum,
    tmean,
    reshape,
    gather_lk,
    take_rows,
)
from .layers import Conv2d, Conv1dValid, Dense, he_uniform
from .adam import Adam, TrainingError, BETA1, BETA2, EPS
from .checkpoint import CheckpointError, save_checkpoint, load_checkpoint, FORMAT_VERSION
