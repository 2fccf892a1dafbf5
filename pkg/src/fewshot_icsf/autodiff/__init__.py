from .gradcheck import CATALOGUE, GradientCheckError, check_function, gradient_check
from .optim import MissingGradientError, Optimizer, adam, sgd
from .params import (
    CHECKPOINT_MAGIC,
    CheckpointError,
    ParameterSet,
    load_checkpoint,
    save_checkpoint,
    xavier_uniform,
)
from .tensor import (
    ShapeError,
    TapeError,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    exp,
    getitem,
    is_grad_enabled,
    log,
    log_softmax,
    log_softmax_array,
    lstm_cell,
    matmul,
    mean,
    mul,
    no_grad,
    reshape,
    sigmoid,
    softmax_cross_entropy,
    squared_distances,
    stack,
    sub,
    take_rows,
    tanh,
    tensor_sum,
    transpose,
)
