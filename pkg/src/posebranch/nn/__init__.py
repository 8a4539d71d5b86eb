from .checkpoint import load_arrays, save_arrays
from .functional import (
    conv2d_backward,
    conv2d_forward,
    dropout_backward,
    dropout_forward,
    fc_backward,
    fc_forward,
    lrn_backward,
    lrn_forward,
    maxpool_backward,
    maxpool_forward,
    relu_backward,
    relu_forward,
)
from .layers import (
    Convolution,
    Dropout,
    FullyConnected,
    Layer,
    LayerKind,
    LocalResponseNorm,
    MaxPool,
    ReLU,
    SoftmaxOutput,
)
from .losses import batch_softmax_cross_entropy, softmax, softmax_cross_entropy
from .optim import Parameter, sgd_step
