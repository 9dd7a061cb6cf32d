from .functional import (
    apply_activation,
    batchnorm_forward,
    check_finite,
    conv2d_same_forward,
    dense_forward,
    inverted_dropout,
    lstm_cell_step,
    lstm_layer_forward,
    maxpool2x2,
    softmax,
    softmax_cross_entropy,
    softmax_cross_entropy_grad,
)
from .gradcheck import gradient_check, model_gradient_check
from .layers import LSTM, BatchNorm, Conv2D, Dense, Dropout, Flatten, MaxPool2x2, ReLU, Sequential, Softmax, backprop
from .optim import AdamState, adam_step
from .params import LayerParams
