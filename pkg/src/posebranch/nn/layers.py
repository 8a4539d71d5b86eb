"""Layer kinds and the stateful layer objects that cache activations for backprop."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from . import functional as F
from .optim import Parameter


@dataclass(frozen=True)
class Convolution:
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    pad: int = 0
    groups: int = 1


@dataclass(frozen=True)
class MaxPool:
    kernel: int
    stride: int


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class LocalResponseNorm:
    size: int = 5
    alpha: float = 1e-4
    beta: float = 0.75


@dataclass(frozen=True)
class FullyConnected:
    out_dim: int


@dataclass(frozen=True)
class Dropout:
    rate: float = 0.5


@dataclass(frozen=True)
class SoftmaxOutput:
    """Classifier head: a fully connected map to ``num_labels`` logits.

    The softmax itself lives in the loss.
    """

    num_labels: int


LayerKind = Union[Convolution, MaxPool, ReLU, LocalResponseNorm, FullyConnected, Dropout, SoftmaxOutput]


def output_shape(kind: LayerKind, in_shape: tuple) -> tuple:
    """Per-sample output shape of ``kind`` given a per-sample input shape (C, H, W) or (D,)."""
    if isinstance(kind, Convolution):
        c, h, w = _chw(kind, in_shape)
        if c % kind.groups or kind.out_channels % kind.groups:
            raise ValueError(
                f"groups={kind.groups} must divide input channels {c} and output channels {kind.out_channels}"
            )
        return (
            kind.out_channels,
            F.conv_output_size(h, kind.kernel_h, kind.stride, kind.pad),
            F.conv_output_size(w, kind.kernel_w, kind.stride, kind.pad),
        )
    if isinstance(kind, MaxPool):
        c, h, w = _chw(kind, in_shape)
        return (
            c,
            F.conv_output_size(h, kind.kernel, kind.stride, 0),
            F.conv_output_size(w, kind.kernel, kind.stride, 0),
        )
    if isinstance(kind, (FullyConnected, SoftmaxOutput)):
        return (kind.out_dim if isinstance(kind, FullyConnected) else kind.num_labels,)
    return tuple(in_shape)


def _chw(kind, in_shape):
    if len(in_shape) != 3:
        raise ValueError(f"{type(kind).__name__} needs a (C, H, W) input, got {in_shape}")
    return in_shape


def weight_shape(kind: LayerKind, in_shape: tuple) -> tuple | None:
    if isinstance(kind, Convolution):
        c = in_shape[0]
        return (kind.out_channels, c // kind.groups, kind.kernel_h, kind.kernel_w)
    if isinstance(kind, (FullyConnected, SoftmaxOutput)):
        out = kind.out_dim if isinstance(kind, FullyConnected) else kind.num_labels
        return (out, int(np.prod(in_shape)))
    return None


class Layer:
    """One node of a network: a kind, its parameters, and the cache of the last forward."""

    def __init__(self, name: str, kind: LayerKind, in_shape: tuple):
        self.name = name
        self.kind = kind
        self.in_shape = tuple(in_shape)
        self.out_shape = output_shape(kind, self.in_shape)
        self.params: dict[str, Parameter] = {}
        ws = weight_shape(kind, self.in_shape)
        if ws is not None:
            self.params["weight"] = Parameter(np.zeros(ws))
            self.params["bias"] = Parameter(np.zeros(ws[0]))
        self._cache = None

    def __repr__(self):
        return f"Layer({self.name!r}, {self.kind}, in={self.in_shape}, out={self.out_shape})"

    def forward(self, x: np.ndarray, train: bool = False, rng: np.random.Generator | None = None):
        if x.shape[1:] != self.in_shape:
            raise ValueError(f"layer {self.name}: input shape {x.shape[1:]} != expected {self.in_shape}")
        k = self.kind
        if isinstance(k, Convolution):
            y, self._cache = F.conv2d_forward(
                x, self.params["weight"].value, self.params["bias"].value, k.stride, k.pad, k.groups
            )
        elif isinstance(k, MaxPool):
            y, self._cache = F.maxpool_forward(x, k.kernel, k.stride)
        elif isinstance(k, ReLU):
            y, self._cache = F.relu_forward(x)
        elif isinstance(k, LocalResponseNorm):
            y, self._cache = F.lrn_forward(x, k.size, k.alpha, k.beta)
        elif isinstance(k, (FullyConnected, SoftmaxOutput)):
            y, self._cache = F.fc_forward(x, self.params["weight"].value, self.params["bias"].value)
        elif isinstance(k, Dropout):
            y, self._cache = F.dropout_forward(x, k.rate, train, rng)
        else:  # pragma: no cover
            raise TypeError(f"unknown layer kind {k!r}")
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        """Backpropagate ``dy``; parameter gradients are accumulated, not overwritten."""
        if self._cache is None and not isinstance(self.kind, Dropout):
            raise RuntimeError(f"layer {self.name}: backward called before forward")
        k = self.kind
        if isinstance(k, Convolution):
            dx, dw, db = F.conv2d_backward(dy, self._cache)
        elif isinstance(k, MaxPool):
            return F.maxpool_backward(dy, self._cache)
        elif isinstance(k, ReLU):
            return F.relu_backward(dy, self._cache)
        elif isinstance(k, LocalResponseNorm):
            return F.lrn_backward(dy, self._cache)
        elif isinstance(k, (FullyConnected, SoftmaxOutput)):
            dx, dw, db = F.fc_backward(dy, self._cache)
        elif isinstance(k, Dropout):
            return F.dropout_backward(dy, self._cache)
        self.params["weight"].gradient += dw
        self.params["bias"].gradient += db
        return dx
