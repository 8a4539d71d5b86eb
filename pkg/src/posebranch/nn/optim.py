from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Parameter:
    """A trainable array with its gradient and momentum buffer (all the same shape)."""

    value: np.ndarray
    gradient: np.ndarray = field(default=None)
    momentum_buffer: np.ndarray = field(default=None)
    # multiplies the scheduled learning rate; 10 for freshly initialized layers
    lr_mult: float = 1.0
    decay: bool = True

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.gradient is None:
            self.gradient = np.zeros_like(self.value)
        if self.momentum_buffer is None:
            self.momentum_buffer = np.zeros_like(self.value)
        if not (self.value.shape == self.gradient.shape == self.momentum_buffer.shape):
            raise ValueError("value, gradient and momentum buffer must share a shape")

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.gradient[...] = 0.0


def sgd_step(params, lr: float, momentum: float = 0.9, weight_decay: float = 1e-4) -> None:
    """One momentum-SGD update, in place.

    buffer <- momentum * buffer + grad + weight_decay * value
    value  <- value - lr * lr_mult * buffer

    Every gradient is checked before anything is modified, so a non-finite
    gradient leaves all parameters untouched.
    """
    params = list(params.items()) if isinstance(params, dict) else list(enumerate(params))
    for name, p in params:
        if not np.all(np.isfinite(p.gradient)):
            raise FloatingPointError(f"non-finite gradient in parameter {name!r}; step aborted")
    for _, p in params:
        g = p.gradient
        if p.decay and weight_decay:
            g = g + weight_decay * p.value
        p.momentum_buffer *= momentum
        p.momentum_buffer += g
        p.value -= (lr * p.lr_mult) * p.momentum_buffer
