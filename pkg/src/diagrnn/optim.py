"""Adam and RMSprop-with-momentum over lists of numpy arrays.

Both optimizers are functional at the array level: ``step`` returns fresh
parameter arrays and keeps its moment buffers internally.
"""

import numpy as np

from .errors import ConfigError, UsageError


def _check(params, grads, buffers):
    if len(params) != len(grads):
        raise UsageError(f"{len(params)} parameters but {len(grads)} gradients")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise UsageError(f"parameter {i}: shape {p.shape} vs gradient {g.shape}")
    if buffers is not None and [b.shape for b in buffers] != [p.shape for p in params]:
        raise UsageError("parameter shapes changed between steps")


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr < 0:
            raise ConfigError(f"learning rate must be non-negative, got {lr}")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params, grads):
        _check(params, grads, self.m)
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
            out.append(p - self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps))
        return out


class RMSprop:
    """Squared-gradient accumulator, then a momentum buffer on the scaled step."""

    def __init__(self, lr, momentum=0.0, decay=0.9, eps=1e-8):
        if lr < 0:
            raise ConfigError(f"learning rate must be non-negative, got {lr}")
        if not 0.0 <= momentum <= 1.0:
            raise ConfigError(f"momentum must lie in [0, 1], got {momentum}")
        self.lr, self.momentum, self.decay, self.eps = lr, momentum, decay, eps
        self.acc = None
        self.buf = None
        self.t = 0

    def step(self, params, grads):
        _check(params, grads, self.acc)
        if self.acc is None:
            self.acc = [np.zeros_like(p) for p in params]
            self.buf = [np.zeros_like(p) for p in params]
        self.t += 1
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.acc[i] = self.decay * self.acc[i] + (1.0 - self.decay) * g * g
            self.buf[i] = (self.momentum * self.buf[i]
                           + self.lr * g / (np.sqrt(self.acc[i]) + self.eps))
            out.append(p - self.buf[i])
        return out


def make_optimizer(kind, lr, momentum=0.0):
    if kind == "adam":
        return Adam(lr)
    if kind == "rmsprop":
        return RMSprop(lr, momentum)
    raise ConfigError(f"unknown optimizer {kind!r}")
