"""Numpy layer primitives with explicit forward/backward passes.

Every layer caches what its backward pass needs during forward, writes
parameter gradients into ``grads`` on backward, and returns the gradient
with respect to its input. Convolutions are stride-1 with 'same' padding
(odd kernels); downsampling is done by separate max-pool layers.

Signal tensors are (batch, channels, time); dense tensors are
(batch, features). Everything runs in float64, which keeps the central
finite-difference gradient check sharp.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    """Base: parameterless layers reuse these empty dicts.

    ``params`` are optimized and differentiated; ``buffers`` are state that
    must travel with checkpoints but receives no gradient (batch-norm
    running statistics).
    """

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def he_uniform(shape: tuple[int, ...], fan_in: int, rng) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Conv1d(Layer):
    """Stride-1 'same' 1-d convolution via an im2col matmul."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int, rng):
        super().__init__()
        if kernel % 2 == 0:
            raise ValueError(f"kernel must be odd, got {kernel}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.pad = kernel // 2
        self.params = {
            "W": he_uniform((out_channels, in_channels, kernel), in_channels * kernel, rng),
            "b": np.zeros(out_channels),
        }
        self._cols: np.ndarray | None = None

    def forward(self, x, train=False, rng=None):
        batch, in_ch, length = x.shape
        if in_ch != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {in_ch}")
        padded = np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad)))
        # (B, C_in, T, K) windows -> (B*T, C_in*K) patch matrix
        windows = sliding_window_view(padded, self.kernel, axis=2)
        cols = windows.transpose(0, 2, 1, 3).reshape(batch * length, in_ch * self.kernel)
        self._cols = cols
        self._shape = (batch, length)
        w2 = self.params["W"].reshape(self.out_channels, -1).T
        out = cols @ w2 + self.params["b"]
        return out.reshape(batch, length, self.out_channels).transpose(0, 2, 1)

    def backward(self, dy):
        batch, length = self._shape
        dy2 = dy.transpose(0, 2, 1).reshape(batch * length, self.out_channels)
        self.grads["W"] = (self._cols.T @ dy2).T.reshape(self.params["W"].shape)
        self.grads["b"] = dy2.sum(axis=0)
        dcols = dy2 @ self.params["W"].reshape(self.out_channels, -1)
        dcols = dcols.reshape(batch, length, self.in_channels, self.kernel).transpose(0, 2, 1, 3)
        dpadded = np.zeros((batch, self.in_channels, length + 2 * self.pad))
        for k in range(self.kernel):
            dpadded[:, :, k : k + length] += dcols[:, :, :, k]
        return dpadded[:, :, self.pad : self.pad + length]


class BatchNorm1d(Layer):
    """Per-channel normalization over (batch, time)."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.params = {"gamma": np.ones(channels), "beta": np.zeros(channels)}
        self.buffers = {"running_mean": np.zeros(channels), "running_var": np.ones(channels)}

    def forward(self, x, train=False, rng=None):
        self._train = train
        if train:
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            self.buffers["running_mean"] = (
                (1 - self.momentum) * self.buffers["running_mean"] + self.momentum * mean
            )
            self.buffers["running_var"] = (
                (1 - self.momentum) * self.buffers["running_var"] + self.momentum * var
            )
        else:
            mean, var = self.buffers["running_mean"], self.buffers["running_var"]
        self._istd = 1.0 / np.sqrt(var + self.eps)
        self._xhat = (x - mean[None, :, None]) * self._istd[None, :, None]
        return self.params["gamma"][None, :, None] * self._xhat + self.params["beta"][None, :, None]

    def backward(self, dy):
        self.grads["beta"] = dy.sum(axis=(0, 2))
        self.grads["gamma"] = (dy * self._xhat).sum(axis=(0, 2))
        dxhat = dy * self.params["gamma"][None, :, None]
        if not self._train:
            return dxhat * self._istd[None, :, None]
        m = dy.shape[0] * dy.shape[2]
        # standard batch-norm backward with batch statistics
        sum_dxhat = dxhat.sum(axis=(0, 2))
        sum_dxhat_xhat = (dxhat * self._xhat).sum(axis=(0, 2))
        return (self._istd[None, :, None] / m) * (
            m * dxhat
            - sum_dxhat[None, :, None]
            - self._xhat * sum_dxhat_xhat[None, :, None]
        )


class ReLU(Layer):
    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class Dropout(Layer):
    """Inverted dropout; identity when evaluating or when rate is 0."""

    def __init__(self, rate: float):
        super().__init__()
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("training-mode dropout needs an rng")
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask


class MaxPool1d(Layer):
    """Width-2, stride-2 temporal max pooling."""

    def forward(self, x, train=False, rng=None):
        batch, channels, length = x.shape
        if length % 2:
            raise ValueError(f"temporal length {length} not divisible by 2")
        pairs = x.reshape(batch, channels, length // 2, 2)
        self._argmax = pairs.argmax(axis=3)
        self._in_shape = x.shape
        return pairs.max(axis=3)

    def backward(self, dy):
        batch, channels, half = dy.shape
        dx = np.zeros((batch, channels, half, 2))
        b, c, t = np.ogrid[:batch, :channels, :half]
        dx[b, c, t, self._argmax] = dy
        return dx.reshape(self._in_shape)


class GlobalAvgPool(Layer):
    """(B, C, T) -> (B, C) temporal mean."""

    def forward(self, x, train=False, rng=None):
        self._length = x.shape[2]
        return x.mean(axis=2)

    def backward(self, dy):
        return np.repeat(dy[:, :, None], self._length, axis=2) / self._length


class Dense(Layer):
    def __init__(self, in_features: int, out_features: int, rng):
        super().__init__()
        self.params = {
            "W": he_uniform((in_features, out_features), in_features, rng),
            "b": np.zeros(out_features),
        }

    def forward(self, x, train=False, rng=None):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        self.grads["W"] = self._x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"].T


class Sigmoid(Layer):
    def forward(self, x, train=False, rng=None):
        self._y = 1.0 / (1.0 + np.exp(-x))
        return self._y

    def backward(self, dy):
        return dy * self._y * (1.0 - self._y)


class SEGate(Layer):
    """Squeeze-and-excite channel recalibration.

    Global-average squeeze over time, a two-layer bottleneck gate
    (reduction ``r``, at least one hidden unit), per-channel sigmoid
    scaling of the input features.
    """

    def __init__(self, channels: int, reduction: int, rng):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.params = {
            "W1": he_uniform((channels, hidden), channels, rng),
            "b1": np.zeros(hidden),
            "W2": he_uniform((hidden, channels), hidden, rng),
            "b2": np.zeros(channels),
        }

    def forward(self, x, train=False, rng=None):
        self._x = x
        self._length = x.shape[2]
        self._s = x.mean(axis=2)                                   # (B, C)
        z1 = self._s @ self.params["W1"] + self.params["b1"]
        self._a1 = np.maximum(z1, 0.0)
        z2 = self._a1 @ self.params["W2"] + self.params["b2"]
        self._g = 1.0 / (1.0 + np.exp(-z2))                        # (B, C)
        return x * self._g[:, :, None]

    def backward(self, dy):
        dg = (dy * self._x).sum(axis=2)
        dx = dy * self._g[:, :, None]
        dz2 = dg * self._g * (1.0 - self._g)
        self.grads["W2"] = self._a1.T @ dz2
        self.grads["b2"] = dz2.sum(axis=0)
        da1 = dz2 @ self.params["W2"].T
        dz1 = da1 * (self._a1 > 0)
        self.grads["W1"] = self._s.T @ dz1
        self.grads["b1"] = dz1.sum(axis=0)
        ds = dz1 @ self.params["W1"].T
        dx += ds[:, :, None] / self._length
        return dx
