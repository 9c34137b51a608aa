"""Neural-network primitives with explicit forward/backward passes.

Everything is plain numpy in float64 on single images of shape
(height, width, channels); batches are handled one image at a time with
gradient accumulation. Each layer caches what its backward pass needs,
so forward and backward must be called in matching pairs. The analytic
backward passes are verified against central finite differences in the
test suite.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import MaskShapeError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class Layer:
    """Base: a named, differentiable operation with optional parameters."""

    def __init__(self, name: str):
        self.name = name
        self.p: dict[str, np.ndarray] = {}  # trainable parameters
        self.g: dict[str, np.ndarray] = {}  # accumulated gradients
        self.s: dict[str, np.ndarray] = {}  # non-trainable state

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grads(self) -> None:
        for key, grad in self.g.items():
            grad[...] = 0.0

    def param_count(self) -> int:
        return sum(arr.size for arr in self.p.values()) + sum(
            arr.size for arr in self.s.values()
        )


class Conv2D(Layer):
    """k x k convolution, stride 1, 'same' zero padding, via im2col."""

    def __init__(self, name: str, c_in: int, c_out: int, kernel: int,
                 rng: np.random.Generator):
        super().__init__(name)
        if kernel % 2 != 1:
            raise ValueError(f"{name}: 'same' padding needs an odd kernel, got {kernel}")
        self.c_in = c_in
        self.c_out = c_out
        self.kernel = kernel
        fan_in = kernel * kernel * c_in
        self.p["W"] = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                                 size=(kernel, kernel, c_in, c_out))
        self.p["b"] = np.zeros(c_out)
        self.g["W"] = np.zeros_like(self.p["W"])
        self.g["b"] = np.zeros_like(self.p["b"])
        self._cols: np.ndarray | None = None
        self._in_shape: tuple[int, int, int] | None = None

    def forward(self, x, training):
        h, w, c = x.shape
        if c != self.c_in:
            raise MaskShapeError(f"{self.name}: expected {self.c_in} channels, got {c}")
        k = self.kernel
        pad = k // 2
        xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0))) if pad else x
        # windows come out as (h, w, c, k, k); reorder to match W's
        # (k, k, c_in) flattening
        windows = sliding_window_view(xp, (k, k), axis=(0, 1))
        cols = windows.transpose(0, 1, 3, 4, 2).reshape(h * w, k * k * c)
        self._cols = cols
        self._in_shape = (h, w, c)
        w_flat = self.p["W"].reshape(k * k * c, self.c_out)
        y = cols @ w_flat + self.p["b"]
        return y.reshape(h, w, self.c_out)

    def backward(self, dy):
        h, w, c = self._in_shape
        k = self.kernel
        pad = k // 2
        dy_flat = dy.reshape(h * w, self.c_out)
        self.g["W"] += (self._cols.T @ dy_flat).reshape(self.p["W"].shape)
        self.g["b"] += dy_flat.sum(axis=0)
        w_flat = self.p["W"].reshape(k * k * c, self.c_out)
        dcols = (dy_flat @ w_flat.T).reshape(h, w, k, k, c)
        dxp = np.zeros((h + 2 * pad, w + 2 * pad, c))
        for kh in range(k):
            for kw in range(k):
                dxp[kh:kh + h, kw:kw + w, :] += dcols[:, :, kh, kw, :]
        self._cols = None
        return dxp[pad:pad + h, pad:pad + w, :] if pad else dxp


class ConvTranspose2D(Layer):
    """2x2 transposed convolution with stride 2: doubles height and width.

    Kernel equals stride, so output windows never overlap and each output
    pixel is a single linear map of one input pixel.
    """

    def __init__(self, name: str, c_in: int, c_out: int, rng: np.random.Generator):
        super().__init__(name)
        self.c_in = c_in
        self.c_out = c_out
        self.p["W"] = rng.normal(0.0, np.sqrt(2.0 / c_in), size=(2, 2, c_in, c_out))
        self.p["b"] = np.zeros(c_out)
        self.g["W"] = np.zeros_like(self.p["W"])
        self.g["b"] = np.zeros_like(self.p["b"])
        self._x: np.ndarray | None = None

    def forward(self, x, training):
        h, w, c = x.shape
        if c != self.c_in:
            raise MaskShapeError(f"{self.name}: expected {self.c_in} channels, got {c}")
        self._x = x
        t = np.tensordot(x, self.p["W"], axes=([2], [2]))  # (h, w, 2, 2, c_out)
        y = t.transpose(0, 2, 1, 3, 4).reshape(2 * h, 2 * w, self.c_out)
        return y + self.p["b"]

    def backward(self, dy):
        h, w, _ = self._x.shape
        dt = dy.reshape(h, 2, w, 2, self.c_out).transpose(0, 2, 1, 3, 4)
        self.g["W"] += np.tensordot(self._x, dt, axes=([0, 1], [0, 1])).transpose(1, 2, 0, 3)
        self.g["b"] += dy.sum(axis=(0, 1))
        dx = np.tensordot(dt, self.p["W"], axes=([2, 3, 4], [0, 1, 3]))
        self._x = None
        return dx


class BatchNorm(Layer):
    """Per-channel normalization over the spatial extent of one image.

    Training mode normalizes with the image's own spatial statistics and
    updates running estimates; inference mode uses the running estimates,
    making forward deterministic for fixed state.
    """

    def __init__(self, name: str, channels: int,
                 momentum: float = BN_MOMENTUM, eps: float = BN_EPS):
        super().__init__(name)
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.p["gamma"] = np.ones(channels)
        self.p["beta"] = np.zeros(channels)
        self.g["gamma"] = np.zeros(channels)
        self.g["beta"] = np.zeros(channels)
        self.s["running_mean"] = np.zeros(channels)
        self.s["running_var"] = np.ones(channels)
        self._cache = None

    def forward(self, x, training):
        if x.shape[-1] != self.channels:
            raise MaskShapeError(
                f"{self.name}: expected {self.channels} channels, got {x.shape[-1]}"
            )
        if training:
            mu = x.mean(axis=(0, 1))
            var = x.var(axis=(0, 1))
            inv = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mu) * inv
            m = self.momentum
            self.s["running_mean"] = (1 - m) * self.s["running_mean"] + m * mu
            self.s["running_var"] = (1 - m) * self.s["running_var"] + m * var
        else:
            inv = 1.0 / np.sqrt(self.s["running_var"] + self.eps)
            xhat = (x - self.s["running_mean"]) * inv
        self._cache = (xhat, inv, training)
        return self.p["gamma"] * xhat + self.p["beta"]

    def backward(self, dy):
        xhat, inv, training = self._cache
        self._cache = None
        self.g["gamma"] += (dy * xhat).sum(axis=(0, 1))
        self.g["beta"] += dy.sum(axis=(0, 1))
        dxhat = dy * self.p["gamma"]
        if not training:
            return dxhat * inv
        n = xhat.shape[0] * xhat.shape[1]
        return (inv / n) * (
            n * dxhat
            - dxhat.sum(axis=(0, 1))
            - xhat * (dxhat * xhat).sum(axis=(0, 1))
        )


class ReLU(Layer):
    def __init__(self, name: str):
        super().__init__(name)
        self._mask: np.ndarray | None = None

    def forward(self, x, training):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        dx = np.where(self._mask, dy, 0.0)
        self._mask = None
        return dx


class MaxPool2D(Layer):
    """2x2 max pooling, stride 2. Ties route the gradient to the first max."""

    def __init__(self, name: str):
        super().__init__(name)
        self._cache = None

    def forward(self, x, training):
        h, w, c = x.shape
        if h % 2 or w % 2:
            raise MaskShapeError(f"{self.name}: odd spatial size {h}x{w}")
        windows = x.reshape(h // 2, 2, w // 2, 2, c).transpose(0, 2, 4, 1, 3)
        windows = windows.reshape(h // 2, w // 2, c, 4)
        idx = windows.argmax(axis=-1)
        self._cache = (idx, (h, w, c))
        return np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        idx, (h, w, c) = self._cache
        self._cache = None
        dwin = np.zeros((h // 2, w // 2, c, 4))
        np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
        return (
            dwin.reshape(h // 2, w // 2, c, 2, 2)
            .transpose(0, 3, 1, 4, 2)
            .reshape(h, w, c)
        )


class Upsample2D(Layer):
    """Nearest-neighbor x2 upsampling; backward sums each 2x2 block."""

    def __init__(self, name: str):
        super().__init__(name)

    def forward(self, x, training):
        return x.repeat(2, axis=0).repeat(2, axis=1)

    def backward(self, dy):
        h, w, c = dy.shape
        return dy.reshape(h // 2, 2, w // 2, 2, c).sum(axis=(1, 3))
