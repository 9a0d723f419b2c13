"""Layer objects composing the op primitives into trainable stacks.

Layers cache forward activations only in train mode, so infer-mode forwards
on a shared frozen model are safe from multiple threads. `params` and `grads`
are parallel lists; backward() overwrites `grads` for the current example.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .rng import RngState


class Layer:
    params: list[np.ndarray]
    grads: list

    def __init__(self):
        self.params = []
        self.grads = []

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def out_shape(self, in_shape: tuple) -> tuple:
        raise NotImplementedError


class Conv2D(Layer):
    def __init__(self, kernel_size: int, in_channels: int, out_channels: int,
                 stride: int = 1, padding: str = "valid", *, rng: RngState,
                 dtype=np.float32, name: str = "conv"):
        super().__init__()
        self.name = name
        self.stride = stride
        self.padding = padding
        k = kernel_size
        fan_in = k * k * in_channels
        self.kernels = ops.he_uniform_init((k, k, in_channels, out_channels), fan_in, rng, dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)  # paper names only the kernel init
        self.params = [self.kernels, self.bias]
        self.grads = [None, None]
        self._x = None
        self._cols = None

    def forward(self, x, train):
        y = ops.conv2d(x, self.kernels, self.bias, self.stride, self.padding)
        if train:
            self._x = x
        return y

    def backward(self, dy):
        dx, dk, db = ops.conv2d_backward(dy, self._x, self.kernels, self.stride, self.padding)
        self.grads = [dk, db]
        return dx

    def out_shape(self, in_shape):
        h, w, _ = in_shape
        k = self.kernels.shape[0]
        try:
            *_, oh, ow = ops._conv_geometry(h, w, k, k, self.stride, self.padding)
        except ValueError as e:
            raise ValueError(f"layer {self.name}: {e}") from None
        return (oh, ow, self.kernels.shape[3])


class Mish(Layer):
    def forward(self, x, train):
        if train:
            self._x = x
        return ops.mish(x)

    def backward(self, dy):
        return ops.mish_backward(dy, self._x)

    def out_shape(self, in_shape):
        return in_shape


class MaxPool2D(Layer):
    def __init__(self, pool_size: int, stride: int, name: str = "maxpool"):
        super().__init__()
        self.name = name
        self.pool_size = pool_size
        self.stride = stride

    def forward(self, x, train):
        if train:
            self._x = x
        return ops.maxpool2d(x, self.pool_size, self.stride)

    def backward(self, dy):
        return ops.maxpool2d_backward(dy, self._x, self.pool_size, self.stride)

    def out_shape(self, in_shape):
        h, w, c = in_shape
        if self.pool_size > h or self.pool_size > w:
            raise ValueError(f"layer {self.name}: pool {self.pool_size} larger than input {h}x{w}")
        oh = (h - self.pool_size) // self.stride + 1
        ow = (w - self.pool_size) // self.stride + 1
        return (oh, ow, c)


class Dropout(Layer):
    def __init__(self, rate: float, seed: int):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self.rng = RngState(seed)

    def forward(self, x, train):
        if not train or self.rate == 0.0:
            return x
        mask = ops.dropout_mask(x.shape, self.rate, self.rng, x.dtype)
        self._mask = mask
        return x * mask

    def backward(self, dy):
        return dy * self._mask

    def out_shape(self, in_shape):
        return in_shape


class GlobalAvgPool(Layer):
    def forward(self, x, train):
        if train:
            self._shape = x.shape
        return ops.global_avg_pool(x)

    def backward(self, dy):
        return ops.global_avg_pool_backward(dy, self._shape)

    def out_shape(self, in_shape):
        return (in_shape[2],)


class Flatten(Layer):
    def forward(self, x, train):
        if train:
            self._shape = x.shape
        return x.reshape(-1)

    def backward(self, dy):
        return dy.reshape(self._shape)

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int, *, rng: RngState, dtype=np.float32,
                 name: str = "dense"):
        super().__init__()
        self.name = name
        self.weights = ops.he_uniform_init((in_dim, out_dim), in_dim, rng, dtype)
        self.bias = np.zeros(out_dim, dtype=dtype)
        self.params = [self.weights, self.bias]
        self.grads = [None, None]

    def forward(self, x, train):
        if train:
            self._x = x
        return x @ self.weights + self.bias

    def backward(self, dy):
        self.grads = [np.outer(self._x, dy), dy.copy()]
        return dy @ self.weights.T

    def out_shape(self, in_shape):
        return (self.weights.shape[1],)


class Fire(Layer):
    """Squeeze 1x1 conv feeding parallel 1x1 and 3x3 expand convs, channel-concat.

    The 3x3 expand path keeps spatial extent with zero-padded same padding;
    every conv is followed by mish.
    """

    def __init__(self, in_channels: int, squeeze_fm: int, expand_fm: int, *,
                 rng: RngState, dtype=np.float32, name: str = "fire"):
        super().__init__()
        self.name = name
        self.expand_fm = expand_fm
        self.squeeze = Conv2D(1, in_channels, squeeze_fm, rng=rng, dtype=dtype,
                              name=f"{name}.squeeze")
        self.expand1 = Conv2D(1, squeeze_fm, expand_fm, rng=rng, dtype=dtype,
                              name=f"{name}.expand1x1")
        self.expand3 = Conv2D(3, squeeze_fm, expand_fm, padding="same", rng=rng,
                              dtype=dtype, name=f"{name}.expand3x3")
        self._acts = [Mish() for _ in range(3)]
        self.params = self.squeeze.params + self.expand1.params + self.expand3.params

    @property
    def grads(self):
        return self.squeeze.grads + self.expand1.grads + self.expand3.grads

    @grads.setter
    def grads(self, value):  # base-class __init__ assigns []; composite ignores it
        pass

    def forward(self, x, train):
        s = self._acts[0].forward(self.squeeze.forward(x, train), train)
        if train:
            self._s = s
        a = self._acts[1].forward(self.expand1.forward(s, train), train)
        b = self._acts[2].forward(self.expand3.forward(s, train), train)
        return np.concatenate([a, b], axis=2)

    def backward(self, dy):
        f = self.expand_fm
        da, db = dy[:, :, :f], dy[:, :, f:]
        ds = self.expand1.backward(self._acts[1].backward(da))
        ds = ds + self.expand3.backward(self._acts[2].backward(db))
        return self.squeeze.backward(self._acts[0].backward(ds))

    def out_shape(self, in_shape):
        h, w, _ = in_shape
        return (h, w, 2 * self.expand_fm)
