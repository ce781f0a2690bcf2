"""Layer kinds: conv2d, maxpool2d, flatten, dense, dropout.

Activations are tensors of shape (N, H, W, C) for the spatial layers and (N, D) after
flattening. Every layer caches what its backward pass needs during ``forward``.
"""
import numpy as np

from .. import kernels
from ..errors import ShapeError

ACTIVATIONS = ("relu", "sigmoid", "softmax", "none")


def activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0)
    if kind == "sigmoid":
        # exp of a non-positive argument only; stays > 0 far into the tail
        e = np.exp(-np.abs(z))
        return np.where(z >= 0, 1 / (1 + e), e / (1 + e))
    if kind == "softmax":
        e = np.exp(z - z.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)
    if kind == "none":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def activate_backward(da, a, kind):
    """Gradient w.r.t. the pre-activation given the upstream gradient and the output ``a``."""
    if kind == "relu":
        return np.where(a > 0, da, 0).astype(da.dtype, copy=False)
    if kind == "sigmoid":
        return da * a * (1 - a)
    if kind == "softmax":
        return a * (da - (da * a).sum(axis=-1, keepdims=True))
    return da


def glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    kind = None
    trainable = False

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.input_shape = None
        self.output_shape = None

    def build(self, input_shape, rng, dtype):
        self.input_shape = tuple(input_shape)
        self.output_shape = self._output_shape(self.input_shape)
        self._init_params(rng, dtype)
        return self.output_shape

    def _output_shape(self, shape):
        return shape

    def _init_params(self, rng, dtype):
        pass

    def spec(self):
        return {"kind": self.kind}

    def pattern(self):
        """Discrete state of the last forward pass (ReLU signs, pooling argmax)."""
        return None

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.spec().items() if k != "kind")
        return f"{type(self).__name__}({args})"


class Conv2D(Layer):
    kind = "conv2d"
    trainable = True

    def __init__(self, out_channels, kernel_h, kernel_w, activation="relu"):
        super().__init__()
        if out_channels < 1 or kernel_h < 1 or kernel_w < 1:
            raise ShapeError("conv2d sizes must be positive")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.out_channels, self.kernel_h, self.kernel_w = out_channels, kernel_h, kernel_w
        self.activation = activation

    def _output_shape(self, shape):
        if len(shape) != 3:
            raise ShapeError(f"conv2d expects (H, W, C) input, got {shape}")
        h, w, _ = shape
        if h < self.kernel_h or w < self.kernel_w:
            raise ShapeError(f"conv2d kernel {self.kernel_h}x{self.kernel_w} does not fit input {h}x{w}")
        return (h - self.kernel_h + 1, w - self.kernel_w + 1, self.out_channels)

    def _init_params(self, rng, dtype):
        c = self.input_shape[2]
        shape = (self.kernel_h, self.kernel_w, c, self.out_channels)
        rf = self.kernel_h * self.kernel_w
        self.params = {
            "W": glorot_uniform(rng, shape, rf * c, rf * self.out_channels, dtype),
            "b": np.zeros(self.out_channels, dtype=dtype),
        }

    def spec(self):
        return {
            "kind": self.kind,
            "out_channels": self.out_channels,
            "kernel_h": self.kernel_h,
            "kernel_w": self.kernel_w,
            "activation": self.activation,
        }

    def forward(self, x, mode="eval", rng=None):
        n = x.shape[0]
        W, b = self.params["W"], self.params["b"]
        cols = kernels.im2col(x, self.kernel_h, self.kernel_w)
        z = cols @ W.reshape(-1, self.out_channels)
        z += b
        a = activate(z, self.activation).reshape((n,) + self.output_shape)
        self._cols, self._a = cols, a
        return a

    def backward(self, da, need_dx=True):
        n = da.shape[0]
        W = self.params["W"]
        dz = activate_backward(da, self._a, self.activation).reshape(-1, self.out_channels)
        self.grads = {"W": (self._cols.T @ dz).reshape(W.shape), "b": dz.sum(axis=0)}
        self._cols = None
        if not need_dx:
            return None
        kh, kw = self.kernel_h, self.kernel_w
        dz = dz.reshape((n,) + self.output_shape)
        padded = np.pad(dz, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
        # full correlation with the flipped kernel, channels swapped
        w_flip = np.ascontiguousarray(W[::-1, ::-1].transpose(0, 1, 3, 2)).reshape(-1, W.shape[2])
        dx = kernels.im2col(padded, kh, kw) @ w_flip
        return dx.reshape((n,) + self.input_shape)

    def pattern(self):
        return (self._a > 0) if self.activation == "relu" else None


class MaxPool2D(Layer):
    kind = "maxpool2d"

    def __init__(self, pool_h=2, pool_w=2, stride=1):
        super().__init__()
        if pool_h < 1 or pool_w < 1 or stride < 1:
            raise ShapeError("maxpool2d sizes must be positive")
        self.pool_h, self.pool_w, self.stride = pool_h, pool_w, stride

    def _output_shape(self, shape):
        if len(shape) != 3:
            raise ShapeError(f"maxpool2d expects (H, W, C) input, got {shape}")
        h, w, c = shape
        if h < self.pool_h or w < self.pool_w:
            raise ShapeError(f"pool {self.pool_h}x{self.pool_w} does not fit input {h}x{w}")
        return ((h - self.pool_h) // self.stride + 1, (w - self.pool_w) // self.stride + 1, c)

    def spec(self):
        return {"kind": self.kind, "pool_h": self.pool_h, "pool_w": self.pool_w, "stride": self.stride}

    def forward(self, x, mode="eval", rng=None):
        out, self._arg = kernels.maxpool_forward(x, self.pool_h, self.pool_w, self.stride)
        self._in_shape = x.shape
        return out

    def backward(self, dout, need_dx=True):
        if not need_dx:
            return None
        return kernels.maxpool_backward(dout, self._arg, self._in_shape, self.pool_h, self.pool_w, self.stride)

    def pattern(self):
        return self._arg


class Flatten(Layer):
    kind = "flatten"

    def _output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, mode="eval", rng=None):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout, need_dx=True):
        return dout.reshape(self._in_shape) if need_dx else None


class Dense(Layer):
    kind = "dense"
    trainable = True

    def __init__(self, out_units, activation="none"):
        super().__init__()
        if out_units < 1:
            raise ShapeError("dense out_units must be positive")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.out_units, self.activation = out_units, activation

    def _output_shape(self, shape):
        if len(shape) != 1:
            raise ShapeError(f"dense expects a flat input, got {shape}; add a flatten layer")
        return (self.out_units,)

    def _init_params(self, rng, dtype):
        d = self.input_shape[0]
        self.params = {
            "W": glorot_uniform(rng, (d, self.out_units), d, self.out_units, dtype),
            "b": np.zeros(self.out_units, dtype=dtype),
        }

    def spec(self):
        return {"kind": self.kind, "out_units": self.out_units, "activation": self.activation}

    def forward(self, x, mode="eval", rng=None):
        z = x @ self.params["W"]
        z += self.params["b"]
        self._x, self._a = x, activate(z, self.activation)
        return self._a

    def backward(self, da, need_dx=True):
        dz = activate_backward(da, self._a, self.activation)
        self.grads = {"W": self._x.T @ dz, "b": dz.sum(axis=0)}
        self._x = None
        return dz @ self.params["W"].T if need_dx else None

    def pattern(self):
        return (self._a > 0) if self.activation == "relu" else None


class Dropout(Layer):
    """Inverted dropout. Mode "replay" reuses the mask drawn by the last training pass."""

    kind = "dropout"

    def __init__(self, rate=0.5):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._mask = None

    def spec(self):
        return {"kind": self.kind, "rate": self.rate}

    def forward(self, x, mode="eval", rng=None):
        if mode == "eval" or self.rate == 0:
            self._mask = None
            return x
        if mode == "train":
            keep = rng.random(x.shape) >= self.rate
            self._mask = keep.astype(x.dtype) / x.dtype.type(1 - self.rate)
        elif self._mask is None or self._mask.shape != x.shape:
            raise RuntimeError("replay mode needs a mask from a previous training pass")
        return x * self._mask

    def backward(self, dout, need_dx=True):
        if not need_dx:
            return None
        return dout if self._mask is None else dout * self._mask


LAYER_KINDS = {cls.kind: cls for cls in (Conv2D, MaxPool2D, Flatten, Dense, Dropout)}


def layer_from_spec(spec):
    spec = dict(spec)
    kind = spec.pop("kind")
    try:
        cls = LAYER_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown layer kind {kind!r}") from None
    return cls(**spec)


def conv2d_forward(x, weights, bias, activation="none"):
    """Valid cross-correlation, stride 1, of an (H, W, C) or (N, H, W, C) input."""
    single = x.ndim == 3
    xb = x[None] if single else x
    kh, kw, c, f = weights.shape
    if xb.shape[-1] != c or xb.shape[1] < kh or xb.shape[2] < kw:
        raise ShapeError(f"kernel {weights.shape} does not fit input {x.shape}")
    n, h, w, _ = xb.shape
    z = kernels.im2col(np.ascontiguousarray(xb), kh, kw) @ weights.reshape(-1, f) + bias
    out = activate(z, activation).reshape(n, h - kh + 1, w - kw + 1, f)
    return out[0] if single else out


def maxpool2d_forward(x, pool=(2, 2), stride=1):
    """Max pooling of an (H, W, C) or (N, H, W, C) input; returns (output, argmax slots)."""
    single = x.ndim == 3
    xb = np.ascontiguousarray(x[None] if single else x)
    out, arg = kernels.maxpool_forward(xb, pool[0], pool[1], stride)
    return (out[0], arg[0]) if single else (out, arg)


def dense_forward(x, weights, bias, activation="none"):
    if x.shape[-1] != weights.shape[0]:
        raise ShapeError(f"input width {x.shape[-1]} does not match weights {weights.shape}")
    return activate(x @ weights + bias, activation)


def dropout_forward(x, rate, mode, rng=None):
    layer = Dropout(rate)
    return layer.forward(np.asarray(x), "train" if mode == "train" else "eval", rng)
