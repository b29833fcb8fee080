"""Layer definitions with explicit forward and backward rules.

Each layer maps a batch ``[N, *in_shape]`` to ``[N, *out_shape]``. Shapes
passed to :meth:`Layer.build` exclude the batch axis. Trainable tensors
live in ``params``; batchnorm running statistics live in ``state``.
"""

from __future__ import annotations

import math

import numpy as np

from .ops import conv3d_backward, conv3d_forward, conv3d_output_shape, maybe_round

LEAKY_SLOPE = 0.2
BN_EPSILON = 1e-5
BN_MOMENTUM = 0.99


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


class Context:
    """Per-call options shared by all layers of one forward/backward pass.

    ``reduce`` sums an array across data-parallel replicas (identity when
    running alone); batchnorm uses it to compute global batch statistics.
    """

    def __init__(self, mode="train", precision="full", side=None, reduce=None):
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        self.mode = mode
        self.precision = precision
        self.side = side
        self.reduce = reduce if reduce is not None else (lambda a: a)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.state: dict[str, np.ndarray] = {}
        self.in_shape: tuple = ()
        self.out_shape: tuple = ()

    def build(self, in_shape: tuple, rng: np.random.Generator) -> tuple:
        self.in_shape = tuple(in_shape)
        self.out_shape = self._output_shape(self.in_shape)
        self._init_params(rng)
        return self.out_shape

    def _output_shape(self, in_shape):
        return in_shape

    def _init_params(self, rng):
        pass

    def config(self) -> dict:
        return {}

    def forward(self, x, ctx: Context):
        raise NotImplementedError

    def backward(self, cache, gy, ctx: Context):
        """Return ``(grad_input, {param_name: grad})``."""
        raise NotImplementedError

    def __repr__(self):
        cfg = ", ".join(f"{k}={v!r}" for k, v in self.config().items())
        return f"{type(self).__name__}({cfg})"


class Dense(Layer):
    kind = "dense"

    def __init__(self, units: int):
        super().__init__()
        if units < 1:
            raise ValueError("dense layer needs at least one unit")
        self.units = int(units)

    def _output_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ValueError(f"dense expects flat input, got per-sample shape {in_shape}")
        return (self.units,)

    def _init_params(self, rng):
        fan_in = self.in_shape[0]
        lim = glorot_limit(fan_in, self.units)
        self.params["W"] = rng.uniform(-lim, lim, size=(fan_in, self.units))
        self.params["b"] = np.zeros(self.units)

    def config(self):
        return {"units": self.units}

    def forward(self, x, ctx):
        xr = maybe_round(x, ctx.precision)
        w = maybe_round(self.params["W"], ctx.precision)
        return xr @ w + self.params["b"], xr

    def backward(self, xr, gy, ctx):
        g = maybe_round(gy, ctx.precision)
        w = maybe_round(self.params["W"], ctx.precision)
        return g @ w.T, {"W": xr.T @ g, "b": gy.sum(axis=0)}


class Conv3D(Layer):
    kind = "conv3d"

    def __init__(self, filters: int, kernel=3, stride: int = 1, padding: str = "same"):
        super().__init__()
        self.filters = int(filters)
        self.kernel = (kernel,) * 3 if isinstance(kernel, int) else tuple(kernel)
        self.stride = int(stride)
        self.padding = padding

    def _output_shape(self, in_shape):
        if len(in_shape) != 4:
            raise ValueError(f"conv3d expects [C,D,H,W] per sample, got {in_shape}")
        spatial, _ = conv3d_output_shape(in_shape[1:], self.kernel, self.stride, self.padding)
        return (self.filters, *spatial)

    def _init_params(self, rng):
        c = self.in_shape[0]
        vol = int(np.prod(self.kernel))
        lim = glorot_limit(c * vol, self.filters * vol)
        self.params["W"] = rng.uniform(-lim, lim, size=(self.filters, c, *self.kernel))
        self.params["b"] = np.zeros(self.filters)

    def config(self):
        return {"filters": self.filters, "kernel": list(self.kernel), "stride": self.stride, "padding": self.padding}

    def forward(self, x, ctx):
        y = conv3d_forward(x, self.params["W"], self.stride, self.padding, ctx.precision)
        return y + self.params["b"][None, :, None, None, None], x

    def backward(self, x, gy, ctx):
        gx, gw = conv3d_backward(x, self.params["W"], gy, self.stride, self.padding, ctx.precision)
        return gx, {"W": gw, "b": gy.sum(axis=(0, 2, 3, 4))}


class BatchNorm(Layer):
    """Per-channel normalisation; channel is axis 1, statistics over the rest."""

    kind = "batchnorm"

    def __init__(self, momentum: float = BN_MOMENTUM, epsilon: float = BN_EPSILON):
        super().__init__()
        self.momentum = float(momentum)
        self.epsilon = float(epsilon)

    def _init_params(self, rng):
        c = self.in_shape[0]
        self.params["gamma"] = np.ones(c)
        self.params["beta"] = np.zeros(c)
        self.state["running_mean"] = np.zeros(c)
        self.state["running_var"] = np.ones(c)

    def config(self):
        return {"momentum": self.momentum, "epsilon": self.epsilon}

    def _axes(self, x):
        return (0,) + tuple(range(2, x.ndim))

    def _bcast(self, v, ndim):
        return v.reshape((1, -1) + (1,) * (ndim - 2))

    def forward(self, x, ctx):
        gamma = self._bcast(self.params["gamma"], x.ndim)
        beta = self._bcast(self.params["beta"], x.ndim)
        if ctx.mode == "eval":
            inv = 1.0 / np.sqrt(self.state["running_var"] + self.epsilon)
            xhat = (x - self._bcast(self.state["running_mean"], x.ndim)) * self._bcast(inv, x.ndim)
            return gamma * xhat + beta, ("eval", xhat, inv, None)
        axes = self._axes(x)
        count = ctx.reduce(np.array([x.size / x.shape[1]]))[0]
        mean = ctx.reduce(x.sum(axis=axes)) / count
        xc = x - self._bcast(mean, x.ndim)
        var = ctx.reduce((xc * xc).sum(axis=axes)) / count
        inv = 1.0 / np.sqrt(var + self.epsilon)
        xhat = xc * self._bcast(inv, x.ndim)
        m = self.momentum
        self.state["running_mean"] = m * self.state["running_mean"] + (1 - m) * mean
        self.state["running_var"] = m * self.state["running_var"] + (1 - m) * var
        return gamma * xhat + beta, ("train", xhat, inv, count)

    def backward(self, cache, gy, ctx):
        kind, xhat, inv, count = cache
        axes = self._axes(gy)
        grads = {"gamma": (gy * xhat).sum(axis=axes), "beta": gy.sum(axis=axes)}
        dxhat = gy * self._bcast(self.params["gamma"], gy.ndim)
        if kind == "eval":
            return dxhat * self._bcast(inv, gy.ndim), grads
        mean_d = ctx.reduce(dxhat.sum(axis=axes)) / count
        mean_dx = ctx.reduce((dxhat * xhat).sum(axis=axes)) / count
        gx = (dxhat - self._bcast(mean_d, gy.ndim) - xhat * self._bcast(mean_dx, gy.ndim)) * self._bcast(inv, gy.ndim)
        return gx, grads


class LeakyReLU(Layer):
    kind = "leaky_relu"

    def __init__(self, slope: float = LEAKY_SLOPE):
        super().__init__()
        self.slope = float(slope)

    def config(self):
        return {"slope": self.slope}

    def forward(self, x, ctx):
        pos = x > 0
        return np.where(pos, x, self.slope * x), pos

    def backward(self, pos, gy, ctx):
        return np.where(pos, gy, self.slope * gy), {}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, ctx):
        pos = x > 0
        return np.where(pos, x, 0.0), pos

    def backward(self, pos, gy, ctx):
        return np.where(pos, gy, 0.0), {}


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, ctx):
        y = 0.5 * (1.0 + np.tanh(0.5 * x))
        return y, y

    def backward(self, y, gy, ctx):
        return gy * y * (1.0 - y), {}


class Tanh(Layer):
    kind = "tanh"

    def forward(self, x, ctx):
        y = np.tanh(x)
        return y, y

    def backward(self, y, gy, ctx):
        return gy * (1.0 - y * y), {}


class Flatten(Layer):
    kind = "flatten"

    def _output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, ctx):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, shape, gy, ctx):
        return gy.reshape(shape), {}


class Reshape(Layer):
    kind = "reshape"

    def __init__(self, target):
        super().__init__()
        self.target = tuple(int(t) for t in target)

    def _output_shape(self, in_shape):
        if int(np.prod(in_shape)) != int(np.prod(self.target)):
            raise ValueError(f"cannot reshape {in_shape} to {self.target}")
        return self.target

    def config(self):
        return {"target": list(self.target)}

    def forward(self, x, ctx):
        return x.reshape((x.shape[0],) + self.target), x.shape

    def backward(self, shape, gy, ctx):
        return gy.reshape(shape), {}


class ConcatInput(Layer):
    """Append a side input ``[N, width]`` to a flat activation.

    The side input is treated as constant conditioning: no gradient flows
    back into it.
    """

    kind = "concat_input"

    def __init__(self, width: int):
        super().__init__()
        self.width = int(width)

    def _output_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ValueError(f"concat_input expects flat input, got {in_shape}")
        return (in_shape[0] + self.width,)

    def config(self):
        return {"width": self.width}

    def forward(self, x, ctx):
        side = ctx.side
        if side is None or side.shape != (x.shape[0], self.width):
            got = None if side is None else side.shape
            raise ValueError(f"concat_input needs side input of shape {(x.shape[0], self.width)}, got {got}")
        return np.concatenate([x, side], axis=1), x.shape[1]

    def backward(self, n_main, gy, ctx):
        return gy[:, :n_main], {}


LAYER_TYPES = {
    cls.kind: cls
    for cls in (Dense, Conv3D, BatchNorm, LeakyReLU, ReLU, Sigmoid, Tanh, Flatten, Reshape, ConcatInput)
}
