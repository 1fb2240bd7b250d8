"""Network building blocks on top of the tensor engine.

Modules are plain Python objects; parameters and buffers are discovered by
walking attributes (torch-style but without registration magic). All
convolutions are 3x3 / stride 1 / pad 1 and bias-free because a BatchNorm
always follows.
"""

import numpy as np

from .tensor import Parameter, ShapeMismatchError, Tensor, custom_op, is_grad_enabled

__all__ = [
    "Module",
    "Dense",
    "BatchNorm",
    "Conv3x3",
    "DepthwiseConv3x3",
    "MaxPool2x2",
    "batch_norm",
    "kaiming_uniform",
]


class Module:
    """Base class: parameter/buffer discovery and train/eval mode."""

    def __init__(self):
        self.training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _iter_children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield (prefix + name, value)
        for name, child in self._iter_children():
            yield from child.named_parameters(prefix=f"{prefix}{name}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        buffers = getattr(self, "_buffers", None)
        if buffers:
            for name, value in buffers.items():
                yield (prefix + name, value)
        for name, child in self._iter_children():
            yield from child.named_buffers(prefix=f"{prefix}{name}.")

    def train(self, mode=True):
        self.training = mode
        for _, child in self._iter_children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


def kaiming_uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Dense(Module):
    """x @ W (+ b). Applied over the trailing feature axis."""

    def __init__(self, in_features, out_features, rng, dtype=np.float32, bias=False):
        super().__init__()
        self.weight = Parameter(kaiming_uniform(rng, (in_features, out_features), in_features, dtype))
        self.bias = Parameter(np.zeros(out_features, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        if self.bias is not None:
            y = y + self.bias
        return y


def batch_norm(x, gamma, beta, running_mean, running_var, *, training,
               channel_axis=-1, momentum=0.1, eps=1e-5):
    """Normalize per channel over all remaining (merged) axes.

    For [T,B,N,D] token tensors with channel_axis=-1 the statistics pool the
    merged T*B*N axis; for [M,C,H,W] feature maps with channel_axis=1 they
    pool M*H*W. Train mode computes batch statistics on the tape (gradients
    flow through them) and updates the running stats in place; eval mode
    normalizes with the stored running stats as constants.
    """
    ndim = x.ndim
    axis = channel_axis % ndim
    reduce_axes = tuple(i for i in range(ndim) if i != axis)
    bshape = tuple(x.shape[axis] if i == axis else 1 for i in range(ndim))
    if gamma.shape != (x.shape[axis],):
        raise ShapeMismatchError(
            f"batch_norm: {gamma.shape[0] if gamma.ndim else 0} channels vs input {x.shape} on axis {axis}"
        )
    g = gamma.reshape(bshape)
    b = beta.reshape(bshape)
    if training:
        mu = x.mean(axis=reduce_axes, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=reduce_axes, keepdims=True)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.data.reshape(-1)
        running_var *= 1.0 - momentum
        running_var += momentum * var.data.reshape(-1)
        inv = (var + eps).pow(-0.5)
        return centered * inv * g + b
    mu_c = Tensor(running_mean.reshape(bshape), dtype=x.dtype)
    inv_c = Tensor(1.0 / np.sqrt(running_var.reshape(bshape) + eps), dtype=x.dtype)
    return (x - mu_c) * inv_c * g + b


class BatchNorm(Module):
    """BatchNorm with learnable affine and running statistics."""

    def __init__(self, num_features, channel_axis=-1, dtype=np.float32, momentum=0.1, eps=1e-5):
        super().__init__()
        self.gamma = Parameter(np.ones(num_features, dtype=dtype), tag="bn_affine")
        self.beta = Parameter(np.zeros(num_features, dtype=dtype), tag="bn_affine")
        self.channel_axis = channel_axis
        self.momentum = momentum
        self.eps = eps
        self._buffers = {
            "running_mean": np.zeros(num_features, dtype=np.float64),
            "running_var": np.ones(num_features, dtype=np.float64),
        }

    def forward(self, x: Tensor) -> Tensor:
        return batch_norm(
            x,
            self.gamma,
            self.beta,
            self._buffers["running_mean"],
            self._buffers["running_var"],
            training=self.training,
            channel_axis=self.channel_axis,
            momentum=self.momentum,
            eps=self.eps,
        )


def _im2col(x: Tensor) -> Tensor:
    """[M,C,H,W] -> [M, H*W, C*9] patches of the zero-padded 3x3 neighborhood."""
    m, c, h, w = x.shape
    padded = np.zeros((m, c, h + 2, w + 2), dtype=x.dtype)
    padded[:, :, 1:-1, 1:-1] = x.data
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(2, 3))
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(m, h * w, c * 9)

    def grad(g):
        gw = g.reshape(m, h, w, c, 3, 3)
        gpad = np.zeros((m, c, h + 2, w + 2), dtype=g.dtype)
        for di in range(3):
            for dj in range(3):
                gpad[:, :, di:di + h, dj:dj + w] += gw[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
        return gpad[:, :, 1:-1, 1:-1]

    return custom_op("im2col", cols, [x], [grad])


class Conv3x3(Module):
    """3x3 stride-1 same-padding convolution via im2col + matmul."""

    def __init__(self, in_channels, out_channels, rng, dtype=np.float32):
        super().__init__()
        fan_in = in_channels * 9
        self.weight = Parameter(kaiming_uniform(rng, (fan_in, out_channels), fan_in, dtype))
        self.in_channels = in_channels
        self.out_channels = out_channels

    def forward(self, x: Tensor) -> Tensor:
        m, c, h, w = x.shape
        if c != self.in_channels:
            raise ShapeMismatchError(f"Conv3x3: expected {self.in_channels} channels, got {x.shape}")
        cols = _im2col(x)
        y = cols @ self.weight
        return y.reshape((m, h, w, self.out_channels)).permute((0, 3, 1, 2))


class DepthwiseConv3x3(Module):
    """Per-channel 3x3 convolution (the position-embedding generator core)."""

    def __init__(self, channels, rng, dtype=np.float32):
        super().__init__()
        self.weight = Parameter(kaiming_uniform(rng, (channels, 3, 3), 9, dtype))
        self.channels = channels

    def forward(self, x: Tensor) -> Tensor:
        m, c, h, w = x.shape
        if c != self.channels:
            raise ShapeMismatchError(f"DepthwiseConv3x3: expected {self.channels} channels, got {x.shape}")
        weight = self.weight
        padded = np.zeros((m, c, h + 2, w + 2), dtype=x.dtype)
        padded[:, :, 1:-1, 1:-1] = x.data
        out = np.zeros((m, c, h, w), dtype=x.dtype)
        wd = weight.data
        for di in range(3):
            for dj in range(3):
                out += wd[:, di, dj][None, :, None, None] * padded[:, :, di:di + h, dj:dj + w]

        def grad_x(g):
            gpad = np.zeros((m, c, h + 2, w + 2), dtype=g.dtype)
            for di in range(3):
                for dj in range(3):
                    gpad[:, :, di:di + h, dj:dj + w] += wd[:, di, dj][None, :, None, None] * g
            return gpad[:, :, 1:-1, 1:-1]

        def grad_w(g):
            gw = np.zeros_like(wd)
            for di in range(3):
                for dj in range(3):
                    gw[:, di, dj] = (g * padded[:, :, di:di + h, dj:dj + w]).sum(axis=(0, 2, 3))
            return gw

        return custom_op("depthwise3x3", out, [x, weight], [grad_x, grad_w])


class MaxPool2x2(Module):
    """2x2 stride-2 max pooling; backward routes to the first argmax."""

    def forward(self, x: Tensor) -> Tensor:
        m, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeMismatchError(f"MaxPool2x2: spatial dims must be even, got {x.shape}")
        windows = x.data.reshape(m, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        windows = np.ascontiguousarray(windows).reshape(m, c, h // 2, w // 2, 4)
        idx = windows.argmax(axis=-1)
        out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

        def grad(g):
            gw = np.zeros((m, c, h // 2, w // 2, 4), dtype=g.dtype)
            np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
            gw = gw.reshape(m, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
            return np.ascontiguousarray(gw).reshape(m, c, h, w)

        return custom_op("maxpool2x2", out, [x], [grad])
