"""Reverse-mode autodiff over dense numpy tensors.

A ``Tensor`` wraps a real-valued ndarray plus an optional backward closure;
every op appends nodes to an implicit define-by-run tape, rebuilt on each
forward pass. The op set is deliberately small: exactly what a spiking
token-mixing network needs (elementwise arithmetic, batched matmul, axis
reductions, layout ops, and a hook for fused custom ops such as spikes,
convolutions, and fixed linear transforms).

Precision is a construction-time choice: float64 for tests and oracles,
float32 for training and benchmarks. Ops never silently promote; mixing
dtypes raises.
"""

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "ShapeMismatchError",
    "GraphError",
    "SpikeInGraphError",
    "no_grad",
    "is_grad_enabled",
    "custom_op",
    "matmul",
    "stack_first",
    "seeded_rng",
    "finite_difference_check",
]

FLOAT_DTYPES = (np.float32, np.float64)


class ShapeMismatchError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class GraphError(RuntimeError):
    """Tape misuse, e.g. backward on a consumed or non-scalar root."""


class SpikeInGraphError(ValueError):
    """A smooth-only check was asked to differentiate through a spike op."""


_GRAD_ENABLED = True


class no_grad:
    """Context manager that suspends tape recording."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


def seeded_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; identical seed gives an identical draw sequence."""
    return np.random.default_rng(seed)


def _as_float_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype in FLOAT_DTYPES:
        return arr
    return arr.astype(np.float64)


class Tensor:
    """Dense real tensor with row-major storage and optional grad tracking."""

    __slots__ = ("data", "grad", "requires_grad", "_op", "_parents", "_backward", "_consumed")

    def __init__(self, data, dtype=None, requires_grad=False):
        self.data = _as_float_array(data, dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._op = None
        self._parents = ()
        self._backward = None
        self._consumed = False

    # -- introspection ------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() requires a single-element tensor")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"

    # -- graph --------------------------------------------------------------

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def backward(self):
        """Backpropagate from a scalar root through the recorded tape.

        The tape is consumed: a second backward on the same root raises
        GraphError (re-run the forward pass to record a fresh graph).
        """
        if self.size != 1:
            raise GraphError(f"backward() root must be scalar, got shape {self.shape}")
        if self._consumed:
            raise GraphError("backward() called twice on the same recorded graph")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            node._consumed = True
        # Release saved references so intermediates free promptly.
        for node in order:
            if node._backward is not None:
                node._backward = None
                node._parents = ()

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_scalar(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, scale(other, -1.0))
        return add_scalar(self, -float(other))

    def __rsub__(self, other):
        return add_scalar(scale(self, -1.0), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, pow_scalar(other, -1.0))
        return scale(self, 1.0 / float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def permute(self, order):
        return permute(self, order)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def pow(self, exponent: float):
        return pow_scalar(self, exponent)

    def sqrt(self):
        return pow_scalar(self, 0.5)


class Parameter(Tensor):
    """Trainable tensor with a persistent gradient accumulator.

    The accumulator is zeroed only by an explicit ``zero_grad()``; backward
    passes add into it. ``tag`` classifies the parameter for the census
    ("weight" for dense/conv matrices, "bn_affine" for normalization scale
    and shift).
    """

    __slots__ = ("tag", "trainable")

    def __init__(self, data, dtype=None, tag="weight", trainable=True):
        super().__init__(data, dtype=dtype, requires_grad=True)
        self.tag = tag
        self.trainable = trainable
        self.grad = np.zeros_like(self.data)


def _toposort(root: Tensor):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def _check_same_dtype(name, *tensors):
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ShapeMismatchError(f"{name}: mixed dtypes {sorted(d.name for d in dtypes)}")


def custom_op(name, out_data, inputs, grad_fns):
    """Record a fused op with explicit backward rules.

    ``grad_fns[i]`` maps the output cotangent to the gradient array for
    ``inputs[i]`` (or is None for non-differentiable inputs).
    """
    out = Tensor(out_data)
    if _GRAD_ENABLED and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._op = name
        out._parents = tuple(inputs)

        def backward(g):
            for t, fn in zip(inputs, grad_fns):
                if t.requires_grad and fn is not None:
                    t._accumulate(fn(g))

        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise ops ---------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype("add", a, b)
    out_data = a.data + b.data
    return custom_op(
        "add",
        out_data,
        [a, b],
        [lambda g: _unbroadcast(g, a.shape), lambda g: _unbroadcast(g, b.shape)],
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype("mul", a, b)
    out_data = a.data * b.data
    return custom_op(
        "mul",
        out_data,
        [a, b],
        [
            lambda g: _unbroadcast(g * b.data, a.shape),
            lambda g: _unbroadcast(g * a.data, b.shape),
        ],
    )


def scale(a: Tensor, s: float) -> Tensor:
    return custom_op("scale", a.data * s, [a], [lambda g: g * s])


def add_scalar(a: Tensor, s: float) -> Tensor:
    return custom_op("add_scalar", a.data + s, [a], [lambda g: g])


def pow_scalar(a: Tensor, exponent: float) -> Tensor:
    out_data = a.data**exponent
    return custom_op(
        "pow", out_data, [a], [lambda g: g * (exponent * a.data ** (exponent - 1.0))]
    )


# -- matmul ------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the trailing two dims.

    Supported operand layouts: 2D @ 2D, ND @ 2D (shared right matrix, its
    gradient sums over the leading axes), and ND @ ND with equal leading
    dims. Anything else is a shape error naming both shapes.
    """
    _check_same_dtype("matmul", a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatchError(f"matmul: operands must be >=2D, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError(f"matmul: inner dims disagree for {a.shape} @ {b.shape}")
    if a.ndim > 2 and b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeMismatchError(f"matmul: leading dims disagree for {a.shape} @ {b.shape}")
    if b.ndim > 2 and a.ndim == 2:
        raise ShapeMismatchError(f"matmul: unsupported layout {a.shape} @ {b.shape}")
    out_data = np.matmul(a.data, b.data)

    def grad_a(g):
        return np.matmul(g, np.swapaxes(b.data, -1, -2))

    def grad_b(g):
        if b.ndim == 2 and a.ndim > 2:
            k, p = a.shape[-1], g.shape[-1]
            return np.matmul(a.data.reshape(-1, k).T, g.reshape(-1, p))
        return np.matmul(np.swapaxes(a.data, -1, -2), g)

    return custom_op("matmul", out_data, [a, b], [grad_a, grad_b])


# -- layout ops --------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    in_shape = a.shape
    return custom_op(
        "reshape", a.data.reshape(shape), [a], [lambda g: g.reshape(in_shape)]
    )


def permute(a: Tensor, order) -> Tensor:
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(a.ndim)):
        raise ShapeMismatchError(f"permute: order {order} invalid for shape {a.shape}")
    inverse = tuple(np.argsort(order))
    return custom_op(
        "permute",
        np.ascontiguousarray(np.transpose(a.data, order)),
        [a],
        [lambda g: np.transpose(g, inverse)],
    )


def index_first(a: Tensor, i: int) -> Tensor:
    """Select slice i along the leading axis (used for the time loop)."""
    in_shape = a.shape

    def grad(g):
        full = np.zeros(in_shape, dtype=g.dtype)
        full[i] = g
        return full

    return custom_op("index_first", a.data[i].copy(), [a], [grad])


def stack_first(parts) -> Tensor:
    """Stack tensors along a new leading axis (inverse of index_first)."""
    parts = list(parts)
    _check_same_dtype("stack_first", *parts)
    out_data = np.stack([p.data for p in parts], axis=0)
    grad_fns = [(lambda g, i=i: g[i]) for i in range(len(parts))]
    return custom_op("stack_first", out_data, parts, grad_fns)


# -- reductions --------------------------------------------------------------


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    axis = tuple(int(ax) % ndim if -ndim <= ax < ndim else _bad_axis(ax, ndim) for ax in axis)
    return axis


def _bad_axis(ax, ndim):
    raise ShapeMismatchError(f"axis {ax} invalid for tensor of rank {ndim}")


def reduce_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    axis = _norm_axis(axis, a.ndim)
    in_shape = a.shape
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def grad(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, in_shape).copy()

    return custom_op("sum", out_data, [a], [grad])


def reduce_mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    axis = _norm_axis(axis, a.ndim)
    count = 1
    for ax in axis:
        count *= a.shape[ax]
    in_shape = a.shape
    out_data = a.data.mean(axis=axis, keepdims=keepdims)

    def grad(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g / count, in_shape).copy()

    return custom_op("mean", out_data, [a], [grad])


# -- verification ------------------------------------------------------------


def _graph_ops(root: Tensor):
    return {node._op for node in _toposort(root) if node._op is not None}


def finite_difference_check(f, params, h=1e-4, max_coords=64, rng=None):
    """Max relative error between tape gradients and central differences.

    ``f`` must build and return a scalar loss Tensor from ``params``. The
    graph must be smooth: any spike op in it raises SpikeInGraphError (the
    surrogate path is checked separately by the neuron suite). Relative
    error uses |analytic| + 1e-8 in the denominator; coordinates are
    subsampled beyond ``max_coords`` per parameter.
    """
    rng = rng or seeded_rng(0)
    params = list(params)
    loss = f()
    if "spike" in _graph_ops(loss):
        raise SpikeInGraphError(
            "finite_difference_check requires a smooth graph; found a spike op"
        )
    for p in params:
        p.zero_grad()
    loss.backward()
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        for idx in coords:
            orig = flat[idx]
            with no_grad():
                flat[idx] = orig + h
                hi = f().item()
                flat[idx] = orig - h
                lo = f().item()
                flat[idx] = orig
            numeric = (hi - lo) / (2.0 * h)
            a = grad.reshape(-1)[idx]
            worst = max(worst, abs(a - numeric) / (abs(a) + 1e-8))
    return worst
