"""Leaky integrate-and-fire spiking neurons with surrogate-gradient backward.

The membrane recurrence over the leading time axis is

    H[t] = V[t-1] + (1/tau) * (X[t] - (V[t-1] - v_reset))
    S[t] = heaviside(H[t] - v_th)          (fires on equality)
    V[t] = H[t] * (1 - S[t]) + v_reset * S[t]

with V[0] = v_reset. Spike outputs are exactly binary; the backward pass
replaces dS/dH with a bounded surrogate window. State is reset at the start
of every forward pass (no cross-batch continuity).
"""

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, custom_op, index_first, stack_first

__all__ = [
    "SurrogateSpec",
    "LifParams",
    "surrogate_grad",
    "spike",
    "lif_sequence",
    "LifLayer",
    "observe_spikes",
]


@dataclass(frozen=True)
class SurrogateSpec:
    """Backward stand-in for the Heaviside derivative.

    kind "rectangular": (1/width) * [|v| < width/2]
    kind "arctan":      (alpha/2) / (1 + (pi*alpha*v/2)^2)
    """

    kind: str = "rectangular"
    width: float = 1.0
    alpha: float = 2.0

    def __post_init__(self):
        if self.kind not in ("rectangular", "arctan"):
            raise ValueError(f"unknown surrogate kind {self.kind!r}")


@dataclass(frozen=True)
class LifParams:
    tau: float = 2.0
    v_th: float = 1.0
    v_reset: float = 0.0
    surrogate: SurrogateSpec = field(default_factory=SurrogateSpec)

    def __post_init__(self):
        if self.tau < 1.0:
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        if not self.v_th > self.v_reset:
            raise ValueError(f"v_th ({self.v_th}) must exceed v_reset ({self.v_reset})")


def surrogate_grad(v: np.ndarray, spec: SurrogateSpec) -> np.ndarray:
    """dS/dH evaluated at v = H - v_th; nonnegative, bounded, symmetric."""
    v = np.asarray(v)
    if spec.kind == "rectangular":
        return (np.abs(v) < spec.width / 2.0).astype(v.dtype) / spec.width
    z = 0.5 * np.pi * spec.alpha * v
    return (spec.alpha / 2.0) / (1.0 + z * z)


def spike(h: Tensor, v_th: float, spec: SurrogateSpec) -> Tensor:
    """Heaviside(h - v_th) forward, surrogate derivative backward."""
    s = (h.data - v_th >= 0.0).astype(h.dtype)
    return custom_op("spike", s, [h], [lambda g: g * surrogate_grad(h.data - v_th, spec)])


# Test instrumentation: observers receive (site_label, spike_array) for every
# LIF layer output produced while registered.
_SPIKE_OBSERVERS = []


@contextmanager
def observe_spikes(fn):
    _SPIKE_OBSERVERS.append(fn)
    try:
        yield
    finally:
        _SPIKE_OBSERVERS.remove(fn)


def lif_sequence(x: Tensor, params: LifParams, label="lif") -> Tensor:
    """Run the LIF recurrence along the leading (time) axis of x.

    Returns the binary spike tensor of the same shape. Gradients flow
    through the reset path using the surrogate derivative for S.
    """
    t_steps = x.shape[0]
    leak = 1.0 - 1.0 / params.tau
    drive = 1.0 / params.tau
    v = Tensor(np.full(x.shape[1:], params.v_reset, dtype=x.dtype))
    spikes = []
    for t in range(t_steps):
        h = v * leak + index_first(x, t) * drive
        if params.v_reset != 0.0:
            h = h + (params.v_reset / params.tau)
        s = spike(h, params.v_th, params.surrogate)
        spikes.append(s)
        v = h * (1.0 - s)
        if params.v_reset != 0.0:
            v = v + s * params.v_reset
    out = stack_first(spikes)
    for fn in _SPIKE_OBSERVERS:
        fn(label, out.data)
    return out


def lif_trace(x: np.ndarray, params: LifParams):
    """Plain-numpy recurrence returning (H, S, V) over time, for verification."""
    x = np.asarray(x, dtype=np.float64)
    h = np.zeros_like(x)
    s = np.zeros_like(x)
    v = np.zeros_like(x)
    v_prev = np.full(x.shape[1:], params.v_reset)
    for t in range(x.shape[0]):
        h[t] = v_prev + (x[t] - (v_prev - params.v_reset)) / params.tau
        s[t] = (h[t] - params.v_th >= 0.0).astype(np.float64)
        v[t] = h[t] * (1.0 - s[t]) + params.v_reset * s[t]
        v_prev = v[t]
    return h, s, v


class LifLayer:
    """LIF applied over [T, ...] tensors; stateless across calls."""

    def __init__(self, params: LifParams = None, label="lif"):
        self.params = params or LifParams()
        self.label = label

    def __call__(self, x: Tensor) -> Tensor:
        return lif_sequence(x, self.params, label=self.label)
