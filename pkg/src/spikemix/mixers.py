"""Interchangeable sequence-mixing sub-layers.

Both mixers map [T,B,N,D] -> binary [T,B,N,D] so the encoder can swap them
freely:

* SSA: spike-form Q/K/V attention without softmax. Q = SN(BN(x W_Q)) etc.,
  mixed as s * Q K^T V per head (either association order, identical
  results), then SN, Dense, BN, SN. Carries 4*D^2 weights.

* LT: a fixed Fourier or wavelet transform applied independently per time
  step, then BN and SN. Contributes zero weight parameters.

Residual connections are the encoder's responsibility, not the mixer's.
"""

from dataclasses import dataclass

import numpy as np

from .layers import BatchNorm, Dense, Module
from .neuron import LifLayer, LifParams
from .tensor import ShapeMismatchError, Tensor, custom_op
from .transforms import TransformPlan, make_plan

__all__ = [
    "MixerSpec",
    "MIXER_KINDS",
    "apply_plan",
    "ssa_mix",
    "SsaSublayer",
    "LtSublayer",
    "build_mixer",
]

MIXER_KINDS = ("ssa", "fft1d", "fft2d", "wt1d", "wt2d", "wt2d_combination")


@dataclass(frozen=True)
class MixerSpec:
    """Tagged choice of sequence mixer plus its parameters.

    head_dim fixes d (heads = D / d); scale is the attention damping factor;
    order picks the association order of the Q K^T V product. Wavelet fields
    apply to the wt kinds only.
    """

    kind: str = "ssa"
    head_dim: int = 32
    scale: float = 0.125
    order: str = "kv_first"
    wavelet: str = "haar"
    levels: int = 3

    def __post_init__(self):
        if self.kind not in MIXER_KINDS:
            raise ValueError(f"unknown mixer kind {self.kind!r}; choose from {MIXER_KINDS}")
        if self.order not in ("qk_first", "kv_first"):
            raise ValueError(f"unknown association order {self.order!r}")
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")


def apply_plan(x: Tensor, plan: TransformPlan) -> Tensor:
    """Fixed linear map as a tape op; backward applies the adjoint."""
    return custom_op("linear_transform", plan.forward(x.data), [x], [plan.adjoint])


def _swap_last2(t: Tensor) -> Tensor:
    order = list(range(t.ndim))
    order[-1], order[-2] = order[-2], order[-1]
    return t.permute(order)


def ssa_mix(q: Tensor, k: Tensor, v: Tensor, scale: float, order="kv_first") -> Tensor:
    """s * Q K^T V over per-head tensors [T,B,H,N,d].

    qk_first materializes the N x N attention map (O(N^2 d)); kv_first
    contracts K^T V first (O(N d^2)). On binary inputs the two orders agree
    exactly: every partial sum is a small integer.
    """
    if q.shape != k.shape or q.shape != v.shape:
        raise ShapeMismatchError(f"ssa_mix: Q/K/V shapes differ: {q.shape}, {k.shape}, {v.shape}")
    if order == "qk_first":
        out = (q @ _swap_last2(k)) @ v
    else:
        out = q @ (_swap_last2(k) @ v)
    return out * scale


def attention_map(q: Tensor, k: Tensor) -> Tensor:
    """Q K^T per head; nonnegative for binary inputs."""
    return q @ _swap_last2(k)


def _split_heads(x: Tensor, heads: int, head_dim: int) -> Tensor:
    t, b, n, d = x.shape
    return x.reshape((t, b, n, heads, head_dim)).permute((0, 1, 3, 2, 4))


def _merge_heads(x: Tensor) -> Tensor:
    t, b, h, n, d = x.shape
    return x.permute((0, 1, 3, 2, 4)).reshape((t, b, n, h * d))


class SsaSublayer(Module):
    """Spiking self-attention: Eq.-style SN(BN(Dense(SN(s Q K^T V))))."""

    def __init__(self, dim, spec: MixerSpec, rng, lif: LifParams = None, dtype=np.float32):
        super().__init__()
        if dim % spec.head_dim:
            raise ShapeMismatchError(f"dim {dim} not divisible by head_dim {spec.head_dim}")
        self.spec = spec
        self.dim = dim
        self.heads = dim // spec.head_dim
        lif = lif or LifParams()
        self.w_q = Dense(dim, dim, rng, dtype=dtype)
        self.w_k = Dense(dim, dim, rng, dtype=dtype)
        self.w_v = Dense(dim, dim, rng, dtype=dtype)
        self.w_o = Dense(dim, dim, rng, dtype=dtype)
        self.norm_q = BatchNorm(dim, dtype=dtype)
        self.norm_k = BatchNorm(dim, dtype=dtype)
        self.norm_v = BatchNorm(dim, dtype=dtype)
        self.norm_o = BatchNorm(dim, dtype=dtype)
        self.sn_q = LifLayer(lif, label="ssa.q")
        self.sn_k = LifLayer(lif, label="ssa.k")
        self.sn_v = LifLayer(lif, label="ssa.v")
        self.sn_attn = LifLayer(lif, label="ssa.attn")
        self.sn_out = LifLayer(lif, label="ssa.out")

    def project_qkv(self, x: Tensor):
        """Binary Q, K, V in [T,B,N,D] layout."""
        q = self.sn_q(self.norm_q(self.w_q(x)))
        k = self.sn_k(self.norm_k(self.w_k(x)))
        v = self.sn_v(self.norm_v(self.w_v(x)))
        return q, k, v

    def forward(self, x: Tensor) -> Tensor:
        q, k, v = self.project_qkv(x)
        mixed = ssa_mix(
            _split_heads(q, self.heads, self.spec.head_dim),
            _split_heads(k, self.heads, self.spec.head_dim),
            _split_heads(v, self.heads, self.spec.head_dim),
            self.spec.scale,
            self.spec.order,
        )
        attn_spikes = self.sn_attn(_merge_heads(mixed))
        return self.sn_out(self.norm_o(self.w_o(attn_spikes)))


class LtSublayer(Module):
    """Unparameterized mixing: SN(BN(LT(x))); zero weight parameters."""

    def __init__(self, dim, seq_len, spec: MixerSpec, lif: LifParams = None, dtype=np.float32):
        super().__init__()
        self.spec = spec
        self.plan = make_plan(spec.kind, seq_len, dim, wavelet=spec.wavelet, levels=spec.levels)
        self.norm = BatchNorm(dim, dtype=dtype)
        self.sn = LifLayer(lif or LifParams(), label=f"lt.{spec.kind}")

    def forward(self, x: Tensor) -> Tensor:
        return self.sn(self.norm(apply_plan(x, self.plan)))


def build_mixer(dim, seq_len, spec: MixerSpec, rng, lif: LifParams = None, dtype=np.float32):
    if spec.kind == "ssa":
        return SsaSublayer(dim, spec, rng, lif=lif, dtype=dtype)
    return LtSublayer(dim, seq_len, spec, lif=lif, dtype=dtype)
