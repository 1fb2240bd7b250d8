"""Unparameterized linear transforms used for sequence mixing.

Two families:

* Discrete Fourier transform, both the O(N^2) definition (the reference
  oracle) and an iterative radix-2 Cooley-Tukey FFT for power-of-2 lengths.
  The mixer variants keep only the real part, which makes them fixed real
  linear maps; the 1D map has matrix C[n,k] = cos(2*pi*k*n/N), symmetric,
  so it is its own adjoint, and the 2D composition (feature axis first,
  then sequence axis, real part taken once at the end) is self-adjoint too.

* Multi-level discrete wavelet analysis via 2-tap orthonormal filter banks
  (haar / db1 / bior1.1 / rbio1.1 — numerically identical at length 2 but
  wired as distinct filter sets). Coefficients are laid out
  [approx_J | detail_J | ... | detail_1] along the transformed axis;
  orthonormality makes the inverse transform the adjoint.

All functions are pure ndarray -> ndarray maps; tape integration lives in
the mixer layer. Transform tables (twiddles, DFT matrices) are cached and
immutable.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "ComplexTensor",
    "WaveletFilter",
    "TransformPlan",
    "TransformLengthError",
    "WAVELET_FAMILIES",
    "get_wavelet",
    "max_wavelet_levels",
    "dft_naive_1d",
    "dft_naive_2d_real",
    "fft_1d",
    "lt_fft_1d_real",
    "lt_fft_2d_real",
    "dwt_1d",
    "idwt_1d",
    "lt_wt_1d",
    "lt_wt_2d",
    "ilt_wt_2d",
    "adjoint",
    "make_plan",
]


class TransformLengthError(ValueError):
    """Input length violates a transform's constraint."""


@dataclass
class ComplexTensor:
    """Real/imaginary pair with equal shapes."""

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ValueError(f"re/im shape mismatch: {self.re.shape} vs {self.im.shape}")

    @classmethod
    def from_complex(cls, z: np.ndarray) -> "ComplexTensor":
        return cls(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag))

    def to_complex(self) -> np.ndarray:
        return self.re + 1j * self.im


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


# -- discrete Fourier transform ----------------------------------------------


@lru_cache(maxsize=None)
def _dft_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


@lru_cache(maxsize=None)
def _cos_matrix(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.cos(2.0 * np.pi * np.outer(k, k) / n)


def dft_naive_1d(x, axis=0) -> ComplexTensor:
    """O(N^2) reference DFT along ``axis``: out_n = sum_k x_k e^{-2pi i k n / N}."""
    x = np.asarray(x)
    n = x.shape[axis]
    moved = np.moveaxis(x, axis, 0)
    out = np.tensordot(_dft_matrix(n), moved, axes=(1, 0))
    return ComplexTensor.from_complex(np.moveaxis(out, 0, axis))


@lru_cache(maxsize=None)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


@lru_cache(maxsize=None)
def _twiddles(half: int, dtype_name: str) -> np.ndarray:
    w = np.exp(-1j * np.pi * np.arange(half) / half)
    return w.astype(np.complex64 if dtype_name == "float32" else np.complex128)


def _fft_axis(z: np.ndarray, axis: int) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT along ``axis``.

    Ping-pong buffers, fused butterfly passes, and a layout that keeps the
    ufunc inner loops long and contiguous: transforming the last axis of a
    multi-dimensional array transposes it in front of the batch axis first.
    """
    axis = axis % z.ndim
    n = z.shape[axis]
    shape = z.shape
    lead = int(np.prod(shape[:axis])) if axis else 1
    trail = int(np.prod(shape[axis + 1:])) if axis + 1 < z.ndim else 1
    transposed = trail == 1 and lead > 1
    if transposed:
        buf = np.ascontiguousarray(z.reshape(lead, n).T[_bit_reversal(n)])
        lead, trail = 1, lead
        buf = buf.reshape(1, n, trail)
    else:
        buf = np.ascontiguousarray(z).reshape(lead, n, trail)
        buf = buf[:, _bit_reversal(n), :]
    out = np.empty_like(buf)
    dtype_name = "float32" if buf.dtype == np.complex64 else "float64"
    half = 1
    while half < n:
        blocks = n // (2 * half)
        zv = buf.reshape(lead, blocks, 2, half, trail)
        ov = out.reshape(lead, blocks, 2, half, trail)
        even, odd = zv[:, :, 0], zv[:, :, 1]
        if half == 1:  # twiddle is 1
            np.add(even, odd, out=ov[:, :, 0])
            np.subtract(even, odd, out=ov[:, :, 1])
        else:
            w = _twiddles(half, dtype_name)[:, None]
            np.multiply(odd, w, out=ov[:, :, 1])
            np.add(even, ov[:, :, 1], out=ov[:, :, 0])
            np.subtract(even, ov[:, :, 1], out=ov[:, :, 1])
        buf, out = out, buf
        half *= 2
    if transposed:
        return np.ascontiguousarray(buf.reshape(n, trail).T).reshape(shape)
    return buf.reshape(shape)


def fft_1d(x, axis=0) -> ComplexTensor:
    """Radix-2 Cooley-Tukey FFT along ``axis``; requires a power-of-2 length.

    Matches dft_naive_1d to ~1e-9 relative error in float64.
    """
    if isinstance(x, ComplexTensor):
        z = x.to_complex()
    else:
        z = np.asarray(x)
        if z.dtype == np.float32:
            z = z.astype(np.complex64)
        elif not np.iscomplexobj(z):
            z = z.astype(np.complex128)
    n = z.shape[axis]
    if not _is_pow2(n):
        raise TransformLengthError(
            f"fft_1d: length {n} along axis {axis} is not a power of 2; use dft_naive_1d"
        )
    return ComplexTensor.from_complex(_fft_axis(z, axis))


def lt_fft_1d_real(x: np.ndarray, axis=-2) -> np.ndarray:
    """Real part of the sequence-axis DFT; the fixed cosine mixing map."""
    x = np.asarray(x)
    n = x.shape[axis]
    if not _is_pow2(n):
        raise TransformLengthError(
            f"lt_fft_1d_real: length {n} along axis {axis} is not a power of 2"
        )
    z = x.astype(np.complex64 if x.dtype == np.float32 else np.complex128)
    return np.ascontiguousarray(_fft_axis(z, axis).real).astype(x.dtype, copy=False)


def _fft_or_naive(z: np.ndarray, axis: int) -> np.ndarray:
    n = z.shape[axis]
    if _is_pow2(n):
        return _fft_axis(z, axis)
    moved = np.moveaxis(z, axis, 0)
    out = np.tensordot(_dft_matrix(n).astype(z.dtype), moved, axes=(1, 0))
    return np.moveaxis(out, 0, axis)


def lt_fft_2d_real(x: np.ndarray, seq_axis=-2, feat_axis=-1) -> np.ndarray:
    """Real part of the composed DFT: feature axis first, then sequence axis.

    The real part is taken once, after the full complex composition.
    Non-power-of-2 axes fall back to the O(n^2) definition for that axis.
    """
    x = np.asarray(x)
    z = x.astype(np.complex64 if x.dtype == np.float32 else np.complex128)
    z = _fft_or_naive(z, feat_axis)
    z = _fft_or_naive(z, seq_axis)
    return np.ascontiguousarray(z.real).astype(x.dtype, copy=False)


def dft_naive_2d_real(x: np.ndarray) -> np.ndarray:
    """Literal double-sum 2D-DFT real part for [N, D] inputs (test oracle)."""
    x = np.asarray(x)
    n, d = x.shape
    z = _dft_matrix(n) @ x.astype(np.complex128) @ _dft_matrix(d)
    return z.real


# -- wavelet filter banks -----------------------------------------------------

_SQRT_HALF = 2.0 ** -0.5


@dataclass(frozen=True)
class WaveletFilter:
    """Analysis (h_lo, h_hi) and synthesis (g_lo, g_hi) filter taps."""

    name: str
    h_lo: tuple
    h_hi: tuple
    g_lo: tuple
    g_hi: tuple


def _two_tap(name: str) -> WaveletFilter:
    # For orthonormal 2-tap banks the synthesis pair equals the analysis pair.
    lo = (_SQRT_HALF, _SQRT_HALF)
    hi = (_SQRT_HALF, -_SQRT_HALF)
    return WaveletFilter(name, lo, hi, lo, hi)


WAVELET_FAMILIES = {
    "haar": _two_tap("haar"),
    "db1": _two_tap("db1"),
    "bior1.1": _two_tap("bior1.1"),
    "rbio1.1": _two_tap("rbio1.1"),
}


def get_wavelet(name: str) -> WaveletFilter:
    try:
        return WAVELET_FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown wavelet family {name!r}; choose from {sorted(WAVELET_FAMILIES)}")


def max_wavelet_levels(n: int) -> int:
    """Largest J with every decomposed level of even length (n, n/2, ...)."""
    levels = 0
    while n % 2 == 0 and n > 1:
        levels += 1
        n //= 2
    return levels


def _axis_slice(ndim, axis, sl):
    idx = [slice(None)] * ndim
    idx[axis] = sl
    return tuple(idx)


def _tap_view(x, axis, f, half):
    """Downsampled tap x[2k + f] along ``axis`` with periodic wraparound."""
    n = x.shape[axis]
    if f < 2:  # 2k + f never wraps for even n
        return x[_axis_slice(x.ndim, axis, slice(f, f + 2 * half, 2))]
    idx = (2 * np.arange(half) + f) % n
    return np.take(x, idx, axis=axis)


def _analysis_level(x: np.ndarray, filt: WaveletFilter, axis: int):
    """One filter-bank level along ``axis`` with periodic extension."""
    half = x.shape[axis] // 2
    approx = detail = None
    for f, (lo, hi) in enumerate(zip(filt.h_lo, filt.h_hi)):
        taps = _tap_view(x, axis, f, half)
        if approx is None:
            approx = lo * taps
            detail = hi * taps
        else:
            approx += lo * taps
            detail += hi * taps
    return approx, detail


def _synthesis_level(approx: np.ndarray, detail: np.ndarray, filt: WaveletFilter, axis: int):
    half = approx.shape[axis]
    n = 2 * half
    shape = list(approx.shape)
    shape[axis] = n
    out = np.zeros(shape, dtype=approx.dtype)
    for f, (lo, hi) in enumerate(zip(filt.g_lo, filt.g_hi)):
        contrib = lo * approx + hi * detail
        if f < 2:
            out[_axis_slice(out.ndim, axis, slice(f, f + n, 2))] += contrib
        else:
            # Indices 2k+f mod n are distinct for fixed f, so fancy += is safe.
            out[_axis_slice(out.ndim, axis, (2 * np.arange(half) + f) % n)] += contrib
    return out


def dwt_1d(x: np.ndarray, filt: WaveletFilter, levels: int, axis=-2) -> np.ndarray:
    """Multi-level analysis bank along ``axis``.

    Output layout along the axis: [approx_J | detail_J | ... | detail_1],
    length-preserving. Each decomposed level must have even length.
    """
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    x = np.asarray(x)
    axis = axis % x.ndim
    work = x
    details = []
    for j in range(1, levels + 1):
        if work.shape[axis] % 2:
            raise TransformLengthError(
                f"dwt_1d: odd length {work.shape[axis]} at level {j} (input length {x.shape[axis]})"
            )
        work, detail = _analysis_level(work, filt, axis)
        details.append(detail)
    return np.concatenate([work] + details[::-1], axis=axis)


def idwt_1d(coeffs: np.ndarray, filt: WaveletFilter, levels: int, axis=-2) -> np.ndarray:
    """Inverse of dwt_1d; perfect reconstruction for the shipped filters."""
    coeffs = np.asarray(coeffs)
    axis = axis % coeffs.ndim
    n = coeffs.shape[axis]
    base = n >> levels
    if base << levels != n or base < 1:
        raise TransformLengthError(
            f"idwt_1d: length {n} does not split into {levels} levels"
        )
    approx = coeffs[_axis_slice(coeffs.ndim, axis, slice(0, base))]
    offset = base
    for j in range(levels, 0, -1):
        size = n >> j
        detail = coeffs[_axis_slice(coeffs.ndim, axis, slice(offset, offset + size))]
        approx = _synthesis_level(approx, detail, filt, axis)
        offset += size
    return np.ascontiguousarray(approx)


def lt_wt_1d(x: np.ndarray, filt: WaveletFilter, levels: int, axis=-2) -> np.ndarray:
    return dwt_1d(x, filt, levels, axis=axis)


def lt_wt_2d(x: np.ndarray, filt: WaveletFilter, levels_seq: int, levels_feat: int,
             seq_axis=-2, feat_axis=-1) -> np.ndarray:
    """Analysis DWT along the feature axis, then along the sequence axis."""
    y = dwt_1d(x, filt, levels_feat, axis=feat_axis)
    return dwt_1d(y, filt, levels_seq, axis=seq_axis)


def ilt_wt_2d(c: np.ndarray, filt: WaveletFilter, levels_seq: int, levels_feat: int,
              seq_axis=-2, feat_axis=-1) -> np.ndarray:
    y = idwt_1d(c, filt, levels_seq, axis=seq_axis)
    return idwt_1d(y, filt, levels_feat, axis=feat_axis)


# -- plans and adjoints --------------------------------------------------------

_COMBINATION_FAMILIES = ("haar", "db1", "bior1.1", "rbio1.1")


@dataclass(frozen=True)
class TransformPlan:
    """A concrete mixing transform bound to sequence/feature lengths.

    kind: fft1d | fft2d | wt1d | wt2d | wt2d_combination. Wavelet levels are
    capped at the largest all-even decomposition depth per axis.
    """

    kind: str
    n: int
    d: int
    wavelet: str = "haar"
    levels_seq: int = 0
    levels_feat: int = 0
    families: tuple = _COMBINATION_FAMILIES

    def forward(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "fft1d":
            return lt_fft_1d_real(x, axis=-2)
        if self.kind == "fft2d":
            return lt_fft_2d_real(x)
        if self.kind == "wt1d":
            return dwt_1d(x, get_wavelet(self.wavelet), self.levels_seq, axis=-2)
        if self.kind == "wt2d":
            return lt_wt_2d(x, get_wavelet(self.wavelet), self.levels_seq, self.levels_feat)
        if self.kind == "wt2d_combination":
            outs = [
                lt_wt_2d(x, get_wavelet(f), self.levels_seq, self.levels_feat)
                for f in self.families
            ]
            return sum(outs[1:], outs[0]) / len(outs)
        raise ValueError(f"unknown transform kind {self.kind!r}")

    def adjoint(self, g: np.ndarray) -> np.ndarray:
        return adjoint(self, g)


def make_plan(kind: str, n: int, d: int, wavelet="haar", levels=3,
              families=_COMBINATION_FAMILIES) -> TransformPlan:
    """Build a plan, validating length constraints for the chosen kind."""
    if kind in ("fft1d", "fft2d") and not _is_pow2(n):
        raise TransformLengthError(f"{kind}: sequence length {n} must be a power of 2")
    levels_seq = levels_feat = 0
    if kind in ("wt1d", "wt2d", "wt2d_combination"):
        max_seq = max_wavelet_levels(n)
        if max_seq < 1:
            raise TransformLengthError(f"{kind}: sequence length {n} is not even")
        levels_seq = min(levels, max_seq)
    if kind in ("wt2d", "wt2d_combination"):
        max_feat = max_wavelet_levels(d)
        if max_feat < 1:
            raise TransformLengthError(f"{kind}: feature width {d} is not even")
        levels_feat = min(levels, max_feat)
    return TransformPlan(
        kind=kind, n=n, d=d, wavelet=wavelet,
        levels_seq=levels_seq, levels_feat=levels_feat, families=tuple(families),
    )


def adjoint(plan: TransformPlan, g: np.ndarray) -> np.ndarray:
    """Transpose of the realized linear map (the mixer's backward rule).

    The real-part DFT maps are symmetric, hence self-adjoint; orthonormal
    wavelet banks have transpose equal to inverse.
    """
    if plan.kind == "fft1d":
        return lt_fft_1d_real(g, axis=-2)
    if plan.kind == "fft2d":
        return lt_fft_2d_real(g)
    if plan.kind == "wt1d":
        return idwt_1d(g, get_wavelet(plan.wavelet), plan.levels_seq, axis=-2)
    if plan.kind == "wt2d":
        return ilt_wt_2d(g, get_wavelet(plan.wavelet), plan.levels_seq, plan.levels_feat)
    if plan.kind == "wt2d_combination":
        outs = [
            ilt_wt_2d(g, get_wavelet(f), plan.levels_seq, plan.levels_feat)
            for f in plan.families
        ]
        return sum(outs[1:], outs[0]) / len(outs)
    raise ValueError(f"unknown transform kind {plan.kind!r}")
