"""Self-contained oracle and invariant suites, runnable from the CLI.

Each suite returns (checks_passed, checks_failed, failure_messages). These
are the fast whole-build sanity checks; the pytest suite runs the same
oracles with fuller parametrization.
"""

import numpy as np

from .layers import BatchNorm, Dense
from .mixers import MixerSpec, apply_plan, attention_map, ssa_mix
from .model import ModelConfig, build_model
from .neuron import LifParams, SurrogateSpec, lif_sequence, observe_spikes, surrogate_grad
from .tensor import Tensor, finite_difference_check, seeded_rng
from .train import cross_entropy_time_avg
from .transforms import (
    WAVELET_FAMILIES,
    dft_naive_1d,
    dft_naive_2d_real,
    dwt_1d,
    fft_1d,
    get_wavelet,
    idwt_1d,
    lt_fft_2d_real,
    make_plan,
)

__all__ = ["run_all", "SUITES", "lif_reference_gradient"]


class _Suite:
    def __init__(self, name):
        self.name = name
        self.passed = 0
        self.failures = []

    def check(self, ok, message):
        if ok:
            self.passed += 1
        else:
            self.failures.append(message)

    def result(self):
        return {"name": self.name, "passed": self.passed, "failed": len(self.failures),
                "failures": self.failures[:10]}


def _rel_err(a, b):
    """Max elementwise deviation relative to the reference's largest magnitude."""
    denom = max(float(np.abs(b).max()), 1e-30)
    return float(np.abs(a - b).max()) / denom


def suite_dft_oracle(fast=True):
    s = _Suite("dft-oracle")
    rng = seeded_rng(11)
    sizes = [2, 4, 8, 16, 64, 256, 1024] if fast else [2**k for k in range(1, 11)]
    trials = 5 if fast else 50
    for n in sizes:
        for _ in range(trials):
            x = (rng.random((n, 3)) < 0.5).astype(np.float64)
            fast_out = fft_1d(x, axis=0).to_complex()
            ref = dft_naive_1d(x, axis=0).to_complex()
            err = _rel_err(fast_out, ref)
            s.check(err < 1e-9, f"fft vs naive mismatch at N={n}: {err:.2e}")
    for _ in range(trials):
        x = (rng.random((16, 8)) < 0.5).astype(np.float64)
        err = _rel_err(lt_fft_2d_real(x), dft_naive_2d_real(x))
        s.check(err < 1e-9, f"2D real DFT vs double-sum mismatch: {err:.2e}")
    return s.result()


def suite_parseval(fast=True):
    s = _Suite("parseval")
    rng = seeded_rng(12)
    sizes = [4, 16, 64, 256]
    for n in sizes:
        x = rng.standard_normal((n, 4))
        z = fft_1d(x, axis=0)
        unitary_norm = np.sqrt((z.re**2 + z.im**2).sum() / n)
        s.check(
            abs(unitary_norm - np.linalg.norm(x)) < 1e-9 * max(np.linalg.norm(x), 1.0),
            f"DFT Parseval (1/sqrt(N) variant) fails at N={n}",
        )
        for family in WAVELET_FAMILIES:
            filt = get_wavelet(family)
            levels = min(3, n.bit_length() - 1)
            c = dwt_1d(x, filt, levels, axis=0)
            s.check(
                abs(np.linalg.norm(c) - np.linalg.norm(x)) < 1e-9 * np.linalg.norm(x),
                f"wavelet Parseval fails for {family} at N={n}",
            )
    return s.result()


def suite_reconstruction(fast=True):
    s = _Suite("reconstruction")
    rng = seeded_rng(13)
    sizes = [4, 8, 16, 32, 64, 128, 256]
    for n in sizes:
        x = rng.standard_normal((n, 4))
        for family in WAVELET_FAMILIES:
            filt = get_wavelet(family)
            for levels in {1, min(3, n.bit_length() - 1)}:
                rt = idwt_1d(dwt_1d(x, filt, levels, axis=0), filt, levels, axis=0)
                s.check(
                    np.abs(rt - x).max() < 1e-9,
                    f"round trip fails for {family}, N={n}, J={levels}",
                )
    return s.result()


def suite_adjoint(fast=True):
    s = _Suite("adjoint")
    rng = seeded_rng(14)
    for kind, d in [("fft1d", 48), ("fft2d", 32), ("fft2d", 48),
                    ("wt1d", 48), ("wt2d", 48), ("wt2d_combination", 48)]:
        plan = make_plan(kind, 64, d)
        for _ in range(3 if fast else 10):
            x = rng.standard_normal((64, d))
            y = rng.standard_normal((64, d))
            lhs = float((plan.forward(x) * y).sum())
            rhs = float((x * plan.adjoint(y)).sum())
            bound = 1e-9 * np.linalg.norm(x) * np.linalg.norm(y)
            s.check(
                abs(lhs - rhs) < bound,
                f"adjoint identity fails for {kind} (d={d}): |{lhs:.6e} - {rhs:.6e}|",
            )
    return s.result()


def suite_ssa_order(fast=True):
    s = _Suite("ssa-order")
    rng = seeded_rng(15)
    trials = 25 if fast else 100
    for _ in range(trials):
        n = int(rng.integers(2, 65))
        d = int(rng.integers(2, 65))
        q, k, v = (
            Tensor((rng.random((1, 1, 1, n, d)) < 0.5).astype(np.float64))
            for _ in range(3)
        )
        a = ssa_mix(q, k, v, 0.125, "qk_first").data
        b = ssa_mix(q, k, v, 0.125, "kv_first").data
        s.check(np.array_equal(a, b), f"association orders disagree at N={n}, d={d}")
        s.check(attention_map(q, k).data.min() >= 0.0, "attention map has a negative entry")
    return s.result()


def suite_binarity(fast=True):
    s = _Suite("spike-binarity")
    rng = seeded_rng(16)
    kinds = ["ssa", "fft1d"] if fast else ["ssa", "fft1d", "fft2d", "wt1d", "wt2d"]
    for kind in kinds:
        cfg = ModelConfig(layers=1, dim=32, timesteps=2, channels=1, height=8, width=8,
                          patch=2, num_classes=2, mixer=MixerSpec(kind=kind, head_dim=16))
        model = build_model(cfg, seed=3)
        images = rng.random((2, 2, 1, 8, 8)).astype(np.float32)
        sites = []

        def observer(label, spikes):
            sites.append((label, bool(np.all((spikes == 0.0) | (spikes == 1.0)))))

        with observe_spikes(observer):
            model.forward(images)
        s.check(len(sites) > 0, f"no spiking sites observed for {kind}")
        for label, ok in sites:
            s.check(ok, f"non-binary spike output at site {label} ({kind})")
    return s.result()


def lif_reference_gradient(x_vals, params: LifParams, loss_weights):
    """Hand-rolled chain rule for a single neuron: dL/dX for L = sum w_t S_t.

    Mirrors the recurrence adjoint term by term (surrogate derivative for
    dS/dH, gradient flowing through the reset path). Independent of the tape.
    """
    tau, v_th, v_reset = params.tau, params.v_th, params.v_reset
    leak, drive = 1.0 - 1.0 / tau, 1.0 / tau
    t_steps = len(x_vals)
    h, spikes = [], []
    v = v_reset
    for t in range(t_steps):
        ht = v * leak + x_vals[t] * drive + v_reset / tau
        st = 1.0 if ht - v_th >= 0.0 else 0.0
        v = ht * (1.0 - st) + v_reset * st
        h.append(ht)
        spikes.append(st)
    grads = np.zeros(t_steps)
    lam_v = 0.0
    for t in range(t_steps - 1, -1, -1):
        g_t = float(surrogate_grad(np.asarray(h[t] - v_th), params.surrogate))
        dl_ds = loss_weights[t] + lam_v * (v_reset - h[t])
        dl_dh = lam_v * (1.0 - spikes[t]) + dl_ds * g_t
        grads[t] = dl_dh * drive
        lam_v = dl_dh * leak
    return grads, np.asarray(spikes)


def suite_gradient_checks(fast=True):
    s = _Suite("gradient-checks")
    rng = seeded_rng(17)

    # Fixed-transform mixers differentiate through their adjoint.
    for kind in ["fft1d", "fft2d", "wt1d", "wt2d"]:
        plan = make_plan(kind, 8, 4)
        x = Tensor(rng.standard_normal((8, 4)), requires_grad=True)
        y = apply_plan(x, plan)
        cot = rng.standard_normal(y.shape)
        (y * Tensor(cot)).sum().backward()
        expected = plan.adjoint(cot)
        s.check(
            np.abs(x.grad - expected).max() < 1e-12,
            f"tape backward is not the adjoint for {kind}",
        )

    # Smooth subgraphs vs central differences.
    dense = Dense(6, 5, seeded_rng(1), dtype=np.float64)
    norm = BatchNorm(5, dtype=np.float64)
    norm.eval()
    x64 = Tensor(rng.standard_normal((7, 6)))

    def linear_bn_loss():
        return norm(dense(x64)).mean()

    err = finite_difference_check(linear_bn_loss, dense.parameters() + norm.parameters())
    s.check(err < 1e-5, f"linear+BN finite-difference error {err:.2e}")

    logits = Tensor(rng.standard_normal((5, 4)), requires_grad=True)
    labels = np.array([0, 3, 1, 2, 2])

    def ce_loss():
        return cross_entropy_time_avg(logits, labels)

    err = finite_difference_check(ce_loss, [logits])
    s.check(err < 1e-6, f"cross-entropy finite-difference error {err:.2e}")

    # LIF backward equals the hand-derived surrogate chain, both surrogates.
    for spec in [SurrogateSpec("rectangular", width=1.0), SurrogateSpec("arctan", alpha=2.0)]:
        params = LifParams(tau=2.0, v_th=1.0, v_reset=0.0, surrogate=spec)
        x_vals = np.array([0.4, 1.3, 2.2])
        weights = np.array([0.7, -0.3, 1.1])
        x = Tensor(x_vals.reshape(3, 1), requires_grad=True)
        spikes = lif_sequence(x, params)
        (spikes * Tensor(weights.reshape(3, 1))).sum().backward()
        expected, _ = lif_reference_gradient(x_vals, params, weights)
        s.check(
            np.array_equal(x.grad.reshape(-1), expected),
            f"LIF tape gradient differs from hand chain ({spec.kind})",
        )
    return s.result()


SUITES = [
    suite_dft_oracle,
    suite_parseval,
    suite_reconstruction,
    suite_adjoint,
    suite_ssa_order,
    suite_binarity,
    suite_gradient_checks,
]


def run_all(fast=True):
    return [suite(fast=fast) for suite in SUITES]
