"""Latency and complexity verification for the sequence mixers.

Two measurement modes:

* mixing kernels — just the token-mixing computation (the Q K^T V product
  per head, or the fixed transform) swept over sequence lengths, with a
  log-log least-squares slope fitted per mixer. The attention product should
  fit near 2 (quadratic) and the FFT near 1 (log-linear).

* sub-layer comparison — full mixer sub-layers (projections, normalization,
  spiking neurons included) at a fixed paper-shaped configuration, timed
  forward and forward+backward, with exact parameter counts and an analytic
  activation-byte estimate (sum of live tape tensors, not process RSS).

Timing uses the monotonic performance counter, discards warmup iterations,
and reports median/mean/stddev per point. Timed regions run single-threaded
unless configured otherwise.
"""

import json
import time
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .mixers import MixerSpec, build_mixer, ssa_mix
from .runtime import tune_allocator
from .tensor import Tensor, _toposort, no_grad, seeded_rng
from .transforms import make_plan

__all__ = [
    "BenchConfig",
    "LatencyStats",
    "time_kernel",
    "fit_loglog_slope",
    "mixing_kernel",
    "run_complexity_sweep",
    "compare_mixers",
    "run_benchmark",
    "validate_report",
    "write_report",
    "REPORT_SCHEMA",
]


@dataclass
class BenchConfig:
    mixers: tuple = ("ssa", "fft1d")
    n_values: tuple = (256, 512, 1024, 2048, 4096)
    dim: int = 256
    head_dim: int = 32
    timesteps: int = 1
    batch_size: int = 1
    warmup: int = 3
    iters: int = 20
    reps: int = 1
    threads: int = 1
    ssa_order: str = "qk_first"
    wavelet: str = "haar"
    seed: int = 0

    def __post_init__(self):
        if self.warmup < 3:
            raise ValueError(f"warmup must be >= 3, got {self.warmup}")
        if self.iters < 20:
            raise ValueError(f"iters must be >= 20, got {self.iters}")


@dataclass
class LatencyStats:
    median_ms: float
    mean_ms: float
    stddev_ms: float
    samples: int

    def to_dict(self):
        return {
            "median_ms": self.median_ms,
            "mean_ms": self.mean_ms,
            "stddev_ms": self.stddev_ms,
            "samples": self.samples,
        }


def time_kernel(fn, warmup=3, iters=20, reps=1, threads=1) -> LatencyStats:
    """Median/mean/stddev latency of fn() in ms over reps*iters measured calls."""
    tune_allocator()
    samples = []
    with threadpool_limits(limits=threads):
        for _ in range(max(warmup, 3)):
            fn()
        for _ in range(max(reps, 1)):
            for _ in range(iters):
                t0 = time.perf_counter()
                fn()
                samples.append((time.perf_counter() - t0) * 1000.0)
    arr = np.asarray(samples)
    return LatencyStats(
        median_ms=float(np.median(arr)),
        mean_ms=float(arr.mean()),
        stddev_ms=float(arr.std()),
        samples=len(arr),
    )


def fit_loglog_slope(points) -> float:
    """Least-squares slope of log(latency) vs log(N)."""
    points = sorted(points)
    if len(points) < 4:
        raise ValueError(f"need >= 4 points for a slope fit, got {len(points)}")
    ns = np.array([p[0] for p in points], dtype=np.float64)
    if np.any(np.diff(ns) <= 0):
        raise ValueError("N values must be strictly increasing")
    ys = np.array([p[1] for p in points], dtype=np.float64)
    if np.any(ys <= 0):
        raise ValueError("latencies must be positive")
    x = np.log(ns)
    y = np.log(ys)
    xc = x - x.mean()
    return float((xc * (y - y.mean())).sum() / (xc * xc).sum())


def mixing_kernel(kind, n, cfg: BenchConfig):
    """Closure computing one mixing operation on pre-generated spike inputs.

    The attention kernel loops over heads with single-head tensors so the
    N x N map stays within memory at large N; the transform kernels apply
    the plan to a [T*B, N, D] array.
    """
    rng = seeded_rng(cfg.seed + n)
    t, b, d = cfg.timesteps, cfg.batch_size, cfg.dim
    if kind == "ssa":
        heads = d // cfg.head_dim
        qkv = [
            [
                Tensor((rng.random((t, b, 1, n, cfg.head_dim)) < 0.5).astype(np.float32))
                for _ in range(heads)
            ]
            for _ in range(3)
        ]
        order = cfg.ssa_order

        def run():
            with no_grad():
                for qh, kh, vh in zip(*qkv):
                    ssa_mix(qh, kh, vh, 0.125, order)

        return run
    plan = make_plan(kind, n, d, wavelet=cfg.wavelet)
    x = (rng.random((t * b, n, d)) < 0.5).astype(np.float32)

    def run():
        plan.forward(x)

    return run


def run_complexity_sweep(cfg: BenchConfig) -> dict:
    """Latencies over the N sweep plus a fitted slope per mixer."""
    out = {}
    for kind in cfg.mixers:
        per_n = {}
        for n in cfg.n_values:
            stats = time_kernel(
                mixing_kernel(kind, n, cfg),
                warmup=cfg.warmup, iters=cfg.iters, reps=cfg.reps, threads=cfg.threads,
            )
            per_n[str(n)] = stats.to_dict()
        slope = fit_loglog_slope(
            [(int(n), s["median_ms"]) for n, s in per_n.items()]
        ) if len(per_n) >= 4 else None
        out[kind] = {"latency_by_n": per_n, "slope": slope}
    return out


def _activation_bytes(root: Tensor) -> int:
    """Analytic live-activation accounting: bytes of every tape tensor."""
    return sum(node.data.nbytes for node in _toposort(root))


def _mixer_spec(kind, cfg: BenchConfig) -> MixerSpec:
    return MixerSpec(
        kind=kind, head_dim=cfg.head_dim, order=cfg.ssa_order, wavelet=cfg.wavelet
    )


def compare_mixers(cfg: BenchConfig, n=64, t=4, b=16) -> dict:
    """Sub-layer forward and forward+backward latency, parameter and
    activation accounting, and ratios against the attention baseline."""
    rng = seeded_rng(cfg.seed)
    x_data = (rng.random((t, b, n, cfg.dim)) < 0.5).astype(np.float32)
    results = {}
    for kind in cfg.mixers:
        sublayer = build_mixer(cfg.dim, n, _mixer_spec(kind, cfg), seeded_rng(cfg.seed + 1))
        params = list(sublayer.named_parameters())
        weights = sum(p.size for _, p in params if p.tag == "weight")
        trainable = sum(p.size for _, p in params)

        sublayer.eval()

        def fwd():
            with no_grad():
                sublayer(Tensor(x_data))

        fwd_stats = time_kernel(fwd, warmup=cfg.warmup, iters=cfg.iters,
                                reps=cfg.reps, threads=cfg.threads)

        sublayer.train()

        def fwdbwd():
            out = sublayer(Tensor(x_data))
            out.mean().backward()

        fwdbwd_stats = time_kernel(fwdbwd, warmup=cfg.warmup, iters=cfg.iters,
                                   reps=cfg.reps, threads=cfg.threads)

        out = sublayer(Tensor(x_data))
        act_bytes = _activation_bytes(out)

        results[kind] = {
            "forward": fwd_stats.to_dict(),
            "forward_backward": fwdbwd_stats.to_dict(),
            "param_weights": int(weights),
            "param_trainable": int(trainable),
            "param_bytes": int(sum(p.data.nbytes for _, p in params)),
            "activation_bytes": int(act_bytes),
        }
    if "ssa" in results:
        base_fwd = results["ssa"]["forward"]["median_ms"]
        base_bwd = results["ssa"]["forward_backward"]["median_ms"]
        base_w = results["ssa"]["param_weights"]
        for kind, entry in results.items():
            entry["forward_ratio_vs_ssa"] = entry["forward"]["median_ms"] / base_fwd
            entry["forward_backward_ratio_vs_ssa"] = (
                entry["forward_backward"]["median_ms"] / base_bwd
            )
            entry["param_weights_delta_vs_ssa"] = entry["param_weights"] - base_w
    return {"shape": {"n": n, "d": cfg.dim, "t": t, "b": b}, "mixers": results}


REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["config", "complexity", "comparison", "notes"],
    "properties": {
        "config": {"type": "object"},
        "complexity": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["latency_by_n", "slope"],
                "properties": {
                    "latency_by_n": {
                        "type": "object",
                        "additionalProperties": {
                            "type": "object",
                            "required": ["median_ms", "mean_ms", "stddev_ms", "samples"],
                            "properties": {
                                "median_ms": {"type": "number", "exclusiveMinimum": 0},
                                "mean_ms": {"type": "number", "exclusiveMinimum": 0},
                                "stddev_ms": {"type": "number", "minimum": 0},
                                "samples": {"type": "integer", "minimum": 20},
                            },
                        },
                    },
                    "slope": {"type": ["number", "null"]},
                },
            },
        },
        "comparison": {
            "type": "object",
            "required": ["shape", "mixers"],
            "properties": {
                "shape": {"type": "object"},
                "mixers": {
                    "type": "object",
                    "additionalProperties": {
                        "type": "object",
                        "required": [
                            "forward",
                            "forward_backward",
                            "param_weights",
                            "param_trainable",
                            "param_bytes",
                            "activation_bytes",
                        ],
                    },
                },
            },
        },
        "notes": {"type": "string"},
    },
}


def validate_report(report: dict) -> None:
    import jsonschema

    jsonschema.validate(report, REPORT_SCHEMA)


def run_benchmark(cfg: BenchConfig, compare_shape=(64, 4, 16)) -> dict:
    n, t, b = compare_shape
    report = {
        "config": {
            "mixers": list(cfg.mixers),
            "n_values": list(cfg.n_values),
            "dim": cfg.dim,
            "head_dim": cfg.head_dim,
            "timesteps": cfg.timesteps,
            "batch_size": cfg.batch_size,
            "warmup": cfg.warmup,
            "iters": cfg.iters,
            "reps": cfg.reps,
            "threads": cfg.threads,
            "ssa_order": cfg.ssa_order,
            "seed": cfg.seed,
        },
        "complexity": run_complexity_sweep(cfg),
        "comparison": compare_mixers(cfg, n=n, t=t, b=b),
        "notes": (
            "Memory figures are analytic byte accounting (parameters plus live "
            "tape activations), not process RSS. Timed regions are "
            "single-threaded unless 'threads' says otherwise."
        ),
    }
    validate_report(report)
    return report


def write_report(report: dict, path, csv_path=None) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if csv_path:
        with open(csv_path, "w") as fh:
            fh.write("mixer,n,median_ms,mean_ms,stddev_ms,samples\n")
            for mixer, entry in report["complexity"].items():
                for n, stats in entry["latency_by_n"].items():
                    fh.write(
                        f"{mixer},{n},{stats['median_ms']},{stats['mean_ms']},"
                        f"{stats['stddev_ms']},{stats['samples']}\n"
                    )
