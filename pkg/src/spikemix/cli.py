"""Command-line entry point: gen-data | train | eval | bench | verify.

Every run resolves its configuration as CLI flags over config-file values
over built-in defaults, and writes the resolved key=value manifest beside
its outputs so any run is reproducible from the manifest alone. Exit codes:
0 success, 1 runtime failure, 2 usage error, 3 verification failure.
"""

import argparse
import os
import sys
from pathlib import Path

__version__ = "0.1.0"

_MIXERS = ["ssa", "fft1d", "fft2d", "wt1d", "wt2d", "wt2d-combination"]
_WAVELETS = ["haar", "db1", "bior1.1", "rbio1.1"]

# (flag, type, default) per subcommand; None defaults mean required-or-derived.
_SPEC = {
    "gen-data": [
        ("task", str, "bars"),
        ("out", str, None),
        ("seed", int, 0),
        ("samples", int, 400),
        ("height", int, 16),
        ("width", int, 16),
        ("frames", int, 4),
        ("noise", float, 0.1),
    ],
    "train": [
        ("out", str, None),
        ("seed", int, 0),
        ("mixer", str, "ssa"),
        ("wavelet", str, "haar"),
        ("ssa-order", str, "kv_first"),
        ("layers", int, 2),
        ("dim", int, 64),
        ("timesteps", int, 4),
        ("patch", int, 4),
        ("epochs", int, 20),
        ("batch", int, 16),
        ("lr", float, 5e-4),
        ("wd", float, 0.01),
        ("task", str, "bars"),
        ("data", str, ""),
        ("eval-data", str, ""),
        ("samples", int, 400),
        ("eval-samples", int, 200),
        ("height", int, 16),
        ("width", int, 16),
    ],
    "eval": [
        ("checkpoint", str, None),
        ("data", str, None),
        ("out", str, ""),
        ("batch", int, 64),
    ],
    "bench": [
        ("out", str, None),
        ("seed", int, 0),
        ("mixers", str, "ssa,fft1d"),
        ("n", str, "256,512,1024,2048,4096"),
        ("dim", int, 256),
        ("timesteps", int, 1),
        ("batch", int, 1),
        ("warmup", int, 3),
        ("iters", int, 20),
        ("reps", int, 1),
        ("ssa-order", str, "qk_first"),
        ("wavelet", str, "haar"),
        ("csv", int, 0),
    ],
    "verify": [
        ("fast", int, 1),
    ],
}


class UsageError(ValueError):
    pass


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="spikemix",
        description="Spiking token-mixing transformer: data, training, benchmarks, verification.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    help_text = {
        "gen-data": "generate a synthetic SPKD dataset",
        "train": "train a model and write checkpoint + JSONL metrics",
        "eval": "report top-1 accuracy of a checkpoint on a dataset",
        "bench": "time mixers, fit complexity slopes, write a JSON report",
        "verify": "run the oracle/invariant suites",
    }
    for command, entries in _SPEC.items():
        p = sub.add_parser(command, help=help_text[command])
        p.add_argument("--config", type=str, default=None,
                       help="key=value file; flags override file values")
        for flag, ftype, default in entries:
            kwargs = {"type": ftype, "default": None}
            if flag == "mixer":
                kwargs["choices"] = _MIXERS
            if flag == "wavelet":
                kwargs["choices"] = _WAVELETS
            if flag == "ssa-order":
                kwargs["choices"] = ["qk-first", "kv-first", "qk_first", "kv_first"]
            help_default = "required" if default is None else f"default: {default}"
            kwargs["help"] = help_default
            p.add_argument(f"--{flag}", **kwargs)
    return parser


def parse_config_file(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _resolve(args, command) -> dict:
    file_values = {}
    if args.config:
        file_values = parse_config_file(args.config)
    resolved = {}
    for flag, ftype, default in _SPEC[command]:
        attr = flag.replace("-", "_")
        value = getattr(args, attr)
        if value is None and flag in file_values:
            value = ftype(file_values[flag])
        if value is None:
            value = default
        if value is None:
            raise UsageError(f"--{flag} is required for {command}")
        resolved[flag] = value
    if "ssa-order" in resolved:
        resolved["ssa-order"] = resolved["ssa-order"].replace("-", "_")
    if "mixer" in resolved:
        resolved["mixer"] = resolved["mixer"].replace("-", "_")
    return resolved


def _write_manifest(out_dir: Path, command: str, resolved: dict) -> None:
    lines = [f"command={command}", f"version={__version__}"]
    lines += [f"{key}={resolved[key]}" for key in sorted(resolved)]
    (out_dir / "manifest.txt").write_text("\n".join(lines) + "\n")


def _cap_threads(command):
    raw = os.environ.get("SPIKEMIX_THREADS", "")
    if raw:
        limit = int(raw)
    elif command == "bench":
        limit = 1
    else:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(limit, 1))


def _ensure_out(resolved) -> Path:
    out = Path(resolved["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_gen_data(resolved) -> int:
    from .data import synth_generate, write_dataset

    out = _ensure_out(resolved)
    ds = synth_generate(
        resolved["task"],
        resolved["samples"],
        height=resolved["height"],
        width=resolved["width"],
        t_steps=resolved["frames"],
        seed=resolved["seed"],
        noise_sigma=resolved["noise"],
    )
    write_dataset(ds, out / "dataset.spkd")
    _write_manifest(out, "gen-data", resolved)
    print(f"wrote {len(ds)} samples to {out / 'dataset.spkd'}")
    return 0


def _load_or_synth(resolved, which):
    from .data import load_dataset, synth_generate

    path = resolved["data"] if which == "train" else resolved["eval-data"]
    if path:
        return load_dataset(path)
    seed = resolved["seed"] if which == "train" else resolved["seed"] + 1000003
    n = resolved["samples"] if which == "train" else resolved["eval-samples"]
    return synth_generate(
        resolved["task"], n,
        height=resolved["height"], width=resolved["width"],
        t_steps=resolved["timesteps"], seed=seed,
    )


def _cmd_train(resolved) -> int:
    from .mixers import MixerSpec
    from .model import ModelConfig, build_model, save_checkpoint
    from .train import TrainConfig, evaluate_top1, fit

    out = _ensure_out(resolved)
    train_ds = _load_or_synth(resolved, "train")
    eval_ds = _load_or_synth(resolved, "eval")
    channels = train_ds.images.shape[-3]
    height, width = train_ds.images.shape[-2:]
    cfg = ModelConfig(
        layers=resolved["layers"],
        dim=resolved["dim"],
        timesteps=resolved["timesteps"],
        channels=channels,
        height=height,
        width=width,
        patch=resolved["patch"],
        num_classes=train_ds.n_classes,
        mixer=MixerSpec(
            kind=resolved["mixer"],
            head_dim=min(32, resolved["dim"]),
            order=resolved["ssa-order"],
            wavelet=resolved["wavelet"],
        ),
    )
    model = build_model(cfg, seed=resolved["seed"])
    train_cfg = TrainConfig(
        epochs=resolved["epochs"],
        batch_size=resolved["batch"],
        lr=resolved["lr"],
        weight_decay=resolved["wd"],
        seed=resolved["seed"],
    )
    _write_manifest(out, "train", resolved)
    history = fit(model, train_ds, eval_ds, train_cfg, metrics_path=out / "metrics.jsonl")
    save_checkpoint(model, out / "model.spkm")
    final_eval = history[-1]["eval_acc"] if history else None
    top1 = final_eval if final_eval is not None else evaluate_top1(model, eval_ds)
    print(f"final eval top-1: {top1:.4f} over {len(history)} epochs")
    return 0


def _cmd_eval(resolved) -> int:
    from .data import load_dataset
    from .model import load_checkpoint
    from .train import evaluate_top1

    model = load_checkpoint(resolved["checkpoint"])
    ds = load_dataset(resolved["data"])
    acc = evaluate_top1(model, ds, batch_size=resolved["batch"])
    print(f"top-1 accuracy: {acc:.4f}")
    if resolved["out"]:
        out = _ensure_out(resolved)
        _write_manifest(out, "eval", resolved)
        (out / "eval.txt").write_text(f"top1={acc}\n")
    return 0


def _cmd_bench(resolved) -> int:
    from .bench import BenchConfig, run_benchmark, write_report

    out = _ensure_out(resolved)
    threads_raw = os.environ.get("SPIKEMIX_THREADS", "")
    cfg = BenchConfig(
        mixers=tuple(m.strip().replace("-", "_") for m in resolved["mixers"].split(",") if m.strip()),
        n_values=tuple(int(n) for n in resolved["n"].split(",") if n.strip()),
        dim=resolved["dim"],
        timesteps=resolved["timesteps"],
        batch_size=resolved["batch"],
        warmup=resolved["warmup"],
        iters=resolved["iters"],
        reps=resolved["reps"],
        threads=int(threads_raw) if threads_raw else 1,
        ssa_order=resolved["ssa-order"],
        wavelet=resolved["wavelet"],
        seed=resolved["seed"],
    )
    report = run_benchmark(cfg)
    write_report(report, out / "report.json",
                 csv_path=(out / "samples.csv") if resolved["csv"] else None)
    _write_manifest(out, "bench", resolved)
    for mixer, entry in report["complexity"].items():
        print(f"{mixer}: slope={entry['slope']}")
    print(f"report written to {out / 'report.json'}")
    return 0


def _cmd_verify(resolved) -> int:
    from .verify import run_all

    results = run_all(fast=bool(resolved["fast"]))
    failed_total = 0
    for result in results:
        status = "ok" if result["failed"] == 0 else "FAIL"
        print(f"[{status}] {result['name']}: {result['passed']} passed, {result['failed']} failed")
        for message in result["failures"]:
            print(f"    - {message}")
        failed_total += result["failed"]
    return 0 if failed_total == 0 else 3


_HANDLERS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "verify": _cmd_verify,
}


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 for --help/--version
        return int(exc.code or 0)
    try:
        resolved = _resolve(args, args.command)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    from .runtime import tune_allocator

    tune_allocator()
    limiter = _cap_threads(args.command)
    try:
        return _HANDLERS[args.command](resolved)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        if limiter is not None:
            limiter.unregister()


def main() -> None:
    sys.exit(run())
