"""Spiking token-mixing transformer: patch stem, position embedding,
encoder stack with swappable mixers, pooled classification head.

Forward layout is [T, B, N, D] throughout the encoder (time steps, batch,
patches, features). Residual sums are left as integer-valued tensors (binary
plus binary can reach 2) feeding the next sub-layer's BatchNorm; there is no
re-binarization between sub-layers.
"""

import dataclasses
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .layers import BatchNorm, Conv3x3, Dense, DepthwiseConv3x3, MaxPool2x2, Module
from .mixers import MixerSpec, build_mixer
from .neuron import LifLayer, LifParams, SurrogateSpec
from .tensor import ShapeMismatchError, Tensor, seeded_rng

__all__ = [
    "ModelConfig",
    "Spikformer",
    "build_model",
    "param_census",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]

CHECKPOINT_MAGIC = b"SPKM"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Malformed checkpoint file."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; names follow the depth-dim convention
    (e.g. layers=2, dim=256 is the "2-256" model)."""

    layers: int = 2
    dim: int = 64
    timesteps: int = 4
    channels: int = 1
    height: int = 16
    width: int = 16
    patch: int = 4
    num_classes: int = 2
    mlp_ratio: int = 4
    mixer: MixerSpec = field(default_factory=MixerSpec)
    lif: LifParams = field(default_factory=LifParams)
    dtype: str = "float32"

    def __post_init__(self):
        if self.patch < 2 or self.patch & (self.patch - 1):
            raise ValueError(f"patch size must be a power of 2 >= 2, got {self.patch}")
        if self.height % self.patch or self.width % self.patch:
            raise ValueError(
                f"image {self.height}x{self.width} not divisible by patch {self.patch}"
            )
        if self.mixer.kind == "ssa" and self.dim % self.mixer.head_dim:
            raise ValueError(f"dim {self.dim} not divisible by head_dim {self.mixer.head_dim}")
        if self.mixer.kind in ("fft1d", "fft2d") and self.seq_len & (self.seq_len - 1):
            raise ValueError(f"fft mixers need a power-of-2 sequence length, got N={self.seq_len}")

    @property
    def seq_len(self) -> int:
        return (self.height // self.patch) * (self.width // self.patch)

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        mixer = MixerSpec(**data.pop("mixer"))
        lif_raw = dict(data.pop("lif"))
        surrogate = SurrogateSpec(**lif_raw.pop("surrogate"))
        lif = LifParams(surrogate=surrogate, **lif_raw)
        return cls(mixer=mixer, lif=lif, **data)


class SpsBlock(Module):
    """conv 3x3 -> BN -> SN -> 2x2 max-pool."""

    def __init__(self, cin, cout, rng, lif, dtype):
        super().__init__()
        self.conv = Conv3x3(cin, cout, rng, dtype=dtype)
        self.norm = BatchNorm(cout, channel_axis=1, dtype=dtype)
        self.sn = LifLayer(lif, label="sps.sn")
        self.pool = MaxPool2x2()

    def forward(self, x: Tensor, t_steps: int) -> Tensor:
        y = self.norm(self.conv(x))
        tb, c, h, w = y.shape
        y = y.reshape((t_steps, tb // t_steps, c, h, w))
        y = self.sn(y)
        return self.pool(y.reshape((tb, c, h, w)))


class Sps(Module):
    """Patch-splitting stem: log2(patch) conv blocks, channels ramping
    geometrically up to the model width, spatial halved per block."""

    def __init__(self, cfg: ModelConfig, rng):
        super().__init__()
        k = cfg.patch.bit_length() - 1
        if cfg.dim % (1 << (k - 1)):
            raise ValueError(f"dim {cfg.dim} must be divisible by {1 << (k - 1)} for patch {cfg.patch}")
        widths = [cfg.channels] + [cfg.dim >> (k - 1 - i) for i in range(k)]
        self.blocks = [
            SpsBlock(widths[i], widths[i + 1], rng, cfg.lif, cfg.np_dtype) for i in range(k)
        ]

    def forward(self, images: Tensor) -> Tensor:
        t, b, c, h, w = images.shape
        x = images.reshape((t * b, c, h, w))
        for block in self.blocks:
            x = block(x, t)
        tb, d, gh, gw = x.shape
        return x.reshape((t, b, d, gh * gw)).permute((0, 1, 3, 2))


class Cpe(Module):
    """Conditional position embedding: depthwise 3x3 over the patch grid."""

    def __init__(self, cfg: ModelConfig, rng):
        super().__init__()
        self.conv = DepthwiseConv3x3(cfg.dim, rng, dtype=cfg.np_dtype)
        self.norm = BatchNorm(cfg.dim, channel_axis=1, dtype=cfg.np_dtype)
        self.sn = LifLayer(cfg.lif, label="cpe.sn")

    def forward(self, patches: Tensor) -> Tensor:
        t, b, n, d = patches.shape
        grid = int(round(n**0.5))
        if grid * grid != n:
            raise ShapeMismatchError(f"position embedding needs a square patch grid, got N={n}")
        x = patches.permute((0, 1, 3, 2)).reshape((t * b, d, grid, grid))
        x = self.norm(self.conv(x))
        x = x.reshape((t, b, d, grid, grid))
        x = self.sn(x)
        return x.reshape((t, b, d, n)).permute((0, 1, 3, 2))


class MlpSublayer(Module):
    """Dense(D->rD) -> BN -> SN -> Dense(rD->D) -> BN -> SN."""

    def __init__(self, dim, ratio, rng, lif, dtype):
        super().__init__()
        hidden = dim * ratio
        self.fc1 = Dense(dim, hidden, rng, dtype=dtype)
        self.norm1 = BatchNorm(hidden, dtype=dtype)
        self.sn1 = LifLayer(lif, label="mlp.sn1")
        self.fc2 = Dense(hidden, dim, rng, dtype=dtype)
        self.norm2 = BatchNorm(dim, dtype=dtype)
        self.sn2 = LifLayer(lif, label="mlp.sn2")

    def forward(self, x: Tensor) -> Tensor:
        x = self.sn1(self.norm1(self.fc1(x)))
        return self.sn2(self.norm2(self.fc2(x)))


class EncoderLayer(Module):
    """Mixer and MLP sub-layers, each wrapped in a residual connection."""

    def __init__(self, cfg: ModelConfig, rng):
        super().__init__()
        self.mixer = build_mixer(cfg.dim, cfg.seq_len, cfg.mixer, rng, lif=cfg.lif, dtype=cfg.np_dtype)
        self.mlp = MlpSublayer(cfg.dim, cfg.mlp_ratio, rng, cfg.lif, cfg.np_dtype)

    def forward(self, x: Tensor) -> Tensor:
        x = self.mixer(x) + x
        return self.mlp(x) + x


class Spikformer(Module):
    """Full model: stem, position embedding, encoder stack, pooled head."""

    def __init__(self, cfg: ModelConfig, rng):
        super().__init__()
        self.cfg = cfg
        self.sps = Sps(cfg, rng)
        self.cpe = Cpe(cfg, rng)
        self.layers = [EncoderLayer(cfg, rng) for _ in range(cfg.layers)]
        self.head = Dense(cfg.dim, cfg.num_classes, rng, dtype=cfg.np_dtype, bias=True)

    def forward(self, images) -> Tensor:
        """[T,B,C,H,W] image sequence -> [B, num_classes] logits.

        Sequence features are average-pooled over patches per time step, fed
        through the head per time step, and the logits averaged over T.
        """
        if not isinstance(images, Tensor):
            images = Tensor(np.asarray(images, dtype=self.cfg.np_dtype))
        cfg = self.cfg
        t, b, c, h, w = images.shape
        if (t, c, h, w) != (cfg.timesteps, cfg.channels, cfg.height, cfg.width):
            raise ShapeMismatchError(
                f"input {images.shape} does not match config "
                f"[T={cfg.timesteps}, B, C={cfg.channels}, H={cfg.height}, W={cfg.width}]"
            )
        patches = self.sps(images)
        x = patches + self.cpe(patches)
        for layer in self.layers:
            x = layer(x)
        pooled = x.mean(axis=2)          # [T, B, D]
        logits_t = self.head(pooled)     # [T, B, K]
        return logits_t.mean(axis=0)     # [B, K]


def build_model(cfg: ModelConfig, seed: int = 0) -> Spikformer:
    return Spikformer(cfg, seeded_rng(seed))


def _census_group(name: str) -> str:
    parts = name.split(".")
    if parts[0] == "layers" and len(parts) >= 3:
        return ".".join(parts[:3])
    return parts[0]


def param_census(model: Spikformer) -> dict:
    """Exact trainable-parameter counts, grouped by module and sub-layer.

    The headline ``total_weights`` counts dense/conv weights (and head bias);
    normalization affine parameters are tallied separately, mirroring how the
    mixer comparison excludes them. ``mixer_weights`` is the weight count
    inside mixer sub-layers: 4*D^2 per layer for attention, 0 for the fixed
    transforms.
    """
    by_module: dict = {}
    total_weights = 0
    total_bn = 0
    mixer_weights = 0
    for name, p in model.named_parameters():
        group = by_module.setdefault(_census_group(name), {"weights": 0, "bn_affine": 0})
        kind = "bn_affine" if p.tag == "bn_affine" else "weights"
        group[kind] += p.size
        if kind == "bn_affine":
            total_bn += p.size
        else:
            total_weights += p.size
            if ".mixer." in f".{name}":
                mixer_weights += p.size
    return {
        "by_module": by_module,
        "total_weights": total_weights,
        "total_bn_affine": total_bn,
        "total_trainable": total_weights + total_bn,
        "mixer_weights": mixer_weights,
    }


def save_checkpoint(model: Spikformer, path) -> None:
    """Write magic, version, config JSON, then one record per named tensor:
    (name length, name bytes, rank, dims, little-endian float32 data)."""
    entries = list(model.named_parameters()) + [
        (name, buf) for name, buf in model.named_buffers()
    ]
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        cfg_json = json.dumps(model.cfg.to_dict(), sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(cfg_json)))
        fh.write(cfg_json)
        for name, value in entries:
            data = value.data if isinstance(value, Tensor) else value
            arr = np.ascontiguousarray(data, dtype="<f4")
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def _read_exact(fh, count, what):
    data = fh.read(count)
    if len(data) != count:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path) -> Spikformer:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (cfg_len,) = struct.unpack("<I", _read_exact(fh, 4, "config length"))
        cfg = ModelConfig.from_dict(json.loads(_read_exact(fh, cfg_len, "config")))
        model = build_model(cfg, seed=0)
        params = dict(model.named_parameters())
        buffers = dict(model.named_buffers())
        seen = set()
        while True:
            head = fh.read(4)
            if not head:
                break
            (name_len,) = struct.unpack("<I", head)
            name = _read_exact(fh, name_len, "tensor name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, "rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "dims"))
            count = int(np.prod(dims)) if rank else 1
            raw = _read_exact(fh, 4 * count, f"data for {name}")
            arr = np.frombuffer(raw, dtype="<f4").reshape(dims)
            if name in params:
                if params[name].shape != arr.shape:
                    raise CheckpointError(
                        f"shape mismatch for {name!r}: file {arr.shape} vs model {params[name].shape}"
                    )
                params[name].data = arr.astype(cfg.np_dtype)
                params[name].zero_grad()
            elif name in buffers:
                buffers[name][...] = arr.astype(buffers[name].dtype)
            else:
                raise CheckpointError(f"checkpoint names unknown tensor {name!r}")
            seen.add(name)
        missing = (set(params) | set(buffers)) - seen
        if missing:
            raise CheckpointError(f"checkpoint missing tensors: {sorted(missing)[:5]}")
    return model
