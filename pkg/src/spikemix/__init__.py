"""Spiking token-mixing transformer with swappable sequence mixers.

The spiking self-attention mixer can be replaced by unparameterized Fourier
or wavelet transforms; both variants train with surrogate gradients through
time. Ships a numpy-backed autodiff engine, a benchmark harness for the
mixers' asymptotic behavior, and a scikit-learn style classifier wrapper.
"""

from .bench import BenchConfig, compare_mixers, fit_loglog_slope, run_benchmark, time_kernel
from .data import Batch, Dataset, batch_iter, encode_static_sequence, load_dataset, synth_generate, write_dataset
from .estimator import SpikformerClassifier
from .layers import BatchNorm, Conv3x3, Dense, DepthwiseConv3x3, MaxPool2x2, Module, batch_norm
from .mixers import LtSublayer, MixerSpec, SsaSublayer, apply_plan, build_mixer, ssa_mix
from .model import (
    ModelConfig,
    Spikformer,
    build_model,
    load_checkpoint,
    param_census,
    save_checkpoint,
)
from .neuron import LifLayer, LifParams, SurrogateSpec, lif_sequence, observe_spikes, surrogate_grad
from .tensor import (
    Parameter,
    ShapeMismatchError,
    Tensor,
    finite_difference_check,
    no_grad,
    seeded_rng,
)
from .train import AdamW, TrainConfig, cosine_lr, cross_entropy_time_avg, evaluate_top1, fit
from .transforms import (
    ComplexTensor,
    TransformPlan,
    WaveletFilter,
    dft_naive_1d,
    dwt_1d,
    fft_1d,
    idwt_1d,
    lt_fft_1d_real,
    lt_fft_2d_real,
    lt_wt_2d,
    make_plan,
)

__version__ = "0.1.0"
