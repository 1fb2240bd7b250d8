"""Scikit-learn compatible classifier wrapping the spiking transformer.

The estimator follows sklearn conventions (constructor stores hyperparameters
verbatim; fitted state carries trailing underscores) so it composes with
`clone`, pipelines, and model selection utilities.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .data import Dataset
from .mixers import MixerSpec
from .model import ModelConfig, build_model
from .neuron import LifParams, SurrogateSpec
from .tensor import no_grad
from .train import TrainConfig, evaluate_top1, fit
from .validation import check_image_array, check_labels

__all__ = ["SpikformerClassifier"]


class SpikformerClassifier(BaseEstimator, ClassifierMixin):
    """Spiking token-mixing transformer for image classification.

    Parameters mirror the model/training configs: ``mixer`` selects the
    sequence mixer ("ssa", "fft1d", "fft2d", "wt1d", "wt2d",
    "wt2d_combination"), ``timesteps`` the spiking simulation length.
    Inputs to fit/predict are [n, C, H, W] static images (repeated over
    time internally) or [n, T, C, H, W] sequences.
    """

    def __init__(self, mixer="ssa", wavelet="haar", ssa_order="kv_first",
                 layers=2, dim=64, timesteps=4, patch=4, mlp_ratio=4,
                 head_dim=32, scale=0.125, surrogate="rectangular",
                 epochs=20, batch_size=16, lr=5e-4, weight_decay=0.01,
                 seed=0):
        self.mixer = mixer
        self.wavelet = wavelet
        self.ssa_order = ssa_order
        self.layers = layers
        self.dim = dim
        self.timesteps = timesteps
        self.patch = patch
        self.mlp_ratio = mlp_ratio
        self.head_dim = head_dim
        self.scale = scale
        self.surrogate = surrogate
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.seed = seed

    def _model_config(self, X, n_classes):
        has_time = X.ndim == 5
        if has_time and X.shape[1] != self.timesteps:
            raise ValueError(
                f"X carries T={X.shape[1]} frames but timesteps={self.timesteps}"
            )
        if has_time:
            _, c, h, w = X.shape[1:]
        else:
            c, h, w = X.shape[1:]
        head_dim = min(self.head_dim, self.dim)
        return ModelConfig(
            layers=self.layers,
            dim=self.dim,
            timesteps=self.timesteps,
            channels=c,
            height=h,
            width=w,
            patch=self.patch,
            num_classes=n_classes,
            mlp_ratio=self.mlp_ratio,
            mixer=MixerSpec(
                kind=self.mixer,
                head_dim=head_dim,
                scale=self.scale,
                order=self.ssa_order,
                wavelet=self.wavelet,
            ),
            lif=LifParams(surrogate=SurrogateSpec(kind=self.surrogate)),
        )

    def fit(self, X, y):
        X = check_image_array(X)
        y = check_labels(y, len(X))
        self.classes_ = np.unique(y)
        encoded = np.searchsorted(self.classes_, y).astype(np.uint16)
        cfg = self._model_config(X, len(self.classes_))
        self.model_ = build_model(cfg, seed=self.seed)
        train_cfg = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            weight_decay=self.weight_decay,
            seed=self.seed,
        )
        ds = Dataset(X, encoded, n_classes=len(self.classes_))
        self.history_ = fit(self.model_, ds, None, train_cfg)
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def _logits(self, X):
        check_is_fitted(self, "model_")
        X = check_image_array(X)
        cfg = self.model_.cfg
        self.model_.eval()
        logits = []
        with no_grad():
            for start in range(0, len(X), self.batch_size):
                chunk = X[start:start + self.batch_size]
                if chunk.ndim == 4:
                    seq = np.broadcast_to(chunk, (cfg.timesteps,) + chunk.shape)
                else:
                    seq = np.moveaxis(chunk, 1, 0)
                out = self.model_.forward(np.ascontiguousarray(seq))
                logits.append(out.data)
        return np.concatenate(logits, axis=0)

    def decision_function(self, X):
        return self._logits(X)

    def predict_proba(self, X):
        z = self._logits(X)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[self._logits(X).argmax(axis=1)]

    def evaluate(self, dataset: Dataset) -> float:
        """Top-1 accuracy on an in-memory Dataset."""
        check_is_fitted(self, "model_")
        return evaluate_top1(self.model_, dataset)
