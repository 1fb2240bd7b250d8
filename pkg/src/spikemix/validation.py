"""Input validation helpers for the estimator and data entry points."""

import numpy as np

__all__ = ["check_image_array", "check_labels"]


def check_image_array(X, name="X"):
    """Validate a [n,C,H,W] or [n,T,C,H,W] image array; returns float32."""
    X = np.asarray(X)
    if X.ndim not in (4, 5):
        raise ValueError(
            f"{name} must have shape [n, C, H, W] or [n, T, C, H, W], got {X.shape}"
        )
    if X.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    X = X.astype(np.float32, copy=False)
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_labels(y, n_samples, name="y"):
    """Validate integer class labels aligned with the sample count."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {y.shape}")
    if len(y) != n_samples:
        raise ValueError(f"{name} has {len(y)} entries for {n_samples} samples")
    if not np.issubdtype(y.dtype, np.integer):
        rounded = np.round(np.asarray(y, dtype=np.float64))
        if not np.array_equal(rounded, np.asarray(y, dtype=np.float64)):
            raise ValueError(f"{name} must contain integer class labels")
        y = rounded.astype(np.int64)
    return y.astype(np.int64)
