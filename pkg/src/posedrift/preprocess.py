"""Z-score normalization and PCA projection fitted on clean features.

PCA is computed from one SVD of the centered, scaled matrix — no
iterative solver — and each component's sign is fixed by making its
largest-magnitude entry positive, so fits are bit-reproducible.  The
output dimension is the smallest k whose cumulative explained variance
reaches the target ratio (default 0.97).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .features import FEATURE_DIM

logger = logging.getLogger(__name__)

STD_EPSILON = 1e-8


@dataclass(frozen=True)
class FittedScaler:
    mean: np.ndarray  # (d,)
    std: np.ndarray  # (d,), floored at epsilon
    epsilon: float = STD_EPSILON

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


@dataclass(frozen=True)
class FittedPca:
    components: np.ndarray  # (d_out, d), orthonormal rows
    explained_variance: np.ndarray  # (d_out,)
    retained_ratio: float
    d_out: int


def fit(
    features: np.ndarray, variance_target: float = 0.97
) -> tuple[FittedScaler, FittedPca]:
    """Fit scaler and PCA on clean training features (rows are samples)."""
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[1] != FEATURE_DIM:
        raise ValueError(f"expected (N, {FEATURE_DIM}) feature matrix, got {x.shape}")
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least 2 rows to fit")

    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = std < STD_EPSILON
    if constant.any():
        logger.warning(
            "flooring std of %d constant feature column(s) to %g", int(constant.sum()), STD_EPSILON
        )
        std = np.where(constant, STD_EPSILON, std)
    scaler = FittedScaler(mean=mean, std=std)

    z = scaler.apply(x)
    # columns of z are zero-mean by construction; SVD gives the principal axes
    _, s, vt = np.linalg.svd(z, full_matrices=False)
    var = s**2 / n
    total = float(var.sum())
    if total <= 0.0:
        raise ValueError("feature matrix has zero variance")
    cum = np.cumsum(var) / total
    d_out = int(np.searchsorted(cum, variance_target - 1e-12) + 1)
    d_out = min(d_out, vt.shape[0])

    components = vt[:d_out].copy()
    for i in range(d_out):
        j = int(np.argmax(np.abs(components[i])))
        if components[i, j] < 0:
            components[i] = -components[i]

    pca = FittedPca(
        components=components,
        explained_variance=var[:d_out].copy(),
        retained_ratio=float(cum[d_out - 1]),
        d_out=d_out,
    )
    return scaler, pca


def transform(x: np.ndarray, scaler: FittedScaler, pca: FittedPca) -> np.ndarray:
    """Scale then project one feature vector (or a matrix of rows)."""
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1] != scaler.mean.shape[0]:
        raise ValueError(f"expected last dim {scaler.mean.shape[0]}, got {arr.shape}")
    return scaler.apply(arr) @ pca.components.T


def back_project(reduced: np.ndarray, pca: FittedPca) -> np.ndarray:
    """Map reduced vectors back into the scaled feature space."""
    return np.asarray(reduced, dtype=float) @ pca.components
