"""Principal-component projection of latent trajectories and metric export."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PcaModel:
    """Mean, orthonormal principal axes (rows) and explained-variance ratios."""

    mean: np.ndarray
    axes: np.ndarray
    explained_variance_ratio: np.ndarray


def pca_fit(points: np.ndarray, k: int) -> PcaModel:
    """Top-k principal axes of a point cloud (n, d).

    Axes are eigenvectors of the covariance matrix, ordered by decreasing
    variance; each axis is sign-fixed so its first nonzero component is
    positive.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"points must be (n, d), got {x.shape}")
    n, d = x.shape
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= {d}, got k={k}")
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    mean = x.mean(axis=0)
    centered = x - mean
    denom = max(n - 1, 1)
    cov = centered.T @ centered / denom
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    axes = eigvecs[:, order].T[:k].copy()
    for i in range(k):
        nz = np.nonzero(np.abs(axes[i]) > 1e-12)[0]
        if len(nz) and axes[i, nz[0]] < 0:
            axes[i] = -axes[i]
    total = eigvals.sum()
    ratios = eigvals[:k] / total if total > 0 else np.zeros(k)
    return PcaModel(mean=mean, axes=axes, explained_variance_ratio=ratios)


def pca_project(model: PcaModel, points: np.ndarray) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.shape[-1] != model.mean.shape[0]:
        raise ValueError(
            f"dimension mismatch: points have {x.shape[-1]}, model has {model.mean.shape[0]}")
    return (x - model.mean) @ model.axes.T


def trajectory_projection(z_true: np.ndarray, z_pred: np.ndarray) -> np.ndarray:
    """Project two latent tracks with one shared 2D PCA basis.

    The model is fitted on the union of both tracks; returns rows
    (t, x_true, y_true, x_pred, y_pred).
    """
    z_true = np.asarray(z_true, dtype=float)
    z_pred = np.asarray(z_pred, dtype=float)
    if z_true.shape != z_pred.shape:
        raise ValueError(f"track shapes differ: {z_true.shape} vs {z_pred.shape}")
    model = pca_fit(np.concatenate([z_true, z_pred]), k=2)
    a = pca_project(model, z_true)
    b = pca_project(model, z_pred)
    t = np.arange(len(z_true), dtype=float)[:, None]
    return np.concatenate([t, a, b], axis=1)


def write_csv(path, header: list[str], rows) -> None:
    """Deterministic CSV: full-precision repr for floats, no padding."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)
