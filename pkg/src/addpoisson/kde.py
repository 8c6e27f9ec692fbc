"""Kernel density estimation baseline evaluated on the diagonal bin grid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_CHUNK = 4096


@dataclass
class KdeModel:
    points: np.ndarray  # (N, |J|) event vectors for one subset
    bandwidth: float
    duration: float
    bins: int

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.size == 0:
            self.points = self.points.reshape(0, max(self.points.shape[-1], 1))
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")

    @property
    def dims(self) -> int:
        return self.points.shape[1]

    def bin_centers(self) -> np.ndarray:
        return (np.arange(1, self.bins + 1) - 0.5) * self.duration / self.bins


def kde_density(model: KdeModel) -> np.ndarray:
    """Product-Gaussian KDE at ``(c, ..., c)`` for every bin center ``c``."""
    h, d = model.bandwidth, model.dims
    c = model.bin_centers()
    dens = np.zeros(len(c))
    for start in range(0, len(model.points), _CHUNK):
        pts = model.points[start:start + _CHUNK]
        z = (c[:, None, None] - pts[None, :, :]) / h
        dens += np.exp(-0.5 * (z * z).sum(axis=2)).sum(axis=1)
    n = max(len(model.points), 1)
    return dens / (n * h ** d * (2 * np.pi) ** (d / 2))


def kde_distribution(model: KdeModel) -> tuple[np.ndarray, np.ndarray, bool]:
    """Return ``(per-bin probabilities, intensity, empty)``.

    Intensity uses the same ``N * M / T`` rescale as the log-linear model.
    With no points both vectors are zero and ``empty`` is set.
    """
    n = len(model.points)
    if n == 0:
        z = np.zeros(model.bins)
        return z, z.copy(), True
    dens = kde_density(model)
    total = dens.sum()
    if not total > 0:
        raise ValueError("kernel mass underflowed on every bin; bandwidth too small")
    prob = dens / total
    return prob, prob * n * model.bins / model.duration, False
