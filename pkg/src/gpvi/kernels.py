"""RBF kernel blocks and the median-heuristic bandwidth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

# Below this median distance the bandwidth falls back to 1.0.
_DEGENERATE_MEDIAN = 1e-12


@dataclass
class KernelBatch:
    values: np.ndarray  # (n', n): k(z'_i, z_j)
    grads: np.ndarray   # (n', n, d): grad wrt z'_i of k(z'_i, z_j)
    bandwidth: float


def median_bandwidth(samples: np.ndarray) -> float:
    """h = med^2 / ln(n), med taken over distinct unordered pairs.

    Falls back to 1.0 when all samples (nearly) coincide.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    n = samples.shape[0]
    if n < 2:
        raise ValueError(f"median bandwidth needs at least 2 samples, got {n}")
    med = float(np.median(pdist(samples)))
    if med < _DEGENERATE_MEDIAN:
        return 1.0
    return med * med / np.log(n)


def rbf_batch(zprime: np.ndarray, z: np.ndarray, h: float) -> KernelBatch:
    """k(z', z) = exp(-|z' - z|^2 / h) and its gradient in the first argument."""
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    zprime = np.atleast_2d(np.asarray(zprime, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if zprime.shape[1] != z.shape[1]:
        raise ValueError(f"dimension mismatch: {zprime.shape[1]} vs {z.shape[1]}")
    diff = zprime[:, None, :] - z[None, :, :]
    values = np.exp(-np.einsum("ijk,ijk->ij", diff, diff) / h)
    grads = (-2.0 / h) * diff * values[:, :, None]
    return KernelBatch(values=values, grads=grads, bandwidth=float(h))
