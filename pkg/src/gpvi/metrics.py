"""Posterior-fit and uncertainty metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .tensor_core import MlpSpec


@dataclass
class FitReport:
    mean_error: float
    cov_error: float            # Frobenius
    cov_error_spectral: float
    cov_error_rel: float        # Frobenius / |true_cov|_F
    convention: str = "analytic-posterior"


def linear_sampler_moments(W, b, lam: float = 0.0, k: int | None = None):
    """Mean and covariance of ``W z[:k] + b + lam z`` for ``z ~ N(0, I_d)``.

    ``W`` is ``(d, k)``; with ``lam=0`` and a square ``W`` this is the plain
    linear sampler ``W z + b`` with covariance ``W W^T``.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    b = np.asarray(b, dtype=float)
    d = b.shape[0]
    k = W.shape[1] if k is None else k
    if W.shape != (d, k):
        raise ValueError(f"W must be ({d}, {k}), got {W.shape}")
    M = lam * np.eye(d)
    M[:, :k] += W
    return b.copy(), M @ M.T


def fit_errors(est_mean, est_cov, true_mean, true_cov, convention="analytic-posterior") -> FitReport:
    est_mean, true_mean = np.asarray(est_mean, float), np.asarray(true_mean, float)
    est_cov, true_cov = np.asarray(est_cov, float), np.asarray(true_cov, float)
    if est_mean.shape != true_mean.shape or est_cov.shape != true_cov.shape:
        raise ValueError("estimate and truth have different shapes")
    diff = est_cov - true_cov
    fro = float(np.linalg.norm(diff))
    tnorm = float(np.linalg.norm(true_cov))
    return FitReport(
        mean_error=float(np.linalg.norm(est_mean - true_mean)),
        cov_error=fro,
        cov_error_spectral=float(np.linalg.norm(diff, 2)) if diff.size else 0.0,
        cov_error_rel=fro / tnorm if tnorm > 0 else float("inf") if fro > 0 else 0.0,
        convention=convention,
    )


def empirical_moments(samples):
    samples = np.asarray(samples, dtype=float)
    return samples.mean(axis=0), np.cov(samples, rowvar=False, bias=False)


def predictive_std_grid(probs: np.ndarray) -> np.ndarray:
    """Mean over classes of the across-sample std of predicted probabilities.

    ``probs`` is ``(S, G, C)``; the std uses the population (1/S) convention.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.shape[0] < 2:
        raise ValueError("need at least two sampled networks")
    # shifting by one sample keeps identical draws at exactly zero spread
    return (probs - probs[:1]).std(axis=0).mean(axis=-1)


def predictive_std_grid_from_params(sampled_params, net_spec: MlpSpec, grid, target):
    """Convenience wrapper: runs ``target.predict`` then :func:`predictive_std_grid`."""
    if target.net_spec != net_spec:
        raise ValueError("target network spec differs from net_spec")
    return predictive_std_grid(target.predict(sampled_params, grid))


def ece(confidences, correct, bins: int = 15) -> float:
    """Expected calibration error with equal-width confidence bins."""
    conf = np.asarray(confidences, dtype=float).ravel()
    corr = np.asarray(correct, dtype=float).ravel()
    if conf.shape != corr.shape:
        raise ValueError("confidences and correctness flags differ in length")
    if conf.size == 0:
        return 0.0
    if conf.min() < 0 or conf.max() > 1:
        raise ValueError("confidences must lie in [0, 1]")
    # bin m covers (m/M, (m+1)/M]; confidence 0 goes to the first bin
    idx = np.clip(np.ceil(conf * bins).astype(int) - 1, 0, bins - 1)
    total = 0.0
    for m in range(bins):
        sel = idx == m
        if sel.any():
            total += sel.sum() * abs(corr[sel].mean() - conf[sel].mean())
    return float(total / conf.size)


def auroc_on_variance(inlier_vars, outlier_vars) -> float:
    """Mann-Whitney AUROC with outliers as positives and ties counted 1/2."""
    a = np.asarray(inlier_vars, dtype=float).ravel()
    b = np.asarray(outlier_vars, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both groups must be non-empty")
    ranks = rankdata(np.concatenate([a, b]))
    u = ranks[a.size:].sum() - b.size * (b.size + 1) / 2.0
    return float(u / (a.size * b.size))
