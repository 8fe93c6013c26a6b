"""Unnormalised log-density targets and the toy datasets they are built on.

Every target exposes ``dim`` and ``grad_log_p(x)`` for a batch ``(batch, dim)``;
targets with a tractable ``log_p`` can also drive HMC.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg

from .tensor_core import MlpSpec, mlp_forward, mlp_param_pullback, unflatten


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _as_rows(x, dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != dim:
        raise ValueError(f"expected width {dim}, got shape {x.shape}")
    return x, single


class Target:
    dim: int

    def grad_log_p(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_p(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no log density")


# ---------------------------------------------------------------- Gaussians

class GaussianTarget(Target):
    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        self.dim = self.mean.shape[0]
        if self.cov.shape != (self.dim, self.dim):
            raise ValueError("covariance shape does not match the mean")
        if not np.allclose(self.cov, self.cov.T, atol=1e-12 * max(1.0, np.abs(self.cov).max())):
            raise ValueError("covariance must be symmetric")
        self.chol = scipy.linalg.cholesky(self.cov, lower=True)
        self.precision = scipy.linalg.cho_solve((self.chol, True), np.eye(self.dim))

    def grad_log_p(self, x):
        x, single = _as_rows(x, self.dim)
        g = -(x - self.mean) @ self.precision
        return g[0] if single else g

    def log_p(self, x):
        x, single = _as_rows(x, self.dim)
        r = x - self.mean
        lp = -0.5 * np.einsum("ij,jk,ik->i", r, self.precision, r)
        return lp[0] if single else lp


def gaussian_grad_log_p(t: GaussianTarget, x):
    return t.grad_log_p(x)


def random_covariance(d: int, seed) -> np.ndarray:
    """A A^T with i.i.d. standard normal A."""
    a = _rng(seed).standard_normal((d, d))
    return a @ a.T


class LogDensityTarget(Target):
    """Wraps user-supplied batched ``log_p`` and ``grad_log_p`` callables."""

    def __init__(self, dim: int, log_p: Callable, grad_log_p: Callable):
        self.dim = dim
        self._log_p = log_p
        self._grad = grad_log_p

    def grad_log_p(self, x):
        return np.asarray(self._grad(np.atleast_2d(x)), dtype=float)

    def log_p(self, x):
        return np.asarray(self._log_p(np.atleast_2d(x)), dtype=float)


# ------------------------------------------------ Bayesian linear regression

@dataclass
class BlrProblem:
    X: np.ndarray
    y: np.ndarray
    noise_var: float
    beta_true: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def make_blr_problem(seed, n: int = 100, d: int = 3, noise_var: float = 1.0) -> BlrProblem:
    """X ~ N(0, I), beta_i ~ U(0, 1) + 5, y = X beta + N(0, noise_var)."""
    rng = _rng(seed)
    beta = rng.uniform(0.0, 1.0, size=d) + 5.0
    X = rng.standard_normal((n, d))
    y = X @ beta + np.sqrt(noise_var) * rng.standard_normal(n)
    return BlrProblem(X, y, float(noise_var), beta)


def blr_posterior_analytic(p: BlrProblem) -> GaussianTarget:
    """Flat-prior posterior N((X^T X)^-1 X^T y, noise_var (X^T X)^-1)."""
    xtx = p.X.T @ p.X
    try:
        cho = scipy.linalg.cho_factor(xtx)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("X^T X is singular") from exc
    mean = scipy.linalg.cho_solve(cho, p.X.T @ p.y)
    cov = p.noise_var * scipy.linalg.cho_solve(cho, np.eye(p.d))
    return GaussianTarget(mean, 0.5 * (cov + cov.T))


def blr_grad_log_p(p: BlrProblem, beta, minibatch=None) -> np.ndarray:
    """(n/|B|) X_B^T (y_B - X_B beta) / noise_var for each row of ``beta``."""
    beta, single = _as_rows(beta, p.d)
    if minibatch is None:
        X, y, scale = p.X, p.y, 1.0
    else:
        idx = np.asarray(minibatch, dtype=int)
        if idx.size == 0:
            raise ValueError("empty minibatch")
        X, y, scale = p.X[idx], p.y[idx], p.n / idx.size
    resid = y[None, :] - beta @ X.T
    g = scale * (resid @ X) / p.noise_var
    return g[0] if single else g


def blr_log_p(p: BlrProblem, beta) -> np.ndarray:
    beta, single = _as_rows(beta, p.d)
    resid = p.y[None, :] - beta @ p.X.T
    lp = -0.5 * np.sum(resid * resid, axis=1) / p.noise_var
    return lp[0] if single else lp


class BlrTarget(Target):
    """BLR likelihood target, optionally with random data minibatches."""

    def __init__(self, problem: BlrProblem, data_batch: int | None = None, rng=None):
        self.problem = problem
        self.dim = problem.d
        self.data_batch = data_batch
        self.rng = _rng(rng)

    def grad_log_p(self, x):
        if self.data_batch is None or self.data_batch >= self.problem.n:
            return blr_grad_log_p(self.problem, x)
        idx = self.rng.choice(self.problem.n, size=self.data_batch, replace=False)
        return blr_grad_log_p(self.problem, x, idx)

    def log_p(self, x):
        return blr_log_p(self.problem, x)


# ------------------------------------------------------ Bayesian neural nets

def _log_softmax(logits):
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _bnn_data_terms(net_spec, params, X, y, task, noise_std):
    out = mlp_forward(net_spec, params, X)
    if task == "classify":
        logp = _log_softmax(out)
        ll = float(logp[np.arange(len(y)), y].sum())
        cot = -np.exp(logp)
        cot[np.arange(len(y)), y] += 1.0
    else:
        r = y.reshape(out.shape) - out
        ll = float(-0.5 * np.sum(r * r) / noise_std ** 2)
        cot = r / noise_std ** 2
    return ll, cot


def _check_labels(y, net_spec, task):
    if task == "classify":
        y = np.asarray(y, dtype=int)
        if y.size and (y.min() < 0 or y.max() >= net_spec.n_out):
            raise ValueError(f"labels must lie in [0, {net_spec.n_out - 1}]")
        return y
    if task == "regress":
        return np.asarray(y, dtype=float)
    raise ValueError(f"unknown task {task!r}")


def bnn_log_posterior_and_grad(net_spec: MlpSpec, X, y, prior_std: float, flat_params,
                               task: str = "classify", noise_std: float = 0.2,
                               minibatch=None):
    """Per network row: rescaled log likelihood + N(0, prior_std^2) log prior.

    Returns ``(log_post (S,), grad (S, P))``.
    """
    flat_params, single = _as_rows(flat_params, net_spec.n_params)
    X = np.asarray(X, dtype=float).reshape(-1, net_spec.n_in)
    y = _check_labels(y, net_spec, task)
    n = X.shape[0]
    scale = 1.0
    if minibatch is not None and n:
        idx = np.asarray(minibatch, dtype=int)
        if idx.size == 0:
            raise ValueError("empty minibatch")
        X, y, scale = X[idx], y[idx], n / idx.size
    var = prior_std ** 2
    lps = -0.5 * np.sum(flat_params ** 2, axis=1) / var
    grads = -flat_params / var
    if X.shape[0]:
        for s, theta in enumerate(flat_params):
            params = unflatten(net_spec, theta)
            ll, cot = _bnn_data_terms(net_spec, params, X, y, task, noise_std)
            g, _ = mlp_param_pullback(net_spec, params, X, cot)
            lps[s] += scale * ll
            grads[s] += scale * g.flatten()
    if single:
        return lps[0], grads[0]
    return lps, grads


def bnn_grad_log_p(net_spec: MlpSpec, X, y, prior_std: float, flat_params,
                   task: str = "classify", noise_std: float = 0.2, minibatch=None):
    return bnn_log_posterior_and_grad(net_spec, X, y, prior_std, flat_params,
                                      task, noise_std, minibatch)[1]


class BnnTarget(Target):
    """Posterior over the flattened weights of a small MLP."""

    def __init__(self, net_spec: MlpSpec, X, y, task: str = "classify",
                 prior_std: float = 1.0, noise_std: float = 0.2,
                 data_batch: int | None = None, rng=None):
        self.net_spec = net_spec
        self.X = np.asarray(X, dtype=float).reshape(-1, net_spec.n_in)
        self.y = _check_labels(y, net_spec, task)
        self.task = task
        self.prior_std = prior_std
        self.noise_std = noise_std
        self.data_batch = data_batch
        self.rng = _rng(rng)
        self.dim = net_spec.n_params

    def _minibatch(self):
        n = self.X.shape[0]
        if self.data_batch is None or self.data_batch >= n:
            return None
        return self.rng.choice(n, size=self.data_batch, replace=False)

    def grad_log_p(self, x):
        return bnn_grad_log_p(self.net_spec, self.X, self.y, self.prior_std, x,
                              self.task, self.noise_std, self._minibatch())

    def log_p(self, x):
        return bnn_log_posterior_and_grad(self.net_spec, self.X, self.y, self.prior_std, x,
                                          self.task, self.noise_std)[0]

    def predict(self, flat_params, X) -> np.ndarray:
        """Outputs ``(S, N, out)``; class probabilities for classification."""
        flat_params = np.atleast_2d(flat_params)
        outs = np.stack([mlp_forward(self.net_spec, unflatten(self.net_spec, th), X)
                         for th in flat_params])
        if self.task == "classify":
            return np.exp(_log_softmax(outs))
        return outs


# ---------------------------------------------------------------- datasets

MIXTURE_MEANS = np.array([[-2.0, -2.0], [-2.0, 2.0], [2.0, -2.0], [2.0, 2.0]])
MIXTURE_STD = 0.3


@dataclass
class MixtureDataset:
    points: np.ndarray
    labels: np.ndarray       # component index 0..3
    test_points: np.ndarray
    test_labels: np.ndarray


def _sample_mixture(rng, n, means, std):
    labels = rng.integers(0, len(means), size=n)
    points = means[labels] + std * rng.standard_normal((n, means.shape[1]))
    return points, labels


def make_mixture_dataset(seed, n_train: int = 100, n_test: int = 200,
                         means=MIXTURE_MEANS, std: float = MIXTURE_STD) -> MixtureDataset:
    rng = _rng(seed)
    means = np.asarray(means, dtype=float)
    xtr, ytr = _sample_mixture(rng, n_train, means, std)
    xte, yte = _sample_mixture(rng, n_test, means, std)
    return MixtureDataset(xtr, ytr, xte, yte)


def regression_1d_mean(x):
    return -(1.0 + x) * np.sin(1.2 * x)


def make_1d_regression_dataset(seed, n_outer: int = 76, n_inner: int = 4,
                               noise_var: float = 0.04):
    """X from U([-6,-2] u [2,6]) (76 pts) and U([-2,2]) (4 pts); Y = -(1+X) sin(1.2X) + eps."""
    rng = _rng(seed)
    side = np.where(rng.random(n_outer) < 0.5, -1.0, 1.0)
    outer = side * rng.uniform(2.0, 6.0, size=n_outer)
    inner = rng.uniform(-2.0, 2.0, size=n_inner)
    X = np.concatenate([outer, inner])
    Y = regression_1d_mean(X) + np.sqrt(noise_var) * rng.standard_normal(X.size)
    return X, Y


def write_dataset_csv(path, columns: dict) -> None:
    """Writes equal-length columns with a header row (17 significant digits)."""
    names = list(columns)
    cols = [np.asarray(columns[k]).ravel() for k in names]
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([format(v, ".17g") if isinstance(v, (float, np.floating)) else v
                        for v in row])
