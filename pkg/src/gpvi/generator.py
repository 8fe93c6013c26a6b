"""The sampler f(z) = g(z[:k]) + lam * z and its structured Jacobian.

Only the leading ``k`` noise components pass through the network ``g``, so
the Jacobian is ``[dg/dz[:k] | 0] + lam * I``: products with it cost one
forward- or reverse-mode pass through ``g``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .tensor_core import (
    MlpParams,
    MlpSpec,
    ShapeError,
    init_mlp,
    mlp_forward,
    mlp_input_jvp,
    mlp_param_pullback,
)

MAX_DENSE_DIM = 512


@dataclass
class GeneratorNet:
    spec: MlpSpec
    params: MlpParams
    lam: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not 1 <= self.k <= self.d:
            raise ValueError(f"need 1 <= k <= d, got k={self.k}, d={self.d}")
        if self.k > 0.3 * self.d:
            warnings.warn(f"noise slice k={self.k} exceeds 30% of d={self.d}", stacklevel=2)

    @property
    def k(self) -> int:
        return self.spec.n_in

    @property
    def d(self) -> int:
        return self.spec.n_out

    def with_params(self, params: MlpParams) -> "GeneratorNet":
        out = GeneratorNet.__new__(GeneratorNet)
        out.spec, out.params, out.lam = self.spec, params, self.lam
        return out


def make_generator(d: int, k: int, hidden=(), lam: float = 1.0, rng=None,
                   init_scale: float = 1.0) -> GeneratorNet:
    spec = MlpSpec((k, *hidden, d))
    rng = np.random.default_rng(0) if rng is None else rng
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return GeneratorNet(spec, init_mlp(spec, rng, scale=init_scale), lam)


def _check(gen: GeneratorNet, z: np.ndarray, what: str) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != gen.d or z.ndim not in (1, 2):
        raise ShapeError(f"{what}: expected last dimension {gen.d}, got shape {z.shape}")
    return z


def generator_forward(gen: GeneratorNet, z: np.ndarray) -> np.ndarray:
    z = _check(gen, z, "generator_forward")
    return mlp_forward(gen.spec, gen.params, z[..., :gen.k]) + gen.lam * z


def generator_jvp(gen: GeneratorNet, z: np.ndarray, tangent: np.ndarray) -> np.ndarray:
    """J_f(z) @ tangent, row-wise for batches."""
    z = _check(gen, z, "generator_jvp")
    tangent = _check(gen, tangent, "generator_jvp tangent")
    if tangent.shape != z.shape:
        raise ShapeError(f"tangent shape {tangent.shape} != z shape {z.shape}")
    k = gen.k
    return mlp_input_jvp(gen.spec, gen.params, z[..., :k], tangent[..., :k]) + gen.lam * tangent


def generator_vjp(gen: GeneratorNet, z: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """cov^T @ J_f(z), row-wise for batches."""
    z = _check(gen, z, "generator_vjp")
    cov = _check(gen, cov, "generator_vjp cotangent")
    if cov.shape != z.shape:
        raise ShapeError(f"cotangent shape {cov.shape} != z shape {z.shape}")
    k = gen.k
    _, gin = mlp_param_pullback(gen.spec, gen.params, z[..., :k], cov)
    out = gen.lam * cov
    out[..., :k] += gin
    return out


def generator_dense_jacobian(gen: GeneratorNet, z: np.ndarray) -> np.ndarray:
    """Materialises the d x d Jacobian at a single point (d <= 512)."""
    z = _check(gen, z, "generator_dense_jacobian")
    if z.ndim != 1:
        raise ShapeError("generator_dense_jacobian takes a single point")
    d, k = gen.d, gen.k
    if d > MAX_DENSE_DIM:
        raise ValueError(f"refusing to materialise a {d}x{d} Jacobian (limit {MAX_DENSE_DIM})")
    zk = np.repeat(z[None, :k], k, axis=0)
    cols = mlp_input_jvp(gen.spec, gen.params, zk, np.eye(k))  # row i = dg/dz_i
    jac = gen.lam * np.eye(d)
    jac[:, :k] += cols.T
    return jac


def generator_dense_jacobians(gen: GeneratorNet, z: np.ndarray) -> np.ndarray:
    """Batched Jacobians ``(batch, d, d)``."""
    z = _check(gen, z, "generator_dense_jacobians")
    b, d, k = z.shape[0], gen.d, gen.k
    if d > MAX_DENSE_DIM:
        raise ValueError(f"refusing to materialise {d}x{d} Jacobians (limit {MAX_DENSE_DIM})")
    zk = np.repeat(z[:, :k], k, axis=0)
    tang = np.tile(np.eye(k), (b, 1))
    cols = mlp_input_jvp(gen.spec, gen.params, zk, tang).reshape(b, k, d)
    jac = np.broadcast_to(gen.lam * np.eye(d), (b, d, d)).copy()
    jac[:, :, :k] += cols.transpose(0, 2, 1)
    return jac


def generator_param_pullback(gen: GeneratorNet, z: np.ndarray,
                             cotangent: np.ndarray) -> MlpParams:
    """Gradient of ``sum_batch <cotangent, f(z)>`` w.r.t. the parameters of g."""
    z = _check(gen, z, "generator_param_pullback")
    cotangent = _check(gen, cotangent, "generator_param_pullback cotangent")
    if cotangent.shape != z.shape:
        raise ShapeError(f"cotangent shape {cotangent.shape} != z shape {z.shape}")
    grads, _ = mlp_param_pullback(gen.spec, gen.params, z[..., :gen.k], cotangent)
    return grads
