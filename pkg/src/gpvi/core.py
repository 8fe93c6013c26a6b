"""Generative particle VI: functional gradient, pullback and the training loop.

The generator is trained by descending the RKHS functional gradient of
KL(q || p) evaluated at fresh noise ``z`` and pulled back through the
generator. The kernel lives on noise space; the inverse-Jacobian term is
either predicted by a helper network, solved exactly, or approximated by
one warm-started BiCGSTAB iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baselines import svgd_phi
from .generator import (
    GeneratorNet,
    generator_dense_jacobians,
    generator_forward,
    generator_jvp,
    generator_param_pullback,
)
from .helper import HelperNet, helper_forward, helper_train_step, make_helper
from .kernels import KernelBatch, median_bandwidth, rbf_batch
from .solvers import MAX_DENSE_DIM, bicgstab_batched, dense_solve
from .tensor_core import AdamState, MlpParams, adam_step

INVERSE_MODES = ("helper", "exact", "bicgstab")


@dataclass
class GpviState:
    gen: GeneratorNet
    helper: HelperNet | None
    gen_adam: AdamState
    batch_size: int
    inverse_mode: str = "helper"
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    warm: np.ndarray | None = None  # previous BiCGSTAB solutions, (B', B, d)
    step: int = 0

    def __post_init__(self):
        if self.inverse_mode not in INVERSE_MODES:
            raise ValueError(f"inverse_mode must be one of {INVERSE_MODES}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (bandwidth needs pairs)")
        if self.inverse_mode == "helper":
            if self.helper is None:
                raise ValueError("helper mode needs a helper network")
            if (self.helper.k, self.helper.d) != (self.gen.k, self.gen.d):
                raise ValueError("helper dimensions do not match the generator")
        if self.inverse_mode == "exact" and self.gen.d > MAX_DENSE_DIM:
            raise ValueError(f"exact mode limited to d <= {MAX_DENSE_DIM}")


def make_gpvi_state(gen: GeneratorNet, batch_size: int, inverse_mode: str = "helper",
                    gen_lr: float = 1e-3, helper_width: int = 32, helper_lr: float = 1e-4,
                    helper_residual: str = "jvp", init_rng=None, noise_rng=None) -> GpviState:
    init_rng = np.random.default_rng(0) if init_rng is None else init_rng
    helper = None
    if inverse_mode == "helper":
        helper = make_helper(gen.k, gen.d, helper_width, init_rng, lr=helper_lr,
                             residual=helper_residual)
    return GpviState(gen, helper, AdamState(lr=gen_lr), batch_size, inverse_mode,
                     np.random.default_rng(1) if noise_rng is None else noise_rng)


@dataclass
class FunctionalGradient:
    grad: np.ndarray            # (B, d), descent direction at each z_j
    kernel: KernelBatch         # k(z'_i, z_j) block
    inverse: np.ndarray         # (B', B, d) estimates of J(z'_i)^-1 grad k_ij
    scores: np.ndarray          # (B', d) grad log p at f(z'_i)


def _pair_rows(zprime, kb):
    bp, b, d = kb.grads.shape
    return np.repeat(zprime, b, axis=0), kb.grads.reshape(bp * b, d)


def inverse_term(state: GpviState, zprime: np.ndarray, kb: KernelBatch,
                 update_warm: bool = True) -> np.ndarray:
    """J_f(z'_i)^-1 grad_{z'_i} k(z'_i, z_j) for every pair, per ``inverse_mode``."""
    gen = state.gen
    bp, b, d = kb.grads.shape
    if state.inverse_mode == "exact":
        jacs = generator_dense_jacobians(gen, zprime)
        return np.stack([dense_solve(jacs[i], kb.grads[i].T).T for i in range(bp)])
    zrows, gk = _pair_rows(zprime, kb)
    if state.inverse_mode == "helper":
        return helper_forward(state.helper, zrows[:, :gen.k], gk).reshape(bp, b, d)
    warm = state.warm
    if warm is None or warm.shape != (bp, b, d):
        warm = np.zeros((bp, b, d))
    sol, _ = bicgstab_batched(lambda v: generator_jvp(gen, zrows, v), gk,
                              warm.reshape(bp * b, d), max_iters=1)
    sol = sol.reshape(bp, b, d)
    if update_warm:
        state.warm = sol
    return sol


def gpvi_functional_gradient(state: GpviState, z: np.ndarray, zprime: np.ndarray,
                             target, h: float | None = None,
                             inverse: np.ndarray | None = None) -> FunctionalGradient:
    """Batch estimate of the functional gradient at each ``z_j``.

    grad(z_j) = mean_i [ -s(f(z'_i)) k(z'_i, z_j) - J(z'_i)^-1 grad_{z'_i} k(z'_i, z_j) ]

    ``h`` defaults to the median heuristic on ``zprime``; ``inverse`` may
    carry precomputed inverse-Jacobian products.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    zprime = np.atleast_2d(np.asarray(zprime, dtype=float))
    if h is None:
        h = median_bandwidth(zprime)
    kb = rbf_batch(zprime, z, h)
    scores = np.asarray(target.grad_log_p(generator_forward(state.gen, zprime)), dtype=float)
    if inverse is None:
        inverse = inverse_term(state, zprime, kb)
    bp = zprime.shape[0]
    grad = -(kb.values.T @ scores + inverse.sum(axis=0)) / bp
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite functional gradient")
    return FunctionalGradient(grad, kb, inverse, scores)


def generator_theta_grad(gen: GeneratorNet, z: np.ndarray, fgrad: np.ndarray) -> MlpParams:
    """Batch-mean pullback of the (constant) functional gradient to g's parameters."""
    return generator_param_pullback(gen, z, fgrad).scale(1.0 / z.shape[0])


def gpvi_train_step(state: GpviState, target) -> dict:
    """One pass of the alternating helper/generator update. Mutates ``state``."""
    gen = state.gen
    d, b = gen.d, state.batch_size
    z = state.rng.standard_normal((b, d))
    zprime = state.rng.standard_normal((b, d))
    h = median_bandwidth(zprime)
    kb = rbf_batch(zprime, z, h)
    helper_loss = float("nan")
    inverse = None
    if state.inverse_mode == "helper":
        zrows, gk = _pair_rows(zprime, kb)
        state.helper, helper_loss, out = helper_train_step(gen, state.helper, zrows, gk)
        inverse = out.reshape(kb.grads.shape)
    fg = gpvi_functional_gradient(state, z, zprime, target, h=h, inverse=inverse)
    grads = generator_theta_grad(gen, z, fg.grad)
    grad_norm = float(np.sqrt(sum(np.sum(a * a) for a in grads.arrays())))
    if not np.isfinite(grad_norm):
        raise FloatingPointError("generator gradient diverged")
    params, state.gen_adam = adam_step(state.gen_adam, gen.params, grads)
    state.gen = gen.with_params(params)
    state.step += 1
    return {"step": state.step, "helper_loss": helper_loss, "grad_norm": grad_norm,
            "bandwidth": h}


def amortized_svgd_step(gen: GeneratorNet, gen_adam: AdamState, target, batch_size: int,
                        rng: np.random.Generator):
    """Back-propagates the SVGD direction (x-space kernel) into the generator.

    Returns ``(new_gen, new_adam, phi)``; parameters move along +phi.
    """
    z = rng.standard_normal((batch_size, gen.d))
    x = generator_forward(gen, z)
    h = median_bandwidth(x)
    phi = svgd_phi(x, np.asarray(target.grad_log_p(x), dtype=float), h)
    if not np.all(np.isfinite(phi)):
        raise FloatingPointError("non-finite SVGD direction")
    grads = generator_param_pullback(gen, z, -phi).scale(1.0 / batch_size)
    params, adam = adam_step(gen_adam, gen.params, grads)
    return gen.with_params(params), adam, phi
