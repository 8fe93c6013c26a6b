"""Helper network estimating J_f(z')^-1 grad k.

Architecture: one rectified dense layer on ``z'[:k]``, one on ``grad k``,
concatenated and fed to a three-layer dense trunk whose output has the
generator's dimension ``d``. Trained with plain Adam (no weight decay, no
normalisation), one step per generator step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .generator import GeneratorNet, generator_jvp, generator_vjp
from .tensor_core import (
    AdamState,
    MlpParams,
    MlpSpec,
    ShapeError,
    _forward_cache,
    adam_step,
    init_mlp,
    mlp_param_pullback,
)

RESIDUAL_MODES = ("jvp", "vjp")


@dataclass
class HelperNet:
    z_spec: MlpSpec
    z_params: MlpParams
    g_spec: MlpSpec
    g_params: MlpParams
    trunk_spec: MlpSpec
    trunk_params: MlpParams
    adam: AdamState = field(default_factory=lambda: AdamState(lr=1e-4))
    residual: str = "jvp"

    def __post_init__(self):
        if self.residual not in RESIDUAL_MODES:
            raise ValueError(f"residual must be one of {RESIDUAL_MODES}, got {self.residual!r}")

    @property
    def k(self) -> int:
        return self.z_spec.n_in

    @property
    def d(self) -> int:
        return self.trunk_spec.n_out

    def arrays(self) -> list[np.ndarray]:
        return self.z_params.arrays() + self.g_params.arrays() + self.trunk_params.arrays()

    def with_arrays(self, arrays, adam: AdamState) -> "HelperNet":
        nz = len(self.z_params.arrays())
        ng = len(self.g_params.arrays())
        return HelperNet(
            self.z_spec, MlpParams.from_arrays(arrays[:nz]),
            self.g_spec, MlpParams.from_arrays(arrays[nz:nz + ng]),
            self.trunk_spec, MlpParams.from_arrays(arrays[nz + ng:]),
            adam, self.residual)


def make_helper(k: int, d: int, width: int, rng: np.random.Generator,
                branch_width: int | None = None, lr: float = 1e-4,
                residual: str = "jvp", zero_output: bool = True) -> HelperNet:
    """Glorot-initialised helper.

    With ``zero_output`` the last trunk layer starts at zero, so the initial
    prediction is 0 rather than a random function of ``z'`` that the
    regression would first have to unlearn.
    """
    bw = width if branch_width is None else branch_width
    z_spec = MlpSpec((k, bw))
    g_spec = MlpSpec((d, bw))
    trunk_spec = MlpSpec((2 * bw, width, width, d))
    trunk = init_mlp(trunk_spec, rng)
    if zero_output:
        trunk.weights[-1][:] = 0.0
    return HelperNet(z_spec, init_mlp(z_spec, rng), g_spec, init_mlp(g_spec, rng),
                     trunk_spec, trunk, AdamState(lr=lr), residual)


def _check_inputs(h: HelperNet, z_slice, gradk):
    z_slice = np.asarray(z_slice, dtype=float)
    gradk = np.asarray(gradk, dtype=float)
    if z_slice.ndim != 2 or z_slice.shape[1] != h.k:
        raise ShapeError(f"helper z input: expected (batch, {h.k}), got {z_slice.shape}")
    if gradk.ndim != 2 or gradk.shape[1] != h.d:
        raise ShapeError(f"helper grad-k input: expected (batch, {h.d}), got {gradk.shape}")
    if z_slice.shape[0] != gradk.shape[0]:
        raise ShapeError("helper inputs have different batch sizes")
    return z_slice, gradk


def _helper_cache(h: HelperNet, z_slice, gradk):
    uz = z_slice @ h.z_params.weights[0].T + h.z_params.biases[0]
    ug = gradk @ h.g_params.weights[0].T + h.g_params.biases[0]
    feats = np.concatenate([np.maximum(uz, 0.0), np.maximum(ug, 0.0)], axis=1)
    out, _ = _forward_cache(h.trunk_spec, h.trunk_params, feats)
    return out, (uz, ug, feats)


def helper_forward(h: HelperNet, z_slice: np.ndarray, gradk: np.ndarray) -> np.ndarray:
    z_slice, gradk = _check_inputs(h, z_slice, gradk)
    out, _ = _helper_cache(h, z_slice, gradk)
    return out


def _residual(gen: GeneratorNet, h: HelperNet, zprime, out, gradk):
    if h.residual == "jvp":
        return generator_jvp(gen, zprime, out) - gradk
    return generator_vjp(gen, zprime, out) - gradk


def helper_loss_and_grad(gen: GeneratorNet, h: HelperNet, zprime: np.ndarray,
                         gradk: np.ndarray):
    """Loss ``mean_rows |J h_out - gradk|^2``, its eta-gradient and the outputs.

    ``zprime`` holds one full noise vector per row (rows may repeat, e.g. one
    row per (z', z) kernel pair).
    """
    zprime = np.asarray(zprime, dtype=float)
    if zprime.ndim != 2 or zprime.shape[1] != gen.d:
        raise ShapeError(f"zprime: expected (batch, {gen.d}), got {zprime.shape}")
    z_slice, gradk = _check_inputs(h, zprime[:, :gen.k], gradk)
    if gen.d != h.d or gen.k != h.k:
        raise ShapeError("helper and generator dimensions disagree")
    n = zprime.shape[0]
    out, (uz, ug, feats) = _helper_cache(h, z_slice, gradk)
    res = _residual(gen, h, zprime, out, gradk)
    loss = float(np.einsum("ij,ij->", res, res) / n)
    # d loss / d out = (2/n) J^T res (jvp residual) or (2/n) J res (vjp residual)
    if h.residual == "jvp":
        dout = (2.0 / n) * generator_vjp(gen, zprime, res)
    else:
        dout = (2.0 / n) * generator_jvp(gen, zprime, res)
    g_trunk, dfeats = mlp_param_pullback(h.trunk_spec, h.trunk_params, feats, dout)
    w = h.z_spec.n_out
    duz = dfeats[:, :w] * (uz > 0.0)
    dug = dfeats[:, w:] * (ug > 0.0)
    g_z = MlpParams([duz.T @ z_slice], [duz.sum(axis=0)])
    g_g = MlpParams([dug.T @ gradk], [dug.sum(axis=0)])
    grads = g_z.arrays() + g_g.arrays() + g_trunk.arrays()
    return loss, grads, out


def helper_loss(gen: GeneratorNet, h: HelperNet, zprime: np.ndarray,
                gradk: np.ndarray) -> float:
    return helper_loss_and_grad(gen, h, zprime, gradk)[0]


def helper_train_step(gen: GeneratorNet, h: HelperNet, zprime: np.ndarray,
                      gradk: np.ndarray):
    """One Adam step on the helper loss.

    Returns ``(new_helper, loss, outputs)`` where ``loss`` and ``outputs``
    are evaluated with the pre-update parameters.
    """
    loss, grads, out = helper_loss_and_grad(gen, h, zprime, gradk)
    if not np.isfinite(loss):
        raise FloatingPointError(f"helper loss diverged ({loss})")
    new_arrays, adam = adam_step(h.adam, h.arrays(), grads)
    return h.with_arrays(new_arrays, adam), loss, out
