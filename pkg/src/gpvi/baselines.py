"""Baseline samplers: SVGD, a deep ensemble (independent MAP ascent) and HMC."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import median_bandwidth, rbf_batch
from .tensor_core import AdamState, adam_step


def svgd_phi(particles: np.ndarray, scores: np.ndarray, h: float,
             query: np.ndarray | None = None) -> np.ndarray:
    """phi*(q) = mean_j [score_j k(x_j, q) + grad_{x_j} k(x_j, q)]."""
    query = particles if query is None else query
    kb = rbf_batch(particles, query, h)
    n = particles.shape[0]
    return (kb.values.T @ scores + kb.grads.sum(axis=0)) / n


def svgd_direction(particles: np.ndarray, target, h: float | None = None,
                   query: np.ndarray | None = None) -> np.ndarray:
    """SVGD direction evaluated at ``query`` (defaults to the particles).

    With ``h=None`` the bandwidth comes from the median heuristic (1.0 for a
    single particle, where the kernel terms are trivial anyway).
    """
    particles = np.atleast_2d(np.asarray(particles, dtype=float))
    if h is None:
        h = median_bandwidth(particles) if particles.shape[0] > 1 else 1.0
    return svgd_phi(particles, target.grad_log_p(particles), h, query)


@dataclass
class ParticleSet:
    particles: np.ndarray
    step_size: float = 1e-3
    use_adam: bool = True
    adam: AdamState | None = None

    def __post_init__(self):
        self.particles = np.atleast_2d(np.asarray(self.particles, dtype=float))
        if self.adam is None:
            self.adam = AdamState(lr=self.step_size)


def _apply(ps: ParticleSet, direction: np.ndarray) -> ParticleSet:
    if not np.all(np.isfinite(direction)):
        raise FloatingPointError("non-finite particle update")
    if ps.use_adam:
        (new,), adam = adam_step(ps.adam, [ps.particles], [-direction])
    else:
        new, adam = ps.particles + ps.step_size * direction, ps.adam
    return ParticleSet(new, ps.step_size, ps.use_adam, adam)


def svgd_step(ps: ParticleSet, target) -> ParticleSet:
    """x_i <- x_i + eps phi*(x_i), bandwidth re-estimated from the particles."""
    return _apply(ps, svgd_direction(ps.particles, target))


def ensemble_step(ps: ParticleSet, target) -> ParticleSet:
    """Independent gradient ascent on log p for every particle."""
    return _apply(ps, target.grad_log_p(ps.particles))


# --------------------------------------------------------------------- HMC

@dataclass
class HmcConfig:
    leapfrog_steps: int = 25
    step_size: float = 5e-4
    total_samples: int = 25_000
    burn_in: int = 20_000
    thinning: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.leapfrog_steps < 1:
            raise ValueError("leapfrog_steps must be >= 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not 0 <= self.burn_in < self.total_samples:
            raise ValueError("need 0 <= burn_in < total_samples")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")


def leapfrog(x: np.ndarray, p: np.ndarray, grad_log_p, step_size: float, n_steps: int):
    """Velocity-Verlet integration of H = -log p(x) + |p|^2 / 2."""
    x = np.array(x, dtype=float)
    p = np.array(p, dtype=float)
    p = p + 0.5 * step_size * grad_log_p(x)
    for i in range(n_steps):
        x = x + step_size * p
        if i < n_steps - 1:
            p = p + step_size * grad_log_p(x)
    p = p + 0.5 * step_size * grad_log_p(x)
    return x, p


@dataclass
class HmcResult:
    samples: np.ndarray
    acceptance_rate: float
    chain_means: np.ndarray = field(default=None)


def hmc_sample(target, cfg: HmcConfig, x0, rng=None) -> HmcResult:
    """Standard HMC with N(0, I) momenta and a Metropolis energy check.

    Proposals with non-finite energy are rejected. Returns the post-burn-in
    chain (thinned by ``cfg.thinning``).
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    x = np.asarray(x0, dtype=float).ravel()
    d = x.size

    def logp(v):
        return float(np.asarray(target.log_p(v[None, :])).ravel()[0])

    def grad(v):
        return np.asarray(target.grad_log_p(v[None, :])).reshape(d)

    cur_lp = logp(x)
    kept = []
    accepted = 0
    for it in range(cfg.total_samples):
        p0 = rng.standard_normal(d)
        xn, pn = leapfrog(x, p0, grad, cfg.step_size, cfg.leapfrog_steps)
        with np.errstate(all="ignore"):
            new_lp = logp(xn)
            dh = (-new_lp + 0.5 * pn @ pn) - (-cur_lp + 0.5 * p0 @ p0)
        if np.isfinite(dh) and np.all(np.isfinite(xn)) and np.log(rng.random()) < -dh:
            x, cur_lp = xn, new_lp
            if it >= cfg.burn_in:
                accepted += 1
        if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thinning == 0:
            kept.append(x.copy())
    samples = np.array(kept)
    n_post = cfg.total_samples - cfg.burn_in
    return HmcResult(samples, accepted / n_post, samples.mean(axis=0))
