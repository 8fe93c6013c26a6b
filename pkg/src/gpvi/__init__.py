"""Generative particle variational inference with numpy.

A generator network ``f(z) = g(z[:k]) + lam * z`` is trained by pulling back
the RKHS functional gradient of KL(q || p). The inverse-Jacobian term in that
gradient is predicted by a small helper network, solved exactly, or
approximated by warm-started BiCGSTAB. SVGD, amortized SVGD, deep ensembles
and HMC are included as baselines.
"""

from .baselines import HmcConfig, ParticleSet, hmc_sample, svgd_direction, svgd_phi
from .config import ConfigError, ExperimentConfig, load_config
from .core import (
    GpviState,
    amortized_svgd_step,
    gpvi_functional_gradient,
    gpvi_train_step,
    make_gpvi_state,
)
from .generator import GeneratorNet, generator_forward, make_generator
from .helper import HelperNet, make_helper
from .kernels import median_bandwidth, rbf_batch
from .metrics import auroc_on_variance, ece, fit_errors
from .solvers import bicgstab, dense_solve
from .targets import GaussianTarget

__version__ = "0.1.0"
