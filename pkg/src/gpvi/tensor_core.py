"""Small fully connected networks: forward pass, reverse/forward differentiation, Adam.

Tensors are plain float64 ``numpy`` arrays. Weight matrices are stored
``(out, in)`` so a batch of row vectors ``x`` maps to ``x @ W.T + b``.
Hidden layers use a rectifier whose derivative at exactly zero is 0; the
output layer is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Raised when an input does not match the network it is fed to."""


@dataclass(frozen=True)
class MlpSpec:
    layer_widths: tuple[int, ...]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 2:
            raise ValueError("an MLP needs at least an input and an output width")
        if any(w <= 0 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")
        object.__setattr__(self, "layer_widths", widths)

    @property
    def n_in(self) -> int:
        return self.layer_widths[0]

    @property
    def n_out(self) -> int:
        return self.layer_widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def n_params(self) -> int:
        w = self.layer_widths
        return sum(w[i + 1] * w[i] + w[i + 1] for i in range(self.n_layers))


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        """Parameters in a fixed order (W0, b0, W1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_arrays(cls, arrays) -> "MlpParams":
        arrays = list(arrays)
        return cls(weights=arrays[0::2], biases=arrays[1::2])

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "MlpParams":
        return MlpParams([np.zeros_like(w) for w in self.weights],
                         [np.zeros_like(b) for b in self.biases])

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def scale(self, c: float) -> "MlpParams":
        return MlpParams([c * w for w in self.weights], [c * b for b in self.biases])


def check_params(spec: MlpSpec, params: MlpParams) -> None:
    if len(params.weights) != spec.n_layers or len(params.biases) != spec.n_layers:
        raise ShapeError(f"expected {spec.n_layers} layers, got {len(params.weights)}")
    w = spec.layer_widths
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        if W.shape != (w[i + 1], w[i]) or b.shape != (w[i + 1],):
            raise ShapeError(
                f"layer {i}: expected W{(w[i + 1], w[i])} b{(w[i + 1],)}, "
                f"got W{W.shape} b{b.shape}")


def unflatten(spec: MlpSpec, flat: np.ndarray) -> MlpParams:
    flat = np.asarray(flat, dtype=float)
    if flat.shape != (spec.n_params,):
        raise ShapeError(f"expected {spec.n_params} flat parameters, got shape {flat.shape}")
    w = spec.layer_widths
    weights, biases, pos = [], [], 0
    for i in range(spec.n_layers):
        n = w[i + 1] * w[i]
        weights.append(flat[pos:pos + n].reshape(w[i + 1], w[i]))
        pos += n
        biases.append(flat[pos:pos + w[i + 1]].copy())
        pos += w[i + 1]
    return MlpParams(weights, biases)


def init_mlp(spec: MlpSpec, rng: np.random.Generator, scale: float = 1.0) -> MlpParams:
    """Glorot-uniform weights (optionally scaled), zero biases."""
    w = spec.layer_widths
    weights, biases = [], []
    for i in range(spec.n_layers):
        limit = np.sqrt(6.0 / (w[i] + w[i + 1]))
        weights.append(scale * rng.uniform(-limit, limit, size=(w[i + 1], w[i])))
        biases.append(np.zeros(w[i + 1]))
    return MlpParams(weights, biases)


def zero_mlp(spec: MlpSpec) -> MlpParams:
    w = spec.layer_widths
    return MlpParams([np.zeros((w[i + 1], w[i])) for i in range(spec.n_layers)],
                     [np.zeros(w[i + 1]) for i in range(spec.n_layers)])


def _as_batch(x: np.ndarray, width: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise ShapeError(f"{what}: expected width {width}, got shape {x.shape}")
    return x, single


def _forward_cache(spec: MlpSpec, params: MlpParams, x: np.ndarray):
    """Returns the output and the pre-activations of each hidden layer."""
    pre = []
    a = x
    last = spec.n_layers - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        if a.shape[1] != W.shape[1]:
            raise ShapeError(f"layer {i}: input width {a.shape[1]} != {W.shape[1]}")
        u = a @ W.T + b
        if i < last:
            pre.append(u)
            a = np.maximum(u, 0.0)
        else:
            a = u
    return a, pre


def mlp_forward(spec: MlpSpec, params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Evaluates the network on a batch ``(batch, in)`` (or a single row)."""
    check_params(spec, params)
    x, single = _as_batch(x, spec.n_in, "mlp_forward input")
    out, _ = _forward_cache(spec, params, x)
    return out[0] if single else out


def mlp_param_pullback(spec: MlpSpec, params: MlpParams, x: np.ndarray,
                       cotangent: np.ndarray) -> tuple[MlpParams, np.ndarray]:
    """Reverse-mode gradient of ``sum_batch <cotangent, mlp(x)>``.

    Parameter gradients are summed over the batch; the input gradient is
    returned per row.
    """
    check_params(spec, params)
    x, single = _as_batch(x, spec.n_in, "mlp_param_pullback input")
    c, _ = _as_batch(cotangent, spec.n_out, "mlp_param_pullback cotangent")
    if c.shape[0] != x.shape[0]:
        raise ShapeError(f"cotangent batch {c.shape[0]} != input batch {x.shape[0]}")
    _, pre = _forward_cache(spec, params, x)
    acts = [x] + [np.maximum(u, 0.0) for u in pre]
    gw = [None] * spec.n_layers
    gb = [None] * spec.n_layers
    delta = c
    for i in range(spec.n_layers - 1, -1, -1):
        gw[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        delta = delta @ params.weights[i]
        if i > 0:
            delta = delta * (pre[i - 1] > 0.0)
    input_grad = delta[0] if single else delta
    return MlpParams(gw, gb), input_grad


def mlp_input_jvp(spec: MlpSpec, params: MlpParams, x: np.ndarray,
                  tangent: np.ndarray) -> np.ndarray:
    """Forward-mode product ``(d mlp / d x) @ tangent``; row-wise for batches."""
    check_params(spec, params)
    x, single = _as_batch(x, spec.n_in, "mlp_input_jvp input")
    t, _ = _as_batch(tangent, spec.n_in, "mlp_input_jvp tangent")
    if t.shape[0] != x.shape[0]:
        raise ShapeError(f"tangent batch {t.shape[0]} != input batch {x.shape[0]}")
    a, da = x, t
    last = spec.n_layers - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        u = a @ W.T + b
        du = da @ W.T
        if i < last:
            mask = u > 0.0
            a, da = np.where(mask, u, 0.0), du * mask
        else:
            da = du
    return da[0] if single else da


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(state: AdamState, params, grads):
    """One bias-corrected Adam descent step.

    ``params``/``grads`` are either ``MlpParams`` or a list of arrays.
    Returns ``(new_params, new_state)``; inputs are not modified.
    """
    as_mlp = isinstance(params, MlpParams)
    p_list = params.arrays() if as_mlp else list(params)
    g_list = grads.arrays() if isinstance(grads, MlpParams) else list(grads)
    if len(p_list) != len(g_list) or any(p.shape != g.shape for p, g in zip(p_list, g_list)):
        raise ShapeError("gradient shapes do not match parameter shapes")
    if not all(np.all(np.isfinite(g)) for g in g_list):
        raise FloatingPointError("non-finite gradient passed to adam_step")
    m = state.m or [np.zeros_like(p) for p in p_list]
    v = state.v or [np.zeros_like(p) for p in p_list]
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_m = [b1 * mi + (1 - b1) * g for mi, g in zip(m, g_list)]
    new_v = [b2 * vi + (1 - b2) * g * g for vi, g in zip(v, g_list)]
    c1 = 1 - b1 ** t
    c2 = 1 - b2 ** t
    new_p = [p - state.lr * (mi / c1) / (np.sqrt(vi / c2) + state.eps)
             for p, mi, vi in zip(p_list, new_m, new_v)]
    new_state = AdamState(state.lr, b1, b2, state.eps, t, new_m, new_v)
    if as_mlp:
        return MlpParams.from_arrays(new_p), new_state
    return new_p, new_state
