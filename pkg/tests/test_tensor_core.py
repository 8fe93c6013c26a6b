import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpvi.tensor_core import (
    AdamState,
    MlpParams,
    MlpSpec,
    ShapeError,
    adam_step,
    init_mlp,
    mlp_forward,
    mlp_input_jvp,
    mlp_param_pullback,
    unflatten,
    zero_mlp,
)

from conftest import central_diff, rel_err


def loop_forward(spec, params, x):
    """Explicit loop evaluation used as an independent oracle."""
    a = list(x)
    for li, (W, b) in enumerate(zip(params.weights, params.biases)):
        out = []
        for r in range(W.shape[0]):
            s = b[r]
            for c in range(W.shape[1]):
                s += W[r, c] * a[c]
            out.append(s if li == spec.n_layers - 1 else max(s, 0.0))
        a = out
    return np.array(a)


def random_net(rng, widths, bias_scale=0.3):
    spec = MlpSpec(widths)
    params = init_mlp(spec, rng)
    params = MlpParams(params.weights, [bias_scale * rng.standard_normal(b.shape)
                                        for b in params.biases])
    return spec, params


def test_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec((3,))
    with pytest.raises(ValueError):
        MlpSpec((3, 0, 2))
    assert MlpSpec((3, 4, 2)).n_params == 3 * 4 + 4 + 4 * 2 + 2


def test_zero_net_gives_zero_output(rng):
    spec = MlpSpec((4, 5, 3))
    out = mlp_forward(spec, zero_mlp(spec), rng.standard_normal((7, 4)))
    assert out.shape == (7, 3)
    assert np.all(out == 0.0)


def test_single_linear_layer_affine():
    spec = MlpSpec((1, 1))
    params = MlpParams([np.array([[2.0]])], [np.array([1.0])])
    assert mlp_forward(spec, params, np.array([3.0])) == pytest.approx([7.0])


def test_forward_matches_loop_oracle(rng):
    spec, params = random_net(rng, (3, 6, 5, 2))
    x = rng.standard_normal((8, 3))
    out = mlp_forward(spec, params, x)
    for i in range(8):
        np.testing.assert_allclose(out[i], loop_forward(spec, params, x[i]), rtol=0, atol=1e-12)


def test_forward_shape_error_names_layer(rng):
    spec = MlpSpec((3, 4, 2))
    params = init_mlp(spec, rng)
    with pytest.raises(ShapeError):
        mlp_forward(spec, params, np.zeros((2, 5)))
    bad = MlpParams([params.weights[0], np.zeros((2, 5))], params.biases)
    with pytest.raises(ShapeError, match="layer 1"):
        mlp_forward(spec, bad, np.zeros((2, 3)))


def test_pullback_zero_cotangent(rng):
    spec, params = random_net(rng, (3, 4, 2))
    grads, gin = mlp_param_pullback(spec, params, rng.standard_normal((5, 3)), np.zeros((5, 2)))
    assert all(np.all(a == 0) for a in grads.arrays())
    assert np.all(gin == 0)


def test_pullback_linear_layer_is_outer_product(rng):
    spec = MlpSpec((3, 2))
    params = init_mlp(spec, rng)
    x = rng.standard_normal((4, 3))
    c = rng.standard_normal((4, 2))
    grads, gin = mlp_param_pullback(spec, params, x, c)
    np.testing.assert_allclose(grads.weights[0], c.T @ x, atol=1e-14)
    np.testing.assert_allclose(grads.biases[0], c.sum(axis=0), atol=1e-14)
    np.testing.assert_allclose(gin, c @ params.weights[0], atol=1e-14)


@pytest.mark.parametrize("widths", [(3, 8, 2), (4, 16, 16, 3), (2, 64, 5)])
def test_pullback_matches_finite_differences(rng, widths):
    spec, params = random_net(rng, widths)
    x = rng.standard_normal((3, spec.n_in))
    c = rng.standard_normal((3, spec.n_out))
    grads, gin = mlp_param_pullback(spec, params, x, c)

    def objective(flat):
        return float(np.sum(c * mlp_forward(spec, unflatten(spec, flat), x)))

    fd = central_diff(objective, params.flatten())
    assert rel_err(grads.flatten(), fd, floor=1e-6) < 1e-4
    fd_in = central_diff(lambda xx: float(np.sum(c * mlp_forward(spec, params, xx))), x)
    assert rel_err(gin, fd_in, floor=1e-6) < 1e-4


def test_pullback_sums_over_batch(rng):
    spec, params = random_net(rng, (3, 5, 2))
    x = rng.standard_normal((4, 3))
    c = rng.standard_normal((4, 2))
    total, _ = mlp_param_pullback(spec, params, x, c)
    parts = [mlp_param_pullback(spec, params, x[i:i + 1], c[i:i + 1])[0] for i in range(4)]
    summed = sum(p.flatten() for p in parts)
    np.testing.assert_allclose(total.flatten(), summed, atol=1e-13)


def test_jvp_trivial_cases(rng):
    spec, params = random_net(rng, (3, 5, 2))
    x = rng.standard_normal(3)
    assert np.all(mlp_input_jvp(spec, params, x, np.zeros(3)) == 0)
    lin = MlpSpec((3, 2))
    lp = init_mlp(lin, rng)
    t = rng.standard_normal(3)
    np.testing.assert_allclose(mlp_input_jvp(lin, lp, x, t), lp.weights[0] @ t, atol=1e-15)


@pytest.mark.parametrize("widths", [(3, 8, 2), (5, 32, 32, 4), (2, 64, 3)])
def test_jvp_matches_finite_differences(rng, widths):
    spec, params = random_net(rng, widths)
    for _ in range(5):
        x = rng.standard_normal(spec.n_in)
        t = rng.standard_normal(spec.n_in)
        fd = (mlp_forward(spec, params, x + 1e-5 * t) - mlp_forward(spec, params, x - 1e-5 * t)) / 2e-5
        assert rel_err(mlp_input_jvp(spec, params, x, t), fd, floor=1e-6) < 1e-4


def test_jvp_kink_uses_zero_derivative():
    # a single hidden unit sitting exactly at pre-activation 0
    spec = MlpSpec((1, 1, 1))
    params = MlpParams([np.array([[1.0]]), np.array([[1.0]])], [np.array([0.0]), np.array([0.0])])
    assert mlp_input_jvp(spec, params, np.array([0.0]), np.array([1.0]))[0] == 0.0
    _, gin = mlp_param_pullback(spec, params, np.array([[0.0]]), np.array([[1.0]]))
    assert gin[0, 0] == 0.0


@given(seed=st.integers(0, 2**31 - 1), batch=st.integers(1, 6))
def test_adjoint_identity(seed, batch):
    rng = np.random.default_rng(seed)
    spec, params = random_net(rng, (4, 7, 6, 3))
    x = rng.standard_normal((batch, 4))
    t = rng.standard_normal((batch, 4))
    c = rng.standard_normal((batch, 3))
    lhs = np.sum(c * mlp_input_jvp(spec, params, x, t))
    _, gin = mlp_param_pullback(spec, params, x, c)
    rhs = np.sum(gin * t)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@given(seed=st.integers(0, 2**31 - 1))
def test_forward_is_deterministic_and_batch_consistent(seed):
    rng = np.random.default_rng(seed)
    spec, params = random_net(rng, (3, 5, 2))
    x = rng.standard_normal((4, 3))
    out = mlp_forward(spec, params, x)
    assert np.array_equal(out, mlp_forward(spec, params, x))
    for i in range(4):
        np.testing.assert_allclose(out[i], mlp_forward(spec, params, x[i]), atol=1e-14)


def test_init_bounds(rng):
    spec = MlpSpec((6, 10, 4))
    params = init_mlp(spec, rng)
    assert np.abs(params.weights[0]).max() <= np.sqrt(6 / 16)
    assert np.abs(params.weights[1]).max() <= np.sqrt(6 / 14)
    assert all(np.all(b == 0) for b in params.biases)


def test_adam_zero_gradient_leaves_params():
    p = [np.array([1.0, -2.0])]
    new, state = adam_step(AdamState(lr=0.1), p, [np.zeros(2)])
    np.testing.assert_array_equal(new[0], p[0])
    assert state.t == 1


def test_adam_first_step_by_hand():
    new, _ = adam_step(AdamState(lr=0.1), [np.array([0.0])], [np.array([1.0])])
    # m_hat = 1, v_hat = 1, so the step is lr * 1 / (1 + eps)
    assert new[0][0] == pytest.approx(-0.1 / (1 + 1e-8), abs=1e-15)


def test_adam_two_steps_match_recurrence():
    lr, b1, b2, eps, g = 0.05, 0.9, 0.999, 1e-8, 0.7
    x, m, v = 1.5, 0.0, 0.0
    for t in (1, 2):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    state = AdamState(lr=lr)
    p = [np.array([1.5])]
    for _ in range(2):
        p, state = adam_step(state, p, [np.array([g])])
    assert abs(p[0][0] - x) < 1e-12
    assert state.t == 2
    assert all(np.all(vi >= 0) for vi in state.v)


def test_adam_rejects_non_finite():
    with pytest.raises(FloatingPointError):
        adam_step(AdamState(), [np.zeros(2)], [np.array([np.nan, 0.0])])


def test_adam_accepts_mlp_params(rng):
    spec = MlpSpec((2, 3))
    params = init_mlp(spec, rng)
    grads = params.zeros_like()
    grads.weights[0][0, 0] = 1.0
    new, state = adam_step(AdamState(lr=0.01), params, grads)
    assert isinstance(new, MlpParams)
    assert new.weights[0][0, 0] == pytest.approx(params.weights[0][0, 0] - 0.01, abs=1e-9)
    assert new.weights[0][1, 1] == params.weights[0][1, 1]
