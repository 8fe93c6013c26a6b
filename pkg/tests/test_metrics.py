import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gpvi.metrics import (
    auroc_on_variance,
    ece,
    empirical_moments,
    fit_errors,
    linear_sampler_moments,
    predictive_std_grid,
    predictive_std_grid_from_params,
)
from gpvi.targets import BnnTarget
from gpvi.tensor_core import MlpSpec

sklearn_metrics = pytest.importorskip("sklearn.metrics")

unit = st.floats(0, 1, allow_nan=False)
var_lists = st.lists(st.floats(0, 5, allow_nan=False).map(lambda v: round(v, 1)), min_size=1, max_size=12)


def test_linear_moments_trivial():
    mean, cov = linear_sampler_moments(np.zeros((3, 3)), np.ones(3))
    assert np.all(cov == 0) and np.all(mean == 1)
    _, cov = linear_sampler_moments(np.eye(3), np.zeros(3))
    np.testing.assert_array_equal(cov, np.eye(3))


def test_linear_moments_with_slice_and_lambda(rng):
    G = rng.standard_normal((4, 1))
    _, cov = linear_sampler_moments(G, np.zeros(4), lam=1.0, k=1)
    M = np.eye(4)
    M[:, 0] += G[:, 0]
    np.testing.assert_allclose(cov, M @ M.T, atol=1e-15)
    with pytest.raises(ValueError):
        linear_sampler_moments(np.zeros((3, 2)), np.zeros(4))


def test_linear_moments_monte_carlo():
    rng = np.random.default_rng(0)
    W = rng.standard_normal((3, 3))
    b = rng.standard_normal(3)
    z = rng.standard_normal((1_000_000, 3))
    x = z @ W.T + b
    mean, cov = linear_sampler_moments(W, b)
    emp_mean, emp_cov = empirical_moments(x)
    assert np.linalg.norm(emp_cov - cov) < 1e-2
    assert np.linalg.norm(emp_mean - mean) < 1e-2


def test_fit_errors_examples():
    r = fit_errors(np.ones(3), np.eye(3), np.ones(3), np.eye(3))
    assert (r.mean_error, r.cov_error) == (0.0, 0.0)
    r = fit_errors(np.zeros(3), np.zeros((3, 3)), np.zeros(3), np.eye(3))
    assert r.cov_error == pytest.approx(np.sqrt(3), abs=1e-15)
    assert r.cov_error_spectral == pytest.approx(1.0)
    assert r.cov_error_rel == pytest.approx(1.0)
    with pytest.raises(ValueError):
        fit_errors(np.zeros(2), np.eye(2), np.zeros(3), np.eye(3))


@given(seed=st.integers(0, 2**31 - 1))
def test_fit_errors_symmetric(seed):
    rng = np.random.default_rng(seed)
    m1, m2 = rng.standard_normal((2, 3))
    c1, c2 = rng.standard_normal((2, 3, 3))
    a = fit_errors(m1, c1, m2, c2)
    b = fit_errors(m2, c2, m1, c1)
    assert a.mean_error == b.mean_error and a.cov_error == b.cov_error
    assert a.mean_error >= 0 and a.cov_error >= 0


def test_predictive_std_examples():
    same = np.tile(np.array([[[0.1, 0.2, 0.3, 0.4]]]), (3, 5, 1))
    assert np.all(predictive_std_grid(same) == 0)
    two = np.zeros((2, 1, 4))
    two[0, 0, 0] = 1.0
    two[1, 0, 1] = 1.0
    assert predictive_std_grid(two)[0] == pytest.approx(0.25)
    with pytest.raises(ValueError):
        predictive_std_grid(np.zeros((1, 2, 4)))


def test_predictive_std_from_params(rng):
    spec = MlpSpec((2, 3, 4))
    t = BnnTarget(spec, rng.standard_normal((4, 2)), rng.integers(0, 4, 4))
    grid = rng.standard_normal((6, 2))
    params = rng.standard_normal((5, spec.n_params))
    out = predictive_std_grid_from_params(params, spec, grid, t)
    np.testing.assert_allclose(out, predictive_std_grid(t.predict(params, grid)))
    with pytest.raises(ValueError):
        predictive_std_grid_from_params(params, MlpSpec((2, 4)), grid, t)


def test_ece_examples():
    assert ece(np.ones(10), np.ones(10)) == 0.0
    assert ece(np.full(10, 0.8), np.arange(10) % 2) == pytest.approx(0.3, abs=1e-15)
    # two occupied bins out of 15; the other 13 add nothing
    conf = np.array([0.95, 0.95, 0.35, 0.35])
    corr = np.array([1, 1, 0, 1])
    assert ece(conf, corr) == pytest.approx(0.5 * 0.05 + 0.5 * 0.15)
    with pytest.raises(ValueError):
        ece([1.5], [1])


def loop_ece(conf, corr, bins):
    total = 0.0
    for m in range(bins):
        lo, hi = m / bins, (m + 1) / bins
        sel = [i for i, c in enumerate(conf) if (lo < c <= hi) or (m == 0 and c == 0)]
        if sel:
            total += len(sel) * abs(np.mean([corr[i] for i in sel]) - np.mean([conf[i] for i in sel]))
    return total / len(conf)


@given(st.lists(st.tuples(unit, st.booleans()), min_size=1, max_size=30), st.randoms(),
       st.integers(1, 20))
def test_ece_properties(pairs, r, bins):
    conf = np.array([p[0] for p in pairs])
    corr = np.array([p[1] for p in pairs], dtype=float)
    value = ece(conf, corr, bins)
    assert 0 <= value <= 1
    assert value == pytest.approx(loop_ece(conf, corr, bins), abs=1e-12)
    perm = list(range(len(conf)))
    r.shuffle(perm)
    assert ece(conf[perm], corr[perm], bins) == pytest.approx(value, abs=1e-12)


def test_auroc_examples():
    assert auroc_on_variance([0.1, 0.2], [0.5, 0.6]) == 1.0
    assert auroc_on_variance([0.1, 0.2, 0.2], [0.2, 0.1, 0.2]) == 0.5
    assert auroc_on_variance([0.1, 0.2], [0.15, 0.3]) == 0.75
    with pytest.raises(ValueError):
        auroc_on_variance([], [1.0])


def brute_u(inl, out):
    wins = sum(1.0 if o > i else 0.5 if o == i else 0.0 for i in inl for o in out)
    return wins / (len(inl) * len(out))


@given(var_lists, var_lists)
def test_auroc_against_oracles(inl, out):
    value = auroc_on_variance(inl, out)
    assert value == pytest.approx(brute_u(inl, out), abs=1e-12)
    assert value + auroc_on_variance(out, inl) == pytest.approx(1.0, abs=1e-12)
    labels = np.r_[np.zeros(len(inl)), np.ones(len(out))]
    scores = np.r_[inl, out]
    if 0 < len(set(scores)) and len(set(labels)) == 2:
        assert value == pytest.approx(sklearn_metrics.roc_auc_score(labels, scores), abs=1e-12)


@given(arrays(float, st.tuples(st.integers(2, 6), st.integers(1, 4), st.integers(2, 5)),
              elements=unit))
def test_predictive_std_nonnegative(probs):
    out = predictive_std_grid(probs)
    assert out.shape == probs.shape[1:2]
    assert np.all(out >= 0) and np.all(out <= 0.5 + 1e-12)
