import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkp_glasso.kron_init import init_hyperparams, kron_design_matrix, kron_log_lstsq
from qkp_glasso.matrix import KroneckerShape, NotPositiveDefinite, to_blocks

from oracles import additive_fit, random_spd

SHAPES = [(1, 1), (1, 3), (2, 2), (2, 3), (3, 2), (3, 4)]


def test_scalar_case():
    W, Y, res = kron_log_lstsq([[2.0]], KroneckerShape(1, 1))
    assert W[0, 0] == pytest.approx(np.log(2) / 2, abs=1e-15)
    assert Y[0, 0] == pytest.approx(np.log(2) / 2, abs=1e-15)
    assert res == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("m1, m2", SHAPES)
def test_design_matrix_encodes_entrywise_sum(m1, m2):
    rng = np.random.default_rng(m1 * 10 + m2)
    W, Y = rng.standard_normal((m1, m1)), rng.standard_normal((m2, m2))
    A = kron_design_matrix(KroneckerShape(m1, m2))
    z = np.concatenate([W.flatten(order="F"), Y.flatten(order="F")])
    fitted = (A @ z).reshape(m1 * m2, m1 * m2, order="F")
    expected = np.log(np.kron(np.exp(W), np.exp(Y)))
    np.testing.assert_allclose(fitted, expected, atol=1e-12)


@pytest.mark.parametrize("m1, m2", SHAPES)
def test_null_space_is_the_shift(m1, m2):
    A = kron_design_matrix(KroneckerShape(m1, m2))
    assert np.linalg.matrix_rank(A) == m1 * m1 + m2 * m2 - 1
    shift = np.concatenate([np.ones(m1 * m1), -np.ones(m2 * m2)])
    np.testing.assert_array_equal(A @ shift, 0.0)

    rng = np.random.default_rng(5)
    M = np.exp(rng.standard_normal((m1 * m2, m1 * m2)))
    W, Y, _ = kron_log_lstsq(M, KroneckerShape(m1, m2))
    z = np.concatenate([W.ravel(), Y.ravel()])
    assert abs(z @ shift) <= 1e-10 * max(1.0, np.linalg.norm(z))


@pytest.mark.parametrize("m1, m2", SHAPES)
def test_exact_input_recovered_up_to_shift(m1, m2):
    rng = np.random.default_rng(17)
    W0, Y0 = rng.standard_normal((m1, m1)), rng.standard_normal((m2, m2))
    M = np.kron(np.exp(W0), np.exp(Y0))
    W, Y, res = kron_log_lstsq(M, KroneckerShape(m1, m2))
    assert res <= 1e-10
    c = W[0, 0] - W0[0, 0]
    np.testing.assert_allclose(W, W0 + c, atol=1e-10)
    np.testing.assert_allclose(Y, Y0 - c, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), m1=st.integers(1, 4), m2=st.integers(1, 4))
def test_matches_additive_closed_form(seed, m1, m2):
    rng = np.random.default_rng(seed)
    logM = rng.normal(0, 2, (m1 * m2, m1 * m2))
    W, Y, res = kron_log_lstsq(np.exp(logM), KroneckerShape(m1, m2))
    W_ref, Y_ref, fitted = additive_fit(logM, m1, m2)
    ours = W[:, :, None, None] + Y[None, None, :, :]
    np.testing.assert_allclose(ours, fitted, atol=1e-10)
    np.testing.assert_allclose(W, W_ref, atol=1e-10)
    np.testing.assert_allclose(Y, Y_ref, atol=1e-10)
    resid = np.linalg.norm(to_blocks(logM, KroneckerShape(m1, m2)) - fitted)
    assert res == pytest.approx(resid, abs=1e-10)


def test_product_invariant_under_shift():
    rng = np.random.default_rng(3)
    W, Y = rng.standard_normal((2, 2)), rng.standard_normal((3, 3))
    for c in (-2.0, 0.5, 3.0):
        a = np.kron(1 / np.exp(W), 1 / np.exp(Y))
        b = np.kron(1 / np.exp(W + c), 1 / np.exp(Y - c))
        np.testing.assert_allclose(a, b, rtol=1e-12)


def test_identity_covariance_frozen():
    r = init_hyperparams(np.eye(4), KroneckerShape(2, 2), eps=1e-3)
    expected = np.array([[2.37048505, 74.99879051], [74.99879051, 2.37048505]])
    np.testing.assert_allclose(r.lam0, expected, rtol=1e-8)
    np.testing.assert_allclose(r.gam0, expected, rtol=1e-8)
    # strong pull toward a diagonal estimate
    assert r.lam0[0, 1] > 10 * r.lam0[0, 0]


def test_default_eps_is_relative():
    sigma = np.diag([0.5, 0.25, 2.0, 1.0])
    r = init_hyperparams(sigma, KroneckerShape(2, 2))
    assert r.eps == pytest.approx(1e-3 * 4.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), m1=st.integers(1, 3), m2=st.integers(1, 4))
def test_outputs_positive_symmetric_finite(seed, m1, m2):
    rng = np.random.default_rng(seed)
    sigma = random_spd(rng, m1 * m2)
    r = init_hyperparams(sigma, KroneckerShape(m1, m2))
    for X in (r.lam0, r.gam0):
        assert np.all(np.isfinite(X)) and np.all(X > 0)
        np.testing.assert_array_equal(X, X.T)


def test_domain_errors():
    with pytest.raises(ValueError):
        kron_log_lstsq(np.array([[1.0, 0.0], [0.0, 1.0]]), KroneckerShape(1, 2))
    with pytest.raises(ValueError):
        kron_log_lstsq(np.ones((3, 3)), KroneckerShape(1, 2))
    with pytest.raises(NotPositiveDefinite):
        init_hyperparams(np.array([[1.0, 2.0], [2.0, 1.0]]), KroneckerShape(1, 2))
    with pytest.raises(ValueError):
        init_hyperparams(np.eye(2), KroneckerShape(1, 2), eps=0.0)
