import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import cached_trials, experiment
from seqwls.basis import HaarNode, HaarTreeBasis, SingularWeightError
from seqwls.leastsq import (
    assemble_gramian,
    best_approx_error,
    condition_number,
    eigenvalues,
    jacobi_eigenvalues,
    l2_error,
    l2_norm,
    spectral_deviation,
    wls_fit,
)
from seqwls.samplers import RngStream, sample_mu

HAND_G = np.array([[1.5, 0.5], [0.5, 0.5]])


def _rng(seed):
    return RngStream(seed, 0, "leastsq-test").generator()


def test_gramian_trivial_cases(hermite):
    x = _rng(1).normal(size=17) * 4
    assert np.array_equal(assemble_gramian(hermite, 1, x), np.ones((1, 1)))
    assert np.array_equal(assemble_gramian(HaarTreeBasis(), 1, _rng(2).random(9)), np.ones((1, 1)))


def test_gramian_hand_example(hermite):
    np.testing.assert_allclose(assemble_gramian(hermite, 2, [0.0, 1.0]), HAND_G, atol=1e-10)


def test_gramian_symmetric_psd(hermite, haar_tree):
    for basis, x in ((hermite, _rng(3).normal(size=40) * 2), (haar_tree, _rng(4).random(60))):
        G = assemble_gramian(basis, 20, x)
        assert np.array_equal(G, G.T)
        assert eigenvalues(G)[0] >= -1e-12


def test_gramian_singular_weight():
    with pytest.raises(SingularWeightError):
        assemble_gramian(HaarTreeBasis(), 1, [0.2, 1.0])
    with pytest.raises(ValueError):
        assemble_gramian(HaarTreeBasis(), 1, [])


def test_spectral_deviation_examples():
    assert spectral_deviation(np.eye(4)) == 0.0
    assert spectral_deviation(np.diag([1.6, 0.8])) == pytest.approx(0.6, abs=1e-10)
    assert spectral_deviation([[1.0, 0.3], [0.3, 1.0]]) == pytest.approx(0.3, abs=1e-10)
    assert spectral_deviation([[1.0, 0.3], [0.3, 1.0]], method="jacobi") == pytest.approx(0.3, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (7, 7), elements=st.floats(-3, 3)))
def test_jacobi_matches_lapack(a):
    A = a + a.T
    np.testing.assert_allclose(jacobi_eigenvalues(A), np.linalg.eigvalsh(A), atol=1e-10)


def test_unknown_eigen_method():
    with pytest.raises(ValueError):
        eigenvalues(np.eye(2), method="qr")


def test_condition_number_examples():
    assert condition_number(np.eye(3)) == 1.0
    assert condition_number(np.diag([1.5, 0.5])) == pytest.approx(3.0, rel=1e-14)
    assert condition_number(np.diag([1.0, 0.0])) == math.inf
    assert condition_number(np.diag([1.0, -0.1])) == math.inf


def _random_gramian(rng, m, delta):
    q, _ = np.linalg.qr(rng.normal(size=(m, m)))
    lam = 1 + rng.uniform(-delta, delta, size=m)
    lam[0] = 1 + delta if rng.random() < 0.5 else 1 - delta
    return (q * lam) @ q.T


@pytest.mark.parametrize("delta", [0.0, 0.1, 0.5, 0.9])
def test_condition_bound_from_deviation(delta):
    rng = _rng(5)
    for _ in range(50):
        G = _random_gramian(rng, 6, delta)
        d = spectral_deviation(G)
        assert d == pytest.approx(delta, abs=1e-12)
        assert condition_number(G) <= (1 + d) / (1 - d) * (1 + 1e-12)


@pytest.mark.parametrize("delta", [0.05, 0.3, 0.7, 0.95])
def test_norm_equivalence(delta):
    rng = _rng(6)
    G = _random_gramian(rng, 8, delta)
    d = spectral_deviation(G)
    v = rng.normal(size=(100, 8))
    ratio = np.einsum("ij,jk,ik->i", v, G, v) / np.sum(v * v, axis=1)
    assert np.all(ratio >= 1 - d - 1e-12) and np.all(ratio <= 1 + d + 1e-12)
    # the extremal eigenvector attains the constant, so no smaller one works
    lam, vec = np.linalg.eigh(G)
    e = vec[:, np.argmax(np.abs(lam - 1))]
    assert abs(e @ G @ e - 1) == pytest.approx(d, abs=1e-8)


def test_wls_hand_solve(hermite):
    # ||G - I|| = sqrt(1/2) here, so the safeguarded fit rejects the sample
    fit = wls_fit(hermite, 2, [0.0, 1.0], [1.0, 1.0])
    assert not fit.accepted and np.array_equal(fit.coefficients, np.zeros(2))
    assert fit.deviation == pytest.approx(math.sqrt(0.5), abs=1e-12)
    raw = wls_fit(hermite, 2, [0.0, 1.0], [1.0, 1.0], safeguard=False)
    np.testing.assert_allclose(raw.gramian, HAND_G, atol=1e-10)
    np.testing.assert_allclose(raw.coefficients, [1.0, 0.0], atol=1e-10)
    assert not raw.accepted


def test_wls_accepted_residual(hermite):
    x = sample_mu(hermite, 6, _rng(7), size=400)
    y = np.sin(x)
    fit = wls_fit(hermite, 6, x, y)
    assert fit.accepted and fit.deviation <= 0.5
    w = 6 / np.sum(hermite.matrix(x, 6) ** 2, axis=1)
    d = hermite.matrix(x, 6).T @ (w * y) / x.size
    resid = np.linalg.norm(fit.gramian @ fit.coefficients - d)
    assert resid <= 1e-10 * np.linalg.norm(d)
    assert fit.condition <= 3.0


def test_wls_zero_data(hermite):
    x = sample_mu(hermite, 4, _rng(8), size=200)
    fit = wls_fit(hermite, 4, x, np.zeros_like(x))
    assert fit.accepted and np.all(fit.coefficients == 0)


def test_wls_dimension_mismatch(hermite):
    with pytest.raises(ValueError):
        wls_fit(hermite, 2, [0.0, 1.0], [1.0])


@pytest.mark.parametrize("basis_name", ["hermite", "haar"])
def test_reproduces_members_of_vm(basis_name, hermite, haar_tree):
    basis = hermite if basis_name == "hermite" else haar_tree
    rng = _rng(9)
    for m in (3, 8, 15):
        coef = rng.normal(size=m)
        x = sample_mu(basis, m, rng, size=20 * m)
        fit = wls_fit(basis, m, x, basis.matrix(x, m) @ coef)
        assert fit.accepted
        np.testing.assert_allclose(fit.coefficients, coef, atol=1e-8)


def test_rejected_fit_is_zero(hermite):
    x = np.array([0.1, 0.2, 0.3])
    fit = wls_fit(hermite, 3, x, np.ones(3))
    assert not fit.accepted and fit.deviation > 0.5
    assert np.array_equal(fit.coefficients, np.zeros(3))


def test_l2_error_examples(hermite, haar_tree):
    phi1 = lambda x: np.ones_like(x)
    zero = lambda x: np.zeros_like(x)
    assert l2_error(hermite, 1, [1.0], phi1) == pytest.approx(0.0, abs=1e-12)
    assert l2_error(hermite, 1, [1.0], zero) == pytest.approx(1.0, abs=1e-12)
    assert l2_error(haar_tree, 5, np.eye(5)[2], zero) == pytest.approx(1.0, abs=1e-12)
    sq = lambda x: x * x
    assert best_approx_error(hermite, 1, sq) == pytest.approx(math.sqrt(2), abs=1e-10)
    assert best_approx_error(hermite, 2, sq) == pytest.approx(math.sqrt(2), abs=1e-10)
    assert best_approx_error(hermite, 3, sq) == pytest.approx(0.0, abs=1e-7)


def test_best_approx_in_vm(haar_tree):
    coef = _rng(10).normal(size=12)
    u = lambda x: haar_tree.matrix(x, 12) @ coef
    assert best_approx_error(haar_tree, 12, u) == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("basis_name", ["hermite", "haar"])
def test_best_approx_monotone(basis_name, hermite, haar_tree):
    basis = hermite if basis_name == "hermite" else haar_tree
    u = (lambda x: np.exp(x / 2)) if basis_name == "hermite" else (lambda x: np.sqrt(x) * np.cos(7 * x))
    errs = [best_approx_error(basis, m, u) for m in range(1, 31)]
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


def test_norm_of_exponential(hermite):
    assert l2_norm(hermite, lambda x: np.exp(x / 2)) ** 2 == pytest.approx(math.exp(0.5), rel=1e-12)


def test_gramian_unbiased(hermite):
    m, n, sets = 5, 50, 10_000
    x = sample_mu(hermite, m, _rng(11), size=(sets, n))
    phi = hermite.matrix(x, m)
    w = m / np.sum(phi * phi, axis=-1)
    G = np.einsum("sn,snj,snk->sjk", w, phi, phi) / n
    mean = G.mean(axis=0)
    se = G.std(axis=0, ddof=1) / math.sqrt(sets)
    assert np.all(np.abs(mean - np.eye(m)) <= 4 * se)


def test_gramian_unbiased_haar():
    basis = HaarTreeBasis((HaarNode(0, 0), HaarNode(1, 0), HaarNode(2, 1), HaarNode(1, 1)))
    x = sample_mu(basis, 4, _rng(12), size=(10_000, 30))
    phi = basis.matrix(x, 4)
    w = 4 / np.sum(phi * phi, axis=-1)
    G = np.einsum("sn,snj,snk->sjk", w, phi, phi) / 30
    se = G.std(axis=0, ddof=1) / math.sqrt(G.shape[0])
    assert np.all(np.abs(G.mean(axis=0) - np.eye(4)) <= 4 * se + 1e-15)


@pytest.mark.slow
@pytest.mark.parametrize("basis_name", ["hermite", "haar"])
def test_matrix_chernoff_frequency(basis_name):
    recs = cached_trials(experiment(basis_name, alg=1, trials=1000))
    assert all(r.error is None for r in recs)
    dev = np.array([[s.deviation for s in r.steps] for r in recs])
    assert dev.shape == (1000, 50)
    assert np.all(np.mean(dev >= 0.5, axis=0) <= 0.02)
