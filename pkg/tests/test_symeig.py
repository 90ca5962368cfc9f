import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcsdp.errors import DegenerateSpectrum, InvalidInput
from tcsdp.symeig import eigenvalue_gap, grad_lambda1, sym_eig


def random_symmetric(rng, d, gap=None):
    """Random symmetric matrix; optionally with a guaranteed top spectral gap."""
    A = rng.normal(size=(d, d))
    M = 0.5 * (A + A.T)
    if gap is not None:
        vals, vecs = np.linalg.eigh(M)
        vals = np.sort(vals)
        vals[-1] = vals[-2] + gap + abs(rng.normal())
        M = (vecs * vals) @ vecs.T
    return 0.5 * (M + M.T)


def test_diagonal_matrix():
    pair = sym_eig(np.diag([3.0, 2.0, 1.0]))
    assert np.allclose(pair.values, [3.0, 2.0, 1.0])
    # eigenvectors are signed permutations of identity columns
    assert np.allclose(np.abs(pair.vectors), np.eye(3))


def test_zero_matrix():
    pair = sym_eig(np.zeros((4, 4)))
    assert np.allclose(pair.values, 0.0)


def test_reconstruction_random():
    rng = np.random.default_rng(0)
    for _ in range(20):
        M = random_symmetric(rng, 7)
        pair = sym_eig(M)
        rebuilt = (pair.vectors * pair.values) @ pair.vectors.T
        assert np.linalg.norm(rebuilt - M) <= 1e-9 * max(1.0, np.linalg.norm(M))
        assert np.max(np.abs(pair.vectors.T @ pair.vectors - np.eye(7))) <= 1e-10
        assert np.all(np.diff(pair.values) <= 1e-12)


def test_nonfinite_rejected():
    M = np.eye(3)
    M[0, 1] = M[1, 0] = np.nan
    with pytest.raises(InvalidInput):
        sym_eig(M)


def test_grad_simple_cases():
    G = grad_lambda1(np.diag([3.0, 0.0, 0.0]))
    assert np.allclose(G, np.outer([1, 0, 0], [1, 0, 0]))
    with pytest.raises(DegenerateSpectrum):
        grad_lambda1(np.eye(3))


def test_grad_properties():
    rng = np.random.default_rng(1)
    for _ in range(25):
        M = random_symmetric(rng, 7, gap=0.1)
        G = grad_lambda1(M)
        assert abs(np.trace(G) - 1.0) <= 1e-12
        vals = np.linalg.eigvalsh(G)
        assert vals.min() >= -1e-12
        assert np.sum(vals > 1e-8) == 1  # rank one


def finite_difference_grad(M, h=1e-6):
    d = M.shape[0]
    G = np.zeros((d, d))
    for i in range(d):
        for j in range(i, d):
            E = np.zeros((d, d))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = 0.5
            lp = np.linalg.eigvalsh(M + h * E).max()
            lm = np.linalg.eigvalsh(M - h * E).max()
            G[i, j] = G[j, i] = (lp - lm) / (2 * h)
    return G


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(30):
        M = random_symmetric(rng, 7, gap=0.1)
        G = grad_lambda1(M)
        F = finite_difference_grad(M)
        worst = max(worst, np.max(np.abs(G - F)) / max(1.0, np.max(np.abs(F))))
    assert worst <= 1e-5


def test_grad_sign_invariance():
    # the gradient is u1 u1', identical whichever sign the eigensolver picks
    rng = np.random.default_rng(3)
    M = random_symmetric(rng, 5, gap=0.5)
    G = grad_lambda1(M)
    u = np.linalg.eigh(M)[1][:, -1]
    assert np.allclose(G, np.outer(-u, -u))


def test_eigenvalue_gap_basics():
    Y = np.outer([1, 0, 0, 0, 1, 0, 1], [1, 0, 0, 0, 1, 0, 1])
    assert eigenvalue_gap([[Y]], [3.0]) <= 1e-12
    scaled = (3.0 / 7.0) * np.eye(7)
    assert abs(eigenvalue_gap([[scaled]], [3.0]) - 18.0 / 7.0) <= 1e-12
    with pytest.raises(InvalidInput):
        eigenvalue_gap([], [])


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=2, max_value=8), st.integers(min_value=0, max_value=10_000))
def test_gap_nonnegative_for_fixed_trace(d, seed):
    # any PSD matrix with trace T has lambda1 <= T, so the gap is >= 0
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(d, d))
    M = A @ A.T
    M *= 3.0 / np.trace(M)
    assert eigenvalue_gap([[M]], [3.0]) >= -1e-12
