import numpy as np
import pytest
import scipy.sparse as sp

from slenderstokes import SymFactor, block_diag, saddle_operator, spmv
from slenderstokes.sparsela import MatrixMap


def random_spd(n, seed=0):
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((n, n))
    return sp.csr_matrix(Q @ Q.T + n * np.eye(n))


def test_symfactor_matches_dense_solve():
    A = random_spd(40)
    rng = np.random.default_rng(1)
    b = rng.standard_normal(40)
    x = SymFactor(A).solve(b)
    assert np.allclose(A @ x, b, atol=1e-10)


def test_symfactor_deflated_singular_solve():
    # graph Laplacian of a path: singular with constant nullspace
    n = 30
    main = np.full(n, 2.0)
    main[0] = main[-1] = 1.0
    A = sp.diags([-np.ones(n - 1), main, -np.ones(n - 1)], (-1, 0, 1)).tocsr()
    z = np.ones(n)
    fac = SymFactor(A, nullspace=[z])
    rng = np.random.default_rng(2)
    b = rng.standard_normal(n)
    b -= z * (z @ b) / n  # consistent rhs
    x = fac.solve(b)
    assert abs(z @ x) < 1e-9 * np.linalg.norm(x)
    assert np.allclose(A @ x, b, atol=1e-9)


def test_saddle_operator_symmetry():
    rng = np.random.default_rng(3)
    A = random_spd(12, seed=4)
    B = sp.csr_matrix(rng.standard_normal((5, 12)))
    K = saddle_operator(A, B)
    x = rng.standard_normal(17)
    y = rng.standard_normal(17)
    assert x @ K.apply(y) == pytest.approx(y @ K.apply(x), rel=1e-12)


def test_block_diag_apply():
    A = random_spd(6, seed=5)
    Bm = random_spd(4, seed=6)
    P = block_diag([MatrixMap(A), MatrixMap(Bm)])
    x = np.arange(10, dtype=float)
    out = P.apply(x)
    assert np.allclose(out[:6], A @ x[:6])
    assert np.allclose(out[6:], Bm @ x[6:])


def test_spmv_matches_scipy():
    A = random_spd(15, seed=7)
    x = np.linspace(0, 1, 15)
    assert np.allclose(spmv(A, x), A @ x)
