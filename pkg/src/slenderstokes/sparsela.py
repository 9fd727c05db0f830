"""CSR matrices, symmetric factorizations with nullspace deflation, and the
linear-map contract shared by operators and preconditioners.

Matrices are scipy.sparse CSR; factorization is SuperLU (via scipy) behind the
SymFactor interface. Semidefinite blocks must declare their nullspace
explicitly; the deflated solve returns the minimum-norm-in-range solution via
a bordered system.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.io import mmwrite

PIVOT_RTOL = 1e-12


def finalize_csr(A) -> sp.csr_matrix:
    """Canonical CSR: summed duplicates, pruned zeros, sorted column indices."""
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def is_symmetric(A, rtol: float = 1e-12) -> bool:
    A = sp.csr_matrix(A)
    diff = abs(A - A.T)
    scale = max(abs(A).max(), 1.0) if A.nnz else 1.0
    return diff.nnz == 0 or diff.max() <= rtol * scale


def export_matrix_market(A, path) -> None:
    mmwrite(str(path), sp.coo_matrix(A))


def spmv(A, x: np.ndarray) -> np.ndarray:
    """y = A x with row-major accumulation (CSR matvec)."""
    A = sp.csr_matrix(A)
    x = np.asarray(x, dtype=float)
    if x.shape[0] != A.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return A @ x


class LinearMap:
    """Abstract symmetric-friendly linear action on vectors."""

    shape: tuple[int, int]

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply_adjoint(self, x: np.ndarray) -> np.ndarray:
        # default: self-adjoint maps
        return self.apply(x)

    def __matmul__(self, x):
        return self.apply(np.asarray(x, dtype=float))

    def to_dense(self) -> np.ndarray:
        n = self.shape[1]
        cols = [self.apply(e) for e in np.eye(n)]
        return np.column_stack(cols)


class MatrixMap(LinearMap):
    def __init__(self, A):
        self.A = finalize_csr(A)
        self.shape = self.A.shape

    def apply(self, x):
        return self.A @ x

    def apply_adjoint(self, x):
        return self.A.T @ x

    def to_dense(self):
        return self.A.toarray()


class CallableMap(LinearMap):
    def __init__(self, shape, fn, fn_adjoint=None):
        self.shape = shape
        self._fn = fn
        self._fn_adjoint = fn_adjoint or fn

    def apply(self, x):
        return self._fn(x)

    def apply_adjoint(self, x):
        return self._fn_adjoint(x)


class BlockDiagMap(LinearMap):
    def __init__(self, blocks):
        self.blocks = [b if isinstance(b, LinearMap) else MatrixMap(b) for b in blocks]
        m = sum(b.shape[0] for b in self.blocks)
        n = sum(b.shape[1] for b in self.blocks)
        self.shape = (m, n)
        self._col_offsets = np.cumsum([0] + [b.shape[1] for b in self.blocks])

    def apply(self, x):
        if x.shape[0] != self.shape[1]:
            raise ValueError("dimension mismatch in block-diagonal apply")
        parts = []
        for b, lo, hi in zip(self.blocks, self._col_offsets[:-1], self._col_offsets[1:]):
            parts.append(b.apply(x[lo:hi]))
        return np.concatenate(parts)


class SaddleMap(LinearMap):
    """Symmetric saddle-point action [[A, B^T], [B, 0]]."""

    def __init__(self, A, B):
        self.A = A if isinstance(A, LinearMap) else MatrixMap(A)
        self.B = finalize_csr(B)
        nu = self.A.shape[1]
        if self.B.shape[1] != nu:
            raise ValueError("velocity dimensions of A and B do not match")
        npress = self.B.shape[0]
        n = nu + npress
        self.shape = (n, n)
        self.nu = nu

    def apply(self, x):
        if x.shape[0] != self.shape[1]:
            raise ValueError("dimension mismatch in saddle apply")
        u, p = x[: self.nu], x[self.nu :]
        return np.concatenate([self.A.apply(u) + self.B.T @ p, self.B @ u])

    def to_dense(self):
        Ad = self.A.to_dense() if isinstance(self.A, LinearMap) else np.asarray(self.A)
        Bd = self.B.toarray()
        n = self.shape[0]
        M = np.zeros((n, n))
        M[: self.nu, : self.nu] = Ad
        M[: self.nu, self.nu :] = Bd.T
        M[self.nu :, : self.nu] = Bd
        return M


def block_diag(maps) -> BlockDiagMap:
    return BlockDiagMap(maps)


def saddle_operator(A, B) -> SaddleMap:
    return SaddleMap(A, B)


class FactorError(RuntimeError):
    pass


class SymFactor(LinearMap):
    """Direct factorization of a symmetric positive (semi-)definite matrix.

    For SPSD input an orthonormal nullspace basis Z must be supplied; the
    deflated solve works on the bordered system [[A, Z], [Z^T, 0]] and returns
    the minimum-norm-in-range solution (Z^T x = 0, A x = (I - P_Z) b).
    """

    def __init__(self, A, nullspace=None):
        A = finalize_csr(A)
        if A.shape[0] != A.shape[1]:
            raise FactorError("matrix must be square")
        if not is_symmetric(A, rtol=1e-10):
            raise FactorError("matrix must be symmetric")
        self.shape = A.shape
        self.matrix = A
        n = A.shape[0]
        self.nullspace = None
        if nullspace is not None and len(nullspace) > 0:
            Z = np.column_stack([np.asarray(z, dtype=float) for z in nullspace])
            Z, _ = np.linalg.qr(Z)
            self.nullspace = Z
            k = Z.shape[1]
            bordered = sp.bmat(
                [[A, sp.csc_matrix(Z)], [sp.csc_matrix(Z.T), None]], format="csc"
            )
            self._lu = spla.splu(bordered, permc_spec="COLAMD")
            self._bordered = k
        else:
            diag_max = max(abs(A.diagonal()).max(), 1.0)
            lu = spla.splu(
                sp.csc_matrix(A),
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
            pivots = lu.U.diagonal()
            bad = np.where(pivots <= PIVOT_RTOL * diag_max)[0]
            if bad.size:
                raise FactorError(
                    f"nonpositive pivot at index {int(bad[0])}: declare a nullspace "
                    "for semidefinite blocks"
                )
            self._lu = lu
            self._bordered = 0
        self.fill_nnz = int(self._lu.L.nnz + self._lu.U.nnz)

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        single = b.ndim == 1
        B = b[:, None] if single else b
        if self._bordered:
            rhs = np.vstack([B, np.zeros((self._bordered, B.shape[1]))])
            X = self._lu.solve(rhs)[: self.shape[0]]
        else:
            X = self._lu.solve(B)
        return X[:, 0] if single else X

    # SymFactor used as a LinearMap applies the inverse
    def apply(self, x):
        return self.solve(x)


def factor_spd(A, nullspace=None) -> SymFactor:
    return SymFactor(A, nullspace=nullspace)
