"""Assembled Stokes saddle-point systems, shared by both discretizations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .sparsela import SaddleMap, finalize_csr


@dataclass
class StokesSystem:
    """Velocity stiffness A, divergence B (velocity -> pressure), pressure
    mass M_p, right-hand sides and boundary bookkeeping."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    M_p: sp.csr_matrix
    f: np.ndarray
    g: np.ndarray
    backend: str  # "fv" or "th"
    singular_pressure: bool
    singular_velocity: bool
    velocity_nullspace: list = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def n_velocity(self) -> int:
        return self.A.shape[0]

    @property
    def n_pressure(self) -> int:
        return self.B.shape[0]

    @property
    def n_total(self) -> int:
        return self.n_velocity + self.n_pressure

    def operator(self) -> SaddleMap:
        return SaddleMap(self.A, self.B)

    def rhs(self) -> np.ndarray:
        return np.concatenate([self.f, self.g])

    def split(self, x: np.ndarray):
        return x[: self.n_velocity], x[self.n_velocity :]


def solve_direct(system: StokesSystem) -> tuple[np.ndarray, np.ndarray]:
    """Sparse direct solve of the full saddle system (non-singular setups)."""
    if system.singular_pressure or system.singular_velocity:
        raise ValueError("direct solve requires a non-singular system")
    K = sp.bmat(
        [[system.A, system.B.T], [system.B, None]], format="csc"
    )
    x = spla.spsolve(K, system.rhs())
    return system.split(x)


def densify_saddle(system: StokesSystem) -> np.ndarray:
    n = system.n_total
    M = np.zeros((n, n))
    nu = system.n_velocity
    M[:nu, :nu] = system.A.toarray()
    M[:nu, nu:] = system.B.toarray().T
    M[nu:, :nu] = system.B.toarray()
    return M


def pressure_mass(diag_values: np.ndarray) -> sp.csr_matrix:
    return finalize_csr(sp.diags(diag_values))
