"""Pressure-norm diagnostics for slender channels.

Implements the sum norm (a K-functional splitting the pressure into an L2
part and a width-weighted H1 part), the discrete inf-sup norm induced by the
Schur complement, the coarse jump seminorm, the two-cell jump identity, and a
scan that measures how the equivalence constants between these norms behave
as the channel gets longer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .fv import BCData, assemble_fv
from .geometry import (
    BoundaryTag,
    ChannelGeometry,
    CoarsePartition,
    build_coarse_partition,
    build_staggered_grid,
    width_field,
)
from .precond import assemble_coarse_laplacian, assemble_pressure_laplacian, l2_projection_Q_H
from .sparsela import SymFactor
from .system import StokesSystem

__all__ = [
    "NormReport",
    "SumNorm",
    "SchurNorm",
    "sum_norm",
    "schur_norm",
    "infsup_constant",
    "coarse_seminorm",
    "jump_identity_check",
    "norm_equivalence_scan",
]

_DENSE_CAP = 4000


def _project_zero_mean(q: np.ndarray, M: sp.csr_matrix) -> np.ndarray:
    w = np.asarray(M @ np.ones(M.shape[0]))
    return q - (w @ q) / w.sum()


class SumNorm:
    """Cached evaluator of the sum norm ||q||_{L2 + W H1}.

    The norm is the K-functional min over splittings q = q0 + q1 of
    ||q0||_L2 + W |q1|_H1; its exact discrete value follows from the
    minimizer q1 = (M + K)^{-1} M q with K the width-squared-weighted
    pressure Laplacian (weak boundary condition on traction sides):
    norm^2 = q^T M q - q^T M q1.
    """

    def __init__(self, system: StokesSystem, width=None, alpha: float = 1.0):
        self.system = system
        if width is None:
            geom = _geometry(system)
            width = width_field(geom) if geom.constrictions else geom.width
        if callable(width):
            coeff = lambda x, y: (alpha * float(np.asarray(width(x)) ** 2),) * 2
        else:
            c = alpha * float(width) ** 2
            coeff = lambda x, y: (c, c)
        self.K = assemble_pressure_laplacian(system, coeff)
        self.M = system.M_p
        self._fac = SymFactor((self.M + self.K).tocsr())

    def __call__(self, q: np.ndarray) -> float:
        if self.system.singular_pressure:
            q = _project_zero_mean(q, self.M)
        Mq = self.M @ q
        qt = self._fac.solve(Mq)
        val = q @ Mq - qt @ Mq
        return float(np.sqrt(max(val, 0.0)))


class SchurNorm:
    """Cached evaluator of the inf-sup norm ||q||_* = sqrt(q^T B A^{-1} B^T q)."""

    def __init__(self, system: StokesSystem):
        self.system = system
        if system.singular_velocity:
            if not system.velocity_nullspace:
                raise ValueError("singular velocity block without a deflation basis")
            self._fac = SymFactor(system.A, nullspace=system.velocity_nullspace)
        else:
            self._fac = SymFactor(system.A)

    def __call__(self, q: np.ndarray) -> float:
        if self.system.singular_pressure:
            q = _project_zero_mean(q, self.system.M_p)
        t = self.system.B.T @ q
        return float(np.sqrt(max(t @ self._fac.solve(t), 0.0)))


def _geometry(system: StokesSystem):
    meta = system.meta
    return meta["grid"].geometry if "grid" in meta else meta["mesh"].geometry


def sum_norm(q: np.ndarray, system: StokesSystem, width=None,
             alpha: float = 1.0) -> float:
    return SumNorm(system, width=width, alpha=alpha)(q)


def schur_norm(q: np.ndarray, system: StokesSystem) -> float:
    return SchurNorm(system)(q)


def infsup_constant(system: StokesSystem, null_rtol: float = 1e-9) -> float:
    """Discrete inf-sup constant: sqrt of the smallest positive eigenvalue of
    the pencil (B A^{-1} B^T, M_p). Dense computation, small systems only."""
    n = system.n_pressure
    if n > _DENSE_CAP:
        raise ValueError(f"dense pencil limited to {_DENSE_CAP} pressure dofs")
    if system.singular_velocity:
        fac = SymFactor(system.A, nullspace=system.velocity_nullspace)
    else:
        fac = SymFactor(system.A)
    Bt = system.B.toarray().T
    S = system.B @ fac.solve(Bt)
    lam = sla.eigh(0.5 * (S + S.T), system.M_p.toarray(), eigvals_only=True)
    lam = np.sort(lam)
    pos = lam[lam > null_rtol * lam[-1]]
    if pos.size == 0:
        raise ValueError("Schur pencil has no positive eigenvalues")
    return float(np.sqrt(pos[0]))


def coarse_seminorm(q_H: np.ndarray, part: CoarsePartition) -> float:
    """Discrete H1 jump seminorm on the coarse partition: interior jump terms
    plus the weak boundary terms on Neumann faces, each weighted |F| / H_F."""
    K1 = assemble_coarse_laplacian(part, alpha=1.0, width=1.0)
    return float(np.sqrt(max(q_H @ (K1 @ q_H), 0.0)))


def jump_identity_check(q: np.ndarray, weights: np.ndarray,
                        mask_plus: np.ndarray) -> tuple[float, float]:
    """Two-cell identity behind the coarse-preconditioner analysis.

    ``q`` holds fine values over a pair of adjacent cells with quadrature
    weights ``weights``; ``mask_plus`` selects the cells of the second member.
    Returns (lhs, rhs) with lhs = ||q - mean||^2 over the union and
    rhs = (nu_- nu_+ / (nu_- + nu_+)) * (jump of cellwise means)^2.
    lhs >= rhs always; equality iff q is constant on each member.
    """
    q = np.asarray(q, dtype=float)
    w = np.asarray(weights, dtype=float)
    mp = np.asarray(mask_plus, dtype=bool)
    if q.shape != w.shape or q.shape != mp.shape:
        raise ValueError("q, weights, mask_plus must share a shape")
    if not mp.any() or mp.all():
        raise ValueError("need a nonempty pair of cells")
    nu_m = w[~mp].sum()
    nu_p = w[mp].sum()
    two_nubar = nu_m + nu_p
    qbar = (w @ q) / two_nubar
    lhs = float(w @ (q - qbar) ** 2)
    mean_m = (w[~mp] @ q[~mp]) / nu_m
    mean_p = (w[mp] @ q[mp]) / nu_p
    rhs = float(nu_m * nu_p / two_nubar * (mean_p - mean_m) ** 2)
    return lhs, rhs


@dataclass
class NormReport:
    """Per-length summary of the norm-equivalence scan."""

    L: float
    W: float
    h: float
    r_sum_min: float
    r_sum_max: float
    r_L2_max: float
    split_min: float
    split_max: float
    seed: int
    l2: np.ndarray = field(repr=False, default=None)
    sum: np.ndarray = field(repr=False, default=None)
    schur: np.ndarray = field(repr=False, default=None)
    split: np.ndarray = field(repr=False, default=None)

    CSV_COLUMNS = ("L", "W", "h", "r_sum_min", "r_sum_max", "r_L2_max",
                   "split_min", "split_max", "seed")

    def csv_row(self):
        return (self.L, self.W, self.h, self.r_sum_min, self.r_sum_max,
                self.r_L2_max, self.split_min, self.split_max, self.seed)


def _dirichlet_channel(L: float, W: float, h: float) -> StokesSystem:
    geom = ChannelGeometry(length=L, width=W, constrictions=(), bc={
        side: BoundaryTag.DIRICHLET_NOSLIP for side in ("left", "right", "top", "bottom")})
    grid = build_staggered_grid(geom, h)
    return assemble_fv(grid, f=None, bc_data=BCData())


def norm_equivalence_scan(lengths: Sequence[float], width: float = 1.0,
                          h: float = 0.25, samples: int = 50,
                          seed: int = 0,
                          system_factory: Callable | None = None) -> list[NormReport]:
    """Scan channels of growing length at fixed width and mesh size.

    For each length, draws ``samples`` seeded zero-mean Gaussian pressure
    samples plus the adversarial lowest axial mode cos(pi x / L), and records
    the spread of ||q||_* / ||q||_{L2+WH1} (stays bounded as L grows), the
    worst ||q||_{L2} / ||q||_* (grows like L: the standard-preconditioner
    breakdown), and the ratio of ||q||_* to the coarse split quantity
    (||q - Q_H q||^2 + H^2 |Q_H q|^2_{1,H})^{1/2}.
    """
    if system_factory is None:
        system_factory = _dirichlet_channel
    reports = []
    children = np.random.SeedSequence(seed).spawn(len(lengths))
    for L, ss in zip(lengths, children):
        system = system_factory(L, width, h)
        M = system.M_p
        n = system.n_pressure
        snorm = SumNorm(system, width=width)
        stnorm = SchurNorm(system)
        part = build_coarse_partition(_geometry(system), target_H=max(width, 1.0))
        G, M_H = l2_projection_Q_H(system, part)
        K1 = assemble_coarse_laplacian(part, alpha=1.0, width=1.0)
        vols = M_H.diagonal()
        H = float(max(part.cells[:, 1] - part.cells[:, 0]))

        rng = np.random.default_rng(ss)
        qs = [rng.standard_normal(n) for _ in range(samples)]
        if "grid" in system.meta:
            x = system.meta["cell_xy"][:, 0]
        else:
            x = system.meta["pressure_xy"][:, 0]
        qs.append(np.cos(np.pi * x / L))

        l2v, sumv, schv, splitv = [], [], [], []
        for q in qs:
            q = _project_zero_mean(q, M)
            l2v.append(np.sqrt(q @ (M @ q)))
            sumv.append(snorm(q))
            schv.append(stnorm(q))
            qH = (G @ q) / vols
            fluct2 = max(q @ (M @ q) - qH @ (M_H @ qH), 0.0)
            splitv.append(np.sqrt(fluct2 + H * H * (qH @ (K1 @ qH))))
        l2v, sumv, schv, splitv = map(np.asarray, (l2v, sumv, schv, splitv))

        r_sum = schv / sumv
        r_split = schv / splitv
        reports.append(NormReport(
            L=float(L), W=float(width), h=float(h),
            r_sum_min=float(r_sum.min()), r_sum_max=float(r_sum.max()),
            r_L2_max=float((l2v / schv).max()),
            split_min=float(r_split.min()), split_max=float(r_split.max()),
            seed=int(seed), l2=l2v, sum=sumv, schur=schv, split=splitv))
    return reports
