"""Block-diagonal preconditioners for the slender-channel Stokes systems.

Every preconditioner pairs a velocity Laplacian solve with a pressure block
built from a mass solve, optionally augmented by the inverse of a weighted
pressure Laplacian (width-squared coefficient, weakly enforced boundary
condition on traction sides) assembled either on the fine pressure space, or
on a coarse quadrilateral partition of the channel reached through cellwise-
mean L2 projection. An anisotropic variant weights the long and short
directions of the coefficient separately.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import BoundaryTag, CoarsePartition, TriMesh, WidthField, width_field
from .sparsela import LinearMap, SymFactor, finalize_csr
from .system import StokesSystem

__all__ = [
    "PreconditionerSpec",
    "BlockPreconditioner",
    "assemble_pressure_laplacian",
    "assemble_coarse_laplacian",
    "l2_projection_Q_H",
    "make_preconditioner",
    "cross_section_prefactor",
    "LUBRICATION_ALPHA",
]

KINDS = ("standard", "sum", "coarse", "varw", "aniso")
LUBRICATION_ALPHA = 1.0 / 12.0  # parallel-plate mobility prefactor


@dataclass(frozen=True)
class PreconditionerSpec:
    """Recipe for a block preconditioner.

    kind: one of standard / sum / coarse / varw / aniso.
    alpha: scalar coefficient weight (sum, coarse, varw).
    alpha_long, alpha_short: tensor weights for the aniso kind.
    width: constant width override; None picks the geometry width (sum,
    coarse, aniso) or the minimum gap (constricted channels).
    coarse_H: target coarse cell size for the coarse kind.
    """

    kind: str = "sum"
    alpha: float = 1.0
    alpha_long: float = LUBRICATION_ALPHA
    alpha_short: float = LUBRICATION_ALPHA
    width: float | None = None
    coarse_H: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown preconditioner kind {self.kind!r}")
        if self.alpha <= 0 or self.alpha_long <= 0 or self.alpha_short <= 0:
            raise ValueError("coefficient weights must be positive")


def _constant_width(spec: PreconditionerSpec, system: StokesSystem) -> float:
    if spec.width is not None:
        return spec.width
    geom = _geometry(system)
    if geom.constrictions:
        return width_field(geom).min()
    return geom.width


def _geometry(system: StokesSystem):
    meta = system.meta
    if "grid" in meta:
        return meta["grid"].geometry
    return meta["mesh"].geometry


def assemble_pressure_laplacian(system: StokesSystem,
                                coeff: Callable) -> sp.csr_matrix:
    """Weighted pressure Laplacian on the fine pressure space.

    coeff(x, y) -> (c_x, c_y) gives the (possibly anisotropic) diffusion
    coefficient, typically alpha * W(x)^2. For the finite-volume backend this
    is the two-point flux operator over cell faces; for Taylor-Hood it is the
    P1 stiffness matrix with the tensor coefficient. Boundary conditions on
    traction sides are enforced weakly through face penalties (1/H_F) \\int p q
    scaled by the normal-direction coefficient; the operator is singular
    (constants) when no traction side exists.
    """
    if system.backend == "fv":
        return _fv_pressure_laplacian(system, coeff)
    return _th_pressure_laplacian(system, coeff)


def _fv_pressure_laplacian(system: StokesSystem, coeff) -> sp.csr_matrix:
    meta = system.meta
    grid = meta["grid"]
    cell_dof = meta["cell_dof"]
    nx, ny, h = grid.nx, grid.ny, grid.h
    n = system.n_pressure
    gx = grid.geometry.bc
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r); cols.append(c); vals.append(v)

    for i in range(nx):
        for j in range(ny):
            a = cell_dof[i, j]
            if a < 0:
                continue
            xc, yc = (i + 0.5) * h, (j + 0.5) * h
            # interior faces to the right and top neighbours (each pair once)
            if i + 1 < nx and cell_dof[i + 1, j] >= 0:
                b = cell_dof[i + 1, j]
                cx, _ = coeff((i + 1) * h, yc)
                t = cx  # (c * |F| / l_F) with |F| = l_F = h
                add(a, a, t); add(b, b, t); add(a, b, -t); add(b, a, -t)
            if j + 1 < ny and cell_dof[i, j + 1] >= 0:
                b = cell_dof[i, j + 1]
                _, cy = coeff(xc, (j + 1) * h)
                t = cy
                add(a, a, t); add(b, b, t); add(a, b, -t); add(b, a, -t)
            # weak (penalty) terms on traction boundary faces
            if i == 0 and gx["left"] is BoundaryTag.TRACTION_NEUMANN:
                cx, _ = coeff(0.0, yc)
                add(a, a, cx)
            if i == nx - 1 and gx["right"] is BoundaryTag.TRACTION_NEUMANN:
                cx, _ = coeff(nx * h, yc)
                add(a, a, cx)
            if j == 0 and gx["bottom"] is BoundaryTag.TRACTION_NEUMANN:
                _, cy = coeff(xc, 0.0)
                add(a, a, cy)
            if j == ny - 1 and gx["top"] is BoundaryTag.TRACTION_NEUMANN:
                _, cy = coeff(xc, ny * h)
                add(a, a, cy)
    return finalize_csr(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))


def _th_pressure_laplacian(system: StokesSystem, coeff) -> sp.csr_matrix:
    meta = system.meta
    mesh: TriMesh = meta["mesh"]
    verts = mesh.vertices
    tris = mesh.triangles
    n = system.n_pressure
    rows, cols, vals = [], [], []

    for t in range(tris.shape[0]):
        v = verts[tris[t]]
        J = np.array([v[1] - v[0], v[2] - v[0]]).T
        detJ = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        area = 0.5 * abs(detJ)
        Jinv_t = np.linalg.inv(J).T
        gref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        g = gref @ Jinv_t.T  # (3, 2) constant P1 gradients
        xc, yc = v.mean(axis=0)
        cx, cy = coeff(xc, yc)
        Ke = area * (cx * np.outer(g[:, 0], g[:, 0]) + cy * np.outer(g[:, 1], g[:, 1]))
        for a in range(3):
            for b in range(3):
                rows.append(tris[t, a]); cols.append(tris[t, b]); vals.append(Ke[a, b])

    # weak Neumann penalty on traction edges: (c_n / |F|) * edge mass matrix
    edge_mass = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        if tag is not BoundaryTag.TRACTION_NEUMANN:
            continue
        pa, pb = verts[a], verts[b]
        xm, ym = 0.5 * (pa + pb)
        cx, cy = coeff(xm, ym)
        cn = cx if abs(pa[0] - pb[0]) < 1e-12 else cy  # normal-direction weight
        Pe = cn * edge_mass  # 1/H_F cancels the edge length of the mass matrix
        for ia, na in enumerate((a, b)):
            for ib, nb in enumerate((a, b)):
                rows.append(na); cols.append(nb); vals.append(Pe[ia, ib])
    return finalize_csr(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))


def assemble_coarse_laplacian(part: CoarsePartition, alpha: float = 1.0,
                              width=None, use_centroid_distance: bool = False) -> sp.csr_matrix:
    """Jump-form Laplacian on the coarse cells.

    Interior faces contribute (alpha W^2 |F| / H_F) on the jump; Neumann faces
    add the weak boundary penalty. ``use_centroid_distance`` swaps the face
    diameter H_F for the centroid distance l_F (the two-point-flux variant).
    """
    n = part.num_cells
    rows, cols, vals = [], [], []

    def w2(measure):
        if width is None:
            return measure**2  # face measure is the local gap width
        if callable(width):
            return None  # resolved per face below
        return float(width) ** 2

    for cm, cp, H_F, measure, l_F in part.interior_faces:
        d = l_F if use_centroid_distance else H_F
        if callable(width):
            x_face = part.cells[cm][1]
            wloc = float(width(np.array([x_face]))[0])
            c = alpha * wloc**2
        else:
            c = alpha * w2(measure)
        t = c * measure / d
        rows += [cm, cp, cm, cp]; cols += [cm, cp, cp, cm]; vals += [t, t, -t, -t]

    for cell, H_F, measure, l_F in part.neumann_faces:
        d = l_F if use_centroid_distance else H_F
        if callable(width):
            wloc = float(width(np.array([part.cells[cell][0]]))[0])
            c = alpha * wloc**2
        else:
            c = alpha * w2(measure)
        rows.append(cell); cols.append(cell); vals.append(c * measure / d)
    return finalize_csr(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))


def l2_projection_Q_H(system: StokesSystem, part: CoarsePartition):
    """Cellwise-mean projection data between the fine pressure space and the
    coarse partition.

    Returns (G, M_H) where G[i, j] = integral of the j-th fine basis function
    over coarse cell i and M_H = diag(|Omega_i|). The projection acts as
    Q_H q = M_H^{-1} G q (coarse coefficients); the symmetric fine-space
    composite used by the coarse preconditioner is M_h^{-1} G^T K_H^{-1} G
    M_h^{-1}.
    """
    cuts = np.concatenate([part.cells[:, 0], [part.cells[-1, 1]]])

    def slab_of(x):
        k = int(np.searchsorted(cuts, x, side="right") - 1)
        return min(max(k, 0), part.num_cells - 1)

    n = system.n_pressure
    rows, cols, vals = [], [], []
    if system.backend == "fv":
        meta = system.meta
        h = meta["grid"].h
        for c, (x, y) in enumerate(meta["cell_xy"]):
            rows.append(slab_of(x)); cols.append(c); vals.append(h * h)
    else:
        mesh: TriMesh = system.meta["mesh"]
        verts = mesh.vertices
        from .fem import _QPTS, _QWTS, _p1_basis

        p1 = np.array([_p1_basis(x, e) for x, e in _QPTS])
        for t in range(mesh.num_triangles):
            v = verts[mesh.triangles[t]]
            J = np.array([v[1] - v[0], v[2] - v[0]]).T
            detJ = abs(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])
            slabs = set()
            contrib = {}
            for q in range(len(_QWTS)):
                xy = v[0] + J @ _QPTS[q]
                k = slab_of(xy[0])
                slabs.add(k)
                acc = contrib.setdefault(k, np.zeros(3))
                acc += _QWTS[q] * detJ * p1[q]
            if len(slabs) > 2:
                raise ValueError("fine element spans more than two coarse cells")
            for k, acc in contrib.items():
                for a in range(3):
                    rows.append(k); cols.append(mesh.triangles[t, a]); vals.append(acc[a])
    G = finalize_csr(sp.coo_matrix((vals, (rows, cols)), shape=(part.num_cells, n)))
    M_H = sp.diags(part.volumes).tocsr()
    return G, M_H


class BlockPreconditioner(LinearMap):
    """SPD action (r_u, r_p) -> (N r_u, M^{-1} r_p [+ Laplacian term])."""

    def __init__(self, system: StokesSystem, spec: PreconditionerSpec,
                 vel_solve: SymFactor, mass_solve, lap_solve=None,
                 coarse_pack=None):
        self.system = system
        self.spec = spec
        self._vel = vel_solve
        self._mass = mass_solve
        self._lap = lap_solve
        self._coarse = coarse_pack  # (Pi csr, K_H factor)
        self._nu = system.n_velocity

    @property
    def shape(self):
        n = self.system.n_total
        return (n, n)

    def apply_velocity(self, ru: np.ndarray) -> np.ndarray:
        return self._vel.solve(ru)

    def apply_pressure(self, rp: np.ndarray) -> np.ndarray:
        out_p = self._mass(rp)
        if self._lap is not None:
            out_p = out_p + self._lap.solve(rp)
        if self._coarse is not None:
            Pi, kh = self._coarse
            out_p = out_p + Pi @ kh.solve(Pi.T @ rp)
        return out_p

    def apply(self, r: np.ndarray) -> np.ndarray:
        ru, rp = r[: self._nu], r[self._nu :]
        return np.concatenate([self.apply_velocity(ru), self.apply_pressure(rp)])


def _mass_solver(system: StokesSystem):
    M = system.M_p
    d = M.diagonal()
    if M.nnz == system.n_pressure:  # diagonal mass (finite volumes)
        inv = 1.0 / d
        return lambda r: inv[:, None] * r if r.ndim == 2 else inv * r
    fac = SymFactor(M)
    return fac.solve


def make_preconditioner(spec: PreconditionerSpec, system: StokesSystem,
                        part: CoarsePartition | None = None) -> BlockPreconditioner:
    """Build the block preconditioner described by ``spec`` for ``system``."""
    geom = _geometry(system)
    if system.singular_velocity:
        if not system.velocity_nullspace:
            raise ValueError("singular velocity block without a deflation basis")
        vel = SymFactor(system.A, nullspace=system.velocity_nullspace)
    else:
        vel = SymFactor(system.A)
    mass = _mass_solver(system)

    lap = None
    coarse_pack = None
    if spec.kind == "standard":
        pass
    elif spec.kind in ("sum", "varw", "aniso"):
        if spec.kind == "sum":
            W = _constant_width(spec, system)
            c = spec.alpha * W * W
            coeff = lambda x, y: (c, c)
        elif spec.kind == "varw":
            wf = width_field(geom)
            coeff = lambda x, y: (
                spec.alpha * float(np.asarray(wf(x)) ** 2),
            ) * 2
        else:
            W = _constant_width(spec, system)
            coeff = lambda x, y: (spec.alpha_long * W * W, spec.alpha_short * W * W)
        K = assemble_pressure_laplacian(system, coeff)
        if system.singular_pressure:
            lap = SymFactor(K, nullspace=[np.ones(system.n_pressure)])
        else:
            lap = SymFactor(K)
    elif spec.kind == "coarse":
        if part is None:
            raise ValueError("coarse preconditioner requires a coarse partition")
        width = None if not geom.constrictions else width_field(geom)
        if spec.width is not None:
            width = spec.width
        K_H = assemble_coarse_laplacian(part, alpha=spec.alpha, width=width)
        G, M_H = l2_projection_Q_H(system, part)
        if system.singular_pressure:
            kh = SymFactor(K_H, nullspace=[np.ones(part.num_cells)])
        else:
            kh = SymFactor(K_H)
        # fine-space prolongation of coarse constants: M_h^{-1} G^T
        if system.M_p.nnz == system.n_pressure:
            inv = sp.diags(1.0 / system.M_p.diagonal())
            Pi = finalize_csr(inv @ G.T)
        else:
            mfac = SymFactor(system.M_p)
            Pi = finalize_csr(sp.csr_matrix(mfac.solve(G.toarray().T)))
        coarse_pack = (Pi, kh)
    return BlockPreconditioner(system, spec, vel, mass, lap, coarse_pack)


class _ActionMap(LinearMap):
    def __init__(self, n, fn):
        self._n = n
        self._fn = fn

    @property
    def shape(self):
        return (self._n, self._n)

    def apply(self, x):
        return self._fn(x)


SCHUR_DENSE_CAP = 3200


def preconditioned_schur_extremes(system: StokesSystem, P: BlockPreconditioner,
                                  dense_cap: int = SCHUR_DENSE_CAP,
                                  null_rtol: float = 1e-9, seed: int = 0):
    """Extreme eigenvalues (mu_min, mu_max) of the pressure-preconditioned
    Schur complement pencil B A^{-1} B^T q = mu P_p^{-1} q.

    The pencil is symmetric positive (semi-)definite, so both extremes are
    spectrum endpoints: computed densely below ``dense_cap`` pressure dofs
    (exact), otherwise by Lanczos with full reorthogonalization.
    """
    n_p = system.n_pressure
    B = system.B
    Bt = B.T.tocsr()
    vel = P._vel

    if n_p <= dense_cap:
        import scipy.linalg as sla

        # S and P_p densified column-block-wise to bound the peak memory
        S = np.empty((n_p, n_p))
        Pp = np.empty((n_p, n_p))
        eye = np.eye(n_p)
        step = 512
        for lo in range(0, n_p, step):
            hi = min(lo + step, n_p)
            S[:, lo:hi] = B @ vel.solve(Bt[:, lo:hi].toarray())
            Pp[:, lo:hi] = P.apply_pressure(eye[:, lo:hi])
        S = 0.5 * (S + S.T)
        Pp = 0.5 * (Pp + Pp.T)
        Lc = np.linalg.cholesky(Pp)
        mu = sla.eigvalsh(Lc.T @ S @ Lc)
        mu = mu[mu > null_rtol * mu[-1]]
        return float(mu[0]), float(mu[-1])

    from .krylov import estimate_extreme_eigs

    S_map = _ActionMap(n_p, lambda q: B @ vel.solve(Bt @ q))
    Pp_map = _ActionMap(n_p, P.apply_pressure)
    est = estimate_extreme_eigs(S_map, Pp_map, probes=2, seed=seed)
    return float(est.lambda_min_abs), float(est.lambda_max_abs)


def saddle_condition_number(mu_min: float, mu_max: float) -> float:
    """Condition number of the preconditioned saddle operator from the
    Schur-pencil extremes: the spectrum is {1} plus the two branches
    (1 +- sqrt(1 + 4 mu)) / 2 over the pencil eigenvalues mu."""
    lam_max = (1.0 + np.sqrt(1.0 + 4.0 * mu_max)) / 2.0
    lam_min = min(1.0, (np.sqrt(1.0 + 4.0 * mu_min) - 1.0) / 2.0)
    return float(lam_max / lam_min)


def condition_estimate(system: StokesSystem, P: BlockPreconditioner,
                       dense_cap: int = SCHUR_DENSE_CAP,
                       seed: int = 0) -> float:
    mu_min, mu_max = preconditioned_schur_extremes(system, P,
                                                   dense_cap=dense_cap,
                                                   seed=seed)
    return saddle_condition_number(mu_min, mu_max)


def cross_section_prefactor(n: int = 1024, width: float = 1.0,
                            profile: Callable | None = None) -> float:
    """Lubrication prefactor alpha = |int_S u| / (W^2 |S|) from the 1D
    cross-section Poisson problem u'' = 1, u = 0 at the walls.

    For the flat channel profile the analytic value is 1/12; the Poincare
    inequality bounds alpha by 1/pi^2 for any 1D profile.
    """
    if n < 2:
        raise ValueError("need at least 2 intervals")
    W = width
    h = W / n
    # interior nodes 1..n-1, standard second-order difference for u'' = 1
    main = np.full(n - 1, -2.0)
    off = np.ones(n - 2)
    T = sp.diags([off, main, off], (-1, 0, 1)) / (h * h)
    rhs = np.ones(n - 1)
    if profile is not None:
        rhs = profile(np.linspace(h, W - h, n - 1))
    u = spla.spsolve(T.tocsc(), rhs)
    integral = np.trapezoid(np.concatenate([[0.0], u, [0.0]]), dx=h)
    return float(abs(integral) / (W * W * W))
