"""Taylor-Hood [P2]^2 x P1 finite elements for the Stokes system on
triangulated channels.

The velocity stiffness is the full-gradient form (grad u, grad v), assembled
per scalar component (the components decouple), the divergence couples into a
continuous P1 pressure, and the saddle operator carries the sign-flipped
pressure so that [[A, B^T], [B, 0]] is symmetric. Dirichlet dofs are
eliminated symmetrically with the boundary data lifted to the right-hand
side; traction sides contribute edge integrals; free-slip on axis-aligned
facets pins the normal velocity component strongly and leaves the tangential
one free (the tangential shear term vanishes naturally).
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.sparse as sp

from .geometry import BoundaryTag, TriMesh
from .sparsela import finalize_csr
from .system import StokesSystem

__all__ = ["assemble_th", "th_error_norms", "p2_scalar_space"]

# 6-point degree-4 quadrature on the reference triangle (weights sum to 1/2)
_QA = 0.445948490915965
_QB = 0.091576213509771
_QPTS = np.array(
    [
        (_QA, _QA), (1 - 2 * _QA, _QA), (_QA, 1 - 2 * _QA),
        (_QB, _QB), (1 - 2 * _QB, _QB), (_QB, 1 - 2 * _QB),
    ]
)
_QWTS = 0.5 * np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)

# 3-point Gauss on [0, 1] for boundary edge integrals
_EDGE_PTS = np.array([0.5 - np.sqrt(0.15), 0.5, 0.5 + np.sqrt(0.15)])
_EDGE_WTS = np.array([5.0, 8.0, 5.0]) / 18.0


def _p2_basis(xi, eta):
    lam = np.array([1.0 - xi - eta, xi, eta])
    n = np.empty(6)
    n[:3] = lam * (2 * lam - 1)
    n[3] = 4 * lam[0] * lam[1]
    n[4] = 4 * lam[1] * lam[2]
    n[5] = 4 * lam[2] * lam[0]
    return n


def _p2_grad(xi, eta):
    """Reference gradients, rows = basis functions."""
    l0 = 1.0 - xi - eta
    g = np.empty((6, 2))
    g[0] = (1 - 4 * l0, 1 - 4 * l0)
    g[1] = (4 * xi - 1, 0.0)
    g[2] = (0.0, 4 * eta - 1)
    g[3] = (4 * (l0 - xi), -4 * xi)
    g[4] = (4 * eta, 4 * xi)
    g[5] = (-4 * eta, 4 * (l0 - eta))
    return g


def _p1_basis(xi, eta):
    return np.array([1.0 - xi - eta, xi, eta])


def p2_scalar_space(mesh: TriMesh):
    """Scalar P2 dof layout: vertex dofs first, then edge-midpoint dofs.

    Returns (n_dofs, coords, tri_dofs) where tri_dofs is (nt, 6) in the
    ordering (v0, v1, v2, e01, e12, e20) matching the reference basis.
    """
    edges, tri2edge = mesh.edge_table()
    nv = mesh.num_vertices
    ne = edges.shape[0]
    coords = np.vstack(
        [mesh.vertices, 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])]
    )
    tri_dofs = np.hstack([mesh.triangles, nv + tri2edge]).astype(np.int64)
    return nv + ne, coords, tri_dofs


def _edge_midpoint_dof(mesh: TriMesh, edges, a, b):
    key = (min(a, b), max(a, b))
    return mesh.num_vertices + edges[key]


def assemble_th(mesh: TriMesh, f: Callable | None = None,
                bc_data=None) -> StokesSystem:
    """Assemble the Taylor-Hood Stokes system on a triangulation."""
    from .fv import BCData  # shared boundary-data container

    bc = bc_data or BCData()
    geom = mesh.geometry
    verts = mesh.vertices
    tris = mesh.triangles
    nt = tris.shape[0]
    nv = verts.shape[0]

    ns, coords, tri_dofs = p2_scalar_space(mesh)
    edges, _ = mesh.edge_table()
    edge_index = {(min(a, b), max(a, b)): k for k, (a, b) in enumerate(edges)}

    # precompute per-quad-point reference basis tables
    p2_n = np.array([_p2_basis(x, e) for x, e in _QPTS])        # (nq, 6)
    p2_g = np.array([_p2_grad(x, e) for x, e in _QPTS])         # (nq, 6, 2)
    p1_n = np.array([_p1_basis(x, e) for x, e in _QPTS])        # (nq, 3)

    ka_rows, ka_cols, ka_vals = [], [], []
    kb_rows, kb_cols, kb_vals = [], [], []   # (q_dof, scalar_dof, d/dx val), d/dy
    kb2_vals = []
    m_rows, m_cols, m_vals = [], [], []
    rhs_full = np.zeros(2 * ns)

    for t in range(nt):
        v = verts[tris[t]]
        J = np.array([v[1] - v[0], v[2] - v[0]]).T       # (2, 2)
        detJ = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        area2 = abs(detJ)
        Jinv_t = np.linalg.inv(J).T
        dofs = tri_dofs[t]
        pdofs = tris[t]

        Ke = np.zeros((6, 6))
        Bx = np.zeros((3, 6))
        By = np.zeros((3, 6))
        for q in range(len(_QWTS)):
            gp = p2_g[q] @ Jinv_t.T                      # physical gradients (6, 2)
            w = _QWTS[q] * area2
            Ke += w * (gp @ gp.T)
            Bx += w * np.outer(p1_n[q], gp[:, 0])
            By += w * np.outer(p1_n[q], gp[:, 1])
            if f is not None:
                xy = v[0] + J @ _QPTS[q]
                f1, f2 = f(xy[0], xy[1])
                rhs_full[dofs] += w * f1 * p2_n[q]
                rhs_full[ns + dofs] += w * f2 * p2_n[q]

        for a in range(6):
            for b in range(6):
                ka_rows.append(dofs[a]); ka_cols.append(dofs[b]); ka_vals.append(Ke[a, b])
        for a in range(3):
            for b in range(6):
                kb_rows.append(pdofs[a]); kb_cols.append(dofs[b])
                kb_vals.append(Bx[a, b]); kb2_vals.append(By[a, b])

        # P1 mass on the triangle
        Me = area2 / 24.0 * (np.ones((3, 3)) + np.eye(3))
        for a in range(3):
            for b in range(3):
                m_rows.append(pdofs[a]); m_cols.append(pdofs[b]); m_vals.append(Me[a, b])

    K = sp.coo_matrix((ka_vals, (ka_rows, ka_cols)), shape=(ns, ns)).tocsr()
    Bx = sp.coo_matrix((kb_vals, (kb_rows, kb_cols)), shape=(nv, ns)).tocsr()
    By = sp.coo_matrix((kb2_vals, (kb_rows, kb_cols)), shape=(nv, ns)).tocsr()
    M_p = finalize_csr(sp.coo_matrix((m_vals, (m_rows, m_cols)), shape=(nv, nv)))

    A_full = sp.block_diag([K, K], format="csr")
    B_full = sp.hstack([Bx, By], format="csr")

    # --- boundary conditions on the scalar dof sets per side -----------------
    # constrained[i] holds the prescribed value; Dirichlet wins over free-slip
    # at shared corners, free-slip constrains only the normal component.
    con_x = {}
    con_y = {}
    dirichlet_nodes = set()

    def side_normal(a, b):
        pa, pb = verts[a], verts[b]
        if abs(pa[1] - pb[1]) < 1e-12:   # horizontal edge
            return (0.0, -1.0) if pa[1] < 1e-12 else (0.0, 1.0)
        return (-1.0, 0.0) if pa[0] < 1e-12 else (1.0, 0.0)

    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        mid = _edge_midpoint_dof(mesh, edge_index, a, b)
        enodes = (int(a), int(b), int(mid))
        if tag.is_dirichlet:
            for node in enodes:
                x, y = coords[node]
                g1, g2 = (bc.vel(x, y) if tag is BoundaryTag.DIRICHLET_DATA else (0.0, 0.0))
                con_x[node] = g1
                con_y[node] = g2
                dirichlet_nodes.add(node)
        elif tag is BoundaryTag.FREE_SLIP:
            pa, pb = verts[a], verts[b]
            if abs(pa[0] - pb[0]) > 1e-12 and abs(pa[1] - pb[1]) > 1e-12:
                raise ValueError("free-slip supported on axis-aligned facets only")
            horizontal = abs(pa[1] - pb[1]) < 1e-12
            for node in enodes:
                if node in dirichlet_nodes:
                    continue
                if horizontal:
                    con_y.setdefault(node, 0.0)
                else:
                    con_x.setdefault(node, 0.0)
        elif tag is BoundaryTag.TRACTION_NEUMANN:
            normal = side_normal(a, b)
            pa, pb = verts[a], verts[b]
            length = float(np.hypot(*(pb - pa)))
            for s, w in zip(_EDGE_PTS, _EDGE_WTS):
                xy = (1 - s) * pa + s * pb
                t1, t2 = bc.trac(xy[0], xy[1], normal)
                # P2 trace along the edge in (a, b, mid) ordering
                tr = np.array([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)])
                for node, val in zip(enodes, tr):
                    rhs_full[node] += w * length * t1 * val
                    rhs_full[ns + node] += w * length * t2 * val

    # Dirichlet wins at corners shared with free-slip: nothing extra needed,
    # dirichlet_nodes was filled first and setdefault respects it via the skip.

    con = {}
    for node, val in con_x.items():
        con[node] = val
    for node, val in con_y.items():
        con[ns + node] = val

    all_dofs = np.arange(2 * ns)
    con_idx = np.array(sorted(con), dtype=np.int64)
    con_val = np.array([con[i] for i in con_idx])
    free = np.setdiff1d(all_dofs, con_idx)

    rhs_u = rhs_full[free]
    if con_idx.size:
        rhs_u = rhs_u - A_full[free][:, con_idx] @ con_val
        rhs_p = -(B_full[:, con_idx] @ con_val)
    else:
        rhs_p = np.zeros(nv)
    A = finalize_csr(A_full[free][:, free])
    B = finalize_csr(B_full[:, free])

    singular_velocity = geom.singular_velocity
    nullspace = []
    if singular_velocity:
        z = np.zeros(2 * ns)
        z[:ns] = 1.0
        zf = z[free]
        if np.linalg.norm(zf) > 0:
            nullspace.append(zf)

    return StokesSystem(
        A=A,
        B=B,
        M_p=M_p,
        f=rhs_u,
        g=rhs_p,
        backend="th",
        singular_pressure=geom.singular_pressure,
        singular_velocity=singular_velocity,
        velocity_nullspace=nullspace,
        meta={
            "mesh": mesh,
            "n_scalar": ns,
            "coords": coords,
            "free": free,
            "con_idx": con_idx,
            "con_val": con_val,
            "tri_dofs": tri_dofs,
            "pressure_xy": verts,
        },
    )


def expand_velocity(system: StokesSystem, u_free: np.ndarray) -> np.ndarray:
    """Full (2*ns,) velocity coefficient vector including constrained dofs."""
    meta = system.meta
    full = np.zeros(2 * meta["n_scalar"])
    full[meta["free"]] = u_free
    if meta["con_idx"].size:
        full[meta["con_idx"]] = meta["con_val"]
    return full


def th_error_norms(system: StokesSystem, u_free: np.ndarray, p: np.ndarray,
                   exact_velocity: Callable, exact_gradient: Callable,
                   exact_pressure: Callable):
    """(H1-seminorm velocity error, L2 pressure error) by elementwise
    quadrature against the exact fields."""
    meta = system.meta
    mesh: TriMesh = meta["mesh"]
    ns = meta["n_scalar"]
    tri_dofs = meta["tri_dofs"]
    verts = mesh.vertices
    tris = mesh.triangles
    full = expand_velocity(system, u_free)

    p2_g = np.array([_p2_grad(x, e) for x, e in _QPTS])
    p1_n = np.array([_p1_basis(x, e) for x, e in _QPTS])

    err_h1 = 0.0
    err_p = 0.0
    for t in range(tris.shape[0]):
        v = verts[tris[t]]
        J = np.array([v[1] - v[0], v[2] - v[0]]).T
        detJ = abs(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])
        Jinv_t = np.linalg.inv(J).T
        dofs = tri_dofs[t]
        u1 = full[dofs]
        u2 = full[ns + dofs]
        pe = p[tris[t]]
        for q in range(len(_QWTS)):
            gp = p2_g[q] @ Jinv_t.T
            w = _QWTS[q] * detJ
            xy = v[0] + J @ _QPTS[q]
            g11, g12, g21, g22 = exact_gradient(xy[0], xy[1])
            dh = np.array(
                [u1 @ gp[:, 0] - g11, u1 @ gp[:, 1] - g12,
                 u2 @ gp[:, 0] - g21, u2 @ gp[:, 1] - g22]
            )
            err_h1 += w * float(dh @ dh)
            err_p += w * float(pe @ p1_n[q] - exact_pressure(xy[0], xy[1])) ** 2
    return float(np.sqrt(err_h1)), float(np.sqrt(err_p))
