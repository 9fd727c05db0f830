import numpy as np
import pytest

from slenderstokes import (
    BCData,
    BoundaryTag,
    ChannelGeometry,
    LUBRICATION_ALPHA,
    PreconditionerSpec,
    assemble_coarse_laplacian,
    assemble_fv,
    assemble_th,
    assemble_pressure_laplacian,
    build_coarse_partition,
    build_rect_tri_mesh,
    build_staggered_grid,
    cross_section_prefactor,
    make_preconditioner,
)
from slenderstokes.krylov import condition_number, dense_preconditioned_spectrum
from slenderstokes.precond import (
    condition_estimate,
    preconditioned_schur_extremes,
    saddle_condition_number,
)

D = BoundaryTag.DIRICHLET_NOSLIP
T = BoundaryTag.TRACTION_NEUMANN
F = BoundaryTag.FREE_SLIP


def fv_channel(L=4.0, W=1.0, h=0.25, cons=()):
    geom = ChannelGeometry(length=L, width=W, constrictions=cons,
                           bc={"top": D, "bottom": D, "left": T, "right": T})
    return assemble_fv(build_staggered_grid(geom, h), bc_data=BCData()), geom


def th_channel(L=4.0, level=1, bc=None):
    if bc is None:
        bc = {"top": D, "bottom": D, "left": T, "right": T}
    geom = ChannelGeometry(length=L, width=1.0, constrictions=(), bc=bc)
    return assemble_th(build_rect_tri_mesh(geom, level), bc_data=BCData()), geom


def spd_probe(P, n, seed=0, probes=20):
    rng = np.random.default_rng(seed)
    for _ in range(probes):
        r = rng.standard_normal(n)
        s = rng.standard_normal(n)
        pr = P.apply(r)
        assert r @ pr > 0
        sym_gap = abs(s @ pr - r @ P.apply(s))
        assert sym_gap <= 1e-9 * max(abs(s @ pr), 1.0)


@pytest.mark.parametrize("kind", ["standard", "sum", "coarse", "varw"])
def test_spd_probes_fv(kind):
    cons = ((2.0, 0.25),) if kind == "varw" else ()
    system, geom = fv_channel(cons=cons)
    part = build_coarse_partition(geom) if kind == "coarse" else None
    P = make_preconditioner(PreconditionerSpec(kind=kind), system, part)
    spd_probe(P, system.n_total, seed=hash(kind) % 1000)


def test_spd_probe_aniso():
    system, _ = fv_channel(W=0.5, h=0.125)
    spec = PreconditionerSpec(kind="aniso", alpha_long=LUBRICATION_ALPHA,
                              alpha_short=10.0)
    P = make_preconditioner(spec, system)
    spd_probe(P, system.n_total, seed=7)


@pytest.mark.parametrize("kind", ["standard", "sum", "coarse"])
def test_spd_probes_th(kind):
    system, geom = th_channel()
    part = build_coarse_partition(geom) if kind == "coarse" else None
    P = make_preconditioner(PreconditionerSpec(kind=kind), system, part)
    spd_probe(P, system.n_total, seed=11)


def test_spd_probe_deflated_velocity_block():
    bc = {"top": F, "bottom": F, "left": T, "right": T}
    system, _ = th_channel(L=2.0, bc=bc)
    P = make_preconditioner(PreconditionerSpec(kind="standard"), system)
    # on range(A) the pseudoinverse action is positive
    rng = np.random.default_rng(3)
    for _ in range(10):
        r = np.concatenate([system.A @ rng.standard_normal(system.n_velocity),
                            rng.standard_normal(system.n_pressure)])
        assert r @ P.apply(r) > 0


def test_pressure_laplacian_scales_linearly_in_coefficient():
    system, _ = fv_channel()
    K1 = assemble_pressure_laplacian(system, lambda x, y: (1.0, 1.0))
    K3 = assemble_pressure_laplacian(system, lambda x, y: (3.0, 3.0))
    assert np.allclose((K3 - 3.0 * K1).data, 0.0, atol=1e-12)


def test_coarse_laplacian_chain():
    # unit-cell channel partition: tridiagonal chain over the slabs
    geom = ChannelGeometry(length=6.0, width=1.0, constrictions=(),
                           bc={"top": D, "bottom": D, "left": T, "right": T})
    part = build_coarse_partition(geom, target_H=1.0)
    K = assemble_coarse_laplacian(part, alpha=1.0, width=1.0).toarray()
    assert K.shape == (6, 6)
    # symmetric, diagonally dominant M-matrix structure
    assert np.allclose(K, K.T)
    off = K - np.diag(np.diag(K))
    assert (off <= 1e-14).all()
    # constants are NOT in the kernel: traction ends carry boundary penalties
    assert np.linalg.norm(K @ np.ones(6)) > 1e-8


def test_coarse_laplacian_kernel_without_traction():
    bc = {s: D for s in ("top", "bottom", "left", "right")}
    geom = ChannelGeometry(length=6.0, width=1.0, constrictions=(), bc=bc)
    part = build_coarse_partition(geom, target_H=1.0)
    K = assemble_coarse_laplacian(part, alpha=1.0, width=1.0)
    assert np.linalg.norm(K @ np.ones(part.num_cells)) <= 1e-12


def test_prefactor_unit_interval():
    alpha = cross_section_prefactor(n=1024)
    assert alpha == pytest.approx(1.0 / 12.0, abs=1e-4)
    assert alpha <= 1.0 / np.pi**2 + 1e-12  # Poincare bound


def test_prefactor_width_invariance():
    assert cross_section_prefactor(n=512, width=0.25) == pytest.approx(
        1.0 / 12.0, abs=1e-3)


def test_condition_estimate_matches_dense_saddle_spectrum():
    system, _ = th_channel(L=2.0, level=1)
    P = make_preconditioner(PreconditionerSpec(kind="standard"), system)
    est = condition_estimate(system, P)
    spec = dense_preconditioned_spectrum(system.operator(), P)
    assert est == pytest.approx(condition_number(spec), rel=1e-6)


def test_schur_extremes_lanczos_agrees_with_dense():
    system, _ = th_channel(L=5.0, level=2)
    P = make_preconditioner(PreconditionerSpec(kind="standard"), system)
    mu_d = preconditioned_schur_extremes(system, P)
    mu_l = preconditioned_schur_extremes(system, P, dense_cap=0)
    assert mu_l[0] == pytest.approx(mu_d[0], rel=5e-2)
    assert mu_l[1] == pytest.approx(mu_d[1], rel=5e-2)


def test_saddle_condition_map():
    # mu == 2 on both ends: lambda in {2, -1, 1} -> cond 2
    assert saddle_condition_number(2.0, 2.0) == pytest.approx(2.0)
    # tiny mu_min: negative eigenvalue ~ -mu_min dominates the lower end
    c = saddle_condition_number(1e-4, 1.0)
    lam_max = (1 + np.sqrt(5.0)) / 2
    assert c == pytest.approx(lam_max / ((np.sqrt(1 + 4e-4) - 1) / 2), rel=1e-9)


def test_sum_precond_improves_long_channel():
    system, geom = th_channel(L=20.0, level=1)
    Ps = make_preconditioner(PreconditionerSpec(kind="standard"), system)
    Pm = make_preconditioner(PreconditionerSpec(kind="sum"), system)
    assert condition_estimate(system, Pm) < condition_estimate(system, Ps) / 5
