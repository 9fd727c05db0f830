import numpy as np
import pytest

from slenderstokes import (
    BoundaryTag,
    ChannelGeometry,
    build_coarse_partition,
    build_rect_tri_mesh,
    build_staggered_grid,
    width_field,
)

D = BoundaryTag.DIRICHLET_NOSLIP
T = BoundaryTag.TRACTION_NEUMANN


def channel(L=2.0, W=1.0, cons=(), bc=None):
    if bc is None:
        bc = {"top": D, "bottom": D, "left": T, "right": T}
    return ChannelGeometry(length=L, width=W, constrictions=cons, bc=bc)


def test_staggered_grid_counts():
    grid = build_staggered_grid(channel(2.0, 1.0), h=0.5)
    assert grid.nx == 4 and grid.ny == 2
    assert grid.active.all()
    xs, ys = grid.cell_centers
    assert np.allclose(xs, [0.25, 0.75, 1.25, 1.75])
    assert np.allclose(ys, [0.25, 0.75])


def test_staggered_grid_requires_even_division():
    with pytest.raises(ValueError):
        build_staggered_grid(channel(10.0, 0.125), h=0.02)


def test_tri_mesh_refinement_halves_h():
    geom = channel(2.0, 1.0)
    m1 = build_rect_tri_mesh(geom, level=1)
    m2 = build_rect_tri_mesh(geom, level=2)
    assert m2.h == pytest.approx(m1.h / 2)
    assert m2.num_triangles == 4 * m1.num_triangles
    # positive orientation everywhere
    v = m2.vertices[m2.triangles]
    e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
    area2 = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    assert (area2 > 0).all()
    # triangle areas tile the rectangle
    assert area2.sum() / 2 == pytest.approx(2.0)


def test_tri_mesh_boundary_tags_cover_all_sides():
    geom = channel(2.0, 1.0)
    mesh = build_rect_tri_mesh(geom, level=1)
    tags = set(mesh.boundary_tags)
    assert tags == {D, T}
    # total boundary length equals the perimeter
    e = mesh.vertices[mesh.boundary_edges]
    assert np.hypot(*(e[:, 1] - e[:, 0]).T).sum() == pytest.approx(6.0)


def test_coarse_partition_unit_cells():
    part = build_coarse_partition(channel(10.0, 1.0), target_H=1.0)
    assert part.num_cells == 10
    assert np.allclose(part.volumes, 1.0)
    assert len(part.interior_faces) == 9
    assert len(part.neumann_faces) == 2  # traction on both ends
    assert part.coarseness <= 1.0 + 1e-12


def test_coarse_partition_no_neumann_faces_when_dirichlet():
    bc = {s: D for s in ("top", "bottom", "left", "right")}
    part = build_coarse_partition(channel(4.0, 1.0, bc=bc), target_H=1.0)
    assert len(part.neumann_faces) == 0


def test_width_field_constriction():
    geom = channel(10.0, 1.0, cons=((5.0, 0.3),))
    W = width_field(geom)
    assert W.constant is None
    assert W.min() == pytest.approx(1.0 - 2 * 0.3, rel=1e-9)
    # far from the notch the full width is recovered
    assert float(W(np.array([0.5]))[0]) == pytest.approx(1.0)


def test_constricted_grid_masks_cells():
    geom = channel(10.0, 1.0, cons=((5.0, 0.25),))
    grid = build_staggered_grid(geom, h=0.125)
    assert grid.active.any() and not grid.active.all()
    # the masked region is symmetric about the centerline
    assert np.array_equal(grid.active, grid.active[:, ::-1])
