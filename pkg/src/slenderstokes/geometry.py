"""Channel geometries, meshes, staggered grids and coarse partitions.

All objects are plain immutable containers in dimensionless units: a channel
of length L and width W, optionally narrowed by trapezoidal notches carved
symmetrically into the top and bottom walls. Boundary sides carry tags that
the discretizations translate into no-slip, prescribed-velocity, traction or
free-slip conditions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

# trapezoidal notch profile: flat bottom of this width, linear ramps on each side
NOTCH_PLATEAU = 0.5
NOTCH_RAMP = 0.25

_SIDES = ("top", "bottom", "left", "right")


class BoundaryTag(Enum):
    DIRICHLET_NOSLIP = "noslip"
    DIRICHLET_DATA = "dirichlet_data"
    TRACTION_NEUMANN = "traction"
    FREE_SLIP = "freeslip"

    @property
    def is_dirichlet(self) -> bool:
        return self in (BoundaryTag.DIRICHLET_NOSLIP, BoundaryTag.DIRICHLET_DATA)


@dataclass(frozen=True)
class ChannelGeometry:
    """Rectangular channel (0,L)x(0,W) with optional wall constrictions.

    Each constriction is a pair (x_center, r): a notch of depth r carved into
    both the top and the bottom wall, leaving a gap of W - 2r. r = W/2 would
    block the channel and is rejected.
    """

    length: float
    width: float
    constrictions: tuple[tuple[float, float], ...] = ()
    bc: dict[str, BoundaryTag] = field(
        default_factory=lambda: {s: BoundaryTag.DIRICHLET_NOSLIP for s in _SIDES}
    )

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("channel length and width must be positive")
        for xc, r in self.constrictions:
            if not 0 <= r < self.width / 2:
                raise ValueError(
                    f"constriction depth r={r} must satisfy 0 <= r < W/2={self.width / 2}"
                )
        missing = set(_SIDES) - set(self.bc)
        if missing:
            raise ValueError(f"boundary tags missing for sides: {sorted(missing)}")

    @property
    def has_dirichlet(self) -> bool:
        return any(self.bc[s].is_dirichlet for s in _SIDES)

    @property
    def has_traction(self) -> bool:
        return any(self.bc[s] is BoundaryTag.TRACTION_NEUMANN for s in _SIDES)

    @property
    def singular_pressure(self) -> bool:
        # pressure Laplacians / Schur complement are singular without a traction side
        return not self.has_traction

    @property
    def singular_velocity(self) -> bool:
        # free-slip-only channels admit the rigid x-translation
        return not self.has_dirichlet

    def notch_depth(self, x):
        """Local notch depth r(x) >= 0 from the trapezoidal profile."""
        x = np.asarray(x, dtype=float)
        depth = np.zeros_like(x)
        for xc, r in self.constrictions:
            d = np.abs(x - xc)
            half_plateau = NOTCH_PLATEAU / 2
            ramp = np.clip((half_plateau + NOTCH_RAMP - d) / NOTCH_RAMP, 0.0, 1.0)
            depth = np.maximum(depth, r * np.where(d <= half_plateau, 1.0, ramp))
        return depth

    def local_width(self, x):
        """Gap width W(x) = W - 2 r(x)."""
        return self.width - 2.0 * self.notch_depth(x)


def _parse_bc(value: str) -> BoundaryTag:
    try:
        return BoundaryTag(value.strip())
    except ValueError:
        valid = ", ".join(t.value for t in BoundaryTag)
        raise ValueError(f"unknown boundary condition {value!r}; expected one of {valid}")


def geometry_from_config(text: str) -> ChannelGeometry:
    """Parse a geometry from JSON or simple ``key = value`` lines.

    Recognized keys: length, width, constrictions (list of [x, r] pairs),
    bc.top / bc.bottom / bc.left / bc.right.
    """
    text = text.strip()
    if text.startswith("{"):
        raw = json.loads(text)
    else:
        raw = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            raw[key.strip()] = val.strip()
    bc = {s: BoundaryTag.DIRICHLET_NOSLIP for s in _SIDES}
    for s in _SIDES:
        key = f"bc.{s}"
        if key in raw:
            bc[s] = _parse_bc(str(raw[key]))
        elif isinstance(raw.get("bc"), dict) and s in raw["bc"]:
            bc[s] = _parse_bc(str(raw["bc"][s]))
    cons = raw.get("constrictions", ())
    if isinstance(cons, str):
        cons = json.loads(cons.replace("(", "[").replace(")", "]")) if cons else []
    constrictions = tuple((float(x), float(r)) for x, r in cons)
    return ChannelGeometry(
        length=float(raw["length"]),
        width=float(raw["width"]),
        constrictions=constrictions,
        bc=bc,
    )


@dataclass(frozen=True)
class TriMesh:
    """Conforming triangulation with tagged boundary edges.

    vertices: (nv, 2) coordinates; triangles: (nt, 3) vertex indices with
    positive orientation; boundary_edges: (nb, 2) vertex pairs with a parallel
    array of tags.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: tuple[BoundaryTag, ...]
    h: float
    level: int
    geometry: ChannelGeometry

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    def edge_table(self):
        """Sorted unique edges and the (nt, 3) triangle->edge incidence."""
        t = self.triangles
        raw = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        raw.sort(axis=1)
        edges, inverse = np.unique(raw, axis=0, return_inverse=True)
        tri2edge = inverse.reshape(3, -1).T
        return edges, tri2edge

    def export_ascii(self) -> str:
        """Plain-text dump (vertices, triangles, tagged boundary edges)."""
        lines = [f"vertices {self.num_vertices}"]
        lines += [f"{x:.17g} {y:.17g}" for x, y in self.vertices]
        lines.append(f"triangles {self.num_triangles}")
        lines += [f"{a} {b} {c}" for a, b, c in self.triangles]
        lines.append(f"boundary_edges {len(self.boundary_edges)}")
        lines += [
            f"{a} {b} {tag.value}"
            for (a, b), tag in zip(self.boundary_edges, self.boundary_tags)
        ]
        return "\n".join(lines) + "\n"


def build_rect_tri_mesh(geom: ChannelGeometry, level: int) -> TriMesh:
    """Structured triangulation of the rectangle (0,L)x(0,W).

    The base grid uses near-square cells of size about min(1, W); every cell is
    split along its bottom-left -> top-right diagonal. Each refinement level
    halves h.
    """
    if level < 0:
        raise ValueError("refinement level must be >= 0")
    if geom.constrictions:
        raise ValueError("triangulation supports rectangular channels only")
    L, W = geom.length, geom.width
    base = min(1.0, W)
    nx0 = max(1, round(L / base))
    ny0 = max(1, round(W / base))
    nx, ny = nx0 * 2**level, ny0 * 2**level
    hx, hy = L / nx, W / ny
    h = max(hx, hy)

    xs = np.linspace(0.0, L, nx + 1)
    ys = np.linspace(0.0, W, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    triangles = np.array(tris, dtype=np.int64)

    bedges = []
    btags = []
    for i in range(nx):
        bedges.append((vid(i, 0), vid(i + 1, 0)))
        btags.append(geom.bc["bottom"])
        bedges.append((vid(i, ny), vid(i + 1, ny)))
        btags.append(geom.bc["top"])
    for j in range(ny):
        bedges.append((vid(0, j), vid(0, j + 1)))
        btags.append(geom.bc["left"])
        bedges.append((vid(nx, j), vid(nx, j + 1)))
        btags.append(geom.bc["right"])

    return TriMesh(
        vertices=vertices,
        triangles=triangles,
        boundary_edges=np.array(bedges, dtype=np.int64),
        boundary_tags=tuple(btags),
        h=h,
        level=level,
        geometry=geom,
    )


@dataclass(frozen=True)
class StaggeredGrid:
    """MAC layout on square cells: pressure at cell centers, u_x at vertical
    faces (i=0..nx, j=0..ny-1), u_y at horizontal faces (i=0..nx-1, j=0..ny).

    ``active`` masks out cells inside wall constrictions; faces adjacent to a
    masked cell become no-slip walls.
    """

    nx: int
    ny: int
    h: float
    active: np.ndarray  # (nx, ny) bool
    geometry: ChannelGeometry

    @property
    def cell_centers(self):
        xs = (np.arange(self.nx) + 0.5) * self.h
        ys = (np.arange(self.ny) + 0.5) * self.h
        return xs, ys

    def cell_active(self, i, j) -> bool:
        return 0 <= i < self.nx and 0 <= j < self.ny and bool(self.active[i, j])

    def side_tag(self, side: str) -> BoundaryTag:
        return self.geometry.bc[side]


def build_staggered_grid(geom: ChannelGeometry, h: float) -> StaggeredGrid:
    """Square-cell staggered grid; L/h and W/h must be integers (tol 1e-9)."""
    L, W = geom.length, geom.width
    nx, ny = round(L / h), round(W / h)
    if abs(nx * h - L) > 1e-9 * max(1.0, L) or abs(ny * h - W) > 1e-9 * max(1.0, W):
        raise ValueError(f"h={h} does not evenly divide L={L} and W={W}")
    xs = (np.arange(nx) + 0.5) * h
    ys = (np.arange(ny) + 0.5) * h
    depth = geom.notch_depth(xs)
    active = np.ones((nx, ny), dtype=bool)
    for i in range(nx):
        if depth[i] > 0:
            active[i, :] = (ys > depth[i]) & (ys < W - depth[i])
    if not active.any():
        raise ValueError("constrictions deactivate the entire grid")
    return StaggeredGrid(nx=nx, ny=ny, h=h, active=active, geometry=geom)


@dataclass(frozen=True)
class CoarsePartition:
    """Axis-aligned quad cells covering the active channel.

    Interior faces store the two cell indices, the face diameter H_F, the face
    measure |F| (the active cross-section length) and the centroid distance
    l_F. Neumann faces (on traction sides) store their one cell.
    """

    cells: np.ndarray  # (n, 4): x0, x1, y0, y1
    volumes: np.ndarray
    interior_faces: list  # (cell_minus, cell_plus, H_F, measure, l_F)
    neumann_faces: list  # (cell, H_F, measure, l_F)
    coarseness: float  # C such that W <= C * H_min

    @property
    def num_cells(self) -> int:
        return len(self.volumes)

    def centroids(self):
        c = self.cells
        return np.column_stack([(c[:, 0] + c[:, 1]) / 2, (c[:, 2] + c[:, 3]) / 2])


def build_coarse_partition(geom: ChannelGeometry, target_H: float | None = None) -> CoarsePartition:
    """Partition the channel into near-square quad cells of diameter ~target_H.

    For an unconstricted channel with W=1 and target_H=1 this gives exactly L
    unit cells in a row. For variable-width channels the cell size tracks the
    local gap so the cells stay shape regular.
    """
    L, W = geom.length, geom.width
    if target_H is None:
        target_H = max(W, 1.0)
    if target_H <= 0:
        raise ValueError("target_H must be positive")

    # march along the channel, sizing each slab by the local gap
    cuts = [0.0]
    x = 0.0
    while x < L - 1e-12:
        if geom.constrictions:
            local = float(geom.local_width(np.array([min(x + target_H / 2, L)]))[0])
            step = min(target_H, max(local, 1e-12))
        else:
            step = target_H
        x = min(x + step, L)
        cuts.append(x)
    # merge a trailing sliver into the previous slab
    if len(cuts) > 2 and cuts[-1] - cuts[-2] < 0.5 * (cuts[-2] - cuts[-3]):
        del cuts[-2]
    cuts = np.asarray(cuts)

    cells = []
    vols = []
    widths = []
    for x0, x1 in zip(cuts[:-1], cuts[1:]):
        xm = (x0 + x1) / 2
        w = float(geom.local_width(np.array([xm]))[0])
        r = (W - w) / 2
        cells.append((x0, x1, r, W - r))
        vols.append((x1 - x0) * w)
        widths.append(w)
    cells = np.asarray(cells)
    vols = np.asarray(vols)
    if len(cells) == 0:
        raise ValueError("empty coarse partition")

    interior = []
    for k in range(len(cells) - 1):
        x_face = cells[k][1]
        measure = float(geom.local_width(np.array([x_face]))[0])
        H_F = measure
        c0 = (cells[k][0] + cells[k][1]) / 2
        c1 = (cells[k + 1][0] + cells[k + 1][1]) / 2
        interior.append((k, k + 1, H_F, measure, c1 - c0))

    neumann = []
    if geom.bc["left"] is BoundaryTag.TRACTION_NEUMANN:
        measure = float(geom.local_width(np.array([0.0]))[0])
        neumann.append((0, measure, measure, (cells[0][0] + cells[0][1]) / 2))
    if geom.bc["right"] is BoundaryTag.TRACTION_NEUMANN:
        measure = float(geom.local_width(np.array([L]))[0])
        n = len(cells) - 1
        neumann.append((n, measure, measure, L - (cells[n][0] + cells[n][1]) / 2))

    diam = np.hypot(cells[:, 1] - cells[:, 0], cells[:, 3] - cells[:, 2])
    coarseness = W / float(diam.min())
    return CoarsePartition(
        cells=cells,
        volumes=vols,
        interior_faces=interior,
        neumann_faces=neumann,
        coarseness=coarseness,
    )


@dataclass(frozen=True)
class WidthField:
    """Local channel width W(x), sampled wherever a coefficient is needed."""

    geometry: ChannelGeometry

    @property
    def constant(self) -> float | None:
        return self.geometry.width if not self.geometry.constrictions else None

    def __call__(self, x, y=None):
        return self.geometry.local_width(x)

    def min(self) -> float:
        if self.constant is not None:
            return self.constant
        xs = np.linspace(0.0, self.geometry.length, 4097)
        return float(self.geometry.local_width(xs).min())


def width_field(geom: ChannelGeometry, grid_or_mesh=None) -> WidthField:
    return WidthField(geometry=geom)
