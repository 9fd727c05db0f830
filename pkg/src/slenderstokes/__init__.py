"""Aspect-ratio-robust block preconditioning for Stokes flow in slender channels.

The package provides channel geometries (triangulations, MAC grids, coarse quad
partitions), two Stokes discretizations (staggered-grid finite volumes and
Taylor-Hood finite elements), a family of block-diagonal preconditioners built
from mass and weighted pressure-Laplacian solves, preconditioned MINRES with
Lanczos condition-number estimation, sum-norm / inf-sup-norm diagnostics, and a
benchmark CLI that writes CSV tables and figures.
"""

from .geometry import (
    BoundaryTag,
    ChannelGeometry,
    CoarsePartition,
    StaggeredGrid,
    TriMesh,
    WidthField,
    build_coarse_partition,
    build_rect_tri_mesh,
    build_staggered_grid,
    width_field,
)
from .sparsela import (
    BlockDiagMap,
    LinearMap,
    MatrixMap,
    SymFactor,
    block_diag,
    factor_spd,
    saddle_operator,
    spmv,
)
from .krylov import SolveReport, dense_eig_oracle, estimate_extreme_eigs, minres
from .fv import BCData, StokesSystem, assemble_fv, fv_error_norms, solve_fv
from .fem import assemble_th, expand_velocity, th_error_norms
from .precond import (
    LUBRICATION_ALPHA,
    BlockPreconditioner,
    PreconditionerSpec,
    assemble_coarse_laplacian,
    assemble_pressure_laplacian,
    cross_section_prefactor,
    l2_projection_Q_H,
    make_preconditioner,
)
from .norms import (
    NormReport,
    SchurNorm,
    SumNorm,
    coarse_seminorm,
    infsup_constant,
    jump_identity_check,
    norm_equivalence_scan,
    schur_norm,
    sum_norm,
)
from .experiments import BC_PRESETS, ExperimentConfig, ResultRow, run_experiment
from .mms import mms_fields

__version__ = "0.1.0"
