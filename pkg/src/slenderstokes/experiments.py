"""Benchmark experiments: channel sweeps, coefficient sweeps, constriction and
convergence studies, and norm-equivalence scans.

Every experiment maps a config to a list of CSV-ready rows. Sweep points are
independent; they run on a thread pool and are merged back in config order so
repeated runs with the same config and seed produce identical tables.
"""

from __future__ import annotations

import hashlib
import json
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np
import scipy

from . import mms
from .fv import BCData, assemble_fv, fv_error_norms, solve_fv
from .fem import assemble_th, th_error_norms
from .geometry import (
    BoundaryTag,
    ChannelGeometry,
    build_coarse_partition,
    build_rect_tri_mesh,
    build_staggered_grid,
)
from .krylov import minres
from .norms import NormReport, norm_equivalence_scan
from .precond import (
    LUBRICATION_ALPHA,
    PreconditionerSpec,
    condition_estimate,
    make_preconditioner,
)

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "EXPERIMENTS",
    "BC_PRESETS",
    "run_experiment",
    "config_hash",
    "meta_sidecar",
]

EXPERIMENTS = ("channel", "alpha_sweep", "aniso", "constriction",
               "convergence", "norm_equiv")

D = BoundaryTag.DIRICHLET_DATA
T = BoundaryTag.TRACTION_NEUMANN
F = BoundaryTag.FREE_SLIP

# boundary-condition presets: long walls vs channel ends
BC_PRESETS = {
    "long_noslip": {"top": D, "bottom": D, "left": T, "right": T},
    "long_noslip_traction": {"top": D, "bottom": T, "left": T, "right": T},
    "freeslip_noslip": {"top": F, "bottom": D, "left": T, "right": T},
    "freeslip_only": {"top": F, "bottom": F, "left": T, "right": T},
    "all_dirichlet": {"top": D, "bottom": D, "left": D, "right": D},
}

_DEFAULT_ALPHA_GRID = tuple(np.geomspace(0.01, 4.0, 24))


@dataclass
class ExperimentConfig:
    experiment: str = "channel"
    backend: str = "th"
    preset: str = "long_noslip"
    preconds: tuple = ("standard", "sum", "coarse")
    alpha: float = 1.0
    lengths: tuple = (1.0, 3.0, 5.0, 10.0, 20.0, 50.0)
    width: float = 1.0
    levels: tuple = (1, 2)          # Taylor-Hood refinement levels
    h_values: tuple = (0.125,)      # finite-volume mesh sizes
    alpha_grid: tuple = _DEFAULT_ALPHA_GRID
    beta_grid: tuple = (1000.0, 100.0, 10.0, 1.0, 0.1, 0.01)
    widths: tuple = (1.0, 0.24, 0.12)   # anisotropic sweep cross-sections
    r_grid: tuple = (0.1, 0.2, 0.3, 0.4, 0.45, 0.46, 0.47, 0.48, 0.49)
    coarse_H: float | None = None
    rtol: float = 1e-12
    maxit: int = 2000
    seed: int = 0
    samples: int = 50
    workers: int = 4

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.backend not in ("fv", "th"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.preset not in BC_PRESETS:
            raise ValueError(f"unknown bc preset {self.preset!r}")
        for k in self.preconds:
            if k not in ("standard", "sum", "coarse", "varw", "aniso"):
                raise ValueError(f"unknown preconditioner {k!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        for k, v in kw.items():
            if isinstance(v, list):
                kw[k] = tuple(v)
        return cls(**kw)

    def override(self, key: str, raw: str) -> "ExperimentConfig":
        if key not in self.__dataclass_fields__:
            raise ValueError(f"unknown config key {key!r}")
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        if isinstance(val, list):
            val = tuple(val)
        return replace(self, **{key: val})


@dataclass
class ResultRow:
    L: float
    W: float
    h: float
    level: int
    backend: str
    precond: str
    alpha: float
    beta: float
    cond_estimate: float
    minres_iters: int
    converged: bool
    seed: int
    wall_time_s: float

    COLUMNS = ("L", "W", "h", "level", "backend", "precond", "alpha", "beta",
               "cond_estimate", "minres_iters", "converged", "seed",
               "wall_time_s")

    def csv_row(self):
        return (self.L, self.W, self.h, self.level, self.backend, self.precond,
                self.alpha, self.beta, self.cond_estimate, self.minres_iters,
                int(self.converged), self.seed, round(self.wall_time_s, 3))


def _build_system(cfg: ExperimentConfig, L: float, W: float,
                  h: float | None = None, level: int | None = None,
                  constrictions=()):
    geom = ChannelGeometry(length=L, width=W, constrictions=constrictions,
                           bc=dict(BC_PRESETS[cfg.preset]))
    data = BCData(velocity=mms.velocity, traction=mms.traction)
    if cfg.backend == "fv":
        grid = build_staggered_grid(geom, h)
        return assemble_fv(grid, f=mms.body_force, bc_data=data), geom
    mesh = build_rect_tri_mesh(geom, level=level)
    return assemble_th(mesh, f=mms.body_force, bc_data=data), geom


def _consistent_rhs(system) -> np.ndarray:
    """Project the load onto the range of the (possibly singular) operator."""
    b = system.rhs()
    if system.singular_velocity:
        for zu in system.velocity_nullspace:
            z = np.concatenate([zu, np.zeros(system.n_pressure)])
            b = b - z * (z @ b) / (z @ z)
    if system.singular_pressure:
        z = np.concatenate([np.zeros(system.n_velocity),
                            np.ones(system.n_pressure)])
        b = b - z * (z @ b) / (z @ z)
    return b


def _solve_task(cfg: ExperimentConfig, system, spec: PreconditionerSpec,
                part=None):
    t0 = time.perf_counter()
    P = make_preconditioner(spec, system, part)
    x, rep = minres(system.operator(), P, _consistent_rhs(system),
                    rtol=cfg.rtol, maxit=cfg.maxit)
    cond = condition_estimate(system, P, seed=cfg.seed)
    wall = time.perf_counter() - t0
    return float(cond), int(rep.iterations), bool(rep.converged), wall


def _spec_for(kind: str, cfg: ExperimentConfig,
              alpha: float | None = None) -> PreconditionerSpec:
    a = cfg.alpha if alpha is None else alpha
    return PreconditionerSpec(kind=kind, alpha=a)


def _map_tasks(cfg: ExperimentConfig, fn, tasks: list):
    if cfg.workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
        return list(ex.map(fn, tasks))


def run_channel(cfg: ExperimentConfig):
    """Condition numbers and iteration counts across channel lengths,
    refinement levels and preconditioners."""
    resolutions = cfg.h_values if cfg.backend == "fv" else cfg.levels
    tasks = [(L, res, kind) for L in cfg.lengths for res in resolutions
             for kind in cfg.preconds]

    def work(task):
        L, res, kind = task
        if cfg.backend == "fv":
            system, geom = _build_system(cfg, L, cfg.width, h=res)
            h, level = res, -1
        else:
            system, geom = _build_system(cfg, L, cfg.width, level=res)
            h, level = system.meta["mesh"].h, res
        part = None
        if kind == "coarse":
            part = build_coarse_partition(geom, target_H=cfg.coarse_H)
        cond, iters, ok, wall = _solve_task(cfg, system, _spec_for(kind, cfg), part)
        return ResultRow(L, cfg.width, h, level, cfg.backend, kind, cfg.alpha,
                         float("nan"), cond, iters, ok, cfg.seed, wall)

    return _map_tasks(cfg, work, tasks)


def run_alpha_sweep(cfg: ExperimentConfig):
    """Condition number vs the coefficient weight alpha at fixed geometry."""
    L = cfg.lengths[0]
    if cfg.backend == "fv":
        system, geom = _build_system(cfg, L, cfg.width, h=cfg.h_values[0])
        h, level = cfg.h_values[0], -1
    else:
        level = cfg.levels[0]
        system, geom = _build_system(cfg, L, cfg.width, level=level)
        h = system.meta["mesh"].h
    kind = cfg.preconds[0] if cfg.preconds else "sum"
    part = build_coarse_partition(geom, target_H=cfg.coarse_H) if kind == "coarse" else None

    def work(alpha):
        cond, iters, ok, wall = _solve_task(
            cfg, system, _spec_for(kind, cfg, alpha=alpha), part)
        return ResultRow(L, cfg.width, h, level, cfg.backend, kind,
                         float(alpha), float("nan"), cond, iters, ok,
                         cfg.seed, wall)

    return _map_tasks(cfg, work, list(cfg.alpha_grid))


def run_aniso(cfg: ExperimentConfig):
    """Anisotropically weighted pressure Laplacian: long-direction weight is
    the lubrication prefactor, short-direction weight is swept through beta."""
    if cfg.backend != "fv":
        raise ValueError("anisotropic sweep runs on the finite-volume backend")
    L = cfg.lengths[0]
    h = cfg.h_values[0]
    systems = {}
    for W in cfg.widths:
        systems[W] = _build_system(cfg, L, W, h=h)[0]

    def work(task):
        W, beta = task
        spec = PreconditionerSpec(
            kind="aniso", alpha_long=LUBRICATION_ALPHA,
            alpha_short=beta / 12.0 * (L / W) ** 2)
        cond, iters, ok, wall = _solve_task(cfg, systems[W], spec)
        return ResultRow(L, W, h, -1, "fv", "aniso", LUBRICATION_ALPHA,
                         float(beta), cond, iters, ok, cfg.seed, wall)

    tasks = [(W, beta) for W in cfg.widths for beta in cfg.beta_grid]
    return _map_tasks(cfg, work, tasks)


def _constriction_h(r: float, L: float) -> float:
    """Largest power-of-two mesh size below half the remaining gap."""
    gap = 1.0 - 2.0 * r
    h = 0.25
    while h > 0.5 * gap:
        h /= 2.0
    return h


def run_constriction(cfg: ExperimentConfig):
    """Constricted channel: constant-minimum-width weighting vs the
    variable-width coefficient, across notch depths r."""
    if cfg.backend != "fv":
        raise ValueError("constriction study runs on the finite-volume backend")
    L = cfg.lengths[0]
    kinds = [k for k in cfg.preconds if k in ("sum", "varw")] or ["sum", "varw"]
    tasks = [(r, kind) for r in cfg.r_grid for kind in kinds]

    def work(task):
        r, kind = task
        h = cfg.h_values[0] if len(cfg.r_grid) == 1 else _constriction_h(r, L)
        system, geom = _build_system(cfg, L, 1.0, h=h,
                                     constrictions=((L / 2.0, r),))
        cond, iters, ok, wall = _solve_task(cfg, system, _spec_for(kind, cfg))
        return ResultRow(L, 1.0 - 2.0 * r, h, -1, "fv", kind, cfg.alpha,
                         float("nan"), cond, iters, ok, cfg.seed, wall)

    return _map_tasks(cfg, work, tasks)


CONVERGENCE_COLUMNS = ("h", "level", "backend", "err_p", "err_ux", "err_uy",
                       "order_p", "order_ux", "order_uy")


def run_convergence(cfg: ExperimentConfig):
    """Manufactured-solution errors and observed orders on a (0,2)x(0,1)
    channel; finite volumes report per-dof RMS errors at the staggered nodes,
    Taylor-Hood reports the H1 velocity and L2 pressure errors."""
    rows = []
    if cfg.backend == "fv":
        errs = []
        for h in cfg.h_values:
            system, _ = _build_system(cfg, 2.0, 1.0, h=h)
            u, p = solve_fv(system, wall_extrapolation=1)
            errs.append(fv_error_norms(system, u, p, mms.velocity, mms.pressure))
        for k, h in enumerate(cfg.h_values):
            ep, eux, euy = errs[k]
            if k == 0:
                op = oux = ouy = float("nan")
            else:
                ratio = np.log(cfg.h_values[k - 1] / h)
                pp, pux, puy = errs[k - 1]
                op = np.log(pp / ep) / ratio
                oux = np.log(pux / eux) / ratio
                ouy = np.log(puy / euy) / ratio
            rows.append((h, -1, "fv", ep, eux, euy, op, oux, ouy))
    else:
        errs = []
        hs = []
        for level in cfg.levels:
            system, _ = _build_system(cfg, 2.0, 1.0, level=level)
            from .system import solve_direct

            u, p = solve_direct(system)
            eu, ep = th_error_norms(system, u, p, mms.velocity, mms.velocity_gradient,
                                    mms.pressure)
            errs.append((ep, eu))
            hs.append(system.meta["mesh"].h)
        for k, level in enumerate(cfg.levels):
            ep, eu = errs[k]
            if k == 0:
                op = ou = float("nan")
            else:
                ratio = np.log(hs[k - 1] / hs[k])
                pp, pu = errs[k - 1]
                op = np.log(pp / ep) / ratio
                ou = np.log(pu / eu) / ratio
            rows.append((hs[k], level, "th", ep, eu, eu, op, ou, ou))
    return rows


def run_norm_equiv(cfg: ExperimentConfig):
    reports = norm_equivalence_scan(cfg.lengths, width=cfg.width,
                                    h=cfg.h_values[0], samples=cfg.samples,
                                    seed=cfg.seed)
    return reports


def run_experiment(cfg: ExperimentConfig):
    """Dispatch; returns (columns, csv rows, all_converged)."""
    if cfg.experiment == "channel":
        rows = run_channel(cfg)
    elif cfg.experiment == "alpha_sweep":
        rows = run_alpha_sweep(cfg)
    elif cfg.experiment == "aniso":
        rows = run_aniso(cfg)
    elif cfg.experiment == "constriction":
        rows = run_constriction(cfg)
    elif cfg.experiment == "convergence":
        return CONVERGENCE_COLUMNS, run_convergence(cfg), True
    else:
        reports = run_norm_equiv(cfg)
        return NormReport.CSV_COLUMNS, [r.csv_row() for r in reports], True
    ok = all(r.converged for r in rows)
    return ResultRow.COLUMNS, [r.csv_row() for r in rows], ok


def config_hash(cfg: ExperimentConfig) -> str:
    canon = json.dumps(cfg.to_dict(), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def meta_sidecar(cfg: ExperimentConfig) -> dict:
    from . import __version__

    return {
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "versions": {
            "slenderstokes": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
