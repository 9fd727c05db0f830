"""Preconditioned MINRES, Lanczos extreme-eigenvalue estimation for symmetric
pencils, and a dense generalized-eigenproblem oracle for small systems.

The MINRES convergence criterion is the preconditioned residual norm ratio.
Condition numbers of a preconditioned operator P*A (P symmetric positive
definite as a map, A symmetric indefinite) are estimated from a Lanczos
process with full reorthogonalization run in the P-weighted inner product;
for small systems a dense pencil solve provides the reference spectrum.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .sparsela import LinearMap, MatrixMap

DENSE_ORACLE_CAP = 4000


@dataclass
class SolveReport:
    iterations: int
    converged: bool
    residuals: list = field(default_factory=list)
    lambda_min_abs: float = np.nan
    lambda_max_abs: float = np.nan
    seed: int | None = None
    wall_time_s: float = 0.0

    @property
    def condition_estimate(self) -> float:
        return self.lambda_max_abs / self.lambda_min_abs

    def to_json(self) -> str:
        return json.dumps(
            {
                "iterations": self.iterations,
                "converged": self.converged,
                "cond_estimate": None
                if np.isnan(self.lambda_min_abs)
                else self.condition_estimate,
                "lambda_min_abs": None
                if np.isnan(self.lambda_min_abs)
                else self.lambda_min_abs,
                "lambda_max_abs": None
                if np.isnan(self.lambda_max_abs)
                else self.lambda_max_abs,
                "seed": self.seed,
                "wall_time_s": self.wall_time_s,
            }
        )


class IndefinitePreconditioner(RuntimeError):
    pass


def _as_map(A) -> LinearMap:
    return A if isinstance(A, LinearMap) else MatrixMap(A)


def minres(A, P, b, rtol: float = 1e-12, maxit: int = 2000, x0=None):
    """Preconditioned MINRES for symmetric A with SPD preconditioner action P.

    Stops when the preconditioned residual norm has dropped by rtol relative
    to its initial value. The report carries the extreme Ritz values of the
    Lanczos tridiagonal accumulated during the iteration.
    """
    A = _as_map(A)
    P = _as_map(P)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    t0 = time.perf_counter()

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r1 = b - A.apply(x) if x0 is not None else b.copy()
    y = P.apply(r1)
    beta1 = float(r1 @ y)
    if beta1 < 0:
        raise IndefinitePreconditioner("negative <Pr, r> on the initial residual")
    if beta1 == 0:
        return x, SolveReport(iterations=0, converged=True, residuals=[0.0])
    beta1 = np.sqrt(beta1)

    oldb = 0.0
    beta = beta1
    dbar = epsln = 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1
    alphas: list[float] = []
    betas: list[float] = []
    history = [1.0]
    converged = False
    itn = 0

    while itn < maxit:
        itn += 1
        s = 1.0 / beta
        v = s * y
        y = A.apply(v)
        if itn >= 2:
            y -= (beta / oldb) * r1
        alfa = float(v @ y)
        y -= (alfa / beta) * r2
        r1 = r2
        r2 = y
        y = P.apply(r2)
        oldb = beta
        beta = float(r2 @ y)
        if beta < 0:
            raise IndefinitePreconditioner(f"negative <Pr, r> at iteration {itn}")
        beta = np.sqrt(beta)
        alphas.append(alfa)
        betas.append(beta)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.sqrt(gbar * gbar + beta * beta), np.finfo(float).eps)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x += phi * w
        history.append(phibar / beta1)

        if phibar / beta1 <= rtol:
            converged = True
            break
        if beta <= 1e-300:  # Lanczos breakdown: exact solution reached
            converged = True
            break

    lam_min, lam_max = np.nan, np.nan
    if alphas:
        T_diag = np.asarray(alphas)
        T_off = np.asarray(betas[:-1])
        theta = scipy.linalg.eigvalsh_tridiagonal(T_diag, T_off)
        absed = np.abs(theta)
        lam_min, lam_max = float(absed.min()), float(absed.max())

    report = SolveReport(
        iterations=itn,
        converged=converged,
        residuals=history,
        lambda_min_abs=lam_min,
        lambda_max_abs=lam_max,
        wall_time_s=time.perf_counter() - t0,
    )
    return x, report


class EigEstimate(NamedTuple):
    lambda_min_abs: float
    lambda_max_abs: float
    low_confidence: bool = False
    steps: int = 0


def _lanczos_pencil(A: LinearMap, P: LinearMap, rng, max_steps: int, ritz_tol: float):
    """Lanczos with full reorthogonalization for the pencil (A, P^{-1}).

    Iterates residual-space vectors v_k with z_k = P v_k, orthonormal in the
    sense v_i . z_j = delta_ij; the resulting tridiagonal carries the Ritz
    values of P*A. The start vector is pushed through A once, confining the
    iteration to range(A) so operator nullspaces never enter.
    """
    n = A.shape[0]
    v = A.apply(P.apply(rng.standard_normal(n)))
    z = P.apply(v)
    beta = np.sqrt(max(float(v @ z), 0.0))
    if beta == 0:
        return np.array([0.0]), np.array([]), 0
    v /= beta
    z /= beta
    V = np.empty((n, max_steps + 1))
    Z = np.empty((n, max_steps + 1))
    V[:, 0] = v
    Z[:, 0] = z
    alphas: list[float] = []
    betas: list[float] = []
    prev_ext = None
    for k in range(max_steps):
        w = A.apply(Z[:, k])
        if k > 0:
            w -= betas[-1] * V[:, k - 1]
        alpha = float(Z[:, k] @ w)
        w -= alpha * V[:, k]
        alphas.append(alpha)
        # full reorthogonalization in the P inner product (two passes)
        for _ in range(2):
            w -= V[:, : k + 1] @ (Z[:, : k + 1].T @ w)
        zw = P.apply(w)
        beta = float(w @ zw)
        if beta <= 0 or np.sqrt(max(beta, 0.0)) <= 1e-13 * abs(alphas[0]):
            betas.append(0.0)
            break
        beta = np.sqrt(beta)
        betas.append(beta)
        V[:, k + 1] = w / beta
        Z[:, k + 1] = zw / beta
        # periodic convergence check on the extreme converged Ritz values
        if (k + 1) % 10 == 0 or k + 1 == max_steps:
            a_arr, b_arr = np.asarray(alphas), np.asarray(betas)
            ext = _converged_extremes(a_arr, b_arr)
            if ext is not None and prev_ext is not None:
                dmin = abs(ext[0] - prev_ext[0]) / max(abs(ext[0]), 1e-300)
                dmax = abs(ext[1] - prev_ext[1]) / max(abs(ext[1]), 1e-300)
                # converged extremes must also agree with the raw Ritz
                # extremes, otherwise an unconverged pair still sits outside
                theta = scipy.linalg.eigvalsh_tridiagonal(
                    a_arr, b_arr[: len(a_arr) - 1])
                raw_min, raw_max = np.abs(theta).min(), np.abs(theta).max()
                draw = max(abs(ext[0] - raw_min) / max(abs(ext[0]), 1e-300),
                           abs(ext[1] - raw_max) / max(abs(ext[1]), 1e-300))
                if dmin <= ritz_tol and dmax <= ritz_tol and draw <= ritz_tol:
                    break
            prev_ext = ext
    return np.asarray(alphas), np.asarray(betas), len(alphas)


def _converged_extremes(alphas, betas):
    """Extreme-magnitude Ritz values whose residual bound is small."""
    k = len(alphas)
    if k == 0:
        return None
    off = betas[: k - 1]
    theta, S = scipy.linalg.eigh_tridiagonal(alphas, off)
    resid = betas[k - 1] * np.abs(S[-1, :]) if k <= len(betas) else np.zeros(k)
    absed = np.abs(theta)
    ok = resid <= 1e-4 * max(absed.max(), 1e-300)
    lam_max = absed.max()
    if not ok.any():
        return None
    lam_min = absed[ok].min()
    return lam_min, lam_max


def estimate_extreme_eigs(A, P, probes: int = 2, tol: float = 1e-3,
                          max_steps: int | None = None, seed: int = 0) -> EigEstimate:
    """Extreme-magnitude eigenvalues of the preconditioned operator P*A.

    Runs Lanczos with full reorthogonalization from `probes` seeded random
    starts and averages the converged extreme Ritz values. For systems within
    the dense cap the caller should prefer dense_eig_oracle.
    """
    A = _as_map(A)
    P = _as_map(P)
    n = A.shape[0]
    if max_steps is None:
        max_steps = min(n, max(200, int(4 * np.sqrt(n))))
    mins, maxs = [], []
    steps_used = 0
    low_confidence = False
    for p in range(probes):
        rng = np.random.default_rng(seed + p)
        alphas, betas, steps = _lanczos_pencil(A, P, rng, max_steps, tol)
        steps_used = max(steps_used, steps)
        ext = _converged_extremes(alphas, betas)
        if ext is None:
            # fall back to raw Ritz extremes, flagged
            theta = scipy.linalg.eigvalsh_tridiagonal(alphas, betas[: len(alphas) - 1])
            ext = (np.abs(theta).min(), np.abs(theta).max())
            low_confidence = True
        if steps == max_steps:
            low_confidence = True
        mins.append(ext[0])
        maxs.append(ext[1])
    return EigEstimate(
        lambda_min_abs=float(np.mean(mins)),
        lambda_max_abs=float(np.mean(maxs)),
        low_confidence=low_confidence,
        steps=steps_used,
    )


def dense_eig_oracle(A, P_inv) -> np.ndarray:
    """Full spectrum of the pencil A x = lambda P_inv x, sorted by magnitude.

    P_inv must be symmetric positive definite (it is Cholesky-factored inside
    the dense generalized eigensolver). Capped at 4000 unknowns.
    """
    A = _as_map(A)
    n = A.shape[0]
    if n > DENSE_ORACLE_CAP:
        raise ValueError(f"dense oracle capped at {DENSE_ORACLE_CAP} unknowns, got {n}")
    Ad = A.to_dense()
    Pd = _as_map(P_inv).to_dense()
    theta = scipy.linalg.eigh(Ad, Pd, eigvals_only=True)
    return theta[np.argsort(np.abs(theta))]


def dense_preconditioned_spectrum(A, P) -> np.ndarray:
    """Spectrum of P*A with P given as an SPD action (densified column by
    column), sorted by magnitude."""
    A = _as_map(A)
    P = _as_map(P)
    n = A.shape[0]
    if n > DENSE_ORACLE_CAP:
        raise ValueError(f"dense oracle capped at {DENSE_ORACLE_CAP} unknowns, got {n}")
    Ad = A.to_dense()
    Pd = P.to_dense()
    Pd = 0.5 * (Pd + Pd.T)
    R = scipy.linalg.cholesky(Pd, lower=False)
    M = R @ Ad @ R.T
    theta = scipy.linalg.eigvalsh(0.5 * (M + M.T))
    return theta[np.argsort(np.abs(theta))]


def condition_number(spectrum: np.ndarray, null_rtol: float = 1e-9) -> float:
    """max|lambda| / min|lambda| dropping numerically-zero (nullspace) modes."""
    absed = np.abs(np.asarray(spectrum))
    lam_max = absed.max()
    keep = absed > null_rtol * lam_max
    return float(lam_max / absed[keep].min())
