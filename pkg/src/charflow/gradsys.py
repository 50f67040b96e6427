"""Gradient-system representation of an orbit and the stationarity certificate.

For an orbit zhat(lam, z0) with generators Z_1..Z_m, the lam-Jacobian
J(lam) = d zhat / d lam factors through the generator frame:
``J = M(zhat) A(lam)`` where ``M = [Z_1(zhat) ... Z_m(zhat)]`` and A(0) is
the identity.  Dual vectors q_i(lam) recover each generator from the
Jacobian, ``J q_i = Z_i(zhat)``.  Both A and the q_i are computed pointwise
by rank-revealing least squares; independence of the q_i is certified by a
singular-value threshold, i.e. reported, not proven.

The certificate chains: every <d/dlam H0(zhat), q_i> vanishes, the q_i are
independent, hence d/dlam H0(zhat) = 0, hence H0 is constant on the box.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .charfield import Hamiltonian
from .flow import FlowDivergenceError, Orbit, lambda_grid, orbit_point

__all__ = [
    "GradientRep",
    "RankDeficientError",
    "StationarityCertificate",
    "lambda_jacobian",
    "representation",
    "certify_stationarity",
    "lambda_grid",
    "probe_box",
]

INDEPENDENCE_SIGMA = 1e-8
RANK_TOL = 1e-10


class RankDeficientError(RuntimeError):
    """Generator matrix lost rank at a specific lambda."""

    def __init__(self, lam, sigma_min: float, sigma_max: float):
        lam = tuple(float(t) for t in lam)
        super().__init__(
            f"generator matrix rank-deficient at lambda={lam} "
            f"(sigma_min={sigma_min:.3e}, sigma_max={sigma_max:.3e})"
        )
        self.lam = lam


def lambda_jacobian(o: Orbit, lam, fd_step: float = 1e-5) -> np.ndarray:
    """Central-difference d x m Jacobian of zhat with respect to lam.

    Column i re-integrates the orbit at lam +- fd_step * e_i, so lam should
    sit at least fd_step inside the region where the flows stay defined.
    """
    lam = tuple(float(t) for t in lam)
    m = o.m
    d = o.z0.dim
    jac = np.empty((d, m))
    for i in range(m):
        hi = list(lam)
        lo = list(lam)
        hi[i] += fd_step
        lo[i] -= fd_step
        z_hi = orbit_point(o, hi).vector
        z_lo = orbit_point(o, lo).vector
        jac[:, i] = (z_hi - z_lo) / (2.0 * fd_step)
    return jac


@dataclass
class GradientRep:
    """Pointwise algebraic representation of the orbit's gradient system."""

    lam: tuple[float, ...]
    jacobian: np.ndarray  # d x m
    matrix: np.ndarray  # m x m, J = M(zhat) @ matrix
    duals: np.ndarray  # m x m, column i solves J q = Z_i(zhat)
    sigma_min: float  # smallest singular value of matrix
    cond: float
    defects: np.ndarray  # ||J q_i - Z_i(zhat)|| per generator
    ls_residual: float  # ||J - M @ matrix||_F


def representation(
    o: Orbit,
    lam,
    fd_step: float = 1e-5,
    rank_tol: float = RANK_TOL,
) -> GradientRep:
    """Solve for A(lam) and the dual vectors q_i(lam) at one lambda."""
    lam = tuple(float(t) for t in lam)
    zhat = orbit_point(o, lam)
    gen = np.column_stack([z(zhat) for z in o.generators])
    svals = np.linalg.svd(gen, compute_uv=False)
    if svals[-1] < rank_tol * max(svals[0], 1e-300):
        raise RankDeficientError(lam, float(svals[-1]), float(svals[0]))

    jac = lambda_jacobian(o, lam, fd_step)
    a_matrix, *_ = np.linalg.lstsq(gen, jac, rcond=rank_tol)
    ls_residual = float(np.linalg.norm(jac - gen @ a_matrix))

    m = o.m
    duals = np.empty((m, m))
    defects = np.empty(m)
    for i in range(m):
        target = gen[:, i]
        q, *_ = np.linalg.lstsq(jac, target, rcond=rank_tol)
        duals[:, i] = q
        defects[i] = float(np.linalg.norm(jac @ q - target))

    a_svals = np.linalg.svd(a_matrix, compute_uv=False)
    sigma_min = float(a_svals[-1])
    cond = float("inf") if sigma_min == 0.0 else float(a_svals[0] / sigma_min)
    return GradientRep(
        lam=lam,
        jacobian=jac,
        matrix=a_matrix,
        duals=duals,
        sigma_min=sigma_min,
        cond=cond,
        defects=defects,
        ls_residual=ls_residual,
    )


@dataclass
class StationarityCertificate:
    """Grid-wide evidence that H0 is constant on the orbit's parameter box."""

    passed: bool
    tolerance: float
    max_directional: float  # max_i |<dH0/dlam, q_i>| over the grid
    max_grad_norm: float  # max ||dH0/dlam|| over the grid
    max_grad_bound: float  # the sigma-scaled bound the norm is held to
    max_drift: float  # max |H0(zhat) - H0(z0)| over the grid
    min_sigma_min: float  # smallest sigma_min(A) observed
    max_defect: float
    grid_points: int
    failures: list[dict] = field(default_factory=list)


def certify_stationarity(
    o: Orbit,
    h0: Hamiltonian,
    grid,
    tol: float = 1e-6,
    fd_step: float = 1e-5,
    threads: int = 1,
) -> StationarityCertificate:
    """Run the proof chain numerically at every lambda of the grid.

    At each lambda the certificate requires (i) every directional
    derivative <dH0/dlam, q_i> within tol, (ii) ||dH0/dlam|| within
    sqrt(m) * tol / sigma_min(Q) where Q stacks the dual vectors, and
    (iii) value drift |H0(zhat) - H0(z0)| within tol.  Rank loss of the
    generator matrix or dependent duals (sigma_min below 1e-8) fails the
    certificate at that lambda.
    """
    lams = list(grid)
    m = o.m
    h_base = h0.value(o.z0)
    sqrt_m = math.sqrt(m)

    def analyze(lam):
        rep = representation(o, lam, fd_step=fd_step)
        zhat = orbit_point(o, lam)
        grad_lam = rep.jacobian.T @ h0.grad_at(zhat)
        directional = float(np.max(np.abs(rep.duals.T @ grad_lam)))
        grad_norm = float(np.linalg.norm(grad_lam))
        q_sigma = float(np.linalg.svd(rep.duals, compute_uv=False)[-1])
        bound = math.inf if q_sigma == 0.0 else sqrt_m * tol / q_sigma
        drift = abs(h0.value(zhat) - h_base)
        return rep, directional, grad_norm, bound, drift, q_sigma

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(analyze, lams))
    else:
        results = [analyze(lam) for lam in lams]

    max_directional = 0.0
    max_grad_norm = 0.0
    max_grad_bound = 0.0
    max_drift = 0.0
    min_sigma_min = math.inf
    max_defect = 0.0
    failures: list[dict] = []
    for lam, (rep, directional, grad_norm, bound, drift, q_sigma) in zip(
        lams, results
    ):
        max_directional = max(max_directional, directional)
        max_grad_norm = max(max_grad_norm, grad_norm)
        max_grad_bound = max(max_grad_bound, 0.0 if math.isinf(bound) else bound)
        max_drift = max(max_drift, drift)
        min_sigma_min = min(min_sigma_min, rep.sigma_min)
        max_defect = max(max_defect, float(np.max(rep.defects)))
        reasons = []
        if directional > tol:
            reasons.append(f"directional derivative {directional:.3e} > {tol:.3e}")
        if grad_norm > bound:
            reasons.append(f"gradient norm {grad_norm:.3e} > bound {bound:.3e}")
        if drift > tol:
            reasons.append(f"drift {drift:.3e} > {tol:.3e}")
        if rep.sigma_min < INDEPENDENCE_SIGMA or q_sigma < INDEPENDENCE_SIGMA:
            reasons.append("dual vectors not certifiably independent")
        if reasons:
            failures.append({"lambda": tuple(lam), "reasons": reasons})

    return StationarityCertificate(
        passed=not failures,
        tolerance=tol,
        max_directional=max_directional,
        max_grad_norm=max_grad_norm,
        max_grad_bound=max_grad_bound,
        max_drift=max_drift,
        min_sigma_min=min_sigma_min if lams else 0.0,
        max_defect=max_defect,
        grid_points=len(lams),
        failures=failures,
    )


def probe_box(
    o: Orbit,
    k: int = 5,
    sigma_threshold: float = INDEPENDENCE_SIGMA,
    max_halvings: int = 30,
) -> tuple[float, ...]:
    """Halve the box radii until the orbit carries an empirical certificate.

    Returns the largest box (starting from the orbit's own, halving all
    radii together) on whose k-grid every orbit evaluation converges and
    every representation matrix keeps sigma_min above the threshold.  The
    result is evidence, not a proof, of a usable nonsingularity radius.
    """
    box = tuple(o.box)
    for _ in range(max_halvings + 1):
        trial = Orbit(o.generators, o.z0, box, o.cfg)
        ok = True
        for lam in lambda_grid(box, k):
            try:
                rep = representation(trial, lam)
            except (FlowDivergenceError, RankDeficientError):
                ok = False
                break
            if rep.sigma_min < sigma_threshold:
                ok = False
                break
        if ok:
            return box
        box = tuple(0.5 * a for a in box)
    raise ValueError(
        f"no usable box found after {max_halvings} halvings (down to {box})"
    )
