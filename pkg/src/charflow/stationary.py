"""Classical Cauchy-data checks for standard stationary solutions.

Parameterized Cauchy data (x0(l), p0(l), u0(l)) over l in R^(n-1) must
satisfy, on a parameter grid:

* compatibility (strip condition): d u0 / d l_i = <p0, d x0 / d l_i>;
* level: H0(x0(l), p0(l)[, u0(l)]) = H0(z0);
* transversality: the n columns {dH0/dp, d x0/d l_1, ..., d x0/d l_(n-1)}
  stay linearly independent.

Parameter expressions use the variables l1..l(n-1).  For n = 1 the
parameter list is empty: the data are constants, compatibility holds
vacuously, and the transversality matrix is the single column dH0/dp.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from . import expr as ex
from .charfield import CheckReport, Hamiltonian, PhasePoint

__all__ = [
    "CauchyData",
    "TransversalityReport",
    "parameter_grid",
    "check_compatibility",
    "check_level",
    "check_transversality",
]

SIGMA_THRESHOLD = 1e-8


def param_names(n: int) -> tuple[str, ...]:
    return tuple(f"l{i}" for i in range(1, n))


@dataclass
class CauchyData:
    """Parameterized Cauchy data x0, p0: R^(n-1) -> R^n and u0: R^(n-1) -> R."""

    n: int
    x0: tuple[ex.Expr, ...]
    p0: tuple[ex.Expr, ...]
    u0: ex.Expr
    box: tuple[float, ...]  # parameter box radii, length n - 1

    @classmethod
    def from_sources(cls, n: int, x0, p0, u0: str, box) -> "CauchyData":
        names = param_names(n)
        if len(x0) != n or len(p0) != n:
            raise ValueError(f"x0 and p0 must each have {n} components")
        box = tuple(float(a) for a in box)
        if len(box) != n - 1:
            raise ValueError(f"parameter box needs {n - 1} radii")
        if any(a <= 0 for a in box):
            raise ValueError("parameter box radii must be positive")
        return cls(
            n=n,
            x0=tuple(ex.parse(s, names) for s in x0),
            p0=tuple(ex.parse(s, names) for s in p0),
            u0=ex.parse(u0, names),
            box=box,
        )

    @property
    def names(self) -> tuple[str, ...]:
        return param_names(self.n)

    def _env(self, lam) -> dict[str, float]:
        return dict(zip(self.names, (float(v) for v in lam)))

    def x_at(self, lam) -> np.ndarray:
        env = self._env(lam)
        return np.array([ex.evaluate(e, env) for e in self.x0])

    def p_at(self, lam) -> np.ndarray:
        env = self._env(lam)
        return np.array([ex.evaluate(e, env) for e in self.p0])

    def u_at(self, lam) -> float:
        return ex.evaluate(self.u0, self._env(lam))

    def point_at(self, lam, kind: str) -> PhasePoint:
        if kind == "full":
            return PhasePoint.full(self.x_at(lam), self.p_at(lam), self.u_at(lam))
        return PhasePoint.reduced(self.x_at(lam), self.p_at(lam))


def parameter_grid(c: CauchyData, k: int = 21) -> list[tuple[float, ...]]:
    """Uniform k^(n-1) grid over the parameter box; [()] when n = 1."""
    if c.n == 1:
        return [()]
    axes = [np.linspace(-a, a, k) for a in c.box]
    return [tuple(ax[i] for ax, i in zip(axes, idx))
            for idx in product(*(range(k) for _ in axes))]


def check_compatibility(
    c: CauchyData, grid=None, tol: float = 1e-9
) -> CheckReport:
    """Strip condition: d u0/d l_i - <p0, d x0/d l_i> on the grid."""
    if grid is None:
        grid = parameter_grid(c)
    residuals = []
    for i, name in enumerate(c.names):
        du = ex.diff(c.u0, name)
        dx = [ex.diff(e, name) for e in c.x0]
        for lam in grid:
            env = c._env(lam)
            lhs = ex.evaluate(du, env)
            rhs = sum(
                ex.evaluate(p, env) * ex.evaluate(d, env)
                for p, d in zip(c.p0, dx)
            )
            residuals.append(abs(lhs - rhs))
    worst = max(residuals, default=0.0)
    return CheckReport(
        name="compatibility",
        max_residual=worst,
        tolerance=tol,
        passed=worst <= tol,
        details={"points": len(list(grid))},
    )


def check_level(
    c: CauchyData, h0: Hamiltonian, z0: PhasePoint, grid=None, tol: float = 1e-9
) -> CheckReport:
    """Max of |H0(z0(l)) - H0(z0)| over the parameter grid."""
    if grid is None:
        grid = parameter_grid(c)
    base = h0.value(z0)
    worst = 0.0
    for lam in grid:
        value = h0.value(c.point_at(lam, h0.ctx.kind))
        worst = max(worst, abs(value - base))
    return CheckReport(
        name="level",
        max_residual=worst,
        tolerance=tol,
        passed=worst <= tol,
        details={"points": len(list(grid))},
    )


@dataclass
class TransversalityReport:
    min_abs_det: float
    min_sigma_min: float
    threshold: float
    passed: bool
    points: int


def check_transversality(
    c: CauchyData, h0: Hamiltonian, grid=None, threshold: float = SIGMA_THRESHOLD
) -> TransversalityReport:
    """Independence of dH0/dp with the tangent directions of the data surface."""
    if grid is None:
        grid = parameter_grid(c)
    grid = list(grid)
    n = c.n
    dx_cols = [[ex.diff(e, name) for e in c.x0] for name in c.names]
    min_det = np.inf
    min_sigma = np.inf
    for lam in grid:
        env = c._env(lam)
        z = c.point_at(lam, h0.ctx.kind)
        grad = h0.grad_at(z)
        cols = [grad[n : 2 * n]]
        for dx in dx_cols:
            cols.append(np.array([ex.evaluate(e, env) for e in dx]))
        mat = np.column_stack(cols)
        min_det = min(min_det, abs(float(np.linalg.det(mat))))
        svals = np.linalg.svd(mat, compute_uv=False)
        min_sigma = min(min_sigma, float(svals[-1]))
    return TransversalityReport(
        min_abs_det=float(min_det),
        min_sigma_min=float(min_sigma),
        threshold=threshold,
        passed=min_sigma >= threshold,
        points=len(grid),
    )
