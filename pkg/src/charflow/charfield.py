"""Characteristic vector fields of Hamiltonians and Poisson brackets.

Conventions (binding for every downstream computation):

* gradients are laid out x-block, p-block, then u;
* a Hamiltonian H on the full phase space maps to the characteristic field
  ``Z_H = (dH/dp, -(dH/dx + p*dH/du), <p, dH/dp>)``; in the reduced case
  ``Z_H = (dH/dp, -dH/dx)``;
* the Poisson bracket pairs the gradient of the *second* argument with the
  field of the *first*: ``{H1, H2}(z) = <grad H2(z), Z_1(z)>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .lie import VectorField

__all__ = [
    "PhasePoint",
    "Hamiltonian",
    "CharField",
    "CheckReport",
    "char_matrix",
    "symplectic_matrix",
    "char_field",
    "poisson",
    "poisson_expr",
    "is_first_integral",
    "sample_ball",
]


class PhasePoint:
    """A point z = (x, p) in R^2n (reduced) or z = (x, p, u) in R^2n+1 (full)."""

    __slots__ = ("kind", "x", "p", "u")

    def __init__(self, kind: str, x, p, u: float | None = None):
        if kind not in ("reduced", "full"):
            raise ValueError(f"kind must be 'reduced' or 'full', got {kind!r}")
        x = tuple(float(v) for v in x)
        p = tuple(float(v) for v in p)
        if len(x) != len(p) or not x:
            raise ValueError("x and p must have the same positive length")
        if kind == "full":
            if u is None:
                raise ValueError("full phase point requires u")
            u = float(u)
        elif u is not None:
            raise ValueError("reduced phase point must not carry u")
        coords = x + p + ((u,) if u is not None else ())
        if not all(math.isfinite(v) for v in coords):
            raise ValueError("phase point components must be finite")
        self.kind = kind
        self.x = x
        self.p = p
        self.u = u

    @classmethod
    def reduced(cls, x, p) -> "PhasePoint":
        return cls("reduced", x, p)

    @classmethod
    def full(cls, x, p, u: float) -> "PhasePoint":
        return cls("full", x, p, u)

    @classmethod
    def from_vector(cls, ctx: ex.VarContext, vec) -> "PhasePoint":
        vec = tuple(float(v) for v in vec)
        if len(vec) != ctx.dim:
            raise ValueError(f"expected {ctx.dim} components, got {len(vec)}")
        n = ctx.n
        u = vec[2 * n] if ctx.kind == "full" else None
        return cls(ctx.kind, vec[:n], vec[n : 2 * n], u)

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def dim(self) -> int:
        return 2 * self.n + (1 if self.kind == "full" else 0)

    @property
    def ctx(self) -> ex.VarContext:
        return ex.VarContext(self.n, self.kind)

    @property
    def coords(self) -> tuple[float, ...]:
        if self.kind == "full":
            return self.x + self.p + (self.u,)
        return self.x + self.p

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.coords)

    @property
    def mapping(self) -> dict[str, float]:
        names = self.ctx.names
        return dict(zip(names, self.coords))

    def __repr__(self) -> str:
        if self.kind == "full":
            return f"PhasePoint(x={self.x}, p={self.p}, u={self.u})"
        return f"PhasePoint(x={self.x}, p={self.p})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PhasePoint)
            and self.kind == other.kind
            and self.coords == other.coords
        )

    def __hash__(self) -> int:
        return hash((self.kind, self.coords))


def _coords_of(z) -> tuple[float, ...]:
    if isinstance(z, PhasePoint):
        return z.coords
    return tuple(float(v) for v in z)


class Hamiltonian:
    """A scalar function on phase space with its exact gradient cached."""

    def __init__(self, ctx: ex.VarContext, expression: ex.Expr | str):
        if isinstance(expression, str):
            expression = ex.parse(expression, ctx)
        self.ctx = ctx
        self.expr = expression
        self.grad = tuple(ex.gradient(expression, ctx))
        self._value = ex.compile_exprs([expression], ctx.names)
        self._grad = ex.compile_exprs(self.grad, ctx.names)

    def value(self, z) -> float:
        return self._value(_coords_of(z))[0]

    def grad_at(self, z) -> np.ndarray:
        return np.array(self._grad(_coords_of(z)))

    def grad_fd(self, z, step: float = 1e-6) -> np.ndarray:
        """Central finite-difference gradient, for cross-checking."""
        base = list(_coords_of(z))
        out = np.empty(len(base))
        for i in range(len(base)):
            h = step * max(1.0, abs(base[i]))
            hi = list(base)
            lo = list(base)
            hi[i] += h
            lo[i] -= h
            out[i] = (self._value(hi)[0] - self._value(lo)[0]) / (2.0 * h)
        return out

    def char_field(self) -> "CharField":
        return char_field(self)

    def __repr__(self) -> str:
        return f"Hamiltonian({ex.format_expr(self.expr)!r}, n={self.ctx.n}, {self.ctx.kind})"


class CharField(VectorField):
    """A vector field remembering the Hamiltonian it was built from."""

    def __init__(self, ctx: ex.VarContext, components, source: Hamiltonian | None = None):
        super().__init__(ctx.names, components)
        self.ctx = ctx
        self.source = source


def symplectic_matrix(n: int) -> np.ndarray:
    """The 2n x 2n block matrix [[0, I], [-I, 0]]."""
    m = np.zeros((2 * n, 2 * n))
    m[:n, n:] = np.eye(n)
    m[n:, :n] = -np.eye(n)
    return m


def char_matrix(p) -> np.ndarray:
    """The skew (2n+1) x (2n+1) matrix taking grad H to the characteristic field.

    Block layout: [[0, I, 0], [-I, 0, -p], [0, p^T, 0]].
    """
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    m = np.zeros((2 * n + 1, 2 * n + 1))
    m[:n, n : 2 * n] = np.eye(n)
    m[n : 2 * n, :n] = -np.eye(n)
    m[n : 2 * n, 2 * n] = -p
    m[2 * n, n : 2 * n] = p
    return m


def char_field(h: Hamiltonian) -> CharField:
    """Build the characteristic field of ``h``, symbolically (exact Jacobians)."""
    ctx = h.ctx
    n = ctx.n
    dx = h.grad[:n]
    dp = h.grad[n : 2 * n]
    if ctx.kind == "reduced":
        components = list(dp) + [ex.neg(g) for g in dx]
        return CharField(ctx, components, source=h)
    du = h.grad[2 * n]
    p_vars = [ex.Var(name) for name in ctx.p_names]
    x_comp = list(dp)
    p_comp = [ex.neg(ex.add(dx[i], ex.mul(p_vars[i], du))) for i in range(n)]
    u_comp = ex.ZERO
    for i in range(n):
        u_comp = ex.add(u_comp, ex.mul(p_vars[i], dp[i]))
    return CharField(ctx, x_comp + p_comp + [u_comp], source=h)


def poisson(h1: Hamiltonian, h2: Hamiltonian, z) -> float:
    """Poisson bracket {h1, h2}(z) = <grad h2(z), Z_1(z)>."""
    if h1.ctx != h2.ctx:
        raise ValueError("Poisson bracket requires a common context")
    z1 = char_field(h1)(z)
    g2 = h2.grad_at(z)
    return float(g2 @ z1)


def poisson_expr(h1: Hamiltonian, h2: Hamiltonian) -> ex.Expr:
    """The Poisson bracket {h1, h2} as a symbolic expression."""
    if h1.ctx != h2.ctx:
        raise ValueError("Poisson bracket requires a common context")
    z1 = char_field(h1).components
    g2 = h2.grad
    out = ex.ZERO
    for gi, zi in zip(g2, z1):
        out = ex.add(out, ex.mul(gi, zi))
    return out


@dataclass
class CheckReport:
    """Outcome of a residual check over a sample grid."""

    name: str
    max_residual: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)


def is_first_integral(
    h: Hamiltonian, z0_field: VectorField, grid, tol: float = 1e-9
) -> CheckReport:
    """Max of |<grad h, Z0>| over the grid; passes iff it stays within tol."""
    pts = np.atleast_2d(np.asarray(grid, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("grid must be nonempty")
    worst = 0.0
    for row in pts:
        residual = abs(float(h.grad_at(row) @ z0_field(row)))
        if residual > worst:
            worst = residual
    return CheckReport(
        name="first_integral",
        max_residual=worst,
        tolerance=tol,
        passed=worst <= tol,
        details={"points": int(pts.shape[0])},
    )


def sample_ball(center, radius: float, count: int, seed: int = 0) -> np.ndarray:
    """Uniform sample of ``count`` points from the ball B(center, radius)."""
    center = np.asarray(center, dtype=float)
    d = center.shape[0]
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((count, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = radius * rng.random(count) ** (1.0 / d)
    return center + dirs * radii[:, None]
