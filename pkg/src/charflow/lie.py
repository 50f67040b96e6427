"""Lie brackets of vector fields, momentum lifts, and closure tests.

The bracket convention is ``[Z1, Z2] = (dZ2) Z1 - (dZ1) Z2``: the Jacobian
of the second field applied to the first, minus the reverse.  With this
orientation the bracket of two reduced characteristic fields is again the
characteristic field of the Poisson bracket of their Hamiltonians.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex

__all__ = [
    "VectorField",
    "ClosureReport",
    "BaseFamilyReport",
    "lie_bracket",
    "cotangent_lift",
    "check_closure",
    "check_base_family",
]


class VectorField:
    """A smooth map R^d -> R^d given by component expressions.

    The symbolic Jacobian (d x d matrix of expressions) is computed lazily
    and cached; ``jacobian[i][j]`` differentiates component i by variable j.
    """

    def __init__(self, names, components):
        names = tuple(names)
        components = tuple(
            ex.parse(c, names) if isinstance(c, str) else c for c in components
        )
        if len(components) != len(names):
            raise ValueError(
                f"expected {len(names)} components, got {len(components)}"
            )
        self.names = names
        self.components = components
        self._jacobian: tuple[tuple[ex.Expr, ...], ...] | None = None
        self._compiled = None
        self._compiled_jac = None

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def jacobian(self) -> tuple[tuple[ex.Expr, ...], ...]:
        if self._jacobian is None:
            self._jacobian = tuple(
                tuple(ex.diff(c, v) for v in self.names) for c in self.components
            )
        return self._jacobian

    def eval_tuple(self, z) -> tuple[float, ...]:
        """Fast compiled evaluation on a coordinate sequence."""
        if self._compiled is None:
            self._compiled = ex.compile_exprs(self.components, self.names)
        try:
            return self._compiled(z)
        except (ValueError, ZeroDivisionError, OverflowError) as err:
            raise ex.DomainError(f"field evaluation failed: {err}") from err

    def __call__(self, z) -> np.ndarray:
        coords = z.coords if hasattr(z, "coords") else tuple(float(v) for v in z)
        return np.array(self.eval_tuple(coords))

    def jacobian_at(self, z) -> np.ndarray:
        if self._compiled_jac is None:
            flat = [e for row in self.jacobian for e in row]
            self._compiled_jac = ex.compile_exprs(flat, self.names)
        coords = z.coords if hasattr(z, "coords") else tuple(float(v) for v in z)
        d = self.dim
        return np.array(self._compiled_jac(coords)).reshape(d, d)

    def jacobian_fd(self, z, step: float = 1e-6) -> np.ndarray:
        """Finite-difference Jacobian, for verifying the symbolic one."""
        base = list(z.coords if hasattr(z, "coords") else z)
        d = self.dim
        out = np.empty((d, d))
        for j in range(d):
            h = step * max(1.0, abs(base[j]))
            hi = list(base)
            lo = list(base)
            hi[j] += h
            lo[j] -= h
            out[:, j] = (
                np.array(self.eval_tuple(hi)) - np.array(self.eval_tuple(lo))
            ) / (2.0 * h)
        return out

    def __repr__(self) -> str:
        comps = ", ".join(ex.format_expr(c) for c in self.components)
        return f"VectorField([{comps}])"


def lie_bracket(z1: VectorField, z2: VectorField) -> VectorField:
    """Symbolic commutator [z1, z2] = (dz2) z1 - (dz1) z2."""
    if z1.names != z2.names:
        raise ValueError("Lie bracket requires a common variable context")
    j1 = z1.jacobian
    j2 = z2.jacobian
    d = z1.dim
    components = []
    for i in range(d):
        acc = ex.ZERO
        for j in range(d):
            acc = ex.add(acc, ex.mul(j2[i][j], z1.components[j]))
            acc = ex.sub(acc, ex.mul(j1[i][j], z2.components[j]))
        components.append(acc)
    return VectorField(z1.names, components)


def cotangent_lift(f: VectorField) -> VectorField:
    """Lift a base field f(x) on R^n to the reduced phase space R^2n.

    The lift is the characteristic field of the momentum-linear Hamiltonian
    <p, f(x)>, namely (f(x), -(df/dx)^T p).
    """
    n = f.dim
    x_names = tuple(f"x{i}" for i in range(1, n + 1))
    if f.names != x_names:
        raise ValueError(f"base field must use variables {x_names}")
    for c in f.components:
        for node in ex.subexpressions(c):
            if isinstance(node, ex.Var) and node.name not in x_names:
                raise ValueError(
                    f"base field may only depend on x-variables, found {node.name!r}"
                )
    ctx = ex.VarContext(n, "reduced")
    p_vars = [ex.Var(name) for name in ctx.p_names]
    jac = f.jacobian
    p_comp = []
    for i in range(n):
        acc = ex.ZERO
        for j in range(n):
            # row i of -(df/dx)^T is -d f_j / d x_i
            acc = ex.sub(acc, ex.mul(jac[j][i], p_vars[j]))
        p_comp.append(acc)
    return VectorField(ctx.names, list(f.components) + p_comp)


@dataclass
class ClosureReport:
    """Result of testing whether pairwise brackets stay in the generator span."""

    generators: int
    mode: str  # "constants" or "pointwise"
    coefficients: np.ndarray | None  # (m, m, m): [i, j, k] multiplies Z_k
    pointwise_coefficients: np.ndarray | None  # (N, m, m, m) in pointwise mode
    max_relative_residual: float
    tolerance: float
    passed: bool
    degenerate_span_warning: bool
    grid_points: int
    details: dict = field(default_factory=dict)


def _relative_residual(defect: np.ndarray, bracket: np.ndarray) -> float:
    return float(np.linalg.norm(defect) / max(1.0, np.linalg.norm(bracket)))


def check_closure(
    fields,
    grid,
    tol: float = 1e-8,
    mode: str = "constants",
    rank_tol: float = 1e-10,
) -> ClosureReport:
    """Fit bracket coefficients over the grid and report the worst defect.

    In ``constants`` mode one coefficient vector per pair (i, j) is solved
    from the least-squares system stacked over every grid point; in
    ``pointwise`` mode each grid point is solved separately.  The relative
    residual at a point is ||defect|| / max(1, ||bracket||), aggregated as
    the max over points and pairs.  A span rank below m at more than half
    the grid raises a warning flag, not a failure.
    """
    fields = list(fields)
    m = len(fields)
    if m < 1:
        raise ValueError("need at least one generator")
    if mode not in ("constants", "pointwise"):
        raise ValueError(f"mode must be 'constants' or 'pointwise', got {mode!r}")
    pts = np.atleast_2d(np.asarray(grid, dtype=float))
    n_pts = pts.shape[0]
    d = fields[0].dim

    # Generator values at every grid point: span[q] is d x m.
    span = np.empty((n_pts, d, m))
    for q, row in enumerate(pts):
        for k, zk in enumerate(fields):
            span[q, :, k] = zk.eval_tuple(row)

    low_rank = 0
    for q in range(n_pts):
        s = np.linalg.svd(span[q], compute_uv=False)
        if s[-1] < rank_tol * max(s[0], 1e-300):
            low_rank += 1
    degenerate = low_rank > n_pts // 2

    coefficients = np.zeros((m, m, m)) if mode == "constants" else None
    pointwise = np.zeros((n_pts, m, m, m)) if mode == "pointwise" else None
    worst = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            bracket = lie_bracket(fields[i], fields[j])
            values = np.array([bracket.eval_tuple(row) for row in pts])
            if mode == "constants":
                stacked = span.reshape(n_pts * d, m)
                alpha, *_ = np.linalg.lstsq(
                    stacked, values.reshape(n_pts * d), rcond=rank_tol
                )
                coefficients[i, j] = alpha
                coefficients[j, i] = -alpha
                for q in range(n_pts):
                    defect = values[q] - span[q] @ alpha
                    worst = max(worst, _relative_residual(defect, values[q]))
            else:
                for q in range(n_pts):
                    alpha, *_ = np.linalg.lstsq(span[q], values[q], rcond=rank_tol)
                    pointwise[q, i, j] = alpha
                    pointwise[q, j, i] = -alpha
                    defect = values[q] - span[q] @ alpha
                    worst = max(worst, _relative_residual(defect, values[q]))

    return ClosureReport(
        generators=m,
        mode=mode,
        coefficients=coefficients,
        pointwise_coefficients=pointwise,
        max_relative_residual=worst,
        tolerance=tol,
        passed=worst <= tol,
        degenerate_span_warning=degenerate,
        grid_points=n_pts,
        details={"low_rank_points": low_rank},
    )


@dataclass
class BaseFamilyReport:
    """Checks for a family of base fields commuting with a drift field f0."""

    commute_max_residual: float
    closure: ClosureReport
    lift_max_residual: float
    tolerance: float
    commute_passed: bool
    lift_passed: bool
    passed: bool


def check_base_family(
    f_list,
    f0: VectorField,
    grid,
    tol: float = 1e-9,
    phase_samples: int = 50,
    seed: int = 0,
) -> BaseFamilyReport:
    """Verify the hypotheses that make momentum lifts of {f_i} a generator set.

    (a) every [f0, f_i] vanishes on the grid, (b) pairwise [f_i, f_j] stay
    in the real span of the family (constants mode), and (c) the bracket of
    two lifted fields equals the lift of [f_i, f_j] at random (x, p).
    """
    f_list = list(f_list)
    pts = np.atleast_2d(np.asarray(grid, dtype=float))

    commute_worst = 0.0
    for fi in f_list:
        bracket = lie_bracket(f0, fi)
        for row in pts:
            commute_worst = max(
                commute_worst, float(np.max(np.abs(bracket.eval_tuple(row))))
            )

    closure = check_closure(f_list, pts, tol=tol, mode="constants")

    rng = np.random.default_rng(seed)
    n = f_list[0].dim
    lifted = [cotangent_lift(f) for f in f_list]
    lift_worst = 0.0
    for i in range(len(f_list)):
        for j in range(i + 1, len(f_list)):
            actual = lie_bracket(lifted[i], lifted[j])
            expected = cotangent_lift(lie_bracket(f_list[i], f_list[j]))
            for _ in range(phase_samples):
                x = rng.uniform(-1.0, 1.0, size=n)
                p = rng.uniform(-1.0, 1.0, size=n)
                z = np.concatenate([x, p])
                diff = np.array(actual.eval_tuple(z)) - np.array(
                    expected.eval_tuple(z)
                )
                lift_worst = max(lift_worst, float(np.max(np.abs(diff))))

    commute_ok = commute_worst <= tol
    lift_ok = lift_worst <= max(tol, 1e-9)
    return BaseFamilyReport(
        commute_max_residual=commute_worst,
        closure=closure,
        lift_max_residual=lift_worst,
        tolerance=tol,
        commute_passed=commute_ok,
        lift_passed=lift_ok,
        passed=commute_ok and closure.passed and lift_ok,
    )
