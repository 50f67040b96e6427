"""Local flows of vector fields and their composition into orbits.

An orbit evaluates ``zhat(lam, z0) = G_1(t_1) o ... o G_m(t_m) [z0]`` with
the usual function-composition reading: the rightmost flow acts first, so
``G_m(t_m)`` is applied to ``z0`` before the others.  ``zhat(0, z0)`` is
``z0`` exactly (zero parameters perform no integration at all).

The default integrator is fixed-step classical RK4 -- deterministic and
reproducible, and deliberately *not* structure preserving, since energy
conservation along the orbit is the claim under test.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

from .charfield import PhasePoint
from .lie import VectorField

__all__ = [
    "IntegratorConfig",
    "FlowDivergenceError",
    "Orbit",
    "OrbitGrid",
    "flow",
    "orbit_point",
    "orbit_grid",
    "axis_values",
]

DIVERGENCE_NORM = 1e8


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4-fixed"  # or "rk45-adaptive"
    step: float = 1e-3
    abs_tol: float = 1e-10
    rel_tol: float = 1e-9
    max_steps_per_unit: int = 100_000

    def __post_init__(self):
        if self.method not in ("rk4-fixed", "rk45-adaptive"):
            raise ValueError(f"unknown integrator method {self.method!r}")
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_steps_per_unit <= 0:
            raise ValueError("max_steps_per_unit must be positive")


DEFAULT_INTEGRATOR = IntegratorConfig()


class FlowDivergenceError(RuntimeError):
    """Trajectory blew up (norm over 1e8) or the stepper gave out."""

    def __init__(self, message: str, sigma: float, generator_index: int | None = None):
        super().__init__(message)
        self.sigma = sigma
        self.generator_index = generator_index


def _diverged(y: tuple[float, ...]) -> bool:
    s = 0.0
    for v in y:
        if not math.isfinite(v):
            return True
        s += v * v
    return s > DIVERGENCE_NORM * DIVERGENCE_NORM


def _rk4(f, y: tuple[float, ...], t: float, step: float) -> tuple[float, ...]:
    nsteps = max(1, math.ceil(abs(t) / step))
    h = t / nsteps
    half = 0.5 * h
    sixth = h / 6.0
    sigma = 0.0
    for _ in range(nsteps):
        k1 = f(y)
        k2 = f(tuple(yi + half * k for yi, k in zip(y, k1)))
        k3 = f(tuple(yi + half * k for yi, k in zip(y, k2)))
        k4 = f(tuple(yi + h * k for yi, k in zip(y, k3)))
        y = tuple(
            yi + sixth * (a + 2.0 * (b + c) + d)
            for yi, a, b, c, d in zip(y, k1, k2, k3, k4)
        )
        sigma += h
        if _diverged(y):
            raise FlowDivergenceError(
                f"trajectory diverged at sigma={sigma:.6g}", sigma
            )
    return y


# Dormand-Prince 5(4) tableau (autonomous fields, so no stage-time nodes).
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (
    5179 / 57600,
    0.0,
    7571 / 16695,
    393 / 640,
    -92097 / 339200,
    187 / 2100,
    1 / 40,
)


def _rk45(f, y: tuple[float, ...], t: float, cfg: IntegratorConfig) -> tuple[float, ...]:
    direction = 1.0 if t > 0 else -1.0
    remaining = abs(t)
    h = min(cfg.step, remaining)
    sigma = 0.0
    max_steps = cfg.max_steps_per_unit * max(1.0, abs(t))
    steps = 0
    d = len(y)
    while remaining > 0.0:
        steps += 1
        if steps > max_steps:
            raise FlowDivergenceError(
                f"step budget exhausted at sigma={direction * sigma:.6g}",
                direction * sigma,
            )
        h = min(h, remaining)
        hs = direction * h
        ks = []
        for stage in range(7):
            zi = list(y)
            for j, a in enumerate(_DP_A[stage]):
                if a != 0.0:
                    kj = ks[j]
                    for i in range(d):
                        zi[i] += hs * a * kj[i]
            ks.append(f(tuple(zi)))
        y5 = tuple(
            y[i] + hs * sum(b * ks[s][i] for s, b in enumerate(_DP_B5) if b != 0.0)
            for i in range(d)
        )
        err = 0.0
        for i in range(d):
            e5 = sum(b * ks[s][i] for s, b in enumerate(_DP_B5) if b != 0.0)
            e4 = sum(b * ks[s][i] for s, b in enumerate(_DP_B4) if b != 0.0)
            scale = cfg.abs_tol + cfg.rel_tol * max(abs(y[i]), abs(y5[i]))
            err = max(err, abs(hs * (e5 - e4)) / scale)
        if err <= 1.0:
            y = y5
            sigma += h
            remaining -= h
            if _diverged(y):
                raise FlowDivergenceError(
                    f"trajectory diverged at sigma={direction * sigma:.6g}",
                    direction * sigma,
                )
            factor = 5.0 if err == 0.0 else min(5.0, 0.9 * err ** -0.2)
        else:
            factor = max(0.2, 0.9 * err ** -0.2)
        h *= factor
        if h < 1e-14:
            raise FlowDivergenceError(
                f"step size underflow at sigma={direction * sigma:.6g}",
                direction * sigma,
            )
    return y


def flow(
    z: VectorField,
    t: float,
    y,
    cfg: IntegratorConfig = DEFAULT_INTEGRATOR,
):
    """Integrate dz/dsigma = Z(z) from y over sigma in [0, t].

    ``t = 0`` returns ``y`` unchanged.  Accepts a PhasePoint or a plain
    coordinate sequence and returns the same flavor.
    """
    as_point = isinstance(y, PhasePoint)
    coords = y.coords if as_point else tuple(float(v) for v in y)
    if len(coords) != z.dim:
        raise ValueError(f"field dimension {z.dim} != point dimension {len(coords)}")
    if t != 0.0:
        f = z.eval_tuple
        if cfg.method == "rk4-fixed":
            coords = _rk4(f, coords, t, cfg.step)
        else:
            coords = _rk45(f, coords, t, cfg)
    elif as_point:
        return y
    if as_point:
        ctx = y.ctx
        return PhasePoint.from_vector(ctx, coords)
    return coords


class Orbit:
    """Generators, a base point, and a parameter box, evaluated by flow composition."""

    def __init__(
        self,
        generators,
        z0: PhasePoint,
        box,
        cfg: IntegratorConfig = DEFAULT_INTEGRATOR,
    ):
        self.generators = tuple(generators)
        if not self.generators:
            raise ValueError("an orbit needs at least one generator")
        d = z0.dim
        for g in self.generators:
            if g.dim != d:
                raise ValueError("generator dimension does not match base point")
        self.z0 = z0
        self.box = tuple(float(a) for a in box)
        if len(self.box) != len(self.generators):
            raise ValueError("box must provide one radius per generator")
        if any(a <= 0 for a in self.box):
            raise ValueError("box radii must be positive")
        self.cfg = cfg

    @property
    def m(self) -> int:
        return len(self.generators)

    def point(self, lam) -> PhasePoint:
        return orbit_point(self, lam)


def orbit_point(o: Orbit, lam) -> PhasePoint:
    """Evaluate zhat(lam, z0); the last generator's flow is applied first."""
    lam = tuple(float(t) for t in lam)
    if len(lam) != o.m:
        raise ValueError(f"expected {o.m} parameters, got {len(lam)}")
    coords = o.z0.coords
    for i in range(o.m - 1, -1, -1):
        if lam[i] == 0.0:
            continue
        try:
            coords = flow(o.generators[i], lam[i], coords, o.cfg)
        except FlowDivergenceError as err:
            raise FlowDivergenceError(
                f"generator {i + 1}: {err}", err.sigma, generator_index=i + 1
            ) from err
    return PhasePoint.from_vector(o.z0.ctx, coords)


def axis_values(a: float, k: int) -> list[float]:
    """k uniform nodes on [-a, a]; k must be odd so 0 is a node (exactly)."""
    if k < 2 or k % 2 == 0:
        raise ValueError("points per axis must be odd and at least 3")
    half = (k - 1) // 2
    return [a * (i - half) / half for i in range(k)]


@dataclass
class OrbitGrid:
    """Orbit evaluations over a uniform lambda grid, in lexicographic order."""

    lams: list[tuple[float, ...]]
    points: list[PhasePoint | None]
    divergences: list[dict] = field(default_factory=list)

    def __iter__(self):
        return iter(zip(self.lams, self.points))

    def __len__(self):
        return len(self.lams)


def lambda_grid(box, k: int) -> list[tuple[float, ...]]:
    """Lexicographic k^m grid over the box (first axis slowest)."""
    axes = [axis_values(a, k) for a in box]
    return [tuple(axes[i][idx[i]] for i in range(len(box))) for idx in
            product(*(range(k) for _ in box))]


def orbit_grid(o: Orbit, k: int, threads: int = 1) -> OrbitGrid:
    """Evaluate the orbit over the full grid, collecting divergences."""
    lams = lambda_grid(o.box, k)

    def run(lam):
        try:
            return orbit_point(o, lam), None
        except FlowDivergenceError as err:
            return None, {
                "lambda": lam,
                "generator": err.generator_index,
                "sigma": err.sigma,
                "message": str(err),
            }

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, lams))
    else:
        results = [run(lam) for lam in lams]

    points = [r[0] for r in results]
    divergences = [r[1] for r in results if r[1] is not None]
    return OrbitGrid(lams=lams, points=points, divergences=divergences)
