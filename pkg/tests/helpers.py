"""Shared random generators for property tests (seeded numpy RNG)."""

import numpy as np

from charflow import expr as ex


def random_polynomial(rng, names, terms: int = 4, degree: int = 3) -> ex.Expr:
    """Random multivariate polynomial with coefficients in [-1, 1]."""
    e = ex.Const(float(rng.uniform(-1.0, 1.0)))
    for _ in range(terms):
        term = ex.Const(float(rng.uniform(-1.0, 1.0)))
        for _ in range(int(rng.integers(1, degree + 1))):
            name = names[int(rng.integers(len(names)))]
            term = ex.mul(term, ex.Var(name))
        e = ex.add(e, term)
    return e


def random_expr(rng, names, depth: int = 6) -> ex.Expr:
    """Random expression drawn from the DSL grammar, depth-bounded."""
    if depth == 0 or rng.random() < 0.3:
        if rng.random() < 0.7:
            return ex.Var(names[int(rng.integers(len(names)))])
        return ex.Const(float(np.round(rng.uniform(-2.0, 2.0), 3)))
    pick = rng.random()
    a = random_expr(rng, names, depth - 1)
    if pick < 0.22:
        return ex.Add(a, random_expr(rng, names, depth - 1))
    if pick < 0.40:
        return ex.Sub(a, random_expr(rng, names, depth - 1))
    if pick < 0.62:
        return ex.Mul(a, random_expr(rng, names, depth - 1))
    if pick < 0.70:
        return ex.Div(a, random_expr(rng, names, depth - 1))
    if pick < 0.78:
        return ex.Pow(a, ex.Const(float(rng.integers(2, 4))))
    if pick < 0.84:
        return ex.Neg(a)
    fn = ("sin", "cos", "exp", "log", "sqrt")[int(rng.integers(5))]
    return ex.Call(fn, a)


def random_point(rng, names, scale: float = 1.5) -> dict:
    return {name: float(rng.uniform(-scale, scale)) for name in names}
