"""Tests for the expression DSL: parsing, evaluation, exact differentiation."""

import math

import numpy as np
import pytest

from charflow import expr as ex
from helpers import random_expr, random_point

RED1 = ex.VarContext(1, "reduced")
FULL1 = ex.VarContext(1, "full")
RED2 = ex.VarContext(2, "reduced")


class TestVarContext:
    def test_reduced_names(self):
        assert RED2.names == ("x1", "x2", "p1", "p2")
        assert RED2.dim == 4

    def test_full_names(self):
        assert FULL1.names == ("x1", "p1", "u")
        assert FULL1.dim == 3

    def test_rejects_bad_dimension(self):
        with pytest.raises(ValueError):
            ex.VarContext(0, "reduced")

    def test_rejects_bad_kind(self):
        with pytest.raises(ValueError):
            ex.VarContext(1, "cotangent")


class TestParse:
    def test_five_distinct_nodes(self):
        """p1*x1 + sin(x1) has 5 distinct subexpressions (x1 is shared)."""
        e = ex.parse("p1*x1 + sin(x1)", RED1)
        assert ex.node_count(e) == 5

    def test_u_in_full_context(self):
        assert ex.parse("u", FULL1) == ex.Var("u")

    def test_unknown_identifier(self):
        with pytest.raises(ex.ParseError, match='unknown identifier "q1"'):
            ex.parse("q1", RED1)

    def test_u_rejected_in_reduced_context(self):
        with pytest.raises(ex.ParseError, match="full context"):
            ex.parse("u", RED1)

    def test_syntax_error_has_position(self):
        with pytest.raises(ex.ParseError) as err:
            ex.parse("x1 + * p1", RED1)
        assert err.value.position == 6

    def test_precedence(self):
        env = {"x1": 2.0, "p1": 3.0}
        assert ex.evaluate(ex.parse("2*x1^2", RED1), env) == 8.0
        assert ex.evaluate(ex.parse("-x1^2", RED1), env) == -4.0
        assert ex.evaluate(ex.parse("x1 - p1 - 1", RED1), env) == -2.0
        assert ex.evaluate(ex.parse("2^3^1", RED1), env) == 8.0

    def test_exponent_must_be_constant(self):
        with pytest.raises(ex.ParseError, match="constant"):
            ex.parse("x1^p1", RED1)

    def test_function_requires_parentheses(self):
        with pytest.raises(ex.ParseError):
            ex.parse("sin x1", RED1)

    def test_trailing_garbage(self):
        with pytest.raises(ex.ParseError):
            ex.parse("x1 )", RED1)


class TestEvaluate:
    def test_product(self):
        assert ex.evaluate(ex.parse("p1*x1", RED1), {"x1": 2.0, "p1": 3.0}) == 6.0

    def test_sin_at_zero(self):
        assert ex.evaluate(ex.parse("sin(x1)", RED1), {"x1": 0.0, "p1": 0.0}) == 0.0

    def test_log_domain_error(self):
        with pytest.raises(ex.DomainError, match="log"):
            ex.evaluate(ex.parse("log(x1)", RED1), {"x1": -1.0, "p1": 0.0})

    def test_sqrt_domain_error(self):
        with pytest.raises(ex.DomainError, match="sqrt"):
            ex.evaluate(ex.parse("sqrt(x1)", RED1), {"x1": -4.0, "p1": 0.0})

    def test_division_by_zero_names_subexpression(self):
        with pytest.raises(ex.DomainError, match="x1/p1"):
            ex.evaluate(ex.parse("x1/p1", RED1), {"x1": 1.0, "p1": 0.0})

    def test_negative_base_integer_exponent(self):
        assert ex.evaluate(ex.parse("x1^3", RED1), {"x1": -2.0, "p1": 0.0}) == -8.0

    def test_negative_base_fractional_exponent(self):
        with pytest.raises(ex.DomainError):
            ex.evaluate(ex.parse("x1^0.5", RED1), {"x1": -2.0, "p1": 0.0})

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        e = ex.parse("sin(x1*p1) + exp(x1/2) - p1^3", RED1)
        env = random_point(rng, RED1.names)
        assert ex.evaluate(e, env) == ex.evaluate(e, env)


def _assert_eval_equal(e1, e2, names, rng, tol=1e-12, samples=20):
    for _ in range(samples):
        env = random_point(rng, names)
        assert ex.evaluate(e1, env) == pytest.approx(ex.evaluate(e2, env), abs=tol)


class TestDiff:
    def test_product_plus_sin(self):
        """d/dx1 of p1*x1 + sin(x1) evaluates like p1 + cos(x1)."""
        d = ex.diff(ex.parse("p1*x1 + sin(x1)", RED1), "x1")
        expected = ex.parse("p1 + cos(x1)", RED1)
        _assert_eval_equal(d, expected, RED1.names, np.random.default_rng(1))

    def test_power_over_constant(self):
        d = ex.diff(ex.parse("p1^2/2", RED1), "p1")
        _assert_eval_equal(d, ex.Var("p1"), RED1.names, np.random.default_rng(2))

    def test_partial_of_cross_term(self):
        d = ex.diff(ex.parse("x1*x2", RED2), "x1")
        assert ex.evaluate(d, {"x1": 0.0, "x2": 7.0, "p1": 0.0, "p2": 0.0}) == 7.0

    def test_chain_rules(self):
        rng = np.random.default_rng(3)
        cases = [
            ("exp(x1^2)", "2*x1*exp(x1^2)"),
            ("log(x1^2 + 1)", "2*x1/(x1^2 + 1)"),
            ("sqrt(x1^2 + 1)", "x1/sqrt(x1^2 + 1)"),
            ("cos(p1*x1)", "-p1*sin(p1*x1)"),
        ]
        for source, derivative in cases:
            d = ex.diff(ex.parse(source, RED1), "x1")
            _assert_eval_equal(d, ex.parse(derivative, RED1), RED1.names, rng)

    def test_linearity(self):
        """diff(e1 + e2) agrees with diff(e1) + diff(e2) as functions."""
        rng = np.random.default_rng(4)
        for _ in range(30):
            e1 = random_expr(rng, RED2.names, depth=4)
            e2 = random_expr(rng, RED2.names, depth=4)
            combined = ex.diff(ex.Add(e1, e2), "p1")
            split = ex.add(ex.diff(e1, "p1"), ex.diff(e2, "p1"))
            for _ in range(5):
                env = random_point(rng, RED2.names)
                try:
                    lhs = ex.evaluate(combined, env)
                    rhs = ex.evaluate(split, env)
                except ex.DomainError:
                    continue
                if abs(lhs) > 1e8:
                    continue
                assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(lhs)))


class TestGradient:
    def test_oscillator(self):
        g = ex.gradient(ex.parse("(x1^2+p1^2)/2", RED1), RED1)
        rng = np.random.default_rng(5)
        _assert_eval_equal(g[0], ex.Var("x1"), RED1.names, rng)
        _assert_eval_equal(g[1], ex.Var("p1"), RED1.names, rng)

    def test_full_context_order(self):
        """gradient of p1*u is (0, u, p1) in the x, p, u block order."""
        g = ex.gradient(ex.parse("p1*u", FULL1), FULL1)
        env = {"x1": 5.0, "p1": 2.0, "u": 3.0}
        assert [ex.evaluate(e, env) for e in g] == [0.0, 3.0, 2.0]

    def test_constant(self):
        g = ex.gradient(ex.Const(4.2), RED2)
        assert all(e == ex.ZERO for e in g)


class TestFiniteDifferenceProperty:
    def test_diff_matches_central_differences(self):
        """Symbolic derivatives of random grammar expressions match central
        finite differences to 1e-6 relative, at points where the expression
        and its derivative stay defined and moderate."""
        rng = np.random.default_rng(6)
        names = RED2.names
        checked = 0
        for _ in range(120):
            e = random_expr(rng, names, depth=6)
            for _ in range(8):
                env = random_point(rng, names)
                var = names[int(rng.integers(len(names)))]
                h = 1e-6 * max(1.0, abs(env[var]))
                hi = dict(env)
                lo = dict(env)
                hi[var] += h
                lo[var] -= h
                try:
                    exact = ex.evaluate(ex.diff(e, var), env)
                    f_hi = ex.evaluate(e, hi)
                    f_lo = ex.evaluate(e, lo)
                except ex.DomainError:
                    continue
                if not all(math.isfinite(v) for v in (exact, f_hi, f_lo)):
                    continue
                if max(abs(f_hi), abs(f_lo)) > 1e2 or abs(exact) > 1e4:
                    continue
                fd = (f_hi - f_lo) / (2.0 * h)
                assert fd == pytest.approx(exact, abs=1e-6 * max(1.0, abs(exact)))
                checked += 1
        assert checked >= 200


class TestRoundTrip:
    def test_parse_print_parse_idempotent(self):
        sources = [
            "p1*x1 + sin(x1)",
            "-x1^2 + p1^-2",
            "x1 - (p1 - 1) - 2",
            "x1/(p1*x2)/p2",
            "2*(x1 + p1)^3",
            "sqrt(x1^2 + 1)*exp(-p1)",
            "-(x1*p1)",
        ]
        for s in sources:
            t = ex.parse(s, RED2)
            assert ex.parse(ex.format_expr(t), RED2) == t

    def test_random_trees_round_trip(self):
        """parse(print(parse(print(e)))) stabilizes after one pass: raw trees
        may constant-fold on the first re-parse, never after."""
        rng = np.random.default_rng(7)
        for _ in range(200):
            e = random_expr(rng, RED2.names, depth=5)
            once = ex.parse(ex.format_expr(e), RED2.names)
            twice = ex.parse(ex.format_expr(once), RED2.names)
            assert once == twice


class TestCompiled:
    def test_bit_identical_to_tree_walk(self):
        """Compiled evaluation reproduces the tree walk bit for bit."""
        rng = np.random.default_rng(8)
        names = RED2.names
        for _ in range(60):
            e = random_expr(rng, names, depth=5)
            f = ex.compile_exprs([e], names)
            for _ in range(5):
                env = random_point(rng, names)
                coords = tuple(env[name] for name in names)
                try:
                    walked = ex.evaluate(e, env)
                except ex.DomainError:
                    continue
                assert f(coords)[0] == walked


class TestSubstitute:
    def test_flip_sign_of_variable(self):
        e = ex.parse("x1^2 + p1*x1", RED1)
        flipped = ex.substitute(e, {"x1": ex.neg(ex.Var("x1"))})
        env = {"x1": 1.3, "p1": -0.4}
        neg_env = {"x1": -1.3, "p1": -0.4}
        assert ex.evaluate(flipped, env) == pytest.approx(
            ex.evaluate(e, neg_env), abs=1e-15
        )
