"""Tests for the Cauchy-data checks: compatibility, level, transversality."""

import pytest

from charflow import expr as ex
from charflow.charfield import Hamiltonian, PhasePoint
from charflow.stationary import (
    CauchyData,
    check_compatibility,
    check_level,
    check_transversality,
    parameter_grid,
)

RED2 = ex.VarContext(2, "reduced")
H_EIK = Hamiltonian(RED2, "p1^2 + p2^2 - 1")
Z0_EIK = PhasePoint.reduced([0.0, 0.0], [0.0, 1.0])


def eikonal_seed():
    return CauchyData.from_sources(2, ["l1", "0"], ["0", "1"], "0", [1.0])


class TestConstruction:
    def test_dimensions_validated(self):
        with pytest.raises(ValueError):
            CauchyData.from_sources(2, ["l1"], ["0", "1"], "0", [1.0])
        with pytest.raises(ValueError):
            CauchyData.from_sources(2, ["l1", "0"], ["0", "1"], "0", [])
        with pytest.raises(ValueError):
            CauchyData.from_sources(2, ["l1", "0"], ["0", "1"], "0", [-1.0])

    def test_only_parameter_variables_allowed(self):
        with pytest.raises(ex.ParseError):
            CauchyData.from_sources(2, ["x1", "0"], ["0", "1"], "0", [1.0])

    def test_parameter_grid_shape(self):
        grid = parameter_grid(eikonal_seed(), k=21)
        assert len(grid) == 21
        assert grid[10] == (0.0,)


class TestCompatibility:
    def test_eikonal_seed_exact(self):
        report = check_compatibility(eikonal_seed())
        assert report.passed
        assert report.max_residual == 0.0

    def test_parabolic_data_exact(self):
        """u0 = l^2 with p0 = (2l, 0) and x0 = (l, 0) satisfies the strip
        condition identically: both sides evaluate to 2l."""
        c = CauchyData.from_sources(2, ["l1", "0"], ["2*l1", "0"], "l1^2", [1.0])
        report = check_compatibility(c)
        assert report.passed
        assert report.max_residual == 0.0

    def test_broken_data_residual_one(self):
        c = CauchyData.from_sources(2, ["l1", "0"], ["0", "0"], "l1", [1.0])
        report = check_compatibility(c)
        assert not report.passed
        assert report.max_residual == pytest.approx(1.0, abs=1e-15)


class TestLevel:
    def test_eikonal_seed_exact(self):
        report = check_level(eikonal_seed(), H_EIK, Z0_EIK)
        assert report.passed
        assert report.max_residual == 0.0

    def test_constant_hamiltonian(self):
        h = Hamiltonian(RED2, "3")
        report = check_level(eikonal_seed(), h, Z0_EIK)
        assert report.max_residual == 0.0

    def test_wrong_level_residual_three(self):
        c = CauchyData.from_sources(2, ["l1", "0"], ["0", "2"], "0", [1.0])
        report = check_level(c, H_EIK, Z0_EIK)
        assert not report.passed
        assert report.max_residual == pytest.approx(3.0, abs=1e-15)


class TestTransversality:
    def test_eikonal_seed_determinant(self):
        """Columns (0, 2) and (1, 0) give |det| = 2."""
        report = check_transversality(eikonal_seed(), H_EIK)
        assert report.passed
        assert report.min_abs_det == pytest.approx(2.0, abs=1e-9)

    def test_constant_data_fails(self):
        c = CauchyData.from_sources(2, ["0", "0"], ["0", "1"], "0", [1.0])
        report = check_transversality(c, H_EIK)
        assert not report.passed
        assert report.min_abs_det == pytest.approx(0.0, abs=1e-15)

    def test_n1_single_column_convention(self):
        """With no parameters the matrix is the single column dH0/dp."""
        red1 = ex.VarContext(1, "reduced")
        h = Hamiltonian(red1, "p1^2/2")
        ok = CauchyData.from_sources(1, ["1"], ["2"], "0", [])
        assert check_transversality(ok, h).passed
        stuck = CauchyData.from_sources(1, ["1"], ["0"], "0", [])
        assert not check_transversality(stuck, h).passed


class TestReparameterization:
    def test_sign_flip_leaves_magnitudes_unchanged(self):
        """l -> -l flips matrix columns but preserves |det| and residuals."""
        c = CauchyData.from_sources(
            2, ["l1", "l1^2"], ["2*l1", "1"], "l1^2 + l1^2*l1^2/2", [1.0]
        )
        flip = {"l1": ex.neg(ex.Var("l1"))}
        c_flip = CauchyData(
            n=2,
            x0=tuple(ex.substitute(e, flip) for e in c.x0),
            p0=tuple(ex.substitute(e, flip) for e in c.p0),
            u0=ex.substitute(c.u0, flip),
            box=c.box,
        )
        grid = parameter_grid(c, k=21)
        compat = check_compatibility(c, grid)
        compat_f = check_compatibility(c_flip, grid)
        assert compat.max_residual == pytest.approx(compat_f.max_residual, abs=1e-12)
        z0 = PhasePoint.reduced([0.0, 0.0], [0.0, 1.0])
        h = Hamiltonian(RED2, "p1^2 + p2^2 - 1")
        level = check_level(c, h, z0, grid)
        level_f = check_level(c_flip, h, z0, grid)
        assert level.max_residual == pytest.approx(level_f.max_residual, abs=1e-12)
        trans = check_transversality(c, h, grid)
        trans_f = check_transversality(c_flip, h, grid)
        assert trans.min_abs_det == pytest.approx(trans_f.min_abs_det, abs=1e-12)
        assert trans.min_sigma_min == pytest.approx(trans_f.min_sigma_min, abs=1e-12)
