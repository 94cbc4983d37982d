import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magedge.lattice_operator import Box
from magedge.scaling_analysis import (
    EdgeSweep,
    ModulusBound,
    dyadic_depth,
    fit_power,
    fit_power_log,
    midconvex_defect,
    midconvex_modulus,
    midpoint_telescope,
    norm_sweep,
    sweep_edges,
    verify_scaling_bound,
)
from magedge.scenarios import harper_symbol, identity_symbol, unit_constant_field


def make_sweep(eps, deltas, which="sup", field_kind="constant", floor=1e-15, base=1.0):
    eps = np.asarray(eps, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    return EdgeSweep(
        eps=eps,
        edges=base + deltas,
        edge_zero=base,
        which=which,
        noise_floor=floor,
        residuals=np.zeros_like(eps),
        residual_zero=0.0,
        field_kind=field_kind,
    )


GRID = np.array([2.0**-k for k in range(10, 2, -1)])


class TestEdgeSweepValidation:
    def test_grid_must_increase(self):
        with pytest.raises(ValueError):
            make_sweep([0.25, 0.25], [1.0, 1.0])

    def test_grid_range(self):
        with pytest.raises(ValueError):
            make_sweep([0.1, 0.6], [1.0, 1.0])
        with pytest.raises(ValueError):
            make_sweep([-0.1, 0.1], [1.0, 1.0])

    def test_flagging_below_floor(self):
        sweep = make_sweep(GRID, 2.0 * GRID, floor=1e-2)
        assert sweep.flagged.tolist() == (2.0 * GRID < 1e-2).tolist()

    def test_csv_export(self, tmp_path):
        sweep = make_sweep(GRID, 2.0 * GRID)
        path = tmp_path / "sweep.csv"
        sweep.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "eps,edge,delta_edge,residual,flagged"
        assert len(lines) == 1 + GRID.size


class TestFits:
    def test_power_recovers_linear(self):
        fit = fit_power(make_sweep(GRID, 2.0 * GRID))
        assert fit.exponent == pytest.approx(1.0, abs=1e-12)
        assert fit.coefficient == pytest.approx(2.0, rel=1e-12)
        assert fit.residual <= 1e-12

    @pytest.mark.parametrize("p", [0.5, 0.75, 1.0])
    def test_power_model_recovery(self, p):
        fit = fit_power(make_sweep(GRID, GRID**p))
        assert fit.exponent == pytest.approx(p, abs=1e-10)

    def test_power_requires_three_points(self):
        with pytest.raises(ValueError):
            fit_power(make_sweep(GRID, 2.0 * GRID, floor=1.0))

    def test_power_log_recovers_coefficient(self):
        deltas = 3.0 * GRID * np.log(1.0 / GRID)
        fit = fit_power_log(make_sweep(GRID, deltas))
        assert fit.coefficient == pytest.approx(3.0, rel=1e-12)
        assert fit.residual <= 1e-12

    def test_model_discrimination_on_linear_data(self):
        sweep = make_sweep(GRID, GRID.copy())
        assert fit_power(sweep).residual < fit_power_log(sweep).residual

    def test_power_log_needs_small_eps(self):
        grid = np.array([0.2, 0.3, 0.4, 0.5])
        with pytest.raises(ValueError):
            fit_power_log(make_sweep(grid, grid))


class TestVerifyScalingBound:
    NORMS = {0.0: 4.0, 1.5: 6.0, 2.0: 8.0}

    def test_identity_all_ratios_zero(self):
        sweep = make_sweep(GRID, np.zeros_like(GRID), floor=1e-12)
        cert = verify_scaling_bound(sweep, 2.0, self.NORMS, "lipschitz")
        assert np.all(cert.ratios == 0.0)
        assert not cert.diverged

    def test_lipschitz_on_linear_data(self):
        cert = verify_scaling_bound(make_sweep(GRID, 2.0 * GRID), 2.0, self.NORMS, "lipschitz")
        assert cert.ratio_max == pytest.approx(0.25, rel=1e-12)
        assert not cert.diverged

    def test_divergence_flag_trips(self):
        # a constant shift makes delta/eps blow up as eps -> 0
        cert = verify_scaling_bound(
            make_sweep(GRID, np.full_like(GRID, 0.1)), 2.0, self.NORMS, "lipschitz"
        )
        assert cert.diverged

    def test_log_regime_ratio(self):
        deltas = 8.0 * GRID * np.log(1.0 / GRID)
        cert = verify_scaling_bound(make_sweep(GRID, deltas), 2.0, self.NORMS, "log")
        assert cert.ratio_max == pytest.approx(1.0, rel=1e-12)
        assert not cert.diverged

    def test_holder_regime_ratio(self):
        deltas = 6.0 * GRID**0.75
        cert = verify_scaling_bound(make_sweep(GRID, deltas), 1.5, self.NORMS, "holder")
        assert cert.ratio_max == pytest.approx(1.0, rel=1e-12)

    def test_alpha_regime_consistency(self):
        sweep = make_sweep(GRID, GRID.copy())
        with pytest.raises(ValueError):
            verify_scaling_bound(sweep, 2.5, self.NORMS, "holder")
        with pytest.raises(ValueError):
            verify_scaling_bound(sweep, 1.5, self.NORMS, "lipschitz")
        with pytest.raises(ValueError):
            verify_scaling_bound(sweep, 1.5, self.NORMS, "log")

    def test_lipschitz_requires_constant_or_slowly_varying(self):
        sweep = make_sweep(GRID, GRID.copy(), field_kind="general")
        with pytest.raises(ValueError):
            verify_scaling_bound(sweep, 2.0, self.NORMS, "lipschitz")
        # the log regime accepts general fields
        verify_scaling_bound(sweep, 2.0, self.NORMS, "log")

    def test_missing_norm_key(self):
        with pytest.raises(ValueError):
            verify_scaling_bound(make_sweep(GRID, GRID.copy()), 2.0, {0.0: 4.0}, "lipschitz")

    def test_as_dict_schema(self):
        cert = verify_scaling_bound(make_sweep(GRID, 2.0 * GRID), 2.0, self.NORMS, "lipschitz")
        data = cert.as_dict()
        assert data["schema_version"] == 1
        assert data["regime"] == "lipschitz"
        assert len(data["ratios"]) == GRID.size


class TestMidConvexity:
    def test_square_is_convex(self):
        xs = np.linspace(-1, 1, 9)
        assert midconvex_defect(xs, xs**2, 1.0) == 0.0

    def test_negative_absolute_value(self):
        xs = np.linspace(-1, 1, 9)
        assert midconvex_defect(xs, -np.abs(xs), 1.0) == pytest.approx(1.0, rel=1e-12)

    def test_constant_samples(self):
        xs = np.linspace(0, 1, 7)
        assert midconvex_defect(xs, np.ones_like(xs), 0.75) == 0.0

    def test_non_uniform_grid_rejected(self):
        with pytest.raises(ValueError):
            midconvex_defect([0.0, 0.1, 0.3, 0.4, 0.5], np.zeros(5), 1.0)

    def test_needs_five_points(self):
        with pytest.raises(ValueError):
            midconvex_defect([0.0, 0.5, 1.0], np.zeros(3), 1.0)

    @given(
        st.floats(min_value=0.1, max_value=5.0),
        st.floats(min_value=-2.0, max_value=2.0),
        st.floats(min_value=-1.0, max_value=1.0),
    )
    @settings(max_examples=40, deadline=None)
    def test_convex_quadratics_have_zero_defect(self, a, b, c):
        xs = np.linspace(-1.5, 1.5, 13)
        values = a * xs**2 + b * xs + c
        assert midconvex_defect(xs, values, 1.0) == 0.0


class TestModulus:
    def test_dyadic_depth_examples(self):
        assert dyadic_depth(0.25) == 3
        assert dyadic_depth(0.5 - 1e-9) == 2
        n = dyadic_depth(0.3)
        assert 1.0 < 0.3 * 2**n <= 2.0

    def test_depth_window_holds_on_random_eta(self):
        rng = np.random.default_rng(2)
        for eta in rng.uniform(1e-6, 0.4999, size=200):
            n = dyadic_depth(float(eta))
            assert 1.0 < eta * 2**n <= 2.0

    def test_modulus_holder_example(self):
        value = midconvex_modulus(0.0, 1.0, 0.75, 0.25)
        assert value == pytest.approx(2.0 * 0.25**0.75, rel=1e-12)

    def test_modulus_lipschitz_log_example(self):
        assert midconvex_modulus(1.0, 1.0, 1.0, 0.25) == pytest.approx(1.25, rel=1e-14)

    def test_parameter_domains(self):
        with pytest.raises(ValueError):
            midconvex_modulus(1.0, 1.0, 0.4, 0.25)
        with pytest.raises(ValueError):
            midconvex_modulus(1.0, 1.0, 1.0, 0.5)
        with pytest.raises(ValueError):
            midconvex_modulus(-1.0, 1.0, 1.0, 0.25)

    def test_modulus_bound_dataclass(self):
        mb = ModulusBound(beta=0.75, defect=0.0, sup_bound=1.0)
        assert mb.c_beta == pytest.approx(2.0)
        assert mb.bound(0.25) == pytest.approx(2.0 * 0.25**0.75, rel=1e-12)
        mb1 = ModulusBound(beta=1.0, defect=1.0, sup_bound=1.0)
        assert mb1.c_beta is None
        assert mb1.bound(0.25) == pytest.approx(1.25)

    def test_dominates_simple_midconvex_functions(self):
        # E(x) = -|x| is bounded by 1 on [-1, 1] with defect constant 1
        xs = np.linspace(-1, 1, 33)
        values = -np.abs(xs)
        m = midconvex_defect(xs, values, 1.0)
        for eta_idx in (1, 3, 5):
            eta = eta_idx * (xs[1] - xs[0])
            bound = midconvex_modulus(m, 1.0, 1.0, eta)
            measured = np.max(np.abs(values[eta_idx:] - values[:-eta_idx]))
            assert measured <= bound + 1e-12


class TestMidpointTelescope:
    def test_single_halving(self):
        assert midpoint_telescope(0.0, 1.0, 1) == (0.5, 0.5)

    def test_three_halvings(self):
        assert midpoint_telescope(0.0, 1.0, 3) == (0.125, 0.875)

    def test_lands_on_x_plus_eta_exactly(self):
        for k in range(3, 21):
            eta = 2.0**-k
            x = 2.0**-5
            n = dyadic_depth(eta)
            b = x + eta * 2.0**n
            left, _ = midpoint_telescope(x, b, n)
            assert left == x + eta

    def test_right_point_mirror(self):
        x, eta = 0.25, 0.0625
        n = dyadic_depth(eta)
        a = x + eta - eta * 2.0**n
        _, right = midpoint_telescope(a, x + eta, n)
        assert right == x

    def test_n_validation(self):
        with pytest.raises(ValueError):
            midpoint_telescope(0.0, 1.0, 0)


class TestSweepEdges:
    def test_identity_sweep_is_null(self):
        sweep = sweep_edges(
            identity_symbol(),
            unit_constant_field(2),
            "sup",
            [0.125, 0.25, 0.5],
            Box(3, 2),
            tol=1e-12,
            seed=0,
        )
        assert np.max(sweep.deltas) <= 1e-13
        assert sweep.flagged.all()

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            sweep_edges(
                identity_symbol(), unit_constant_field(2), "sup", [0.6], Box(2, 2)
            )

    def test_deterministic_across_workers(self):
        args = (harper_symbol(), unit_constant_field(2), "sup", [0.125, 0.25], Box(4, 2))
        a = sweep_edges(*args, tol=1e-10, seed=5, workers=1)
        b = sweep_edges(*args, tol=1e-10, seed=5, workers=2)
        assert np.array_equal(a.edges, b.edges)

    def test_norm_sweep_combination(self):
        args = (harper_symbol(), unit_constant_field(2))
        grid = [0.125, 0.25]
        box = Box(3, 2)
        sup = sweep_edges(*args, "sup", grid, box, tol=1e-11, seed=1)
        inf = sweep_edges(*args, "inf", grid, box, tol=1e-11, seed=1)
        norm = norm_sweep(sup, inf)
        assert norm.which == "norm"
        assert np.allclose(norm.edges, np.maximum(np.abs(sup.edges), np.abs(inf.edges)))
        with pytest.raises(ValueError):
            norm_sweep(sup, sup)
