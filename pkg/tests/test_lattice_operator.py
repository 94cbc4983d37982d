import numpy as np
import pytest

from magedge.lattice_operator import (
    Box,
    GeneralKernel,
    HoppingSymbol,
    PeierlsBuilder,
    SymbolTail,
    build_peierls_matrix,
    gauge_conjugation_check,
    recenter_kernel,
    row_schur_alpha_norm,
    schur_alpha_norm,
    weighted_l1,
)
from magedge.magnetic_phase import ConstantField, QuadratureRule
from magedge.scenarios import (
    harper_symbol,
    identity_symbol,
    long_range_symbol,
    sin_bump_field,
    sin_potential_field,
    unit_constant_field,
)

RULE = QuadratureRule(20)


class TestHoppingSymbol:
    def test_rejects_non_self_adjoint(self):
        with pytest.raises(ValueError):
            HoppingSymbol(2, {(1, 0): 1.0})
        with pytest.raises(ValueError):
            HoppingSymbol(2, {(1, 0): 1.0, (-1, 0): 2.0})

    def test_complex_pairs_accepted(self):
        sym = HoppingSymbol(1, {(1,): 1 + 2j, (-1,): 1 - 2j})
        assert sym.coefficients[(1,)] == 1 + 2j

    def test_json_roundtrip(self, tmp_path):
        sym = harper_symbol()
        path = tmp_path / "sym.json"
        sym.save(path)
        back = HoppingSymbol.load(path)
        assert back.dimension == 2
        assert back.coefficients == sym.coefficients

    def test_tail_bound_dominates_direct_sum(self):
        rate, amp = 4.6, 1.0
        sym = HoppingSymbol(
            2, {(0, 0): 1.0}, tail=SymbolTail(rate=rate, amplitude=amp)
        )
        bound = sym.tail_bound(1.5)
        direct = 0.0
        for gx in range(-60, 61):
            for gy in range(-60, 61):
                dist = np.hypot(gx, gy)
                if dist > sym.support_radius:
                    direct += amp * (1 + gx * gx + gy * gy) ** ((1.5 - rate) / 2)
        assert direct <= bound
        assert np.isfinite(bound)

    def test_tail_bound_requires_convergence(self):
        sym = HoppingSymbol(2, {(0, 0): 1.0}, tail=SymbolTail(rate=2.0, amplitude=1.0))
        with pytest.raises(ValueError):
            sym.tail_bound(1.0)

    def test_no_tail_model_means_zero(self):
        assert harper_symbol().tail_bound(2.0) == 0.0


class TestNorms:
    def test_identity_symbol_every_alpha(self):
        sym = identity_symbol()
        for alpha in (0.0, 1.0, 2.0, 3.7):
            assert schur_alpha_norm(sym, alpha) == pytest.approx(1.0)

    def test_harper_values(self):
        sym = harper_symbol()
        assert schur_alpha_norm(sym, 0.0) == pytest.approx(4.0)
        assert schur_alpha_norm(sym, 2.0) == pytest.approx(8.0)

    def test_weighted_l1(self):
        assert weighted_l1(harper_symbol(), "distance") == pytest.approx(4.0)
        assert weighted_l1(identity_symbol(), "distance") == pytest.approx(0.0)
        assert weighted_l1(harper_symbol(), "bracket_squared") == pytest.approx(8.0)
        with pytest.raises(ValueError):
            weighted_l1(harper_symbol(), "cubed")


class TestBox:
    def test_site_count_and_order(self):
        box = Box(radius=2, dimension=2)
        sites = box.sites()
        assert sites.shape == (25, 2)
        assert box.site_count == 25
        assert tuple(sites[0]) == (-2, -2)
        assert tuple(sites[-1]) == (2, 2)
        # enumeration is reproducible and index() inverts it
        for i, s in enumerate(sites):
            assert box.index(s) == i
        assert np.array_equal(box.indices(sites), np.arange(25))

    def test_index_outside_raises(self):
        with pytest.raises(ValueError):
            Box(radius=2, dimension=2).index((3, 0))


class TestBuildPeierlsMatrix:
    def test_zero_eps_equals_bare_matrix(self):
        box = Box(5, 2)
        dressed = build_peierls_matrix(harper_symbol(), unit_constant_field(2), 0.0, box, RULE)
        bare = build_peierls_matrix(
            harper_symbol(), ConstantField(np.zeros((2, 2))), 0.0, box, RULE
        )
        assert (dressed.matrix != bare.matrix).nnz == 0

    def test_entry_phases_constant_unit_field(self):
        eps = 0.25
        m = build_peierls_matrix(harper_symbol(), unit_constant_field(2), eps, Box(3, 2), RULE)
        # phase between (1,0) and (1,1) is -eps/2; the row side carries exp(i*phi)
        assert m.entry((1, 0), (1, 1)) == pytest.approx(np.exp(-1j * eps / 2), abs=1e-14)
        assert m.entry((1, 1), (1, 0)) == pytest.approx(np.exp(+1j * eps / 2), abs=1e-14)
        # phase between (0,0) and (1,0) vanishes
        assert m.entry((0, 0), (1, 0)) == pytest.approx(1.0, abs=1e-15)

    def test_hermitian_and_magnitudes_independent_of_eps(self):
        box = Box(4, 2)
        builder = PeierlsBuilder(harper_symbol(), sin_bump_field(), box, RULE)
        bare = builder.build(0.0)
        for eps in (0.1, 0.45):
            m = builder.build(eps)
            assert m.hermiticity_defect() <= 1e-14 * m.max_abs()
            assert np.allclose(np.abs(m.toarray()), np.abs(bare.toarray()), atol=1e-14)

    def test_support_pattern_independent_of_eps_and_field(self):
        box = Box(4, 2)
        a = build_peierls_matrix(harper_symbol(), unit_constant_field(2), 0.3, box, RULE)
        b = build_peierls_matrix(harper_symbol(), sin_bump_field(), 0.07, box, RULE)
        pa = a.matrix.copy()
        pb = b.matrix.copy()
        pa.data = np.ones_like(pa.data)
        pb.data = np.ones_like(pb.data)
        assert (pa != pb).nnz == 0

    def test_row_schur_norm_phase_invariant(self):
        box = Box(4, 2)
        builder = PeierlsBuilder(harper_symbol(), unit_constant_field(2), box, RULE)
        want = {
            alpha: row_schur_alpha_norm(builder.build(0.0), (0, 0), alpha)
            for alpha in (0.0, 1.0, 2.0)
        }
        for eps in (0.2, 0.5):
            m = builder.build(eps)
            for alpha, ref in want.items():
                assert row_schur_alpha_norm(m, (0, 0), alpha) == pytest.approx(ref, rel=1e-12)

    def test_conjugation_symmetry_constant_field(self):
        box = Box(4, 2)
        builder = PeierlsBuilder(harper_symbol(), unit_constant_field(2), box, RULE)
        plus = builder.build(0.3).toarray()
        minus = builder.build(-0.3).toarray()
        assert np.array_equal(minus, plus.conj())

    def test_slowly_varying_builds_hermitian(self):
        m = build_peierls_matrix(harper_symbol(), sin_potential_field(), 0.2, Box(3, 2), RULE)
        assert m.phase_variant == "slowly-varying"
        assert m.hermiticity_defect() <= 1e-14 * m.max_abs()

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            build_peierls_matrix(harper_symbol(), unit_constant_field(2), 0.1, Box(3, 1), RULE)

    def test_coo_csv_export(self, tmp_path):
        m = build_peierls_matrix(harper_symbol(), unit_constant_field(2), 0.2, Box(1, 2), RULE)
        path = tmp_path / "m.csv"
        m.to_coo_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "row,col,re,im"
        assert len(lines) == 1 + m.matrix.nnz
        row, col, re, im = lines[1].split(",")
        assert complex(float(re), float(im)) == pytest.approx(
            m.matrix[int(row), int(col)], abs=1e-15
        )


class TestGeneralKernel:
    def test_hermiticity_sampled(self):
        with pytest.raises(ValueError):
            GeneralKernel(dimension=2, entry=lambda g, gp: 1.0 if g >= gp else 2.0)

    def test_kernel_build_matches_symbol(self):
        sym = harper_symbol()
        coeffs = sym.coefficients

        def entry(g, gp):
            return coeffs.get(tuple(a - b for a, b in zip(g, gp)), 0.0j)

        kernel = GeneralKernel(dimension=2, entry=entry, name="harper-as-kernel")
        box = Box(2, 2)
        a = build_peierls_matrix(sym, unit_constant_field(2), 0.2, box, RULE)
        b = build_peierls_matrix(kernel, unit_constant_field(2), 0.2, box, RULE)
        assert np.max(np.abs(a.toarray() - b.toarray())) <= 1e-14


class TestRecenterKernel:
    def test_zero_recentering_reproduces_symbol(self):
        kernel = recenter_kernel(harper_symbol(), unit_constant_field(2), 0.0, RULE)
        assert kernel.entry((1, 0), (0, 0)) == pytest.approx(1.0, abs=1e-15)
        assert kernel.entry((5, 5), (0, 0)) == 0.0j

    def test_magnitudes_preserved(self):
        kernel = recenter_kernel(harper_symbol(), sin_bump_field(), 0.3, RULE)
        for g, gp in (((1, 0), (0, 0)), ((2, 1), (1, 1)), ((0, 0), (0, 1))):
            assert abs(kernel.entry(g, gp)) == pytest.approx(1.0, rel=1e-12)

    def test_recentered_build_matches_direct(self):
        box = Box(4, 2)
        kernel = recenter_kernel(harper_symbol(), unit_constant_field(2), 0.25, RULE)
        shifted = build_peierls_matrix(kernel, unit_constant_field(2), 0.05, box, RULE)
        direct = build_peierls_matrix(harper_symbol(), unit_constant_field(2), 0.30, box, RULE)
        assert np.max(np.abs(shifted.toarray() - direct.toarray())) <= 1e-14

    def test_slowly_varying_refused(self):
        with pytest.raises(ValueError):
            recenter_kernel(harper_symbol(), sin_potential_field(), 0.1, RULE)


class TestGaugeConjugation:
    def test_zero_chi_is_exact(self):
        m = build_peierls_matrix(harper_symbol(), unit_constant_field(2), 0.3, Box(4, 2), RULE)
        assert gauge_conjugation_check(m, lambda s: 0.0) == 0.0

    def test_random_chi_within_solver_noise(self):
        m = build_peierls_matrix(harper_symbol(), unit_constant_field(2), 0.3, Box(6, 2), RULE)
        rng = np.random.default_rng(7)
        table = {tuple(s): float(rng.uniform(-np.pi, np.pi)) for s in m.box.sites()}
        assert gauge_conjugation_check(m, lambda s: table[s]) <= 1e-12

    def test_linear_chi(self):
        m = build_peierls_matrix(harper_symbol(), unit_constant_field(2), 0.3, Box(6, 2), RULE)
        w = np.array([0.4, -1.3])
        assert gauge_conjugation_check(m, lambda s: float(w @ np.asarray(s))) <= 1e-12


def test_long_range_symbol_shape():
    sym = long_range_symbol(radius=5, rate=4.6)
    assert sym.coefficients[(0, 0)] == pytest.approx(1.0)
    assert (5, 0) in sym.coefficients
    assert (5, 1) not in sym.coefficients  # |gamma| > 5
    assert schur_alpha_norm(sym, 0.0) > 1.0
