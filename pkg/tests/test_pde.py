import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from blowup_lab import closedform, config, pde
from blowup_lab.diffusion import CoefficientField
from blowup_lab.geometry import Ball, BlowupSet, BoundaryData, Box, BoxRegion, Interval

UNIT = Interval(0, 1)
BM = CoefficientField.brownian(1)
Q1, Q2 = closedform.power(1), closedform.power(2)
LINEAR = closedform.power(1, 0.0)


def _bd(left, right):
    return config.build_boundary(config.interval_boundary(left, right), 1)


def _const(c, dim=1):
    return BoundaryData(float(c), dimension=dim, blowup=BlowupSet((), dim))


def _problem(h=1 / 64, fld=BM, gen=Q1, bd=None, domain=UNIT, n=math.inf):
    return pde.EllipticProblem(pde.Grid(domain, h), fld, gen, bd or _const(1.0, domain.dimension), truncation=n)


# --- grid and assembly -------------------------------------------------------------


def test_grid_layout():
    g = pde.Grid(Box((0, 0), (1, 2)), 0.25)
    assert g.shape == (5, 9)
    assert g.size == 45
    assert int(g.interior.sum()) == 3 * 7
    assert g.strides() == [9, 1]


def test_grid_rejects_balls_and_coarse_steps():
    with pytest.raises(TypeError):
        pde.Grid(Ball((0, 0), 1), 0.1)
    with pytest.raises(ValueError):
        pde.Grid(UNIT, 0.75)


def _row(A, B, k):
    return A.toarray()[k], B.toarray()[k]


def test_central_diffusion_stencil():
    A, B = pde.assemble_operator(_problem(h=0.25, gen=LINEAR))
    dense = A.toarray()
    np.testing.assert_allclose(dense[1], [-8, 16, -8])


def test_upwind_drift_stencils():
    # b > 0 looks downstream (forward difference): [0, 1, -1] / h on top of [-8, 16, -8]
    right = CoefficientField.constant_drift((1.0,), sigma=1.0)
    A, _ = pde.assemble_operator(_problem(h=0.25, fld=right, gen=LINEAR))
    np.testing.assert_allclose(A.toarray()[1], [-8, 20, -12])
    left = CoefficientField.constant_drift((-1.0,), sigma=1.0)
    A, _ = pde.assemble_operator(_problem(h=0.25, fld=left, gen=LINEAR))
    np.testing.assert_allclose(A.toarray()[1], [-12, 20, -8])


def test_boundary_coupling_columns():
    A, B = pde.assemble_operator(_problem(h=0.25, gen=LINEAR))
    np.testing.assert_allclose(B.toarray()[0], [-8, 0])
    np.testing.assert_allclose(B.toarray()[2], [0, -8])


def _random_field(rng, dim):
    kind = rng.integers(3)
    if kind == 0:
        return CoefficientField.constant_drift(tuple(rng.normal(size=dim)), sigma=float(rng.uniform(0.2, 2)))
    if kind == 1:
        return CoefficientField.linear_drift(float(rng.uniform(-3, 3)), tuple(rng.uniform(0, 1, dim)), sigma=float(rng.uniform(0.2, 2)))
    if dim == 1:
        nodes = np.linspace(0, 1, 6)
        return CoefficientField.tabulated(nodes, rng.normal(size=6) * 3, rng.uniform(0.2, 2, 6))
    return CoefficientField.scalar_sigma(float(rng.uniform(0.2, 2)), dim)


@pytest.mark.parametrize("dim", [1, 2])
def test_m_matrix_on_random_coefficients(dim):
    rng = np.random.default_rng(dim)
    domain = UNIT if dim == 1 else Box((0, 0), (1, 1))
    for _ in range(10):
        fld = _random_field(rng, dim)
        A, B = pde.assemble_operator(_problem(h=1 / 16, fld=fld, domain=domain))
        assert pde.is_m_matrix(A, tol=1e-12)
        assert B.nnz == 0 or B.data.max() <= 0


def test_is_m_matrix_negative_control():
    assert not pde.is_m_matrix(np.array([[2.0, 1.0], [-1.0, 2.0]]))
    assert not pde.is_m_matrix(np.array([[1.0, -2.0], [-1.0, 2.0]]))


def test_non_diagonal_diffusion_rejected():
    class FullMatrixField:
        diagonal = False

        def __getattr__(self, name):
            return getattr(BM, name)

    prob = _problem(h=0.25, gen=LINEAR)
    prob.field = FullMatrixField()
    with pytest.raises(pde.NonDiagonalDiffusionError):
        pde.assemble_operator(prob)


def test_degenerate_diffusion_rejected_for_nonlinear_problems():
    with pytest.raises(ValueError):
        _problem(fld=CoefficientField.constant_drift((1.0,), sigma=0.0))


# --- nonlinear solve ------------------------------------------------------------------


def test_linear_sanity_identity():
    fld = pde.solve_truncated(_problem(h=1 / 32, gen=LINEAR, bd=_bd(0.0, 1.0)))
    np.testing.assert_allclose(fld.values, fld.grid.points[:, 0], atol=1e-14)


@pytest.mark.parametrize("h", [1 / 8, 1 / 50, 1 / 128])
@pytest.mark.parametrize("sigma", [0.3, 1.0, 2.5])
def test_linear_sanity_affine(h, sigma):
    fld_c = CoefficientField.scalar_sigma(sigma)
    bd = BoundaryData(0.0, (), ((3.0,), 0.5), BlowupSet((), 1), 1)
    sol = pde.solve_truncated(_problem(h=h, fld=fld_c, gen=LINEAR, bd=bd))
    np.testing.assert_allclose(sol.values, 3 * sol.grid.points[:, 0] + 0.5, atol=1e-12)


def test_linear_sanity_two_dimensional():
    bd = BoundaryData(0.0, (), ((1.0, -2.0), 3.0), BlowupSet((), 2), 2)
    sol = pde.solve_truncated(_problem(h=1 / 16, gen=LINEAR, bd=bd, domain=Box((0, 0), (1, 1)),
                                       fld=CoefficientField.brownian(2)))
    pts = sol.grid.points
    np.testing.assert_allclose(sol.values, pts[:, 0] - 2 * pts[:, 1] + 3, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 100), st.sampled_from([0.5, 1.0, 2.0]), st.floats(0.1, 10))
def test_constant_data_bounds(c, q, kappa):
    sol = pde.solve_truncated(_problem(h=1 / 32, gen=closedform.power(q, kappa), bd=_const(c)))
    assert np.all(sol.values >= 0)
    assert np.all(sol.values <= c * (1 + 1e-12))
    assert not sol.clamp_active


def test_newton_residual_at_convergence():
    prob = _problem(h=1 / 256, bd=_bd(None, 1.0), n=2.0**20)
    sol = pde.solve_truncated(prob)
    assert sol.residual <= 1e-10 * (1 + 2.0**20)
    assert not sol.clamp_active
    assert sol.history[-1] == sol.residual


def test_newton_stagnation_reported():
    prob = _problem(h=1 / 64, bd=_bd(None, 1.0), n=2.0**20)
    prob.max_iter = 0
    with pytest.raises(pde.NewtonStagnationError) as err:
        pde.solve_truncated(prob, picard_sweeps=0)
    assert err.value.history


def test_infinite_boundary_needs_truncation():
    with pytest.raises(ValueError):
        pde.solve_truncated(_problem(bd=_bd(None, 1.0)))


def _reference_error(h, fld, bd):
    coarse = pde.solve_truncated(_problem(h=h, fld=fld, bd=bd))
    fine = pde.solve_truncated(_problem(h=h / 4, fld=fld, bd=bd))
    idx = np.rint(coarse.grid.points[:, 0] * round(4 / h)).astype(int)
    return float(np.max(np.abs(coarse.values - fine.values[idx])))


@pytest.mark.parametrize("fld,lo,hi", [
    (BM, 3.2, 4.8),
    (CoefficientField.scalar_sigma(0.5), 3.2, 4.8),
    (CoefficientField.constant_drift((1.0,), sigma=1.0), 1.7, 4.8),
    (CoefficientField.linear_drift(2.0, (0.5,), sigma=1.0), 1.7, 4.8),
])
def test_grid_convergence_rates(fld, lo, hi):
    bd = _bd(3.0, 1.0)
    ratio = _reference_error(1 / 16, fld, bd) / _reference_error(1 / 32, fld, bd)
    assert lo <= ratio <= hi


# --- ladder ----------------------------------------------------------------------------


def test_ladder_bounded_data_is_flat():
    last, rec = pde.ladder_minimal(_problem(bd=_bd(2.0, 1.0)), [2, 4, 8], keep_fields=True)
    for f in rec.fields[1:]:
        np.testing.assert_array_equal(f.values, rec.fields[0].values)
    assert rec.increments == [0.0, 0.0]


def test_ladder_rejects_unordered_levels():
    with pytest.raises(ValueError):
        pde.ladder_minimal(_problem(), [4, 2])


# the grid resolves truncation levels up to about C h^(-2/q); beyond that the
# first nodes carry a purely discrete layer, so ladders stop there
def _resolved_levels(h, q, C):
    top = int(math.floor(math.log2(C * h ** (-2 / q))))
    return [2.0**k for k in range(1, top + 1)]


def test_ladder_blowup_increases_and_settles_away_from_boundary():
    h = 1 / 1024
    prob = _problem(h=h, gen=Q2, bd=_bd(None, 1.0))
    levels = _resolved_levels(h, 2, math.sqrt(6))
    last, rec = pde.ladder_minimal(prob, levels, delta=0.25, tol=5e-3, keep_fields=True)
    vals = np.array([f.values for f in rec.fields])
    assert np.all(np.diff(vals, axis=0) >= -1e-9)
    assert np.all(np.diff(rec.increments) < 0)
    assert rec.converged


@pytest.mark.parametrize("q", [1.0, 2.0])
def test_keller_osserman_bound_on_ladder(q):
    h = 1 / 256
    C = closedform.keller_osserman_constant(q, 1)
    prob = _problem(h=h, gen=closedform.power(q), bd=_bd(None, None))
    last, rec = pde.ladder_minimal(prob, _resolved_levels(h, q, C), keep_fields=True)
    rho = UNIT.distance_to_boundary(last.grid.points)
    inner = last.grid.interior
    for f in rec.fields:
        assert np.all(f.values[inner] <= C / rho[inner] ** (2 / q))


def test_large_solution_oracle():
    # exact large solution of u'' / 2 = u^2 on (0, 1): u(1/2) = 3 (B(1/6, 1/2) / 3)^2
    exact = 3 * (special.beta(1 / 6, 0.5) / 3) ** 2
    levels = [2.0**k for k in range(1, 25)]
    errs = []
    for h in (1 / 256, 1 / 2048):
        last, _ = pde.ladder_minimal(_problem(h=h, bd=_bd(None, None)), levels)
        errs.append(abs(last.at((0.5,)) - exact) / exact)
    assert errs[1] < errs[0]
    assert errs[1] <= 0.01


# --- comparison ---------------------------------------------------------------------


def test_comparison_shifted_data():
    prob = _problem(h=1 / 64, n=1e6)
    g1 = _bd(1.0, 3.0)
    g2 = _bd(2.0, 4.0)
    assert pde.comparison_check(prob, g1, g2).verdict
    same = pde.comparison_check(prob, g1, g1)
    assert same.verdict and same.measured["max_difference"] == 0.0
    assert not pde.comparison_check(prob, g2, g1).verdict


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 5), st.floats(0, 5))
def test_discrete_comparison_property(a, b, da, db):
    prob = _problem(h=1 / 32, n=1e6, gen=Q2)
    lo = pde.solve_truncated(prob.with_boundary(_bd(a, b)))
    hi = pde.solve_truncated(prob.with_boundary(_bd(a + da, b + db)))
    assert np.all(lo.values <= hi.values + 1e-9)


# --- boundary layer ----------------------------------------------------------------


@pytest.fixture(scope="module")
def q2_layer():
    h = 1 / 1024
    prob = _problem(h=h, gen=Q2, bd=_bd(None, 1.0))
    last, _ = pde.ladder_minimal(prob, _resolved_levels(h, 2, math.sqrt(6)))
    return last


def test_profile_matches_halfline_coefficient(q2_layer):
    h = 1 / 1024
    rho, prof = pde.boundary_layer_profile(q2_layer, (0.0,), (1.0,), 2.0, rho_max=0.05)
    band = rho >= 16 * h
    A = closedform.halfline_blowup_coefficient(2, 1)
    assert np.all(np.abs(prof[band] / A - 1) <= 0.1)


def test_profile_bounds(q2_layer):
    rho, prof = pde.boundary_layer_profile(q2_layer, (0.0,), (1.0,), 2.0)
    C = closedform.keller_osserman_constant(2, 1)
    assert np.all(prof <= C)
    band = (rho >= 2 / 1024) & (rho <= 0.1)
    assert prof[band].min() > 0.5


def test_profile_input_checks(q2_layer):
    with pytest.raises(ValueError):
        pde.boundary_layer_profile(q2_layer, (0.5,), (1.0,), 2.0)
    with pytest.raises(ValueError):
        pde.boundary_layer_profile(q2_layer, (0.0,), (0.0,), 2.0)


# --- outputs ---------------------------------------------------------------------------


def test_richardson_on_geometric_sequence():
    vals = [2 - 0.5**k for k in range(6)]
    assert pde.richardson_level(vals, None) == pytest.approx(2.0)
    assert pde.richardson_level([1.0, 2.0], None) == 2.0


def test_solution_outputs(tmp_path):
    sol = pde.solve_truncated(_problem(h=0.25))
    assert sol.at((0.5,)) == pytest.approx(sol.values[2])
    assert sol.interpolate((0.375,)) == pytest.approx(0.5 * (sol.values[1] + sol.values[2]))
    with pytest.raises(ValueError):
        sol.at((0.3,))
    out = tmp_path / "field.csv"
    sol.to_csv(out)
    assert out.read_text().splitlines()[0] == "x0,u"
    assert "plot" in pde.gnuplot_script("field.csv", 1)
    assert "splot" in pde.gnuplot_script("field.csv", 2)
