import numpy as np
import pytest

from conspar.errors import (
    ArgumentError,
    AssemblyError,
    CouplingError,
    InputError,
    NoSteadyStateError,
)
from conspar.fields import (
    constant_field,
    field_from_callable,
    field_from_expression,
)
from conspar.sturm import (
    Grid,
    SLProblem,
    apply_operator,
    assemble,
    coupling_from_kernel,
    eigensolve,
    evolve,
    make_coupling,
    neumann_coupling,
    positivity_check,
    stencil_boundary_residuals,
    steady_state,
    weighted_inner,
)

# frozen from an independent fine-grid collocation eigensolve (one-sided
# stencil rows, generalized nonsymmetric solve, Richardson over n = 801/1601)
HEAT_COUPLED_LAMBDA3 = 39.47841709
HEAT_COUPLED_LAMBDA4 = 80.76278762


class TestGrid:
    def test_basic(self):
        g = Grid(0.0, 1.0, 401)
        assert g.h == pytest.approx(1 / 400)
        assert g.nodes[0] == 0.0 and g.nodes[-1] == 1.0

    def test_rejects_bad(self):
        with pytest.raises(InputError):
            Grid(0.0, 1.0, 2)
        with pytest.raises(InputError):
            Grid(1.0, 0.0, 11)


class TestAssemble:
    def test_constants_in_kernel(self, grid, one, zero, heat_coupling):
        op = assemble(SLProblem(p=one, q=zero, weight=one, coupling=heat_coupling), grid)
        out = apply_operator(op, np.ones(grid.n))
        # zero up to roundoff at the h^-2 operator scale
        assert np.max(np.abs(out[1:-1])) <= 1e-9

    def test_stencil_exact_on_quadratics(self, grid, one, zero, heat_coupling):
        op = assemble(SLProblem(p=one, q=zero, weight=one, coupling=heat_coupling), grid)
        out = apply_operator(op, grid.nodes**2)
        assert np.max(np.abs(out[1:-1] - 2.0)) <= 1e-8

    def test_variable_p_against_symbolic_oracle(self, grid, zero, heat_coupling):
        # (p v')' for p = 1 + x, v = x^2, via sympy
        sympy = pytest.importorskip("sympy")
        x = sympy.Symbol("x")
        expr = sympy.diff((1 + x) * sympy.diff(x**2, x), x)
        exact = sympy.lambdify(x, expr)(grid.nodes[1:-1])
        p = field_from_callable(lambda t: 1.0 + np.asarray(t), "1+x")
        op = assemble(SLProblem(p=p, q=zero, weight=constant_field(1.0), coupling=heat_coupling), grid)
        out = apply_operator(op, grid.nodes**2)
        assert np.max(np.abs(out[1:-1] - exact)) <= 10 * grid.h**2

    def test_rejects_nonpositive_p_or_weight(self, grid, one, zero, heat_coupling):
        bad = field_from_expression("x-1/2")
        with pytest.raises(AssemblyError):
            assemble(SLProblem(p=bad, q=zero, weight=one, coupling=heat_coupling), grid)
        with pytest.raises(AssemblyError):
            assemble(SLProblem(p=one, q=zero, weight=bad, coupling=heat_coupling), grid)


class TestCouplingFromKernel:
    def test_heat_rows_explicit(self, heat_coupling):
        rows = heat_coupling.rows
        # first law: v'(1) - v'(0) = 0
        assert np.allclose(rows[0], [0.0, 0.0, -1.0, 1.0])
        # second law: v(0) - v(1) + v'(1) = 0
        assert np.allclose(rows[1], [1.0, -1.0, 0.0, 1.0])
        assert heat_coupling.kind == "coupled_nonlocal"

    def test_neutral_transformed_rows(self, grid, one, zero):
        # with unit drift weight and fixation moment x, the rows reduce to
        # p(1) v'(1) = v'(0) and p(1)[v'(1) - phi'(1) v(1)] = -phi'(0) v(0)
        from conspar.fields import exponential_weight, fixation_probability

        psi = zero
        p = exponential_weight(psi)
        phi = fixation_probability(psi)
        coup = coupling_from_kernel(constant_field(1.0), phi, p, grid)
        assert np.allclose(coup.rows[0], [0.0, 0.0, -1.0, 1.0], atol=1e-9)
        assert np.allclose(coup.rows[1], [1.0, -1.0, 0.0, 1.0], atol=1e-9)

    def test_proportional_kernels_rejected(self, grid, one):
        with pytest.raises(CouplingError):
            coupling_from_kernel(one, constant_field(1.0), one, grid)


class TestEigensolve:
    def test_neumann_spectrum(self, neumann_eig):
        lam = neumann_eig.eigenvalues
        expected = np.array([((m - 1) * np.pi) ** 2 for m in range(1, 7)])
        assert abs(lam[0]) <= 1e-8
        assert np.max(np.abs(lam[1:] - expected[1:]) / expected[1:]) <= 2e-3
        assert neumann_eig.zero_multiplicity == 1

    def test_heat_coupled_double_zero(self, heat_eig):
        lam = heat_eig.eigenvalues
        assert heat_eig.zero_multiplicity == 2
        assert np.max(np.abs(lam[:2])) <= 1e-8 * lam[2]
        assert lam[2] > 0

    def test_lambda3_against_fine_grid_oracle(self, heat_eig):
        assert abs(heat_eig.eigenvalues[2] - HEAT_COUPLED_LAMBDA3) <= 1e-3 * HEAT_COUPLED_LAMBDA3
        assert abs(heat_eig.eigenvalues[3] - HEAT_COUPLED_LAMBDA4) <= 1e-3 * HEAT_COUPLED_LAMBDA4

    def test_orthonormality(self, heat_eig):
        k = 8
        V = heat_eig.vectors[:, :k]
        gram = V.T @ (heat_eig.mass[:, None] * V)
        assert np.max(np.abs(gram - np.eye(k))) <= 1e-8

    def test_boundary_rows_satisfied(self, heat_eig):
        assert np.max(heat_eig.bc_residuals) <= 1e-6

    def test_stencil_boundary_residuals_converge(self, one, zero, x_field):
        # one-sided-stencil row residuals are an O(h^2) consistency check
        res = []
        for n in (101, 201, 401):
            g = Grid(0.0, 1.0, n)
            coup = coupling_from_kernel(one, x_field, one, g)
            eig = eigensolve(assemble(SLProblem(p=one, q=zero, weight=one, coupling=coup), g), k=5)
            res.append(np.max(stencil_boundary_residuals(eig)[2:5]))
        assert res[0] / res[1] > 3.0
        assert res[1] / res[2] > 3.0

    def test_weighted_symmetry(self, grid, zero):
        # <Lu, v> = <u, Lv> in the weighted inner product for functions
        # satisfying the coupling rows (holds here for all grid functions)
        w = field_from_expression("1+x/2")
        p = field_from_expression("1+x^2")
        op = assemble(SLProblem(p=p, q=zero, weight=w, coupling=neumann_coupling()), grid)
        rng = np.random.default_rng(1)
        S = op.stiffness
        scale = np.max(np.abs(S))
        defect = np.max(np.abs(S - S.T)) / scale
        assert defect <= 1e-10
        u, v = rng.random(grid.n), rng.random(grid.n)
        lhs = u @ (S @ v)
        rhs = v @ (S @ u)
        assert abs(lhs - rhs) <= 1e-10 * scale * np.linalg.norm(u) * np.linalg.norm(v)

    def test_spectral_convergence_richardson_ratio(self, one, zero, x_field):
        lams = {}
        for n in (101, 201, 401, 801):
            g = Grid(0.0, 1.0, n)
            coup = coupling_from_kernel(one, x_field, one, g)
            op = assemble(SLProblem(p=one, q=zero, weight=one, coupling=coup), g)
            lams[n] = eigensolve(op, k=5).eigenvalues
        for j in (2, 3, 4):
            r = (lams[101][j] - lams[201][j]) / (lams[201][j] - lams[401][j])
            assert 3.5 <= r <= 4.5
            r = (lams[201][j] - lams[401][j]) / (lams[401][j] - lams[801][j])
            assert 3.5 <= r <= 4.5

    def test_bordered_fallback_dirichlet(self, one, zero):
        g = Grid(0.0, 1.0, 201)
        coup = make_coupling([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
        eig = eigensolve(assemble(SLProblem(p=one, q=zero, weight=one, coupling=coup), g), k=4)
        expected = np.array([(k * np.pi) ** 2 for k in (1, 2, 3, 4)])
        assert np.max(np.abs(eig.eigenvalues - expected) / expected) <= 2e-3
        assert eig.zero_multiplicity == 0

    def test_non_selfadjoint_rows_rejected(self, grid, one, zero):
        # v'(0) = v(1), v'(1) = 0 is not a symmetric closure
        coup = make_coupling([[0.0, 1.0, -1.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
        with pytest.raises(AssemblyError):
            eigensolve(assemble(SLProblem(p=one, q=zero, weight=one, coupling=coup), grid))

    def test_k_validation(self, heat_eig, grid, heat_problem):
        op = assemble(heat_problem.sl, grid)
        with pytest.raises(ArgumentError):
            eigensolve(op, k=0)
        with pytest.raises(ArgumentError):
            eigensolve(op, k=grid.n + 1)

    def test_general_interval_neumann(self, zero):
        g = Grid(0.0, 2.0, 201)
        one = constant_field(1.0)
        eig = eigensolve(assemble(SLProblem(p=one, q=zero, weight=one, coupling=neumann_coupling()), g), k=3)
        expected = (np.pi / 2) ** 2
        assert abs(eig.eigenvalues[1] - expected) / expected <= 1e-3


class TestEvolve:
    def test_kernel_mode_stationary(self, heat_eig, grid):
        w1 = heat_eig.vectors[:, 0]
        traj = evolve(heat_eig, w1, [0.0, 1.0, 10.0])
        assert np.max(np.abs(traj.values - w1[None, :])) <= 1e-8

    def test_single_mode_decay(self, heat_eig):
        w5 = heat_eig.vectors[:, 4]
        lam5 = heat_eig.eigenvalues[4]
        traj = evolve(heat_eig, w5, [0.02, 0.05])
        for i, t in enumerate((0.02, 0.05)):
            assert np.max(np.abs(traj.values[i] - np.exp(-lam5 * t) * w5)) <= 1e-12

    def test_semigroup_property(self, heat_eig, grid):
        rng = np.random.default_rng(2)
        v0 = rng.random(grid.n)
        s, t = 0.4, 0.9
        vs = evolve(heat_eig, v0, [s]).values[0]
        via = evolve(heat_eig, vs, [t]).values[0]
        direct = evolve(heat_eig, v0, [s + t]).values[0]
        assert np.max(np.abs(via - direct)) <= 1e-10

    def test_truncation_estimate_reported(self, heat_eig, grid):
        traj = evolve(heat_eig, np.ones(grid.n), [0.1, 1.0])
        assert traj.truncation_error is not None
        assert traj.truncation_error.shape == (2,)

    def test_empty_times_rejected(self, heat_eig, grid):
        with pytest.raises(ArgumentError):
            evolve(heat_eig, np.ones(grid.n), [])


class TestSteadyState:
    def test_orthogonal_mode_vanishes(self, heat_eig):
        w3 = heat_eig.vectors[:, 2]
        assert np.max(np.abs(steady_state(heat_eig, w3))) <= 1e-10

    def test_projection_coefficients(self, heat_eig):
        v0 = 2.0 * heat_eig.vectors[:, 0] + heat_eig.vectors[:, 2]
        assert np.max(np.abs(steady_state(heat_eig, v0) - 2.0 * heat_eig.vectors[:, 0])) <= 1e-10

    def test_long_time_limit(self, heat_eig, grid):
        rng = np.random.default_rng(4)
        v0 = rng.random(grid.n)
        t_inf = 100.0 / heat_eig.eigenvalues[2]
        late = evolve(heat_eig, v0, [t_inf]).values[0]
        assert np.max(np.abs(steady_state(heat_eig, v0) - late)) <= 1e-8

    def test_no_kernel_error(self, one, zero):
        g = Grid(0.0, 1.0, 201)
        coup = make_coupling([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
        eig = eigensolve(assemble(SLProblem(p=one, q=zero, weight=one, coupling=coup), g), k=3)
        with pytest.raises(NoSteadyStateError):
            steady_state(eig, np.ones(g.n))


class TestPositivityCheck:
    def test_positive_constant(self, heat_eig, grid):
        traj = evolve(heat_eig, np.ones(grid.n), [0.0, 0.5, 2.0])
        rep = positivity_check(traj, 1e-10)
        assert rep.passed and rep.min_value > 0

    def test_nonnegative_with_isolated_zeros(self, heat_eig, grid):
        v0 = np.sin(2 * np.pi * grid.nodes) ** 2  # zeros at 0, 1/2, 1 only
        traj = evolve(heat_eig, v0, [0.0, 0.001, 0.01, 0.1, 1.0])
        rep = positivity_check(traj, 1e-10)
        assert rep.min_value >= -1e-10

    def test_interval_zero_near_endpoint_can_dip(self, heat_eig, grid):
        # Data vanishing on an interval next to x = 1 genuinely dips
        # negative there: the non-local rows drain that endpoint based on
        # values at the other one. Grid-converged (two independent
        # discretizations agree); the check reports it as a diagnostic.
        v0 = np.maximum(np.sin(4 * np.pi * grid.nodes), 0.0)
        traj = evolve(heat_eig, v0, [0.005])
        rep = positivity_check(traj, 1e-10)
        assert not rep.passed
        assert rep.x == pytest.approx(1.0)
        assert -0.05 < rep.min_value < -0.04

    def test_negative_lobe_flagged(self, heat_eig, grid):
        v0 = np.sin(2 * np.pi * grid.nodes)  # genuinely signed data
        traj = evolve(heat_eig, v0, [0.001])
        rep = positivity_check(traj, 1e-10)
        assert not rep.passed
        assert rep.min_value < -0.5


class TestWeightedInner:
    def test_matches_trapezoid(self, grid):
        u = grid.nodes
        val = weighted_inner(u, u, np.ones(grid.n), grid)
        assert abs(val - 1.0 / 3.0) <= 1e-5
