import numpy as np
import pytest
import scipy.sparse as sp

from degdiff.discretization import AssemblyContext, assemble_jacobian
from degdiff.linsolve import (
    ConfigurationError,
    LinearOperator,
    NonsymmetricMatrixWarning,
    Preconditioner,
    SmootherConfig,
    assemble_x_part,
    build_hierarchy,
    cg_solve,
    gmres_solve,
    mgm_solve,
    symmetric_part_preconditioner,
    thomas_solve,
    vcycle,
    vcycle_preconditioner,
)
from degdiff.problem import PowerLawDiffusion, StateVector, UniformGrid


def laplacian_system(n):
    """X = I - r L for the heat law: SPD, tridiagonal, lambda_min >= 1."""
    grid = UniformGrid(dimension=1, n_interior=n)
    ctx = AssemblyContext(
        grid=grid, law=PowerLawDiffusion(1.0), dt=grid.h,
        previous_state=StateVector(values=np.zeros(n), time=0.0),
    )
    return assemble_x_part(ctx, StateVector(values=np.zeros(n), time=0.0)), grid


def barenblatt_jacobian(n=31, m=2.0):
    from degdiff.problem import BarenblattSolution, sample_on_grid

    grid = UniformGrid(dimension=1, n_interior=n)
    law = PowerLawDiffusion(m)
    state = sample_on_grid(BarenblattSolution(m=m), grid, 1.0)
    ctx = AssemblyContext(grid=grid, law=law, dt=grid.h, previous_state=state)
    return ctx, grid, state, assemble_jacobian(ctx, state)


class TestLinearOperator:
    def test_wrap_variants_agree(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((6, 6))
        x = rng.standard_normal(6)
        dense = LinearOperator.wrap(A)
        sparse = LinearOperator.wrap(sp.csr_matrix(A))
        assert np.allclose(dense.apply(x), A @ x)
        assert np.allclose(sparse.apply(x), A @ x)
        assert LinearOperator.wrap(dense) is dense

    def test_rejects_non_square(self):
        with pytest.raises(ConfigurationError):
            LinearOperator.wrap(np.zeros((3, 4)))


class TestThomasSolve:
    def test_structured_matrix_input(self):
        X, _ = laplacian_system(17)
        rng = np.random.default_rng(1)
        b = rng.standard_normal(17)
        x = thomas_solve(X, b)
        assert np.allclose(X @ x, b, atol=1e-10)

    def test_band_triple_input(self):
        dl = np.array([0.0, 1.0, 1.0])
        d = np.array([2.0, 2.0, 2.0])
        du = np.array([1.0, 1.0, 0.0])
        x = thomas_solve((dl, d, du), np.array([1.0, 0.0, 0.0]))
        assert np.allclose(x, [0.75, -0.5, 0.25], atol=1e-14)

    def test_zero_pivot_becomes_linalg_error(self):
        with pytest.raises(np.linalg.LinAlgError):
            thomas_solve(
                (np.zeros(2), np.array([0.0, 1.0]), np.zeros(2)), np.ones(2)
            )


class TestGmres:
    def test_identity_single_iteration(self):
        b = np.array([1.0, -2.0, 3.0])
        x, rep = gmres_solve(np.eye(3), b)
        assert rep.converged and rep.iterations == 1
        assert np.allclose(x, b, atol=1e-12)

    def test_zero_rhs(self):
        x, rep = gmres_solve(np.eye(4), np.zeros(4))
        assert rep.converged and rep.iterations == 0
        assert np.array_equal(x, np.zeros(4))

    def test_matches_direct_solve(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((24, 24)) + 8.0 * np.eye(24)
        b = rng.standard_normal(24)
        x, rep = gmres_solve(A, b, tol=1e-10)
        assert rep.converged
        assert np.allclose(x, np.linalg.solve(A, b), atol=1e-7)

    def test_residual_history_monotone(self):
        ctx, grid, state, J = barenblatt_jacobian()
        b = np.sin(np.arange(31) + 1.0)
        _, rep = gmres_solve(J, b, tol=1e-9)
        hist = np.array(rep.residual_history)
        assert rep.converged
        # Arnoldi minimization makes the residual non-increasing
        assert np.all(np.diff(hist) <= 1e-13)

    def test_final_entry_matches_recomputed_residual(self):
        ctx, grid, state, J = barenblatt_jacobian()
        b = np.cos(np.arange(31) * 0.3)
        x, rep = gmres_solve(J, b, tol=1e-8)
        true_rel = np.linalg.norm(b - J @ x) / np.linalg.norm(b)
        assert rep.achieved == pytest.approx(true_rel, rel=1e-8)
        assert rep.residual_history[-1] == rep.achieved
        assert rep.achieved <= rep.tolerance * (1 + 1e-9)

    def test_exact_preconditioner_one_iteration(self):
        rng = np.random.default_rng(5)
        A = rng.standard_normal((12, 12)) + 6.0 * np.eye(12)
        Ainv = np.linalg.inv(A)
        M = Preconditioner(lambda r: Ainv @ r, descriptor="none")
        b = rng.standard_normal(12)
        x, rep = gmres_solve(A, b, M=M, tol=1e-10)
        assert rep.converged and rep.iterations <= 2
        assert np.allclose(A @ x, b, atol=1e-8)

    def test_preconditioner_scaling_invariance(self):
        # M and c M produce identical right-preconditioned iterates
        ctx, grid, state, J = barenblatt_jacobian()
        X = assemble_x_part(ctx, state)
        bands = X.tridiagonal_bands()
        from degdiff import kernels

        M1 = Preconditioner(lambda r: kernels.thomas(*bands, r))
        h = grid.h
        M2 = Preconditioner(lambda r: kernels.thomas(*bands, r) / h)
        b = np.sin(0.2 * np.arange(31))
        _, rep1 = gmres_solve(J, b, M=M1, tol=1e-9)
        _, rep2 = gmres_solve(J, b, M=M2, tol=1e-9)
        assert rep1.converged and rep2.converged
        assert rep1.iterations == rep2.iterations

    def test_restart_escape_hatch(self):
        X, _ = laplacian_system(63)
        rng = np.random.default_rng(7)
        b = rng.standard_normal(63)
        x, rep = gmres_solve(X, b, tol=1e-9, restart=5, max_iter=600)
        assert rep.converged
        assert np.allclose(X @ x, b, atol=1e-7)

    def test_max_iter_reports_nonconvergence(self):
        rng = np.random.default_rng(9)
        A = rng.standard_normal((40, 40)) + 12.0 * np.eye(40)
        b = rng.standard_normal(40)
        _, rep = gmres_solve(A, b, tol=1e-14, max_iter=3)
        assert not rep.converged
        assert not rep.breakdown
        assert rep.iterations == 3


class TestCg:
    def test_identity_single_iteration(self):
        b = np.array([2.0, 0.5, -1.0])
        x, rep = cg_solve(np.eye(3), b)
        assert rep.converged and rep.iterations == 1
        assert np.allclose(x, b, atol=1e-12)

    def test_spd_matches_direct(self):
        X, _ = laplacian_system(31)
        rng = np.random.default_rng(11)
        b = rng.standard_normal(31)
        x, rep = cg_solve(X, b, tol=1e-10)
        assert rep.converged
        assert np.allclose(X @ x, b, atol=1e-8)
        assert rep.achieved <= 1e-10 * (1 + 1e-9)

    def test_exact_preconditioner_one_iteration(self):
        X, _ = laplacian_system(15)
        Xd = X.to_dense()
        Xinv = np.linalg.inv(Xd)
        M = Preconditioner(lambda r: Xinv @ r, descriptor="symmetric-part")
        b = np.ones(15)
        x, rep = cg_solve(X, b, M=M, tol=1e-10)
        assert rep.converged and rep.iterations == 1

    def test_warns_on_nonsymmetric_input(self):
        ctx, grid, state, J = barenblatt_jacobian()
        with pytest.warns(NonsymmetricMatrixWarning):
            cg_solve(J, np.ones(31), max_iter=5)

    def test_breakdown_flagged_separately(self):
        # indefinite symmetric matrix: p^T A p = 0 on the first step
        A = np.diag([1.0, -1.0])
        x, rep = cg_solve(A, np.array([1.0, 1.0]), max_iter=10)
        assert rep.breakdown
        assert not rep.converged

    def test_max_iter_is_not_breakdown(self):
        X, _ = laplacian_system(63)
        b = np.ones(63)
        _, rep = cg_solve(X, b, tol=1e-15, max_iter=2)
        assert not rep.converged
        assert not rep.breakdown


class TestHierarchy:
    def test_level_sizes_1d(self):
        X, grid = laplacian_system(31)
        h = build_hierarchy(X, grid)
        assert [lvl.A.shape[0] for lvl in h.levels] == [31, 15, 7, 3]
        assert h.levels[-1].dense is not None

    def test_level_sizes_2d(self):
        grid = UniformGrid(dimension=2, n_interior=7)
        ctx = AssemblyContext(
            grid=grid, law=PowerLawDiffusion(1.0), dt=grid.h,
            previous_state=StateVector(values=np.zeros(49), time=0.0),
        )
        X = assemble_x_part(ctx, StateVector(values=np.zeros(49), time=0.0))
        h = build_hierarchy(X, grid)
        assert [lvl.A.shape[0] for lvl in h.levels] == [49, 9, 1]

    def test_rejects_uncoarsenable_size(self):
        grid = UniformGrid(dimension=1, n_interior=10)
        A = sp.eye(10, format="csr")
        with pytest.raises(ConfigurationError):
            build_hierarchy(A, grid)

    def test_galerkin_identity_entrywise(self):
        X, grid = laplacian_system(15)
        h = build_hierarchy(X, grid)
        for fine, coarse in zip(h.levels, h.levels[1:]):
            P = fine.P
            expect = (P.T @ fine.A @ P).toarray()
            assert np.allclose(coarse.A.toarray(), expect, atol=1e-14)

    def test_prolongation_is_linear_interpolation(self):
        X, grid = laplacian_system(7)
        P = build_hierarchy(X, grid).levels[0].P.toarray()
        # coarse point j lands on fine point 2j+1 with weight 1,
        # neighbours get 1/2
        expect = np.array([
            [0.5, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.5, 0.5, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.5, 0.5],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, 0.5],
        ])
        assert np.array_equal(P, expect)

    def test_smoother_validation(self):
        with pytest.raises(ConfigurationError):
            SmootherConfig(kind="sor")
        with pytest.raises(ConfigurationError):
            SmootherConfig(pre_steps=-1)


class TestVcycle:
    def test_linearity_probe(self):
        X, grid = laplacian_system(31)
        h = build_hierarchy(X, grid)
        rng = np.random.default_rng(13)
        b1 = rng.standard_normal(31)
        b2 = rng.standard_normal(31)
        lhs = vcycle(h, 2.0 * b1 - 3.0 * b2)
        rhs = 2.0 * vcycle(h, b1) - 3.0 * vcycle(h, b2)
        assert np.allclose(lhs, rhs, atol=1e-11)

    def test_damped_jacobi_smoothing_factor(self):
        # highest-frequency mode is damped by about 1/3 per sweep
        n = 63
        X, grid = laplacian_system(n)
        cfg = SmootherConfig(kind="damped-jacobi", omega=2.0 / 3.0)
        A = X.to_csr()
        k = np.arange(1, n + 1)
        mode = np.sin(n * k * np.pi / (n + 1))
        # iterate the plain smoother on A x = 0 from the oscillatory mode
        diag = A.diagonal()
        x = mode.copy()
        x = x + cfg.omega * (0.0 - A @ x) / diag
        # the Laplacian part dominates; admit slack for the identity shift
        assert np.linalg.norm(x) / np.linalg.norm(mode) < 0.34

    def test_solves_diagonal_system_with_gs_in_one_sweep(self):
        grid = UniformGrid(dimension=1, n_interior=15)
        A = sp.diags(np.full(15, 2.5)).tocsr()
        h = build_hierarchy(A, grid, SmootherConfig(kind="gauss-seidel"))
        b = np.arange(15, dtype=float)
        x, rep = mgm_solve(A, b, tol=1e-7, hierarchy=h)
        assert rep.converged
        assert rep.iterations <= 2

    def test_mgm_on_spd_system(self):
        X, grid = laplacian_system(63)
        x, rep = mgm_solve(X, np.ones(63), tol=1e-7, grid=grid)
        assert rep.converged
        assert rep.iterations < 40
        assert np.linalg.norm(X @ x - 1.0) / np.sqrt(63) < 1e-6

    def test_mgm_2d_red_black(self):
        grid = UniformGrid(dimension=2, n_interior=15)
        n = grid.n_unknowns
        ctx = AssemblyContext(
            grid=grid, law=PowerLawDiffusion(1.0), dt=grid.h,
            previous_state=StateVector(values=np.zeros(n), time=0.0),
        )
        X = assemble_x_part(ctx, StateVector(values=np.zeros(n), time=0.0))
        x, rep = mgm_solve(X, np.ones(n), tol=1e-7, grid=grid)
        assert rep.converged
        assert rep.iterations < 40

    def test_vcycle_preconditioner_is_linear_and_fixed(self):
        X, grid = laplacian_system(15)
        h = build_hierarchy(X, grid)
        M = vcycle_preconditioner(h)
        assert M.descriptor == "vcycle"
        rng = np.random.default_rng(17)
        r = rng.standard_normal(15)
        assert np.allclose(M.solve(3.0 * r), 3.0 * M.solve(r), atol=1e-11)
        # deterministic: same input, same output
        assert np.array_equal(M.solve(r), M.solve(r))


class TestSymmetricPartPreconditioner:
    def test_inverts_x_exactly_1d(self):
        ctx, grid, state, J = barenblatt_jacobian()
        X = assemble_x_part(ctx, state)
        M = symmetric_part_preconditioner(ctx, state)
        assert M.descriptor == "symmetric-part"
        rng = np.random.default_rng(19)
        v = rng.standard_normal(31)
        assert np.allclose(M.solve(X @ v), v, atol=1e-10)

    def test_accelerates_gmres_on_jacobian(self):
        ctx, grid, state, J = barenblatt_jacobian(n=63)
        M = symmetric_part_preconditioner(ctx, state)
        b = np.ones(63)
        _, plain = gmres_solve(J, b, tol=1e-9)
        _, prec = gmres_solve(J, b, M=M, tol=1e-9)
        assert prec.converged
        assert prec.iterations < plain.iterations

    def test_2d_inner_multigrid_inverts_x(self):
        grid = UniformGrid(dimension=2, n_interior=15)
        n = grid.n_unknowns
        rng = np.random.default_rng(23)
        vals = rng.uniform(0.0, 2.0, n)
        state = StateVector(values=vals, time=0.0)
        ctx = AssemblyContext(
            grid=grid, law=PowerLawDiffusion(4.0), dt=grid.h,
            previous_state=state,
        )
        X = assemble_x_part(ctx, state)
        M = symmetric_part_preconditioner(ctx, state)
        v = rng.standard_normal(n)
        assert np.allclose(M.solve(X @ v), v, atol=1e-7)
