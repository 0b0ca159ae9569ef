import itertools

import numpy as np
import pytest
from scipy import optimize

from decoreg.linops import (
    LinearOperator,
    Subspace,
    identity,
    kernel_basis,
    projector,
)
from decoreg.norms import decompose_at, dual_norm_value, l1, norm_value
from decoreg.solver import (
    Problem,
    SolverOptions,
    gamma_apply,
    ic_context,
    ic_value,
    minimize_ic_full,
    minimize_ic_u,
    solve_penalized,
    xi_map,
)

rng = np.random.default_rng(2024)


def random_orthonormal(n):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return LinearOperator(q)


def l1_problem(m, n, lam, seed=0, y=None):
    r = np.random.default_rng(seed)
    phi = LinearOperator(r.standard_normal((m, n)) / np.sqrt(m))
    if y is None:
        y = r.standard_normal(m)
    return Problem(phi=phi, l_adjoint=identity(n), norm=l1(n), y=y, lam=lam)


class TestProblemValidation:
    def test_kernel_intersection_rejected(self):
        phi = LinearOperator([[1.0, 0.0], [0.0, 0.0]])
        l_adj = LinearOperator([[1.0, 0.0]])
        with pytest.raises(ValueError):
            Problem(phi=phi, l_adjoint=l_adj, norm=l1(1), y=[1.0, 0.0], lam=0.1)

    def test_lambda_positive(self):
        with pytest.raises(ValueError):
            l1_problem(3, 3, lam=0.0)

    def test_dimension_checks(self):
        with pytest.raises(ValueError):
            Problem(
                phi=identity(3),
                l_adjoint=identity(2),
                norm=l1(2),
                y=[0.0, 0.0, 0.0],
                lam=1.0,
            )


class TestSolvePenalized:
    def test_soft_threshold_instance(self):
        p = Problem(
            phi=identity(2), l_adjoint=identity(2), norm=l1(2), y=[2.0, 0.5], lam=1.0
        )
        report = solve_penalized(p)
        assert report.converged
        assert np.allclose(report.x_star, [1.0, 0.0], atol=1e-8)

    def test_zero_data(self):
        p = l1_problem(4, 4, lam=0.5, y=np.zeros(4))
        report = solve_penalized(p)
        assert report.converged
        assert np.allclose(report.x_star, 0.0, atol=1e-10)

    def test_report_residual_contract(self):
        p = l1_problem(4, 6, lam=0.1, seed=3)
        opts = SolverOptions(tol=1e-9)
        report = solve_penalized(p, opts)
        assert report.converged
        threshold = opts.tol * (1 + np.linalg.norm(p.phi.entries.T @ p.y))
        assert report.optimality_residual <= threshold

    def test_matches_oracle_objective(self):
        from decoreg.experiments import oracle_solve

        p = l1_problem(4, 6, lam=0.1, seed=11)
        report = solve_penalized(p, SolverOptions(tol=1e-10))
        oracle = oracle_solve(p)
        assert report.objective == pytest.approx(oracle.objective, rel=1e-6)

    def test_shared_image_across_restarts(self):
        p = l1_problem(4, 6, lam=0.2, seed=5)
        r1 = solve_penalized(p, SolverOptions(tol=1e-10))
        r2 = solve_penalized(
            p,
            SolverOptions(
                tol=1e-10, init=np.random.default_rng(9).standard_normal(6)
            ),
        )
        img_gap = np.linalg.norm(p.phi.apply(r1.x_star) - p.phi.apply(r2.x_star))
        assert img_gap <= 1e-6 * np.linalg.norm(p.y)

    def test_non_convergence_reported_not_raised(self):
        p = l1_problem(4, 6, lam=0.1, seed=3)
        report = solve_penalized(p, SolverOptions(tol=1e-14, max_iter=60))
        assert not report.converged
        assert report.iterations == 60


class TestXiMap:
    def test_unconstrained_normal_equations(self):
        # trivial analysis restriction: full space, invertible measurements
        phi = LinearOperator(rng.standard_normal((4, 4)) + 4 * np.eye(4))
        l_s_adj = LinearOperator(np.zeros((4, 4)))
        h = rng.standard_normal(4)
        expected = np.linalg.solve(phi.entries.T @ phi.entries, h)
        assert np.allclose(xi_map(phi, l_s_adj, h), expected, atol=1e-9)

    def test_orthonormal_design_projects(self):
        phi = random_orthonormal(5)
        model_T = Subspace.from_coordinates(5, [0, 2])
        s = model_T.complement()
        l_s_adj = LinearOperator(projector(s).entries)  # L = Id
        h = rng.standard_normal(5)
        assert np.allclose(xi_map(phi, l_s_adj, h), model_T.project(h), atol=1e-9)

    def test_defining_optimality(self):
        r = np.random.default_rng(8)
        phi = LinearOperator(r.standard_normal((6, 5)))
        l_adj = LinearOperator(r.standard_normal((4, 5)))
        s = Subspace.from_coordinates(4, [1, 3])
        l_s_adj = LinearOperator(projector(s).entries @ l_adj.entries)
        ker = kernel_basis(l_s_adj)
        for _ in range(20):
            h = r.standard_normal(5)
            out = xi_map(phi, l_s_adj, h)
            resid = phi.entries.T @ (phi.entries @ out) - h
            assert np.linalg.norm(ker.basis.T @ resid) <= 1e-9 * (
                1 + np.linalg.norm(h)
            )

    def test_injectivity_failure_raises(self):
        phi = LinearOperator(np.diag([1.0, 0.0]))
        l_s_adj = LinearOperator(np.zeros((2, 2)))  # kernel is everything
        with pytest.raises(ValueError):
            xi_map(phi, l_s_adj, [1.0, 1.0])


class TestGammaApply:
    def test_orthogonal_design_vanishes(self):
        phi = random_orthonormal(4)
        t = Subspace.from_coordinates(4, [1])
        s = t.complement()
        v = rng.standard_normal(4)
        out = gamma_apply(phi, identity(4), t, s, v)
        assert np.allclose(out, 0.0, atol=1e-9)

    def test_zero_input(self):
        r = np.random.default_rng(4)
        phi = LinearOperator(r.standard_normal((5, 4)))
        l_op = LinearOperator(r.standard_normal((4, 6)))
        t = Subspace.from_coordinates(6, [0, 1])
        out = gamma_apply(phi, l_op, t, t.complement(), np.zeros(6))
        assert np.allclose(out, 0.0)

    def test_transfer_identity(self):
        # L_S Gamma v = (Phi^T Phi Xi - Id) L_T v
        r = np.random.default_rng(10)
        phi = LinearOperator(r.standard_normal((5, 4)))
        l_op = LinearOperator(r.standard_normal((4, 6)))
        t = Subspace.from_coordinates(6, [0, 3])
        s = t.complement()
        ls = l_op.entries @ projector(s).entries
        lt = l_op.entries @ projector(t).entries
        xi = None
        for _ in range(20):
            v = r.standard_normal(6)
            gv = gamma_apply(phi, l_op, t, s, v)
            w = lt @ v
            xi_w = xi_map(phi, LinearOperator(ls.T), w)
            rhs = phi.entries.T @ (phi.entries @ xi_w) - w
            assert np.linalg.norm(ls @ gv - rhs) <= 1e-9 * (1 + np.linalg.norm(rhs))

    def test_mismatched_complement_rejected(self):
        r = np.random.default_rng(2)
        phi = LinearOperator(r.standard_normal((5, 4)))
        l_op = LinearOperator(r.standard_normal((4, 6)))
        t = Subspace.from_coordinates(6, [0, 3])
        not_s = Subspace.from_coordinates(6, [1, 2])  # misses two coordinates
        with pytest.raises(ValueError):
            gamma_apply(phi, l_op, t, not_s, np.zeros(6))

    def test_range_inside_inactive_image(self):
        r = np.random.default_rng(12)
        phi = LinearOperator(r.standard_normal((5, 4)))
        l_op = LinearOperator(r.standard_normal((4, 6)))
        t = Subspace.from_coordinates(6, [2])
        s = t.complement()
        v = r.standard_normal(6)
        gv = gamma_apply(phi, l_op, t, s, v)
        # Im(Gamma) is inside Im(L_S^*) which is inside S
        assert np.linalg.norm(projector(t).entries @ gv) <= 1e-9 * (
            1 + np.linalg.norm(gv)
        )


def tiny_ic_instance(seed=6):
    """N=4, P=4, M=3, l1: the feasible reduction is two-dimensional."""
    r = np.random.default_rng(seed)
    phi = LinearOperator(r.standard_normal((3, 4)))
    l_op = identity(4)
    norm = l1(4)
    u0 = np.array([1.5, 0.0, 0.0, 0.0])
    model = decompose_at(norm, u0)
    return phi, l_op, norm, model


class TestIcValue:
    def test_orthogonal_design_zero(self):
        phi = random_orthonormal(4)
        t = Subspace.from_coordinates(4, [0])
        norm = l1(4)
        val = ic_value(phi, identity(4), norm, t, [1.0, 0, 0, 0], np.zeros(4), np.zeros(4))
        assert val == pytest.approx(0.0, abs=1e-9)

    def test_zero_direction_drops_transfer_term(self):
        phi, l_op, norm, model = tiny_ic_instance()
        ctx = ic_context(phi, l_op, model.T)
        z_dir = ctx.z_space.basis[:, 0] if ctx.z_space.dim else np.zeros(3)
        val = ic_value(phi, l_op, norm, model.T, np.zeros(4), np.zeros(4), z_dir)
        expected = dual_norm_value(norm, ctx.ls_pinv_phi_adj @ z_dir)
        assert val == pytest.approx(expected, abs=1e-10)

    def test_formula_recomputation(self):
        # independent recomputation with a hand-rolled pseudoinverse
        phi, l_op, norm, model = tiny_ic_instance(seed=21)
        ctx = ic_context(phi, l_op, model.T)
        z = ctx.z_space.basis @ np.array([0.7, -0.2][: ctx.z_space.dim])
        u = np.zeros(4)
        val = ic_value(phi, l_op, norm, model.T, model.e, u, z)

        ps = projector(model.T.complement()).entries
        ls = l_op.entries @ ps
        uu, ss, vvt = np.linalg.svd(ls)
        inv = np.zeros_like(ls.T)
        for i, sv in enumerate(ss):
            if sv > 1e-10 * ss[0]:
                inv += np.outer(vvt[i], uu[:, i]) / sv
        gamma_e = gamma_apply(phi, l_op, model.T, model.T.complement(), model.e)
        direct = dual_norm_value(norm, gamma_e + ps @ u + inv @ (phi.entries.T @ z))
        assert val == pytest.approx(direct, abs=1e-9)

    def test_infeasible_u_named(self):
        phi, l_op, norm, model = tiny_ic_instance()
        bad_u = np.array([0.0, 1.0, 0.0, 0.0])  # in S, not in ker(L_S)
        with pytest.raises(ValueError, match="ker"):
            ic_value(phi, l_op, norm, model.T, model.e, bad_u, np.zeros(3))

    def test_infeasible_z_named(self):
        phi, l_op, norm, model = tiny_ic_instance()
        ctx = ic_context(phi, l_op, model.T)
        bad = None
        for _ in range(50):
            z = rng.standard_normal(3)
            resid = z - ctx.z_space.basis @ (ctx.z_space.basis.T @ z)
            if np.linalg.norm(resid) > 1e-3:
                bad = z
                break
        with pytest.raises(ValueError, match="Im"):
            ic_value(phi, l_op, norm, model.T, model.e, np.zeros(4), bad)


class TestMinimizeIc:
    def test_orthogonal_design_attains_zero(self):
        phi = random_orthonormal(4)
        t = Subspace.from_coordinates(4, [0])
        e = np.array([1.0, 0, 0, 0])
        sol = minimize_ic_full(phi, identity(4), l1(4), t, e)
        assert sol.value == pytest.approx(0.0, abs=1e-8)
        assert sol.converged
        sol_u = minimize_ic_u(phi, identity(4), l1(4), t, e)
        assert sol_u.value == pytest.approx(0.0, abs=1e-8)

    def test_singleton_feasible_set(self):
        # ker(L_S) = T and L = Id: the u-program cannot move
        phi, l_op, norm, model = tiny_ic_instance()
        sol = minimize_ic_u(phi, l_op, norm, model.T, model.e)
        base = ic_value(phi, l_op, norm, model.T, model.e, np.zeros(4), np.zeros(3))
        assert sol.value == pytest.approx(base, abs=1e-9)

    def test_chain_inequality(self):
        opts = SolverOptions(tol=1e-9)
        checked = 0
        seed = 0
        while checked < 20:
            seed += 1
            assert seed < 500, "instance generation starved"
            r = np.random.default_rng(seed)
            phi = LinearOperator(r.standard_normal((5, 5)))
            l_adj = LinearOperator(np.vstack([np.eye(5), r.standard_normal((2, 5))]))
            l_op = l_adj.T
            norm = l1(7)
            u0 = l_adj.apply(r.standard_normal(5))
            model = decompose_at(norm, np.where(np.abs(u0) > 0.5, u0, 0.0))
            if model.T.dim == 0 or model.T.dim >= 5:
                continue
            try:
                ctx = ic_context(phi, l_op, model.T)
            except ValueError:
                continue
            full = minimize_ic_full(phi, l_op, norm, model.T, model.e, opts, ctx=ctx)
            u_only = minimize_ic_u(phi, l_op, norm, model.T, model.e, opts, ctx=ctx)
            zero = ic_value(
                phi, l_op, norm, model.T, model.e, np.zeros(7), np.zeros(5), ctx=ctx
            )
            assert full.value <= u_only.value + 1e-7
            assert u_only.value <= zero + 1e-7
            checked += 1

    def test_never_beaten_by_feasible_probes(self):
        phi, l_op, norm, model = tiny_ic_instance(seed=33)
        ctx = ic_context(phi, l_op, model.T)
        sol = minimize_ic_full(phi, l_op, norm, model.T, model.e, ctx=ctx)
        r = np.random.default_rng(0)
        for _ in range(1000):
            u = ctx.ker_ls.basis @ r.standard_normal(ctx.ker_ls.dim)
            z = ctx.z_space.basis @ r.standard_normal(ctx.z_space.dim)
            probe = ic_value(phi, l_op, norm, model.T, model.e, u, z, ctx=ctx)
            assert sol.value <= probe + 1e-7

    def test_reduces_to_classical_correlation_coefficient(self):
        # with the identity analysis operator the zero-mode value must equal
        # the classical l1 coefficient max_j |phi_j' phi_T (phi_T' phi_T)^-1 s|
        for seed in range(10):
            r = np.random.default_rng(seed)
            m, n = 6, 9
            phi_mat = r.standard_normal((m, n))
            support = sorted(int(i) for i in r.choice(n, size=3, replace=False))
            signs = np.sign(r.standard_normal(3))
            u0 = np.zeros(n)
            u0[support] = signs * (1.0 + r.uniform(size=3))
            model = decompose_at(l1(n), u0)
            phi = LinearOperator(phi_mat)
            val = ic_value(
                phi, identity(n), l1(n), model.T, model.e, np.zeros(n), np.zeros(m)
            )
            phi_t = phi_mat[:, support]
            corr = phi_mat.T @ phi_t @ np.linalg.solve(phi_t.T @ phi_t, signs)
            off = [j for j in range(n) if j not in support]
            classical = np.max(np.abs(corr[off])) if off else 0.0
            assert val == pytest.approx(classical, abs=1e-10)

    def test_grid_plus_polish_oracle(self):
        # brute force over the reduced coordinates, then local refinement
        phi, l_op, norm, model = tiny_ic_instance(seed=6)
        ctx = ic_context(phi, l_op, model.T)
        assert ctx.z_space.dim == 2  # reduction is a plane
        g0 = ctx.gamma @ model.e
        cols = ctx.ls_pinv_phi_adj @ ctx.z_space.basis

        def objective(c):
            return dual_norm_value(norm, g0 + cols @ c)

        grid = np.linspace(-3.0, 3.0, 61)
        best_c, best_val = None, np.inf
        for a, b in itertools.product(grid, grid):
            val = objective(np.array([a, b]))
            if val < best_val:
                best_val, best_c = val, np.array([a, b])
        polished = optimize.minimize(objective, best_c, method="Nelder-Mead",
                                     options={"xatol": 1e-10, "fatol": 1e-12})
        oracle_val = min(best_val, float(polished.fun))

        sol = minimize_ic_full(phi, l_op, norm, model.T, model.e)
        assert sol.value == pytest.approx(oracle_val, abs=1e-4)

    def test_xi_defining_property_via_context(self):
        phi, l_op, norm, model = tiny_ic_instance(seed=14)
        ctx = ic_context(phi, l_op, model.T)
        ls_adj = (l_op.entries @ projector(model.T.complement()).entries).T
        ker = kernel_basis(LinearOperator(ls_adj))
        lt = ctx.lt
        for _ in range(20):
            v = rng.standard_normal(4)
            w = lt @ v
            resid = phi.entries.T @ (phi.entries @ (ctx.xi @ w)) - w
            assert np.linalg.norm(ker.basis.T @ resid) <= 1e-9 * (1 + np.linalg.norm(w))
