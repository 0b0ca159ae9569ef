"""First-order primal-dual solver for the penalized analysis problem

    min_x  0.5 ||y - Phi x||^2 + lambda ||L^* x||_A

and the irrepresentability machinery living on top of it: the restricted
normal-equation map Xi, the transfer operator Gamma, and the convex programs
minimizing the irrepresentability coefficient

    IC_{u,z}(T, e) = dual_norm( Gamma e + P_S u + pinv(L_S) Phi^* z )

over u in ker(L_S) and z with Phi^* z in Im(L_S).

The splitting scheme is the standard primal-dual hybrid gradient iteration on
the stacked operator K = (Phi; L^*) with tau = sigma = 0.99 / ||K|| certified
by power iteration, full relaxation, and deterministic initialization at zero.
The IC programs are solved in reduced coordinates: orthonormal bases of the
feasible subspaces turn the affine-constrained dual-norm minimization into an
unconstrained one handled by the same scheme, with a duality-gap stopping
test that certifies the reported value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linops import (
    RANK_RTOL,
    LinearOperator,
    Subspace,
    image_basis,
    kernel_basis,
    power_iteration_norm,
)
from .norms import (
    DecomposableNorm,
    dual_norm_value,
    norm_value,
    project_dual_ball,
    project_primal_ball,
)

__all__ = [
    "SolverOptions",
    "Problem",
    "SolveReport",
    "solve_penalized",
    "xi_map",
    "gamma_apply",
    "ICContext",
    "ic_context",
    "ICSolution",
    "ic_value",
    "minimize_ic_full",
    "minimize_ic_u",
]


@dataclass
class SolverOptions:
    tol: float = 1e-9
    max_iter: int = 200_000
    check_every: int = 50
    init: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class Problem:
    """One instance of the penalized problem.

    ``phi`` maps R^N to R^M, ``l_adjoint`` is the analysis operator L^* from
    R^N to R^P, and lam > 0.  Construction verifies the problem has a
    nonempty compact solution set, which holds exactly when the kernels of
    phi and L^* intersect trivially.
    """

    phi: LinearOperator
    l_adjoint: LinearOperator
    norm: DecomposableNorm
    y: np.ndarray
    lam: float

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        object.__setattr__(self, "y", y)
        n = self.phi.cols
        if self.l_adjoint.cols != n:
            raise ValueError(
                f"phi acts on R^{n} but l_adjoint acts on R^{self.l_adjoint.cols}"
            )
        if self.norm.ambient_dim != self.l_adjoint.rows:
            raise ValueError(
                f"norm lives on R^{self.norm.ambient_dim}, "
                f"l_adjoint maps into R^{self.l_adjoint.rows}"
            )
        if y.shape[0] != self.phi.rows:
            raise ValueError(f"y has length {y.shape[0]}, phi maps into R^{self.phi.rows}")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        stacked = np.vstack([self.phi.entries, self.l_adjoint.entries])
        s = np.linalg.svd(stacked, compute_uv=False)
        smax = s[0] if s.size else 0.0
        rank = int(np.sum(s > RANK_RTOL * smax)) if smax > 0 else 0
        if rank < n:
            raise ValueError(
                "ker(phi) and ker(l_adjoint) intersect nontrivially: "
                "the solution set is unbounded"
            )

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        resid = self.y - self.phi.apply(x)
        return 0.5 * float(resid @ resid) + self.lam * norm_value(
            self.norm, self.l_adjoint.apply(x)
        )


@dataclass(frozen=True, eq=False)
class SolveReport:
    x_star: np.ndarray
    objective: float
    optimality_residual: float
    iterations: int
    converged: bool
    problem: Problem


def _composite_residual(p: Problem, x: np.ndarray, alpha_dual: np.ndarray) -> float:
    """First-order residual with a certified dual candidate.

    The dual iterate is rescaled and projected onto the unit dual ball; the
    returned value adds the gradient-equation norm and the Fenchel gap
    lam * (||u|| - <alpha, u>), both of which vanish at a minimizer.
    """
    u = p.l_adjoint.apply(x)
    alpha_hat = project_dual_ball(p.norm, alpha_dual / p.lam, 1.0)
    grad = p.phi.adjoint_apply(p.phi.apply(x) - p.y) + p.lam * (
        p.l_adjoint.entries.T @ alpha_hat
    )
    gap = p.lam * max(norm_value(p.norm, u) - float(alpha_hat @ u), 0.0)
    return float(np.linalg.norm(grad)) + gap


def solve_penalized(p: Problem, opts: SolverOptions | None = None) -> SolveReport:
    """Minimize the penalized objective by primal-dual splitting.

    The report carries the iterate with the best composite first-order
    residual seen at a check point.  Non-convergence within the iteration
    budget is reported, not raised.
    """
    opts = opts or SolverOptions()
    if opts.max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if not opts.tol > 0:
        raise ValueError("tol must be positive")

    m, n = p.phi.rows, p.phi.cols
    big = np.vstack([p.phi.entries, p.l_adjoint.entries])
    knorm = power_iteration_norm(big)
    step = 0.99 / knorm if knorm > 0 else 1.0
    tau = sigma = step

    if opts.init is None:
        x = np.zeros(n)
    else:
        x = np.asarray(opts.init, dtype=float).reshape(-1).copy()
        if x.shape[0] != n:
            raise ValueError(f"init has length {x.shape[0]}, expected {n}")
    xbar = x.copy()
    dual_fit = np.zeros(m)
    dual_reg = np.zeros(p.norm.ambient_dim)

    threshold = opts.tol * (1.0 + float(np.linalg.norm(p.phi.entries.T @ p.y)))
    best_res = np.inf
    best_x = x.copy()
    iterations = 0
    converged = False

    for it in range(1, opts.max_iter + 1):
        q = big @ xbar
        dual_fit = (dual_fit + sigma * (q[:m] - p.y)) / (1.0 + sigma)
        dual_reg = project_dual_ball(p.norm, dual_reg + sigma * q[m:], p.lam)
        x_new = x - tau * (big.T @ np.concatenate([dual_fit, dual_reg]))
        xbar = 2.0 * x_new - x
        x = x_new
        iterations = it
        if it % opts.check_every == 0 or it == opts.max_iter:
            res = _composite_residual(p, x, dual_reg)
            if res < best_res:
                best_res = res
                best_x = x.copy()
            if res <= threshold:
                converged = True
                break

    return SolveReport(
        x_star=best_x,
        objective=p.objective(best_x),
        optimality_residual=float(best_res),
        iterations=iterations,
        converged=converged,
        problem=p,
    )


def _xi_matrix(phi: LinearOperator, l_s_adjoint: LinearOperator, tol: float = RANK_RTOL) -> np.ndarray:
    """Dense matrix of the map h -> argmin over ker(L_S^*) of
    0.5 ||Phi x||^2 - <h, x>, namely B (B^T Phi^T Phi B)^{-1} B^T for an
    orthonormal kernel basis B.  Raises when phi fails to be injective on
    that kernel."""
    n = phi.cols
    ker = kernel_basis(l_s_adjoint, tol)
    b = ker.basis
    if b.shape[1] == 0:
        return np.zeros((n, n))
    a = phi.entries @ b
    if a.shape[1] > a.shape[0]:
        raise ValueError(
            "restricted injectivity fails: the kernel of L_S^* is wider than "
            "the measurement space"
        )
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s[0] == 0.0 or s[-1] <= tol * s[0]:
        raise ValueError("restricted injectivity fails: Phi is singular on ker(L_S^*)")
    inner = vt.T @ np.diag(1.0 / s**2) @ vt
    return b @ inner @ b.T


def xi_map(phi: LinearOperator, l_s_adjoint: LinearOperator, h, tol: float = RANK_RTOL) -> np.ndarray:
    """Solve the quadratic program restricted to ker(L_S^*).

    Returns the minimizer of 0.5 ||Phi x||^2 - <h, x> over that kernel; the
    result satisfies P_ker(Phi^T Phi Xi h - h) = 0.
    """
    h = np.asarray(h, dtype=float).reshape(-1)
    if h.shape[0] != phi.cols:
        raise ValueError(f"h has length {h.shape[0]}, expected {phi.cols}")
    return _xi_matrix(phi, l_s_adjoint, tol) @ h


def _gamma_matrix(
    phi: LinearOperator,
    l_op: LinearOperator,
    T: Subspace,
    S: Subspace,
    tol: float = RANK_RTOL,
) -> np.ndarray:
    p_dim = l_op.cols
    if T.ambient_dim != p_dim or S.ambient_dim != p_dim:
        raise ValueError("T and S must live in the analysis space")
    if T.dim + S.dim != p_dim or (
        T.basis.size and S.basis.size and np.max(np.abs(T.basis.T @ S.basis)) > 1e-10
    ):
        raise ValueError("S must be the orthogonal complement of T")
    n = l_op.rows
    lt = l_op.entries @ T.projector_matrix()
    ls = l_op.entries @ S.projector_matrix()
    xi = _xi_matrix(phi, LinearOperator(ls.T), tol)
    ls_pinv = np.linalg.pinv(ls, rcond=tol)
    core = phi.entries.T @ (phi.entries @ xi) - np.eye(n)
    return ls_pinv @ (core @ lt)


def gamma_apply(
    phi: LinearOperator,
    l_op: LinearOperator,
    T: Subspace,
    S: Subspace,
    v,
    tol: float = RANK_RTOL,
) -> np.ndarray:
    """Apply the transfer operator pinv(L_S) (Phi^T Phi Xi - Id) L_T.

    Its range lies inside Im(L_S^*); restricted injectivity failures
    propagate from the inner quadratic solve.
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != l_op.cols:
        raise ValueError(f"v has length {v.shape[0]}, expected {l_op.cols}")
    return _gamma_matrix(phi, l_op, T, S, tol) @ v


@dataclass(frozen=True, eq=False)
class ICContext:
    """Precomputed pieces shared by the irrepresentability programs for one
    model subspace T."""

    T: Subspace
    S: Subspace
    xi: np.ndarray               # N x N restricted normal-equation map
    lt: np.ndarray               # N x P, L restricted to T
    ls_pinv: np.ndarray          # P x N, pinv of L restricted to S
    gamma: np.ndarray            # P x P transfer operator
    ker_ls: Subspace             # feasible u directions, in R^P
    z_space: Subspace            # feasible z directions, in R^M
    ls_pinv_phi_adj: np.ndarray  # P x M, pinv(L_S) Phi^*


def ic_context(
    phi: LinearOperator, l_op: LinearOperator, T: Subspace, tol: float = RANK_RTOL
) -> ICContext:
    n = l_op.rows
    S = T.complement()
    pt = T.projector_matrix()
    ps = S.projector_matrix()
    lt = l_op.entries @ pt
    ls = l_op.entries @ ps
    xi = _xi_matrix(phi, LinearOperator(ls.T), tol)
    ls_pinv = np.linalg.pinv(ls, rcond=tol)
    gamma = ls_pinv @ ((phi.entries.T @ (phi.entries @ xi) - np.eye(n)) @ lt)
    ker_ls = kernel_basis(LinearOperator(ls), tol)
    im_ls = image_basis(LinearOperator(ls), tol)
    leftover = (np.eye(n) - im_ls.projector_matrix()) @ phi.entries.T
    z_space = kernel_basis(LinearOperator(leftover), tol)
    return ICContext(
        T=T,
        S=S,
        xi=xi,
        lt=lt,
        ls_pinv=ls_pinv,
        gamma=gamma,
        ker_ls=ker_ls,
        z_space=z_space,
        ls_pinv_phi_adj=ls_pinv @ phi.entries.T,
    )


@dataclass(frozen=True, eq=False)
class ICSolution:
    """Minimizer and certified value of one irrepresentability program."""

    u: np.ndarray
    z: np.ndarray
    value: float
    gap: float
    converged: bool


def ic_value(
    phi: LinearOperator,
    l_op: LinearOperator,
    norm: DecomposableNorm,
    T: Subspace,
    e,
    u,
    z,
    feas_tol: float = 1e-9,
    ctx: ICContext | None = None,
) -> float:
    """Evaluate the irrepresentability coefficient at a feasible pair (u, z).

    Feasibility (u in ker(L_S), Phi^* z in Im(L_S)) is enforced up to
    ``feas_tol`` and violations name the failing membership.
    """
    ctx = ctx or ic_context(phi, l_op, T)
    e = np.asarray(e, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    z = np.asarray(z, dtype=float).reshape(-1)
    p_dim = l_op.cols
    if e.shape[0] != p_dim or u.shape[0] != p_dim:
        raise ValueError("e and u must live in the analysis space")
    if z.shape[0] != phi.rows:
        raise ValueError("z must live in the measurement space")

    ls = l_op.entries @ ctx.S.projector_matrix()
    if np.linalg.norm(ls @ u) > feas_tol * (1.0 + np.linalg.norm(ls) * np.linalg.norm(u)):
        raise ValueError("infeasible u: not a member of ker(L_S)")
    phz = phi.entries.T @ z
    im_resid = phz - (ls @ (np.linalg.pinv(ls, rcond=RANK_RTOL) @ phz))
    if np.linalg.norm(im_resid) > feas_tol * (1.0 + np.linalg.norm(phz)):
        raise ValueError("infeasible z: Phi^* z is not a member of Im(L_S)")

    vec = ctx.gamma @ e + ctx.S.project(u) + ctx.ls_pinv_phi_adj @ z
    return dual_norm_value(norm, vec)


def _min_dual_norm_affine(
    norm: DecomposableNorm,
    g0: np.ndarray,
    columns: np.ndarray,
    opts: SolverOptions,
) -> tuple[np.ndarray, float, float, bool]:
    """Minimize c -> dual_norm(g0 + columns @ c) by primal-dual splitting.

    The dual of this program maximizes <g0, w> over primal-unit-ball vectors
    w with columns^T w = 0, which yields a computable optimality gap: every
    reported value comes with a certificate ``gap`` bounding its distance to
    the true minimum.
    """
    k = columns.shape[1]
    base = dual_norm_value(norm, g0)
    if k == 0:
        return np.zeros(0), base, 0.0, True
    # numerically null columns come out of projector and pseudoinverse
    # compositions; they contribute nothing and wreck the step size
    col_norms = np.linalg.norm(columns, axis=0)
    keep = np.nonzero(col_norms > 1e-12 * (1.0 + float(np.linalg.norm(g0))))[0]
    if keep.size < k:
        sub_c, value, gap, converged = _min_dual_norm_affine(
            norm, g0, columns[:, keep], opts
        )
        c = np.zeros(k)
        c[keep] = sub_c
        return c, value, gap, converged
    gnorm = power_iteration_norm(columns)
    if gnorm == 0.0:
        return np.zeros(k), base, 0.0, True
    tau = sigma = 0.99 / gnorm

    # least-squares preprocessing: settles the full-cancellation case (value
    # zero) exactly and provides a warm start otherwise
    c_ls, *_ = np.linalg.lstsq(columns, -g0, rcond=None)
    val_ls = dual_norm_value(norm, g0 + columns @ c_ls)
    if val_ls <= opts.tol * (1.0 + base):
        return c_ls, val_ls, val_ls, True

    q_im = image_basis(LinearOperator(columns)).basis
    w = np.zeros_like(g0)
    best_val, best_c = base, np.zeros(k)
    if val_ls < best_val:
        best_val, best_c = val_ls, c_ls.copy()
    c = c_ls.copy() if val_ls < base else np.zeros(k)
    cbar = c.copy()
    gap = np.inf
    converged = False

    for it in range(1, opts.max_iter + 1):
        w = project_primal_ball(norm, w + sigma * (columns @ cbar + g0), 1.0)
        c_new = c - tau * (columns.T @ w)
        cbar = 2.0 * c_new - c
        c = c_new
        if it % opts.check_every == 0 or it == opts.max_iter:
            val = dual_norm_value(norm, g0 + columns @ c)
            if val < best_val:
                best_val = val
                best_c = c.copy()
            w_feas = w - q_im @ (q_im.T @ w)
            pn = norm_value(norm, w_feas)
            if pn > 1.0:
                w_feas = w_feas / pn
            gap = best_val - float(g0 @ w_feas)
            if gap <= opts.tol * (1.0 + abs(best_val)):
                converged = True
                break

    return best_c, best_val, max(float(gap), 0.0), converged


def minimize_ic_full(
    phi: LinearOperator,
    l_op: LinearOperator,
    norm: DecomposableNorm,
    T: Subspace,
    e,
    opts: SolverOptions | None = None,
    ctx: ICContext | None = None,
) -> ICSolution:
    """Minimize the irrepresentability coefficient over both feasible blocks.

    u ranges over ker(L_S) and z over the preimage parametrization of
    { z : Phi^* z in Im(L_S) }; both are reduced to orthonormal coordinates.
    """
    opts = opts or SolverOptions()
    ctx = ctx or ic_context(phi, l_op, T)
    e = np.asarray(e, dtype=float).reshape(-1)
    if e.shape[0] != l_op.cols:
        raise ValueError(f"e has length {e.shape[0]}, expected {l_op.cols}")
    g0 = ctx.gamma @ e
    ps = ctx.S.projector_matrix()
    cols_u = ps @ ctx.ker_ls.basis
    cols_z = ctx.ls_pinv_phi_adj @ ctx.z_space.basis
    columns = np.hstack([cols_u, cols_z])
    c, value, gap, converged = _min_dual_norm_affine(norm, g0, columns, opts)
    k1 = cols_u.shape[1]
    u = ctx.ker_ls.basis @ c[:k1] if k1 else np.zeros(l_op.cols)
    z = ctx.z_space.basis @ c[k1:] if c[k1:].size else np.zeros(phi.rows)
    return ICSolution(u=u, z=z, value=value, gap=gap, converged=converged)


def minimize_ic_u(
    phi: LinearOperator,
    l_op: LinearOperator,
    norm: DecomposableNorm,
    T: Subspace,
    e,
    opts: SolverOptions | None = None,
    ctx: ICContext | None = None,
) -> ICSolution:
    """Minimize the irrepresentability coefficient over u alone (z fixed to 0)."""
    opts = opts or SolverOptions()
    ctx = ctx or ic_context(phi, l_op, T)
    e = np.asarray(e, dtype=float).reshape(-1)
    if e.shape[0] != l_op.cols:
        raise ValueError(f"e has length {e.shape[0]}, expected {l_op.cols}")
    g0 = ctx.gamma @ e
    cols_u = ctx.S.projector_matrix() @ ctx.ker_ls.basis
    c, value, gap, converged = _min_dual_norm_affine(norm, g0, cols_u, opts)
    u = ctx.ker_ls.basis @ c if c.size else np.zeros(l_op.cols)
    return ICSolution(u=u, z=np.zeros(phi.rows), value=value, gap=gap, converged=converged)
