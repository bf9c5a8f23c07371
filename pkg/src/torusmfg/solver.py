"""Damped Newton and continuation solver for the discounted system in 1d.

The coupled system is reduced to a single quasilinear equation for u by
eliminating the density,

    div[ginv(eps*u + |Du|^2/2 + lam*V) Du] - eps*[ginv(...) - 1] + sigma*Lap u = 0,

discretized with periodic central differences.  The exact discrete Jacobian is
a cyclic banded (pentadiagonal) sparse matrix, solved directly.  Continuation
ramps the potential from lam = 0 (where u = g(1)/eps is an exact solution)
to lam = 1 with adaptive step control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import GridField, TorusGrid, integrate
from .model import (
    DomainError,
    MFGModel,
    Regularization,
    smoothed_inverse,
    smoothed_inverse_prime,
)


class SolverError(RuntimeError):
    pass


class NonConvergence(SolverError):
    def __init__(self, message: str, best_residual: float, iterations: int):
        super().__init__(f"{message} (best residual {best_residual:.3e} after {iterations} iterations)")
        self.best_residual = best_residual
        self.iterations = iterations


class SingularJacobian(SolverError):
    pass


class ContinuationStalled(SolverError):
    def __init__(self, lam_reached: float, message: str = ""):
        super().__init__(f"continuation stalled at lam={lam_reached:.6f} {message}".rstrip())
        self.lam_reached = lam_reached


@dataclass(frozen=True)
class DiscountedSolution:
    """Converged solution of the discounted system plus solver diagnostics."""

    eps: float
    u: GridField
    m: GridField
    reg: Regularization
    residual_sup: float
    newton_iters: int
    continuation_steps: int = 0
    lam_cont: float = 1.0

    @property
    def mass(self) -> float:
        return integrate(self.m)


def central_difference_matrix(grid: TorusGrid) -> sp.csr_matrix:
    """Sparse circulant central first-difference operator (1d)."""
    n, h = grid.n, grid.h
    ones = np.ones(n)
    D = sp.diags([ones, -ones], [1, -1], shape=(n, n), format="lil")
    D[0, n - 1] = -1.0
    D[n - 1, 0] = 1.0
    return (D / (2 * h)).tocsr()


def laplacian_matrix(grid: TorusGrid) -> sp.csr_matrix:
    n, h = grid.n, grid.h
    ones = np.ones(n)
    L = sp.diags([ones, -2 * ones, ones], [1, 0, -1], shape=(n, n), format="lil")
    L[0, n - 1] = 1.0
    L[n - 1, 0] = 1.0
    return (L / h**2).tocsr()


def _state(uf: np.ndarray, mu: float, eps: float, lam_cont: float, model: MFGModel,
           reg: Regularization, grid: TorusGrid, D: sp.csr_matrix):
    """State at u = uf + mu with uf the (near) zero-mean fluctuation.

    The value function carries an O(1/eps) additive constant whose unit of
    last place is O(1e-16/eps); differencing and updating the fluctuation
    instead of the full vector keeps the representable granularity tied to
    the O(1) fluctuation, which lowers the attainable residual floor by a
    factor ~ g(1)/(eps * osc).
    """
    V = model.potential.sample(grid).values
    w = D @ uf
    s = eps * uf + 0.5 * w**2 + (eps * mu + lam_cont * V)
    m = smoothed_inverse(s, model.coupling, reg.delta)
    return w, s, m


def _split(u: np.ndarray):
    mu = float(np.mean(u))
    return u - mu, mu


def _residual_values(uf, mu, eps, lam_cont, model, reg, grid, D, L):
    w, s, m = _state(uf, mu, eps, lam_cont, model, reg, grid, D)
    return D @ (m * w) - eps * (m - 1.0) + reg.sigma * (L @ uf)


def residual(u: GridField, eps: float, lam_cont: float, model: MFGModel,
             reg: Regularization) -> GridField:
    """Node-wise residual of the reduced discounted equation."""
    grid = u.grid
    if grid.d != 1:
        raise ValueError("solver operations target d = 1")
    D = central_difference_matrix(grid)
    L = laplacian_matrix(grid)
    uf, mu = _split(u.values)
    return GridField(grid, _residual_values(uf, mu, eps, lam_cont, model, reg, grid, D, L))


def _assemble_from_state(w, s, m, eps, model, reg, D, L) -> sp.csr_matrix:
    mp = smoothed_inverse_prime(s, model.coupling, reg.delta)
    dmw = sp.diags(mp * w)
    J = (
        eps * (D @ dmw)
        + D @ sp.diags(mp * w**2 + m) @ D
        - eps**2 * sp.diags(mp)
        - eps * (dmw @ D)
        + reg.sigma * L
    )
    return J.tocsr()


def assemble_jacobian(u: GridField, eps: float, lam_cont: float, model: MFGModel,
                      reg: Regularization) -> sp.csr_matrix:
    """Exact Frechet derivative of the discrete residual (cyclic banded)."""
    grid = u.grid
    if grid.d != 1:
        raise ValueError("solver operations target d = 1")
    D = central_difference_matrix(grid)
    L = laplacian_matrix(grid)
    uf, mu = _split(u.values)
    w, s, m = _state(uf, mu, eps, lam_cont, model, reg, grid, D)
    return _assemble_from_state(w, s, m, eps, model, reg, D, L)


def diffusion_coefficients(sol: DiscountedSolution, model: MFGModel) -> np.ndarray:
    """a^{11} = m + (g^{-1})'(g(m)) u_x^2 at the nodes (1d ellipticity check)."""
    D = central_difference_matrix(sol.u.grid)
    w = D @ sol.u.values
    gp = model.coupling.g_prime(sol.m.values)
    return sol.m.values + w**2 / gp


def recover_density(u: GridField, eps: float, model: MFGModel, reg: Regularization,
                    lam_cont: float = 1.0, positive_part: bool = False) -> GridField:
    """m = ginv_delta(eps*u + |Du|^2/2 + lam*V) at the nodes."""
    grid = u.grid
    D = central_difference_matrix(grid)
    V = model.potential.sample(grid).values
    uf, mu = _split(u.values)
    w = D @ uf
    s = eps * uf + (eps * mu + lam_cont * V) + 0.5 * w**2
    m = smoothed_inverse(s, model.coupling, reg.delta, positive_part=positive_part)
    return GridField(grid, np.asarray(m))


def newton_solve(eps: float, lam_cont: float, model: MFGModel, reg: Regularization,
                 u_init: GridField, tol_abs: float = 1e-10, max_iters: int = 50,
                 max_backtracks: int = 20) -> DiscountedSolution:
    """Damped Newton with sup-norm backtracking on the reduced equation."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    grid = u_init.grid
    if grid.d != 1:
        raise ValueError("solver operations target d = 1")
    D = central_difference_matrix(grid)
    L = laplacian_matrix(grid)
    # split representation: iterate on the zero-mean fluctuation and track the
    # large additive constant separately (see _state)
    uf, mu = _split(u_init.values)

    def _eval(uf, mu):
        r = _residual_values(uf, mu, eps, lam_cont, model, reg, grid, D, L)
        return r, float(np.max(np.abs(r)))

    try:
        r, r_sup = _eval(uf, mu)
    except DomainError as exc:
        raise NonConvergence(f"initial iterate infeasible: {exc}", np.inf, 0) from exc
    best = r_sup

    for it in range(1, max_iters + 1):
        if r_sup <= tol_abs:
            return _finish(grid, uf + mu, eps, lam_cont, model, reg, r_sup, it - 1)
        w, s, m = _state(uf, mu, eps, lam_cont, model, reg, grid, D)
        J = _assemble_from_state(w, s, m, eps, model, reg, D, L)
        try:
            lu = spla.splu(J.tocsc())
            du = lu.solve(-r)
        except RuntimeError as exc:
            raise SingularJacobian(f"direct solve failed at iteration {it}: {exc}") from exc
        if not np.all(np.isfinite(du)):
            raise SingularJacobian(f"direct solve returned non-finite step at iteration {it}")
        dmu = float(np.mean(du))
        duf = du - dmu

        t = 1.0
        accepted = False
        for _ in range(max_backtracks + 1):
            uf_try = uf + t * duf
            mu_try = mu + t * dmu
            try:
                r_try, r_try_sup = _eval(uf_try, mu_try)
            except DomainError:
                t *= 0.5
                continue
            if np.isfinite(r_try_sup) and r_try_sup < r_sup:
                uf, mu, r, r_sup = uf_try, mu_try, r_try, r_try_sup
                accepted = True
                break
            t *= 0.5
        if not accepted:
            raise NonConvergence("line search failed to reduce the residual", best, it)
        best = min(best, r_sup)

    if r_sup <= tol_abs:
        return _finish(grid, uf + mu, eps, lam_cont, model, reg, r_sup, max_iters)
    raise NonConvergence("iteration cap reached", best, max_iters)


def _finish(grid, u, eps, lam_cont, model, reg, r_sup, iters) -> DiscountedSolution:
    uf = GridField(grid, u)
    m = recover_density(uf, eps, model, reg, lam_cont=lam_cont)
    return DiscountedSolution(
        eps=eps, u=uf, m=m, reg=reg, residual_sup=r_sup,
        newton_iters=iters, lam_cont=lam_cont,
    )


def energy_identity_residual(sol: DiscountedSolution, model: MFGModel) -> float:
    """|int (1+m)/2 |Du|^2 + m g(m) dx - int (m-1)V + g(m) dx|."""
    grid = sol.u.grid
    D = central_difference_matrix(grid)
    w = D @ sol.u.values
    m = sol.m.values
    V = model.potential.sample(grid).values
    g_m = model.coupling.g(m)
    lhs = np.sum(0.5 * (1.0 + m) * w**2 + m * g_m) * grid.h
    rhs = np.sum((m - 1.0) * V + g_m) * grid.h
    return float(abs(lhs - rhs))


def density_formula_residual(sol: DiscountedSolution, model: MFGModel) -> float:
    """Sup-norm defect of the 1d density relation
    m_x (u_x^2 + g'(m) m) = 2 eps m u_x - eps u_x + m V_x, discrete derivatives."""
    grid = sol.u.grid
    D = central_difference_matrix(grid)
    w = D @ sol.u.values
    m = sol.m.values
    V_x = D @ model.potential.sample(grid).values
    lhs = (D @ m) * (w**2 + model.coupling.g_prime(m) * m)
    rhs = 2.0 * sol.eps * m * w - sol.eps * w + m * V_x
    return float(np.max(np.abs(lhs - rhs)))


def lasry_lions_quantity(sol1: DiscountedSolution, sol2: DiscountedSolution,
                         model: MFGModel) -> float:
    """int (m1-m2)(g(m1)-g(m2)) + (m1+m2)/2 |Du1-Du2|^2 dx; 0 iff same solution."""
    grid = sol1.u.grid
    if sol2.u.grid != grid:
        raise ValueError("solutions on different grids")
    D = central_difference_matrix(grid)
    m1, m2 = sol1.m.values, sol2.m.values
    dw = (D @ sol1.u.values) - (D @ sol2.u.values)
    g = model.coupling.g
    val = (m1 - m2) * (g(m1) - g(m2)) + 0.5 * (m1 + m2) * dw**2
    return float(np.sum(val)) * grid.h


def jacobian_fd_check(u: GridField, eps: float, lam_cont: float, model: MFGModel,
                      reg: Regularization, fd_step: float = 1e-6, seed: int = 0) -> float:
    """Relative gap between J@d and a central finite difference of the residual
    along a random unit direction d."""
    grid = u.grid
    rng = np.random.default_rng(seed)
    d = rng.standard_normal(grid.n)
    d /= np.max(np.abs(d))
    J = assemble_jacobian(u, eps, lam_cont, model, reg)
    exact = J @ d
    rp = residual(GridField(grid, u.values + fd_step * d), eps, lam_cont, model, reg).values
    rm = residual(GridField(grid, u.values - fd_step * d), eps, lam_cont, model, reg).values
    approx = (rp - rm) / (2.0 * fd_step)
    return float(np.max(np.abs(exact - approx)) / (1.0 + np.max(np.abs(exact))))


def continuation_solve(eps: float, model: MFGModel, reg: Regularization, grid: TorusGrid,
                       tol_abs: float = 1e-10, min_step: float = 1e-4,
                       fast_iters: int = 5, u_init: GridField | None = None) -> DiscountedSolution:
    """Continuation in the potential from lam = 0 to lam = 1.

    Starts from the exact base point u = g(1)/eps (or a caller-supplied warm
    start); halves the step on Newton failure, grows it by 1.5 on fast
    success.  Raises ContinuationStalled if the step drops below min_step
    before reaching lam = 1.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if u_init is None:
        u = GridField.constant(grid, float(model.coupling.g(1.0)) / eps)
    else:
        u = u_init
    lam = 0.0
    step = 1.0
    steps = 0
    total_newton = 0
    sol = None
    while lam < 1.0:
        lam_try = min(1.0, lam + step)
        try:
            sol = newton_solve(eps, lam_try, model, reg, u, tol_abs=tol_abs)
        except (NonConvergence, SingularJacobian):
            step *= 0.5
            if step < min_step:
                raise ContinuationStalled(lam)
            continue
        lam = lam_try
        u = sol.u
        steps += 1
        total_newton += sol.newton_iters
        if sol.newton_iters <= fast_iters:
            step *= 1.5
    if sol is None:  # lam started at 1.0 is impossible; defensive
        raise ContinuationStalled(lam)
    return DiscountedSolution(
        eps=sol.eps, u=sol.u, m=sol.m, reg=sol.reg, residual_sup=sol.residual_sup,
        newton_iters=total_newton, continuation_steps=steps, lam_cont=1.0,
    )
