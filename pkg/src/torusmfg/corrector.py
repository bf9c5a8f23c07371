"""Correctors for the vanishing-discount expansion.

Solves the linearized discounted system (unknowns v, theta at fixed eps > 0)
through its symmetric-positive reduction, solves the limit corrector system
(unknowns v, theta and the constant lam) with an explicit integral gauge, and
measures how well a discounted sweep matches the expansion

    u^eps ~ (divergent constant)/eps + u + lam + eps*v,   m^eps ~ m + eps*theta.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import GridField, TorusGrid, integrate, norms
from .model import MFGModel
from .solver import DiscountedSolution, central_difference_matrix

M_FLOOR_DEFAULT = 1e-6


class CorrectorError(RuntimeError):
    pass


class DegenerateBase(CorrectorError):
    pass


class LinearSolveFailure(CorrectorError):
    pass


class InconsistentRoutes(CorrectorError):
    def __init__(self, lam_direct: float, lam_extrapolated: float, tol: float):
        super().__init__(
            f"direct lam={lam_direct:.6e} vs eps-extrapolated lam={lam_extrapolated:.6e} "
            f"disagree beyond {tol:.1e}"
        )
        self.lam_direct = lam_direct
        self.lam_extrapolated = lam_extrapolated


class GridMismatch(CorrectorError):
    pass


@dataclass(frozen=True)
class ErgodicTriple:
    """Limit solution (u, m, hbar) with int u = 0, int m = 1."""

    u: GridField
    m: GridField
    hbar: float

    def __post_init__(self):
        if self.u.grid != self.m.grid:
            raise GridMismatch("u and m live on different grids")

    @property
    def grid(self) -> TorusGrid:
        return self.u.grid


@dataclass(frozen=True)
class CorrectorSolution:
    v: GridField
    theta: GridField
    lam: float
    eps_used: float = 0.0
    route_agreement: dict = field(default_factory=dict)


def _base_arrays(base: ErgodicTriple, model: MFGModel, m_floor: float):
    grid = base.grid
    if grid.d != 1:
        raise ValueError("corrector operations target d = 1")
    m = base.m.values
    if np.min(m) < m_floor:
        raise DegenerateBase(f"min m = {np.min(m):.3e} below floor {m_floor:.1e}")
    D = central_difference_matrix(grid)
    w = D @ base.u.values
    gp = model.coupling.g_prime(m)
    return grid, D, m, w, gp


def k_form_matrix(base: ErgodicTriple, model: MFGModel, eps: float,
                  m_floor: float = M_FLOOR_DEFAULT) -> sp.csr_matrix:
    """Discrete bilinear form K = h * (D^T M D + T^T G'^{-1} T), T = eps*I + W D.

    Symmetric by construction; strictly positive definite for eps > 0,
    positive semidefinite with kernel = constants at eps = 0.
    """
    grid, D, m, w, gp = _base_arrays(base, model, m_floor)
    h = grid.h
    T = eps * sp.identity(grid.n, format="csr") + sp.diags(w) @ D
    K = h * (D.T @ sp.diags(m) @ D + T.T @ sp.diags(1.0 / gp) @ T)
    return K.tocsr()


def k_form_value(base: ErgodicTriple, model: MFGModel, eps: float,
                 phi1: GridField, phi2: GridField,
                 m_floor: float = M_FLOOR_DEFAULT) -> float:
    """Direct quadrature of K[phi1, phi2] as written (asymmetric order)."""
    grid, D, m, w, gp = _base_arrays(base, model, m_floor)
    d1 = D @ phi1.values
    d2 = D @ phi2.values
    t1 = eps * phi1.values + w * d1
    val = m * d1 * d2 + (t1 / gp) * w * d2 + eps * phi2.values * t1 / gp
    return float(np.sum(val)) * grid.h


def solve_linearized_discounted(eps: float, A: GridField, B: GridField,
                                base: ErgodicTriple, model: MFGModel,
                                m_floor: float = M_FLOOR_DEFAULT) -> tuple[GridField, GridField]:
    """Solve the eps-discounted linearized system for (v, theta).

    v solves the symmetric-positive reduced problem K v = b; theta is
    recovered as (eps*v + u + Du.Dv - A)/g'(m).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    grid, D, m, w, gp = _base_arrays(base, model, m_floor)
    if A.grid != grid or B.grid != grid:
        raise GridMismatch("A and B must share the base grid")
    h = grid.h
    u = base.u.values
    K = k_form_matrix(base, model, eps, m_floor=m_floor)
    rhs = h * (
        (1.0 - m)
        + D @ B.values
        + D @ (((u - A.values) / gp) * w)
        - eps * (u - A.values) / gp
    )
    try:
        v = spla.splu(K.tocsc()).solve(rhs)
    except RuntimeError as exc:
        raise LinearSolveFailure(str(exc)) from exc
    if not np.all(np.isfinite(v)):
        raise LinearSolveFailure("non-finite solution")
    theta = (eps * v + u + w * (D @ v) - A.values) / gp
    return GridField(grid, v), GridField(grid, theta)


def solve_limit_corrector(base: ErgodicTriple, model: MFGModel,
                          eps_ladder: tuple[float, ...] = (1e-2, 5e-3, 2.5e-3),
                          route_tol: float = 1e-4,
                          m_floor: float = M_FLOOR_DEFAULT) -> CorrectorSolution:
    """Solve the limit corrector system for (v, theta, lam).

    Direct route: bordered linear system for v and lam under the gauge
    int v = 0, with int theta = 0 closing the constant lam (the eps-route
    satisfies int theta = 0 identically, so this is the matching gauge).
    Cross-validated against solve_linearized_discounted with A = B = 0 on a
    small-eps ladder, Richardson-extrapolated.  Disagreement beyond
    10 * route_tol raises InconsistentRoutes.
    """
    grid, D, m, w, gp = _base_arrays(base, model, m_floor)
    h, n = grid.h, grid.n
    u = base.u.values

    # First order: bordered system for (v, lam) under the gauge int v = 0,
    # closed by the int theta = 0 solvability condition.
    K0 = k_form_matrix(base, model, 0.0, m_floor=m_floor)
    c = -h * (D @ (w / gp))                # constant-unknown coupling into the v rows
    b0 = h * ((1.0 - m) + D @ ((u / gp) * w))
    v, lam = _solve_bordered(K0, c, gp, grid, b0, -h * np.sum(u / gp))
    theta = (lam + u + w * (D @ v)) / gp

    # eps-route cross-validation.
    zero = GridField.constant(grid, 0.0)
    lam_eps, v_eps, th_eps = [], [], []
    for eps in eps_ladder:
        ve, te = solve_linearized_discounted(eps, zero, zero, base, model, m_floor=m_floor)
        lam_eps.append(eps * integrate(ve))
        v_eps.append(ve.values - integrate(ve))
        th_eps.append(te.values)
    lam_ext = _richardson_scalar(eps_ladder, lam_eps)
    v_ext = _richardson_field(eps_ladder, v_eps)
    th_ext = _richardson_field(eps_ladder, th_eps)

    lam_gap = abs(lam - lam_ext)
    v_gap = float(np.max(np.abs(v - v_ext)))
    th_gap = float(np.max(np.abs(theta - th_ext)))
    agreement = {
        "lam_direct": lam,
        "lam_extrapolated": lam_ext,
        "lam_gap": lam_gap,
        "v_sup_gap": v_gap,
        "theta_sup_gap": th_gap,
    }
    if lam_gap > 10 * route_tol:
        raise InconsistentRoutes(lam, lam_ext, 10 * route_tol)
    return CorrectorSolution(
        v=GridField(grid, v), theta=GridField(grid, theta), lam=lam,
        eps_used=0.0, route_agreement=agreement,
    )


def _solve_bordered(K0: sp.csr_matrix, c: np.ndarray, gp: np.ndarray, grid: TorusGrid,
                    b: np.ndarray, r: float) -> tuple[np.ndarray, float]:
    """Solve the bordered template [K0, c; c^T, h*sum(1/g')] (x, s) = (b, r)
    with gauge rows pinning the kernel of K0 (constants, and the +1/-1
    checkerboard when n is even, which central differences annihilate)."""
    h, n = grid.h, grid.n
    gauges = [np.full(n, h)]
    if n % 2 == 0:
        gauges.append(np.where(np.arange(n) % 2 == 0, h, -h))
    k = len(gauges)
    cols = [K0, sp.csr_matrix(c[:, None])] + [sp.csr_matrix(gz[:, None]) for gz in gauges]
    pad = [0.0] * k
    row_s = sp.csr_matrix(np.concatenate([c, [h * np.sum(1.0 / gp)], pad])[None, :])
    gauge_rows = [sp.csr_matrix(np.concatenate([gz, [0.0], pad])[None, :]) for gz in gauges]
    Aug = sp.vstack([sp.hstack(cols), row_s] + gauge_rows).tocsc()
    rhs = np.concatenate([b, [r], np.zeros(k)])
    try:
        z = spla.splu(Aug).solve(rhs)
    except RuntimeError as exc:
        raise LinearSolveFailure(str(exc)) from exc
    if not np.all(np.isfinite(z)):
        raise LinearSolveFailure("non-finite bordered solution")
    return z[:n], float(z[n])


def _richardson_scalar(eps, vals) -> float:
    coeffs = np.polyfit(np.asarray(eps, dtype=float), np.asarray(vals, dtype=float),
                        deg=len(eps) - 1)
    return float(coeffs[-1])


def _richardson_field(eps, fields) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    stack = np.stack(fields)  # (k, n)
    # Vandermonde fit per node, constant term is the eps -> 0 limit.
    Vm = np.vander(eps, N=len(eps))
    sol, *_ = np.linalg.lstsq(Vm, stack, rcond=None)
    return sol[-1]


def limit_residuals(base: ErgodicTriple, corr: CorrectorSolution,
                    model: MFGModel, m_floor: float = M_FLOOR_DEFAULT) -> tuple[float, float]:
    """Sup-norms of both limit corrector equations (second in divergence form)."""
    grid, D, m, w, gp = _base_arrays(base, model, m_floor)
    v, theta = corr.v.values, corr.theta.values
    r1 = corr.lam + base.u.values + w * (D @ v) - gp * theta
    r2 = -(D @ (m * (D @ v))) - (D @ (theta * w)) - (1.0 - m)
    return float(np.max(np.abs(r1))), float(np.max(np.abs(r2)))


def extrapolate_ergodic(solutions: list[DiscountedSolution]) -> ErgodicTriple:
    """Ergodic triple from a small-eps sweep by polynomial extrapolation.

    Uses eps*int(u^eps) ~ -hbar + lam*eps + O(eps^2) for hbar, and per-node
    polynomial fits of the fluctuation u^eps - int(u^eps) and of m^eps.
    Needs >= 2 solutions on a shared grid; 3 gives quadratic accuracy.
    """
    if len(solutions) < 2:
        raise ValueError("need at least two discounted solutions")
    grid = solutions[0].u.grid
    for s in solutions[1:]:
        if s.u.grid != grid:
            raise GridMismatch("sweep solutions on different grids")
    eps = np.array([s.eps for s in solutions])
    deg = len(solutions) - 1
    means = np.array([integrate(s.u) for s in solutions])
    hbar = -_polyfit_const(eps, eps * means, deg)
    flucts = [s.u.values - mu for s, mu in zip(solutions, means)]
    u0 = _polyfit_field(eps, flucts, deg)
    m0 = _polyfit_field(eps, [s.m.values for s in solutions], deg)
    m0 /= np.sum(m0) * grid.h**grid.d  # exact unit mass; corrector gauges rely on it
    u0 -= np.mean(u0)
    return ErgodicTriple(u=GridField(grid, u0), m=GridField(grid, m0), hbar=float(hbar))


def _polyfit_const(eps, vals, deg) -> float:
    return float(np.polyfit(eps, vals, deg)[-1])


def _polyfit_field(eps, fields, deg) -> np.ndarray:
    Vm = np.vander(np.asarray(eps, dtype=float), N=deg + 1)
    sol, *_ = np.linalg.lstsq(Vm, np.stack(fields), rcond=None)
    return sol[-1]


def polish_ergodic(base: ErgodicTriple, model: MFGModel, tol_abs: float = 1e-12,
                   max_iters: int = 30) -> ErgodicTriple:
    """Newton-polish an approximate triple onto the discrete limit system.

    Solves D(m w) = 0 with m = ginv(|Du|^2/2 + V - hbar), int m = 1 and
    int u = 0 for (u, hbar) to roundoff, so that downstream expansion errors
    measure the discounted solutions and not the base.  Lagrange multipliers
    absorb the cokernel of the central difference (constants, plus the
    checkerboard for even n).
    """
    grid = base.grid
    if grid.d != 1:
        raise ValueError("corrector operations target d = 1")
    h, n = grid.h, grid.n
    D = central_difference_matrix(grid)
    V = model.potential.sample(grid).values
    coup = model.coupling
    cokernel = [np.full(n, h)]
    if n % 2 == 0:
        cokernel.append(np.where(np.arange(n) % 2 == 0, h, -h))
    k = len(cokernel)

    def full_residual(u, hbar, mults):
        w = D @ u
        s = 0.5 * w**2 + V - hbar
        if np.any(s <= 0):
            raise DegenerateBase("polished iterate left the classical regime")
        m = coup.g_inverse(s)
        rows = D @ (m * w)
        for mu, gz in zip(mults, cokernel):
            rows = rows + mu * gz
        extra = [h * np.sum(m) - 1.0, h * np.sum(u)]
        if n % 2 == 0:
            extra.append(float(cokernel[1] @ u))
        return np.concatenate([rows, extra]), w, s, m

    u = base.u.values.copy()
    hbar = base.hbar
    mults = np.zeros(k)
    F, w, s, m = full_residual(u, hbar, mults)
    f_sup = float(np.max(np.abs(F)))
    for _ in range(max_iters):
        if f_sup <= tol_abs:
            break
        mp = coup.g_inverse_prime(s)
        J_uu = D @ sp.diags(mp * w**2 + m) @ D
        col_h = -(D @ (mp * w))
        mass_u = -h * (D @ (mp * w))  # h * (mp*w)^T D as a row, via D^T = -D
        blocks = [
            sp.hstack([J_uu, sp.csr_matrix(col_h[:, None])]
                      + [sp.csr_matrix(gz[:, None]) for gz in cokernel]),
            sp.csr_matrix(np.concatenate([mass_u, [-h * np.sum(mp)], np.zeros(k)])[None, :]),
            sp.csr_matrix(np.concatenate([np.full(n, h), [0.0], np.zeros(k)])[None, :]),
        ]
        if n % 2 == 0:
            blocks.append(
                sp.csr_matrix(np.concatenate([cokernel[1], [0.0], np.zeros(k)])[None, :])
            )
        Aug = sp.vstack(blocks).tocsc()
        try:
            dz = spla.splu(Aug).solve(-F)
        except RuntimeError as exc:
            raise LinearSolveFailure(str(exc)) from exc
        t = 1.0
        improved = False
        for _ in range(20):
            try:
                F_try, w_t, s_t, m_t = full_residual(
                    u + t * dz[:n], hbar + t * dz[n], mults + t * dz[n + 1:])
            except DegenerateBase:
                t *= 0.5
                continue
            f_try = float(np.max(np.abs(F_try)))
            if f_try < f_sup:
                u = u + t * dz[:n]
                hbar = hbar + t * dz[n]
                mults = mults + t * dz[n + 1:]
                F, w, s, m, f_sup = F_try, w_t, s_t, m_t, f_try
                improved = True
                break
            t *= 0.5
        if not improved:
            break
    if f_sup > 1e-8:
        raise LinearSolveFailure(f"ergodic polish stalled at residual {f_sup:.3e}")
    m = m / (np.sum(m) * h)
    return ErgodicTriple(u=GridField(grid, u - np.mean(u)), m=GridField(grid, m),
                         hbar=float(hbar))


@dataclass(frozen=True)
class ExpansionRow:
    eps: float
    e_u: float
    e_m: float
    e2: float


@dataclass(frozen=True)
class ExpansionReport:
    rows: list[ExpansionRow]
    slope_e_u: float
    slope_e_m: float
    slope_e2: float


def verify_expansion(sweep: list[DiscountedSolution], base: ErgodicTriple,
                     corr: CorrectorSolution) -> ExpansionReport:
    """Error table for the expansion against a discounted sweep.

    The divergent mode of u^eps is -hbar/eps (eps*u^eps -> -hbar), so
    e_u = sup|u^eps + hbar/eps - u - lam| and
    e2  = sup|u^eps + hbar/eps - u - lam - eps*v|.
    """
    grid = base.grid
    rows = []
    for s in sweep:
        if s.u.grid != grid:
            raise GridMismatch("sweep solution grid differs from base grid")
        resid = s.u.values + base.hbar / s.eps - base.u.values - corr.lam
        e_u = float(np.max(np.abs(resid)))
        e_m = float(np.max(np.abs(s.m.values - base.m.values)))
        e2 = float(np.max(np.abs(resid - s.eps * corr.v.values)))
        rows.append(ExpansionRow(eps=s.eps, e_u=e_u, e_m=e_m, e2=e2))
    eps = np.array([r.eps for r in rows])
    return ExpansionReport(
        rows=rows,
        slope_e_u=_loglog_slope(eps, [r.e_u for r in rows]),
        slope_e_m=_loglog_slope(eps, [r.e_m for r in rows]),
        slope_e2=_loglog_slope(eps, [r.e2 for r in rows]),
    )


def _loglog_slope(eps, errs) -> float:
    errs = np.asarray(errs, dtype=float)
    if np.any(errs <= 0):
        return float("inf")
    return float(np.polyfit(np.log(eps), np.log(errs), 1)[0])
