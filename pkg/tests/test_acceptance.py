"""Acceptance suite: one test and one printed pass/fail line per criterion.

Each test prints `criterion N: PASS|FAIL - details` before asserting, so the
full scoreboard is visible in the run log even when a criterion fails.
"""

import numpy as np
import pytest

from torusmfg.closed_form import F_HAT, F_TILDE, candidate_catalog, example_bbb, example_exlp
from torusmfg.corrector import (
    extrapolate_ergodic,
    k_form_matrix,
    k_form_value,
    polish_ergodic,
    solve_limit_corrector,
    solve_linearized_discounted,
    verify_expansion,
)
from torusmfg.grid import GridField, TorusGrid, integrate
from torusmfg.model import Coupling, MFGModel, Potential, Regularization
from torusmfg.selection import (
    discounted_action,
    exdp_model,
    holonomy_defect_discounted,
    holonomy_defect_ergodic,
    run_selection_experiment,
    select_minimizer,
    trig_test_basis,
)
from torusmfg.solver import (
    continuation_solve,
    density_formula_residual,
    energy_identity_residual,
    jacobian_fd_check,
    lasry_lions_quantity,
    newton_solve,
)

from conftest import smooth_random_field

TOL = 1e-10


def _report(num: int, checks: list[tuple[str, bool]]) -> None:
    ok = all(c[1] for c in checks)
    detail = ", ".join(f"{name} {'ok' if good else 'FAILED'}" for name, good in checks)
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def smooth():
    model = MFGModel(coupling=Coupling(1.0, 1.0),
                     potential=Potential(kind="sine", c=0.3))
    return model, Regularization()


@pytest.fixture(scope="module")
def smooth_512(smooth):
    model, reg = smooth
    return continuation_solve(0.1, model, reg, TorusGrid(512), tol_abs=TOL)


@pytest.fixture(scope="module")
def base_and_corrector(smooth):
    model, reg = smooth
    g = TorusGrid(512)
    sols = [continuation_solve(e, model, reg, g, tol_abs=TOL)
            for e in (0.02, 0.01, 0.005)]
    base = polish_ergodic(extrapolate_ergodic(sols), model)
    corr = solve_limit_corrector(base, model)
    return base, corr


@pytest.fixture(scope="module")
def smooth_sweep(smooth):
    model, reg = smooth
    g = TorusGrid(512)
    return [continuation_solve(e, model, reg, g, tol_abs=TOL)
            for e in (0.2, 0.1, 0.05, 0.025)]


@pytest.fixture(scope="module")
def exdp_experiment():
    return run_selection_experiment(exdp_model(), TorusGrid(2048),
                                    [0.2, 0.1, 0.05, 0.025], tol_abs=TOL)


def test_criterion_1_constant_solution_exact():
    model = MFGModel()  # V = 0, g(m) = m
    reg = Regularization()
    checks = []
    for eps in (1.0, 0.1, 0.01):
        sol = continuation_solve(eps, model, reg, TorusGrid(256), tol_abs=1e-12)
        u_err = np.max(np.abs(sol.u.values - 1.0 / eps))
        m_err = np.max(np.abs(sol.m.values - 1.0))
        checks.append((f"eps={eps} u_err={u_err:.1e}", u_err <= 1e-12))
        checks.append((f"eps={eps} m_err={m_err:.1e}", m_err <= 1e-12))
        checks.append((f"eps={eps} iters={sol.newton_iters}", sol.newton_iters <= 3))
    _report(1, checks)


def test_criterion_2_smooth_regime(smooth, smooth_512):
    model, reg = smooth
    sol = smooth_512
    h2 = sol.u.grid.h ** 2
    mass_err = abs(sol.mass - 1.0)
    min_m = float(np.min(sol.m.values))
    energy = energy_identity_residual(sol, model)
    density = density_formula_residual(sol, model)

    ref = continuation_solve(0.1, model, reg, TorusGrid(4096), tol_abs=TOL)
    errs = []
    for n in (128, 256, 512, 1024):
        s = continuation_solve(0.1, model, reg, TorusGrid(n), tol_abs=TOL)
        errs.append(np.max(np.abs(s.u.values - ref.u.values[:: 4096 // n])))
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(3)]

    checks = [
        (f"mass_err={mass_err:.1e}<=1e-8", mass_err <= 1e-8),
        (f"min_m={min_m:.3f}>=0.399", min_m >= 0.4 - 1e-3),
        (f"energy={energy:.1e}<=5h^2", energy <= 5 * h2),
        (f"density_formula={density:.1e}<=5h^2", density <= 5 * h2),
    ]
    for n, order in zip((128, 256, 512), orders):
        checks.append((f"order(n={n})={order:.2f}", abs(order - 2.0) <= 0.3))
    _report(2, checks)


def test_criterion_3_uniqueness(smooth):
    model, reg = smooth
    g = TorusGrid(256)
    guess = continuation_solve(0.1, model, reg, g, tol_abs=TOL)
    sols = []
    for seed in (1, 2):
        pert = smooth_random_field(g, seed=seed, amp=0.05)
        u0 = GridField(g, guess.u.values + pert.values)
        sols.append(newton_solve(0.1, 1.0, model, reg, u0, tol_abs=TOL))
    d = sols[0].u.values - sols[1].u.values
    du = float(np.max(np.abs(d - np.mean(d))))
    dm = float(np.max(np.abs(sols[0].m.values - sols[1].m.values)))
    ll = lasry_lions_quantity(sols[0], sols[1], model)
    checks = [
        (f"sup|du|={du:.1e}<=1e-8", du <= 1e-8),
        (f"sup|dm|={dm:.1e}<=1e-8", dm <= 1e-8),
        (f"lasry_lions={ll:.1e}<=1e-8", abs(ll) <= 1e-8),
    ]
    _report(3, checks)


def test_criterion_4_vanishing_discount(base_and_corrector, smooth_sweep):
    base, corr = base_and_corrector
    hbars = [-s.eps * integrate(s.u) for s in smooth_sweep]
    cauchy = [abs(b - a) for a, b in zip(hbars, hbars[1:])]
    cauchy_ok = all(b < a for a, b in zip(cauchy, cauchy[1:]))

    rep = verify_expansion(smooth_sweep, base, corr)
    gap = rep.slope_e2 - rep.slope_e_u
    checks = [
        (f"hbar_cauchy={['%.1e' % c for c in cauchy]} monotone", cauchy_ok),
        (f"slope_e_u={rep.slope_e_u:.3f}>=0.8", rep.slope_e_u >= 0.8),
        (f"slope_e2-slope_e_u={gap:.3f} in [0.7,1.3]", 0.7 <= gap <= 1.3),
    ]
    _report(4, checks)


def test_criterion_5_corrector_linear_algebra(smooth, smooth_512):
    model, reg = smooth
    fd_gap = jacobian_fd_check(smooth_512.u, 0.1, 1.0, model, reg)

    consts = {}
    sym_errs = []
    for n in (128, 512):
        g = TorusGrid(n)
        sols = [continuation_solve(e, model, reg, g, tol_abs=TOL)
                for e in (0.02, 0.01, 0.005)]
        base = polish_ergodic(extrapolate_ergodic(sols), model)
        K = k_form_matrix(base, model, 0.05)
        p1 = smooth_random_field(g, seed=31)
        p2 = smooth_random_field(g, seed=32)
        sym_errs.append(max(
            float(abs(K - K.T).max()),
            abs(k_form_value(base, model, 0.05, p1, p2)
                - k_form_value(base, model, 0.05, p2, p1)),
        ))
        D_ratio = []
        for seed in range(5):
            A = smooth_random_field(g, seed=100 + seed)
            B = smooth_random_field(g, seed=200 + seed)
            v, theta = solve_linearized_discounted(0.05, A, B, base, model)
            dv = np.max(np.abs(np.gradient(v.values, g.h)))
            num = 0.05 * np.max(np.abs(v.values)) + np.max(np.abs(theta.values)) + dv
            den = np.max(np.abs(A.values)) + np.max(np.abs(B.values)) + 1.0
            D_ratio.append(num / den)
        consts[n] = max(D_ratio)

    ratio = consts[512] / consts[128]
    checks = [
        (f"jacobian_fd={fd_gap:.1e}<=1e-6", fd_gap <= 1e-6),
        (f"k_symmetry={max(sym_errs):.1e}<=1e-12", max(sym_errs) <= 1e-12),
        (f"stability C128={consts[128]:.3f} C512={consts[512]:.3f} ratio in [1/2,2]",
         0.5 <= ratio <= 2.0),
    ]
    _report(5, checks)


def test_criterion_6_bbb_recovery():
    model = MFGModel(coupling=Coupling(1.0, 1.0), potential=Potential(kind="cos4pi"))
    g = TorusGrid(2048)
    m_oracle, _, _ = example_bbb(g)
    l1s, hbars = [], []
    warm = None
    for eps in (0.2, 0.1, 0.05, 0.025):
        reg = Regularization(sigma=eps, delta=eps)
        sol = continuation_solve(eps, model, reg, g, tol_abs=TOL, u_init=warm)
        warm = sol.u
        l1s.append(float(np.sum(np.abs(sol.m.values - m_oracle.values)) * g.h))
        hbars.append(-eps * integrate(sol.u))
    checks = [
        (f"L1_terminal={l1s[-1]:.4f}<=0.05", l1s[-1] <= 0.05),
        (f"L1 ladder {['%.4f' % v for v in l1s]} decreasing",
         all(b < a for a, b in zip(l1s, l1s[1:]))),
        (f"|hbar_est|={abs(hbars[-1]):.4f}<=0.02", abs(hbars[-1]) <= 0.02),
    ]
    _report(6, checks)


def test_criterion_7_selection(exdp_experiment):
    sweep, verdict = exdp_experiment
    g = sweep.grid
    m_oracle, _, _ = example_exlp(g)
    m_oracle = GridField(g, m_oracle.values / integrate(m_oracle))
    ranking = select_minimizer(candidate_catalog(g), m_oracle)
    max_gap = max(verdict.functional_gaps.values())
    checks = [
        (f"oracle F(tilde)={F_TILDE:.4f}<F(hat)={F_HAT:.4f}", F_TILDE < F_HAT),
        (f"oracle F(tilde)<0", F_TILDE < 0.0),
        (f"select_minimizer winner={ranking.winner}", ranking.winner == "tilde"),
        (f"ladder nearest={verdict.nearest_label} (L2={verdict.nearest_l2:.4f})",
         verdict.nearest_label == "tilde"),
        (f"max functional gap={max_gap:.4f}<=0.05", verdict.criterion_ok),
    ]
    _report(7, checks)


def test_criterion_8_mather_diagnostics(smooth, smooth_512):
    model, _ = smooth
    sol = smooth_512
    g = sol.u.grid
    h, h2 = g.h, g.h ** 2
    worst = 0.0
    for k, phi in enumerate(trig_test_basis(g), start=1):
        mode = (k + 1) // 2
        c2_norm = (2 * np.pi * mode) ** 2
        worst = max(worst, holonomy_defect_discounted(0.1, sol, phi) / c2_norm)
    action = discounted_action(0.1, sol, model)[2]

    m_or, _, (tilde, _) = example_exlp(g)
    m_or = GridField(g, m_or.values / integrate(m_or))
    worst_erg = 0.0
    for k, phi in enumerate(trig_test_basis(g), start=1):
        mode = (k + 1) // 2
        c2_norm = (2 * np.pi * mode) ** 2
        worst_erg = max(worst_erg, holonomy_defect_ergodic(tilde.u, m_or, phi) / c2_norm)

    checks = [
        (f"holonomy={worst:.1e}<=10h^2", worst <= 10 * h2),
        (f"action_gap={action:.1e}<=10h^2", action <= 10 * h2),
        (f"ergodic_holonomy={worst_erg:.1e}<=10h", worst_erg <= 10 * h),
    ]
    _report(8, checks)


def test_criterion_9_cross_coupling_gap(exdp_experiment):
    sweep, _ = exdp_experiment
    gaps = [r.coupling_gap for r in sweep.rows if not r.failed]
    checks = [
        ("all rungs converged", len(gaps) == len(sweep.rows)),
        (f"gaps {['%.1e' % v for v in gaps]} all >= 0",
         all(v >= -1e-12 for v in gaps)),
        (f"terminal gap={gaps[-1]:.1e}<=0.05", gaps[-1] <= 0.05),
    ]
    _report(9, checks)
