import numpy as np
import pytest

from torusmfg.closed_form import candidate_catalog, example_exlp
from torusmfg.grid import GridField, TorusGrid, integrate
from torusmfg.selection import (
    EmptyCatalog,
    cross_coupling_gap,
    discounted_action,
    exdp_model,
    holonomy_defect_discounted,
    holonomy_defect_ergodic,
    mather_pair,
    max_holonomy_defect,
    run_selection_experiment,
    select_minimizer,
    selection_functional,
    trig_test_basis,
)
from torusmfg.solver import continuation_solve


@pytest.fixture(scope="module")
def oracle_512():
    g = TorusGrid(512)
    m, _, _ = example_exlp(g)
    m = GridField(g, m.values / integrate(m))
    return g, m


def test_mather_pair_of_constant_is_mass(oracle_512):
    g, m = oracle_512
    val = mather_pair(lambda x, v: np.ones_like(x), GridField.constant(g, 0.0), m)
    assert val == pytest.approx(1.0, abs=1e-12)


def test_trig_test_basis(oracle_512):
    g, _ = oracle_512
    basis = trig_test_basis(g, modes=3)
    assert len(basis) == 6
    x = g.coordinates()
    np.testing.assert_allclose(basis[0].values, np.sin(2 * np.pi * x))
    np.testing.assert_allclose(basis[5].values, np.cos(6 * np.pi * x))


def test_holonomy_and_action_on_converged_solution(smooth_model, reg0, smooth_sol_256):
    sol = smooth_sol_256
    assert max_holonomy_defect(0.1, sol) < 1e-10
    phi = trig_test_basis(sol.u.grid, modes=1)[0]
    assert holonomy_defect_discounted(0.1, sol, phi) < 1e-11
    lhs, rhs, gap = discounted_action(0.1, sol, smooth_model)
    assert gap < 1e-10
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_ergodic_holonomy_on_oracle(oracle_512):
    g, m = oracle_512
    _, _, (tilde, _) = example_exlp(g)
    for k, phi in enumerate(trig_test_basis(g), start=1):
        mode = (k + 1) // 2
        defect = holonomy_defect_ergodic(tilde.u, m, phi)
        assert defect <= 10 * g.h * (2 * np.pi * mode) ** 2


def test_selection_functional_requires_unit_mass(oracle_512):
    g, m = oracle_512
    u = GridField.constant(g, 1.0)
    assert selection_functional(u, m) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        selection_functional(u, GridField(g, 2.0 * m.values))


def test_select_minimizer_picks_tilde(oracle_512):
    g, m = oracle_512
    ranking = select_minimizer(candidate_catalog(g), m)
    assert ranking.winner == "tilde"
    assert ranking.entries[0][1] < 0.0
    assert not ranking.ambiguous_leaders


def test_select_minimizer_flags_ties(oracle_512):
    g, m = oracle_512
    catalog = candidate_catalog(g)
    twin = catalog[0].__class__(label="tilde_copy", u_x=catalog[0].u_x,
                                u=catalog[0].u, m=catalog[0].m, hbar=0.0)
    ranking = select_minimizer(catalog + [twin], m)
    assert ranking.winner is None
    assert set(ranking.ambiguous_leaders) == {"tilde", "tilde_copy"}


def test_select_minimizer_empty():
    with pytest.raises(EmptyCatalog):
        select_minimizer([], GridField.constant(TorusGrid(8), 1.0))


def test_cross_coupling_gap_nonnegative(oracle_512, smooth_model):
    g, m = oracle_512
    rng = np.random.default_rng(0)
    m2 = GridField(g, m.values + 0.01 * np.abs(np.sin(2 * np.pi * g.coordinates())))
    assert cross_coupling_gap(m2, m, smooth_model) >= 0.0
    assert cross_coupling_gap(m, m, smooth_model) == 0.0


def test_run_selection_experiment_validates_ladder():
    with pytest.raises(ValueError):
        run_selection_experiment(exdp_model(), TorusGrid(64), [0.1, 0.2])


def test_run_selection_experiment_small(smooth_model):
    g = TorusGrid(256)
    sweep, verdict = run_selection_experiment(exdp_model(), g, [0.2, 0.1],
                                              tol_abs=1e-10)
    assert len(sweep.rows) == 2
    assert not any(r.failed for r in sweep.rows)
    for r in sweep.rows:
        assert r.delta == r.eps and r.sigma == 0.0
        assert abs(r.mass - 1.0) < 1e-8
        assert r.min_m > 0.0
        assert r.coupling_gap >= 0.0
    assert verdict is not None
    assert verdict.terminal_eps == 0.1
    assert verdict.nearest_label in {"tilde", "hat", "zero",
                                     "tilde_x0.25", "tilde_x0.5", "tilde_x0.75"}


def test_grid_mismatch_errors(oracle_512, smooth_model):
    g, m = oracle_512
    other = GridField.constant(TorusGrid(64), 1.0)
    with pytest.raises(ValueError):
        mather_pair(lambda x, v: x, other, m)
    with pytest.raises(ValueError):
        cross_coupling_gap(other, m, smooth_model)
    with pytest.raises(ValueError):
        selection_functional(other, m)
