import numpy as np
import pytest

from torusmfg.grid import (
    FieldNorms,
    GridField,
    TorusGrid,
    divergence_central,
    from_csv,
    gradient_central,
    integrate,
    laplacian,
    norms,
    to_csv,
)

from conftest import smooth_random_field


def test_grid_properties():
    g = TorusGrid(8)
    assert g.h == 0.125
    assert g.shape == (8,)
    assert g.num_nodes == 8
    x = g.coordinates()
    assert x[0] == 0.0 and x[-1] == 1.0 - g.h

    g2 = TorusGrid(4, d=2)
    assert g2.shape == (4, 4)
    assert g2.num_nodes == 16
    assert g2.coordinates().shape == (4, 4, 2)


def test_grid_validation():
    with pytest.raises(ValueError):
        TorusGrid(1)
    with pytest.raises(ValueError):
        TorusGrid(8, d=3)


def test_field_validation():
    g = TorusGrid(8)
    with pytest.raises(ValueError):
        GridField(g, np.zeros(7))
    with pytest.raises(ValueError):
        GridField(g, np.full(8, np.inf))
    f = GridField(g, np.zeros(8))
    with pytest.raises(ValueError):
        f.values[0] = 1.0  # immutable


def test_constant_and_from_function():
    g = TorusGrid(16)
    c = GridField.constant(g, 2.5)
    assert np.all(c.values == 2.5)
    f = GridField.from_function(g, lambda x: np.sin(2 * np.pi * x))
    assert f.values[4] == pytest.approx(1.0)


def test_gradient_exact_on_trig_modes():
    # central differences are exact on the checkerboard-free trig space only
    # up to O(h^2); check the second-order rate
    errs = []
    for n in (64, 128):
        g = TorusGrid(n)
        f = GridField.from_function(g, lambda x: np.sin(2 * np.pi * x))
        (df,) = gradient_central(f)
        exact = 2 * np.pi * np.cos(2 * np.pi * g.coordinates())
        errs.append(np.max(np.abs(df.values - exact)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_divergence_is_negative_adjoint_of_gradient():
    for d in (1, 2):
        g = TorusGrid(32, d=d)
        rng = np.random.default_rng(0)
        f = GridField(g, rng.standard_normal(g.shape))
        F = tuple(GridField(g, rng.standard_normal(g.shape)) for _ in range(d))
        lhs = sum(integrate(GridField(g, df.values * Fi.values))
                  for df, Fi in zip(gradient_central(f), F))
        rhs = -integrate(GridField(g, f.values * divergence_central(F).values))
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_laplacian_consistency():
    g = TorusGrid(128)
    f = GridField.from_function(g, lambda x: np.cos(2 * np.pi * x))
    exact = -(2 * np.pi) ** 2 * f.values
    assert np.max(np.abs(laplacian(f).values - exact)) < 0.02


def test_integrate_spectral_accuracy():
    g = TorusGrid(32)
    f = GridField.from_function(g, lambda x: 1.0 + np.sin(2 * np.pi * x))
    assert integrate(f) == pytest.approx(1.0, abs=1e-14)


def test_norms():
    g = TorusGrid(4)
    f = GridField(g, np.array([1.0, -2.0, 0.0, 1.0]))
    nm = norms(f)
    assert isinstance(nm, FieldNorms)
    assert nm.sup == 2.0
    assert nm.l1 == pytest.approx(1.0)
    assert nm.l2 == pytest.approx(np.sqrt(6.0 / 4.0))
    assert nm.osc == 3.0


def test_csv_roundtrip_1d(tmp_path):
    g = TorusGrid(17)
    f = smooth_random_field(g, seed=3)
    path = tmp_path / "f.csv"
    to_csv(f, path)
    back = from_csv(path)
    assert back.grid == g
    np.testing.assert_array_equal(back.values, f.values)


def test_csv_roundtrip_2d(tmp_path):
    g = TorusGrid(5, d=2)
    rng = np.random.default_rng(1)
    f = GridField(g, rng.standard_normal(g.shape))
    path = tmp_path / "f.csv"
    to_csv(f, path)
    back = from_csv(path)
    assert back.grid == g
    np.testing.assert_array_equal(back.values, f.values)
