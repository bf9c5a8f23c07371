"""Exact oracle solutions for the two explicit torus examples.

Both examples have g(m) = m, ergodic constant 0, and a density vanishing on
part of the torus, so the limit value function is non-unique.  Candidates are
specified through their gradients; interval boundaries are resolved with ties
assigned to the left interval (a measure-zero choice).

Quadrature constants below were frozen from an adaptive-quadrature run
(scipy.integrate.quad, abs err < 1e-10) and serve as regression anchors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridField, TorusGrid, integrate

# Frozen adaptive-quadrature values for the cos2pi example.
U_TILDE_MAX = 0.47798879748612494      # tilde_u(1/2) = int_{1/4}^{1/2} sqrt(-2 pi cos 2 pi s) ds
INT_U_TILDE = 0.09963528368443993      # int_0^1 tilde_u dx
INT_U_HAT = -0.02746401966941684       # int_0^1 hat_u dx
F_TILDE = -INT_U_TILDE                 # selection functional of tilde_u (support integral is 0)
F_HAT = -INT_U_HAT


class NotPeriodic(ValueError):
    """Gradient candidate fails the zero-mean compatibility check."""


@dataclass(frozen=True)
class CandidateSolution:
    """Candidate limit value function, stored as gradient plus antiderivative."""

    label: str
    u_x: GridField
    u: GridField
    m: GridField
    hbar: float


def _interval(x: np.ndarray, a: float, b: float) -> np.ndarray:
    # tie at a boundary belongs to the interval on its left
    return (x > a) & (x <= b)


def antiderivative(u_x: GridField, tol: float | None = None) -> GridField:
    """Cumulative trapezoid with u(0) = 0; requires near-zero mean gradient."""
    grid = u_x.grid
    if grid.d != 1:
        raise ValueError("antiderivative is 1d only")
    if tol is None:
        tol = 20.0 * grid.h
    mean = integrate(u_x)
    if abs(mean) > tol:
        raise NotPeriodic(f"mean of u_x is {mean:.3e}, above tolerance {tol:.1e}")
    v = u_x.values
    avg = 0.5 * (v[:-1] + v[1:])
    u = np.concatenate([[0.0], np.cumsum(avg) * grid.h])
    return GridField(grid, u)


def example_bbb(grid: TorusGrid):
    """Oracle for V = pi*cos(4 pi x), g(m) = m: density, constant, two candidates."""
    if grid.d != 1:
        raise ValueError("oracle examples are 1d")
    x = grid.coordinates()
    m = GridField(grid, np.maximum(np.pi * np.cos(4 * np.pi * x), 0.0))
    root = np.sqrt(np.maximum(2.0 * (-np.pi * np.cos(4 * np.pi * x)), 0.0))
    hat_x = root * (_interval(x, 1 / 8, 1 / 4) | _interval(x, 5 / 8, 3 / 4)) - root * (
        _interval(x, 1 / 4, 3 / 8) | _interval(x, 3 / 4, 7 / 8)
    )
    tilde_x = root * _interval(x, 1 / 8, 3 / 8) - root * _interval(x, 5 / 8, 7 / 8)
    candidates = []
    for label, ux in (("hat", hat_x), ("tilde", tilde_x)):
        uxf = GridField(grid, ux)
        candidates.append(
            CandidateSolution(label=label, u_x=uxf, u=antiderivative(uxf), m=m, hbar=0.0)
        )
    return m, 0.0, candidates


def _exlp_root(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(-2.0 * np.pi * np.cos(2 * np.pi * x), 0.0))


def example_exlp(grid: TorusGrid):
    """Oracle for V = pi*cos(2 pi x), g(m) = m: density, constant, two candidates."""
    if grid.d != 1:
        raise ValueError("oracle examples are 1d")
    x = grid.coordinates()
    m = GridField(grid, np.maximum(np.pi * np.cos(2 * np.pi * x), 0.0))
    root = _exlp_root(x)
    tilde_x = root * _interval(x, 1 / 4, 1 / 2) - root * _interval(x, 1 / 2, 3 / 4)
    hat_x = -root * (_interval(x, 1 / 4, 3 / 8) | _interval(x, 1 / 2, 5 / 8)) + root * (
        _interval(x, 3 / 8, 1 / 2) | _interval(x, 5 / 8, 3 / 4)
    )
    candidates = []
    for label, ux in (("tilde", tilde_x), ("hat", hat_x)):
        uxf = GridField(grid, ux)
        candidates.append(
            CandidateSolution(label=label, u_x=uxf, u=antiderivative(uxf), m=m, hbar=0.0)
        )
    return m, 0.0, candidates


def is_admissible(u_x: GridField, tol: float | None = None):
    """Admissibility for the cos2pi example: u_x vanishes off (1/4, 3/4] and
    u_x^2 <= -2 pi cos(2 pi x) inside.  Returns (ok, violation list)."""
    grid = u_x.grid
    if grid.d != 1:
        raise ValueError("admissibility check is 1d")
    if tol is None:
        tol = 1e-9
    x = grid.coordinates()
    inside = _interval(x, 1 / 4, 3 / 4)
    v = u_x.values
    bound = -2.0 * np.pi * np.cos(2 * np.pi * x)
    violations = []
    for i in np.nonzero(~inside & (np.abs(v) > tol))[0]:
        violations.append((int(i), float(x[i]), f"|u_x|={abs(v[i]):.3e} on zero region"))
    for i in np.nonzero(inside & (v**2 > bound + tol))[0]:
        violations.append(
            (int(i), float(x[i]), f"u_x^2={v[i]**2:.3e} exceeds bound {bound[i]:.3e}")
        )
    return len(violations) == 0, violations


def candidate_catalog(grid: TorusGrid, scales=(0.25, 0.5, 0.75)) -> list[CandidateSolution]:
    """Catalog for the cos2pi example: tilde, hat, the zero candidate, and
    admissible down-scalings of tilde's gradient."""
    m, hbar, (tilde, hat) = example_exlp(grid)
    zero = GridField.constant(grid, 0.0)
    catalog = [
        tilde,
        hat,
        CandidateSolution(label="zero", u_x=zero, u=zero, m=m, hbar=hbar),
    ]
    for s in scales:
        ux = GridField(grid, s * tilde.u_x.values)
        catalog.append(
            CandidateSolution(label=f"tilde_x{s:g}", u_x=ux, u=antiderivative(ux), m=m, hbar=hbar)
        )
    return catalog
