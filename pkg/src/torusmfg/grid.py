"""Periodic uniform grids on the flat torus [0,1)^d (d = 1 or 2) and discrete calculus.

All operators use second-order central differences with periodic wrap.  The
central divergence is the exact negative adjoint of the central gradient under
the rectangle-rule inner product, so discrete integration by parts holds to
rounding.  Quadrature is the rectangle rule, which is spectrally accurate for
smooth periodic integrands.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic mesh with n nodes per axis, spacing h = 1/n."""

    n: int
    d: int = 1

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.d}")
        if self.n < 2:
            raise ValueError(f"need at least 2 nodes per axis, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def num_nodes(self) -> int:
        return self.n**self.d

    def coordinates(self) -> np.ndarray:
        """Node coordinates; shape (n,) in 1d, (n, n, 2) in 2d."""
        x = np.arange(self.n) * self.h
        if self.d == 1:
            return x
        X, Y = np.meshgrid(x, x, indexing="ij")
        return np.stack([X, Y], axis=-1)


@dataclass(frozen=True)
class GridField:
    """Scalar field sampled at grid nodes.  Values are immutable."""

    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: TorusGrid, fn) -> "GridField":
        x = grid.coordinates()
        if grid.d == 1:
            return cls(grid, fn(x))
        return cls(grid, fn(x[..., 0], x[..., 1]))

    @classmethod
    def constant(cls, grid: TorusGrid, c: float) -> "GridField":
        return cls(grid, np.full(grid.shape, float(c)))


VectorField = tuple  # length-d tuple of GridField components


def _check_same_grid(*fields: GridField) -> TorusGrid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise ValueError("fields live on different grids")
    return grid


def gradient_central(f: GridField) -> VectorField:
    """Second-order central gradient with periodic wrap; one component per axis."""
    g, h = f.grid, f.grid.h
    comps = []
    for axis in range(g.d):
        dv = (np.roll(f.values, -1, axis=axis) - np.roll(f.values, 1, axis=axis)) / (2 * h)
        comps.append(GridField(g, dv))
    return tuple(comps)


def divergence_central(F: Sequence[GridField]) -> GridField:
    """Central divergence, the exact negative adjoint of gradient_central."""
    grid = _check_same_grid(*F)
    if len(F) != grid.d:
        raise ValueError(f"expected {grid.d} components, got {len(F)}")
    h = grid.h
    out = np.zeros(grid.shape)
    for axis, comp in enumerate(F):
        out += (np.roll(comp.values, -1, axis=axis) - np.roll(comp.values, 1, axis=axis)) / (2 * h)
    return GridField(grid, out)


def laplacian(f: GridField) -> GridField:
    """Standard periodic 3-point (1d) / 5-point (2d) Laplacian."""
    g, h = f.grid, f.grid.h
    out = np.zeros(g.shape)
    for axis in range(g.d):
        out += (
            np.roll(f.values, -1, axis=axis) - 2 * f.values + np.roll(f.values, 1, axis=axis)
        ) / h**2
    return GridField(g, out)


def integrate(f: GridField) -> float:
    """Rectangle rule: h^d * sum of nodal values."""
    return float(np.sum(f.values)) * f.grid.h**f.grid.d


class FieldNorms(NamedTuple):
    sup: float
    l2: float
    l1: float
    osc: float


def norms(f: GridField) -> FieldNorms:
    v = f.values
    w = f.grid.h**f.grid.d
    return FieldNorms(
        sup=float(np.max(np.abs(v))),
        l2=float(np.sqrt(np.sum(v**2) * w)),
        l1=float(np.sum(np.abs(v)) * w),
        osc=float(np.max(v) - np.min(v)),
    )


def to_csv(f: GridField, path) -> None:
    """Serialize as `x[,y],value` rows in row-major node order."""
    g = f.grid
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if g.d == 1:
            writer.writerow(["x", "value"])
            x = g.coordinates()
            for xi, vi in zip(x, f.values):
                writer.writerow([repr(float(xi)), repr(float(vi))])
        else:
            writer.writerow(["x", "y", "value"])
            xy = g.coordinates()
            for i in range(g.n):
                for j in range(g.n):
                    writer.writerow(
                        [repr(float(xy[i, j, 0])), repr(float(xy[i, j, 1])), repr(float(f.values[i, j]))]
                    )


def from_csv(path) -> GridField:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [list(map(float, r)) for r in reader if r]
    d = len(header) - 1
    vals = np.array([r[-1] for r in rows])
    if d == 1:
        grid = TorusGrid(n=len(rows), d=1)
        return GridField(grid, vals)
    n = int(round(np.sqrt(len(rows))))
    grid = TorusGrid(n=n, d=2)
    return GridField(grid, vals.reshape(n, n))
