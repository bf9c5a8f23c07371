"""Problem data: power-law coupling, potential, and regularization parameters.

The coupling is g(m) = kappa * m**alpha with kappa, alpha > 0, which is
strictly increasing on (0, inf) with g(0+) = 0.  Its inverse is extended
below the range of g by a softplus ramp so that Newton iterates can leave
the classical regime without losing C^1 smoothness.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .grid import GridField, TorusGrid, norms


class DomainError(ValueError):
    """Argument left the domain of the (unregularized) inverse coupling."""


@dataclass(frozen=True)
class Coupling:
    """Power-law coupling g(m) = kappa * m**alpha."""

    kappa: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.kappa <= 0 or self.alpha <= 0:
            raise ValueError("kappa and alpha must be positive")

    @property
    def beta(self) -> float:
        """Lower-growth exponent of g': g'(z) >= C1 * z**beta."""
        return self.alpha - 1.0

    def g(self, m):
        return self.kappa * np.asarray(m, dtype=float) ** self.alpha

    def g_prime(self, m):
        m = np.asarray(m, dtype=float)
        return self.kappa * self.alpha * m ** (self.alpha - 1.0)

    def g_second(self, m):
        m = np.asarray(m, dtype=float)
        return self.kappa * self.alpha * (self.alpha - 1.0) * m ** (self.alpha - 2.0)

    def g_inverse(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise DomainError("g_inverse requires s >= 0")
        return (s / self.kappa) ** (1.0 / self.alpha)

    def g_inverse_prime(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s <= 0):
            raise DomainError("g_inverse_prime requires s > 0")
        return (s / self.kappa) ** (1.0 / self.alpha - 1.0) / (self.kappa * self.alpha)


POTENTIAL_KINDS = ("zero", "sine", "cos4pi", "cos2pi", "table")


@dataclass(frozen=True)
class Potential:
    """Closed-form potential on the 1-torus, or a custom node table."""

    kind: str = "zero"
    c: float = 0.0
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "table" and self.table is None:
            raise ValueError("table potential needs sample values")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "sine":
            return self.c * np.sin(2 * np.pi * x)
        if self.kind == "cos4pi":
            return np.pi * np.cos(4 * np.pi * x)
        if self.kind == "cos2pi":
            return np.pi * np.cos(2 * np.pi * x)
        raise ValueError("table potential has no closed form; use sample()")

    def sample(self, grid: TorusGrid) -> GridField:
        if self.kind == "table":
            return GridField(grid, np.asarray(self.table, dtype=float))
        return GridField(grid, self(grid.coordinates()))

    def oscillation(self, grid: TorusGrid) -> float:
        return norms(self.sample(grid)).osc


@dataclass(frozen=True)
class Regularization:
    """sigma: artificial viscosity; delta: inverse-smoothing width."""

    sigma: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if self.sigma < 0 or self.delta < 0:
            raise ValueError("sigma and delta must be >= 0")


@dataclass(frozen=True)
class MFGModel:
    coupling: Coupling = field(default_factory=Coupling)
    potential: Potential = field(default_factory=Potential)


def smoothed_inverse(s, coupling: Coupling, delta: float, positive_part: bool = False):
    """Inverse coupling extended below the range of g.

    For delta > 0 returns g^{-1}(softramp_delta(s)) with
    softramp_delta(s) = delta * log(1 + exp(s/delta)), a C^inf, strictly
    positive, monotone ramp converging pointwise to s^+ as delta -> 0.
    For delta = 0 returns g^{-1}(s); nonpositive s raises DomainError unless
    positive_part is set, in which case the value is clamped to 0.
    """
    s = np.asarray(s, dtype=float)
    if delta == 0.0:
        if np.any(s <= 0):
            if not positive_part:
                raise DomainError("s outside the range of g and delta = 0")
            return coupling.g_inverse(np.maximum(s, 0.0))
        return coupling.g_inverse(s)
    ramp = delta * np.logaddexp(0.0, s / delta)
    return coupling.g_inverse(ramp)


def smoothed_inverse_prime(s, coupling: Coupling, delta: float):
    """d/ds of smoothed_inverse (chain rule through the softplus ramp)."""
    s = np.asarray(s, dtype=float)
    if delta == 0.0:
        if np.any(s <= 0):
            raise DomainError("s outside the range of g and delta = 0")
        return coupling.g_inverse_prime(s)
    ramp = delta * np.logaddexp(0.0, s / delta)
    sigmoid = 0.5 * (1.0 + np.tanh(0.5 * s / delta))
    return coupling.g_inverse_prime(ramp) * sigmoid


def check_assumption_osc(coupling: Coupling, potential: Potential, grid: TorusGrid) -> bool:
    """True iff g(1) - osc V lies in the range of g over (0, inf).

    For the power law, inf g = g(0+) = 0, so the condition is
    g(1) - osc V > 0.
    """
    osc = potential.oscillation(grid)
    return float(coupling.g(1.0)) - osc > 0.0


def model_from_config(cfg: dict) -> tuple[MFGModel, Regularization]:
    """Build model and regularization from the JSON config layout.

    Keys: coupling: {kappa, alpha}, potential: {kind, c}, regularization:
    {sigma, delta}.  Missing blocks fall back to defaults.
    """
    coup = cfg.get("coupling", {})
    pot = cfg.get("potential", {})
    reg = cfg.get("regularization", {})
    coupling = Coupling(kappa=float(coup.get("kappa", 1.0)), alpha=float(coup.get("alpha", 1.0)))
    table = pot.get("table")
    potential = Potential(
        kind=pot.get("kind", "zero"),
        c=float(pot.get("c", 0.0)),
        table=None if table is None else np.asarray(table, dtype=float),
    )
    regularization = Regularization(
        sigma=float(reg.get("sigma", 0.0)), delta=float(reg.get("delta", 0.0))
    )
    return MFGModel(coupling, potential), regularization


def model_from_json(path) -> tuple[MFGModel, Regularization]:
    with open(path) as fh:
        return model_from_config(json.load(fh))
