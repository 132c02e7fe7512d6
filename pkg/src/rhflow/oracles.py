"""Closed-form reference solutions used as ground truth by tests.

Scenarios with exact solutions:

* flat_stationary      everything constant (fixed point of the flow)
* torus_list           flat torus, circle-valued phi with winding w:
                       the base coefficient grows as a(t) = a0 + alpha w^2 t
* shrinking_sphere     round S^n: coefficient a0 - 2(n-1) t
* shrinking_cylinder   S^1 x S^{n-1}: psi(t)^2 = psi0^2 - 2(n-2) t

The perturbed scenarios (perturbed_cylinder, perturbed_torus) have no
closed form; they only define initial data for the property-based
monitors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Factor, Fiber, Grid, HomogeneousState, WarpedState

SCENARIO_IDS = ("flat_stationary", "torus_list", "shrinking_sphere",
                "shrinking_cylinder", "perturbed_cylinder", "perturbed_torus")


@dataclass(frozen=True)
class Scenario:
    """Named initial-data family with its parameters."""

    id: str
    n: int
    alpha: float
    a0: float = 1.0
    psi0: float = 1.0
    winding: int = 1
    amplitude: float = 0.0

    def __post_init__(self):
        if self.id not in SCENARIO_IDS:
            raise ValueError(f"unknown scenario id {self.id!r}; "
                             f"expected one of {SCENARIO_IDS}")
        if self.a0 <= 0.0 or self.psi0 <= 0.0:
            raise ValueError("a0 and psi0 must be positive")
        if abs(self.amplitude) >= min(1.0, self.psi0, math.sqrt(self.a0)):
            raise ValueError("perturbation amplitude too large for positivity")
        if self.id == "shrinking_sphere" and self.n < 2:
            raise ValueError("shrinking_sphere needs n >= 2")
        if self.id in ("shrinking_cylinder", "perturbed_cylinder") and self.n < 3:
            raise ValueError("cylinder scenarios need n >= 3")


def _torus_a(scn: Scenario, t: float) -> float:
    # da/dt = alpha * w^2 from dg_xx/dt = alpha * phi_x^2
    return scn.a0 + scn.alpha * scn.winding**2 * t


def singular_time(scn: Scenario) -> float | None:
    """Blow-up time of the closed-form solution, or None (no blow-up or
    no closed form)."""
    if scn.id == "shrinking_sphere":
        return scn.a0 / (2.0 * (scn.n - 1))
    if scn.id == "shrinking_cylinder":
        return scn.psi0**2 / (2.0 * (scn.n - 2))
    return None


def _check_time(scn: Scenario, t: float):
    t_sing = singular_time(scn)
    if t_sing is not None and t >= t_sing:
        raise ValueError(f"t={t} is at or past the singular time {t_sing}")


def exact_warped_state(scn: Scenario, t: float, m: int = 64) -> WarpedState:
    """Closed-form warped state at time t (grid of m points)."""
    _check_time(scn, t)
    x = Grid(m).x
    ones = np.ones(m)
    if scn.id == "flat_stationary":
        return WarpedState(scn.n, Fiber.FLAT_TORUS, scn.alpha, ones, ones.copy(), 0,
                           np.zeros(m), t)
    if scn.id == "torus_list":
        if scn.n != 2:
            raise ValueError("the warped torus_list representation uses n=2")
        f = math.sqrt(_torus_a(scn, t)) * ones
        return WarpedState(2, Fiber.FLAT_TORUS, scn.alpha, f, ones.copy(),
                           scn.winding, np.zeros(m), t)
    if scn.id == "shrinking_cylinder":
        psi = math.sqrt(scn.psi0**2 - 2.0 * (scn.n - 2) * t) * ones
        return WarpedState(scn.n, Fiber.ROUND_SPHERE, scn.alpha, ones.copy(), psi, 0,
                           np.zeros(m), t)
    if scn.id == "perturbed_cylinder":
        if t != 0.0:
            raise ValueError(f"scenario {scn.id!r} has no closed form for t > 0")
        psi = scn.psi0 + scn.amplitude * np.sin(x)
        return WarpedState(scn.n, Fiber.ROUND_SPHERE, scn.alpha, ones.copy(), psi, 0,
                           np.zeros(m), 0.0)
    if scn.id == "perturbed_torus":
        if t != 0.0:
            raise ValueError(f"scenario {scn.id!r} has no closed form for t > 0")
        f = math.sqrt(scn.a0) * ones
        u = scn.amplitude * np.sin(x)
        return WarpedState(2, Fiber.FLAT_TORUS, scn.alpha, f, ones.copy(),
                           scn.winding, u, 0.0)
    raise ValueError(f"scenario {scn.id!r} has no warped representation")


def exact_homogeneous_state(scn: Scenario, t: float) -> HomogeneousState:
    """Closed-form homogeneous state at time t."""
    _check_time(scn, t)
    if scn.id == "flat_stationary":
        factors = tuple(Factor(1.0, Fiber.FLAT_TORUS, 1) for _ in range(scn.n))
        return HomogeneousState(scn.n, scn.alpha, factors, t)
    if scn.id == "torus_list":
        if scn.n != 2:
            raise ValueError("the homogeneous torus_list representation uses n=2")
        factors = (Factor(_torus_a(scn, t), Fiber.FLAT_TORUS, 1, slope=float(scn.winding)),
                   Factor(1.0, Fiber.FLAT_TORUS, 1))
        return HomogeneousState(2, scn.alpha, factors, t)
    if scn.id == "shrinking_sphere":
        a = scn.a0 - 2.0 * (scn.n - 1) * t
        return HomogeneousState(scn.n, scn.alpha,
                                (Factor(a, Fiber.ROUND_SPHERE, scn.n),), t)
    if scn.id == "shrinking_cylinder":
        psi_sq = scn.psi0**2 - 2.0 * (scn.n - 2) * t
        factors = (Factor(1.0, Fiber.FLAT_TORUS, 1),
                   Factor(psi_sq, Fiber.ROUND_SPHERE, scn.n - 1))
        return HomogeneousState(scn.n, scn.alpha, factors, t)
    raise ValueError(f"scenario {scn.id!r} has no homogeneous representation")


def exact_state(scn: Scenario, t: float, m: int = 64):
    """Closed-form state at time t: warped where the ansatz applies,
    homogeneous for the round sphere."""
    if scn.id == "shrinking_sphere":
        return exact_homogeneous_state(scn, t)
    return exact_warped_state(scn, t, m)


def initial_state(scn: Scenario, m: int = 64):
    return exact_state(scn, 0.0, m)
