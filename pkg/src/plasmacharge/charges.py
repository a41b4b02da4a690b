"""Point charges: state, forces, velocity-Verlet stepping and energy.

The acceleration of charge ``alpha`` is

    E(xi_alpha) + sum_{beta != alpha} grad_x G_#(xi_alpha, xi_beta) + grad H_#(xi_alpha)

where ``E`` is an optional external (plasma) field and
``H_# = R_#/2 - int G_# h_cha dS`` is the charge-boundary potential.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ChargeCollision, DomainError
from .greens import BoundaryDensity, GreenEvaluator

FieldFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class ChargeState:
    """Positions ``xi`` and velocities ``eta`` of ``M`` unit point charges."""

    xi: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        self.xi = np.array(self.xi, dtype=float).reshape(-1, 2)
        self.eta = np.array(self.eta, dtype=float).reshape(-1, 2)
        if self.xi.shape != self.eta.shape:
            raise ValueError("xi and eta must have the same shape")

    @property
    def M(self) -> int:
        return self.xi.shape[0]

    def copy(self) -> "ChargeState":
        return ChargeState(self.xi.copy(), self.eta.copy())

    @classmethod
    def empty(cls) -> "ChargeState":
        return cls(np.zeros((0, 2)), np.zeros((0, 2)))


def check_separation(state: ChargeState, domain, factor: float = 1e-6) -> None:
    """Raise if a charge is at the wall or on top of another charge."""
    if state.M == 0 or domain is None:
        return
    tol = factor * domain.inradius
    _, d = domain.project(state.xi)
    if np.any(d <= tol):
        raise ChargeCollision(
            f"charge reached boundary (distance {np.min(d):.3e})", "continuation-criterion"
        )
    if state.M > 1:
        diff = state.xi[:, None, :] - state.xi[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        np.fill_diagonal(dist, np.inf)
        if np.min(dist) <= tol:
            raise ChargeCollision(
                f"continuation criterion violated: charges at distance {np.min(dist):.3e}"
            )


def charge_forces(
    state: ChargeState,
    evaluator: GreenEvaluator,
    h_cha: BoundaryDensity | None = None,
    plasma_field: FieldFn | None = None,
) -> np.ndarray:
    """Accelerations of all charges, shape ``(M, 2)``."""
    if state.M == 0:
        return np.zeros((0, 2))
    check_separation(state, evaluator.domain)
    acc = evaluator.pair_field(state.xi, np.ones(state.M))
    acc = acc + np.atleast_2d(evaluator.grad_H(state.xi, h_cha))
    if plasma_field is not None:
        acc = acc + plasma_field(state.xi)
    return acc


def charge_force(
    state: ChargeState,
    alpha: int,
    evaluator: GreenEvaluator,
    plasma_field: FieldFn | None = None,
    h_cha: BoundaryDensity | None = None,
) -> np.ndarray:
    """Acceleration of charge ``alpha``."""
    return charge_forces(state, evaluator, h_cha, plasma_field)[alpha]


def step_charges(
    state: ChargeState,
    evaluator: GreenEvaluator,
    dt: float,
    h_cha: BoundaryDensity | None = None,
    forces: np.ndarray | None = None,
    plasma_field: FieldFn | None = None,
) -> ChargeState:
    """One kick-drift-kick step.

    ``forces`` are the accelerations at the current state; they are
    recomputed when omitted.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if forces is None:
        forces = charge_forces(state, evaluator, h_cha, plasma_field)
    eta = state.eta + 0.5 * dt * forces
    xi = state.xi + dt * eta
    if evaluator.domain is not None and np.any(evaluator.domain.level(xi) >= 0):
        raise ChargeCollision("charge reached boundary")
    new = ChargeState(xi, eta)
    new.eta = new.eta + 0.5 * dt * charge_forces(new, evaluator, h_cha, plasma_field)
    return new


def charge_energy(
    state: ChargeState, evaluator: GreenEvaluator, h_cha: BoundaryDensity | None = None
) -> float:
    """Energy of the charge-only system.

    ``sum_a (|eta_a|^2 / 2 - H_#(xi_a)) - 1/2 sum_{a != b} G_#(xi_a, xi_b)``.
    """
    if state.M == 0:
        return 0.0
    kinetic = 0.5 * float(np.sum(state.eta**2))
    h = np.atleast_1d(evaluator.H(state.xi, h_cha))
    pair = evaluator.pair_potential(state.xi, np.ones(state.M))
    return kinetic - float(np.sum(h)) - 0.5 * float(np.sum(pair))


@dataclass
class ChargeTrajectory:
    """Sampled output of :func:`integrate_charges`."""

    times: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    energy: np.ndarray
    status: str = "ok"
    reason: str = ""
    extras: dict = field(default_factory=dict)

    def min_boundary_distance(self, domain) -> float:
        _, d = domain.project(self.xi.reshape(-1, 2))
        return float(np.min(d))


def integrate_charges(
    state: ChargeState,
    evaluator: GreenEvaluator,
    dt: float,
    T: float,
    h_cha: BoundaryDensity | None = None,
    stop_distance: float | None = None,
    stride: int = 1,
) -> ChargeTrajectory:
    """Integrate the charge-only system up to time ``T``.

    Parameters
    ----------
    stop_distance : float, optional
        Stop cleanly (status ``"boundary collision"``) once a charge is
        closer than this to the wall. Used for Dirichlet runs, where
        charges are attracted to the boundary.
    stride : int
        Record every ``stride``-th step.
    """
    domain = evaluator.domain
    n_steps = int(round(T / dt))
    times, xis, etas, energies = [0.0], [state.xi.copy()], [state.eta.copy()], []
    energies.append(charge_energy(state, evaluator, h_cha))
    forces = charge_forces(state, evaluator, h_cha)
    status, reason = "ok", ""
    cur = state
    for k in range(1, n_steps + 1):
        try:
            eta = cur.eta + 0.5 * dt * forces
            xi = cur.xi + dt * eta
            if domain is not None and np.any(domain.level(xi) >= 0):
                raise ChargeCollision("charge reached boundary")
            nxt = ChargeState(xi, eta)
            if stop_distance is not None and domain is not None:
                _, d = domain.project(nxt.xi)
                if np.min(d) < stop_distance:
                    status, reason = "boundary collision", f"charge within {stop_distance:g} of the wall"
                    cur = nxt
                    times.append(k * dt)
                    xis.append(cur.xi.copy())
                    etas.append(cur.eta.copy())
                    energies.append(np.nan)
                    break
            forces = charge_forces(nxt, evaluator, h_cha)
            nxt.eta = nxt.eta + 0.5 * dt * forces
            cur = nxt
        except (ChargeCollision, DomainError) as exc:
            status, reason = "boundary collision", str(exc)
            break
        if k % stride == 0 or k == n_steps:
            times.append(k * dt)
            xis.append(cur.xi.copy())
            etas.append(cur.eta.copy())
            energies.append(charge_energy(cur, evaluator, h_cha))
    return ChargeTrajectory(
        times=np.array(times),
        xi=np.array(xis),
        eta=np.array(etas),
        energy=np.array(energies),
        status=status,
        reason=reason,
    )
