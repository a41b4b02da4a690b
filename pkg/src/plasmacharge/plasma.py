"""Macro-particle plasma coupled to point charges.

The distribution function is represented by weighted particles. Together
with the point charges (weight 1) they form one set of sources that
interact through the domain Green function. The plasma also feels the
Neumann boundary data ``h_N`` through ``-grad int G_N(x, y) h_N(y) dS_y``;
the charges feel that term too, plus their boundary force ``grad H_#``.

Time stepping is kick-drift-kick. During the drift particles move on
straight lines and boundary crossings are resolved event by event, either
by specular reflection or by removal (absorption).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .charges import ChargeState, check_separation
from .errors import ChargeCollision, ConfigError, GrazingTrap, PlasmaChargeCollision
from .encounters import EncounterIntegrator, find_groups
from .geometry import ConvexDomain, reflect_many
from .greens import BoundaryDensity, GreenEvaluator

MAX_BOUNCES = 32
_NUDGE = 1e-13


class BoundaryRule(enum.Enum):
    """Kinetic boundary condition for the plasma."""

    REFLECTION = "reflection"
    ABSORPTION = "absorption"

    @classmethod
    def parse(cls, value) -> "BoundaryRule":
        if isinstance(value, cls):
            return value
        for member in cls:
            if str(value).strip().lower() == member.value:
                return member
        raise ConfigError(f"unknown boundary rule {value!r}", "boundary-rule")


@dataclass
class ParticleEnsemble:
    """Weighted particles; ``alive`` is cleared by absorption.

    Attributes
    ----------
    positions, velocities : ndarray, shape (N, 2)
    weights : ndarray, shape (N,)
    alive : ndarray of bool, shape (N,)
    ids : ndarray of int, shape (N,)
        Stable labels used in snapshots and event logs.
    support_box : ndarray, shape (4, 2)
        Phase-space bounding box ``[(x0, x1), (y0, y1), (vx0, vx1), (vy0, vy1)]``
        of the initial data, used by the sup-norm proxy.
    """

    positions: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray
    alive: np.ndarray | None = None
    ids: np.ndarray | None = None
    support_box: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.array(self.positions, dtype=float).reshape(-1, 2)
        self.velocities = np.array(self.velocities, dtype=float).reshape(-1, 2)
        self.weights = np.array(self.weights, dtype=float).reshape(-1)
        n = self.positions.shape[0]
        if self.velocities.shape[0] != n or self.weights.shape[0] != n:
            raise ValueError("positions, velocities and weights must have equal length")
        if np.any(self.weights <= 0):
            raise ConfigError("particle weights must be positive", "plasma-weights")
        self.alive = np.ones(n, dtype=bool) if self.alive is None else np.array(self.alive, bool)
        self.ids = np.arange(n) if self.ids is None else np.array(self.ids, dtype=np.int64)
        if self.support_box is None and n:
            pv = np.hstack([self.positions, self.velocities])
            self.support_box = np.stack([pv.min(axis=0), pv.max(axis=0)], axis=1)

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    def copy(self) -> "ParticleEnsemble":
        return ParticleEnsemble(
            self.positions.copy(),
            self.velocities.copy(),
            self.weights.copy(),
            self.alive.copy(),
            self.ids.copy(),
            None if self.support_box is None else self.support_box.copy(),
        )

    @classmethod
    def empty(cls) -> "ParticleEnsemble":
        return cls(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0))


def sample_boxes(boxes, seed: int = 0) -> ParticleEnsemble:
    """Deterministic quasi-random particles in phase-space boxes.

    Each box is a dict with ranges ``x, y, vx, vy`` (pairs), a total
    ``weight`` and a particle ``count``. Points come from the unscrambled
    Halton sequence (so the lattice does not depend on the seed); the seed
    only permutes the particle order.
    """
    pos, vel, w, lo, hi = [], [], [], [], []
    for box in boxes:
        ranges = np.array([box["x"], box["y"], box["vx"], box["vy"]], dtype=float)
        count = int(box["count"])
        weight = float(box["weight"])
        if count <= 0 or weight <= 0:
            raise ConfigError("plasma boxes need positive count and weight", "plasma-box")
        if np.any(ranges[:, 1] < ranges[:, 0]):
            raise ConfigError("plasma box ranges must be increasing", "plasma-box")
        unit = qmc.Halton(d=4, scramble=False).random(count + 1)[1:]
        pts = ranges[:, 0] + unit * (ranges[:, 1] - ranges[:, 0])
        pos.append(pts[:, :2])
        vel.append(pts[:, 2:])
        w.append(np.full(count, weight / count))
        lo.append(ranges[:, 0])
        hi.append(ranges[:, 1])
    if not pos:
        return ParticleEnsemble.empty()
    order = np.random.default_rng(seed).permutation(sum(p.shape[0] for p in pos))
    box = np.stack([np.min(lo, axis=0), np.max(hi, axis=0)], axis=1)
    return ParticleEnsemble(
        np.vstack(pos)[order], np.vstack(vel)[order], np.concatenate(w)[order], support_box=box
    )


def density_moments(ensemble: ParticleEnsemble, p, bins: int = 32) -> float:
    """``p = 1``: alive weight. ``p = inf``: sup-norm proxy.

    The proxy is the largest bin weight divided by the bin volume of a
    ``bins^4`` histogram over the initial phase-space support box.
    """
    if p == 1:
        return float(np.sum(ensemble.weights[ensemble.alive]))
    if p in (np.inf, "inf"):
        box = ensemble.support_box
        if box is None:
            return 0.0
        width = np.where(box[:, 1] > box[:, 0], box[:, 1] - box[:, 0], 1.0)
        pv = np.hstack([ensemble.positions, ensemble.velocities])[ensemble.alive]
        idx = np.floor((pv - box[:, 0]) / width * bins).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < bins), axis=1)
        flat = np.ravel_multi_index(idx[inside].T, (bins,) * 4)
        counts = np.bincount(flat, weights=ensemble.weights[ensemble.alive][inside])
        return float(counts.max(initial=0.0) / np.prod(width / bins))
    raise ValueError("p must be 1 or inf")


# ----------------------------------------------------------------------
# fields and energy
# ----------------------------------------------------------------------
@dataclass
class FieldModel:
    """Forces and energy of particles plus point charges.

    Parameters
    ----------
    evaluator : GreenEvaluator
    h_plasma : BoundaryDensity, optional
        Neumann data ``h_N`` of the potential; acts on every source.
    h_charge : BoundaryDensity, optional
        Charge boundary data ``h_cha``; acts on the point charges only.
    self_image : bool
        Include each particle's interaction with its own image
        (``grad_1 gbar(x_i, x_i)`` in the force, ``-w_i^2 R(x_i) / 2`` in
        the energy). Only allowed without point charges.
    sigma : float
        Cutoff radius of the particle-particle fundamental kernel, 0 for
        the bare kernel.
    """

    evaluator: GreenEvaluator
    h_plasma: BoundaryDensity | None = None
    h_charge: BoundaryDensity | None = None
    self_image: bool = False
    sigma: float = 0.0

    def _sources(self, ensemble: ParticleEnsemble, charges: ChargeState):
        alive = ensemble.alive
        pts = np.vstack([ensemble.positions[alive], charges.xi])
        q = np.concatenate([ensemble.weights[alive], np.ones(charges.M)])
        return pts, q, int(np.count_nonzero(alive))

    def accelerations(self, ensemble: ParticleEnsemble, charges: ChargeState, sigma: float | None = None):
        """Accelerations of the alive particles and of the charges.

        ``sigma`` overrides the model's cutoff radius; the stepper uses it
        to leave the short-range remainder to the encounter integrator.
        """
        if self.self_image and charges.M:
            raise ConfigError("self-image terms need a charge-free system", "field-model")
        pts, q, n = self._sources(ensemble, charges)
        if pts.shape[0] == 0:
            return np.zeros((0, 2)), np.zeros((0, 2))
        ev = self.evaluator
        if self.sigma > 0 and charges.M:
            raise ConfigError("cutoff kernels are for charge-free systems", "field-model")
        sigma = self.sigma if sigma is None else sigma
        acc = ev.pair_field(pts, q, self_image=self.self_image, sigma=sigma)
        if self.h_plasma is not None and ev.neumann:
            acc = acc - np.atleast_2d(ev.grad_boundary_potential(self.h_plasma, pts))
        acc_p, acc_c = acc[:n], acc[n:]
        if charges.M:
            acc_c = acc_c + np.atleast_2d(ev.grad_H(charges.xi, self.h_charge))
        return acc_p, acc_c

    def potential(self, targets, ensemble: ParticleEnsemble, charges: ChargeState, skip=None):
        """``sum_j q_j G_#(x, x_j)`` at arbitrary targets (skipping mask ``skip``)."""
        pts, q, _ = self._sources(ensemble, charges)
        if skip is not None:
            keep = np.concatenate([~skip[ensemble.alive], np.ones(charges.M, bool)])
            pts, q = pts[keep], q[keep]
        return self.evaluator.potential_from(targets, pts, q, sigma=self.sigma)

    def energy_parts(self, ensemble: ParticleEnsemble, charges: ChargeState) -> dict:
        """Kinetic, interaction and charge-boundary parts of the energy."""
        alive = ensemble.alive
        w = ensemble.weights[alive]
        kinetic = 0.5 * float(np.sum(w * np.sum(ensemble.velocities[alive] ** 2, axis=1)))
        kinetic += 0.5 * float(np.sum(charges.eta**2))
        pts, q, _ = self._sources(ensemble, charges)
        interaction = 0.0
        charge_boundary = 0.0
        ev = self.evaluator
        if pts.shape[0]:
            pot = ev.pair_potential(pts, q, self_image=self.self_image, sigma=self.sigma)
            interaction = -0.5 * float(np.sum(q * pot))
            if self.h_plasma is not None and ev.neumann:
                interaction += float(np.sum(q * np.atleast_1d(ev.boundary_potential(self.h_plasma, pts))))
        if charges.M:
            charge_boundary = -float(np.sum(np.atleast_1d(ev.H(charges.xi, self.h_charge))))
        return {"kinetic": kinetic, "interaction": interaction, "charge_boundary": charge_boundary}

    def energy(self, ensemble: ParticleEnsemble, charges: ChargeState) -> float:
        parts = self.energy_parts(ensemble, charges)
        return parts["kinetic"] + parts["interaction"] + parts["charge_boundary"]


def field_at(
    ensemble: ParticleEnsemble,
    charges: ChargeState,
    evaluator: GreenEvaluator,
    x,
    self_index: int | None = None,
    h_N: BoundaryDensity | None = None,
):
    """Plasma-plus-charge field at probe point(s) ``x``.

    ``sum_{j != self} w_j grad G_#(x, x_j) + sum_a grad G_#(x, xi_a)
    - grad int G_#(x, y) h_N(y) dS_y``.
    """
    x = np.asarray(x, dtype=float)
    probes = np.atleast_2d(x)
    alive = ensemble.alive.copy()
    if self_index is not None:
        alive[self_index] = False
    pts = np.vstack([ensemble.positions[alive], charges.xi])
    q = np.concatenate([ensemble.weights[alive], np.ones(charges.M)])
    diff = probes[:, None, :] - pts[None, :, :]
    if np.any(np.all(diff == 0.0, axis=-1)):
        raise PlasmaChargeCollision("field singularity: probe coincides with a source", "diagonal")
    out = evaluator.field_from(probes, pts, q)
    if h_N is not None and evaluator.neumann:
        out = out - np.atleast_2d(evaluator.grad_boundary_potential(h_N, probes))
    return out[0] if x.ndim == 1 else out


# ----------------------------------------------------------------------
# transport
# ----------------------------------------------------------------------
@dataclass
class AbsorptionEvent:
    """A particle removed at the wall."""

    t: float
    id: int
    weight: float
    position: np.ndarray
    velocity: np.ndarray
    energy: float = 0.0


@dataclass
class DriftResult:
    events: list = field(default_factory=list)
    bounces: int = 0
    max_bounces: int = 0


def _nudge_inside(domain: ConvexDomain, x):
    # keep final positions strictly interior after roundoff at the wall
    level = domain.level(x)
    out = level >= 0
    if np.any(out):
        n = domain.normal_at(x[out])
        x[out] = x[out] - _NUDGE * n
    return x


def drift(
    ensemble: ParticleEnsemble,
    domain: ConvexDomain,
    rule: BoundaryRule,
    dt: float,
    acc: np.ndarray | None = None,
    exclude: np.ndarray | None = None,
) -> DriftResult:
    """Free flight of all alive particles over ``dt`` with wall events.

    Modifies ``ensemble`` in place. Absorbed particles get ``alive=False``
    and an :class:`AbsorptionEvent` whose ``t`` is the hit time measured
    from the start of the drift.

    Parameters
    ----------
    acc : (n_alive, 2) array, optional
        Accelerations used for the half kicks around this drift. A
        reflection at time ``s`` then also adds ``(a.n)(dt - 2 s) n`` to
        the velocity. Without it the bounce reflects the first half kick
        as well, which costs one order of accuracy per bounce.
    exclude : (N,) bool array, optional
        Particles left untouched (advanced elsewhere).
    """
    result = DriftResult()
    live = ensemble.alive if exclude is None else ensemble.alive & ~exclude
    idx = np.flatnonzero(live)
    if idx.size == 0:
        return result
    if acc is not None and exclude is not None:
        acc = acc[~exclude[ensemble.alive]]
    x = ensemble.positions[idx].copy()
    v = ensemble.velocities[idx].copy()
    rem = np.full(idx.size, float(dt))
    bounces = np.zeros(idx.size, dtype=np.int64)
    corr = np.zeros_like(v)
    active = np.arange(idx.size)
    for it in range(MAX_BOUNCES + 1):
        if active.size == 0:
            break
        xa, va, ra = x[active], v[active], rem[active]
        t_exit = domain.exit_time(xa, va)
        hit = t_exit <= ra
        free = ~hit
        x[active[free]] = xa[free] + ra[free, None] * va[free]
        rem[active[free]] = 0.0
        if not np.any(hit):
            active = active[:0]
            break
        if it == MAX_BOUNCES:
            bad = idx[active[hit]]
            raise GrazingTrap(
                f"grazing trap: particles {bad[:5].tolist()} exceeded {MAX_BOUNCES} reflections in one step"
            )
        h = active[hit]
        th = t_exit[hit]
        xh = xa[hit] + th[:, None] * va[hit]
        if rule is BoundaryRule.ABSORPTION:
            for k, j in enumerate(h):
                pid = idx[j]
                result.events.append(
                    AbsorptionEvent(
                        t=float(dt - ra[hit][k] + th[k]),
                        id=int(ensemble.ids[pid]),
                        weight=float(ensemble.weights[pid]),
                        position=xh[k].copy(),
                        velocity=va[hit][k].copy(),
                    )
                )
                ensemble.alive[pid] = False
            x[h] = xh
            rem[h] = 0.0
            active = active[:0]
            break
        normals = domain.normal_at(xh)
        v[h] = reflect_many(normals, va[hit])
        if acc is not None:
            s_hit = dt - ra[hit] + th
            a_n = np.sum(acc[h] * normals, axis=1)
            corr[h] = reflect_many(normals, corr[h]) + (a_n * (dt - 2.0 * s_hit))[:, None] * normals
        x[h] = xh
        rem[h] = ra[hit] - th
        bounces[h] += 1
        active = h
    keep = ensemble.alive[idx]
    x[keep] = _nudge_inside(domain, x[keep])
    ensemble.positions[idx] = x
    ensemble.velocities[idx] = v + corr
    result.bounces = int(bounces.sum())
    result.max_bounces = int(bounces.max(initial=0))
    result.events.sort(key=lambda e: (e.t, e.id))
    return result


@dataclass
class StepStats:
    """What happened during one coupled step."""

    events: list
    bounces: int
    max_bounces: int
    flux_energy: float


class CoupledStepper:
    """Kick-drift-kick integrator for particles plus point charges.

    Parameters
    ----------
    model : FieldModel
    rule : BoundaryRule
    collision_radius : float, optional
        Minimal allowed particle-charge distance; defaults to
        ``1e-4 * inradius``.
    encounter_radius : float, optional
        Changeover radius ``sigma`` of the close-encounter splitting: the
        kicks use the cutoff kernel, and sources passing within
        ``2 sigma`` of each other are advanced together with the
        short-range remainder (see :mod:`plasmacharge.encounters`).
        Defaults to ``5e-3 * inradius`` for bare kernels; ignored (no
        splitting) when the model already has a cutoff. Pass 0 to disable.
    """

    def __init__(
        self,
        model: FieldModel,
        rule: BoundaryRule,
        collision_radius: float | None = None,
        encounter_radius: float | None = None,
    ):
        self.model = model
        self.rule = BoundaryRule.parse(rule)
        self.domain = model.evaluator.domain
        if collision_radius is None:
            collision_radius = 1e-4 * self.domain.inradius
        self.collision_radius = collision_radius
        if model.sigma > 0:
            encounter_radius = 0.0
        elif encounter_radius is None:
            encounter_radius = 5e-3 * self.domain.inradius
        self.encounter_radius = float(encounter_radius)
        self.encounters = EncounterIntegrator(self.domain, self.encounter_radius) if encounter_radius > 0 else None
        self.encounter_groups = 0
        self._acc = None

    def reset(self):
        self._acc = None

    def accelerations(self, ensemble, charges):
        if self._acc is None:
            sigma = self.encounter_radius if self.encounters is not None else None
            self._acc = self.model.accelerations(ensemble, charges, sigma=sigma)
        return self._acc

    def check_collisions(self, ensemble, charges):
        if charges.M == 0:
            return
        x = ensemble.positions[ensemble.alive]
        if x.shape[0] == 0:
            return
        diff = x[:, None, :] - charges.xi[None, :, :]
        dmin = float(np.sqrt(np.min(np.sum(diff * diff, axis=-1))))
        if dmin < self.collision_radius:
            raise PlasmaChargeCollision(f"plasma-charge collision (distance {dmin:.3e})")

    def step(self, ensemble: ParticleEnsemble, charges: ChargeState, dt: float) -> StepStats:
        """Advance both subsystems in place by ``dt``."""
        acc_p, acc_c = self.accelerations(ensemble, charges)
        alive_idx = np.flatnonzero(ensemble.alive)
        ensemble.velocities[alive_idx] += 0.5 * dt * acc_p
        charges.eta += 0.5 * dt * acc_c
        start_x = ensemble.positions.copy()
        start_v = ensemble.velocities.copy()
        start_acc = np.zeros_like(start_x)
        start_acc[alive_idx] = acc_p
        start_charges = charges.copy()

        groups = []
        exclude = None
        if self.encounters is not None:
            pts = np.vstack([ensemble.positions[alive_idx], charges.xi])
            vel = np.vstack([ensemble.velocities[alive_idx], charges.eta])
            groups = find_groups(pts, vel, dt, self.encounter_radius)
            if groups:
                exclude = np.zeros(ensemble.N, dtype=bool)
                n_alive = alive_idx.size
                for g in groups:
                    exclude[alive_idx[g[g < n_alive]]] = True
        res = drift(ensemble, self.domain, self.rule, dt, acc_p, exclude)
        in_group = np.zeros(charges.M, dtype=bool)
        if groups:
            self._advance_groups(groups, alive_idx, acc_p, acc_c, ensemble, charges, in_group, res, dt)
        charges.xi[~in_group] += dt * charges.eta[~in_group]
        if charges.M and np.any(self.domain.level(charges.xi) >= 0):
            raise ChargeCollision("charge reached boundary")
        check_separation(charges, self.domain)
        self.check_collisions(ensemble, charges)
        flux = 0.0
        if res.events:
            res.events.sort(key=lambda e: (e.t, e.id))
            flux = self._absorbed_energy(res.events, start_x, start_v, start_acc, start_charges, ensemble, dt)
        self._acc = None
        acc_p, acc_c = self.accelerations(ensemble, charges)
        ensemble.velocities[ensemble.alive] += 0.5 * dt * acc_p
        charges.eta += 0.5 * dt * acc_c
        return StepStats(res.events, res.bounces, res.max_bounces, flux)

    def _advance_groups(self, groups, alive_idx, acc_p, acc_c, ensemble, charges, in_group, res, dt):
        # sources are indexed as in find_groups: alive particles, then charges
        n_alive = alive_idx.size
        absorbing = self.rule is BoundaryRule.ABSORPTION
        x = np.vstack([ensemble.positions[alive_idx], charges.xi])
        v = np.vstack([ensemble.velocities[alive_idx], charges.eta])
        q = np.concatenate([ensemble.weights[alive_idx], np.ones(charges.M)])
        acc = np.vstack([acc_p, acc_c])
        is_charge = np.arange(x.shape[0]) >= n_alive
        self.encounter_groups += len(groups)
        out = self.encounters.advance_many(x, v, q, acc, is_charge, groups, dt, absorbing)
        members = np.concatenate(groups)
        part = members[members < n_alive]
        chg = members[members >= n_alive]
        ensemble.positions[alive_idx[part]] = out.positions[part]
        ensemble.velocities[alive_idx[part]] = out.velocities[part]
        charges.xi[chg - n_alive] = out.positions[chg]
        charges.eta[chg - n_alive] = out.velocities[chg]
        in_group[chg - n_alive] = True
        res.bounces += out.bounces
        for k, s, xb, vb in out.absorbed:
            j = alive_idx[k]
            ensemble.alive[j] = False
            res.events.append(
                AbsorptionEvent(
                    t=float(s),
                    id=int(ensemble.ids[j]),
                    weight=float(ensemble.weights[j]),
                    position=xb,
                    velocity=vb,
                )
            )

    def _absorbed_energy(self, events, start_x, start_v, start_acc, start_charges, ensemble, dt):
        # energy carried away by each removed particle, evaluated at its hit
        # time with the other sources moved along their free-flight lines
        model = self.model
        ev = model.evaluator
        pos_index = {int(pid): k for k, pid in enumerate(ensemble.ids)}
        removed = np.zeros(ensemble.N, dtype=bool)
        was_alive = ensemble.alive.copy()
        for e in events:
            was_alive[pos_index[e.id]] = True
        total = 0.0
        for e in events:
            k = pos_index[e.id]
            s = e.t
            v_hit = e.velocity + (s - 0.5 * dt) * start_acc[k]
            x_hit = e.position - _NUDGE * ev.domain.normal_at(e.position[None, :])[0]
            others = was_alive & ~removed
            others[k] = False
            src = start_x[others] + s * start_v[others]
            q = ensemble.weights[others]
            if start_charges.M:
                src = np.vstack([src, start_charges.xi + s * start_charges.eta])
                q = np.concatenate([q, np.ones(start_charges.M)])
            pot = float(ev.potential_from(x_hit[None, :], src, q)[0]) if q.size else 0.0
            ext = 0.0
            if model.h_plasma is not None and ev.neumann:
                ext = float(ev.boundary_potential(model.h_plasma, x_hit))
            w = e.weight
            e.energy = 0.5 * w * float(v_hit @ v_hit) - w * pot + w * ext
            total += e.energy
            removed[k] = True
        return total


def push(
    ensemble: ParticleEnsemble,
    charges: ChargeState,
    evaluator: GreenEvaluator,
    rule,
    dt: float,
    h_N: BoundaryDensity | None = None,
):
    """One kick-drift-kick step of the plasma with the charges held fixed.

    Returns the new ensemble and the list of absorption events.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    ens = ensemble.copy()
    fixed = charges.copy()
    model = FieldModel(evaluator, h_plasma=h_N)

    def plasma_acc():
        pts = np.vstack([ens.positions[ens.alive], fixed.xi])
        q = np.concatenate([ens.weights[ens.alive], np.ones(fixed.M)])
        n = int(np.count_nonzero(ens.alive))
        if n == 0:
            return np.zeros((0, 2))
        acc = evaluator.pair_field(pts, q)[:n]
        if h_N is not None and evaluator.neumann:
            acc = acc - np.atleast_2d(evaluator.grad_boundary_potential(h_N, pts[:n]))
        return acc

    acc = plasma_acc()
    ens.velocities[ens.alive] += 0.5 * dt * acc
    res = drift(ens, evaluator.domain, BoundaryRule.parse(rule), dt, acc)
    CoupledStepper(model, rule).check_collisions(ens, fixed)
    ens.velocities[ens.alive] += 0.5 * dt * plasma_acc()
    return ens, res.events
