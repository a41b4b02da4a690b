"""Monitored quantities of a plasma-charge run.

The pointwise energy used by the moments is

    h(x, v) = |v|^2 / 2 + sum_a 1 / (4 pi |x - xi_a|) + K1

and the per-charge energy used by ``Q`` is

    h_a(x, v) = |v - eta_a|^2 / 2 + 1 / |x - xi_a| + K1.

Both are monitors only; nothing here feeds back into the dynamics.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .charges import ChargeState
from .errors import PlasmaChargeCollision
from .plasma import FieldModel, ParticleEnsemble

CSV_COLUMNS = (
    "t",
    "energy",
    "kinetic",
    "interaction",
    "flux_energy",
    "l1",
    "H2",
    "H4",
    "L0",
    "L2",
    "Q",
    "beta_max_ratio",
    "min_dist_charge",
    "min_dist_boundary",
)


def _alive(ensemble: ParticleEnsemble):
    a = ensemble.alive
    return ensemble.positions[a], ensemble.velocities[a], ensemble.weights[a]


def _charge_distances(x: np.ndarray, charges: ChargeState) -> np.ndarray:
    """Distances ``|x_i - xi_a|`` with shape ``(n, M)``; raises on contact."""
    diff = x[:, None, :] - charges.xi[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    if dist.size and np.min(dist) == 0.0:
        raise PlasmaChargeCollision("particle sits on a charge")
    return dist


def pointwise_energy(x, v, charges: ChargeState, K1: float = 1.0) -> np.ndarray:
    """``h(x, v)`` for each row of ``x`` and ``v``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    h = 0.5 * np.sum(v * v, axis=1) + K1
    if charges.M:
        h = h + np.sum(1.0 / (4.0 * np.pi * _charge_distances(x, charges)), axis=1)
    return h


def moment_hk(ensemble: ParticleEnsemble, charges: ChargeState, k: float, K1: float = 1.0) -> float:
    """Energy moment ``sum_i w_i h(x_i, v_i)^(k/2)``."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    x, v, w = _alive(ensemble)
    if w.size == 0:
        return 0.0
    if k == 0:
        return math.fsum(w)
    h = pointwise_energy(x, v, charges, K1)
    return math.fsum(w * h ** (0.5 * k))


def singular_moment_lk_increment(
    ensemble: ParticleEnsemble, charges: ChargeState, k: float, dt: float, K1: float = 1.0
) -> float:
    """``dt * sum_a sum_i w_i h^(k/2) / |x_i - xi_a|^2``."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    x, v, w = _alive(ensemble)
    if charges.M == 0 or w.size == 0:
        return 0.0
    dist = _charge_distances(x, charges)
    hk = pointwise_energy(x, v, charges, K1) ** (0.5 * k)
    return dt * math.fsum(((w * hk)[:, None] / dist**2).ravel())


def pointwise_q_now(ensemble: ParticleEnsemble, charges: ChargeState, K1: float = 1.0) -> float:
    """Current ``max_a max_i sqrt(h_a(x_i, v_i))``.

    Without charges the convention ``max_i sqrt(|v_i|^2 / 2 + K1)`` is used.
    Returns ``sqrt(K1)`` for an empty ensemble.
    """
    x, v, _ = _alive(ensemble)
    if x.shape[0] == 0:
        return math.sqrt(K1)
    if charges.M == 0:
        return float(np.sqrt(np.max(0.5 * np.sum(v * v, axis=1) + K1)))
    rel = v[:, None, :] - charges.eta[None, :, :]
    h = 0.5 * np.sum(rel * rel, axis=-1) + 1.0 / _charge_distances(x, charges) + K1
    return float(np.sqrt(np.max(h)))


def pointwise_q(ensemble: ParticleEnsemble, charges: ChargeState, window=None, K1: float = 1.0) -> float:
    """Running maximum of :func:`pointwise_q_now` over a window.

    Parameters
    ----------
    window : iterable of (ensemble, charges) pairs, optional
        Earlier states of the window; the current state is always included.
    """
    q = pointwise_q_now(ensemble, charges, K1)
    for ens, ch in window or ():
        q = max(q, pointwise_q_now(ens, ch, K1))
    return q


def total_energy(
    ensemble: ParticleEnsemble,
    charges: ChargeState,
    evaluator,
    h_plasma=None,
    h_charge=None,
    flux_energy: float = 0.0,
    absorbing: bool = False,
) -> float:
    """Energy of the coupled system, plus the absorbed flux when ``absorbing``."""
    model = FieldModel(evaluator, h_plasma, h_charge)
    gamma = 1.0 if absorbing else 0.0
    return model.energy(ensemble, charges) + gamma * flux_energy


# ----------------------------------------------------------------------
# velocity-lemma monitor
# ----------------------------------------------------------------------
def beta_value(x_perp, v_perp, v_tan, h_N, curvature) -> np.ndarray:
    """``v_perp^2 / 2 + (h_N + kappa v_tan^2) x_perp``."""
    return 0.5 * v_perp**2 + (h_N + curvature * v_tan**2) * x_perp


class BetaMonitor:
    """Tracks ``beta(s) / beta(entry)`` over boundary-collar episodes.

    A particle's episode starts when it is first seen inside the collar
    ``x_perp <= delta0`` and ends when it leaves. Entries with
    ``beta <= 0`` are counted in ``nonpositive_entries`` and not monitored.
    """

    def __init__(self, domain, h_N, width: float | None = None):
        self.domain = domain
        self.h_N = h_N
        self.width = domain.collar_width if width is None else float(width)
        self.entry: dict[int, float] = {}
        self.max_ratio = 1.0
        self.min_ratio = 1.0
        self.episodes = 0
        self.nonpositive_entries = 0

    def beta(self, x, v):
        """Collar mask and ``beta`` of the collar particles."""
        x = np.atleast_2d(x)
        v = np.atleast_2d(v)
        if x.shape[0] == 0:
            return np.zeros(0, bool), np.zeros(0)
        mu, dist = self.domain.project(x)
        mask = dist <= self.width
        if not np.any(mask):
            return mask, np.zeros(0)
        mu, dist = mu[mask], dist[mask]
        n = self.domain.normal(mu)
        t = self.domain.tangent(mu)
        vv = v[mask]
        v_perp = np.sum(vv * n, axis=1)
        v_tan = np.sum(vv * t, axis=1)
        hn = self.h_N.values(mu) if self.h_N is not None else np.zeros_like(mu)
        return mask, beta_value(dist, v_perp, v_tan, hn, self.domain.curvature(mu))

    def update(self, ensemble: ParticleEnsemble) -> tuple[float, float]:
        """Fold the current state in; return the current (max, min) ratios."""
        alive = np.flatnonzero(ensemble.alive)
        mask, beta = self.beta(ensemble.positions[alive], ensemble.velocities[alive])
        ids = ensemble.ids[alive[mask]] if beta.size else np.zeros(0, dtype=int)
        cur_max, cur_min = 1.0, 1.0
        inside = set()
        for pid, b in zip(ids.tolist(), beta.tolist()):
            inside.add(pid)
            if pid not in self.entry:
                self.episodes += 1
                if b <= 0.0:
                    self.nonpositive_entries += 1
                    self.entry[pid] = math.nan
                else:
                    self.entry[pid] = b
                continue
            b0 = self.entry[pid]
            if math.isnan(b0):
                continue
            r = b / b0
            cur_max = max(cur_max, r)
            cur_min = min(cur_min, r)
        for pid in list(self.entry):
            if pid not in inside:
                del self.entry[pid]
        self.max_ratio = max(self.max_ratio, cur_max)
        self.min_ratio = min(self.min_ratio, cur_min)
        return cur_max, cur_min


def velocity_lemma_monitor(ensemble, domain, h_N, monitor: BetaMonitor | None = None):
    """Update (or start) a :class:`BetaMonitor`; return ``(max, min, monitor)``."""
    if monitor is None:
        monitor = BetaMonitor(domain, h_N)
    monitor.update(ensemble)
    return monitor.max_ratio, monitor.min_ratio, monitor


# ----------------------------------------------------------------------
# records
# ----------------------------------------------------------------------
@dataclass
class DiagnosticsRecord:
    """One row of the diagnostics table."""

    t: float
    energy: float
    kinetic: float
    interaction: float
    charge_boundary: float
    boundary_flux_energy: float
    l1: float
    hk: dict = field(default_factory=dict)
    lk: dict = field(default_factory=dict)
    q_pointwise: float = math.nan
    beta_ratio: float = 1.0
    beta_ratio_min: float = 1.0
    min_dist_charge: float = math.inf
    min_dist_boundary_charges: float = math.inf

    def row(self) -> dict:
        return {
            "t": self.t,
            "energy": self.energy,
            "kinetic": self.kinetic,
            "interaction": self.interaction,
            "flux_energy": self.boundary_flux_energy,
            "l1": self.l1,
            "H2": self.hk.get(2, math.nan),
            "H4": self.hk.get(4, math.nan),
            "L0": self.lk.get(0, math.nan),
            "L2": self.lk.get(2, math.nan),
            "Q": self.q_pointwise,
            "beta_max_ratio": self.beta_ratio,
            "min_dist_charge": self.min_dist_charge,
            "min_dist_boundary": self.min_dist_boundary_charges,
        }


def min_charge_distance(ensemble: ParticleEnsemble, charges: ChargeState) -> float:
    """Smallest particle-charge or charge-charge distance (``inf`` if none)."""
    best = math.inf
    x = ensemble.positions[ensemble.alive]
    if charges.M and x.shape[0]:
        best = float(np.min(_charge_distances(x, charges)))
    if charges.M > 1:
        d = np.sqrt(np.sum((charges.xi[:, None, :] - charges.xi[None, :, :]) ** 2, axis=-1))
        np.fill_diagonal(d, np.inf)
        best = min(best, float(np.min(d)))
    return best


class Recorder:
    """Accumulates running quantities and produces :class:`DiagnosticsRecord` rows.

    Parameters
    ----------
    model : FieldModel
    absorbing : bool
        Include the accumulated flux energy in ``energy``.
    K1 : float
    beta_monitor : BetaMonitor, optional
        Only meaningful for Neumann reflection runs.
    """

    def __init__(self, model: FieldModel, absorbing: bool = False, K1: float = 1.0, beta_monitor=None):
        self.model = model
        self.absorbing = absorbing
        self.K1 = K1
        self.beta_monitor = beta_monitor
        self.flux_energy = 0.0
        self.absorbed_weight = 0.0
        self.hk = {2: -math.inf, 4: -math.inf}
        self.lk = {0: 0.0, 2: 0.0}
        self.q = 0.0
        self.rows: list[DiagnosticsRecord] = []

    def observe(self, ensemble, charges, dt: float = 0.0, flux_energy: float = 0.0, absorbed_weight: float = 0.0):
        """Fold in one step of length ``dt`` that ended in the given state."""
        self.flux_energy += flux_energy
        self.absorbed_weight += absorbed_weight
        for k in self.lk:
            self.lk[k] += singular_moment_lk_increment(ensemble, charges, k, dt, self.K1)
        for k in self.hk:
            self.hk[k] = max(self.hk[k], moment_hk(ensemble, charges, k, self.K1))
        self.q = max(self.q, pointwise_q_now(ensemble, charges, self.K1))
        if self.beta_monitor is not None:
            self.beta_monitor.update(ensemble)

    def record(self, t: float, ensemble, charges) -> DiagnosticsRecord:
        parts = self.model.energy_parts(ensemble, charges)
        gamma = 1.0 if self.absorbing else 0.0
        energy = parts["kinetic"] + parts["interaction"] + parts["charge_boundary"] + gamma * self.flux_energy
        dist_b = math.inf
        if charges.M:
            _, d = self.model.evaluator.domain.project(charges.xi)
            dist_b = float(np.min(d))
        bm = self.beta_monitor
        rec = DiagnosticsRecord(
            t=t,
            energy=energy,
            kinetic=parts["kinetic"],
            interaction=parts["interaction"],
            charge_boundary=parts["charge_boundary"],
            boundary_flux_energy=self.flux_energy,
            l1=math.fsum(ensemble.weights[ensemble.alive]),
            hk=dict(self.hk),
            lk=dict(self.lk),
            q_pointwise=self.q,
            beta_ratio=bm.max_ratio if bm else 1.0,
            beta_ratio_min=bm.min_ratio if bm else 1.0,
            min_dist_charge=min_charge_distance(ensemble, charges),
            min_dist_boundary_charges=dist_b,
        )
        self.rows.append(rec)
        return rec


def write_csv(path, records, header_comment: str | None = None) -> None:
    """Write diagnostics rows with shortest round-trip float formatting."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            row = rec.row()
            writer.writerow([repr(float(row[c])) for c in CSV_COLUMNS])
