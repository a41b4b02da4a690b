"""Point charges as limits of small plasma blobs.

Each charge is replaced by a blob of unit mass, uniform on the product of
an ``epsilon``-ball in position and an ``epsilon``-ball in velocity. The
blobs evolve as a charge-free plasma whose particle-particle kernel has its
fundamental part cut off below ``sigma``, with the charge boundary density
``h_cha`` as boundary data. The weighted barycenters of the blobs are then
compared with the point-charge trajectories.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.stats import qmc

from .charges import ChargeState, charge_energy, integrate_charges
from .errors import ConfigError, PlasmaChargeError
from .greens import BoundaryDensity, GreenEvaluator
from .plasma import BoundaryRule, CoupledStepper, FieldModel, ParticleEnsemble

SWEEP_COLUMNS = ("epsilon", "sigma", "sup_p", "t_eps_hit", "wall_seconds")


def sigma_schedule(epsilon: float, T: float, cutoff_constant: float = 1.0, delta2: float | None = None) -> float:
    """Cutoff radius ``(C T / |ln eps|)^(1/3)``, kept strictly below ``delta2 / 8``."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    sigma = (cutoff_constant * T / abs(math.log(epsilon))) ** (1.0 / 3.0)
    if delta2 is not None:
        sigma = min(sigma, math.nextafter(delta2 / 8.0, 0.0))
    return sigma


def separation_scale(domain, xi) -> float:
    """Smallest wall distance or pairwise distance among the centers."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    _, d = domain.project(xi)
    best = float(np.min(d))
    if xi.shape[0] > 1:
        diff = np.sqrt(np.sum((xi[:, None, :] - xi[None, :, :]) ** 2, axis=-1))
        np.fill_diagonal(diff, np.inf)
        best = min(best, float(np.min(diff)))
    return best


@dataclass
class BlobSpec:
    """Blob initial data.

    Parameters
    ----------
    epsilon : float
        Blob radius in position and in velocity.
    xi0, eta0 : (M, 2) arrays
        Blob centers in position and velocity.
    particles_per_blob : int
        Even; samples come in antithetic pairs.
    cutoff_scale : float, optional
        Explicit ``sigma``; by default taken from :func:`sigma_schedule`.
    cutoff_constant : float
        ``C`` in the schedule.
    seed : int
        Permutes particle order only.
    """

    epsilon: float
    xi0: np.ndarray
    eta0: np.ndarray
    particles_per_blob: int = 2000
    cutoff_scale: float | None = None
    cutoff_constant: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.xi0 = np.array(self.xi0, dtype=float).reshape(-1, 2)
        self.eta0 = np.array(self.eta0, dtype=float).reshape(-1, 2)
        if self.xi0.shape != self.eta0.shape:
            raise ConfigError("xi0 and eta0 must have the same shape", "blob-spec")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive", "blob-spec")
        if self.particles_per_blob < 2 or self.particles_per_blob % 2:
            raise ConfigError("particles_per_blob must be even and at least 2", "blob-spec")

    @property
    def M(self) -> int:
        return self.xi0.shape[0]

    @property
    def density_bound(self) -> float:
        """Upper bound ``2 / (pi^2 eps^4)`` on the blob phase-space density."""
        return 2.0 / (math.pi**2 * self.epsilon**4)

    def sigma(self, domain, T: float) -> float:
        if self.cutoff_scale is not None:
            return float(self.cutoff_scale)
        return sigma_schedule(self.epsilon, T, self.cutoff_constant, separation_scale(domain, self.xi0))

    def with_epsilon(self, epsilon: float) -> "BlobSpec":
        return BlobSpec(
            epsilon, self.xi0, self.eta0, self.particles_per_blob, None, self.cutoff_constant, self.seed
        )


def _unit_ball_pairs(n_half: int) -> np.ndarray:
    # Halton points mapped to disk x disk by the area-preserving polar map
    u = qmc.Halton(d=4, scramble=False).random(n_half + 1)[1:]
    r1, t1 = np.sqrt(u[:, 0]), 2 * np.pi * u[:, 1]
    r2, t2 = np.sqrt(u[:, 2]), 2 * np.pi * u[:, 3]
    pts = np.column_stack([r1 * np.cos(t1), r1 * np.sin(t1), r2 * np.cos(t2), r2 * np.sin(t2)])
    return np.vstack([pts, -pts])


def make_blobs(spec: BlobSpec, domain) -> tuple[ParticleEnsemble, np.ndarray]:
    """Sample all blobs.

    Returns the ensemble and the blob label of each particle.
    """
    eps = spec.epsilon
    _, wall = domain.project(spec.xi0)
    if np.any(wall < 2 * eps):
        raise ConfigError("blob closer than 2 epsilon to the wall", "blob-separation")
    if spec.M > 1:
        diff = np.sqrt(np.sum((spec.xi0[:, None, :] - spec.xi0[None, :, :]) ** 2, axis=-1))
        np.fill_diagonal(diff, np.inf)
        if np.min(diff) <= 2 * eps:
            raise ConfigError("blobs overlap", "blob-separation")
    nb = spec.particles_per_blob
    unit = _unit_ball_pairs(nb // 2)
    rng = np.random.default_rng(spec.seed)
    xs, vs, labels = [], [], []
    for a in range(spec.M):
        order = rng.permutation(nb)
        xs.append(spec.xi0[a] + eps * unit[order, :2])
        vs.append(spec.eta0[a] + eps * unit[order, 2:])
        labels.append(np.full(nb, a))
    weights = np.full(nb * spec.M, 1.0 / nb)
    return ParticleEnsemble(np.vstack(xs), np.vstack(vs), weights), np.concatenate(labels)


def barycenters(ensemble: ParticleEnsemble, labels: np.ndarray, M: int):
    """Weighted position and velocity means per blob, each ``(M, 2)``."""
    xi = np.zeros((M, 2))
    eta = np.zeros((M, 2))
    for a in range(M):
        sel = (labels == a) & ensemble.alive
        w = ensemble.weights[sel]
        total = math.fsum(w)
        for c in range(2):
            xi[a, c] = math.fsum(w * ensemble.positions[sel, c]) / total
            eta[a, c] = math.fsum(w * ensemble.velocities[sel, c]) / total
    return xi, eta


@dataclass
class BlobTrajectory:
    """Barycenter history of a blob run."""

    times: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    energy: np.ndarray
    sigma: float
    t_eps_hit: bool = False
    t_eps: float = math.nan
    status: str = "ok"
    reason: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def energy_drift(self) -> float:
        e = self.energy[np.isfinite(self.energy)]
        return float(np.max(np.abs(e - e[0])) / max(abs(e[0]), 1e-300))


def run_modified(
    spec: BlobSpec,
    evaluator: GreenEvaluator,
    h_cha: BoundaryDensity | None,
    T: float,
    dt: float,
    stride: int = 1,
) -> BlobTrajectory:
    """Evolve the blobs under the cutoff kernel and record barycenters.

    The run stops early, with ``t_eps_hit`` set, when a blob particle comes
    within ``delta2 / 2`` of the wall.
    """
    domain = evaluator.domain
    delta2 = separation_scale(domain, spec.xi0)
    sigma = spec.sigma(domain, T)
    if not sigma < delta2 / 8:
        raise ConfigError(f"cutoff radius {sigma:g} must stay below delta2/8 = {delta2 / 8:g}", "cutoff-radius")
    if h_cha is None:
        h_cha = BoundaryDensity.uniform(spec.M, domain) if evaluator.neumann else BoundaryDensity.zero()
    ens, labels = make_blobs(spec, domain)
    model = FieldModel(evaluator, h_plasma=h_cha, self_image=True, sigma=sigma)
    stepper = CoupledStepper(model, BoundaryRule.REFLECTION)
    empty = ChargeState.empty()
    n_steps = int(round(T / dt))
    xi, eta = barycenters(ens, labels, spec.M)
    times, xis, etas, energies = [0.0], [xi], [eta], [model.energy(ens, empty)]
    out = BlobTrajectory(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0), sigma)
    for k in range(1, n_steps + 1):
        try:
            stepper.step(ens, empty, dt)
        except PlasmaChargeError as exc:
            out.status, out.reason = "error", str(exc)
            break
        _, d = domain.project(ens.positions)
        record = k % stride == 0 or k == n_steps
        if np.min(d) < delta2 / 2:
            out.t_eps_hit, out.t_eps = True, k * dt
            record = True
        if record:
            xi, eta = barycenters(ens, labels, spec.M)
            times.append(k * dt)
            xis.append(xi)
            etas.append(eta)
            energies.append(model.energy(ens, empty))
        if out.t_eps_hit:
            break
    out.times = np.array(times)
    out.xi = np.array(xis)
    out.eta = np.array(etas)
    out.energy = np.array(energies)
    return out


def run_reference(
    evaluator: GreenEvaluator,
    h_cha: BoundaryDensity | None,
    xi0,
    eta0,
    T: float,
    dt: float,
    stride: int = 1,
):
    """Integrate the point-charge system; see :func:`integrate_charges`."""
    state = ChargeState(xi0, eta0)
    if state.M > 1 and separation_scale(evaluator.domain, state.xi) <= 0:
        raise ConfigError("charges must be separated", "initial-separation")
    return integrate_charges(state, evaluator, dt, T, h_cha, stride=stride)


@dataclass
class DeviationSeries:
    """``p(t) = sum_a |xi_a^eps - xi_a| + |eta_a^eps - eta_a|`` on a time grid."""

    times: np.ndarray
    p: np.ndarray
    position: np.ndarray
    velocity: np.ndarray

    @property
    def sup(self) -> float:
        return float(np.max(self.p)) if self.p.size else 0.0


def _resample(times, values, grid):
    if values.shape[0] == grid.size and np.array_equal(times, grid):
        return values
    flat = values.reshape(values.shape[0], -1)
    return CubicSpline(times, flat, axis=0)(grid).reshape((grid.size,) + values.shape[1:])


def deviation(modified, reference) -> DeviationSeries:
    """Compare barycenters with the reference charges on the modified time grid."""
    if modified.xi.shape[1:] != reference.xi.shape[1:]:
        raise ValueError("modified and reference runs have different numbers of charges")
    grid = np.asarray(modified.times)
    if grid.size and grid[-1] > reference.times[-1] + 1e-12:
        raise ValueError("reference run is shorter than the modified run")
    ref_xi = _resample(reference.times, reference.xi, grid)
    ref_eta = _resample(reference.times, reference.eta, grid)
    dpos = np.sqrt(np.sum((modified.xi - ref_xi) ** 2, axis=-1))
    dvel = np.sqrt(np.sum((modified.eta - ref_eta) ** 2, axis=-1))
    return DeviationSeries(grid, np.sum(dpos + dvel, axis=1), dpos, dvel)


@dataclass
class SweepRow:
    epsilon: float
    sigma: float
    sup_p: float
    t_eps_hit: bool
    wall_seconds: float

    def as_list(self):
        return [repr(self.epsilon), repr(self.sigma), repr(self.sup_p), str(int(self.t_eps_hit)), f"{self.wall_seconds:.3f}"]


def sweep(
    template: BlobSpec,
    evaluator: GreenEvaluator,
    h_cha: BoundaryDensity | None,
    eps_list,
    T: float,
    dt: float,
    stride: int = 1,
    reference=None,
) -> list[SweepRow]:
    """Run the blob system for each ``epsilon`` and tabulate ``sup p``."""
    eps_list = list(eps_list)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be decreasing")
    if not eps_list:
        return []
    if reference is None:
        reference = run_reference(evaluator, h_cha, template.xi0, template.eta0, T, dt, stride)
    rows = []
    for eps in eps_list:
        spec = template.with_epsilon(eps)
        start = time.perf_counter()
        traj = run_modified(spec, evaluator, h_cha, T, dt, stride)
        dev = deviation(traj, reference)
        rows.append(SweepRow(eps, traj.sigma, dev.sup, traj.t_eps_hit, time.perf_counter() - start))
    return rows


def write_sweep(path, rows, header_comment: str | None = None) -> None:
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(",".join(SWEEP_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(row.as_list()) + "\n")


def sweep_plot_script(csv_name: str = "desing_sweep.csv") -> str:
    """Gnuplot script for ``log eps`` against ``log sup p``."""
    return (
        "set datafile separator ','\n"
        "set logscale xy\n"
        "set xlabel 'epsilon'\n"
        "set ylabel 'sup p'\n"
        "set key autotitle columnhead\n"
        f"plot '{csv_name}' using 1:3 with linespoints pt 7\n"
        "pause -1\n"
    )


def reference_energy(trajectory, evaluator, h_cha) -> np.ndarray:
    """Charge-system energy along a reference trajectory."""
    return np.array(
        [charge_energy(ChargeState(x, e), evaluator, h_cha) for x, e in zip(trajectory.xi, trajectory.eta)]
    )
