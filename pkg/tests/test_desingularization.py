import math

import numpy as np
import pytest

from plasmacharge.charges import ChargeState
from plasmacharge.desingularization import (
    SWEEP_COLUMNS,
    BlobSpec,
    BlobTrajectory,
    barycenters,
    deviation,
    make_blobs,
    reference_energy,
    run_modified,
    run_reference,
    sigma_schedule,
    separation_scale,
    sweep,
    sweep_plot_script,
    write_sweep,
)
from plasmacharge.errors import ConfigError
from plasmacharge.geometry import unit_disk
from plasmacharge.greens import BoundaryDensity, GreenEvaluator

DISK = unit_disk()
EV_N = GreenEvaluator(DISK, "n")
U1 = BoundaryDensity.uniform(1.0, DISK)
U2 = BoundaryDensity.uniform(2.0, DISK)


def _spec(eps=0.05, xi=((0.5, 0.0),), eta=((0.0, 0.0),), n=200, **kw):
    return BlobSpec(eps, np.array(xi), np.array(eta), particles_per_blob=n, **kw)


# ---------------------------------------------------------------- schedule
def test_schedule_arithmetic():
    assert sigma_schedule(math.exp(-8), 1.0) == pytest.approx(0.5, abs=1e-15)


def test_schedule_is_clamped_strictly_below_an_eighth_of_the_separation():
    s = sigma_schedule(0.1, 0.5, delta2=0.5)
    assert s < 0.5 / 8 and s == math.nextafter(0.0625, 0.0)


def test_schedule_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        sigma_schedule(1.5, 1.0)


def test_separation_scale():
    assert separation_scale(DISK, [[0.5, 0.0]]) == pytest.approx(0.5, abs=1e-14)
    assert separation_scale(DISK, [[0.1, 0.0], [-0.1, 0.0]]) == pytest.approx(0.2, abs=1e-14)


# ---------------------------------------------------------------- blobs
def test_blob_weights_are_exactly_one():
    ens, labels = make_blobs(_spec(xi=((0.3, 0.0), (-0.3, 0.0)), eta=((0, 0), (0, 0))), DISK)
    for a in range(2):
        assert math.fsum(ens.weights[labels == a]) == 1.0


def test_blob_supports_lie_in_the_balls():
    spec = _spec(eps=0.05, eta=((0.2, -0.1),))
    ens, _ = make_blobs(spec, DISK)
    assert np.max(np.linalg.norm(ens.positions - spec.xi0[0], axis=1)) <= 0.05 * (1 + 1e-12)
    assert np.max(np.linalg.norm(ens.velocities - spec.eta0[0], axis=1)) <= 0.05 * (1 + 1e-12)


def test_fresh_blob_barycenter_matches_the_center():
    spec = _spec(eps=0.05, n=400, eta=((0.2, -0.1),))
    ens, labels = make_blobs(spec, DISK)
    xi, eta = barycenters(ens, labels, 1)
    assert np.linalg.norm(xi[0] - spec.xi0[0]) <= 2 * 0.05 / math.sqrt(400)
    assert np.linalg.norm(eta[0] - spec.eta0[0]) <= 2 * 0.05 / math.sqrt(400)


def test_blob_density_bound():
    assert _spec(eps=0.1).density_bound == pytest.approx(2 / (math.pi**2 * 1e-4), rel=1e-14)


@pytest.mark.parametrize(
    "xi", [((0.97, 0.0),), ((0.1, 0.0), (0.15, 0.0))], ids=["near-wall", "overlap"]
)
def test_bad_blob_layouts_are_rejected(xi):
    spec = _spec(eps=0.05, xi=xi, eta=[(0, 0)] * len(xi))
    with pytest.raises(ConfigError):
        make_blobs(spec, DISK)


def test_blob_spec_validation():
    with pytest.raises(ConfigError):
        _spec(n=201)
    with pytest.raises(ConfigError):
        _spec(eps=0.0)
    with pytest.raises(ConfigError):
        BlobSpec(0.1, [[0, 0]], [[0, 0], [1, 1]])


def test_cutoff_must_stay_below_an_eighth_of_the_separation():
    with pytest.raises(ConfigError):
        run_modified(_spec(cutoff_scale=0.1), EV_N, U1, 0.01, 0.01)


# ---------------------------------------------------------------- modified system
def test_centered_blob_stays_at_the_center():
    spec = _spec(eps=0.05, xi=((0.0, 0.0),), n=100)
    traj = run_modified(spec, EV_N, U1, 1.0, 0.01, stride=10)
    assert traj.status == "ok" and not traj.t_eps_hit
    assert np.max(np.linalg.norm(traj.xi[:, 0], axis=1)) <= 2 * 0.05


def test_symmetric_blobs_stay_symmetric():
    # antithetic samples make the two blobs images of each other under a half turn
    spec = _spec(eps=0.05, xi=((0.0, 0.3), (0.0, -0.3)), eta=((0.1, 0.0), (-0.1, 0.0)), n=100)
    traj = run_modified(spec, EV_N, U2, 0.2, 0.01, stride=5)
    assert np.max(np.abs(traj.xi[:, 0] + traj.xi[:, 1])) <= 1e-8
    assert np.max(np.abs(traj.eta[:, 0] + traj.eta[:, 1])) <= 1e-8
    assert np.max(np.abs(traj.xi[-1, 0] - spec.xi0[0])) > 1e-3


def test_modified_run_energy_is_conserved():
    traj = run_modified(_spec(eps=0.05, n=200), EV_N, U1, 0.2, 1e-3, stride=10)
    assert traj.energy_drift <= 1e-3


def test_cutoff_is_inactive_beyond_twice_sigma(rng):
    pts = np.array([[0.0, 0.0], [0.3, 0.1], [-0.2, 0.4], [0.5, -0.5]])
    q = np.array([0.5, 1.0, 0.25, 2.0])
    bare = EV_N.pair_field(pts, q)
    cut = EV_N.pair_field(pts, q, sigma=0.05)
    assert np.max(np.abs(bare - cut)) <= 1e-12


def test_initial_deviation_is_within_the_sampling_bound():
    spec = _spec(eps=0.05, n=200)
    ref = run_reference(EV_N, U1, spec.xi0, spec.eta0, 0.05, 1e-3, stride=10)
    traj = run_modified(spec, EV_N, U1, 0.05, 1e-3, stride=10)
    p0 = deviation(traj, ref).p[0]
    assert p0 <= 3 * (2 * 0.05 * spec.M + 1 / math.sqrt(200))


# ---------------------------------------------------------------- reference
def test_reference_center_charge_stays_put():
    ref = run_reference(EV_N, U1, [[0.0, 0.0]], [[0.0, 0.0]], 0.5, 1e-2)
    assert np.max(np.abs(ref.xi)) <= 1e-15


def test_reference_energy_is_conserved():
    ref = run_reference(EV_N, U1, [[0.5, 0.0]], [[0.0, 0.0]], 1.0, 1e-4, stride=100)
    e = reference_energy(ref, EV_N, U1)
    assert np.max(np.abs(e - e[0])) / abs(e[0]) <= 1e-8
    # released at rest off-center, the charge first moves inward
    assert ref.xi[1, 0, 0] < 0.5


# ---------------------------------------------------------------- deviation
def _traj(xi, eta, times):
    return BlobTrajectory(np.asarray(times), np.asarray(xi), np.asarray(eta), np.zeros(len(times)), 0.01)


def test_identical_trajectories_have_zero_deviation():
    times = np.linspace(0, 1, 5)
    xi = np.random.default_rng(0).normal(size=(5, 2, 2))
    eta = np.random.default_rng(1).normal(size=(5, 2, 2))
    dev = deviation(_traj(xi, eta, times), _traj(xi, eta, times))
    assert np.all(dev.p == 0.0) and dev.sup == 0.0


def test_constant_offset_deviation():
    times = np.linspace(0, 1, 5)
    xi = np.zeros((5, 1, 2))
    eta = np.zeros((5, 1, 2))
    shifted = xi.copy()
    shifted[..., 0] += 0.125
    dev = deviation(_traj(shifted, eta, times), _traj(xi, eta, times))
    assert np.all(dev.p == 0.125)


def test_deviation_interpolates_a_finer_reference():
    fine = np.linspace(0, 1, 101)
    coarse = np.linspace(0, 1, 11)
    path = lambda t: np.stack([np.sin(t), np.cos(t)], axis=-1)[:, None, :]
    dev = deviation(_traj(path(coarse), path(coarse), coarse), _traj(path(fine), path(fine), fine))
    assert dev.sup <= 1e-8


def test_deviation_rejects_mismatched_charge_counts():
    t = np.linspace(0, 1, 3)
    with pytest.raises(ValueError):
        deviation(_traj(np.zeros((3, 1, 2)), np.zeros((3, 1, 2)), t), _traj(np.zeros((3, 2, 2)), np.zeros((3, 2, 2)), t))


# ---------------------------------------------------------------- sweep
def test_empty_sweep():
    assert sweep(_spec(), EV_N, U1, [], 0.1, 0.01) == []


def test_sweep_needs_decreasing_epsilons():
    with pytest.raises(ValueError):
        sweep(_spec(), EV_N, U1, [0.05, 0.1], 0.1, 0.01)


def test_sweep_is_reproducible(tmp_path):
    spec = _spec(n=100)
    runs = []
    for k in range(2):
        rows = sweep(spec, EV_N, U1, [0.1, 0.05], 0.05, 5e-3, stride=2)
        path = tmp_path / f"s{k}.csv"
        write_sweep(path, rows, "config_hash=x")
        runs.append([line.rsplit(",", 1)[0] for line in path.read_text().splitlines()])
    assert runs[0] == runs[1]
    assert runs[0][1] == ",".join(SWEEP_COLUMNS[:-1])


def test_plot_script_is_log_log():
    script = sweep_plot_script()
    assert "set logscale xy" in script and "desing_sweep.csv" in script
