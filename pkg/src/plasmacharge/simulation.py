"""Run driver: builds a coupled system from a :class:`RunConfig`, steps it
and writes the run directory.

Files written to the output directory:

``diagnostics.csv``   one row every ``stride`` steps (see :mod:`diagnostics`)
``charges.csv``       t, alpha, xi_x, xi_y, eta_x, eta_y, energy_drift_max
``particles_*.csv``   optional snapshots: t, id, x, y, vx, vy, w, alive
``summary.json``      status, reason, drift figures and events
``plot.gp``           gnuplot script for the diagnostics

Every CSV starts with a ``# config_hash=...`` comment line. Nothing
time- or host-dependent is written, so equal hashes give equal files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .charges import ChargeState
from .config import RunConfig
from .diagnostics import BetaMonitor, Recorder, write_csv
from .errors import PlasmaChargeError, TimeStepError
from .greens import GreenEvaluator
from .plasma import CoupledStepper, FieldModel, sample_boxes

CHARGE_COLUMNS = ("t", "alpha", "xi_x", "xi_y", "eta_x", "eta_y", "energy_drift_max")
PARTICLE_COLUMNS = ("t", "id", "x", "y", "vx", "vy", "w", "alive")


def _fmt(x) -> str:
    return repr(float(x))


def stability_bound(ensemble, charges) -> float:
    """``0.1 min(1, d^2)`` with ``d`` the smallest particle-charge distance."""
    if charges.M == 0:
        return 0.1
    x = ensemble.positions[ensemble.alive]
    if x.shape[0] == 0:
        return 0.1
    diff = x[:, None, :] - charges.xi[None, :, :]
    d2 = float(np.min(np.sum(diff * diff, axis=-1)))
    return 0.1 * min(1.0, d2)


@dataclass
class RunResult:
    status: str
    reason: str
    summary: dict
    records: list = field(default_factory=list)
    exit_code: int = 0


def build_system(config: RunConfig):
    """Evaluator, field model, ensemble and charges for a configuration."""
    evaluator = GreenEvaluator.for_domain(config.domain, config.flavor, n_b=config.n_b)
    evaluator.fit()
    model = FieldModel(evaluator, h_plasma=config.h_N, h_charge=config.h_cha)
    ensemble = sample_boxes(config.plasma, config.seed)
    charges = ChargeState(config.xi0(), config.eta0())
    return evaluator, model, ensemble, charges


def _write_particles(path, t, ensemble, header):
    with open(path, "w") as fh:
        fh.write(f"# {header}\n")
        fh.write(",".join(PARTICLE_COLUMNS) + "\n")
        for k in range(ensemble.N):
            x, y = ensemble.positions[k]
            vx, vy = ensemble.velocities[k]
            fh.write(
                ",".join(
                    [_fmt(t), str(int(ensemble.ids[k])), _fmt(x), _fmt(y), _fmt(vx), _fmt(vy),
                     _fmt(ensemble.weights[k]), str(int(ensemble.alive[k]))]
                )
                + "\n"
            )


PLOT_SCRIPT = """set datafile separator ','
set datafile commentschars '#'
set key autotitle columnhead
set multiplot layout 2,1
set ylabel 'relative energy drift'
plot 'diagnostics.csv' using 1:(abs($2 / E0 - 1)) with lines
set ylabel 'total weight'
plot 'diagnostics.csv' using 1:6 with lines
unset multiplot
pause -1
"""


def run(config: RunConfig, out_dir, snapshot_every: int = 0) -> RunResult:
    """Integrate the configured system and write the run directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = f"config_hash={config.hash()}"
    evaluator, model, ens, charges = build_system(config)
    absorbing = config.rule == "absorption"
    stepper = CoupledStepper(model, config.rule, encounter_radius=config.encounter_radius)
    toggles = config.raw["diagnostics"]
    beta = None
    if toggles.get("beta", True) and evaluator.neumann and not absorbing:
        beta = BetaMonitor(config.domain, config.h_N)
    recorder = Recorder(model, absorbing=absorbing, K1=config.K1, beta_monitor=beta)
    dt = config.dt

    recorder.observe(ens, charges)
    first = recorder.record(0.0, ens, charges)
    e0 = first.energy
    l1_initial = first.l1
    scale = abs(e0) if e0 != 0 else 1.0
    drift_max = 0.0
    charge_rows = [(0.0, charges.copy(), 0.0)]
    events: list[dict] = []
    status, reason, exit_code = "ok", "", 0
    absorbed_weight = 0.0
    absorbed_count = 0
    bounces = 0
    if snapshot_every:
        _write_particles(out / "particles_000000.csv", 0.0, ens, header)

    for k in range(1, config.n_steps + 1):
        t = k * dt
        try:
            bound = stability_bound(ens, charges)
            if dt > bound:
                raise TimeStepError(f"dt={dt:g} exceeds the stability bound {bound:.3e}")
            stats = stepper.step(ens, charges, dt)
        except PlasmaChargeError as exc:
            status, reason, exit_code = "error", str(exc), 2
            events.append({"t": t - dt, "kind": exc.condition, "message": str(exc)})
            break
        w = math.fsum(e.weight for e in stats.events)
        absorbed_weight += w
        absorbed_count += len(stats.events)
        bounces += stats.bounces
        recorder.observe(ens, charges, dt, flux_energy=stats.flux_energy, absorbed_weight=w)
        if k % config.stride == 0 or k == config.n_steps:
            rec = recorder.record(t, ens, charges)
            drift_max = max(drift_max, abs(rec.energy - e0) / scale)
            charge_rows.append((t, charges.copy(), drift_max))
        if snapshot_every and k % snapshot_every == 0:
            _write_particles(out / f"particles_{k:06d}.csv", t, ens, header)

    write_csv(out / "diagnostics.csv", recorder.rows, header)
    with open(out / "charges.csv", "w") as fh:
        fh.write(f"# {header}\n")
        fh.write(",".join(CHARGE_COLUMNS) + "\n")
        for t, ch, dr in charge_rows:
            for a in range(ch.M):
                fh.write(
                    ",".join([_fmt(t), str(a), _fmt(ch.xi[a, 0]), _fmt(ch.xi[a, 1]),
                              _fmt(ch.eta[a, 0]), _fmt(ch.eta[a, 1]), _fmt(dr)])
                    + "\n"
                )
    last = recorder.rows[-1]
    summary = {
        "status": status,
        "reason": reason,
        "energy_drift_rel": drift_max,
        "l1_initial": l1_initial,
        "l1_final": last.l1,
        "q_final": last.q_pointwise,
        "events": events,
        "absorbed_weight": absorbed_weight,
        "absorbed_count": absorbed_count,
        "bounces": bounces,
        "encounter_groups": stepper.encounter_groups,
        "beta_max_ratio": beta.max_ratio if beta else None,
        "beta_min_ratio": beta.min_ratio if beta else None,
        "beta_nonpositive_entries": beta.nonpositive_entries if beta else None,
        "t_final": last.t,
        "config_hash": config.hash(),
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "plot.gp", "w") as fh:
        fh.write(f"# {header}\nE0 = {_fmt(e0)}\n" + PLOT_SCRIPT)
    return RunResult(status, reason, summary, recorder.rows, exit_code)
