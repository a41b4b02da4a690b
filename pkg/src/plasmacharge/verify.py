"""Verification suites behind ``sim verify``.

Each suite is a list of named checks. A check returns ``(ok, detail)``;
the suite runner times it, collects the results and writes a JUnit XML
report. The check functions return their measured values as well, so the
same numbers can be inspected from tests.
"""

from __future__ import annotations

import math
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from .charges import ChargeState, integrate_charges, step_charges
from .config import RunConfig, load_config
from .geometry import ellipse, reflect_many, unit_disk
from .greens import (
    BoundaryDensity,
    BoundaryFlavor,
    GreenEvaluator,
    disk_green,
    disk_robin,
    halfspace_robin,
)

# ----------------------------------------------------------------------
# benchmark configurations
# ----------------------------------------------------------------------
NEUMANN_BENCHMARK = {
    "domain": {"shape": "disk"},
    "flavor": "neumann",
    "boundary_rule": "reflection",
    "h_N": "uniform",
    "h_cha": "uniform",
    "charges": [{"xi": [0.3, 0.1], "eta": [0.0, 0.0]}],
    "plasma": [
        {"x": [-0.6, -0.1], "y": [-0.4, 0.4], "vx": [-0.5, 0.5], "vy": [-0.5, 0.5], "weight": 1.0, "count": 2000}
    ],
    "dt": 5e-4,
    "T": 1.0,
    "stride": 20,
    "seed": 0,
    "delta1": 0.05,
}

# outward-moving plasma next to the wall, absorbed on contact
ABSORPTION_BENCHMARK = {
    "domain": {"shape": "disk"},
    "flavor": "dirichlet",
    "boundary_rule": "absorption",
    "charges": [{"xi": [0.3, 0.1], "eta": [0.0, 0.0]}],
    "plasma": [
        {"x": [-0.6, -0.1], "y": [-0.4, 0.4], "vx": [-1.0, 0.2], "vy": [-0.5, 0.5], "weight": 1.0, "count": 2000}
    ],
    "dt": 5e-4,
    "T": 1.0,
    "stride": 20,
    "seed": 0,
    "delta1": 0.05,
}


def probe_points(n: int = 50, r_max: float = 0.9) -> np.ndarray:
    """Deterministic points of the disk of radius ``r_max``."""
    u = qmc.Halton(d=2, scramble=False).random(n + 1)[1:]
    r = r_max * np.sqrt(u[:, 0])
    t = 2 * np.pi * u[:, 1]
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


# ----------------------------------------------------------------------
# greens
# ----------------------------------------------------------------------
def greens_identities() -> dict:
    """Errors of the analytic kernel identities."""
    rng = np.random.default_rng(7)
    pts = probe_points(40)
    theta = rng.uniform(0, 2 * np.pi, 40)
    wall = np.column_stack([np.cos(theta), np.sin(theta)])
    trace = max(abs(disk_green("d", w, y)) for w in wall for y in pts)
    sym = 0.0
    for flavor in ("d", "n"):
        for x in pts[:20]:
            for y in pts[20:]:
                sym = max(sym, abs(disk_green(flavor, x, y) - disk_green(flavor, y, x)))
    half = {
        "R_D(x1=0.5,d=2)": (halfspace_robin("d", np.array([0.5, 0.0]), 2), 0.0),
        "R_D(x1=0.25,d=3)": (halfspace_robin("d", np.array([0.25, 0.0, 0.0]), 3), 1.0 / (2 * np.pi)),
        "R_N(x1=0.5,d=2)": (halfspace_robin("n", np.array([0.5, 0.0]), 2), 0.0),
        "R_N(x1=0.25,d=3)": (halfspace_robin("n", np.array([0.25, 0.0, 0.0]), 3), -1.0 / (2 * np.pi)),
    }
    half_err = max(abs(v - ref) for v, ref in half.values())
    return {"trace": trace, "symmetry": sym, "halfspace": half_err}


def robin_monotonicity(n_b: int = 1024) -> dict:
    """Robin values along inward normals on the disk and an ellipse."""
    depths = np.array([0.2, 0.1, 0.05, 0.02])
    out = {"monotone": True, "compensated_max": 0.0, "samples": []}
    for domain in (unit_disk(), ellipse(1.5, 1.0)):
        for flavor in (BoundaryFlavor.DIRICHLET, BoundaryFlavor.NEUMANN):
            ev = GreenEvaluator.for_domain(domain, flavor, n_b=n_b).fit()
            for mu in np.linspace(0, 2 * np.pi, 8, endpoint=False):
                x0 = domain.point(np.array([mu]))[0]
                n = domain.normal(np.array([mu]))[0]
                pts = x0[None, :] - depths[:, None] * n[None, :]
                r = np.atleast_1d(ev.robin(pts))
                steps = np.diff(r)
                if flavor is BoundaryFlavor.DIRICHLET:
                    ok = bool(np.all(steps > 0))
                    comp = r + np.log(2 * depths) / (2 * np.pi)
                else:
                    ok = bool(np.all(steps < 0))
                    comp = r - np.log(2 * depths) / (2 * np.pi)
                out["monotone"] &= ok
                out["compensated_max"] = max(out["compensated_max"], float(np.max(np.abs(comp))))
                out["samples"].append((domain.kind, flavor.name, float(mu), r.tolist()))
    return out


# ----------------------------------------------------------------------
# bem
# ----------------------------------------------------------------------
def bem_convergence(n_list=(64, 128, 256), n_probe: int = 50) -> dict:
    """Nystrom Robin errors on the disk against the closed forms."""
    pts = probe_points(n_probe)
    errors = {}
    for flavor in (BoundaryFlavor.DIRICHLET, BoundaryFlavor.NEUMANN):
        exact = GreenEvaluator(unit_disk(), flavor).robin(pts)
        errs = []
        for n_b in n_list:
            num = GreenEvaluator(unit_disk(), flavor, backend="bem", n_b=n_b).fit().robin(pts)
            errs.append(float(np.max(np.abs(num - exact))))
        errors[flavor.name] = errs
    orders = {}
    for name, errs in errors.items():
        e = np.maximum(np.array(errs), 1e-16)
        orders[name] = float(np.min(np.log2(e[:-1] / e[1:])))
    return {"errors": errors, "orders": orders, "n_list": list(n_list)}


# ----------------------------------------------------------------------
# charges near the wall
# ----------------------------------------------------------------------
def charge_wall_runs(T: float = 10.0, dt: float = 1e-3) -> dict:
    """Dirichlet release at rest and Neumann outward shot on the unit disk."""
    disk = unit_disk()
    ev_d = GreenEvaluator(disk, "d")
    dir_traj = integrate_charges(
        ChargeState([[0.5, 0.0]], [[0.0, 0.0]]), ev_d, dt, T, BoundaryDensity.zero(), stop_distance=0.02
    )
    r = np.linalg.norm(dir_traj.xi[:, 0, :], axis=1)
    ev_n = GreenEvaluator(disk, "n")
    neu_traj = integrate_charges(
        ChargeState([[0.5, 0.0]], [[0.6, 0.0]]), ev_n, dt, T, BoundaryDensity.uniform(1.0, disk), stride=10
    )
    rn = np.linalg.norm(neu_traj.xi[:, 0, :], axis=1)
    vr = np.sum(neu_traj.xi[:, 0, :] * neu_traj.eta[:, 0, :], axis=1)
    return {
        "dirichlet_monotone_outward": bool(np.all(np.diff(r) > 0)),
        "dirichlet_final_distance": float(1 - r[-1]),
        "dirichlet_status": dir_traj.status,
        "neumann_turned": bool(np.any(vr < 0) and vr[0] > 0),
        "neumann_min_distance": float(np.min(1 - rn)),
        "neumann_status": neu_traj.status,
    }


# ----------------------------------------------------------------------
# specular invariants and reversibility
# ----------------------------------------------------------------------
def specular_invariants(n: int = 100000) -> dict:
    rng = np.random.default_rng(3)
    speed_err = 0.0
    invol_err = 0.0
    for domain in (unit_disk(), ellipse(1.5, 1.0)):
        mu = rng.uniform(0, 2 * np.pi, n)
        normals = domain.normal(mu)
        v = rng.normal(size=(n, 2))
        speed = np.linalg.norm(v, axis=1)
        w = reflect_many(normals, v)
        speed_err = max(speed_err, float(np.max(np.abs(np.linalg.norm(w, axis=1) - speed) / speed)))
        back = reflect_many(normals, w)
        invol_err = max(invol_err, float(np.max(np.linalg.norm(back - v, axis=1) / speed)))
    return {"speed": speed_err, "involution": invol_err, "machine_eps": float(np.finfo(float).eps)}


def charge_time_reversal(n_steps: int = 2000, dt: float = 1e-3) -> float:
    """Forward, flip velocities, forward again: distance to the start."""
    disk = unit_disk()
    ev = GreenEvaluator(disk, "n")
    h = BoundaryDensity.uniform(2.0, disk)
    start = ChargeState([[0.4, 0.1], [-0.3, -0.2]], [[0.1, 0.3], [-0.2, 0.05]])
    state = start.copy()
    for _ in range(n_steps):
        state = step_charges(state, ev, dt, h)
    state.eta = -state.eta
    for _ in range(n_steps):
        state = step_charges(state, ev, dt, h)
    return float(max(np.max(np.abs(state.xi - start.xi)), np.max(np.abs(state.eta + start.eta))))


# ----------------------------------------------------------------------
# coupled benchmarks
# ----------------------------------------------------------------------
@dataclass
class BenchmarkResult:
    dt: float
    drift: float
    l1: list
    absorbed: list
    beta_max: float = 1.0
    beta_min: float = 1.0
    beta_nonpositive: int = 0
    grazing_traps: int = 0
    status: str = "ok"
    reason: str = ""
    bookkeeping_exact: bool = True
    log_q: list = field(default_factory=list)
    times: list = field(default_factory=list)
    seconds: float = 0.0


def run_benchmark(raw: dict, dt: float | None = None, T: float | None = None) -> BenchmarkResult:
    """Integrate a benchmark configuration, tracking the acceptance observables."""
    from .diagnostics import BetaMonitor, Recorder
    from .errors import GrazingTrap, PlasmaChargeError
    from .simulation import build_system, stability_bound
    from .plasma import CoupledStepper

    over = {}
    if dt is not None:
        over["dt"] = dt
        # keep the record times of the base configuration
        ratio = float(raw.get("dt", dt)) / dt
        if abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1:
            over["stride"] = int(raw.get("stride", 1)) * int(round(ratio))
    if T is not None:
        over["T"] = T
    config = RunConfig({**raw, **over})
    start = time.perf_counter()
    evaluator, model, ens, charges = build_system(config)
    absorbing = config.rule == "absorption"
    stepper = CoupledStepper(model, config.rule, encounter_radius=config.encounter_radius)
    beta = BetaMonitor(config.domain, config.h_N) if (evaluator.neumann and not absorbing) else None
    rec = Recorder(model, absorbing=absorbing, K1=config.K1, beta_monitor=beta)
    rec.observe(ens, charges)
    e0 = rec.record(0.0, ens, charges).energy
    out = BenchmarkResult(config.dt, 0.0, [rec.rows[0].l1], [0.0])
    out.times.append(0.0)
    out.log_q.append(math.log(rec.q))
    absorbed = 0.0
    removed_w: list[float] = []
    initial_l1 = math.fsum(ens.weights)
    for k in range(1, config.n_steps + 1):
        try:
            if config.dt > stability_bound(ens, charges):
                raise PlasmaChargeError("time step above the stability bound", "timestep-stability")
            stats = stepper.step(ens, charges, config.dt)
        except GrazingTrap as exc:
            out.grazing_traps += 1
            out.status, out.reason = "error", str(exc)
            break
        except PlasmaChargeError as exc:
            out.status, out.reason = "error", str(exc)
            break
        w = math.fsum(e.weight for e in stats.events)
        removed_w.extend(e.weight for e in stats.events)
        absorbed += w
        rec.observe(ens, charges, config.dt, stats.flux_energy, w)
        if k % config.stride == 0 or k == config.n_steps:
            r = rec.record(k * config.dt, ens, charges)
            out.drift = max(out.drift, abs(r.energy - e0) / abs(e0))
            out.l1.append(r.l1)
            out.absorbed.append(math.fsum(removed_w))
            # alive and removed weights together must sum to the initial mass
            alive_w = ens.weights[ens.alive].tolist()
            out.bookkeeping_exact &= math.fsum(alive_w + removed_w) == initial_l1
            out.times.append(r.t)
            out.log_q.append(math.log(r.q_pointwise))
    if beta is not None:
        out.beta_max, out.beta_min, out.beta_nonpositive = beta.max_ratio, beta.min_ratio, beta.nonpositive_entries
    out.seconds = time.perf_counter() - start
    return out


# ----------------------------------------------------------------------
# desingularization
# ----------------------------------------------------------------------
DESING_DEFAULTS = {
    "epsilons": [0.1, 0.05, 0.025],
    "T": 0.5,
    "dt": 1e-3,
    "stride": 10,
    "particles_per_blob": 2000,
    "cutoff_constant": 1.0,
}

DESING_BENCHMARK = {
    "domain": {"shape": "disk"},
    "flavor": "neumann",
    "charges": [{"xi": [0.5, 0.0], "eta": [0.0, 0.0]}],
    "desing": dict(DESING_DEFAULTS),
}


def desing_sweep(config: RunConfig, seed: int | None = None):
    """Sweep table for the ``desing`` section of a run configuration."""
    from .desingularization import BlobSpec, sweep

    opts = {**DESING_DEFAULTS, **(config.raw.get("desing") or {})}
    evaluator = GreenEvaluator.for_domain(config.domain, config.flavor, n_b=config.n_b).fit()
    spec = BlobSpec(
        epsilon=opts["epsilons"][0],
        xi0=config.xi0(),
        eta0=config.eta0(),
        particles_per_blob=int(opts["particles_per_blob"]),
        cutoff_constant=float(opts["cutoff_constant"]),
        seed=config.seed if seed is None else seed,
    )
    return sweep(spec, evaluator, config.h_cha, opts["epsilons"], float(opts["T"]), float(opts["dt"]), int(opts["stride"]))


def desing_sweep_from_config(path, out_dir, seed: int | None = None):
    """``sim desing-sweep``: run the sweep and write its CSV and plot script."""
    from .desingularization import sweep_plot_script, write_sweep

    config = load_config(path)
    rows = desing_sweep(config, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep(out / "desing_sweep.csv", rows, f"config_hash={config.hash()}")
    (out / "desing_sweep.gp").write_text(sweep_plot_script())
    return rows


# ----------------------------------------------------------------------
# suites
# ----------------------------------------------------------------------
@dataclass
class Case:
    name: str
    ok: bool
    detail: str
    seconds: float


@dataclass
class Report:
    suite: str
    cases: list

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.cases)

    def to_junit(self) -> ET.ElementTree:
        suite = ET.Element(
            "testsuite",
            name=self.suite,
            tests=str(len(self.cases)),
            failures=str(sum(not c.ok for c in self.cases)),
        )
        for c in self.cases:
            tc = ET.SubElement(suite, "testcase", classname=f"sim.{self.suite}", name=c.name, time=f"{c.seconds:.3f}")
            if not c.ok:
                ET.SubElement(tc, "failure", message=c.detail)
            else:
                ET.SubElement(tc, "system-out").text = c.detail
        return ET.ElementTree(suite)


def _greens_checks():
    ids = greens_identities()
    yield "disk-dirichlet-trace", ids["trace"] <= 1e-12, f"max |G_D| on the wall {ids['trace']:.2e}"
    yield "disk-symmetry", ids["symmetry"] <= 1e-13, f"max asymmetry {ids['symmetry']:.2e}"
    yield "halfspace-robin", ids["halfspace"] <= 1e-12, f"max error {ids['halfspace']:.2e}"
    x = np.array([0.5, 0.0])
    r = disk_robin("n", x)
    ref = (math.log(0.75) - 0.25) / (2 * math.pi)
    yield "disk-robin-neumann", abs(r - ref) <= 1e-14, f"R_N(0.5,0) = {r:.15f}"
    mono = robin_monotonicity()
    yield "robin-monotone", mono["monotone"], "R_D up, R_N down towards the wall"
    yield "robin-log-compensated", mono["compensated_max"] <= 1.0, f"max |compensated| {mono['compensated_max']:.3f}"


def _bem_checks():
    conv = bem_convergence()
    for name in conv["errors"]:
        errs = conv["errors"][name]
        yield f"bem-{name.lower()}-256", errs[-1] <= 1e-5, f"errors {['%.2e' % e for e in errs]}"
        yield f"bem-{name.lower()}-order", conv["orders"][name] >= 2, f"observed order {conv['orders'][name]:.2f}"


def _conserve_checks():
    inv = specular_invariants()
    yield "reflection-speed", inv["speed"] <= 1e-13, f"max relative speed change {inv['speed']:.2e}"
    yield "reflection-involution", inv["involution"] <= inv["machine_eps"], f"max error {inv['involution']:.2e}"
    rev = charge_time_reversal()
    yield "charge-time-reversal", rev <= 1e-10, f"return error {rev:.2e}"
    walls = charge_wall_runs()
    yield "dirichlet-wall-approach", walls["dirichlet_monotone_outward"], (
        f"final wall distance {walls['dirichlet_final_distance']:.3f} ({walls['dirichlet_status']})"
    )
    yield "neumann-turn-around", walls["neumann_turned"] and walls["neumann_min_distance"] > 0, (
        f"min wall distance {walls['neumann_min_distance']:.4f}"
    )
    coarse = run_benchmark(NEUMANN_BENCHMARK)
    yield "neumann-drift", coarse.status == "ok" and coarse.drift <= 1e-3, f"drift {coarse.drift:.3e} ({coarse.seconds:.0f} s)"
    yield "neumann-l1", len(set(coarse.l1)) == 1, "total weight constant"
    fine = run_benchmark(NEUMANN_BENCHMARK, dt=NEUMANN_BENCHMARK["dt"] / 2)
    ratio = coarse.drift / fine.drift if fine.drift > 0 else math.inf
    yield "neumann-dt-halving", ratio >= 3.5, f"drift ratio {ratio:.2f}"
    yield "beta-ratios", 1 / 50 <= coarse.beta_min and coarse.beta_max <= 50, (
        f"beta ratio range [{coarse.beta_min:.3f}, {coarse.beta_max:.3f}]"
    )
    yield "grazing-traps", coarse.grazing_traps == 0, f"{coarse.grazing_traps} grazing traps"
    ab = run_benchmark(ABSORPTION_BENCHMARK)
    yield "absorption-bookkeeping", ab.bookkeeping_exact, f"absorbed weight {ab.absorbed[-1]:.4f}"
    yield "absorption-energy", ab.status == "ok" and ab.drift <= 1e-3, f"drift with flux {ab.drift:.3e}"


def _desing_checks():
    rows = desing_sweep(RunConfig(DESING_BENCHMARK))
    sup = [r.sup_p for r in rows]
    dec = all(b < a for a, b in zip(sup, sup[1:]))
    yield "desing-monotone", dec, "sup p: " + ", ".join(f"{s:.3e}" for s in sup)
    yield "desing-ratio", sup[-1] <= 0.2 * sup[0], f"ratio {sup[-1] / sup[0]:.3f}"


_SUITES = {
    "greens": _greens_checks,
    "bem": _bem_checks,
    "conserve": _conserve_checks,
    "desing": _desing_checks,
}


def run_suite(name: str, out_dir=None) -> Report:
    """Run a suite and, if ``out_dir`` is given, write ``junit-<name>.xml``."""
    if name not in _SUITES:
        raise ValueError(f"unknown suite {name!r}")
    cases = []
    gen = _SUITES[name]()
    while True:
        start = time.perf_counter()
        try:
            case_name, ok, detail = next(gen)
        except StopIteration:
            break
        cases.append(Case(case_name, bool(ok), detail, time.perf_counter() - start))
    report = Report(name, cases)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.to_junit().write(out / f"junit-{name}.xml", encoding="unicode")
    return report
