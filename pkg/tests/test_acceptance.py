"""Acceptance criteria 1-9, each at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line (run with ``-s`` to see them).
The Neumann benchmark is shared between criteria 5 and 7.
"""

import math
import subprocess
import sys
import time

import pytest

from plasmacharge.config import RunConfig
from plasmacharge.verify import (
    ABSORPTION_BENCHMARK,
    DESING_BENCHMARK,
    NEUMANN_BENCHMARK,
    bem_convergence,
    charge_time_reversal,
    charge_wall_runs,
    desing_sweep,
    greens_identities,
    robin_monotonicity,
    run_benchmark,
    specular_invariants,
)


def report(number: int, ok: bool, detail: str) -> None:
    print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
    assert ok, detail


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start


@pytest.fixture(scope="module")
def neumann_runs():
    coarse = run_benchmark(NEUMANN_BENCHMARK)
    fine = run_benchmark(NEUMANN_BENCHMARK, dt=NEUMANN_BENCHMARK["dt"] / 2)
    return coarse, fine


def test_criterion_1_kernel_identities():
    greens_identities()  # warm up compiled kernels
    ids, seconds = timed(greens_identities)
    ok = ids["trace"] <= 1e-12 and ids["symmetry"] <= 1e-13 and ids["halfspace"] <= 1e-12 and seconds < 1.0
    report(
        1,
        ok,
        f"trace {ids['trace']:.1e}, symmetry {ids['symmetry']:.1e}, half-plane {ids['halfspace']:.1e}, {seconds:.2f} s",
    )


def test_criterion_2_nystrom_matches_exact_robin():
    conv, seconds = timed(bem_convergence)
    err = max(errs[-1] for errs in conv["errors"].values())
    order = min(conv["orders"].values())
    ok = err <= 1e-5 and order >= 2 and seconds < 30
    report(2, ok, f"max error at n_b=256 {err:.1e}, observed order {order:.2f}, {seconds:.1f} s")


def test_criterion_3_robin_monotone_near_the_wall():
    mono, seconds = timed(robin_monotonicity)
    ok = mono["monotone"] and mono["compensated_max"] <= 1.0 and seconds < 10
    report(3, ok, f"monotone {mono['monotone']}, max |compensated| {mono['compensated_max']:.3f}, {seconds:.1f} s")


def test_criterion_4_charge_boundary_force_signs():
    walls, seconds = timed(charge_wall_runs)
    ok = (
        walls["dirichlet_monotone_outward"]
        and walls["neumann_turned"]
        and walls["neumann_min_distance"] > 0
        and seconds < 10
    )
    report(
        4,
        ok,
        f"Dirichlet approach {walls['dirichlet_monotone_outward']} (final distance "
        f"{walls['dirichlet_final_distance']:.3f}), Neumann turn-around {walls['neumann_turned']}, "
        f"Neumann floor {walls['neumann_min_distance']:.4f}, {seconds:.1f} s",
    )


def test_criterion_5_conservation(neumann_runs):
    coarse, fine = neumann_runs
    absorb = run_benchmark(ABSORPTION_BENCHMARK)
    ratio = coarse.drift / fine.drift if fine.drift > 0 else math.inf
    l1_const = len(set(coarse.l1)) == 1 and len(set(fine.l1)) == 1
    ok = (
        coarse.status == "ok"
        and fine.status == "ok"
        and coarse.drift <= 1e-3
        and l1_const
        and ratio >= 3.5
        and absorb.status == "ok"
        and absorb.bookkeeping_exact
        and absorb.drift <= 1e-3
        and max(coarse.seconds, fine.seconds, absorb.seconds) < 600
    )
    report(
        5,
        ok,
        f"drift {coarse.drift:.2e} (dt/2: {fine.drift:.2e}, ratio {ratio:.2f}), l1 constant {l1_const}; "
        f"absorption: bookkeeping exact {absorb.bookkeeping_exact}, absorbed {absorb.absorbed[-1]:.4f}, "
        f"drift with flux {absorb.drift:.2e}; runtimes {coarse.seconds:.0f}/{fine.seconds:.0f}/{absorb.seconds:.0f} s",
    )


def test_criterion_6_specular_invariants():
    inv = specular_invariants()
    rev = charge_time_reversal()
    ok = inv["speed"] <= 1e-13 and inv["involution"] <= inv["machine_eps"] and rev <= 1e-10
    report(
        6,
        ok,
        f"speed {inv['speed']:.1e}, involution round trip {inv['involution']:.1e} "
        f"(eps {inv['machine_eps']:.1e}), time reversal {rev:.1e}",
    )


def test_criterion_7_collar_monitor(neumann_runs):
    coarse, _ = neumann_runs
    ok = coarse.status == "ok" and 1 / 50 <= coarse.beta_min and coarse.beta_max <= 50 and coarse.grazing_traps == 0
    report(
        7,
        ok,
        f"beta ratios in [{coarse.beta_min:.3f}, {coarse.beta_max:.3f}], "
        f"{coarse.beta_nonpositive} nonpositive entries, {coarse.grazing_traps} grazing traps",
    )


def test_criterion_8_desingularization():
    rows, seconds = timed(desing_sweep, RunConfig(DESING_BENCHMARK))
    sup = [r.sup_p for r in rows]
    dec = all(b < a for a, b in zip(sup, sup[1:]))
    ratio = sup[-1] / sup[0]
    ok = dec and ratio <= 0.2 and seconds < 1200
    report(
        8,
        ok,
        "sup p " + ", ".join(f"{s:.3e}" for s in sup) + f"; strictly decreasing {dec}, ratio {ratio:.3f}, "
        f"sigma {rows[0].sigma:.4g}, {seconds:.0f} s",
    )


DETERMINISM_CONFIG = """
domain: {shape: disk}
flavor: neumann
charges:
  - {xi: [0.3, 0.1], eta: [0.0, 0.0]}
plasma:
  - {x: [-0.6, -0.1], y: [-0.4, 0.4], vx: [-0.5, 0.5], vy: [-0.5, 0.5], weight: 1.0, count: 2000}
dt: 5.0e-4
T: 0.05
stride: 5
seed: 3
delta1: 0.05
"""


def test_criterion_9_determinism(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(DETERMINISM_CONFIG)
    runs = {}
    for name, threads in (("a", 1), ("b", 4), ("c", 4)):
        out = tmp_path / name
        subprocess.run(
            [sys.executable, "-m", "plasmacharge.cli", "run", str(cfg), "--out", str(out),
             "--threads", str(threads), "--snapshot-every", "50"],
            check=True,
            capture_output=True,
        )
        runs[name] = {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}
    same = runs["a"] == runs["b"] == runs["c"] and len(runs["a"]) >= 3
    report(9, same, f"{len(runs['a'])} CSV files identical across --threads 1, 4 and a repeat: {same}")
