import math

import numpy as np
import pytest

from plasmacharge.bem import assemble, evaluate_harmonic, robin_numeric, solve_density
from plasmacharge.errors import ConfigError, NearBoundaryError
from plasmacharge.geometry import ellipse, unit_disk
from plasmacharge.greens import BoundaryDensity, GreenEvaluator

DISK = unit_disk()
ELL = ellipse(1.5, 1.0)


@pytest.fixture(scope="module")
def disk_d256():
    return assemble(DISK, "d", 256)


@pytest.fixture(scope="module")
def disk_n256():
    return assemble(DISK, "n", 256)


def test_disk_double_layer_is_constant(disk_d256):
    assert np.max(np.abs(disk_d256.kernel - 1 / (4 * math.pi))) <= 1e-10


def test_gauss_row_sums(disk_d256):
    ell = assemble(ELL, "d", 256)
    for sys in (disk_d256, ell):
        rows = sys.kernel @ sys.quad.weights
        assert np.max(np.abs(rows - 0.5)) <= 1e-8


def test_dirichlet_kernel_nonnegative_on_convex_boundary():
    assert np.min(assemble(ELL, "d", 128).kernel) >= 0.0


def test_conditioning_reported():
    for flavor in ("d", "n"):
        sys = assemble(ELL, flavor, 128)
        assert 1.0 <= sys.condition < 1e6


def test_minimum_resolution():
    with pytest.raises(ConfigError):
        assemble(DISK, "d", 16)


def test_zero_data_zero_density(disk_d256):
    assert np.all(solve_density(disk_d256, np.zeros(256)) == 0.0)


def test_linearity(disk_d256, rng):
    data = rng.normal(size=256)
    k1 = solve_density(disk_d256, data)
    k2 = solve_density(disk_d256, 2 * data)
    assert np.max(np.abs(k2 - 2 * k1)) <= 1e-13 * np.max(np.abs(k1))


def test_nan_data_rejected(disk_d256):
    data = np.zeros(256)
    data[3] = np.nan
    with pytest.raises(ConfigError):
        solve_density(disk_d256, data)


def test_fredholm_residual(disk_n256, rng):
    solve_density(disk_n256, rng.normal(size=256) - 0.0)
    assert disk_n256.last_residual <= 1e-10


def test_zero_density_evaluates_to_zero(disk_d256):
    assert evaluate_harmonic(disk_d256, np.zeros(256), [0.2, 0.1]) == 0.0


def test_dirichlet_harmonic_part_from_density(disk_d256):
    y = np.array([[0.3, 0.0]])
    dens = solve_density(disk_d256, disk_d256.boundary_data(y))[:, 0]
    val = evaluate_harmonic(disk_d256, dens, [0.5, 0.1])
    exact = GreenEvaluator(DISK, "d").harmonic([0.5, 0.1], [0.3, 0.0])
    assert val == pytest.approx(exact, abs=1e-6)


def test_center_source_has_zero_dirichlet_harmonic_part(disk_d256):
    x = np.array([[0.2, -0.4], [0.5, 0.5], [0.0, 0.0]])
    vals = disk_d256.harmonic_matrix(x, np.zeros((1, 2)))
    assert np.max(np.abs(vals)) <= 1e-8


def test_neumann_harmonic_part_matches_exact(disk_n256):
    x, y = np.array([[-0.2, 0.4]]), np.array([[0.3, 0.0]])
    exact = GreenEvaluator(DISK, "n").harmonic(x[0], y[0])
    assert disk_n256.harmonic_matrix(x, y)[0, 0] == pytest.approx(exact, abs=1e-6)


def test_robin_numeric_values(disk_d256):
    assert robin_numeric(disk_d256, [0.5, 0.0]) == pytest.approx(-math.log(0.75) / (2 * math.pi), abs=1e-5)
    assert robin_numeric(disk_d256, [0.0, 0.0]) == pytest.approx(0.0, abs=1e-8)


def test_ellipse_robin_self_convergence():
    vals = [float(robin_numeric(assemble(ELL, "d", n), [0.0, 0.0])) for n in (64, 128, 256, 512)]
    d = np.abs(np.diff(vals))
    # successive differences shrink at least at second order
    assert np.all(d[1:] <= d[:-1] / 4 + 1e-15)
    rich = vals[-1] + (vals[-1] - vals[-2]) / 3
    assert abs(vals[-1] - rich) <= 1e-8


def test_near_boundary_refused(disk_d256):
    with pytest.raises(NearBoundaryError):
        disk_d256.robin(np.array([[0.9999, 0.0]]))


def test_bem_symmetry(rng):
    ev = GreenEvaluator(ELL, "n", backend="bem", n_b=256).fit()
    x = rng.uniform(-0.5, 0.5, (40, 2))
    y = rng.uniform(-0.5, 0.5, (40, 2))
    g = ev.harmonic_matrix(x, y)
    gt = ev.harmonic_matrix(y, x)
    assert np.max(np.abs(g - gt.T)) <= 1e-6


def test_bem_convergence_order_against_exact(rng):
    r = 0.9 * np.sqrt(rng.uniform(0, 1, 200))
    t = rng.uniform(0, 2 * np.pi, 200)
    pts = np.column_stack([r * np.cos(t), r * np.sin(t)])
    x, y = pts[:100], pts[100:]
    for flavor in ("d", "n"):
        exact = GreenEvaluator(DISK, flavor).harmonic_matrix(x, y)
        errs = []
        for n in (64, 128, 256):
            sys = assemble(DISK, flavor, n)
            errs.append(np.max(np.abs(sys.harmonic_matrix(x, y) - exact)))
        errs = np.maximum(errs, 1e-16)
        assert np.all(np.log2(errs[:-1] / errs[1:]) >= 2) or errs[-1] <= 1e-12


def test_dirichlet_trace_on_shrinking_circles():
    ev = GreenEvaluator(ELL, "d", backend="bem", n_b=512).fit()
    y = np.array([[0.2, 0.1]])
    mu = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    maxima = []
    for gap in (0.2, 0.1, 0.05):
        pts = ELL.point(mu) - gap * ELL.normal(mu)
        maxima.append(np.max(np.abs(ev.green_matrix(pts, y))))
    assert maxima[0] > maxima[1] > maxima[2]


def test_neumann_boundary_potential_gradient_matches_disk():
    h = BoundaryDensity.uniform(1.0, DISK)
    exact = GreenEvaluator(DISK, "n")
    num = GreenEvaluator(DISK, "n", backend="bem", n_b=256).fit()
    x = np.array([[0.3, -0.2], [0.0, 0.5]])
    assert np.allclose(num.grad_boundary_potential(h, x), exact.grad_boundary_potential(h, x), atol=1e-8)


def test_dump_writes_header(tmp_path):
    sys = assemble(DISK, "d", 32)
    path = tmp_path / "k.csv"
    sys.dump(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# nystrom kernel")
    assert len(lines) == 33
