"""Green and Robin functions of the Laplacian.

Conventions: the fundamental solution is ``G = ln|x-y| / (2 pi)`` in 2D
and ``-1 / (4 pi |x-y|)`` in 3D, so ``Delta G = delta`` and the force
``grad_x G`` pushes like charges apart. For a domain the Green function
splits as ``G_# = G + gbar_#`` with a smooth harmonic part ``gbar_#``; the
Robin function is ``R_#(x) = gbar_#(x, x)``.

Neumann Green functions are only defined up to a constant. Every
:class:`GreenEvaluator` returns the symmetric representative with zero
mean over the domain in each argument, so exact and numerical backends
agree. The closed forms :func:`disk_green` and :func:`disk_robin` are the
plain formulas without that constant.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, DomainError, NotFittedError
from .geometry import ConvexDomain

INV_2PI = 1.0 / (2.0 * np.pi)
INV_4PI = 1.0 / (4.0 * np.pi)
# zero-mean gauge constant of the unit-disk Neumann function
DISK_NEUMANN_GAUGE = 3.0 / (8.0 * np.pi)
_TOL = 1e-12


class BoundaryFlavor(enum.Enum):
    """Boundary condition of the potential."""

    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"

    @classmethod
    def parse(cls, value) -> "BoundaryFlavor":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for member in cls:
            if key in (member.value, member.value[0]):
                return member
        raise ConfigError(f"unknown boundary flavor {value!r}", "boundary-flavor")


def _flavor(value) -> BoundaryFlavor:
    return BoundaryFlavor.parse(value)


# ----------------------------------------------------------------------
# fundamental solution
# ----------------------------------------------------------------------
def fundamental_solution(x, y, d: int = 2) -> float:
    """Fundamental solution of the Laplacian in dimension 2 or 3."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = float(np.linalg.norm(x - y))
    if r == 0.0:
        raise DomainError("diagonal singularity x == y", "diagonal")
    if d == 2:
        return float(np.log(r) * INV_2PI)
    if d == 3:
        return float(-INV_4PI / r)
    raise ValueError("dimension must be 2 or 3")


def grad_fundamental(x, y) -> np.ndarray:
    """Gradient in ``x`` of the 2D fundamental solution."""
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r2 = float(diff @ diff)
    if r2 == 0.0:
        raise DomainError("diagonal singularity x == y", "diagonal")
    return diff * INV_2PI / r2


def _fund_matrix(x, y):
    diff = x[:, None, :] - y[None, :, :]
    r2 = np.sum(diff * diff, axis=-1)
    with np.errstate(divide="ignore"):
        return 0.5 * np.log(r2) * INV_2PI


def _grad_fund_matrix(x, y):
    diff = x[:, None, :] - y[None, :, :]
    r2 = np.sum(diff * diff, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return diff * (INV_2PI / r2)[..., None]


# ----------------------------------------------------------------------
# unit disk
# ----------------------------------------------------------------------
def _check_disk(x, closed: bool, name: str = "point"):
    r2 = np.sum(np.asarray(x) ** 2, axis=-1)
    bad = r2 > 1.0 + 1e-12 if closed else r2 >= 1.0
    if np.any(bad):
        raise DomainError(f"{name} outside the unit disk")


def _disk_image_den(x, y):
    # |x|y| - y/|y||^2 written without the division, smooth at y = 0
    r2x = np.sum(x * x, axis=-1)
    r2y = np.sum(y * y, axis=-1)
    return 1.0 - 2.0 * np.sum(x * y, axis=-1) + r2x * r2y


def _disk_harmonic(flavor: BoundaryFlavor, x, y, gauge: float = 0.0):
    den = _disk_image_den(x, y)
    with np.errstate(divide="ignore"):
        log_den = np.log(den)
    if flavor is BoundaryFlavor.DIRICHLET:
        return -log_den * INV_4PI
    r2 = np.sum(x * x, axis=-1) + np.sum(y * y, axis=-1)
    return log_den * INV_4PI - r2 * INV_4PI + gauge


def _disk_grad_harmonic(flavor: BoundaryFlavor, x, y):
    den = _disk_image_den(x, y)[..., None]
    r2y = np.sum(y * y, axis=-1)[..., None]
    z = (r2y * x - y) / den
    if flavor is BoundaryFlavor.DIRICHLET:
        return -z * INV_2PI
    return (z - x) * INV_2PI


def disk_green(flavor, x, y) -> float:
    """Closed-form Green function of the unit disk.

    Parameters
    ----------
    flavor : BoundaryFlavor or str
    x, y : array_like, shape (2,)
        Points of the closed unit disk, ``x != y``.

    Returns
    -------
    float
        Dirichlet: ``ln(|x-y| / |x|y| - y/|y||) / (2 pi)``.
        Neumann: ``ln(|x-y| |x|y| - y/|y||) / (2 pi) - (|x|^2 + |y|^2) / (4 pi)``.
    """
    flavor = _flavor(flavor)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_disk(x, True)
    _check_disk(y, True)
    return fundamental_solution(x, y) + float(_disk_harmonic(flavor, x, y))


def disk_robin(flavor, x) -> float:
    """Closed-form Robin function of the unit disk."""
    flavor = _flavor(flavor)
    x = np.asarray(x, dtype=float)
    _check_disk(x, False)
    r2 = float(x @ x)
    if flavor is BoundaryFlavor.DIRICHLET:
        return float(-np.log1p(-r2) * INV_2PI)
    return float((np.log1p(-r2) - r2) * INV_2PI)


# ----------------------------------------------------------------------
# half-space x_1 > 0
# ----------------------------------------------------------------------
def _mirror(y):
    y = np.array(y, dtype=float)
    y[..., 0] = -y[..., 0]
    return y


def halfspace_green(flavor, x, y, d: int = 2) -> float:
    """Green function of the half-space ``x_1 > 0`` by the image method."""
    flavor = _flavor(flavor)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (d,) or y.shape != (d,):
        raise ValueError(f"points must have shape ({d},)")
    if x[0] < -_TOL or y[0] < -_TOL:
        raise DomainError("point outside the half-space")
    sign = 1.0 if flavor is BoundaryFlavor.NEUMANN else -1.0
    return fundamental_solution(x, y, d) + sign * fundamental_solution(x, _mirror(y), d)


def halfspace_robin(flavor, x, d: int = 2) -> float:
    """Robin function of the half-space; depends on ``x_1`` only."""
    flavor = _flavor(flavor)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x1 = float(x[0])
    if x1 <= 0:
        raise DomainError("Robin function needs x_1 > 0")
    sign = 1.0 if flavor is BoundaryFlavor.NEUMANN else -1.0
    if d == 2:
        return sign * np.log(2.0 * x1) * INV_2PI
    if d == 3:
        return sign * (-INV_4PI / (2.0 * x1))
    raise ValueError("dimension must be 2 or 3")


# ----------------------------------------------------------------------
# cutoff profile
# ----------------------------------------------------------------------
def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10.0 - 15.0 * u + 6.0 * u * u)


def _smoothstep_der(u):
    inside = (u > 0.0) & (u < 1.0)
    return np.where(inside, 30.0 * u * u * (1.0 - u) ** 2, 0.0)


@dataclass(frozen=True)
class CutoffProfile:
    """Smooth cutoff ``chi`` with radius ``sigma``.

    ``chi = 1`` on ``[0, 1]``, ``0`` on ``[2, inf)`` and a quintic
    smoothstep in between. The kernel multiplier is
    ``chi_tilde(r) = 1 - chi(r / sigma)``.
    """

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("cutoff radius must be positive", "cutoff-radius")

    @staticmethod
    def chi(t):
        return 1.0 - _smoothstep(np.asarray(t, dtype=float) - 1.0)

    @staticmethod
    def chi_prime(t):
        return -_smoothstep_der(np.asarray(t, dtype=float) - 1.0)

    def chi_tilde(self, r):
        return 1.0 - self.chi(np.asarray(r, dtype=float) / self.sigma)

    def chi_tilde_prime(self, r):
        return -self.chi_prime(np.asarray(r, dtype=float) / self.sigma) / self.sigma


# ----------------------------------------------------------------------
# boundary densities
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class BoundaryDensity:
    """Smooth function on the boundary, as a Fourier series in ``mu``.

    ``h(mu) = a0 + sum_n a_n cos(n mu) + b_n sin(n mu)`` with
    ``coeffs = (a0, a1, b1, a2, b2, ...)``. ``mu`` is the boundary
    parameter of the domain (the polar angle on the unit disk).
    """

    coeffs: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        if len(c) == 0 or len(c) % 2 == 0:
            raise ConfigError("density needs (a0, a1, b1, ...) coefficients", "boundary-density")
        if not np.all(np.isfinite(c)):
            raise ConfigError("density coefficients must be finite", "boundary-density")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def uniform(cls, total: float, domain: ConvexDomain) -> "BoundaryDensity":
        """Constant density with the given boundary integral."""
        return cls((total / domain.perimeter,))

    @classmethod
    def zero(cls) -> "BoundaryDensity":
        return cls((0.0,))

    @property
    def modes(self):
        """Arrays ``(n, a_n, b_n)`` of the non-constant modes."""
        c = self.coeffs
        m = (len(c) - 1) // 2
        n = np.arange(1, m + 1, dtype=float)
        return n, np.asarray(c[1::2]), np.asarray(c[2::2])

    @property
    def is_zero(self) -> bool:
        return not any(self.coeffs)

    def values(self, mu):
        mu = np.asarray(mu, dtype=float)
        n, a, b = self.modes
        out = np.full(mu.shape, self.coeffs[0])
        if n.size:
            ang = mu[..., None] * n
            out = out + np.cos(ang) @ a + np.sin(ang) @ b
        return out

    def total(self, domain: ConvexDomain, n_b: int = 1024) -> float:
        """Boundary integral by the trapezoid rule."""
        q = domain.quadrature(n_b)
        return float(np.sum(self.values(q.mu) * q.weights))

    def minimum(self, n_scan: int = 4096) -> float:
        return float(np.min(self.values(np.linspace(0, 2 * np.pi, n_scan, endpoint=False))))

    def scaled(self, factor: float) -> "BoundaryDensity":
        return BoundaryDensity(tuple(factor * v for v in self.coeffs))


def density_from_config(value, total: float, domain: ConvexDomain) -> BoundaryDensity:
    """Parse ``"uniform"`` or ``{"fourier": [...]}`` (or a bare list)."""
    if value is None or value == "uniform":
        return BoundaryDensity.uniform(total, domain)
    if value == "zero":
        return BoundaryDensity.zero()
    if isinstance(value, dict) and "fourier" in value:
        return BoundaryDensity(tuple(value["fourier"]))
    if isinstance(value, (list, tuple)):
        return BoundaryDensity(tuple(value))
    raise ConfigError(f"cannot parse boundary density {value!r}", "boundary-density")


def _disk_boundary_potential(h: BoundaryDensity, x):
    # integral of the zero-mean Neumann function against h over the circle
    z = x[..., 0] + 1j * x[..., 1]
    n, a, b = h.modes
    a0 = h.coeffs[0]
    r2 = np.sum(x * x, axis=-1)
    out = -0.5 * a0 * (r2 + 1.0) + 0.75 * a0
    if n.size:
        zn = z[..., None] ** n
        out = out - (zn.real @ (a / n) + zn.imag @ (b / n))
    return out


def _disk_grad_boundary_potential(h: BoundaryDensity, x):
    z = x[..., 0] + 1j * x[..., 1]
    n, a, b = h.modes
    gx = -h.coeffs[0] * x[..., 0]
    gy = -h.coeffs[0] * x[..., 1]
    if n.size:
        zn1 = z[..., None] ** (n - 1)
        gx = gx - (zn1.real @ a + zn1.imag @ b)
        gy = gy - (-zn1.imag @ a + zn1.real @ b)
    return np.stack([gx, gy], axis=-1)


# ----------------------------------------------------------------------
# evaluator
# ----------------------------------------------------------------------
class GreenEvaluator:
    """Green-function engine for one domain and boundary flavor.

    Parameters
    ----------
    domain : ConvexDomain or None
        ``None`` only for the half-plane backend.
    flavor : BoundaryFlavor or str
    backend : {"exact_disk", "exact_halfspace", "bem"}
    n_b : int, optional
        Number of boundary nodes for the ``"bem"`` backend, which must be
        assembled with :meth:`fit` before use.

    Notes
    -----
    Neumann values are in the zero-mean gauge (see module docstring).
    Forces never depend on the gauge.
    """

    def __init__(self, domain, flavor, backend: str = "exact_disk", n_b: int = 256):
        self.domain = domain
        self.flavor = _flavor(flavor)
        self.backend = backend
        self.n_b = int(n_b)
        self.system = None
        if backend == "exact_disk":
            if domain is None or domain.kind != "unit_disk":
                raise ConfigError("exact_disk backend needs the unit disk", "backend")
        elif backend == "exact_halfspace":
            if domain is not None:
                raise ConfigError("half-plane backend takes domain=None", "backend")
        elif backend != "bem":
            raise ConfigError(f"unknown backend {backend!r}", "backend")
        self.neumann_volume = None if domain is None else domain.area
        self._gauge = DISK_NEUMANN_GAUGE if backend == "exact_disk" else 0.0

    @classmethod
    def for_domain(cls, domain: ConvexDomain, flavor, n_b: int = 256) -> "GreenEvaluator":
        """Exact backend on the unit disk, fitted Nystrom backend otherwise."""
        if domain.kind == "unit_disk":
            return cls(domain, flavor, "exact_disk")
        return cls(domain, flavor, "bem", n_b).fit()

    def fit(self) -> "GreenEvaluator":
        """Assemble and factorise the boundary integral system."""
        if self.backend != "bem":
            return self
        from .bem import assemble

        self.system = assemble(self.domain, self.flavor, self.n_b)
        return self

    def __repr__(self) -> str:
        return f"GreenEvaluator({self.domain!r}, {self.flavor.value}, {self.backend!r})"

    @property
    def is_disk(self) -> bool:
        return self.backend == "exact_disk"

    @property
    def neumann(self) -> bool:
        return self.flavor is BoundaryFlavor.NEUMANN

    def _require_fitted(self):
        if self.backend == "bem" and self.system is None:
            raise NotFittedError("call fit() before evaluating the Nystrom backend")

    def _check_points(self, x, closed: bool = False):
        x = np.asarray(x, dtype=float)
        if self.backend == "exact_disk":
            _check_disk(x, closed)
        elif self.backend == "exact_halfspace":
            if np.any(x[..., 0] < (-_TOL if closed else 0.0)) or (
                not closed and np.any(x[..., 0] == 0.0)
            ):
                raise DomainError("point outside the half-plane")
        else:
            level = self.domain.level(x)
            if np.any(level > (1e-12 if closed else 0.0)):
                raise DomainError("point outside the domain")
        return x

    # -- harmonic part -------------------------------------------------
    def harmonic_matrix(self, x, y):
        """Matrix of ``gbar_#(x_i, y_j)``."""
        x = np.atleast_2d(self._check_points(x, True))
        y = np.atleast_2d(self._check_points(y, True))
        if self.backend == "exact_disk":
            return _disk_harmonic(self.flavor, x[:, None, :], y[None, :, :], self._gauge)
        if self.backend == "exact_halfspace":
            sign = 1.0 if self.neumann else -1.0
            return sign * _fund_matrix(x, _mirror(y))
        self._require_fitted()
        return self.system.harmonic_matrix(x, y)

    def grad_harmonic_matrix(self, x, y):
        """Array ``grad_x gbar_#(x_i, y_j)`` of shape ``(n, m, 2)``."""
        x = np.atleast_2d(self._check_points(x, True))
        y = np.atleast_2d(self._check_points(y, True))
        if self.backend == "exact_disk":
            return _disk_grad_harmonic(self.flavor, x[:, None, :], y[None, :, :])
        if self.backend == "exact_halfspace":
            sign = 1.0 if self.neumann else -1.0
            return sign * _grad_fund_matrix(x, _mirror(y))
        self._require_fitted()
        return self.system.grad_harmonic_matrix(x, y)

    def harmonic(self, x, y) -> float:
        return float(self.harmonic_matrix(x, y)[0, 0])

    # -- full Green function ------------------------------------------
    def green_matrix(self, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return _fund_matrix(x, y) + self.harmonic_matrix(x, y)

    def grad_green_matrix(self, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return _grad_fund_matrix(x, y) + self.grad_harmonic_matrix(x, y)

    def green(self, x, y) -> float:
        """``G_#(x, y)`` for a single pair of distinct points."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.array_equal(x, y):
            raise DomainError("diagonal singularity x == y", "diagonal")
        return float(self.green_matrix(x, y)[0, 0])

    def grad_green(self, x, y) -> np.ndarray:
        """``grad_x G_#(x, y)`` for a single pair of distinct points."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.array_equal(x, y):
            raise DomainError("diagonal singularity x == y", "diagonal")
        return self.grad_green_matrix(x, y)[0, 0]

    # -- Robin function ------------------------------------------------
    def robin(self, x):
        """Robin function ``gbar_#(x, x)``; scalar or vector input."""
        x = self._check_points(x)
        pts = np.atleast_2d(x)
        if self.backend == "exact_disk":
            r2 = np.sum(pts * pts, axis=-1)
            if self.neumann:
                val = (np.log1p(-r2) - r2) * INV_2PI + self._gauge
            else:
                val = -np.log1p(-r2) * INV_2PI
        elif self.backend == "exact_halfspace":
            sign = 1.0 if self.neumann else -1.0
            val = sign * np.log(2.0 * pts[:, 0]) * INV_2PI
        else:
            self._require_fitted()
            val = self.system.robin(pts)
        return float(val[0]) if x.ndim == 1 else val

    def grad_robin(self, x):
        """Gradient of the Robin function, ``2 grad_1 gbar_#(x, x)``."""
        x = self._check_points(x)
        pts = np.atleast_2d(x)
        if self.backend == "exact_disk":
            val = 2.0 * _disk_grad_harmonic(self.flavor, pts, pts)
        elif self.backend == "exact_halfspace":
            sign = 1.0 if self.neumann else -1.0
            val = np.zeros_like(pts)
            val[:, 0] = sign * INV_2PI / pts[:, 0]
        else:
            self._require_fitted()
            val = self.system.grad_robin(pts)
        return val[0] if x.ndim == 1 else val

    # -- boundary data potential --------------------------------------
    def boundary_potential(self, h: BoundaryDensity, x):
        """``int G_#(x, y) h(y) dS_y``; identically zero for Dirichlet."""
        x = self._check_points(x)
        pts = np.atleast_2d(x)
        if not self.neumann or h is None or h.is_zero:
            val = np.zeros(pts.shape[0])
        elif self.backend == "exact_disk":
            val = _disk_boundary_potential(h, pts)
        elif self.backend == "bem":
            self._require_fitted()
            val = self.system.boundary_potential(h, pts)
        else:
            raise ConfigError("boundary data are not supported on the half-plane", "backend")
        return float(val[0]) if x.ndim == 1 else val

    def grad_boundary_potential(self, h: BoundaryDensity, x):
        x = self._check_points(x)
        pts = np.atleast_2d(x)
        if not self.neumann or h is None or h.is_zero:
            val = np.zeros_like(pts)
        elif self.backend == "exact_disk":
            val = _disk_grad_boundary_potential(h, pts)
        elif self.backend == "bem":
            self._require_fitted()
            val = self.system.grad_boundary_potential(h, pts)
        else:
            raise ConfigError("boundary data are not supported on the half-plane", "backend")
        return val[0] if x.ndim == 1 else val

    # -- charge-boundary potential ------------------------------------
    def _check_charge_density(self, h_cha, charge_count):
        if self.neumann and charge_count is not None and self.domain is not None:
            total = h_cha.total(self.domain) if h_cha is not None else 0.0
            if abs(total - charge_count) > 1e-8:
                raise ConfigError(
                    f"charge compatibility violated: boundary integral {total:.12g} != M = {charge_count}",
                    "charge-compatibility",
                )

    def H(self, x, h_cha: BoundaryDensity | None = None, charge_count: int | None = None):
        """Charge-boundary potential ``R_#/2 - int G_# h_cha dS``."""
        self._check_charge_density(h_cha, charge_count)
        return 0.5 * self.robin(x) - self.boundary_potential(h_cha, x)

    def grad_H(self, x, h_cha: BoundaryDensity | None = None, charge_count: int | None = None):
        """Gradient of :meth:`H`; the boundary force on a unit point charge."""
        self._check_charge_density(h_cha, charge_count)
        return 0.5 * self.grad_robin(x) - self.grad_boundary_potential(h_cha, x)

    # -- cutoff kernel -------------------------------------------------
    def cutoff_green(self, profile: CutoffProfile, x, y) -> float:
        """``G(x, y) chi_tilde(|x - y|) + gbar_#(x, y)``; finite on the diagonal."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r = float(np.linalg.norm(x - y))
        val = self.harmonic(x, y)
        if r > profile.sigma:
            val += np.log(r) * INV_2PI * float(profile.chi_tilde(r))
        return float(val)

    def grad_cutoff_green(self, profile: CutoffProfile, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        diff = x - y
        r = float(np.linalg.norm(diff))
        val = self.grad_harmonic_matrix(x, y)[0, 0]
        if r > profile.sigma:
            ct = float(profile.chi_tilde(r))
            dct = float(profile.chi_tilde_prime(r))
            val = val + diff * (ct / r**2 + np.log(r) * dct / r) * INV_2PI
        return val

    # -- many-body sums -----------------------------------------------
    def pair_field(self, points, q, self_image=False, sigma: float = 0.0):
        """Field on every point from all the others.

        Returns ``sum_{j != i} q_j grad_x G_#(x_i, x_j)``, plus the image
        self-term ``q_i grad_1 gbar_#(x_i, x_i)`` when ``self_image`` is set.
        ``sigma > 0`` replaces the fundamental part by its cutoff version.
        """
        points = np.ascontiguousarray(points, dtype=float)
        q = np.ascontiguousarray(q, dtype=float)
        n = points.shape[0]
        if self.backend == "exact_disk":
            out = np.empty((n, 2))
            bad = np.zeros(n, dtype=np.int64)
            _kernels.disk_field(points, points, q, self.neumann, True, self_image, sigma, out, bad)
            if bad.any():
                raise DomainError("coincident sources", "diagonal")
            return out
        grad = self.grad_harmonic_matrix(points, points)
        if not self_image:
            grad[np.arange(n), np.arange(n)] = 0.0
        grad = grad + self._fund_grad_pairs(points, points, sigma, same=True)
        return np.einsum("ijk,j->ik", grad, q)

    def pair_potential(self, points, q, self_image=False, sigma: float = 0.0):
        """``sum_{j != i} q_j G_#(x_i, x_j)`` (plus image self-term if set)."""
        points = np.ascontiguousarray(points, dtype=float)
        q = np.ascontiguousarray(q, dtype=float)
        n = points.shape[0]
        if self.backend == "exact_disk":
            out = np.empty(n)
            _kernels.disk_potential(
                points, points, q, self.neumann, True, self_image, sigma, self._gauge, out
            )
            return out
        mat = self.harmonic_matrix(points, points)
        if not self_image:
            mat[np.arange(n), np.arange(n)] = 0.0
        mat = mat + self._fund_pairs(points, points, sigma, same=True)
        return mat @ q

    def field_from(self, targets, sources, q, sigma: float = 0.0):
        """``sum_j q_j grad_x G_#(x_i, y_j)`` for separate targets."""
        targets = np.ascontiguousarray(np.atleast_2d(targets), dtype=float)
        sources = np.ascontiguousarray(np.atleast_2d(sources), dtype=float)
        q = np.ascontiguousarray(q, dtype=float)
        if sources.shape[0] == 0:
            return np.zeros_like(targets)
        if self.backend == "exact_disk":
            out = np.empty_like(targets)
            bad = np.zeros(targets.shape[0], dtype=np.int64)
            _kernels.disk_field(targets, sources, q, self.neumann, False, False, sigma, out, bad)
            if bad.any():
                raise DomainError("target coincides with a source", "diagonal")
            return out
        grad = self.grad_harmonic_matrix(targets, sources)
        grad = grad + self._fund_grad_pairs(targets, sources, sigma, same=False)
        return np.einsum("ijk,j->ik", grad, q)

    def potential_from(self, targets, sources, q, sigma: float = 0.0):
        """``sum_j q_j G_#(x_i, y_j)`` for separate targets."""
        targets = np.ascontiguousarray(np.atleast_2d(targets), dtype=float)
        sources = np.ascontiguousarray(np.atleast_2d(sources), dtype=float)
        q = np.ascontiguousarray(q, dtype=float)
        if sources.shape[0] == 0:
            return np.zeros(targets.shape[0])
        if self.backend == "exact_disk":
            out = np.empty(targets.shape[0])
            _kernels.disk_potential(
                targets, sources, q, self.neumann, False, False, sigma, self._gauge, out
            )
            return out
        mat = self.harmonic_matrix(targets, sources)
        mat = mat + self._fund_pairs(targets, sources, sigma, same=False)
        return mat @ q

    @staticmethod
    def _fund_pairs(x, y, sigma, same):
        diff = x[:, None, :] - y[None, :, :]
        r2 = np.sum(diff * diff, axis=-1)
        if same:
            np.fill_diagonal(r2, 1.0)
        val = 0.5 * np.log(r2) * INV_2PI
        if sigma > 0:
            val = val * CutoffProfile(sigma).chi_tilde(np.sqrt(r2))
        if same:
            np.fill_diagonal(val, 0.0)
        return val

    @staticmethod
    def _fund_grad_pairs(x, y, sigma, same):
        diff = x[:, None, :] - y[None, :, :]
        r2 = np.sum(diff * diff, axis=-1)
        if same:
            np.fill_diagonal(r2, 1.0)
        if sigma > 0:
            prof = CutoffProfile(sigma)
            r = np.sqrt(r2)
            f = prof.chi_tilde(r) / r2 + 0.5 * np.log(r2) * prof.chi_tilde_prime(r) / r
        else:
            f = 1.0 / r2
        if same:
            np.fill_diagonal(f, 0.0)
        return diff * (f * INV_2PI)[..., None]
