"""Nystrom boundary integral solver for the harmonic parts of Green functions.

Dirichlet: ``gbar_D(., y)`` is the double layer ``int dG/dn_w(x, w) k(w) dS_w``
with ``(I/2 + K_D) k = -G(., y)`` on the boundary.

Neumann: ``gbar_N(x, y) = gt(x, y) + g_N(x, y) + c(y)`` where
``gt = -|x - y|^2 / (4 |Omega|)`` absorbs the ``-1/|Omega|`` source,
``g_N`` is the single layer ``-int G(x, w) k(w) dS_w`` with
``(I/2 + K_N) k = -d/dn_x (G + gt)`` and ``c(y)`` pins the zero-mean gauge.
``I/2 + K_N`` has a one-dimensional kernel; the system is bordered with a
constant column and a zero-mean row.

All integrals use the trapezoid rule on equispaced parameter nodes, which
is spectrally accurate for smooth periodic integrands. The only weakly
singular integral, the Newtonian potential of the domain at boundary nodes,
uses Kress's logarithmic quadrature weights.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.linalg import lapack, lu_factor, lu_solve

from .errors import ConfigError, NearBoundaryError, SingularSystemError
from .geometry import ConvexDomain
from .greens import INV_2PI, BoundaryDensity, BoundaryFlavor

_INV_8PI = 1.0 / (8.0 * np.pi)


def kress_weights(n: int) -> np.ndarray:
    """Weights ``R_k`` with ``int ln(4 sin^2((t_i - s)/2)) f(s) ds ~ sum_j R_{i-j} f(t_j)``.

    Parameters
    ----------
    n : int
        Even number of equispaced nodes on ``[0, 2 pi)``.
    """
    p = n // 2
    k = np.arange(n)
    m = np.arange(1, p)
    ang = np.pi * np.outer(k, m) / p
    return -(2.0 * np.pi / p) * (np.cos(ang) @ (1.0 / m)) - (np.pi / p**2) * (-1.0) ** k


class NystromSystem:
    """Factorised Nystrom discretisation of ``I/2 + K_#``.

    Build with :func:`assemble`.

    Attributes
    ----------
    domain : ConvexDomain
    flavor : BoundaryFlavor
    quad : BoundaryQuadrature
        Nodes, normals and arc-length weights.
    kernel : ndarray
        ``n_b x n_b`` kernel values without the quadrature weights.
    matrix : ndarray
        The discretised operator (bordered for Neumann).
    condition : float
        1-norm condition number estimate.
    min_distance : float
        Evaluation points closer than this to the boundary are refused.
    """

    def __init__(self, domain: ConvexDomain, flavor: BoundaryFlavor, n_b: int):
        if n_b < 32 or n_b % 2:
            raise ConfigError("n_b must be even and at least 32", "bem-resolution")
        self.domain = domain
        self.flavor = flavor
        self.n_b = n_b
        q = domain.quadrature(n_b)
        self.quad = q
        self.area = domain.area
        self.min_distance = float(np.max(q.weights))
        x, nrm = q.points, q.normals
        diff = x[None, :, :] - x[:, None, :]  # w_j - x_i
        r2 = np.sum(diff * diff, axis=-1)
        np.fill_diagonal(r2, 1.0)
        if flavor is BoundaryFlavor.DIRICHLET:
            kern = np.sum(diff * nrm[None, :, :], axis=-1) / r2 * INV_2PI
            np.fill_diagonal(kern, q.curvature / (4.0 * np.pi))
            if np.min(kern) < -1e-12:
                raise SingularSystemError("double-layer kernel changed sign; boundary not convex")
        else:
            kern = np.sum(diff * nrm[:, None, :], axis=-1) / r2 * INV_2PI
            np.fill_diagonal(kern, -q.curvature / (4.0 * np.pi))
        self.kernel = kern
        a = 0.5 * np.eye(n_b) + kern * q.weights[None, :]
        if flavor is BoundaryFlavor.NEUMANN:
            border = np.zeros((n_b + 1, n_b + 1))
            border[:n_b, :n_b] = a
            border[:n_b, n_b] = 1.0
            border[n_b, :n_b] = q.weights / np.mean(q.weights)
            a = border
        self.matrix = a
        lu, piv = lu_factor(a, check_finite=True)
        if np.any(np.diag(lu) == 0.0):
            raise SingularSystemError("Fredholm system singular")
        self._lu = (lu, piv)
        anorm = np.max(np.sum(np.abs(a), axis=0))
        rcond, info = lapack.dgecon(lu, anorm, norm="1")
        self.condition = np.inf if rcond == 0 else 1.0 / rcond
        if not np.isfinite(self.condition):
            raise SingularSystemError("Fredholm system singular")
        if self.condition > 1e6:
            warnings.warn(f"ill-conditioned Nystrom system (cond ~ {self.condition:.2e})")
        self._node_newton = self._newton_at_nodes() if flavor is BoundaryFlavor.NEUMANN else None
        self._density_cache: dict = {}
        self.last_residual = 0.0

    def __repr__(self) -> str:
        return f"NystromSystem({self.domain!r}, {self.flavor.value}, n_b={self.n_b})"

    # ------------------------------------------------------------------
    def _newton_at_nodes(self):
        # N(w_i) = int_Omega G(x, w_i) dx as a boundary integral of the
        # normal derivative of |x - w|^2 (ln|x - w| - 1) / (8 pi)
        q = self.quad
        n = self.n_b
        diff = q.points[None, :, :] - q.points[:, None, :]  # x_j - w_i
        f = np.sum(diff * q.normals[None, :, :], axis=-1) * q.speed[None, :] * _INV_8PI
        r2 = np.sum(diff * diff, axis=-1)
        dmu = q.mu[None, :] - q.mu[:, None]
        s2 = 4.0 * np.sin(0.5 * dmu) ** 2
        np.fill_diagonal(r2, 1.0)
        np.fill_diagonal(s2, 1.0)
        smooth = np.log(r2 / s2)
        np.fill_diagonal(smooth, np.log(q.speed**2))
        np.fill_diagonal(f, 0.0)
        rk = kress_weights(n)
        idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
        return np.sum(rk[idx] * f, axis=1) + (2.0 * np.pi / n) * np.sum(f * (smooth - 1.0), axis=1)

    def _newton_interior(self, y):
        q = self.quad
        diff = q.points[None, :, :] - y[:, None, :]
        r2 = np.sum(diff * diff, axis=-1)
        f = np.sum(diff * q.normals[None, :, :], axis=-1) * _INV_8PI
        return (f * (np.log(r2) - 1.0)) @ q.weights

    def _second_moment(self, y):
        # int_Omega |x - y|^2 dx as a boundary integral
        q = self.quad
        diff = q.points[None, :, :] - y[:, None, :]
        r2 = np.sum(diff * diff, axis=-1)
        return (0.25 * r2 * np.sum(diff * q.normals[None, :, :], axis=-1)) @ q.weights

    def check_distance(self, x):
        x = np.atleast_2d(x)
        _, d = self.domain.project(x)
        if np.any(d < self.min_distance):
            raise NearBoundaryError(
                f"near-boundary evaluation not supported at this resolution "
                f"(distance {np.min(d):.3g} < {self.min_distance:.3g}, n_b={self.n_b})"
            )

    # ------------------------------------------------------------------
    def solve_density(self, data):
        """Solve ``(I/2 + K_#) k = data`` at the nodes.

        Parameters
        ----------
        data : ndarray, shape (n_b,) or (n_b, m)

        Returns
        -------
        ndarray
            Density with the shape of ``data``.
        """
        data = np.asarray(data, dtype=float)
        if data.shape[0] != self.n_b:
            raise ValueError(f"boundary data must have {self.n_b} rows")
        if not np.all(np.isfinite(data)):
            raise ConfigError("boundary data contain NaN or inf", "boundary-data")
        rhs = data
        if self.flavor is BoundaryFlavor.NEUMANN:
            pad = np.zeros((1,) + data.shape[1:])
            rhs = np.concatenate([data, pad], axis=0)
        sol = lu_solve(self._lu, rhs)
        res = self.matrix @ sol - rhs
        self.last_residual = float(np.max(np.abs(res))) if res.size else 0.0
        return sol[: self.n_b]

    def layer_matrix(self, x):
        """Rows mapping a nodal density to the layer potential at ``x``."""
        q = self.quad
        diff = x[:, None, :] - q.points[None, :, :]  # x - w
        r2 = np.sum(diff * diff, axis=-1)
        if self.flavor is BoundaryFlavor.DIRICHLET:
            val = -np.sum(diff * q.normals[None, :, :], axis=-1) / r2 * INV_2PI
        else:
            val = -0.5 * np.log(r2) * INV_2PI
        return val * q.weights[None, :]

    def grad_layer_matrix(self, x):
        q = self.quad
        diff = x[:, None, :] - q.points[None, :, :]
        r2 = np.sum(diff * diff, axis=-1)[..., None]
        if self.flavor is BoundaryFlavor.DIRICHLET:
            dn = np.sum(diff * q.normals[None, :, :], axis=-1)[..., None]
            val = -(q.normals[None, :, :] / r2 - 2.0 * dn * diff / r2**2) * INV_2PI
        else:
            val = -diff / r2 * INV_2PI
        return val * q.weights[None, :, None]

    def evaluate_harmonic(self, density, x):
        """Layer potential of ``density`` at interior point(s) ``x``."""
        x = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x)
        self.check_distance(pts)
        val = self.layer_matrix(pts) @ np.asarray(density, dtype=float)
        return val[0] if x.ndim == 1 else val

    # ------------------------------------------------------------------
    def boundary_data(self, y):
        """Columns of the data ``hbar_#(x_k, y_j)`` for sources ``y``."""
        q = self.quad
        diff = q.points[:, None, :] - y[None, :, :]  # x_k - y_j
        r2 = np.sum(diff * diff, axis=-1)
        if self.flavor is BoundaryFlavor.DIRICHLET:
            return -0.5 * np.log(r2) * INV_2PI
        dn = np.sum(diff * q.normals[:, None, :], axis=-1)
        return -dn / r2 * INV_2PI + dn / (2.0 * self.area)

    def _source_densities(self, y):
        return self.solve_density(self.boundary_data(y))

    def gauge(self, y, dens=None):
        """Additive constant ``c(y)`` of the zero-mean Neumann gauge."""
        if self.flavor is BoundaryFlavor.DIRICHLET:
            return np.zeros(y.shape[0])
        if dens is None:
            dens = self._source_densities(y)
        mean_layer = -(self._node_newton * self.quad.weights) @ dens
        mean_gt = -self._second_moment(y) / (4.0 * self.area)
        return -(self._newton_interior(y) + mean_gt + mean_layer) / self.area

    def harmonic_matrix(self, x, y):
        """``gbar_#(x_i, y_j)`` for interior points."""
        self.check_distance(x)
        self.check_distance(y)
        dens = self._source_densities(y)
        val = self.layer_matrix(x) @ dens
        if self.flavor is BoundaryFlavor.NEUMANN:
            diff = x[:, None, :] - y[None, :, :]
            val += -np.sum(diff * diff, axis=-1) / (4.0 * self.area)
            val += self.gauge(y, dens)[None, :]
        return val

    def grad_harmonic_matrix(self, x, y):
        """``grad_x gbar_#(x_i, y_j)`` with shape ``(n, m, 2)``."""
        self.check_distance(x)
        self.check_distance(y)
        dens = self._source_densities(y)
        val = np.einsum("ikc,kj->ijc", self.grad_layer_matrix(x), dens)
        if self.flavor is BoundaryFlavor.NEUMANN:
            val += -(x[:, None, :] - y[None, :, :]) / (2.0 * self.area)
        return val

    def robin(self, x):
        """Robin function ``gbar_#(x, x)`` at each row of ``x``."""
        self.check_distance(x)
        dens = self._source_densities(x)
        val = np.sum(self.layer_matrix(x) * dens.T, axis=1)
        if self.flavor is BoundaryFlavor.NEUMANN:
            val += self.gauge(x, dens)
        return val

    def grad_robin(self, x):
        self.check_distance(x)
        dens = self._source_densities(x)
        return 2.0 * np.einsum("ikc,ki->ic", self.grad_layer_matrix(x), dens)

    # ------------------------------------------------------------------
    def _boundary_solution(self, h: BoundaryDensity):
        key = h.coeffs
        if key not in self._density_cache:
            q = self.quad
            total = float(np.sum(h.values(q.mu) * q.weights))
            xn = np.sum(q.points * q.normals, axis=-1)
            dens = self.solve_density(-h.values(q.mu) + total * xn / (2.0 * self.area))
            origin = np.zeros((1, 2))
            mean_p = -total * self._second_moment(origin)[0] / (4.0 * self.area)
            mean_layer = -float((self._node_newton * q.weights) @ dens)
            const = -(mean_p + mean_layer) / self.area
            self._density_cache[key] = (total, dens, const)
        return self._density_cache[key]

    def boundary_potential(self, h: BoundaryDensity, x):
        """``int G_N(x, y) h(y) dS_y`` in the zero-mean gauge."""
        self.check_distance(x)
        total, dens, const = self._boundary_solution(h)
        r2 = np.sum(x * x, axis=-1)
        return -total * r2 / (4.0 * self.area) + self.layer_matrix(x) @ dens + const

    def grad_boundary_potential(self, h: BoundaryDensity, x):
        self.check_distance(x)
        total, dens, _ = self._boundary_solution(h)
        return -total * x / (2.0 * self.area) + np.einsum(
            "ikc,k->ic", self.grad_layer_matrix(x), dens
        )

    def dump(self, path) -> None:
        """Write the kernel matrix as CSV, row-major, with a header line."""
        header = (
            f"nystrom kernel {self.flavor.value} n_b={self.n_b} domain={self.domain!r}; "
            "row i = collocation node, column j = source node, values without weights"
        )
        np.savetxt(path, self.kernel, delimiter=",", header=header)


def assemble(domain: ConvexDomain, flavor, n_b: int) -> NystromSystem:
    """Build and factorise the Nystrom system for a domain and flavor."""
    return NystromSystem(domain, BoundaryFlavor.parse(flavor), int(n_b))


def solve_density(system: NystromSystem, boundary_data):
    return system.solve_density(boundary_data)


def evaluate_harmonic(system: NystromSystem, density, x):
    return system.evaluate_harmonic(density, x)


def robin_numeric(system: NystromSystem, x):
    """Robin function from one solve with data ``hbar_#(., x)``."""
    x = np.asarray(x, dtype=float)
    val = system.robin(np.atleast_2d(x))
    return float(val[0]) if x.ndim == 1 else val
