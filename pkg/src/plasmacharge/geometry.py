"""Smooth, strictly convex planar domains.

A domain is described by a periodic boundary parameterisation
``mu -> x(mu)``, ``mu in [0, 2 pi)``, traversed counter-clockwise, with
analytic first and second derivatives. Three shapes are supported:

* the unit disk,
* an axis-aligned ellipse ``(a cos mu, b sin mu)``,
* a custom shape given by a truncated Fourier series of its support
  function ``p(theta)``; then ``mu`` is the angle of the outward normal and
  ``x = p n + p' t``.

All queries are pure functions of immutable data.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import linprog

from .errors import ConfigError, DomainError

TWO_PI = 2.0 * np.pi
_SCAN = 256
_NEWTON_ITERS = 30
_ON_BOUNDARY_TOL = 1e-10


@dataclass(frozen=True)
class LocalFrame:
    """Boundary-collar coordinates of a phase-space point.

    Attributes
    ----------
    mu : float
        Boundary parameter of the nearest boundary point.
    x_perp : float
        Distance to the boundary along the inward normal.
    v_perp : float
        Normal velocity, ``-v . n``; positive when moving inward.
    v_tan : float
        Tangential velocity, ``v . t`` with ``t`` the counter-clockwise tangent.
    """

    mu: float
    x_perp: float
    v_perp: float
    v_tan: float


@dataclass(frozen=True)
class BoundaryQuadrature:
    """Equispaced-parameter trapezoid nodes on the boundary."""

    mu: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    tangents: np.ndarray
    speed: np.ndarray
    curvature: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.mu.size


class ConvexDomain:
    """Bounded, smooth, strictly convex domain in the plane.

    Use the factories :func:`unit_disk`, :func:`ellipse`,
    :func:`fourier_domain` or :func:`domain_from_config` rather than the
    constructor.

    Parameters
    ----------
    kind : {"unit_disk", "ellipse", "fourier"}
        Shape family.
    params : tuple of float
        ``()`` for the disk, ``(a, b)`` for the ellipse and the support
        function coefficients ``(c0, c1, d1, c2, d2, ...)`` for ``"fourier"``.
    """

    def __init__(self, kind: str, params: tuple = ()):
        if kind not in ("unit_disk", "ellipse", "fourier"):
            raise ConfigError(f"unknown shape kind {kind!r}", "domain-shape")
        self.kind = kind
        self.params = tuple(float(p) for p in params)
        if kind == "ellipse":
            if len(self.params) != 2 or min(self.params) <= 0:
                raise ConfigError("ellipse needs semi-axes a, b > 0", "domain-shape")
        if kind == "fourier":
            if len(self.params) % 2 != 1 or self.params[0] <= 0:
                raise ConfigError(
                    "support function needs an odd number of coefficients with c0 > 0",
                    "domain-shape",
                )
            scan = np.linspace(0.0, TWO_PI, 4096, endpoint=False)
            rho = self._support(scan, 0) + self._support(scan, 2)
            if np.min(rho) <= 0:
                raise ConfigError(
                    "custom boundary is not strictly convex (curvature <= 0 on scan)",
                    "domain-convexity",
                )

    def __repr__(self) -> str:
        return f"ConvexDomain({self.kind!r}, {self.params})"

    # ------------------------------------------------------------------
    # parameterisation
    # ------------------------------------------------------------------
    def _support(self, theta, order: int):
        """Derivative of the support function of the given order."""
        c = self.params
        theta = np.asarray(theta, dtype=float)
        out = np.full(theta.shape, c[0] if order == 0 else 0.0)
        for k in range(1, (len(c) - 1) // 2 + 1):
            a, b = c[2 * k - 1], c[2 * k]
            cos_k, sin_k = np.cos(k * theta), np.sin(k * theta)
            # d^m/dtheta^m of a cos + b sin cycles with period 4
            m = order % 4
            if m == 0:
                term = a * cos_k + b * sin_k
            elif m == 1:
                term = -a * sin_k + b * cos_k
            elif m == 2:
                term = -a * cos_k - b * sin_k
            else:
                term = a * sin_k - b * cos_k
            out = out + term * float(k) ** order
        return out

    def boundary(self, mu):
        """Boundary point and its first two parameter derivatives.

        Parameters
        ----------
        mu : array_like
            Parameter values.

        Returns
        -------
        x, dx, ddx : ndarray
            Arrays of shape ``mu.shape + (2,)``.
        """
        mu = np.asarray(mu, dtype=float)
        c, s = np.cos(mu), np.sin(mu)
        if self.kind == "unit_disk":
            x = np.stack([c, s], axis=-1)
            dx = np.stack([-s, c], axis=-1)
            return x, dx, -x
        if self.kind == "ellipse":
            a, b = self.params
            x = np.stack([a * c, b * s], axis=-1)
            dx = np.stack([-a * s, b * c], axis=-1)
            return x, dx, -x
        p0 = self._support(mu, 0)[..., None]
        p1 = self._support(mu, 1)[..., None]
        p2 = self._support(mu, 2)[..., None]
        p3 = self._support(mu, 3)[..., None]
        n = np.stack([c, s], axis=-1)
        t = np.stack([-s, c], axis=-1)
        x = p0 * n + p1 * t
        dx = (p0 + p2) * t
        ddx = (p1 + p3) * t - (p0 + p2) * n
        return x, dx, ddx

    def point(self, mu):
        return self.boundary(mu)[0]

    def normal(self, mu):
        """Outward unit normal at parameter ``mu``."""
        _, dx, _ = self.boundary(mu)
        n = np.stack([dx[..., 1], -dx[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def tangent(self, mu):
        """Counter-clockwise unit tangent at parameter ``mu``."""
        _, dx, _ = self.boundary(mu)
        return dx / np.linalg.norm(dx, axis=-1, keepdims=True)

    def curvature(self, mu):
        """Signed curvature, positive for a convex boundary."""
        _, dx, ddx = self.boundary(mu)
        cross = dx[..., 0] * ddx[..., 1] - dx[..., 1] * ddx[..., 0]
        return cross / np.linalg.norm(dx, axis=-1) ** 3

    def quadrature(self, n_b: int) -> BoundaryQuadrature:
        """Trapezoid rule with ``n_b`` equispaced parameter nodes."""
        mu = TWO_PI * np.arange(n_b) / n_b
        x, dx, ddx = self.boundary(mu)
        speed = np.linalg.norm(dx, axis=-1)
        tangents = dx / speed[:, None]
        normals = np.stack([tangents[:, 1], -tangents[:, 0]], axis=-1)
        cross = dx[:, 0] * ddx[:, 1] - dx[:, 1] * ddx[:, 0]
        return BoundaryQuadrature(
            mu=mu,
            points=x,
            normals=normals,
            tangents=tangents,
            speed=speed,
            curvature=cross / speed**3,
            weights=speed * TWO_PI / n_b,
        )

    # ------------------------------------------------------------------
    # global quantities
    # ------------------------------------------------------------------
    @cached_property
    def area(self) -> float:
        if self.kind == "unit_disk":
            return float(np.pi)
        if self.kind == "ellipse":
            return float(np.pi * self.params[0] * self.params[1])
        q = self.quadrature(1024)
        x, _, _ = self.boundary(q.mu)
        _, dx, _ = self.boundary(q.mu)
        return float(0.5 * np.sum(x[:, 0] * dx[:, 1] - x[:, 1] * dx[:, 0]) * TWO_PI / 1024)

    @cached_property
    def perimeter(self) -> float:
        return float(np.sum(self.quadrature(2048).weights))

    @cached_property
    def max_curvature(self) -> float:
        return float(np.max(self.curvature(np.linspace(0, TWO_PI, 4096, endpoint=False))))

    @cached_property
    def inradius(self) -> float:
        """Radius of the largest inscribed disk."""
        if self.kind == "unit_disk":
            return 1.0
        if self.kind == "ellipse":
            return float(min(self.params))
        # max r subject to c . n_k + r <= p(theta_k)
        theta = np.linspace(0, TWO_PI, 1024, endpoint=False)
        a_ub = np.column_stack([np.cos(theta), np.sin(theta), np.ones_like(theta)])
        res = linprog(
            c=[0.0, 0.0, -1.0],
            A_ub=a_ub,
            b_ub=self._support(theta, 0),
            bounds=[(None, None), (None, None), (0, None)],
        )
        return float(res.x[2])

    @cached_property
    def collar_width(self) -> float:
        """Width of the boundary collar in which local coordinates are used."""
        return float(min(0.2 * self.inradius, 1.0 / (2.0 + 2.0 * self.max_curvature)))

    @cached_property
    def diameter(self) -> float:
        pts = self.point(np.linspace(0, TWO_PI, 512, endpoint=False))
        diff = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt(np.max(np.sum(diff**2, axis=-1))))

    # ------------------------------------------------------------------
    # nearest point and distance
    # ------------------------------------------------------------------
    def project(self, x):
        """Nearest boundary parameter and signed distance.

        Parameters
        ----------
        x : array_like, shape (2,) or (m, 2)

        Returns
        -------
        mu : ndarray
            Parameter of the nearest boundary point.
        dist : ndarray
            Signed distance, positive inside the domain.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if self.kind == "unit_disk":
            r = np.hypot(pts[:, 0], pts[:, 1])
            mu = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), TWO_PI)
            dist = 1.0 - r
        else:
            mu = self._newton_project(pts)
            y, dx, _ = self.boundary(mu)
            n = np.stack([dx[:, 1], -dx[:, 0]], axis=-1)
            n /= np.linalg.norm(n, axis=-1, keepdims=True)
            diff = pts - y
            dist = np.linalg.norm(diff, axis=-1)
            dist = np.where(np.sum(diff * n, axis=-1) > 0, -dist, dist)
        if single:
            return float(mu[0]), float(dist[0])
        return mu, dist

    def _newton_project(self, pts):
        scan = TWO_PI * np.arange(_SCAN) / _SCAN
        ys = self.point(scan)
        d2 = np.sum((pts[:, None, :] - ys[None, :, :]) ** 2, axis=-1)
        mu = scan[np.argmin(d2, axis=1)]
        lo = mu - TWO_PI / _SCAN
        hi = mu + TWO_PI / _SCAN
        for _ in range(_NEWTON_ITERS):
            y, dy, ddy = self.boundary(mu)
            diff = y - pts
            f = np.sum(diff * dy, axis=-1)
            fp = np.sum(dy * dy, axis=-1) + np.sum(diff * ddy, axis=-1)
            step = np.where(fp > 0, f / np.where(fp > 0, fp, 1.0), 0.0)
            new = np.clip(mu - step, lo, hi)
            if np.max(np.abs(new - mu)) < 1e-15:
                mu = new
                break
            mu = new
        return np.mod(mu, TWO_PI)

    def signed_distance(self, x):
        """Distance to the boundary, positive inside and negative outside."""
        return self.project(x)[1]

    def contains(self, x):
        """True for points strictly inside the domain."""
        return self.level(x) < 0

    def level(self, x):
        """Smooth function that is negative inside and zero on the boundary."""
        x = np.asarray(x, dtype=float)
        if self.kind == "unit_disk":
            return np.sum(x * x, axis=-1) - 1.0
        if self.kind == "ellipse":
            a, b = self.params
            return (x[..., 0] / a) ** 2 + (x[..., 1] / b) ** 2 - 1.0
        return -self.signed_distance(x)

    def normal_at(self, x):
        """Outward normal at boundary point(s) ``x``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "unit_disk":
            return x / np.linalg.norm(x, axis=-1, keepdims=True)
        if self.kind == "ellipse":
            a, b = self.params
            g = np.stack([x[..., 0] / a**2, x[..., 1] / b**2], axis=-1)
            return g / np.linalg.norm(g, axis=-1, keepdims=True)
        mu, _ = self.project(x)
        return self.normal(mu)

    def exit_time(self, x, v):
        """Time at which the ray ``x + t v`` leaves the domain.

        ``x`` must lie in the closed domain; rays of a convex domain leave
        exactly once. Vectorised over rows.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        v = np.atleast_2d(np.asarray(v, dtype=float))
        if self.kind in ("unit_disk", "ellipse"):
            if self.kind == "ellipse":
                scale = 1.0 / np.asarray(self.params)
                x, v = x * scale, v * scale
            a = np.sum(v * v, axis=-1)
            b = np.sum(x * v, axis=-1)
            c = np.minimum(np.sum(x * x, axis=-1) - 1.0, 0.0)
            root = np.sqrt(np.maximum(b * b - a * c, 0.0))
            # larger root of a t^2 + 2 b t + c, evaluated without cancellation
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(b <= 0, (root - b) / a, -c / (b + root))
            return np.where(a > 0, t, np.inf)
        # bisection on the signed distance between the start and a far point
        span = 2.0 * self.diameter / np.maximum(np.linalg.norm(v, axis=-1), 1e-300)
        lo = np.zeros(x.shape[0])
        hi = span
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            inside = self.signed_distance(x + mid[:, None] * v) > 0
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        return hi


# ----------------------------------------------------------------------
# factories
# ----------------------------------------------------------------------
def unit_disk() -> ConvexDomain:
    return ConvexDomain("unit_disk")


def ellipse(a: float, b: float) -> ConvexDomain:
    return ConvexDomain("ellipse", (a, b))


def fourier_domain(coeffs) -> ConvexDomain:
    """Domain whose support function has the given Fourier coefficients.

    Parameters
    ----------
    coeffs : sequence of float
        ``(c0, c1, d1, c2, d2, ...)`` with
        ``p(theta) = c0 + sum_k c_k cos(k theta) + d_k sin(k theta)``.
    """
    return ConvexDomain("fourier", tuple(coeffs))


def domain_from_config(spec: dict) -> ConvexDomain:
    """Build a domain from its run-config dictionary."""
    shape = spec.get("shape")
    if shape == "disk":
        return unit_disk()
    if shape == "ellipse":
        return ellipse(spec["a"], spec["b"])
    if shape == "fourier":
        return fourier_domain(spec["coeffs"])
    raise ConfigError(f"unknown domain shape {shape!r}", "domain-shape")


# ----------------------------------------------------------------------
# point operations
# ----------------------------------------------------------------------
def distance_to_boundary(domain: ConvexDomain, x) -> float:
    """Distance from a point of the closed domain to the boundary."""
    _, d = domain.project(np.asarray(x, dtype=float))
    if d < -_ON_BOUNDARY_TOL:
        raise DomainError(f"exterior point {tuple(np.ravel(x))}")
    return max(float(d), 0.0)


def reflect(domain: ConvexDomain, x_boundary, v) -> np.ndarray:
    """Specular reflection ``v - 2 (v . n) n`` at a boundary point."""
    x_boundary = np.asarray(x_boundary, dtype=float)
    v = np.asarray(v, dtype=float)
    mu, d = domain.project(x_boundary)
    if abs(d) > _ON_BOUNDARY_TOL:
        raise DomainError(f"reflection requested off the boundary (distance {d:.3e})")
    n = domain.normal(mu)
    return reflect_many(n[None, :], v[None, :])[0]


# double-double helpers (Dekker / Knuth error-free transforms)
_SPLIT = 134217729.0  # 2**27 + 1


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _two_prod(a, b):
    p = a * b
    c = _SPLIT * a
    ah = c - (c - a)
    al = a - ah
    c = _SPLIT * b
    bh = c - (c - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _dd_add(ah, al, bh, bl):
    s, e = _two_sum(ah, bh)
    return _two_sum(s, e + (al + bl))


def _dd_mul(ah, al, bh, bl):
    p, e = _two_prod(ah, bh)
    return _two_sum(p, e + (ah * bl + al * bh))


def reflect_many(normals: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-wise specular reflection for precomputed normals.

    The reflection about the line orthogonal to the stored (rounded)
    normal is evaluated in double-double arithmetic and rounded once, so
    it is an orthogonal involution up to a single final rounding: applying
    it twice returns ``v`` within ``eps |v|``.
    """
    normals = np.asarray(normals, dtype=float)
    v = np.asarray(v, dtype=float)
    nx, ny = normals[..., 0], normals[..., 1]
    vx, vy = v[..., 0], v[..., 1]
    ph, pl = _dd_add(*_two_prod(vx, nx), *_two_prod(vy, ny))
    qh, ql = _dd_add(*_two_prod(nx, nx), *_two_prod(ny, ny))
    # r = 2 (v . n) / (n . n), one Newton correction of the quotient
    q1 = 2.0 * ph / qh
    mh, ml = _dd_mul(q1, 0.0, qh, ql)
    rh, rl = _dd_add(2.0 * ph, 2.0 * pl, -mh, -ml)
    rh, rl = _two_sum(q1, rh / qh + rl / qh)
    out = np.empty(np.broadcast_shapes(normals.shape, v.shape))
    for i, (vi, ni) in enumerate(((vx, nx), (vy, ny))):
        mh, ml = _dd_mul(rh, rl, ni, 0.0)
        sh, sl = _dd_add(vi, 0.0, -mh, -ml)
        out[..., i] = sh + sl
    return out


def boundary_hit(domain: ConvexDomain, x, v, dt: float):
    """Earliest time in ``(0, dt]`` at which ``x + t v`` reaches the boundary.

    The signed distance is sampled at 64 points of the segment to bracket
    the first sign change, which is then refined by bisection to ``1e-12``.

    Returns
    -------
    tuple of (float, ndarray) or None
        ``(t_hit, x_hit)``, or ``None`` when the segment stays inside.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    ts = np.linspace(0.0, dt, 65)
    sd = domain.signed_distance(x[None, :] + ts[:, None] * v[None, :])
    crossed = np.nonzero(sd[1:] <= 0.0)[0]
    if crossed.size == 0:
        return None
    k = crossed[0] + 1
    lo, hi = ts[k - 1], ts[k]
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if domain.signed_distance(x + mid * v) > 0:
            lo = mid
        else:
            hi = mid
    return hi, x + hi * v


def local_frame(domain: ConvexDomain, x, v) -> LocalFrame:
    """Normal/tangential coordinates of ``(x, v)`` in the boundary collar."""
    v = np.asarray(v, dtype=float)
    mu, d = domain.project(np.asarray(x, dtype=float))
    if d > domain.collar_width + 1e-12 or d < -_ON_BOUNDARY_TOL:
        raise DomainError(f"outside boundary collar (distance {d:.4g})", "boundary-collar")
    n = domain.normal(mu)
    t = domain.tangent(mu)
    return LocalFrame(mu=mu, x_perp=max(d, 0.0), v_perp=float(-v @ n), v_tan=float(v @ t))
