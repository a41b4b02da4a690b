"""Close encounters: short-range part of the pair interaction.

The free-space kernel is split as ``G = G_sigma + (G - G_sigma)`` with the
smooth cutoff kernel ``G_sigma`` of :mod:`plasmacharge._kernels`. The
smooth part is applied in the kicks. The remainder vanishes beyond
``2 sigma``; it is integrated during the drift, together with free flight,
for the small groups of sources that come that close within a step. Those
groups are advanced with an adaptive Dormand-Prince 5(4) scheme, so a
pair passing at a distance far below ``|v| dt`` is still resolved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from ._kernels import _cutoff
from .errors import ChargeCollision, GrazingTrap
from .geometry import reflect_many

_INV_2PI = 1.0 / (2.0 * np.pi)
MAX_BOUNCES = 32
# core radius of the short-range force, relative to sigma
_CORE = 1e-6

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array(
    [
        [0, 0, 0, 0, 0, 0],
        [1 / 5, 0, 0, 0, 0, 0],
        [3 / 40, 9 / 40, 0, 0, 0, 0],
        [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
        [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
    ]
)
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_E = _B - np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


@njit(cache=True)
def near_accelerations(x, q, sigma, out):
    """``sum_j q_j grad_x (G - G_sigma)(x_i - x_j)`` for a small group."""
    n = x.shape[0]
    for i in range(n):
        ax = 0.0
        ay = 0.0
        for j in range(n):
            if j == i:
                continue
            dx = x[i, 0] - x[j, 0]
            dy = x[i, 1] - x[j, 1]
            r2 = dx * dx + dy * dy
            if r2 >= 4.0 * sigma * sigma:
                continue
            core2 = (_CORE * sigma) ** 2
            if r2 < core2:
                # linear core: a head-on pair passes through instead of
                # stalling the step control at the log singularity
                ax += q[j] * dx / core2
                ay += q[j] * dy / core2
                continue
            r = np.sqrt(r2)
            val, der = _cutoff(r, sigma)
            f = (1.0 - val) / r2 - 0.5 * np.log(r2) * der / r
            ax += q[j] * f * dx
            ay += q[j] * f * dy
        out[i, 0] = ax * _INV_2PI
        out[i, 1] = ay * _INV_2PI


@njit(cache=True)
def _rhs(y, q, sigma, n, dy, acc):
    x = y[: 2 * n].reshape(n, 2)
    near_accelerations(x, q, sigma, acc)
    dy[: 2 * n] = y[2 * n :]
    dy[2 * n :] = acc.ravel()


@njit(cache=True)
def integrate_group(x, v, q, sigma, T, rtol, atol):
    """Advance a group under free flight plus the short-range force.

    Returns positions, velocities and the number of accepted steps
    (negative if the step budget ran out).
    """
    n = x.shape[0]
    m = 4 * n
    if T <= 0.0:
        return x.copy(), v.copy(), 0
    # positions relative to the group centre, so the tolerance acts on
    # separations of order sigma instead of absolute coordinates
    cx = 0.0
    cy = 0.0
    for i in range(n):
        cx += x[i, 0]
        cy += x[i, 1]
    cx /= n
    cy /= n
    y = np.empty(m)
    for i in range(n):
        y[2 * i] = x[i, 0] - cx
        y[2 * i + 1] = x[i, 1] - cy
    y[2 * n :] = v.ravel()
    k = np.zeros((7, m))
    acc = np.empty((n, 2))
    tmp = np.empty(m)
    t = 0.0
    h = T
    steps = 0
    _rhs(y, q, sigma, n, k[0], acc)
    for _ in range(1000000):
        if t >= T:
            break
        if t + h > T:
            h = T - t
        for s in range(1, 7):
            for p in range(m):
                acc_s = 0.0
                for r in range(s):
                    acc_s += _A[s, r] * k[r, p]
                tmp[p] = y[p] + h * acc_s
            _rhs(tmp, q, sigma, n, k[s], acc)
        err = 0.0
        for p in range(m):
            e = 0.0
            for r in range(7):
                e += _E[r] * k[r, p]
            sc = atol + rtol * max(abs(y[p]), abs(tmp[p]))
            e = h * e / sc
            err = max(err, abs(e))
        if not np.isfinite(err):
            h *= 0.2
            continue
        if err <= 1.0:
            t += h
            # FSAL: the last stage is the new solution
            for p in range(m):
                y[p] = tmp[p]
                k[0, p] = k[6, p]
            steps += 1
        fac = 0.9 * (1.0 / max(err, 1e-10)) ** 0.2
        h = h * min(5.0, max(0.2, fac))
    else:
        steps = -steps
    xo = y[: 2 * n].reshape(n, 2).copy()
    xo[:, 0] += cx
    xo[:, 1] += cy
    return xo, y[2 * n :].reshape(n, 2).copy(), steps


@njit(cache=True)
def integrate_groups(x, v, q, offsets, sigma, T, rtol, atol):
    """:func:`integrate_group` over consecutive groups ``offsets[g]:offsets[g+1]``.

    Returns new positions, velocities and the per-group step counts.
    """
    xo = np.empty_like(x)
    vo = np.empty_like(v)
    steps = np.empty(offsets.size - 1, dtype=np.int64)
    for g in range(offsets.size - 1):
        a = offsets[g]
        b = offsets[g + 1]
        x1, v1, n = integrate_group(x[a:b].copy(), v[a:b].copy(), q[a:b].copy(), sigma, T, rtol, atol)
        xo[a:b] = x1
        vo[a:b] = v1
        steps[g] = n
    return xo, vo, steps


def find_groups(points, vel, dt: float, sigma: float, margin: float = 0.5):
    """Index groups of sources that come within ``2 sigma (1 + margin)`` during ``dt``.

    Closest approach is estimated along straight lines. Groups are sorted
    arrays, listed in order of their smallest index.
    """
    n = points.shape[0]
    if n < 2 or sigma <= 0:
        return []
    reach = 2.0 * sigma * (1.0 + margin)
    vmax = float(np.sqrt(np.max(np.sum(vel * vel, axis=1))))
    pairs = cKDTree(points).query_pairs(reach + 2.0 * vmax * dt, output_type="ndarray")
    if pairs.shape[0] == 0:
        return []
    i, j = pairs[:, 0], pairs[:, 1]
    dx = points[i] - points[j]
    dv = vel[i] - vel[j]
    dv2 = np.sum(dv * dv, axis=1)
    tc = np.where(dv2 > 0, -np.sum(dx * dv, axis=1) / np.where(dv2 > 0, dv2, 1.0), 0.0)
    tc = np.clip(tc, 0.0, dt)
    closest = dx + tc[:, None] * dv
    keep = np.sum(closest * closest, axis=1) < reach * reach
    if not np.any(keep):
        return []
    i, j = i[keep], j[keep]
    graph = coo_matrix((np.ones(i.size), (i, j)), shape=(n, n))
    ncomp, label = connected_components(graph, directed=False)
    members = np.unique(np.concatenate([i, j]))
    groups = {}
    for idx in members:
        groups.setdefault(int(label[idx]), []).append(int(idx))
    return sorted((np.array(g) for g in groups.values()), key=lambda g: g[0])


@dataclass
class GroupResult:
    positions: np.ndarray
    velocities: np.ndarray
    absorbed: list = field(default_factory=list)
    bounces: int = 0


class EncounterIntegrator:
    """Advances encounter groups inside a bounded domain.

    Parameters
    ----------
    domain : ConvexDomain
    sigma : float
        Changeover radius; the short-range force vanishes beyond ``2 sigma``.
    rtol, atol : float
        Tolerances of the adaptive integrator.
    """

    def __init__(self, domain, sigma: float, rtol: float = 1e-11, atol: float = 1e-14):
        self.domain = domain
        self.sigma = float(sigma)
        self.rtol = rtol
        self.atol = atol

    def _flow(self, x, v, q, T):
        x1, v1, steps = integrate_group(x, v, q, self.sigma, T, self.rtol, self.atol)
        if steps < 0:
            raise GrazingTrap("encounter integrator exceeded its step budget", "close-encounter")
        return x1, v1

    def _first_exit(self, x, v, q, T):
        # time of the first wall crossing in (0, T], or None
        dom = self.domain
        x_end, _ = self._flow(x, v, q, T)
        outside = np.max(dom.level(x_end)) >= 0
        if not outside:
            straight = dom.exit_time(x, v)
            if np.min(straight) > 1.5 * T:
                return None
            for tau in np.linspace(0, T, 9)[1:-1]:
                if np.max(dom.level(self._flow(x, v, q, tau)[0])) >= 0:
                    T, outside = tau, True
                    break
            if not outside:
                return None
        lo, hi = 0.0, T
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi or hi - lo < 1e-15:
                break
            if np.max(dom.level(self._flow(x, v, q, mid)[0])) >= 0:
                hi = mid
            else:
                lo = mid
        return hi

    def advance_many(self, x, v, q, acc, is_charge, groups, dt: float, absorbing: bool) -> GroupResult:
        """Advance several groups of the sources ``x, v, q`` over ``dt``.

        Groups whose members stay clear of the wall are integrated in one
        compiled batch; the rest go through :meth:`advance`. Returns the
        updated source arrays; absorbed entries are indexed by source.
        """
        dom = self.domain
        order = np.concatenate(groups)
        sizes = np.array([g.size for g in groups])
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        # same test as _first_exit: far from the wall along straight lines
        straight = dom.exit_time(x[order], v[order])
        far = np.minimum.reduceat(straight, offsets[:-1]) > 1.5 * dt
        xo, vo, steps = integrate_groups(x[order], v[order], q[order], offsets, self.sigma, dt, self.rtol, self.atol)
        if np.any(steps[far] < 0):
            raise GrazingTrap("encounter integrator exceeded its step budget", "close-encounter")
        fast = far & (np.maximum.reduceat(dom.level(xo), offsets[:-1]) < 0)
        member_fast = np.repeat(fast, sizes)
        out = GroupResult(np.array(x, dtype=float), np.array(v, dtype=float))
        out.positions[order[member_fast]] = xo[member_fast]
        out.velocities[order[member_fast]] = vo[member_fast]
        for k in np.flatnonzero(~fast):
            g = groups[k]
            r = self.advance(x[g], v[g], q[g], acc[g], is_charge[g], dt, absorbing)
            out.positions[g] = r.positions
            out.velocities[g] = r.velocities
            out.bounces += r.bounces
            out.absorbed.extend((int(g[m]), s, xb, vb) for m, s, xb, vb in r.absorbed)
        return out

    def advance(self, x, v, q, acc, is_charge, dt: float, absorbing: bool) -> GroupResult:
        """Advance one group over ``dt``.

        ``acc`` are the smooth accelerations of the surrounding kicks, used
        for the same bounce correction as :func:`plasmacharge.plasma.drift`.
        Absorbed members are reported as ``(member, s, position, velocity)``.
        """
        dom = self.domain
        x = np.array(x, dtype=float)
        v = np.array(v, dtype=float)
        q = np.array(q, dtype=float)
        live = np.arange(x.shape[0])
        corr = np.zeros_like(v)
        out = GroupResult(x.copy(), v.copy())
        t = 0.0
        for _ in range(MAX_BOUNCES * x.shape[0] + 1):
            rem = dt - t
            s = self._first_exit(x[live], v[live], q[live], rem) if rem > 0 else None
            if s is None:
                x[live], v[live] = self._flow(x[live], v[live], q[live], rem)
                break
            x[live], v[live] = self._flow(x[live], v[live], q[live], s)
            t += s
            levels = dom.level(x[live])
            k = live[int(np.argmax(levels))]
            mu, _ = dom.project(x[k][None, :])
            xb = dom.point(mu)[0]
            n = dom.normal(mu)[0]
            if is_charge[k]:
                raise ChargeCollision("charge reached boundary")
            if absorbing:
                out.absorbed.append((int(k), t, xb.copy(), v[k].copy()))
                x[k] = xb
                live = live[live != k]
                if live.size == 0:
                    break
                continue
            v[k] = reflect_many(n[None, :], v[k][None, :])[0]
            corr[k] = reflect_many(n[None, :], corr[k][None, :])[0] + float(acc[k] @ n) * (dt - 2.0 * t) * n
            x[k] = xb - 1e-13 * n
            out.bounces += 1
        else:
            raise GrazingTrap("grazing trap inside an encounter group")
        out.positions = x
        out.velocities = v + corr
        return out
