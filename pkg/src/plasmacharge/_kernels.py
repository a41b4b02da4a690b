"""Compiled pair-interaction loops for the unit-disk Green functions.

Each target sums its sources in index order, so results do not depend on
how many threads execute the outer loop.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

_INV_2PI = 1.0 / (2.0 * np.pi)
_INV_4PI = 1.0 / (4.0 * np.pi)
# reassociation lets the inner sums vectorise; each target is still summed
# by a single thread, so results stay independent of the thread count
_FAST = {"reassoc", "contract", "arcp", "nsz"}


@njit(cache=True, inline="always")
def _cutoff(r, sigma):
    # quintic smoothstep ramp of 1 - chi(r / sigma) and its r-derivative
    if r >= 2.0 * sigma:
        return 1.0, 0.0
    if r <= sigma:
        return 0.0, 0.0
    u = r / sigma - 1.0
    val = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
    der = 30.0 * u * u * (1.0 - u) * (1.0 - u) / sigma
    return val, der


@njit(parallel=True, cache=True, fastmath=_FAST)
def disk_field(targets, sources, q, neumann, same, self_image, sigma, out, bad):
    """Accumulate ``sum_j q_j grad_x G(x_i, y_j)`` into ``out``.

    Parameters
    ----------
    targets, sources : (n, 2) and (m, 2) float arrays
    q : (m,) source weights
    neumann : bool
        Neumann (True) or Dirichlet (False) image part.
    same : bool
        Targets and sources are the same array; index ``i == j`` is a
        self pair, for which only the image part is used, and only if
        ``self_image`` is set.
    sigma : float
        Cutoff radius of the fundamental part, 0 for none.
    out : (n, 2) output, overwritten.
    bad : (n,) int output, counts coincident distinct pairs (skipped).
    """
    n = targets.shape[0]
    m = sources.shape[0]
    for i in prange(n):
        xi = targets[i, 0]
        yi = targets[i, 1]
        r2i = xi * xi + yi * yi
        ax = 0.0
        ay = 0.0
        qsum = 0.0
        nbad = 0
        for j in range(m):
            qj = q[j]
            xj = sources[j, 0]
            yj = sources[j, 1]
            is_self = same and i == j
            if is_self and not self_image:
                continue
            r2j = xj * xj + yj * yj
            den = 1.0 - 2.0 * (xi * xj + yi * yj) + r2i * r2j
            inv = 1.0 / den
            zx = (r2j * xi - xj) * inv
            zy = (r2j * yi - yj) * inv
            if neumann:
                ax += qj * zx
                ay += qj * zy
                qsum += qj
            else:
                ax -= qj * zx
                ay -= qj * zy
            if is_self:
                continue
            dx = xi - xj
            dy = yi - yj
            r2 = dx * dx + dy * dy
            if r2 == 0.0:
                nbad += 1
                continue
            if sigma > 0.0 and r2 < 4.0 * sigma * sigma:
                r = np.sqrt(r2)
                val, der = _cutoff(r, sigma)
                f = val / r2 + 0.5 * np.log(r2) * der / r
            else:
                f = 1.0 / r2
            ax += qj * f * dx
            ay += qj * f * dy
        if neumann:
            ax -= qsum * xi
            ay -= qsum * yi
        out[i, 0] = ax * _INV_2PI
        out[i, 1] = ay * _INV_2PI
        bad[i] = nbad


@njit(parallel=True, cache=True)
def disk_potential(targets, sources, q, neumann, same, self_image, sigma, gauge, out):
    """Accumulate ``sum_j q_j G(x_i, y_j)`` into ``out`` (same conventions)."""
    n = targets.shape[0]
    m = sources.shape[0]
    for i in prange(n):
        xi = targets[i, 0]
        yi = targets[i, 1]
        r2i = xi * xi + yi * yi
        acc = 0.0
        for j in range(m):
            qj = q[j]
            xj = sources[j, 0]
            yj = sources[j, 1]
            is_self = same and i == j
            if is_self and not self_image:
                continue
            r2j = xj * xj + yj * yj
            den = 1.0 - 2.0 * (xi * xj + yi * yj) + r2i * r2j
            if neumann:
                img = np.log(den) * _INV_4PI - (r2i + r2j) * _INV_4PI + gauge
            else:
                img = -np.log(den) * _INV_4PI
            acc += qj * img
            if is_self:
                continue
            dx = xi - xj
            dy = yi - yj
            r2 = dx * dx + dy * dy
            if r2 == 0.0:
                continue
            if sigma > 0.0:
                val, der = _cutoff(np.sqrt(r2), sigma)
                acc += qj * 0.5 * np.log(r2) * val * _INV_2PI
            else:
                acc += qj * np.log(r2) * _INV_4PI
        out[i] = acc
