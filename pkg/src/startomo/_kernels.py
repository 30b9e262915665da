"""Compiled inner loops. Every output element is computed independently, so
results do not depend on the number of worker threads."""

import math

import os

import numba
import numpy as np
from numba import njit, prange

# workqueue ships with numba everywhere; scheduling never affects the results
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"


def set_threads(n: int | None) -> None:
    if n is not None:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


@njit(cache=True, inline="always")
def _bilinear(values, x0, pitch, x, y):
    """Bilinear interpolation with zero padding outside the sampled grid."""
    n = values.shape[0]
    fx = (x - x0) / pitch
    fy = (y - x0) / pitch
    if fx <= -1.0 or fy <= -1.0 or fx >= n or fy >= n:
        return 0.0
    ix = int(math.floor(fx))
    iy = int(math.floor(fy))
    wx = fx - ix
    wy = fy - iy
    v00 = values[iy, ix] if (ix >= 0 and iy >= 0) else 0.0
    v01 = values[iy, ix + 1] if (ix + 1 < n and iy >= 0) else 0.0
    v10 = values[iy + 1, ix] if (ix >= 0 and iy + 1 < n) else 0.0
    v11 = values[iy + 1, ix + 1] if (ix + 1 < n and iy + 1 < n) else 0.0
    return (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) + wy * ((1.0 - wx) * v10 + wx * v11)


@njit(cache=True, parallel=True)
def bilinear_points(values, x0, pitch, pts):
    out = np.empty(pts.shape[0])
    for k in prange(pts.shape[0]):
        out[k] = _bilinear(values, x0, pitch, pts[k, 0], pts[k, 1])
    return out


@njit(cache=True, inline="always")
def _slab(p, d, lo, hi, s0, s1):
    """Clip the parameter interval [s0, s1] of p + s*d to lo <= coordinate <= hi."""
    if d == 0.0:
        if p < lo or p > hi:
            return 1.0, 0.0
        return s0, s1
    a = (lo - p) / d
    b = (hi - p) / d
    if a > b:
        a, b = b, a
    return max(s0, a), min(s1, b)


@njit(cache=True, inline="always")
def _trapezoid_segment(values, x0, pitch, px, py, dx, dy, s0, s1, h):
    length = s1 - s0
    if length <= 0.0:
        return 0.0
    nstep = max(1, int(math.ceil(length / h - 1e-9)))
    step = length / nstep
    acc = 0.5 * (
        _bilinear(values, x0, pitch, px + s0 * dx, py + s0 * dy)
        + _bilinear(values, x0, pitch, px + s1 * dx, py + s1 * dy)
    )
    for k in range(1, nstep):
        s = s0 + k * step
        acc += _bilinear(values, x0, pitch, px + s * dx, py + s * dy)
    return acc * step


@njit(cache=True, parallel=True)
def divergent_beam_points(values, x0, pitch, dx, dy, pts, h):
    """int_0^inf f(x + s*gamma) ds at each point, marched inside the zero-padded box."""
    n = values.shape[0]
    lo = x0 - pitch
    hi = x0 + n * pitch
    out = np.empty(pts.shape[0])
    for k in prange(pts.shape[0]):
        px = pts[k, 0]
        py = pts[k, 1]
        s0, s1 = _slab(px, dx, lo, hi, 0.0, np.inf)
        s0, s1 = _slab(py, dy, lo, hi, s0, s1)
        out[k] = _trapezoid_segment(values, x0, pitch, px, py, dx, dy, s0, s1, h) if s1 > s0 else 0.0
    return out


@njit(cache=True, inline="always")
def _cumulative_at(G, u_lo, du, u):
    """Piecewise-linear lookup into a cumulative table, clamped at both ends."""
    f = (u - u_lo) / du
    if f <= 0.0:
        return G[0]
    last = G.shape[0] - 1
    if f >= last:
        return G[last]
    i = int(math.floor(f))
    w = f - i
    return (1.0 - w) * G[i] + w * G[i + 1]


@njit(cache=True, parallel=True)
def line_integrals(values, x0, pitch, pad, cos_k, sin_k, offsets, h,
                   tail_dirs, tail_rho, tail_R, tail_G, tail_du):
    """Integrals of the gridded function along l(psi_k, t_l) = {x : <x, psi_k> = t_l}.

    The grid is integrated over its box (extended by ``pad`` pitches of zeros).
    For each row of ``tail_dirs`` the function is additionally known beyond the
    box: on the half-plane <x, gamma> < -rho it equals g(<x, gamma_perp>) for
    |<x, gamma_perp>| < R, with cumulative integral table ``tail_G`` sampled from
    u = -R in steps of ``tail_du``. Those pieces are integrated in closed form.
    """
    n = values.shape[0]
    lo = x0 - pad * pitch
    hi = x0 + (n - 1 + pad) * pitch
    K = cos_k.shape[0]
    T = offsets.shape[0]
    m = tail_dirs.shape[0]
    out = np.zeros((K, T))
    for k in prange(K):
        c = cos_k[k]
        s = sin_k[k]
        # line: x(tau) = t * psi + tau * psi_perp, psi_perp = (-s, c)
        for l in range(T):
            t = offsets[l]
            px = t * c
            py = t * s
            a0, a1 = _slab(px, -s, lo, hi, -np.inf, np.inf)
            a0, a1 = _slab(py, c, lo, hi, a0, a1)
            box_hit = a1 > a0
            acc = 0.0
            if box_hit:
                acc = _trapezoid_segment(values, x0, pitch, px, py, -s, c, a0, a1, h)
            for i in range(m):
                gx = tail_dirs[i, 0]
                gy = tail_dirs[i, 1]
                # along-ray coordinate s_i(tau) = sa + tau * sb, transverse u_i(tau) = ua + tau * ub
                sa = px * gx + py * gy
                sb = -s * gx + c * gy
                ua = -px * gy + py * gx
                ub = s * gy + c * gx
                if abs(ub) < 1e-12:
                    continue  # line parallel to the strip: tail diverges, row is singular
                r0 = (-tail_R - ua) / ub
                r1 = (tail_R - ua) / ub
                if r0 > r1:
                    r0, r1 = r1, r0
                if sb > 0.0:
                    r1 = min(r1, (-tail_rho[i] - sa) / sb)
                elif sb < 0.0:
                    r0 = max(r0, (-tail_rho[i] - sa) / sb)
                elif sa >= -tail_rho[i]:
                    continue
                if r1 <= r0:
                    continue
                G = tail_G[i]
                u_lo = -tail_R
                if box_hit:
                    p1 = min(r1, a0)
                    if p1 > r0:
                        acc += (_cumulative_at(G, u_lo, tail_du, ua + p1 * ub)
                                - _cumulative_at(G, u_lo, tail_du, ua + r0 * ub)) / ub
                    p0 = max(r0, a1)
                    if r1 > p0:
                        acc += (_cumulative_at(G, u_lo, tail_du, ua + r1 * ub)
                                - _cumulative_at(G, u_lo, tail_du, ua + p0 * ub)) / ub
                else:
                    acc += (_cumulative_at(G, u_lo, tail_du, ua + r1 * ub)
                            - _cumulative_at(G, u_lo, tail_du, ua + r0 * ub)) / ub
            out[k, l] = acc
    return out


@njit(cache=True, parallel=True)
def backproject(filtered, cos_k, sin_k, t0, dt, centers):
    """sum_k q_k(<x, psi_k>) with linear interpolation in t, zero outside the offsets."""
    K, T = filtered.shape
    n = centers.shape[0]
    out = np.zeros((n, n))
    for iy in prange(n):
        y = centers[iy]
        for ix in range(n):
            x = centers[ix]
            acc = 0.0
            for k in range(K):
                f = (x * cos_k[k] + y * sin_k[k] - t0) / dt
                if f < 0.0 or f > T - 1:
                    continue
                j = int(math.floor(f))
                if j >= T - 1:
                    acc += filtered[k, T - 1]
                else:
                    w = f - j
                    acc += (1.0 - w) * filtered[k, j] + w * filtered[k, j + 1]
            out[iy, ix] = acc
    return out
