"""Divergent-beam, star, Radon and half-plane transforms of gridded images.

Sinogram angles psi_k = pi*k/K index the line NORMAL: row k, column l holds the
integral over l(psi_k, t_l) = {x : <x, psi_k> = t_l}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import linprog

from . import _kernels
from .geometry import StarConfig
from .image import ImageGrid


@dataclass(frozen=True)
class Sinogram:
    angles: np.ndarray
    offsets: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=float)
        offsets = np.asarray(self.offsets, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "values", values)
        if angles.ndim != 1 or offsets.ndim != 1 or angles.size < 2 or offsets.size < 2:
            raise ValueError("a sinogram needs at least 2 angles and 2 offsets")
        if values.shape != (angles.size, offsets.size):
            raise ValueError(f"values shape {values.shape} != ({angles.size}, {offsets.size})")
        steps = np.diff(offsets)
        if not (np.all(steps > 0) and np.allclose(steps, steps[0], rtol=1e-9, atol=0.0)):
            raise ValueError("offsets must be increasing and uniformly spaced")

    @property
    def K(self) -> int:
        return self.angles.size

    @property
    def T(self) -> int:
        return self.offsets.size

    @property
    def dt(self) -> float:
        return float(self.offsets[1] - self.offsets[0])

    def with_values(self, values) -> "Sinogram":
        return Sinogram(self.angles, self.offsets, values)

    def __neg__(self) -> "Sinogram":
        return self.with_values(-self.values)


@dataclass(frozen=True)
class StarField:
    """Sf sampled on an enlarged grid (half-width ext_factor * L, same pitch as f).

    ``config`` and ``support_radius`` describe where the field continues beyond
    the grid: outside the box it is constant along each ray direction, which
    radon() uses to integrate lines past the truncation edge.
    """

    grid: ImageGrid
    ext_factor: float
    config: StarConfig | None = None
    support_radius: float | None = None

    def __post_init__(self):
        if not self.ext_factor >= 1.0:
            raise ValueError(f"ext_factor must be >= 1 (got {self.ext_factor})")


def default_offsets(half_width: float, T: int, t_max: float | None = None) -> np.ndarray:
    if t_max is None:
        t_max = math.sqrt(2.0) * half_width
    return np.linspace(-t_max, t_max, T)


def default_angles(K: int) -> np.ndarray:
    return math.pi * np.arange(K) / K


def _origin(grid: ImageGrid) -> float:
    return -grid.half_width + 0.5 * grid.pitch


def divergent_beam(f: ImageGrid, gamma, x) -> float | np.ndarray:
    """X_gamma f at one point (shape (2,)) or many (shape (N, 2))."""
    g = np.asarray(gamma, dtype=float)
    norm = math.hypot(g[0], g[1])
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"gamma must be a unit vector (|gamma| = {norm:.6g})")
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    out = _kernels.divergent_beam_points(
        f.values, _origin(f), f.pitch, g[0] / norm, g[1] / norm, np.ascontiguousarray(pts), 0.5 * f.pitch
    )
    return float(out[0]) if np.ndim(x) == 1 else out


def extended_size(n: int, ext_factor: float) -> int:
    """ceil(ext_factor * n), bumped by one if needed so the padding is symmetric."""
    n_ext = math.ceil(ext_factor * n - 1e-9)
    if (n_ext - n) % 2:
        n_ext += 1
    return n_ext


def divergent_beam_field(f: ImageGrid, gamma, out_grid: ImageGrid | None = None) -> ImageGrid:
    """X_gamma f at every pixel centre of out_grid (default: f's own grid)."""
    out_grid = out_grid or f
    vals = divergent_beam(f, gamma, out_grid.points())
    return out_grid.with_values(vals.reshape(out_grid.n, out_grid.n))


def star_transform(f: ImageGrid, cfg: StarConfig, ext_factor: float = 3.0,
                   support_radius: float | None = None) -> StarField:
    """Sf = sum_i c_i X_{gamma_i} f on a grid enlarged by ext_factor at the same pitch."""
    n_ext = extended_size(f.n, ext_factor)
    target = ImageGrid.zeros(n_ext, f.half_width * n_ext / f.n)
    pts = target.points()
    total = np.zeros(pts.shape[0])
    for gamma, c in zip(cfg.directions, cfg.weights):
        total += c * divergent_beam(f, gamma, pts)
    if support_radius is None:
        support_radius = min(f.support_radius(), math.sqrt(2.0) * f.half_width + f.pitch)
    return StarField(
        target.with_values(total.reshape(n_ext, n_ext)), n_ext / f.n, cfg, float(support_radius)
    )


@dataclass(frozen=True)
class _Tails:
    dirs: np.ndarray
    rho: np.ndarray
    radius: float
    G: np.ndarray
    du: float

    @classmethod
    def empty(cls) -> "_Tails":
        return cls(np.zeros((0, 2)), np.zeros(0), 0.0, np.zeros((0, 2)), 1.0)


class TruncationError(ValueError):
    """The enlarged grid is too small to separate the far strips of a star field."""


def _strip_tails(field: StarField) -> _Tails:
    grid, cfg, R = field.grid, field.config, field.support_radius
    if cfg is None or R is None or R <= 0.0:
        return _Tails.empty()
    p = grid.pitch
    b = grid.half_width - 0.5 * p  # outermost pixel centres
    if math.sqrt(2.0) * R >= b:
        raise TruncationError(f"support radius {R:.3g} does not fit inside the extended grid")
    dirs = cfg.directions
    rho = np.empty(cfg.m)
    for i, (gx, gy) in enumerate(dirs):
        bounds = [(b - R * abs(gy)) / abs(gx) if abs(gx) > 1e-12 else np.inf,
                  (b - R * abs(gx)) / abs(gy) if abs(gy) > 1e-12 else np.inf]
        rho[i] = min(bounds) * (1.0 - 1e-9)
        if rho[i] <= R:
            raise TruncationError("extended grid leaves no room for the far strips; raise ext_factor")
    _check_strips_disjoint(dirs, rho, R)

    n_u = int(math.ceil(2.0 * R / (0.5 * p))) + 1
    u = np.linspace(-R, R, n_u)
    G = np.empty((cfg.m, n_u))
    for i, (gx, gy) in enumerate(dirs):
        pts = np.stack([-rho[i] * gx - u * gy, -rho[i] * gy + u * gx], axis=1)
        g = _kernels.bilinear_points(grid.values, _origin(grid), p, pts)
        G[i] = cumulative_trapezoid(g, u, initial=0.0)
    return _Tails(np.ascontiguousarray(dirs), rho, float(R), G, float(u[1] - u[0]))


def _check_strips_disjoint(dirs: np.ndarray, rho: np.ndarray, R: float) -> None:
    """Each far strip {<x,g_i> < -rho_i, |<x,g_i^perp>| < R} must miss every other ray's band."""
    for i, gi in enumerate(dirs):
        pi = np.array([-gi[1], gi[0]])
        for j, gj in enumerate(dirs):
            if i == j:
                continue
            pj = np.array([-gj[1], gj[0]])
            # maximise slack d of:  +-<x,pi> <= R, <x,gi> <= -rho_i, +-<x,pj> <= R, <x,gj> <= R
            A = np.array([pi, -pi, gi, pj, -pj, gj])
            rhs = np.array([R, R, -rho[i], R, R, R])
            A_ub = np.hstack([A, np.ones((6, 1))])
            res = linprog([0.0, 0.0, -1.0], A_ub=A_ub, b_ub=rhs,
                          bounds=[(None, None), (None, None), (None, 1.0)], method="highs")
            if res.status == 0 and -res.fun > 1e-9 * max(R, 1.0):
                raise TruncationError(
                    f"far strips of rays {i} and {j} overlap inside the truncation region; "
                    "raise ext_factor"
                )


def radon(g: ImageGrid | StarField, K: int, T: int, t_max: float | None = None,
          tails: bool = True) -> Sinogram:
    """Line integrals over l(psi_k, t_l), psi_k = pi*k/K, t_l uniform on [-t_max, t_max].

    Lines are marched with step pitch/2 and bilinear interpolation. For a
    StarField with a known configuration the integral also includes the part of
    each line beyond the grid, where Sf is constant along the ray directions;
    tails=False integrates the truncated field only.
    """
    if K < 2 or T < 2:
        raise ValueError("radon needs K >= 2 and T >= 2")
    if isinstance(g, StarField):
        grid, pad = g.grid, 0
        strips = _strip_tails(g) if tails else _Tails.empty()
    else:
        grid, pad, strips = g, 1, _Tails.empty()
    angles = default_angles(K)
    offsets = default_offsets(grid.half_width, T, t_max)
    vals = _kernels.line_integrals(
        grid.values, _origin(grid), grid.pitch, pad, np.cos(angles), np.sin(angles), offsets,
        0.5 * grid.pitch, strips.dirs, strips.rho, strips.radius, strips.G, strips.du,
    )
    return Sinogram(angles, offsets, vals)


def half_plane(f: ImageGrid, psi, t, pixel_area: bool = False) -> float | np.ndarray:
    """F_psi(t): sum of f * pitch^2 over pixels in the half-plane {<x, psi> <= t}.

    By default a pixel counts when its centre lies in the half-plane. With
    pixel_area=True each pixel is weighted by the fraction of its square inside
    the half-plane, which removes the staircase that pixel-centre counting
    produces along low-order rational directions.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.ndim == 0:
        psi = np.array([math.cos(psi), math.sin(psi)])
    if abs(math.hypot(psi[0], psi[1]) - 1.0) > 1e-9:
        raise ValueError("psi must be a unit vector")
    X, Y = f.meshgrid()
    proj = (psi[0] * X + psi[1] * Y).ravel()
    order = np.argsort(proj, kind="stable")
    proj = proj[order]
    vals = f.values.ravel()[order]
    cum = np.concatenate([[0.0], np.cumsum(vals)])
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if not pixel_area:
        out = cum[np.searchsorted(proj, t_arr, side="right")]
    else:
        half = 0.5 * f.pitch * np.abs(psi)
        a, b = max(half), min(half)
        lo = np.searchsorted(proj, t_arr - (a + b), side="right")
        hi = np.searchsorted(proj, t_arr + (a + b), side="left")
        out = cum[lo].copy()
        for k in range(t_arr.size):
            if hi[k] > lo[k]:
                frac = _square_cdf(t_arr[k] - proj[lo[k]:hi[k]], a, b)
                out[k] += float(frac @ vals[lo[k]:hi[k]])
    out = out * f.pitch**2
    return float(out[0]) if np.ndim(t) == 0 else out


def _square_cdf(s: np.ndarray, a: float, b: float) -> np.ndarray:
    """P(u + v <= s) for independent u ~ U[-a, a], v ~ U[-b, b], a >= b >= 0."""
    b = max(b, 1e-15 * a)
    ramp_lo = (s + a + b) ** 2 / (8.0 * a * b)
    middle = (s + a) / (2.0 * a)
    ramp_hi = 1.0 - (a + b - s) ** 2 / (8.0 * a * b)
    out = np.where(s <= -a + b, ramp_lo, np.where(s <= a - b, middle, ramp_hi))
    return np.clip(np.where(s <= -a - b, 0.0, np.where(s >= a + b, 1.0, out)), 0.0, 1.0)
