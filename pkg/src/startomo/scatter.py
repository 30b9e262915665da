"""Single-scattering data: simulate phi_ij = X_i f + k_ij X_j f + eta, and recover (f, eta).

With k_ij = 1 every phi_ij contains eta once, so any symmetric hollow weight
matrix omega with zero total cancels it:

    sum_{i<j} omega_ij phi_ij = sum_i c_i X_i f,   c_i = sum_j omega_ij.

The right-hand side is a star transform, inverted with the usual pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .geometry import ConfigError, StarConfig, is_symmetric
from .image import ImageGrid
from .inversion import InversionSettings, invert_star
from .transforms import StarField, divergent_beam, extended_size

SUM_TOL = 1e-10


@dataclass(frozen=True)
class OmegaMatrix:
    omega: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        object.__setattr__(self, "omega", w)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("omega must be a square matrix")
        scale = max(1.0, float(np.abs(w).max()))
        if not np.allclose(w, w.T, rtol=0.0, atol=1e-12 * scale):
            raise ValueError("omega must be symmetric")
        if np.any(np.abs(np.diag(w)) > 1e-12 * scale):
            raise ValueError("omega must have a zero diagonal")
        if abs(w.sum()) > 1e-12 * scale * w.size:
            raise ValueError("entries of omega must sum to zero")

    @property
    def row_sums(self) -> np.ndarray:
        return self.omega.sum(axis=1)


def default_weights(m: int) -> np.ndarray:
    """Zero-sum preset for m = 2k+1 rays: k weights of -1/k, then k+1 of 1/(k+1)."""
    if m < 3 or m % 2 == 0:
        raise ValueError(f"the preset is defined for odd m >= 3 (got {m})")
    k = m // 2
    return np.concatenate([np.full(k, -1.0 / k), np.full(k + 1, 1.0 / (k + 1))])


def omega_for_weights(c) -> OmegaMatrix:
    """Minimum-norm symmetric hollow omega whose row sums are c."""
    c = np.asarray(c, dtype=float)
    m = c.size
    if m < 3:
        raise ConfigError(f"need at least 3 rays to eliminate eta (got {m})")
    scale = float(np.abs(c).max())
    if scale == 0.0:
        raise ConfigError("weights are all zero")
    if abs(c.sum()) > SUM_TOL * scale:
        raise ConfigError(f"weights must sum to zero to cancel eta (sum = {c.sum():.3g})")
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    A = np.zeros((m, len(pairs)))
    for col, (i, j) in enumerate(pairs):
        A[i, col] = A[j, col] = 1.0
    x, *_ = np.linalg.lstsq(A, c, rcond=None)
    if np.abs(A @ x - c).max() > SUM_TOL * scale:
        raise ConfigError(f"no symmetric hollow omega has row sums {c.tolist()}")
    w = np.zeros((m, m))
    for (i, j), v in zip(pairs, x):
        w[i, j] = w[j, i] = v
    return OmegaMatrix(w)


@dataclass
class ScatterData:
    """phi_ij sampled on an enlarged grid; the measurement region is its central n x n block."""

    angles: tuple[float, ...]
    phi: dict[tuple[int, int], ImageGrid]
    k: np.ndarray
    n: int
    ext_factor: float
    support_radius: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m = len(self.angles)
        self.k = np.asarray(self.k, dtype=float)
        if self.k.shape != (m, m):
            raise ValueError(f"k must be {m}x{m}")
        off = ~np.eye(m, dtype=bool)
        if np.any(self.k[off] <= 0):
            raise ValueError("k_ij must be positive")
        shapes = {(g.n, g.half_width) for g in self.phi.values()}
        if len(shapes) > 1:
            raise ValueError("all phi grids must share one geometry")

    @property
    def m(self) -> int:
        return len(self.angles)

    @property
    def directions(self) -> np.ndarray:
        a = np.asarray(self.angles)
        return np.stack([np.cos(a), np.sin(a)], axis=1)

    @property
    def grid(self) -> ImageGrid:
        return next(iter(self.phi.values()))


def simulate_scatter(f: ImageGrid, eta: ImageGrid, angles, k=None, ext_factor: float = 3.0) -> ScatterData:
    """phi_ij(x) = X_i f(x) + k_ij X_j f(x) + eta(x) for every ordered pair i != j."""
    if isinstance(angles, StarConfig):
        angles = angles.angles
    angles = tuple(float(a) for a in angles)
    m = len(angles)
    k = np.ones((m, m)) if k is None else np.asarray(k, dtype=float)
    if eta.n != f.n or not math.isclose(eta.half_width, f.half_width):
        raise ValueError("f and eta must share a grid")
    n_ext = extended_size(f.n, ext_factor)
    big = eta.embed(n_ext)
    pts = big.points()
    beams = []
    for a in angles:
        beams.append(divergent_beam(f, (math.cos(a), math.sin(a)), pts).reshape(n_ext, n_ext))
    phi = {}
    for i, j in permutations(range(m), 2):
        phi[(i, j)] = big.with_values(beams[i] + k[i, j] * beams[j] + big.values)
    R = min(f.support_radius(), math.sqrt(2.0) * f.half_width + f.pitch)
    return ScatterData(angles, phi, k, f.n, n_ext / f.n, R)


def combination_from_omega(omega: OmegaMatrix) -> dict[tuple[int, int], float]:
    """Coefficients on ordered pairs: omega_ij / 2 on each of phi_ij and phi_ji."""
    m = omega.omega.shape[0]
    return {(i, j): 0.5 * omega.omega[i, j] for i, j in permutations(range(m), 2) if omega.omega[i, j] != 0}


def combination_weights(coeffs: dict[tuple[int, int], float], k: np.ndarray) -> np.ndarray:
    """Star weights c produced by sum a_ij phi_ij; raises unless eta cancels."""
    m = k.shape[0]
    c = np.zeros(m)
    total = 0.0
    for (i, j), a in coeffs.items():
        if i == j:
            raise ValueError("pairs must have i != j")
        c[i] += a
        c[j] += a * k[i, j]
        total += a
    scale = max(abs(a) for a in coeffs.values())
    if abs(total) > SUM_TOL * scale:
        raise ConfigError(f"combination does not cancel eta (coefficients sum to {total:.3g})")
    return c


def combine(data: ScatterData, coeffs: dict[tuple[int, int], float]) -> np.ndarray:
    out = np.zeros_like(data.grid.values)
    for pair, a in coeffs.items():
        out += a * data.phi[pair].values
    return out


@dataclass(frozen=True)
class ScatterRecovery:
    f: ImageGrid
    eta: ImageGrid
    config: StarConfig
    coefficients: dict


def recover_f_eta(data: ScatterData, c=None, settings: InversionSettings | None = None,
                  K: int = 360, T: int | None = None,
                  combination: dict[tuple[int, int], float] | None = None) -> ScatterRecovery:
    """Eliminate eta, invert the resulting star field for f, then average eta over pairs.

    Pass weights c (requires k = 1) or an explicit combination of ordered pairs
    whose coefficients sum to zero (any k).
    """
    if combination is None:
        if c is None:
            raise ValueError("give either weights c or an explicit combination")
        off = ~np.eye(data.m, dtype=bool)
        if not np.allclose(data.k[off], 1.0):
            raise ConfigError("weights-only elimination needs k_ij = 1; pass an explicit combination")
        combination = combination_from_omega(omega_for_weights(c))
    weights = combination_weights(combination, data.k)
    keep = np.abs(weights) > 1e-12 * np.abs(weights).max()
    cfg = StarConfig(tuple(a for a, kp in zip(data.angles, keep) if kp), tuple(weights[keep]))
    if is_symmetric(cfg):
        raise ConfigError("the combined star is symmetric and cannot be inverted")

    big = data.grid
    field_grid = big.with_values(combine(data, combination))
    star = StarField(field_grid, data.ext_factor, cfg, data.support_radius)
    if T is None:
        T = default_offset_count(big.n)
    f_hat = invert_star(star, cfg, K, T, settings, n=data.n).image

    crop = big.crop(data.n)
    pts = crop.points()
    beams = [divergent_beam(f_hat, g, pts).reshape(data.n, data.n) for g in data.directions]
    acc = np.zeros((data.n, data.n))
    for (i, j), phi in data.phi.items():
        acc += phi.crop(data.n).values - beams[i] - data.k[i, j] * beams[j]
    eta_hat = crop.with_values(acc / len(data.phi))
    return ScatterRecovery(f_hat, eta_hat, cfg, combination)


def default_offset_count(n_grid: int) -> int:
    """Offsets spaced about one pitch apart across the grid diagonal."""
    return int(math.ceil(math.sqrt(2.0) * n_grid)) + 1
