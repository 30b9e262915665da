"""Recover Radon data of f from star data and reconstruct by filtered backprojection.

Row k of the recovered sinogram is q(psi_k) * d/dt R(Sf)(psi_k, .). Rows too
close to a singular direction are masked and filled from their neighbours.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import ConfigError, StarConfig, is_symmetric
from .image import ImageGrid
from .stability import ScanSettings, SingularityReport, find_singular_directions, q_values
from .transforms import Sinogram, StarField, radon

log = logging.getLogger(__name__)

FILTERS = ("ram-lak", "hamming")
FILLS = ("interpolate", "zero")
MAX_MASKED_FRACTION = 0.25


@dataclass(frozen=True)
class InversionSettings:
    """Knobs for recover_radon / fbp.

    Margins are angular radii in radians; None means "derived from K":
    two angular steps around Type-2 directions and half a step around
    Type-1 directions (which only masks rows sitting on them).
    """

    filter: str = "hamming"
    singular_margin: float | None = None
    type1_margin: float | None = None
    fill: str = "interpolate"
    max_interp_rows: int = 2
    tails: bool = True

    def __post_init__(self):
        if self.filter not in FILTERS:
            raise ValueError(f"filter must be one of {FILTERS} (got {self.filter!r})")
        if self.fill not in FILLS:
            raise ValueError(f"fill must be one of {FILLS} (got {self.fill!r})")
        for name in ("singular_margin", "type1_margin"):
            v = getattr(self, name)
            if v is not None and not v >= 0:
                raise ValueError(f"{name} must be >= 0")
        if self.max_interp_rows < 0:
            raise ValueError("max_interp_rows must be >= 0")

    def margins(self, K: int) -> tuple[float, float]:
        step = math.pi / K
        type2 = 2.0 * step if self.singular_margin is None else self.singular_margin
        type1 = 0.5 * step if self.type1_margin is None else self.type1_margin
        return type1, type2


def _half_turn_distance(a: np.ndarray, b: float) -> np.ndarray:
    """Distance between line-normal angles, which are defined modulo pi."""
    d = np.mod(a - b, math.pi)
    return np.minimum(d, math.pi - d)


def singular_row_mask(angles: np.ndarray, cfg: StarConfig, report: SingularityReport,
                      settings: InversionSettings) -> np.ndarray:
    """True for rows whose angle lies inside a Type-1 or Type-2 margin."""
    type1, type2 = settings.margins(angles.size)
    masked = np.zeros(angles.size, dtype=bool)
    # Type-1: |<psi, gamma_j>| small, i.e. psi within type1 of gamma_j + pi/2
    for a in cfg.angles:
        masked |= _half_turn_distance(angles, a + math.pi / 2) < max(type1, 1e-12)
    for a in report.type2_angles:
        masked |= _half_turn_distance(angles, a) < type2
    return masked


def _row(values: np.ndarray, j: int) -> np.ndarray:
    """Row j of the pi-periodic extension: R(psi + pi, t) = R(psi, -t)."""
    K = values.shape[0]
    turns, k = divmod(j, K)
    return values[k][::-1] if turns % 2 else values[k]


def _masked_runs(masked: np.ndarray) -> list[tuple[int, int]]:
    """Cyclic runs [start, stop) of masked rows; stop may exceed K when wrapping."""
    K = masked.size
    start = int(np.flatnonzero(~masked)[0])
    runs = []
    j = start
    while j < start + K:
        if masked[j % K]:
            s = j
            while j < start + K and masked[j % K]:
                j += 1
            runs.append((s, j))
        else:
            j += 1
    return runs


def fill_masked_rows(values: np.ndarray, masked: np.ndarray, fill: str, max_rows: int) -> np.ndarray:
    out = values.copy()
    if not masked.any():
        return out
    K = values.shape[0]
    for s, e in _masked_runs(masked):
        width = e - s
        use_interp = fill == "interpolate" and width <= max_rows
        if fill == "interpolate" and not use_interp:
            log.warning("zero-filling %d consecutive singular rows (limit %d)", width, max_rows)
        left = _row(values, s - 1)
        right = _row(values, e)
        for j in range(s, e):
            k = j % K
            if not use_interp:
                out[k] = 0.0
                continue
            w = (j - (s - 1)) / (width + 1)
            row = (1.0 - w) * left + w * right
            # rows reached by wrapping past pi are stored with t reversed
            out[k] = row[::-1] if (j // K) % 2 else row
    return out


def recover_radon(star_sino: Sinogram, cfg: StarConfig, settings: InversionSettings | None = None,
                  report: SingularityReport | None = None) -> tuple[Sinogram, np.ndarray]:
    """Estimate Rf from R(Sf); returns the sinogram and a per-row validity mask."""
    settings = settings or InversionSettings()
    if is_symmetric(cfg):
        raise ConfigError("symmetric configuration: the star transform is not invertible")
    if not np.allclose(star_sino.offsets, -star_sino.offsets[::-1], rtol=0.0, atol=1e-9 * star_sino.dt):
        raise ValueError("offsets must be symmetric about t = 0")
    report = report or find_singular_directions(cfg, ScanSettings())
    masked = singular_row_mask(star_sino.angles, cfg, report, settings)
    if masked.mean() > MAX_MASKED_FRACTION:
        raise ConfigError(
            f"configuration too singular for K={star_sino.K} angles "
            f"({masked.sum()} of {star_sino.K} rows inside singular margins)"
        )
    deriv = np.gradient(star_sino.values, star_sino.dt, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = q_values(cfg, star_sino.angles)
    est = np.zeros_like(deriv)
    valid = ~masked
    est[valid] = q[valid, None] * deriv[valid]
    est = fill_masked_rows(est, masked, settings.fill, settings.max_interp_rows)
    return star_sino.with_values(est), valid


def ramp_filter(values: np.ndarray, dt: float, window: str = "ram-lak") -> np.ndarray:
    """Convolve each row with the band-limited ramp kernel (zero-padded FFT)."""
    T = values.shape[1]
    P = 1 << max(1, math.ceil(math.log2(2 * T)))
    k = np.arange(P)
    k = np.where(k > P // 2, k - P, k)
    h = np.zeros(P)
    h[0] = 1.0 / (4.0 * dt * dt)
    odd = k % 2 == 1
    h[odd] = -1.0 / (math.pi * k[odd] * dt) ** 2
    H = np.real(np.fft.fft(h))
    if window == "hamming":
        nu = np.abs(np.fft.fftfreq(P))
        H = H * (0.54 + 0.46 * np.cos(math.pi * nu / 0.5))
    elif window != "ram-lak":
        raise ValueError(f"unknown filter {window!r}")
    spec = np.fft.fft(values, n=P, axis=1) * H[None, :]
    return dt * np.real(np.fft.ifft(spec, axis=1))[:, :T]


def fbp(sino: Sinogram, n: int, half_width: float, filter: str = "hamming") -> ImageGrid:
    """Filtered backprojection for angles uniformly covering [0, pi)."""
    filtered = ramp_filter(sino.values, sino.dt, filter)
    grid = ImageGrid.zeros(n, half_width)
    img = _kernels.backproject(
        np.ascontiguousarray(filtered), np.cos(sino.angles), np.sin(sino.angles),
        float(sino.offsets[0]), sino.dt, grid.centers_1d(),
    )
    return grid.with_values(img * (math.pi / sino.K))


@dataclass(frozen=True)
class StarInversion:
    image: ImageGrid
    report: SingularityReport
    radon_estimate: Sinogram
    valid_rows: np.ndarray

    def __iter__(self):
        return iter((self.image, self.report))


def invert_star(star_field: StarField, cfg: StarConfig, K: int, T: int,
                settings: InversionSettings | None = None, n: int | None = None,
                half_width: float | None = None, t_max: float | None = None) -> StarInversion:
    """radon(Sf) -> recover_radon -> fbp, on an n x n grid of half-width L.

    n and L default to the grid the field was computed from.
    """
    settings = settings or InversionSettings()
    if is_symmetric(cfg):
        raise ConfigError("symmetric configuration: the star transform is not invertible")
    if n is None:
        n = round(star_field.grid.n / star_field.ext_factor)
    if half_width is None:
        half_width = star_field.grid.half_width * n / star_field.grid.n
    report = find_singular_directions(cfg, ScanSettings())
    star_sino = radon(star_field, K, T, t_max, tails=settings.tails)
    est, valid = recover_radon(star_sino, cfg, settings, report)
    image = fbp(est, n, half_width, settings.filter)
    return StarInversion(image, report, est, valid)
