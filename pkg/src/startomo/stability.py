"""Singular directions of a star and the polynomial machinery behind them.

For a direction psi on the unit circle the Type-2 polynomial is

    P2(psi) = sum_j c_j * prod_{i != j} <psi, gamma_i>,

which equals c * e_{m-1}(<psi, gamma_1/c_1>, ..., <psi, gamma_m/c_m>) with
c = prod c_i. All evaluations here use the division-free product form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .geometry import TWO_PI, ConfigError, StarConfig, is_symmetric, regular_star, wrap_angle


class SingularDirectionError(ArithmeticError):
    """Evaluation requested at (or numerically at) a singular direction."""

    def __init__(self, kind: str, angle: float, message: str = ""):
        self.kind = kind
        self.angle = angle
        super().__init__(
            message or f"{kind} singular direction at {math.degrees(angle):.9g} deg"
        )


@dataclass(frozen=True)
class ScanSettings:
    n_samples: int = 4096
    refine_tol: float = 1e-12
    zero_floor: float = 1e-10

    def __post_init__(self):
        if self.n_samples < 16:
            raise ValueError("n_samples must be at least 16")
        if self.refine_tol <= 0 or self.zero_floor <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class SingularityReport:
    type1_angles: list[float]
    type2_angles: list[float]
    invertible: bool
    p2_min_abs: float
    p2_is_constant: bool
    p2_identically_zero: bool = False
    tangential: list[float] = field(default_factory=list)

    @property
    def classification(self) -> str:
        if not self.invertible:
            return "non-invertible"
        return "unstable" if self.type2_angles else "stable"

    def to_json(self) -> dict:
        def deg(values):
            return [float(f"{math.degrees(v):.12g}") for v in values]

        return {
            "type1_angles_deg": deg(self.type1_angles),
            "type2_angles_deg": deg(self.type2_angles),
            "tangential_deg": deg(self.tangential),
            "invertible": self.invertible,
            "classification": self.classification,
            "p2_min_abs": float(f"{self.p2_min_abs:.12g}"),
            "p2_is_constant": self.p2_is_constant,
            "p2_identically_zero": self.p2_identically_zero,
        }


def elem_sym_poly(y) -> float:
    """e_{m-1}(y) = sum_i prod_{j != i} y_j, without division."""
    y = np.asarray(y, dtype=float)
    m = y.size
    if m == 0:
        raise ValueError("need at least one variable")
    total = 0.0
    for i in range(m):
        total += float(np.prod(np.delete(y, i)))
    return total


def _leave_one_out_products(x: np.ndarray) -> np.ndarray:
    """prod_{i != j} x[..., i] for every j, via prefix/suffix products."""
    ones = np.ones(x.shape[:-1] + (1,))
    prefix = np.concatenate([ones, np.cumprod(x[..., :-1], axis=-1)], axis=-1)
    suffix = np.concatenate([np.cumprod(x[..., :0:-1], axis=-1)[..., ::-1], ones], axis=-1)
    return prefix * suffix


def _as_direction(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=float)
    if psi.ndim == 0:
        return np.array([math.cos(psi), math.sin(psi)])
    return psi


def inner_products(cfg: StarConfig, psi) -> np.ndarray:
    """<psi, gamma_i> for psi of shape (..., 2) or an array of angles."""
    psi = np.asarray(psi, dtype=float)
    if psi.shape[-1:] != (2,):
        psi = np.stack([np.cos(psi), np.sin(psi)], axis=-1)
    return psi @ cfg.directions.T


def p2_eval(cfg: StarConfig, psi) -> float | np.ndarray:
    """P2 at a unit vector psi (shape (2,) or (..., 2)) or at polar angle(s)."""
    g = inner_products(cfg, _as_direction(psi))
    out = _leave_one_out_products(g) @ cfg.weight_array
    return float(out) if np.ndim(out) == 0 else out


def p2_homogeneous(cfg: StarConfig, r, s) -> float:
    """P2 through c * e_{m-1}(<(r,s), gamma_i / c_i>), valid off the unit circle."""
    c = cfg.weight_array
    y = (r * cfg.directions[:, 0] + s * cfg.directions[:, 1]) / c
    return float(np.prod(c)) * elem_sym_poly(y)


def _check_type1(cfg: StarConfig, g: np.ndarray, psi, zero_floor: float) -> None:
    j = int(np.argmin(np.abs(g)))
    if abs(g[j]) < zero_floor:
        raise SingularDirectionError(
            "type1", math.atan2(psi[1], psi[0]),
            f"psi is orthogonal to ray {j} (|<psi, gamma>| = {abs(g[j]):.3g})",
        )


def w_eval(cfg: StarConfig, psi, zero_floor: float = 1e-10) -> float:
    """w(psi) = sum_i c_i / <psi, gamma_i>."""
    psi = _as_direction(psi)
    g = inner_products(cfg, psi)
    _check_type1(cfg, g, psi, zero_floor)
    return float(np.sum(cfg.weight_array / g))


def q_eval(cfg: StarConfig, psi, zero_floor: float = 1e-10) -> float:
    """q(psi) = -1 / w(psi), computed as -prod<psi, gamma_i> / P2(psi)."""
    psi = _as_direction(psi)
    g = inner_products(cfg, psi)
    _check_type1(cfg, g, psi, zero_floor)
    p2 = float(_leave_one_out_products(g) @ cfg.weight_array)
    if abs(p2) < zero_floor * float(np.sum(np.abs(cfg.weights))):
        raise SingularDirectionError(
            "type2", math.atan2(psi[1], psi[0]), f"P2(psi) = {p2:.3g} vanishes"
        )
    return -float(np.prod(g)) / p2


def q_values(cfg: StarConfig, alphas) -> np.ndarray:
    """Vectorised q on polar angles; 0 on Type-1 and +-inf/nan on Type-2 directions."""
    g = inner_products(cfg, np.asarray(alphas, dtype=float))
    p2 = _leave_one_out_products(g) @ cfg.weight_array
    with np.errstate(divide="ignore", invalid="ignore"):
        return -np.prod(g, axis=-1) / p2


def type1_angles(cfg: StarConfig) -> list[float]:
    raw = np.concatenate(
        [wrap_angle(np.asarray(cfg.angles) + math.pi / 2), wrap_angle(np.asarray(cfg.angles) - math.pi / 2)]
    )
    return _dedupe(sorted(float(a) for a in raw), 1e-9)


def _dedupe(angles: list[float], tol: float) -> list[float]:
    out: list[float] = []
    for a in sorted(angles):
        if out and a - out[-1] <= tol:
            continue
        out.append(a)
    if len(out) > 1 and (out[0] + TWO_PI) - out[-1] <= tol:
        out.pop()
    return out


def find_singular_directions(cfg: StarConfig, settings: ScanSettings | None = None) -> SingularityReport:
    """Locate Type-1 directions analytically and Type-2 directions by scanning P2."""
    settings = settings or ScanSettings()
    n = settings.n_samples
    alphas = TWO_PI * np.arange(n) / n
    F = p2_eval(cfg, alphas)
    absF = np.abs(F)
    fmax = float(absF.max())
    fmin = float(absF.min())

    def f(a):
        return p2_eval(cfg, float(a))

    identically_zero = fmax < 1e-12
    is_constant = identically_zero or (float(F.max() - F.min()) < 1e-12 * fmax)

    roots: list[float] = []
    tangential: list[float] = []
    if not is_constant:
        step = TWO_PI / n
        F_next = np.roll(F, -1)
        for i in np.flatnonzero(F == 0.0):
            roots.append(float(alphas[i]))
        for i in np.flatnonzero(F * F_next < 0.0):
            roots.append(float(brentq(f, alphas[i], alphas[i] + step, xtol=settings.refine_tol, rtol=1e-15)))
        # touching zeros: local minima of |F| below the floor that never change sign
        F_prev = np.roll(F, 1)
        candidates = (
            (absF <= np.abs(F_prev)) & (absF <= np.abs(F_next))
            & (absF < settings.zero_floor * fmax) & (F * F_prev > 0) & (F * F_next > 0)
        )
        for i in np.flatnonzero(candidates):
            lo = alphas[i] - step
            res = minimize_scalar(
                lambda a: abs(f(a)), bounds=(lo, lo + 2 * step),
                method="bounded", options={"xatol": settings.refine_tol},
            )
            tangential.append(float(wrap_angle(res.x)))
        roots = [float(wrap_angle(r)) for r in roots]
    type2 = _dedupe(roots + tangential, TWO_PI / n)
    tangential = [t for t in type2 if any(abs(t - u) <= TWO_PI / n for u in tangential)]

    invertible = not is_symmetric(cfg)
    if identically_zero and invertible:
        # P2 == 0 forces symmetry; a mismatch means the tolerances are off
        raise ConfigError("P2 vanishes identically but the star is not symmetric")
    return SingularityReport(
        type1_angles=type1_angles(cfg),
        type2_angles=type2,
        invertible=invertible and not identically_zero,
        p2_min_abs=fmin,
        p2_is_constant=bool(is_constant),
        p2_identically_zero=bool(identically_zero),
        tangential=tangential,
    )


def halfplane_demo_config(m: int) -> StarConfig:
    """Uniform-weight star with every ray inside one open half-plane.

    Rays are spread evenly over a 150 degree fan centred on +y and indexed by
    increasing polar angle. Such stars always carry Type-2 singular directions.
    """
    if m < 3 or m % 2 == 0:
        raise ConfigError(f"half-plane demo stars are defined for odd m >= 3 (got {m})")
    return StarConfig.from_degrees(np.linspace(15.0, 165.0, m).tolist())


def conjecture_scan(m: int, n_samples: int = 10_000) -> tuple[float, bool]:
    """min |e_{m-1}(r a + s b)| over the unit circle for the regular m-star apertures.

    A positive minimum means the plane spanned by a and b meets the zero set of
    e_{m-1} only at the origin.
    """
    ap = regular_star(m).aperture()
    return _aperture_scan(ap.a, ap.b, n_samples)


def _aperture_scan(a, b, n_samples: int) -> tuple[float, bool]:
    theta = TWO_PI * np.arange(n_samples) / n_samples
    y = np.cos(theta)[:, None] * a[None, :] + np.sin(theta)[:, None] * b[None, :]
    vals = _leave_one_out_products(y).sum(axis=1)
    vmax = float(np.abs(vals).max())
    is_constant = float(vals.max() - vals.min()) < 1e-12 * vmax if vmax > 0 else True
    return float(np.abs(vals).min()), bool(is_constant)


def aperture_scan(cfg: StarConfig, n_samples: int = 10_000) -> tuple[float, bool]:
    """Same scan as conjecture_scan, for an arbitrary star's aperture vectors."""
    ap = cfg.aperture()
    return _aperture_scan(ap.a, ap.b, n_samples)


def e2_cone_check(y) -> bool:
    """Whether y lies on the zero cone of e_2 in R^3."""
    y = np.asarray(y, dtype=float)
    if y.shape != (3,) or not np.any(y):
        raise ValueError("e2_cone_check expects a nonzero 3-vector")
    e2 = y[0] * y[1] + y[0] * y[2] + y[1] * y[2]
    return bool(abs(e2) < 1e-10 * float(y @ y))
