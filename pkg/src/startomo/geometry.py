"""Star configurations: ray directions, weights, and their classification.

A star is stored as polar angles plus weights, so every ray direction is a
unit vector by construction. Components are derived on demand.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ANGLE_EPS = 1e-9
WEIGHT_EPS = 1e-12
TRIANGLE_EPS = 1e-9

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Raised for malformed or degenerate star configurations."""


def wrap_angle(alpha):
    """Map angles into [0, 2*pi)."""
    out = np.mod(alpha, TWO_PI)
    # np.mod returns exactly 2*pi for tiny negative inputs
    return np.where(out >= TWO_PI, 0.0, out)


def angle_distance(a: float, b: float) -> float:
    """Unsigned distance between two angles on the circle, in [0, pi]."""
    d = math.fmod(abs(a - b), TWO_PI)
    return min(d, TWO_PI - d)


@dataclass(frozen=True)
class ApertureVectors:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        norms = self.a**2 + self.b**2
        if not np.allclose(norms, 1.0, rtol=0.0, atol=1e-12):
            raise ConfigError("aperture components must satisfy a_i^2 + b_i^2 = 1")


@dataclass(frozen=True)
class StarConfig:
    """m ray directions (polar angles, radians) and m nonzero weights."""

    angles: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        angles = tuple(float(a) for a in self.angles)
        weights = tuple(float(c) for c in self.weights)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "weights", weights)
        if len(angles) < 1:
            raise ConfigError("a star needs at least one ray")
        if len(angles) != len(weights):
            raise ConfigError(f"{len(angles)} rays but {len(weights)} weights")
        if not all(math.isfinite(v) for v in angles + weights):
            raise ConfigError("angles and weights must be finite")
        if any(c == 0.0 for c in weights):
            raise ConfigError("all weights must be nonzero")
        for i in range(len(angles)):
            for j in range(i + 1, len(angles)):
                if angle_distance(angles[i], angles[j]) <= ANGLE_EPS:
                    raise ConfigError(
                        f"rays {i} and {j} point in the same direction "
                        f"({math.degrees(angles[i]):.9g} deg)"
                    )

    @classmethod
    def from_degrees(cls, rays_deg, weights=None) -> "StarConfig":
        rays_deg = list(rays_deg)
        if weights is None:
            weights = [1.0] * len(rays_deg)
        return cls(tuple(math.radians(a) for a in rays_deg), tuple(weights))

    @property
    def m(self) -> int:
        return len(self.angles)

    @property
    def directions(self) -> np.ndarray:
        """(m, 2) array of unit ray vectors."""
        a = np.asarray(self.angles)
        return np.stack([np.cos(a), np.sin(a)], axis=1)

    @property
    def weight_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def aperture(self) -> ApertureVectors:
        d = self.directions
        return ApertureVectors(d[:, 0].copy(), d[:, 1].copy())

    def degrees(self) -> list[float]:
        return [math.degrees(a) for a in self.angles]

    def permuted(self, order) -> "StarConfig":
        order = list(order)
        return StarConfig(
            tuple(self.angles[i] for i in order), tuple(self.weights[i] for i in order)
        )

    def to_json(self) -> dict:
        return {"rays_deg": self.degrees(), "weights": list(self.weights)}

    @classmethod
    def from_json(cls, data: dict) -> "StarConfig":
        if not isinstance(data, dict) or "rays_deg" not in data:
            raise ConfigError('star config JSON needs a "rays_deg" list')
        rays = data["rays_deg"]
        weights = data.get("weights")
        if not isinstance(rays, list) or (weights is not None and not isinstance(weights, list)):
            raise ConfigError('"rays_deg" and "weights" must be lists of numbers')
        try:
            rays = [float(v) for v in rays]
            weights = None if weights is None else [float(v) for v in weights]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"non-numeric entry in star config: {exc}") from None
        return cls.from_degrees(rays, weights)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "StarConfig":
        return cls.from_json(json.loads(Path(path).read_text()))


def regular_star(m: int) -> StarConfig:
    """Uniform-weight star whose rays point at the vertices of a regular m-gon.

    Ordering follows alpha_1 = 0, alpha_{2j} = 2*pi*j/m, alpha_{2j+1} = -2*pi*j/m,
    so the aperture vectors read a = (1, a2, a2, ...), b = (0, b2, -b2, ...).
    """
    if not isinstance(m, (int, np.integer)) or m < 3 or m % 2 == 0:
        raise ConfigError(
            f"regular stars are built for odd m >= 3 (got {m}); "
            "even regular stars are symmetric and not invertible"
        )
    k = m // 2
    angles = [0.0]
    for j in range(1, k + 1):
        angles.append(TWO_PI * j / m)
        angles.append(-TWO_PI * j / m)
    return StarConfig(tuple(angles), (1.0,) * m)


def _antipodal_partner(angles, i, taken) -> int | None:
    target = angles[i] + math.pi
    for j in range(len(angles)):
        if j != i and j not in taken and angle_distance(angles[j], target) <= ANGLE_EPS:
            return j
    return None


def is_symmetric(cfg: StarConfig) -> bool:
    """True iff the rays split into antipodal pairs carrying equal weights."""
    if cfg.m % 2:
        return False
    order = sorted(range(cfg.m), key=lambda i: wrap_angle(cfg.angles[i]))
    taken: set[int] = set()
    for i in order:
        if i in taken:
            continue
        j = _antipodal_partner(cfg.angles, i, taken | {i})
        if j is None or abs(cfg.weights[i] - cfg.weights[j]) > WEIGHT_EPS:
            return False
        taken.update((i, j))
    return True


def is_invertible(cfg: StarConfig) -> bool:
    return not is_symmetric(cfg)


def sign_normalize(cfg: StarConfig) -> StarConfig:
    """Flip (gamma_i, c_i) -> (-gamma_i, -c_i) wherever c_i < 0.

    Each flip negates P2, so its zero set and q(psi) are unchanged. Raises
    ConfigError if two rays collapse onto the same direction.
    """
    angles = []
    weights = []
    for a, c in zip(cfg.angles, cfg.weights):
        if c < 0:
            angles.append(float(wrap_angle(a + math.pi)))
            weights.append(-c)
        else:
            angles.append(a)
            weights.append(c)
    try:
        return StarConfig(tuple(angles), tuple(weights))
    except ConfigError as exc:
        raise ConfigError(f"sign normalization produced a degenerate star: {exc}") from None


def admissible_normal(n) -> bool:
    """Whether |n1|, |n2|, |n3| can be the side lengths of a triangle."""
    n = np.abs(np.asarray(n, dtype=float))
    if n.shape != (3,) or not np.any(n):
        raise ConfigError("admissible_normal expects a nonzero 3-vector")
    tol = 1e-15 * n.sum()
    return bool(
        n[0] + n[1] >= n[2] - tol and n[1] + n[2] >= n[0] - tol and n[0] + n[2] >= n[1] - tol
    )


def _triangle_slack(n) -> float:
    n1, n2, n3 = n
    return min(n1 + n2 - n3, n2 + n3 - n1, n1 + n3 - n2)


def _closing_directions(n) -> np.ndarray:
    """Unit vectors g_i with n1*g1 + n2*g2 + n3*g3 = 0, g1 = (1, 0)."""
    n1, n2, n3 = n
    # interior angle between sides n1 and n2 lies opposite side n3
    cos_t3 = np.clip((n1**2 + n2**2 - n3**2) / (2.0 * n1 * n2), -1.0, 1.0)
    turn = math.pi - math.acos(cos_t3)
    g1 = np.array([1.0, 0.0])
    g2 = np.array([math.cos(turn), math.sin(turn)])
    g3 = -(n1 * g1 + n2 * g2) / n3
    g3 /= np.linalg.norm(g3)
    return np.stack([g1, g2, g3])


def stable_config_for_weights(c1: float, c2: float, c3: float) -> StarConfig:
    """A 3-ray star with the given weights and no Type-2 singular directions.

    Works on |c| scaled so the median magnitude is 1 and sorted ascending
    (0 < c1 <= 1 <= c3), takes the admissible normal (1, 1, 1/c3), closes the
    triangle n1*g1 + n2*g2 + n3*g3 = 0, then restores order and signs.
    """
    from .stability import ScanSettings, find_singular_directions

    c = np.array([c1, c2, c3], dtype=float)
    if not np.all(np.isfinite(c)) or np.any(c == 0):
        raise ConfigError("weights must be finite and nonzero")
    mag = np.abs(c)
    order = np.argsort(mag, kind="stable")
    scaled = mag[order] / mag[order][1]

    normal = np.array([1.0, 1.0, 1.0 / scaled[2]])
    image_normal = scaled * normal  # normal of W^{-1} T, must stay off the cone
    slack = min(_triangle_slack(normal), _triangle_slack(image_normal))
    if slack < TRIANGLE_EPS:
        raise ConfigError(
            f"weight ratios {scaled[0]:.3g}:1:{scaled[2]:.3g} give a degenerate "
            f"triangle (slack {slack:.3g}); the resulting star would be ill-conditioned"
        )
    dirs_sorted = _closing_directions(normal)

    angles = np.empty(3)
    for pos, idx in enumerate(order):
        g = dirs_sorted[pos]
        if c[idx] < 0:
            g = -g
        angles[idx] = math.atan2(g[1], g[0])
    cfg = StarConfig(tuple(float(wrap_angle(a)) for a in angles), tuple(float(v) for v in c))

    report = find_singular_directions(cfg, ScanSettings())
    if report.type2_angles or report.p2_min_abs <= 0.0:
        raise ConfigError(
            f"constructed star still has Type-2 directions (min |P2| = {report.p2_min_abs:.3g})"
        )
    return cfg
