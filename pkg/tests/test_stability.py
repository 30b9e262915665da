import math

import numpy as np
import pytest
from numpy.polynomial import Polynomial

from startomo.geometry import StarConfig, regular_star, stable_config_for_weights
from startomo.stability import (
    ScanSettings, SingularDirectionError, aperture_scan, conjecture_scan, e2_cone_check,
    elem_sym_poly, find_singular_directions, halfplane_demo_config, inner_products, p2_eval,
    p2_homogeneous, q_eval, q_values, w_eval,
)


def polynomial_roots_oracle(cfg: StarConfig) -> list[float]:
    """Zeros of P2 on the circle from the roots of P2(x, 1), plus x = infinity."""
    g = cfg.directions
    total = Polynomial([0.0])
    for j, c in enumerate(cfg.weights):
        prod = Polynomial([1.0])
        for i in range(cfg.m):
            if i != j:
                prod = prod * Polynomial([g[i, 1], g[i, 0]])
        total = total + c * prod
    angles = []
    for r in total.roots():
        if abs(r.imag) < 1e-7:
            a = math.atan2(1.0, r.real)
            angles += [a % (2 * math.pi), (a + math.pi) % (2 * math.pi)]
    # psi = (1, 0) is a zero when the leading coefficient vanishes
    if abs(p2_eval(cfg, 0.0)) < 1e-12:
        angles += [0.0, math.pi]
    return sorted(angles)


def circle_close(a, b, tol):
    d = abs(a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d) < tol


def test_elem_sym_poly():
    assert elem_sym_poly([2.0, 3.0]) == 5.0
    assert elem_sym_poly([1.0, 2.0, 3.0]) == 11.0
    assert elem_sym_poly([5.0]) == 1.0


def test_p2_forms_agree():
    cfg = StarConfig.from_degrees([10, 80, 200, 300], [1, -2, 0.5, 3])
    for a in np.linspace(0, 6, 13):
        assert p2_eval(cfg, a) == pytest.approx(p2_homogeneous(cfg, math.cos(a), math.sin(a)), abs=1e-12)


def test_vline_type2_directions():
    rep = find_singular_directions(StarConfig.from_degrees([0, 120]))
    assert len(rep.type2_angles) == 2
    got = sorted(math.degrees(a) for a in rep.type2_angles)
    assert got[0] == pytest.approx(150.0, abs=1e-9)
    assert got[1] == pytest.approx(330.0, abs=1e-9)


def test_regular_stars_constant_p2():
    expected = {3: -0.75, 5: 0.3125, 7: -0.109375, 9: 0.03515625}
    for m, value in expected.items():
        rep = find_singular_directions(regular_star(m))
        assert rep.type2_angles == []
        assert rep.p2_is_constant
        assert p2_eval(regular_star(m), 0.3) == pytest.approx(value, abs=1e-12)


def test_halfplane_demo_has_type2():
    for m in (3, 5, 7):
        rep = find_singular_directions(halfplane_demo_config(m))
        assert rep.type2_angles
        assert rep.classification == "unstable"


def test_symmetric_is_noninvertible():
    rep = find_singular_directions(StarConfig.from_degrees([0, 180]))
    assert rep.p2_identically_zero
    assert rep.classification == "non-invertible"
    rep = find_singular_directions(StarConfig.from_degrees([30, 75, 210, 255]))
    assert not rep.invertible


@pytest.mark.parametrize("seed", range(12))
def test_scan_matches_polynomial_oracle(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 7))
    cfg = StarConfig(tuple(rng.uniform(0, 2 * math.pi, m)), tuple(rng.uniform(0.3, 2, m) * rng.choice([-1, 1], m)))
    rep = find_singular_directions(cfg, ScanSettings(n_samples=8192))
    oracle = polynomial_roots_oracle(cfg)
    # every simple root from the oracle is found, and nothing else
    dedup = []
    for a in oracle:
        if not any(circle_close(a, b, 1e-6) for b in dedup):
            dedup.append(a)
    assert len(rep.type2_angles) == len(dedup)
    for a in dedup:
        assert any(circle_close(a, b, 1e-8) for b in rep.type2_angles)


def test_even_m_always_has_type2():
    rng = np.random.default_rng(7)
    for _ in range(200):
        m = int(rng.choice([2, 4, 6]))
        cfg = StarConfig(tuple(rng.uniform(0, 2 * math.pi, m)), (1.0,) * m)
        rep = find_singular_directions(cfg)
        assert rep.type2_angles, cfg


def test_q_and_w():
    cfg = regular_star(3)
    psi = 0.4
    assert q_eval(cfg, psi) * w_eval(cfg, psi) == pytest.approx(-1.0)
    g = inner_products(cfg, psi)
    assert q_eval(cfg, psi) == pytest.approx(-1.0 / np.sum(1.0 / g))
    assert q_values(cfg, np.array([psi]))[0] == pytest.approx(q_eval(cfg, psi))


def test_q_raises_at_singular_directions():
    cfg = StarConfig.from_degrees([0, 120])
    with pytest.raises(SingularDirectionError) as exc:
        q_eval(cfg, math.radians(90))
    assert exc.value.kind == "type1"
    with pytest.raises(SingularDirectionError) as exc:
        q_eval(cfg, math.radians(150))
    assert exc.value.kind == "type2"


def test_single_ray_q():
    cfg = StarConfig.from_degrees([0])
    assert q_eval(cfg, 0.3) == pytest.approx(-math.cos(0.3))


def test_conjecture_scan_values():
    for m, v in {3: 0.75, 5: 0.3125, 7: 0.109375, 9: 0.03515625}.items():
        min_abs, constant = conjecture_scan(m, 10_000)
        assert constant
        assert min_abs == pytest.approx(v, abs=1e-10)


def test_aperture_scan_detects_zero_plane():
    min_abs, _ = aperture_scan(StarConfig.from_degrees([0, 90, 135]))
    assert min_abs < 1e-2


def test_e2_cone():
    assert e2_cone_check([1.0, 1.0, -0.5])
    assert not e2_cone_check([1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        e2_cone_check([0, 0, 0])


def test_report_json():
    rep = find_singular_directions(StarConfig.from_degrees([0, 120]))
    data = rep.to_json()
    assert data["classification"] == "unstable"
    assert sorted(data["type2_angles_deg"]) == pytest.approx([150.0, 330.0])


def test_stable_for_weights_random():
    rng = np.random.default_rng(3)
    for _ in range(20):
        c = np.exp(rng.uniform(math.log(0.5), math.log(2.0), 3)) * rng.choice([-1, 1], 3)
        cfg = stable_config_for_weights(*c)
        assert find_singular_directions(cfg).type2_angles == []
