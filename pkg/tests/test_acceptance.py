"""Acceptance criteria, one test per criterion.

Each test records a "[PASS]/[FAIL] criterion N: ..." line, printed at the end of
the pytest run. Run directly with `python tests/test_acceptance.py`.
"""

import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import ACCEPTANCE_LINES  # noqa: E402

from startomo.geometry import StarConfig, is_symmetric, regular_star, stable_config_for_weights  # noqa: E402
from startomo.image import (  # noqa: E402
    ImageGrid, gaussian_bump, rasterize, relative_l2, rmse, shepp_logan, two_bump_spec,
)
from startomo.inversion import InversionSettings, fbp, invert_star, recover_radon  # noqa: E402
from startomo.scatter import (  # noqa: E402
    combination_from_omega, combine, omega_for_weights, recover_f_eta, simulate_scatter,
)
from startomo.stability import (  # noqa: E402
    ScanSettings, conjecture_scan, find_singular_directions, p2_eval,
)
from startomo.transforms import divergent_beam, half_plane, radon, star_transform  # noqa: E402

pytestmark = pytest.mark.slow


def record(number: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def gaussian(n: int) -> ImageGrid:
    return gaussian_bump((0.2, 0.1), 0.12, n, 1.0)


def test_criterion_1_relation_identity():
    start = time.perf_counter()
    f = gaussian(256)
    cfg = regular_star(3)
    K, T = 360, 600
    star_sino = radon(star_transform(f, cfg, 3.0), K, T)
    est, valid = recover_radon(star_sino, cfg)
    truth = radon(f, K, T, t_max=star_sino.offsets[-1])
    rel = np.abs(est.values - truth.values)[valid].max() / np.abs(truth.values).max()
    elapsed = time.perf_counter() - start
    record(1, rel <= 0.03 and elapsed <= 120.0,
           f"max row error {100 * rel:.2f}% of max|Rf| on {valid.sum()}/{K} rows "
           f"(Type-1 rows masked), {elapsed:.1f} s (limits 3%, 120 s)")


def test_criterion_2_derivative_identities():
    f = gaussian(256)
    p = f.pitch
    K, T = 72, 600
    sino = radon(f, K, T)
    scale = np.abs(sino.values).max()

    # dF/dt = Rf
    halfplane = halfplane_point = 0.0
    for k, psi in enumerate(sino.angles):
        for area in (True, False):
            dF = (half_plane(f, psi, sino.offsets + p, area) - half_plane(f, psi, sino.offsets - p, area)) / (2 * p)
            e = np.abs(dF - sino.values[k]).max() / scale
            if area:
                halfplane = max(halfplane, e)
            else:
                halfplane_point = max(halfplane_point, e)

    # d/dt R(X_gamma f) = -(1 / <psi, gamma>) dF/dt for |<psi, gamma>| > 0.3
    gamma_angle = math.radians(35.0)
    gamma = np.array([math.cos(gamma_angle), math.sin(gamma_angle)])
    beam_sino = radon(star_transform(f, StarConfig((gamma_angle,), (1.0,)), 3.0), K, T)
    d_beam = np.gradient(beam_sino.values, beam_sino.dt, axis=1)
    beam_radon = 0.0
    ref = 0.0
    for k, psi in enumerate(beam_sino.angles):
        beta = math.cos(psi - gamma_angle)
        if abs(beta) <= 0.3:
            continue
        t = beam_sino.offsets
        dF = (half_plane(f, psi, t + p, True) - half_plane(f, psi, t - p, True)) / (2 * p)
        rhs = -dF / beta
        ref = max(ref, np.abs(rhs).max())
        beam_radon = max(beam_radon, np.abs(d_beam[k] - rhs).max())
    beam_radon /= ref

    # D_gamma X_gamma f = -f
    pts = f.points()
    D = (divergent_beam(f, gamma, pts + p * gamma) - divergent_beam(f, gamma, pts - p * gamma)) / (2 * p)
    directional = np.abs(D + f.values.ravel()).max() / f.values.max()

    ok = halfplane <= 0.01 and beam_radon <= 0.02 and directional <= 0.02
    record(2, ok,
           f"dF/dt = Rf {100 * halfplane:.3f}% (pixel-centre half-planes: {100 * halfplane_point:.1f}%), "
           f"d/dt R(X f) = -dF/dt / <psi, gamma> {100 * beam_radon:.3f}%, directional derivative {100 * directional:.3f}% "
           f"(limits 1%, 2%, 2%)")


def test_criterion_3_singularity_algebra():
    rep = find_singular_directions(StarConfig.from_degrees([0, 120]))
    got = sorted(((math.degrees(a) + 180) % 360) - 180 for a in rep.type2_angles)
    a_ok = len(got) == 2 and abs(got[0] + 30) <= 1e-9 and abs(got[1] - 150) <= 1e-9

    b_ok = True
    for m in (3, 5, 7):
        r = find_singular_directions(regular_star(m))
        b_ok &= (not r.type2_angles) and r.p2_is_constant
    m3 = p2_eval(regular_star(3), np.linspace(0, 2 * math.pi, 1000))
    b_ok &= bool(np.abs(m3 + 0.75).max() <= 1e-12)

    rng = np.random.default_rng(2024)
    c_fail = 0
    tried = 0
    while tried < 1000:
        m = int(rng.choice([2, 4, 6, 8]))
        cfg = StarConfig(tuple(rng.uniform(0, 2 * math.pi, m)), (1.0,) * m)
        if is_symmetric(cfg):
            continue
        tried += 1
        c_fail += not find_singular_directions(cfg).type2_angles

    symmetric = [
        StarConfig.from_degrees([0, 180]),
        StarConfig.from_degrees([10, 100, 190, 280], [2, 3, 2, 3]),
        StarConfig.from_degrees([5, 60, 130, 185, 240, 310], [1, 2, 3, 1, 2, 3]),
    ]
    d_ok = all(find_singular_directions(c).classification == "non-invertible" for c in symmetric)

    record(3, a_ok and b_ok and c_fail == 0 and d_ok,
           f"(a) V-line Type-2 {[round(g, 12) for g in got]} deg; (b) regular m=3,5,7 constant, "
           f"m=3 P2 = -0.75 within 1e-12: {b_ok}; (c) {tried - c_fail}/{tried} even-m configs with "
           f"Type-2 directions; (d) symmetric configs non-invertible: {d_ok}")


def test_criterion_4_stable_for_weights():
    rng = np.random.default_rng(11)
    bad = 0
    for _ in range(100):
        c = np.exp(rng.uniform(math.log(0.5), math.log(2.0), 3)) * rng.choice([-1.0, 1.0], 3)
        cfg = stable_config_for_weights(*c)
        bad += bool(find_singular_directions(cfg, ScanSettings(n_samples=4096)).type2_angles)
    record(4, bad == 0, f"{100 - bad}/100 random weight triples give stars without Type-2 directions")


def test_criterion_5_conjecture_scan():
    rows = []
    ok = True
    for m in (3, 5, 7, 9):
        min_abs, constant = conjecture_scan(m, 10_000)
        ok &= min_abs > 0 and constant
        rows.append(f"m={m}: min {min_abs:.10g}")
        if m == 3:
            ok &= abs(min_abs - 0.75) <= 1e-10
    record(5, ok, "; ".join(rows) + " (all constant)" if ok else "; ".join(rows))


def _strip_rms(err: np.ndarray, grid: ImageGrid, psi: float) -> float:
    """RMS over bands of width one pitch (normal psi) of the band-mean error, inside the unit disc."""
    X, Y = grid.meshgrid()
    inside = X**2 + Y**2 < 1.0
    s = (X * math.cos(psi) + Y * math.sin(psi))[inside]
    bins = np.floor(s / grid.pitch).astype(int)
    bins -= bins.min()
    sums = np.bincount(bins, err[inside])
    counts = np.bincount(bins)
    means = sums[counts > 0] / counts[counts > 0]
    return float(np.sqrt(np.mean(means**2)))


def test_criterion_6_reconstruction():
    start = time.perf_counter()
    n, K, T = 200, 360, 400
    f = rasterize(shepp_logan(), n, 1.0)
    settings = InversionSettings()
    base = fbp(radon(f, K, T, t_max=math.sqrt(2.0) * 3.0), n, 1.0, settings.filter)
    rmse_base = rmse(base, f, 1.0)

    reg = invert_star(star_transform(f, regular_star(3), 3.0), regular_star(3), K, T, settings)
    unstable_cfg = StarConfig.from_degrees([0, 90, 135])
    uns = invert_star(star_transform(f, unstable_cfg, 3.0), unstable_cfg, K, T, settings)
    rmse_reg = rmse(reg.image, f, 1.0)
    rmse_uns = rmse(uns.image, f, 1.0)

    err = uns.image.values - f.values
    ratios = []
    diag = []
    type2 = sorted({round(math.degrees(a) % 180.0, 6) for a in uns.report.type2_angles})
    for psi in np.radians(type2):
        along = _strip_rms(err, f, psi)
        ratios.append(along / _strip_rms(err, f, psi + math.pi / 2))
        diag.append(along / _strip_rms(err, f, psi + math.pi / 4))
    ratio = max(ratios)
    elapsed = time.perf_counter() - start

    ok_i = rmse_reg <= 1.5 * rmse_base
    ok_ii = rmse_reg < rmse_uns < math.inf and ratio >= 2.0
    record(6, ok_i and ok_ii and elapsed <= 300.0,
           f"(i) RMSE regular-3 {rmse_reg:.4f} vs 1.5 x baseline {1.5 * rmse_base:.4f}: "
           f"{'ok' if ok_i else 'fail'}; (ii) ordering {rmse_reg:.4f} < {rmse_uns:.4f}: "
           f"{'ok' if rmse_reg < rmse_uns else 'fail'}, strip ratio Type-2 vs orthogonal "
           f"{ratio:.2f} (need 2.0; vs 45 deg {max(diag):.2f}); Type-2 at "
           f"{[round(a, 2) for a in type2]} deg; {elapsed:.0f} s")


def test_criterion_7_one_and_two_ray_inversion():
    n, K = 128, 360
    f = gaussian(n)
    T = 2 * 3 * n + 1
    out = []
    ok = True
    for name, cfg in (("divergent beam m=1", StarConfig.from_degrees([30])),
                      ("V-line m=2", StarConfig.from_degrees([0, 120]))):
        img = invert_star(star_transform(f, cfg, 3.0), cfg, K, T, InversionSettings(filter="ram-lak")).image
        e = rmse(img, f) / f.values.max()
        ok &= e <= 0.05
        out.append(f"{name} RMSE/peak {100 * e:.2f}%")
    record(7, ok, "; ".join(out) + " (limit 5%)")


def test_criterion_8_scatter():
    n = 128
    f = rasterize(shepp_logan(), n, 1.0)
    eta = ImageGrid.zeros(n)
    for centre, sigma, amp in two_bump_spec():
        eta = eta + gaussian_bump(centre, sigma, n, 1.0, amp)
    cfg = stable_config_for_weights(1.0, 1.0, -2.0)
    data = simulate_scatter(f, eta, cfg, ext_factor=3.0)

    comb = combination_from_omega(omega_for_weights(cfg.weights))
    pts = data.grid.points()
    expected = sum(c * divergent_beam(f, g, pts) for c, g in zip(cfg.weights, cfg.directions))
    elim = np.abs(combine(data, comb).ravel() - expected).max()
    eta_only = simulate_scatter(ImageGrid.zeros(n), eta, cfg, ext_factor=3.0)
    elim = max(elim, np.abs(combine(eta_only, comb)).max())

    rec = recover_f_eta(data, c=cfg.weights, settings=InversionSettings(filter="ram-lak"), K=720, T=769)
    ef = relative_l2(rec.f, f)
    ee = relative_l2(rec.eta, eta)
    record(8, ef <= 0.10 and ee <= 0.10 and elim <= 1e-10,
           f"relative L2 f-hat {100 * ef:.1f}%, eta-hat {100 * ee:.1f}% (limit 10% each); "
           f"eta elimination residual {elim:.1e} (limit 1e-10); rays "
           f"{[round(d, 2) for d in cfg.degrees()]} deg")


def test_criterion_9_determinism(tmp_path):
    env = {**os.environ, "NUMBA_NUM_THREADS": "4"}
    runs = []
    for i, threads in enumerate((1, 1, 4)):
        out = tmp_path / f"run{i}"
        cmd = [sys.executable, "-m", "startomo", "--threads", str(threads), "invert",
               "--rays-deg", "0", "90", "135", "--phantom", "shepp-logan", "--n", "64",
               "--angles", "120", "--out", str(out)]
        res = subprocess.run(cmd, capture_output=True, text=True, env=env)
        assert res.returncode == 0, res.stderr
        runs.append(out)
    names = ["reconstruction.pfm", "reconstruction.pgm", "radon_estimate.csv", "masked_rows.json",
             "singularities.json", "rmse.json"]
    same = all(len({(r / name).read_bytes() for r in runs}) == 1 for name in names)

    f = gaussian(96)
    cfg = regular_star(3)
    a = star_transform(f, cfg, 3.0).grid.values
    b = star_transform(f, cfg, 3.0).grid.values
    same &= a.tobytes() == b.tobytes()
    record(9, same, f"{len(names)} output files byte-identical across 2 runs at 1 thread and 1 at 4; "
                    "repeated in-process star transforms identical")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s", "-p", "no:cacheprovider"]))
