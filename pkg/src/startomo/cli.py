"""Command-line entry point: ``startomo <command> ...``.

Exit codes: 0 success; 2 invertible star with Type-2 directions (analyze);
3 non-invertible star; 64 malformed input or arguments; 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import shutil
import sys
import tempfile
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import _kernels
from .fileio import (
    FormatError, RunManifest, library_versions, parse_sinogram_csv, read_grid, read_json,
    sha256_file, sinogram_csv, write_grid, write_json, write_pgm16,
)
from .geometry import ConfigError, StarConfig, is_symmetric, regular_star, stable_config_for_weights
from .image import (
    ImageGrid, gaussian_bump, rasterize, relative_l2, rmse, shepp_logan, two_bump_spec,
)
from .inversion import InversionSettings, fbp, invert_star, recover_radon
from .scatter import ScatterData, default_offset_count, recover_f_eta, simulate_scatter
from .stability import ScanSettings, conjecture_scan, find_singular_directions
from .transforms import Sinogram, StarField, radon, star_transform

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_UNSTABLE = 2
EXIT_NONINVERTIBLE = 3
EXIT_USAGE = 64

log = logging.getLogger("startomo")

# Figure configurations of the numerical experiments (uniform weights).
REPRO_CONFIGS = {
    "vline_0_120": [0.0, 120.0],
    "regular3": [0.0, 120.0, 240.0],
    "perturbed3": [9.0, 120.0, 240.0],
    "star_0_90_135": [0.0, 90.0, 135.0],
    "regular5": [0.0, 72.0, -72.0, 144.0, -144.0],
}


class UsageError(Exception):
    pass


@contextmanager
def staged_output(out_dir: Path):
    """Write into a hidden staging directory; move files into out_dir only on success."""
    out_dir.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".stage-", dir=out_dir))
    try:
        yield stage
        for path in sorted(stage.rglob("*")):
            if path.is_file():
                dest = out_dir / path.relative_to(stage)
                dest.parent.mkdir(parents=True, exist_ok=True)
                path.replace(dest)
    finally:
        shutil.rmtree(stage, ignore_errors=True)


def _write_manifest(stage: Path, command: str, args, started: float, config_paths=()) -> None:
    settings = {k: v for k, v in sorted(vars(args).items()) if k != "func" and _jsonable(v)}
    outputs = {
        str(p.relative_to(stage)): sha256_file(p) for p in sorted(stage.rglob("*")) if p.is_file()
    }
    manifest = RunManifest(
        command=command,
        config_paths=[str(p) for p in config_paths if p],
        settings=settings,
        versions=library_versions(),
        wall_time_s=round(time.perf_counter() - started, 3),
        outputs=outputs,
    )
    write_json(stage / "manifest.json", manifest.to_json())


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


def _load_config(path) -> StarConfig:
    try:
        return StarConfig.from_json(read_json(path))
    except FileNotFoundError:
        raise UsageError(f"{path}: no such file") from None
    except (FormatError, ConfigError) as exc:
        raise UsageError(str(exc)) from None


def _config_from_args(args) -> StarConfig:
    if getattr(args, "config", None):
        return _load_config(args.config)
    if getattr(args, "rays_deg", None):
        return StarConfig.from_degrees(args.rays_deg, args.weights)
    raise UsageError("give --config FILE or --rays-deg A [A ...]")


def _phantom(args) -> ImageGrid:
    kind = args.phantom
    if kind == "shepp-logan":
        return rasterize(shepp_logan(), args.n, args.half_width)
    if kind == "gaussian":
        return gaussian_bump((0.2 * args.half_width, 0.1 * args.half_width), 0.12 * args.half_width,
                             args.n, args.half_width)
    if kind == "file":
        if not args.phantom_file:
            raise UsageError("--phantom file needs --phantom-file PATH")
        return read_grid(args.phantom_file)
    raise UsageError(f"unknown phantom {kind!r}")


def _settings(args) -> InversionSettings:
    return InversionSettings(filter=args.filter, fill=args.fill)


def _add_phantom_flags(p) -> None:
    p.add_argument("--phantom", choices=["shepp-logan", "gaussian", "file"], default="shepp-logan")
    p.add_argument("--phantom-file", type=Path, help="PFM grid for --phantom file")
    p.add_argument("--n", type=int, default=200, help="pixels per side")
    p.add_argument("--half-width", type=float, default=1.0)


def _add_config_flags(p) -> None:
    p.add_argument("--config", type=Path, help='star JSON: {"rays_deg": [...], "weights": [...]}')
    p.add_argument("--rays-deg", type=float, nargs="+")
    p.add_argument("--weights", type=float, nargs="+")


def _add_inversion_flags(p) -> None:
    p.add_argument("--angles", type=int, default=360, help="number of sinogram angles K")
    p.add_argument("--offsets", type=int, default=None, help="number of offsets T (default: ~1 per pitch)")
    p.add_argument("--filter", choices=["ram-lak", "hamming"], default="hamming")
    p.add_argument("--fill", choices=["interpolate", "zero"], default="interpolate")


def _add_noise(values: np.ndarray, level: float, seed: int | None) -> np.ndarray:
    if level <= 0:
        return values
    rng = np.random.default_rng(seed)
    return values + level * float(np.abs(values).max()) * rng.standard_normal(values.shape)


# -- commands -----------------------------------------------------------------

def cmd_analyze(args) -> int:
    cfg = _load_config(args.config)
    report = find_singular_directions(cfg, ScanSettings(n_samples=args.scan_samples))
    out = {"config": cfg.to_json(), **report.to_json()}
    print(json.dumps(out, indent=2, sort_keys=True))
    if not report.invertible:
        return EXIT_NONINVERTIBLE
    return EXIT_UNSTABLE if report.type2_angles else EXIT_OK


def cmd_forward(args) -> int:
    started = time.perf_counter()
    cfg = _config_from_args(args)
    f = _phantom(args)
    field = star_transform(f, cfg, args.ext_factor)
    values = _add_noise(field.grid.values, args.noise, args.seed)
    with staged_output(args.out) as stage:
        write_grid(stage / "phantom.pfm", f)
        write_grid(stage / "star_field.pfm", field.grid.with_values(values),
                   ext_factor=field.ext_factor, support_radius=field.support_radius,
                   config=cfg.to_json())
        write_pgm16(stage / "star_field.pgm", values)
        _write_manifest(stage, "forward", args, started, [args.config])
    return EXIT_OK


def _read_star_field(path: Path) -> StarField:
    grid = read_grid(path)
    side = read_json(path.with_suffix(".json"))
    cfg = StarConfig.from_json(side["config"]) if "config" in side else None
    return StarField(grid, float(side.get("ext_factor", 1.0)), cfg, side.get("support_radius"))


def cmd_radon(args) -> int:
    started = time.perf_counter()
    side = read_json(args.input.with_suffix(".json")) if args.input.with_suffix(".json").exists() else {}
    source = _read_star_field(args.input) if "config" in side else read_grid(args.input)
    n = source.grid.n if isinstance(source, StarField) else source.n
    T = args.offsets or default_offset_count(n)
    sino = radon(source, args.angles, T)
    with staged_output(args.out) as stage:
        (stage / "sinogram.csv").write_text(sinogram_csv(sino.angles, sino.offsets, sino.values))
        _write_manifest(stage, "radon", args, started, [args.input])
    return EXIT_OK


def cmd_invert(args) -> int:
    started = time.perf_counter()
    truth = None
    if args.input:
        field = _read_star_field(args.input)
        cfg = field.config if field.config is not None else _config_from_args(args)
        if args.truth:
            truth = read_grid(args.truth)
    else:
        cfg = _config_from_args(args)
        truth = _phantom(args)
        field = star_transform(truth, cfg, args.ext_factor)
    T = args.offsets or default_offset_count(field.grid.n)
    result = invert_star(field, cfg, args.angles, T, _settings(args))
    with staged_output(args.out) as stage:
        write_grid(stage / "reconstruction.pfm", result.image)
        write_pgm16(stage / "reconstruction.pgm", result.image.values)
        est = result.radon_estimate
        (stage / "radon_estimate.csv").write_text(sinogram_csv(est.angles, est.offsets, est.values))
        write_json(stage / "masked_rows.json", [int(k) for k in np.flatnonzero(~result.valid_rows)])
        write_json(stage / "singularities.json", result.report.to_json())
        if truth is not None:
            write_json(stage / "rmse.json", {
                "rmse_unit_disc": rmse(result.image, truth, truth.half_width),
                "rmse_full": rmse(result.image, truth),
                "relative_l2": relative_l2(result.image, truth),
            })
        _write_manifest(stage, "invert", args, started, [args.config, args.input])
    return EXIT_OK


def cmd_recover(args) -> int:
    """Sinogram-level step only: R(Sf) CSV in, estimated Rf CSV and FBP image out."""
    started = time.perf_counter()
    cfg = _config_from_args(args)
    angles, offsets, values = parse_sinogram_csv(args.input.read_text())
    est, valid = recover_radon(Sinogram(angles, offsets, values), cfg, _settings(args))
    with staged_output(args.out) as stage:
        (stage / "radon_estimate.csv").write_text(sinogram_csv(est.angles, est.offsets, est.values))
        write_json(stage / "masked_rows.json", [int(k) for k in np.flatnonzero(~valid)])
        if args.n:
            write_grid(stage / "reconstruction.pfm", fbp(est, args.n, args.half_width, args.filter))
        _write_manifest(stage, "recover", args, started, [args.config, args.input])
    return EXIT_OK


def cmd_scatter_sim(args) -> int:
    started = time.perf_counter()
    cfg = _config_from_args(args)
    f = _phantom(args)
    if args.eta == "two-bump":
        eta = ImageGrid.zeros(f.n, f.half_width)
        for center, sigma, amp in two_bump_spec():
            eta = eta + gaussian_bump(center, sigma, f.n, f.half_width, amp)
    elif args.eta == "zero":
        eta = ImageGrid.zeros(f.n, f.half_width)
    else:
        eta = read_grid(args.eta)
    m = cfg.m
    k = np.full((m, m), args.k)
    np.fill_diagonal(k, 0.0)
    data = simulate_scatter(f, eta, cfg.angles, k + np.eye(m), args.ext_factor)
    with staged_output(args.out) as stage:
        write_json(stage / "config.json", {
            **cfg.to_json(), "k": data.k.tolist(), "n": data.n,
            "ext_factor": data.ext_factor, "support_radius": data.support_radius,
        })
        write_grid(stage / "f.pfm", f)
        write_grid(stage / "eta.pfm", eta)
        for (i, j), phi in sorted(data.phi.items()):
            vals = _add_noise(phi.values, args.noise, None if args.seed is None else args.seed + 1000 * i + j)
            write_grid(stage / f"phi_{i}_{j}.pfm", phi.with_values(vals))
        _write_manifest(stage, "scatter-sim", args, started, [args.config])
    return EXIT_OK


def _read_scatter(directory: Path) -> ScatterData:
    meta = read_json(directory / "config.json")
    cfg = StarConfig.from_json(meta)
    phi = {}
    for path in sorted(directory.glob("phi_*_*.pfm")):
        _, i, j = path.stem.split("_")
        phi[(int(i), int(j))] = read_grid(path)
    if not phi:
        raise UsageError(f"{directory}: no phi_i_j.pfm files")
    return ScatterData(cfg.angles, phi, np.asarray(meta["k"]), int(meta["n"]),
                       float(meta["ext_factor"]), meta.get("support_radius"))


def cmd_scatter_recover(args) -> int:
    started = time.perf_counter()
    data = _read_scatter(args.data)
    if args.combination:
        try:
            combo = {tuple(int(v) for v in key.split(",")): float(a)
                     for key, a in json.loads(args.combination).items()}
        except (ValueError, json.JSONDecodeError) as exc:
            raise UsageError(f'--combination expects {{"i,j": coefficient}} JSON ({exc})') from None
        rec = recover_f_eta(data, None, _settings(args), args.angles, args.offsets, combination=combo)
    else:
        if not args.c:
            raise UsageError("give --c weights or --combination")
        rec = recover_f_eta(data, np.asarray(args.c), _settings(args), args.angles, args.offsets)
    with staged_output(args.out) as stage:
        write_grid(stage / "f_hat.pfm", rec.f)
        write_grid(stage / "eta_hat.pfm", rec.eta)
        write_json(stage / "omega.json", {
            "star": rec.config.to_json(),
            "coefficients": {f"{i},{j}": a for (i, j), a in sorted(rec.coefficients.items())},
        })
        report = {}
        for name, est in (("f", rec.f), ("eta", rec.eta)):
            path = args.data / f"{name}.pfm"
            if path.exists():
                report[f"relative_l2_{name}"] = relative_l2(est, read_grid(path))
        if report:
            write_json(stage / "errors.json", report)
        _write_manifest(stage, "scatter-recover", args, started, [args.data / "config.json"])
    return EXIT_OK


def _emit(obj, out: Path | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    print(text)
    if out:
        write_json(out, obj)


def cmd_regular(args) -> int:
    try:
        cfg = regular_star(args.m)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    _emit(cfg.to_json(), args.out)
    return EXIT_OK


def cmd_stable_for_weights(args) -> int:
    cfg = stable_config_for_weights(*args.weights)
    _emit(cfg.to_json(), args.out)
    return EXIT_OK


def cmd_conjecture(args) -> int:
    results = []
    for m in args.m:
        if m < 3 or m % 2 == 0:
            raise UsageError(f"--m must be odd and >= 3 (got {m})")
        min_abs, constant = conjecture_scan(m, args.samples)
        results.append({"m": m, "min_abs": min_abs, "constant": constant, "positive": min_abs > 0})
    _emit(results if len(results) > 1 else results[0], None)
    return EXIT_OK if all(r["positive"] for r in results) else EXIT_FAILURE


def cmd_repro(args) -> int:
    started = time.perf_counter()
    n = 128 if args.fast else args.n
    f = rasterize(shepp_logan(), n, 1.0)
    T = args.offsets or default_offset_count(3 * n)
    settings = _settings(args)
    summary = {"n": n, "K": args.angles, "T": T}
    with staged_output(args.out) as stage:
        write_grid(stage / "phantom.pfm", f)
        write_pgm16(stage / "phantom.pgm", f.values)
        base = fbp(radon(f, args.angles, T, t_max=math.sqrt(2.0) * 3.0), n, 1.0, settings.filter)
        write_pgm16(stage / "baseline.pgm", base.values)
        summary["baseline_rmse"] = rmse(base, f, 1.0)
        for name, rays in REPRO_CONFIGS.items():
            cfg = StarConfig.from_degrees(rays)
            result = invert_star(star_transform(f, cfg, args.ext_factor), cfg, args.angles, T, settings)
            write_grid(stage / f"{name}.pfm", result.image)
            write_pgm16(stage / f"{name}.pgm", result.image.values)
            summary[name] = {
                "rays_deg": rays, "rmse": rmse(result.image, f, 1.0),
                "classification": result.report.classification,
                "type2_deg": [math.degrees(a) for a in result.report.type2_angles],
            }
            log.info("%s: rmse %.4f", name, summary[name]["rmse"])
        write_json(stage / "summary.json", summary)
        _write_manifest(stage, "repro", args, started)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="startomo", description="Star transform simulation, inversion and stability analysis.")
    parser.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    parser.add_argument("--seed", type=int, default=None, help="seed for optional noise")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="singular directions and stability class of a star")
    p.add_argument("config", type=Path)
    p.add_argument("--scan-samples", type=int, default=4096)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("forward", help="star transform of a phantom")
    _add_config_flags(p)
    _add_phantom_flags(p)
    p.add_argument("--ext-factor", type=float, default=3.0)
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise, fraction of max |Sf|")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("radon", help="sinogram of a PFM grid or star field")
    p.add_argument("input", type=Path)
    p.add_argument("--angles", type=int, default=360)
    p.add_argument("--offsets", type=int, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_radon)

    p = sub.add_parser("invert", help="reconstruct f from star data (or simulate then reconstruct)")
    _add_config_flags(p)
    _add_phantom_flags(p)
    _add_inversion_flags(p)
    p.add_argument("--input", type=Path, help="star_field.pfm written by 'forward'")
    p.add_argument("--truth", type=Path, help="ground-truth PFM for the RMSE report")
    p.add_argument("--ext-factor", type=float, default=3.0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("recover", help="Radon data of f from a star sinogram CSV")
    _add_config_flags(p)
    p.add_argument("input", type=Path)
    p.add_argument("--filter", choices=["ram-lak", "hamming"], default="hamming")
    p.add_argument("--fill", choices=["interpolate", "zero"], default="interpolate")
    p.add_argument("--n", type=int, default=None, help="also reconstruct on an n x n grid")
    p.add_argument("--half-width", type=float, default=1.0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("scatter-sim", help="simulate single-scattering data phi_ij")
    _add_config_flags(p)
    _add_phantom_flags(p)
    p.add_argument("--eta", default="two-bump", help="two-bump, zero, or a PFM path")
    p.add_argument("--k", type=float, default=1.0, help="constant k_ij")
    p.add_argument("--ext-factor", type=float, default=3.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_scatter_sim)

    p = sub.add_parser("scatter-recover", help="recover f and eta from scatter data")
    p.add_argument("data", type=Path)
    p.add_argument("--c", type=float, nargs="+", help="zero-sum star weights (k = 1)")
    p.add_argument("--combination", help='JSON {"i,j": a_ij} over ordered pairs (any k)')
    _add_inversion_flags(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_scatter_recover)

    p = sub.add_parser("regular", help="regular odd star")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_regular)

    p = sub.add_parser("stable-for-weights", help="3-ray star without Type-2 directions")
    p.add_argument("weights", type=float, nargs=3)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_stable_for_weights)

    p = sub.add_parser("conjecture", help="scan e_{m-1} on the regular-star aperture plane")
    p.add_argument("--m", type=int, nargs="+", required=True)
    p.add_argument("--samples", type=int, default=10_000)
    p.set_defaults(func=cmd_conjecture)

    p = sub.add_parser("repro", help="reconstruct Shepp-Logan from the five reference stars")
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--fast", action="store_true", help="n = 128")
    _add_inversion_flags(p)
    p.add_argument("--ext-factor", type=float, default=3.0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_repro)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _kernels.set_threads(args.threads)
    try:
        return args.func(args)
    except (UsageError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        cfg_symmetric = "symmetric" in str(exc)
        return EXIT_NONINVERTIBLE if cfg_symmetric else EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
