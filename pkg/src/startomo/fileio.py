"""On-disk formats: PFM/PGM images, sinogram CSV, JSON sidecars, run manifests."""

from __future__ import annotations

import hashlib
import json
import os
import platform
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .image import ImageGrid

MANIFEST_VERSION = 1


class FormatError(ValueError):
    pass


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed JSON ({exc})") from None


# PFM: "Pf" header, width height, negative scale = little-endian,
# float32 scanlines from bottom row to top (matches values[iy] with y up).

def pfm_bytes(values: np.ndarray) -> bytes:
    values = np.asarray(values)
    h, w = values.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    return header + values.astype("<f4").tobytes()


def write_pfm(path, values: np.ndarray) -> None:
    atomic_write_bytes(path, pfm_bytes(values))


def read_pfm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0].strip() != b"Pf":
        raise FormatError(f"{path}: not a grayscale PFM file")
    w, h = (int(v) for v in parts[1].split())
    scale = float(parts[2])
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(parts[3], dtype=dtype, count=w * h)
    return data.reshape(h, w).astype(float)


def write_grid(path, grid: ImageGrid, **meta) -> None:
    """PFM pixels plus a JSON sidecar holding the geometry."""
    path = Path(path)
    write_pfm(path, grid.values)
    write_json(path.with_suffix(".json"), {"n": grid.n, "half_width": grid.half_width, **meta})


def read_grid(path) -> ImageGrid:
    path = Path(path)
    values = read_pfm(path)
    side = path.with_suffix(".json")
    half_width = read_json(side)["half_width"] if side.exists() else 1.0
    return ImageGrid(values.shape[0], float(half_width), values)


def write_pgm16(path, values: np.ndarray) -> None:
    """16-bit PGM, min-max scaled, top row first; scale saved to a sidecar JSON."""
    path = Path(path)
    values = np.asarray(values, dtype=float)
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo if hi > lo else 1.0
    scaled = np.round((values - lo) / span * 65535.0).astype(">u2")
    h, w = values.shape
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    atomic_write_bytes(path, header + scaled[::-1].tobytes())
    write_json(path.with_suffix(".pgm.json"), {"min": lo, "max": hi})


def sinogram_csv(angles: np.ndarray, offsets: np.ndarray, values: np.ndarray) -> str:
    def fmt(v):
        return f"{v:.9g}"

    lines = [
        "# angles_deg: " + ",".join(fmt(a) for a in np.degrees(angles)),
        "# offsets: " + ",".join(fmt(t) for t in offsets),
    ]
    lines.extend(",".join(fmt(v) for v in row) for row in values)
    return "\n".join(lines) + "\n"


def parse_sinogram_csv(text: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 3 or not lines[0].startswith("# angles_deg:") or not lines[1].startswith("# offsets:"):
        raise FormatError("sinogram CSV needs '# angles_deg:' and '# offsets:' header lines")
    angles = np.radians([float(v) for v in lines[0].split(":", 1)[1].split(",")])
    offsets = np.array([float(v) for v in lines[1].split(":", 1)[1].split(",")])
    values = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
    if values.shape != (angles.size, offsets.size):
        raise FormatError(
            f"sinogram body is {values.shape}, header promises {(angles.size, offsets.size)}"
        )
    return angles, offsets, values


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config_paths: list[str] = field(default_factory=list)
    settings: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)
    wall_time_s: float = 0.0
    outputs: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "v": MANIFEST_VERSION,
            "command": self.command,
            "config_paths": list(self.config_paths),
            "settings": self.settings,
            "versions": self.versions,
            "wall_time_s": self.wall_time_s,
            "outputs": dict(sorted(self.outputs.items())),
        }

    @classmethod
    def from_json(cls, data: dict) -> "RunManifest":
        if data.get("v") != MANIFEST_VERSION:
            raise FormatError(f"unsupported manifest version {data.get('v')!r}")
        return cls(
            command=data["command"],
            config_paths=list(data["config_paths"]),
            settings=dict(data["settings"]),
            versions=dict(data["versions"]),
            wall_time_s=float(data["wall_time_s"]),
            outputs=dict(data["outputs"]),
        )


def library_versions() -> dict:
    import numba
    import scipy

    from . import __version__

    return {
        "startomo": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }
