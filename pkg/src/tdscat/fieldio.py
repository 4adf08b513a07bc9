"""Persistence: versioned binary tensor files (.tdis) and field tables (.csv).

The binary container stores everything needed to re-run a reconstruction:
header (magic, version, geometry dimension, tensor extents, time step, sound
speed), the sensor/source coordinates and quadrature weights, the float64
little-endian payload in sensor-major [i, k, j] order, and a JSON metadata
block (signal parameters, model provenance, noise, config echo).

Field tables are plain delimited text: one row per probe with coordinates and
the indicator value at 17 significant digits (lossless for float64), followed
by metadata comment lines.  Writes are atomic (temp file + rename) and
byte-deterministic for identical inputs.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile

import numpy as np

from .forward import ScatteredDataSet
from .geometry import SamplingGrid, SurfaceGeometry, make_sampling_grid
from .greenfn import MediumSpec
from .indicator import IndicatorField
from .signal import SignalSpec, TimeGrid

__all__ = [
    "TdisFormatError",
    "BadMagicError",
    "VersionMismatchError",
    "TruncatedPayloadError",
    "write_tdis",
    "read_tdis",
    "write_field",
    "read_field",
    "extract_slice",
    "file_sha256",
]

MAGIC = b"TDIS"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIIdd")
_MAX_EXTENT = 2**31


class TdisFormatError(ValueError):
    """Malformed .tdis file."""


class BadMagicError(TdisFormatError):
    pass


class VersionMismatchError(TdisFormatError):
    pass


class TruncatedPayloadError(TdisFormatError):
    pass


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _atomic_write(path, emit):
    """Write via a temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            emit(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_tdis(data: ScatteredDataSet, path) -> None:
    """Serialize a dataset; the round trip through read_tdis is bit-exact."""
    nm, nt1, ni = data.values.shape
    dim = data.sensors.dimension
    meta = {
        "signal": {
            "omega": data.spec.omega,
            "sigma": data.spec.sigma,
            "t0": data.spec.t0,
            "causal_truncation": data.spec.causal_truncation,
        },
        "tgrid": {"terminal": data.tgrid.terminal, "n_steps": data.tgrid.n_steps},
        "kernel_dimension": data.kernel_dimension,
        "sensor_aperture": data.sensors.aperture,
        "source_aperture": data.sources.aperture,
    }
    meta.update(data.meta)
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()

    def emit(fh):
        fh.write(_HEADER.pack(MAGIC, VERSION, dim, nm, nt1 - 1, ni, data.tgrid.dt, data.medium.c))
        for geo in (data.sensors, data.sources):
            fh.write(np.ascontiguousarray(geo.points, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(geo.weights, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(data.values, dtype="<f8").tobytes())
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)

    _atomic_write(path, emit)


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedPayloadError(f"truncated payload: expected {n} bytes of {what}")
    return buf


def read_tdis(path) -> ScatteredDataSet:
    """Load a dataset, validating magic, version and payload extents."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise TruncatedPayloadError("file shorter than the fixed header")
        magic, version, dim, nm, nt, ni, dt, c = _HEADER.unpack(head)
        if magic != MAGIC:
            raise BadMagicError(f"bad magic {magic!r}")
        if version != VERSION:
            raise VersionMismatchError(f"unsupported version {version}")
        if dim not in (2, 3):
            raise TdisFormatError(f"unsupported dimension {dim}")
        if max(nm, nt + 1, ni) >= _MAX_EXTENT or min(nm, nt, ni) < 1:
            raise TdisFormatError(f"implausible tensor extents {(nm, nt, ni)}")

        def read_f8(count, what):
            return np.frombuffer(_read_exact(fh, 8 * count, what), dtype="<f8")

        sensors = SurfaceGeometry(
            dim,
            read_f8(nm * dim, "sensor coordinates").reshape(nm, dim).copy(),
            read_f8(nm, "sensor weights").copy(),
        )
        sources = SurfaceGeometry(
            dim,
            read_f8(ni * dim, "source coordinates").reshape(ni, dim).copy(),
            read_f8(ni, "source weights").copy(),
        )
        values = read_f8(nm * (nt + 1) * ni, "field tensor").reshape(nm, nt + 1, ni).copy()
        (blob_len,) = struct.unpack("<Q", _read_exact(fh, 8, "metadata length"))
        meta = json.loads(_read_exact(fh, blob_len, "metadata block").decode())

    sig = meta.pop("signal")
    tg = meta.pop("tgrid")
    kernel_dim = meta.pop("kernel_dimension")
    spec = SignalSpec(sig["omega"], sig["sigma"], sig["t0"], sig["causal_truncation"])
    tgrid = TimeGrid(tg["terminal"], tg["n_steps"])
    sensors = SurfaceGeometry(dim, sensors.points, sensors.weights, meta.pop("sensor_aperture", "full"))
    sources = SurfaceGeometry(dim, sources.points, sources.weights, meta.pop("source_aperture", "full"))
    return ScatteredDataSet(sensors, sources, tgrid, spec, MediumSpec(c), kernel_dim, values, meta)


def write_field(field: IndicatorField, path, source_hash: str | None = None) -> None:
    """Write the probe table with trailing metadata comments."""
    dim = field.grid.dimension
    cols = [f"z{a + 1}" for a in range(dim)] + ["value"]

    def emit(fh):
        lines = [",".join(cols)]
        for pt, val in zip(field.grid.points, field.values):
            lines.append(",".join(f"{v:.17g}" for v in (*pt, val)))
        lines.append(f"# indicator: {field.kind}")
        argmax = ",".join(f"{v:.17g}" for v in field.argmax_point)
        lines.append(f"# argmax: index={field.argmax_index} point=({argmax})")
        lines.append(
            f"# value_range: [{field.meta.get('value_min', float(np.min(field.values))):.17g}, "
            f"{field.meta.get('value_max', float(np.max(field.values))):.17g}]"
        )
        lines.append(f"# grid: bounds={list(field.grid.bounds)} counts={list(field.grid.counts)}")
        lines.append(f"# normalization: {field.meta.get('normalization', '')}")
        if source_hash is not None:
            lines.append(f"# source_sha256: {source_hash}")
        for key in ("model", "noise_level", "noise_seed", "backend", "slice"):
            if field.meta.get(key) is not None:
                lines.append(f"# {key}: {field.meta[key]}")
        fh.write(("\n".join(lines) + "\n").encode())

    _atomic_write(path, emit)


def read_field(path):
    """Parse a field table back into (points, values, meta-comments)."""
    points, values, meta = [], [], {}
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        ncols = len(header)
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                meta[key.strip()] = val.strip()
                continue
            parts = line.split(",")
            if len(parts) != ncols:
                raise TdisFormatError(f"malformed field row: {line!r}")
            vals = [float(p) for p in parts]
            points.append(vals[:-1])
            values.append(vals[-1])
    pts = np.array(points)
    vv = np.array(values)
    if not np.all(np.isfinite(vv)):
        raise TdisFormatError("field table contains non-finite values")
    return pts, vv, meta


def extract_slice(field: IndicatorField, axis: int, coord: float) -> IndicatorField:
    """Axis-aligned plane of a 3D field nearest the requested coordinate."""
    if field.grid.dimension != 3:
        raise ValueError("slice extraction applies to 3D fields only")
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1 or 2, got {axis}")
    ax_vals = field.grid.axes[axis]
    plane = int(np.argmin(np.abs(ax_vals - coord)))
    cube = field.values_nd()
    sliced = np.take(cube, plane, axis=axis)
    keep = [a for a in range(3) if a != axis]
    grid2d = make_sampling_grid(
        [field.grid.bounds[a] for a in keep], [field.grid.counts[a] for a in keep]
    )
    meta = dict(field.meta)
    meta["slice"] = f"axis={axis + 1} coord={ax_vals[plane]:.17g}"
    meta["argmax_index"] = int(np.argmax(sliced.ravel()))
    meta["value_min"] = float(sliced.min())
    meta["value_max"] = float(sliced.max())
    return IndicatorField(grid2d, sliced.ravel(), field.kind, meta)
