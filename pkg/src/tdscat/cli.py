"""Command-line pipeline: synth, reconstruct, repro, validate.

Configs are YAML (JSON is accepted, being a YAML subset) with sections
``signal``, ``medium``, ``geometry``, ``forward`` and ``reconstruct``; every
omitted key takes the package default, and the fully resolved config is
echoed into output metadata so any result can be reproduced from its own
files.  Exit codes: 0 success, 2 config/usage error, 3 solver error, 4 I/O
error.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys

import numpy as np
import yaml

from . import bie, fieldio, forward, geometry, indicator
from .greenfn import MediumSpec
from .signal import SignalSpec, TimeGrid

__all__ = ["main", "ConfigError", "load_config", "effective_config", "EXAMPLE_IDS"]

TWO_PI = 2.0 * np.pi

_DEFAULTS = {
    "signal": {
        "omega": 4.0,
        "sigma": 1.6,
        "t0": 3.0,
        "causal_truncation": True,
        "T": None,  # resolved: 15 for i3 reconstructions, else 25
        "n_steps": 128,
    },
    "medium": {"c": 1.0},
    "geometry": {
        "sensors": {
            "kind": "circle",
            "count": 20,
            "radius": 4.0,
            "aperture_start": 0.0,
            "aperture_span": TWO_PI,
        },
        "grid": {"bounds": [[-2.6, 2.6], [-2.6, 2.6]], "counts": [21, 21]},
        "scatterers": [{"shape": "point", "center": [0.0, 0.0], "scale": 1.0}],
    },
    "forward": {
        "model": "point",
        "dimension": None,  # wave kernel dimension; defaults to the geometry dimension
        "strength": 1.0,
        "noise": {"level": 0.0, "seed": 0},
        "bie": {"nodes_per_curve": 192, "freq_threshold": 1e-3, "padding_factor": 4.0},
    },
    "reconstruct": {"indicator": "i1", "out": None},
}


class ConfigError(ValueError):
    """Invalid configuration; carries the dotted path of the offending key."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _merge(defaults, user, path=""):
    if user is None:
        return copy.deepcopy(defaults)
    if isinstance(defaults, dict):
        if not isinstance(user, dict):
            raise ConfigError(path or "<root>", f"expected a mapping, got {type(user).__name__}")
        out = {}
        for key, dval in defaults.items():
            sub = f"{path}.{key}" if path else key
            out[key] = _merge(dval, user.get(key), sub) if key in user else copy.deepcopy(dval)
        for key in user:
            if key not in defaults:
                raise ConfigError(f"{path}.{key}" if path else key, "unknown key")
        return out
    return copy.deepcopy(user)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"config is not valid YAML/JSON: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "top level must be a mapping of sections")
    return raw


def effective_config(user: dict) -> dict:
    """Merge user config over defaults, resolve conditionals, validate."""
    if "geometry" in (user or {}) and user["geometry"] is not None:
        if not isinstance(user["geometry"], dict):
            raise ConfigError("geometry", "expected a mapping")
        if "sensors" not in user["geometry"]:
            raise ConfigError("geometry.sensors", "section required")
    cfg = _merge(_DEFAULTS, user or {})
    if cfg["signal"]["T"] is None:
        cfg["signal"]["T"] = 15.0 if cfg["reconstruct"]["indicator"] == "i3" else 25.0
    _validate(cfg)
    return cfg


def _require(cond, path, msg):
    if not cond:
        raise ConfigError(path, msg)


def _validate(cfg: dict) -> None:
    sig = cfg["signal"]
    _require(sig["omega"] > 0, "signal.omega", "must be > 0")
    _require(sig["sigma"] > 0, "signal.sigma", "must be > 0")
    _require(sig["T"] > 0, "signal.T", "must be > 0")
    _require(int(sig["n_steps"]) >= 1, "signal.n_steps", "must be >= 1")
    _require(cfg["medium"]["c"] > 0, "medium.c", "must be > 0")

    sens = cfg["geometry"]["sensors"]
    _require(sens["kind"] in ("circle", "fibonacci"), "geometry.sensors.kind",
             "must be 'circle' or 'fibonacci'")
    _require(int(sens["count"]) >= 1, "geometry.sensors.count", "must be >= 1")
    _require(sens["radius"] > 0, "geometry.sensors.radius", "must be > 0")
    if sens["kind"] == "circle":
        _require(0 < sens["aperture_span"] <= TWO_PI + 1e-12,
                 "geometry.sensors.aperture_span", "must lie in (0, 2*pi]")

    grid = cfg["geometry"]["grid"]
    _require(isinstance(grid["bounds"], list) and len(grid["bounds"]) in (2, 3),
             "geometry.grid.bounds", "need 2 or 3 axis bounds")
    for bi, b in enumerate(grid["bounds"]):
        _require(isinstance(b, (list, tuple)) and len(b) == 2 and b[1] > b[0],
                 f"geometry.grid.bounds[{bi}]", "need [lo, hi] with hi > lo")
    counts = grid["counts"]
    _require(isinstance(counts, list) and len(counts) == len(grid["bounds"]),
             "geometry.grid.counts", "one count per axis")
    for ci, cnt in enumerate(counts):
        _require(int(cnt) >= 2, f"geometry.grid.counts[{ci}]", "must be >= 2")

    dim = len(grid["bounds"])
    _require((sens["kind"] == "circle") == (dim == 2), "geometry.sensors.kind",
             "circle layouts are 2D, fibonacci layouts are 3D")

    scats = cfg["geometry"]["scatterers"]
    _require(isinstance(scats, list) and scats, "geometry.scatterers", "need at least one entry")
    for si, entry in enumerate(scats):
        p = f"geometry.scatterers[{si}]"
        _require(isinstance(entry, dict), p, "expected a mapping")
        shape = entry.get("shape")
        _require(shape in geometry.BOUNDARY_SHAPES or shape == "point",
                 f"{p}.shape", f"unknown shape {shape!r}")
        center = entry.get("center")
        _require(isinstance(center, (list, tuple)) and len(center) == dim,
                 f"{p}.center", f"need {dim} coordinates")
        _require(float(entry.get("scale", 1.0)) > 0, f"{p}.scale", "must be > 0")
        if dim == 3:
            _require(shape == "point", f"{p}.shape",
                     "extended 3D scatterers are not supported (point model only)")

    fwd = cfg["forward"]
    _require(fwd["model"] in ("point", "bie"), "forward.model", "must be 'point' or 'bie'")
    if fwd["dimension"] is not None:
        _require(fwd["dimension"] in (2, 3), "forward.dimension", "must be 2 or 3")
    if fwd["model"] == "bie":
        _require(dim == 2, "forward.model", "the boundary-integral model is 2D only")
        nb = fwd["bie"]
        _require(int(nb["nodes_per_curve"]) >= 8, "forward.bie.nodes_per_curve", "must be >= 8")
        _require(0 < nb["freq_threshold"] < 1, "forward.bie.freq_threshold", "must lie in (0, 1)")
        _require(nb["padding_factor"] >= 2, "forward.bie.padding_factor", "must be >= 2")
    _require(fwd["noise"]["level"] >= 0, "forward.noise.level", "must be >= 0")
    _require(cfg["reconstruct"]["indicator"] in indicator.INDICATOR_NAMES,
             "reconstruct.indicator", f"must be one of {indicator.INDICATOR_NAMES}")


# ---------------------------------------------------------------------------
# config -> objects
# ---------------------------------------------------------------------------


def build_spec(cfg) -> SignalSpec:
    s = cfg["signal"]
    return SignalSpec(s["omega"], s["sigma"], s["t0"], bool(s["causal_truncation"]))


def build_tgrid(cfg) -> TimeGrid:
    return TimeGrid(float(cfg["signal"]["T"]), int(cfg["signal"]["n_steps"]))


def build_sensors(cfg) -> geometry.SurfaceGeometry:
    sens = cfg["geometry"]["sensors"]
    if sens["kind"] == "fibonacci":
        return geometry.make_fibonacci_sphere_sensors(int(sens["count"]), sens["radius"])
    return geometry.make_circle_sensors(
        int(sens["count"]), sens["radius"], sens["aperture_start"], sens["aperture_span"]
    )


def build_grid(cfg) -> geometry.SamplingGrid:
    g = cfg["geometry"]["grid"]
    return geometry.make_sampling_grid(g["bounds"], g["counts"])


def build_boundaries(cfg) -> list:
    n = int(cfg["forward"]["bie"]["nodes_per_curve"])
    return [
        geometry.make_boundary(e["shape"], e["center"], float(e.get("scale", 1.0)), n)
        for e in cfg["geometry"]["scatterers"]
    ]


def _point_diameter(entry, dim) -> float:
    if "diameter" in entry:
        return float(entry["diameter"])
    return 0.002 * float(entry.get("scale", 1.0)) if dim == 2 else 0.1


def run_synth(cfg: dict) -> forward.ScatteredDataSet:
    """Run the configured forward model and apply noise."""
    spec = build_spec(cfg)
    tgrid = build_tgrid(cfg)
    medium = MediumSpec(cfg["medium"]["c"])
    sensors = build_sensors(cfg)
    dim = sensors.dimension
    fwd = cfg["forward"]

    if fwd["model"] == "point":
        entries = cfg["geometry"]["scatterers"]
        for e in entries:
            if e["shape"] != "point":
                raise ConfigError(
                    "forward.model",
                    f"the point model needs point scatterers, got {e['shape']!r} "
                    "(use model 'bie' for extended 2D shapes)",
                )
        centers = np.array([e["center"] for e in entries], float)
        diameters = [_point_diameter(e, dim) for e in entries]
        kdim = fwd["dimension"] or dim
        data = forward.synth_point_model(
            centers, fwd["strength"], sensors, sensors, tgrid, spec, medium,
            dimension=kdim, diameters=diameters,
        )
    else:
        boundaries = build_boundaries(cfg)
        params = bie.BieParams(
            nodes_per_curve=int(fwd["bie"]["nodes_per_curve"]),
            freq_threshold=float(fwd["bie"]["freq_threshold"]),
            padding_factor=float(fwd["bie"]["padding_factor"]),
        )
        data = bie.synth_bie_2d(boundaries, sensors, sensors, tgrid, spec, medium, params)

    noise = forward.NoiseSpec(float(fwd["noise"]["level"]), int(fwd["noise"]["seed"]))
    data = forward.add_noise(data, noise)
    data.meta["config"] = cfg
    return data


def point_translation_synthesizer(data: forward.ScatteredDataSet):
    """Forward re-synthesizer with the point scatterer translated to a probe.

    Only point-model datasets carry enough provenance for this; the whole
    configuration of centers is rigidly shifted so its centroid lands on the
    requested probe.
    """
    model = data.meta.get("model", "")
    if not str(model).startswith("point"):
        raise indicator.IndicatorError(
            "i1prime needs point-model data with center provenance"
        )
    centers = np.atleast_2d(np.array(data.meta["centers"], float))
    amplitudes = np.array(data.meta["amplitudes"], float)
    centroid = centers.mean(axis=0)

    def synthesize(z):
        return forward.synth_point_model(
            centers + (np.asarray(z, float) - centroid),
            amplitudes,
            data.sensors,
            data.sources,
            data.tgrid,
            data.spec,
            data.medium,
            dimension=data.kernel_dimension,
        )

    return synthesize


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = effective_config(load_config(args.config))
    if args.seed is not None:
        cfg["forward"]["noise"]["seed"] = args.seed
    data = run_synth(cfg)
    fieldio.write_tdis(data, args.out)
    shape = data.values.shape
    print(f"wrote {args.out}: tensor {shape[0]}x{shape[1]}x{shape[2]}, "
          f"model {data.meta['model']}, noise {data.meta['noise_level']}")
    return 0


def _grid_from_args(args, data) -> geometry.SamplingGrid:
    if args.grid:
        axes = []
        for part in args.grid.split(","):
            lo, hi, n = part.split(":")
            axes.append(((float(lo), float(hi)), int(n)))
        return geometry.make_sampling_grid([a[0] for a in axes], [a[1] for a in axes])
    if args.config:
        cfg = effective_config(load_config(args.config))
        return build_grid(cfg)
    echoed = data.meta.get("config")
    if echoed:
        return build_grid(echoed)
    dim = data.sensors.dimension
    if dim == 3:
        return geometry.make_sampling_grid([[-2, 2]] * 3, [21] * 3)
    return geometry.make_sampling_grid([[-2.6, 2.6]] * 2, [21] * 2)


def _parse_slices(slice_args):
    out = []
    for s in slice_args or ():
        try:
            axis_s, coord_s = s.split("=")
            axis = {"x1": 0, "x2": 1, "x3": 2}[axis_s.strip()]
            out.append((axis, float(coord_s)))
        except (ValueError, KeyError):
            raise ConfigError("--slice", f"expected x1|x2|x3=<coord>, got {s!r}")
    return out


def cmd_reconstruct(args) -> int:
    data = fieldio.read_tdis(args.data)
    grid = _grid_from_args(args, data)
    report = geometry.check_separation(grid, data.sensors)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"separation: dist(grid, sensors) = {report.dist_grid_surface:.4g}, "
          f"grid disjoint from sensors: {report.grid_disjoint_from_surface}")

    synthesize = None
    if args.indicator == "i1prime":
        synthesize = point_translation_synthesizer(data)
    field = indicator.sweep(data, grid, args.indicator, synthesize=synthesize)
    src_hash = fieldio.file_sha256(args.data)
    fieldio.write_field(field, args.out, source_hash=src_hash)
    pt = ", ".join(f"{v:.6g}" for v in field.argmax_point)
    print(f"wrote {args.out}: argmax at ({pt}), value {field.values[field.argmax_index]:.6g}")
    for axis, coord in _parse_slices(args.slice):
        sl = fieldio.extract_slice(field, axis, coord)
        out = f"{args.out.rsplit('.', 1)[0]}_slice_x{axis + 1}_{coord:g}.csv"
        fieldio.write_field(sl, out, source_hash=src_hash)
        print(f"wrote {out}: {sl.meta['slice']}")
    return 0


EXAMPLE_IDS = (1, 2, 3, 4, 5, 6)


def _example_presets(example: int, seed: int | None):
    """Canned configs for the bundled experiment reproductions.

    Returns a list of (dataset_name, config_overrides, indicators).
    """
    base_seed = 100 * example if seed is None else seed
    point = lambda c: {"shape": "point", "center": list(c), "scale": 1.0}

    def cfgs(name, scatterers, indicators, *, model="point", grid=None, sensors=None,
             n_steps=128, T_i12=25.0, T_i3=15.0, dim=None, extra=None):
        jobs = []
        windows = {}
        for ind in indicators:
            T = T_i3 if ind == "i3" else T_i12
            windows.setdefault(T, []).append(ind)
        for T, inds in windows.items():
            cfg = {
                "signal": {"T": T, "n_steps": n_steps},
                "geometry": {
                    "sensors": sensors or {"kind": "circle", "count": 20, "radius": 4.0},
                    "grid": grid or {"bounds": [[-2.6, 2.6], [-2.6, 2.6]], "counts": [21, 21]},
                    "scatterers": scatterers,
                },
                "forward": {
                    "model": model,
                    "noise": {"level": 0.05, "seed": base_seed},
                },
            }
            if dim is not None:
                cfg["forward"]["dimension"] = dim
            if extra:
                cfg["forward"].update(extra)
            tag = f"{name}_T{T:g}" if len(windows) > 1 else name
            jobs.append((tag, cfg, inds))
        return jobs

    if example == 1:
        return cfgs("point_origin", [point((0, 0))], ["i1", "i2", "i3"])
    if example == 2:
        sets = {
            "two_points": [point((-1, -1)), point((1, 1.5))],
            "three_points": [point((-1, -1)), point((1, 1.5)), point((1.5, -1))],
            "five_points": [
                point((-1, -1)), point((1, 1.5)), point((1.5, -1)),
                point((-1.5, 1.5)), point((0, 0)),
            ],
        }
        jobs = []
        for name, scats in sets.items():
            jobs += cfgs(name, scats, ["i1", "i2", "i3"])
        return jobs
    if example == 3:
        jobs = []
        for shape in ("circle", "kite", "starfish"):
            for center in ((0, 0), (1, 1)):
                name = f"{shape}_{center[0]:g}_{center[1]:g}"
                jobs += cfgs(name, [{"shape": shape, "center": list(center), "scale": 1.0}],
                             ["i1", "i2", "i3"], model="bie")
        for span, count in ((np.pi, 10), (1.5 * np.pi, 15)):
            sensors = {"kind": "circle", "count": count, "radius": 4.0,
                       "aperture_start": 0.0, "aperture_span": float(span)}
            name = f"starfish_aperture_{span / np.pi:g}pi"
            jobs += cfgs(name, [{"shape": "starfish", "center": [0, 0], "scale": 1.0}],
                         ["i1", "i2", "i3"], model="bie", sensors=sensors)
        return jobs
    if example == 4:
        jobs = []
        ball = {"shape": "point", "center": [2.2, 2.2], "scale": 100.0}  # radius 0.1
        for shape in ("acorn", "rounded_square"):
            jobs += cfgs(f"{shape}_plus_point",
                         [{"shape": shape, "center": [0, 0], "scale": 1.0}, ball],
                         ["i1", "i2", "i3"], model="bie")
        return jobs
    if example == 5:
        pairs = [
            ("circle_kite", [("circle", (-1, -1), 4 / 9), ("kite", (1, 1), 0.5)]),
            ("kite_peanut", [("kite", (-1, -1), 0.5), ("peanut", (1, 1), 1.0)]),
            ("acorn_starfish", [("acorn", (-1, -1), 0.5), ("starfish", (1, 1), 2 / 3)]),
        ]
        jobs = []
        for name, duo in pairs:
            scats = [{"shape": s, "center": list(c), "scale": sc} for s, c, sc in duo]
            jobs += cfgs(name, scats, ["i3"], model="bie", n_steps=256, T_i3=25.0)
        return jobs
    if example == 6:
        sensors = {"kind": "fibonacci", "count": 50, "radius": 4.0}
        grid = {"bounds": [[-2, 2]] * 3, "counts": [21, 21, 21]}
        sets = {
            "center_point": [{"shape": "point", "center": [0, 0, 0]}],
            "offset_point": [{"shape": "point", "center": [0.4, -0.8, 0.2]}],
            "two_points": [
                {"shape": "point", "center": [0.6, 0.8, 1.0]},
                {"shape": "point", "center": [-1.0, -0.8, -0.6]},
            ],
        }
        jobs = []
        for name, scats in sets.items():
            jobs += cfgs(name, scats, ["i3"], grid=grid, sensors=sensors,
                         n_steps=256, T_i3=19.0)
        return jobs
    raise ConfigError("--example", f"unsupported example id {example}")


def cmd_repro(args) -> int:
    import os

    if args.example == 7:
        print(
            "out of scope: volumetric 3D forward solver (extended 3D scatterers "
            "are not synthesized; examples 1-6 are available)",
            file=sys.stderr,
        )
        return 2
    if args.example not in EXAMPLE_IDS:
        raise ConfigError("--example", f"example id must be in 1..7, got {args.example}")
    outdir = args.out or f"repro_example{args.example}"
    os.makedirs(outdir, exist_ok=True)
    jobs = _example_presets(args.example, args.seed)
    written = []
    for name, overrides, indicators in jobs:
        cfg = effective_config(overrides)
        data = run_synth(cfg)
        tdis_path = os.path.join(outdir, f"{name}.tdis")
        fieldio.write_tdis(data, tdis_path)
        src_hash = fieldio.file_sha256(tdis_path)
        grid = build_grid(cfg)
        workspace = indicator.SweepWorkspace(
            grid, indicator.SweepWorkspace.key_of(data), chunk_size=256
        )
        for ind in indicators:
            field = indicator.sweep(data, grid, ind, workspace=workspace)
            csv_path = os.path.join(outdir, f"{name}_{ind}.csv")
            fieldio.write_field(field, csv_path, source_hash=src_hash)
            written.append(csv_path)
            if grid.dimension == 3:
                center = np.array(cfg["geometry"]["scatterers"][0]["center"], float)
                for axis in (2, 1):  # x1-x2 plane, then x1-x3 plane
                    sl = fieldio.extract_slice(field, axis, center[axis])
                    sl_path = os.path.join(outdir, f"{name}_{ind}_slice_x{axis + 1}.csv")
                    fieldio.write_field(sl, sl_path, source_hash=src_hash)
                    written.append(sl_path)
        print(f"{name}: data {tdis_path}, fields {', '.join(i for i in indicators)}")
    print(f"wrote {len(written)} field file(s) under {outdir}")
    return 0


def cmd_validate(args) -> int:
    cfg = effective_config(load_config(args.config))
    sensors = build_sensors(cfg)
    grid = build_grid(cfg)
    boundaries = build_boundaries(cfg) if cfg["forward"]["model"] == "bie" else []
    report = geometry.check_separation(grid, sensors, boundaries)
    print(f"config OK; dist(grid, sensors) = {report.dist_grid_surface:.4g}, "
          f"max scatterer diameter = {report.max_scatterer_diameter:.4g}")
    for w in report.warnings:
        print(f"warning: {w}")
    print("separation checks passed" if report.all_ok else "separation checks FAILED (non-fatal)")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tdscat",
        description="Forward synthesis and sampling-indicator reconstruction "
        "of acoustic scatterers from time-domain data.",
    )
    parser.add_argument("--threads", type=int, default=0,
                        help="numba thread count for sweeps (0 = auto)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="run the forward model and write a .tdis file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override forward.noise.seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("reconstruct", help="sweep an indicator over the probe grid")
    p.add_argument("--data", required=True, help=".tdis input")
    p.add_argument("--indicator", required=True, choices=indicator.INDICATOR_NAMES)
    p.add_argument("--out", required=True, help=".csv field output")
    p.add_argument("--config", default=None, help="config supplying the probe grid")
    p.add_argument("--grid", default=None, help="grid override lo:hi:n[,lo:hi:n[,lo:hi:n]]")
    p.add_argument("--slice", action="append", default=None,
                   help="3D slice export, e.g. --slice x3=0.2 (repeatable)")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("repro", help="reproduce a bundled experiment end to end")
    p.add_argument("--example", type=int, required=True, help="example id (1..6)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the preset noise seed")
    p.set_defaults(func=cmd_repro)

    p = sub.add_parser("validate", help="check a config and its geometry separation")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.threads > 0:
        import numba

        numba.set_num_threads(args.threads)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (bie.SolverError, indicator.IndicatorError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    except (OSError, fieldio.TdisFormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
