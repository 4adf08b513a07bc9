"""Forward synthesis of scattered-field data tensors.

Two models are provided:

* point model -- single-scattering superposition of two-leg travel kernels.
  In 3D this is the closed-form retarded kernel; in 2D each leg carries the
  Heaviside-tail kernel, i.e. the trace is -(G2_xz * G2_zy * pulse)(t) per
  scatterer, computed by nested singularity-removing quadrature so that the
  result is exactly zero before the geometric first arrival.
* boundary-integral model for extended 2D sound-soft obstacles (see bie.py).

Multiplicative uniform noise u * (1 + eps*r), r ~ U[-1, 1] per sample, is
applied by :func:`add_noise` with a seeded generator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from ._kernels import probe_norms  # noqa: F401  (re-exported for cache warmup)
from .geometry import BoundaryCurve, SurfaceGeometry
from .greenfn import (
    MediumSpec,
    _gl_panel_rule,
    _pulse_window,
    sample_point_response,
    wave2d_pulse_conv,
)
from .signal import SignalSpec, TimeGrid

__all__ = [
    "ScatteredDataSet",
    "ScattererConfig",
    "NoiseSpec",
    "synth_point_model",
    "add_noise",
]


@dataclass(frozen=True)
class NoiseSpec:
    """Multiplicative uniform noise level and RNG seed."""

    level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.level < 0:
            raise ValueError(f"noise level must be >= 0, got {self.level}")


@dataclass
class ScatteredDataSet:
    """Scattered field tensor u[i, k, j]: sensor i, time node k, source j."""

    sensors: SurfaceGeometry
    sources: SurfaceGeometry
    tgrid: TimeGrid
    spec: SignalSpec
    medium: MediumSpec
    kernel_dimension: int
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = (self.sensors.n_points, self.tgrid.n_nodes, self.sources.n_points)
        if self.values.shape != expected:
            raise ValueError(f"tensor shape {self.values.shape} != {expected}")

    def transposed(self) -> np.ndarray:
        """Time-contiguous copy (n_sensors, n_sources, n_nodes) for the engines."""
        return np.ascontiguousarray(self.values.transpose(0, 2, 1))


@dataclass(frozen=True)
class ScattererConfig:
    """What to scatter from: point centers with strengths, or boundary curves."""

    model: str  # "point" | "bie"
    centers: np.ndarray | None = None  # (M, d) for the point model
    amplitudes: np.ndarray | None = None  # (M,)
    diameters: np.ndarray | None = None  # (M,) nominal diameters, for validation
    boundaries: tuple = ()

    def __post_init__(self):
        if self.model not in ("point", "bie"):
            raise ValueError(f"unknown forward model {self.model!r}")
        if self.model == "point" and (self.centers is None or len(self.centers) == 0):
            raise ValueError("point model requires at least one center")
        if self.model == "bie" and len(self.boundaries) == 0 and self.centers is not None:
            raise ValueError("bie model takes boundaries, not centers")


def check_point_like(diameter: float, spec: SignalSpec, medium: MediumSpec) -> bool:
    """Warn when a nominal scatterer diameter strains the point-like regime."""
    limit = 0.1 * (2.0 * np.pi * medium.c / spec.omega)
    if diameter >= limit:
        warnings.warn(
            f"scatterer diameter {diameter:.4g} is not far below the center "
            f"wavelength (threshold {limit:.4g}); point-model accuracy degrades",
            stacklevel=3,
        )
        return False
    return True


def _distances(points: np.ndarray, z: np.ndarray) -> np.ndarray:
    return np.sqrt(((np.asarray(points, float) - np.asarray(z, float)) ** 2).sum(-1))


def _point2d_tensor(
    center,
    sensors: SurfaceGeometry,
    sources: SurfaceGeometry,
    tgrid: TimeGrid,
    spec: SignalSpec,
    medium: MediumSpec,
    oversample: int = 8,
) -> np.ndarray:
    """Two-leg 2D trace tensor for one scatterer center (unit strength).

    The source leg W_j = (G2 * pulse)(z, . ; y_j) is tabulated on a fine grid
    and splined; the sensor leg is then folded in with the same wavefront
    substitution v = r + w^2.  The tail of W decays slowly, so the w-range is
    split at the end of W's oscillatory section: dense panels over the pulse,
    light panels over the smooth tail.
    """
    c = medium.c
    rt1 = _distances(sensors.points, center) / c
    rt2 = _distances(sources.points, center) / c
    if rt1.min() < 1e-12 or rt2.min() < 1e-12:
        raise ValueError("scatterer center coincides with a sensor or source")

    T = tgrid.terminal
    ts = tgrid.nodes()
    n_fine = oversample * tgrid.n_steps + 1
    taus = np.linspace(0.0, T, n_fine)
    # (Ni, n_fine) source-leg histories
    W = wave2d_pulse_conv(
        (rt2 * c)[:, None], taus[None, :], spec, medium, n_panels=6, n_nodes=20
    )

    _, pulse_hi = _pulse_window(spec)
    dense_nodes, dense_wts = _gl_panel_rule(4, 24)
    tail_nodes, tail_wts = _gl_panel_rule(2, 16)

    nm, nt1 = len(rt1), tgrid.n_nodes
    out = np.zeros((nm, nt1, len(rt2)))
    for j in range(len(rt2)):
        wj = CubicSpline(taus, W[j])
        base = ts[None, :] - rt1[:, None]  # (Nm, Nt1) available travel budget
        w2 = np.sqrt(np.maximum(base - rt2[j], 0.0))
        w1 = np.sqrt(np.maximum(base - rt2[j] - pulse_hi, 0.0))

        acc = np.zeros((nm, nt1))
        for nodes, wts, lo, hi in (
            (dense_nodes, dense_wts, w1, w2),
            (tail_nodes, tail_wts, np.zeros_like(w1), w1),
        ):
            span = hi - lo
            w = lo[..., None] + span[..., None] * nodes
            args = base[..., None] - w**2
            vals = wj(np.clip(args, 0.0, T)) / np.sqrt(w**2 + 2.0 * rt1[:, None, None])
            acc += (vals @ wts) * span
        out[:, :, j] = -acc / np.pi
    return out


def synth_point_model(
    centers,
    amplitudes,
    sensors: SurfaceGeometry,
    sources: SurfaceGeometry,
    tgrid: TimeGrid,
    spec: SignalSpec,
    medium: MediumSpec = MediumSpec(),
    dimension: int = 3,
    diameters=None,
) -> ScatteredDataSet:
    """Point-model data tensor: superposition of per-center responses.

    ``dimension`` selects the wave kernel (3: retarded closed form, 2:
    two-leg Heaviside-tail composition); the coordinates may be 2D in either
    case, a 2D layout with the 3D kernel being the planar slice of a 3D
    problem.
    """
    centers = np.atleast_2d(np.asarray(centers, float))
    amplitudes = np.broadcast_to(np.asarray(amplitudes, float), (len(centers),))
    if diameters is not None:
        for dia in np.atleast_1d(diameters):
            check_point_like(float(dia), spec, medium)
    if dimension not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {dimension}")

    values = np.zeros((sensors.n_points, tgrid.n_nodes, sources.n_points))
    for z0, amp in zip(centers, amplitudes):
        if dimension == 3:
            values += amp * sample_point_response(
                sensors.points, sources.points, z0, tgrid, spec, medium
            )
        else:
            values += amp * _point2d_tensor(z0, sensors, sources, tgrid, spec, medium)

    meta = {
        "model": f"point{dimension}d",
        "centers": centers.tolist(),
        "amplitudes": amplitudes.tolist(),
        "noise_level": 0.0,
        "noise_seed": None,
    }
    return ScatteredDataSet(
        sensors, sources, tgrid, spec, medium, dimension, values, meta
    )


def add_noise(data: ScatteredDataSet, noise: NoiseSpec) -> ScatteredDataSet:
    """Entrywise multiplicative noise u * (1 + level * r), r ~ U[-1, 1]."""
    if noise.level == 0.0:
        values = data.values.copy()
    else:
        rng = np.random.default_rng(noise.seed)
        r = rng.uniform(-1.0, 1.0, size=data.values.shape)
        values = data.values * (1.0 + noise.level * r)
    meta = dict(data.meta)
    meta["noise_level"] = noise.level
    meta["noise_seed"] = noise.seed if noise.level > 0 else None
    return replace(data, values=values, meta=meta)
