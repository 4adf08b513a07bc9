"""Time-convolved wave kernels in 2D and 3D.

3D kernels are closed-form retarded pulses.  The 2D kernel has a Heaviside
tail with an inverse-square-root wavefront singularity; its pulse convolution

    (G2 * s)(t) = int_r^t  s(t - v) / (2*pi*sqrt(v^2 - r^2)) dv      (c = 1)

is computed with the substitution v = r + w^2, which removes the singularity
and leaves a smooth integrand handled by Gauss-Legendre panels restricted to
the support window of the pulse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal import SignalSpec, TimeGrid, eval_signal

__all__ = [
    "MediumSpec",
    "greens3d_conv",
    "greens2d_conv",
    "greens_conv",
    "point_scatter_response",
    "sample_greens_conv",
    "sample_point_response",
]

_COINCIDENT_TOL = 1e-12


@dataclass(frozen=True)
class MediumSpec:
    """Homogeneous background medium."""

    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"sound speed must be > 0, got {self.c}")


def _dist(x, y) -> np.ndarray:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    return np.sqrt(((x - y) ** 2).sum(axis=-1))


def _check_separated(r, what="points"):
    if np.any(np.asarray(r) < _COINCIDENT_TOL):
        raise ValueError(f"coincident {what} produce a singular kernel")


def greens3d_conv(x, y, t, spec: SignalSpec, medium: MediumSpec = MediumSpec()):
    """Retarded 3D pulse: s(t - |x-y|/c) / (4*pi*|x-y|)."""
    r = _dist(x, y)
    _check_separated(r)
    return eval_signal(spec, np.asarray(t, float) - r / medium.c) / (4.0 * np.pi * r)


def _gl_panel_rule(n_panels: int, n_nodes: int):
    """Composite Gauss-Legendre rule on [0, 1]: nodes and weights, flat."""
    xg, wg = np.polynomial.legendre.leggauss(n_nodes)
    edges = np.linspace(0.0, 1.0, n_panels + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    nodes = (mids[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def _pulse_window(spec: SignalSpec, tol: float = 1e-16):
    """Support interval of the pulse up to |s| < tol of its envelope."""
    h = spec.envelope_halfwidth(tol)
    lo = spec.t0 - h
    if spec.causal_truncation:
        lo = max(lo, 0.0)
    return lo, spec.t0 + h


def wave2d_pulse_conv(
    r,
    t,
    spec: SignalSpec,
    medium: MediumSpec = MediumSpec(),
    n_panels: int = 6,
    n_nodes: int = 20,
):
    """Vectorized 2D wave convolution for distance/time arrays ``r``, ``t``.

    After v = c*(r/c + w^2) the integral becomes
        (1/pi) * int  s(t - r/c - w^2) / sqrt(w^2 + 2*r/c)  dw
    over the w-range where the pulse support is hit.  Requires r >> machine
    epsilon; accuracy degrades for r much smaller than the pulse width times
    c (not a regime this package uses).
    """
    r = np.atleast_1d(np.asarray(r, float))
    t = np.atleast_1d(np.asarray(t, float))
    _check_separated(r)
    r, t = np.broadcast_arrays(r / medium.c, t)  # work in travel-time units

    lo, hi = _pulse_window(spec)
    w_lo = np.sqrt(np.maximum(t - r - hi, 0.0))
    w_hi = np.sqrt(np.maximum(t - r - lo, 0.0))
    span = w_hi - w_lo

    nodes, weights = _gl_panel_rule(n_panels, n_nodes)
    w = w_lo[..., None] + span[..., None] * nodes  # (..., Q)
    tau = t[..., None] - r[..., None] - w**2
    integrand = eval_signal(spec, tau) / np.sqrt(w**2 + 2.0 * r[..., None])
    out = (integrand @ weights) * span / np.pi
    return out


def greens2d_conv(x, y, t, spec: SignalSpec, medium: MediumSpec = MediumSpec()):
    """2D Heaviside-tail kernel convolved with the pulse."""
    r = _dist(x, y)
    out = wave2d_pulse_conv(r, t, spec, medium)
    if out.size == 1 and np.isscalar(t):
        return float(out[0])
    return out


def greens_conv(x, y, t, spec: SignalSpec, medium: MediumSpec = MediumSpec(), dimension: int = 3):
    """Dimension dispatch for the pulse-convolved free-space kernel."""
    if dimension == 3:
        return greens3d_conv(x, y, t, spec, medium)
    if dimension == 2:
        return greens2d_conv(x, y, t, spec, medium)
    raise ValueError(f"dimension must be 2 or 3, got {dimension}")


def point_scatter_response(x, t, y, z, spec: SignalSpec, medium: MediumSpec = MediumSpec()):
    """Two-leg travel kernel for a point scatterer at probe ``z``:

        -s(t - |x-z|/c - |y-z|/c) / (4*pi*|x-z|*|y-z|)

    The closed form is independent of the ambient dimension of the points.
    """
    r1 = _dist(x, z)
    r2 = _dist(y, z)
    _check_separated(np.stack(np.broadcast_arrays(r1, r2)), "probe/sensor")
    shift = (r1 + r2) / medium.c
    return -eval_signal(spec, np.asarray(t, float) - shift) / (4.0 * np.pi * r1 * r2)


def sample_greens_conv(
    points: np.ndarray,
    z,
    grid: TimeGrid,
    spec: SignalSpec,
    medium: MediumSpec = MediumSpec(),
    dimension: int = 3,
) -> np.ndarray:
    """Pulse-convolved kernel from ``z`` to each point, on all time nodes.

    Returns an (n_points, n_nodes) array.
    """
    pts = np.asarray(points, float)
    r = _dist(pts, np.asarray(z, float))
    _check_separated(r)
    ts = grid.nodes()
    if dimension == 3:
        return eval_signal(spec, ts[None, :] - r[:, None] / medium.c) / (4.0 * np.pi * r[:, None])
    if dimension == 2:
        return wave2d_pulse_conv(r[:, None], ts[None, :], spec, medium)
    raise ValueError(f"dimension must be 2 or 3, got {dimension}")


def sample_point_response(
    sensors: np.ndarray,
    sources: np.ndarray,
    z,
    grid: TimeGrid,
    spec: SignalSpec,
    medium: MediumSpec = MediumSpec(),
) -> np.ndarray:
    """Two-leg kernel tensor for probe ``z``: shape (n_sensors, n_nodes, n_sources)."""
    xs = np.asarray(sensors, float)
    ys = np.asarray(sources, float)
    r1 = _dist(xs, np.asarray(z, float))
    r2 = _dist(ys, np.asarray(z, float))
    _check_separated(r1, "probe/sensor")
    _check_separated(r2, "probe/source")
    ts = grid.nodes()
    shift = (r1[:, None, None] + r2[None, None, :]) / medium.c
    amp = -1.0 / (4.0 * np.pi * r1[:, None, None] * r2[None, None, :])
    return amp * eval_signal(spec, ts[None, :, None] - shift)
