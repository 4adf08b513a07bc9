"""Scatterer boundaries, sensor/source surfaces and probe grids.

Boundary curves are smooth closed 2D curves given by analytic
parameterizations on [0, 2*pi); first and second parameter derivatives are
stored alongside the nodes because the boundary-integral solver needs them.
Sensor layouts (full/limited circular arcs, Fibonacci sphere) carry uniform
quadrature weights: arc length or sphere area divided by the point count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BoundaryCurve",
    "SurfaceGeometry",
    "SamplingGrid",
    "SeparationReport",
    "make_boundary",
    "make_circle_sensors",
    "make_fibonacci_sphere_sensors",
    "make_sampling_grid",
    "check_separation",
    "BOUNDARY_SHAPES",
]

_FULL_CIRCLE_EPS = 1e-12


def _radial_profile(shape: str, theta: np.ndarray, scale: float):
    """Radius rho(theta) and its first two derivatives for radial shapes."""
    if shape == "point":
        rho = np.full_like(theta, 0.001 * scale)
        return rho, np.zeros_like(theta), np.zeros_like(theta)
    if shape == "circle":
        rho = np.full_like(theta, 1.5 * scale)
        return rho, np.zeros_like(theta), np.zeros_like(theta)
    if shape == "starfish":
        rho = scale * (1.0 + 0.2 * np.cos(5.0 * theta))
        d1 = -scale * np.sin(5.0 * theta)
        d2 = -5.0 * scale * np.cos(5.0 * theta)
        return rho, d1, d2
    if shape == "acorn":
        g = 17.0 / 4.0 + 2.0 * np.cos(3.0 * theta)
        gp = -6.0 * np.sin(3.0 * theta)
        gpp = -18.0 * np.cos(3.0 * theta)
        sq = np.sqrt(g)
        rho = 0.84 * scale * sq
        d1 = 0.84 * scale * gp / (2.0 * sq)
        d2 = 0.84 * scale * (gpp / (2.0 * sq) - gp**2 / (4.0 * g * sq))
        return rho, d1, d2
    if shape == "peanut":
        g = 4.0 * np.cos(theta) ** 2 + np.sin(theta) ** 2
        gp = -3.0 * np.sin(2.0 * theta)
        gpp = -6.0 * np.cos(2.0 * theta)
        sq = np.sqrt(g)
        c = scale * 5.0 / 12.0
        rho = c * sq
        d1 = c * gp / (2.0 * sq)
        d2 = c * (gpp / (2.0 * sq) - gp**2 / (4.0 * g * sq))
        return rho, d1, d2
    raise ValueError(f"not a radial shape: {shape}")


def _param_xy(shape: str, theta: np.ndarray, center, scale: float):
    """Curve points and first/second derivatives, shape (n, 2) each."""
    a, b = float(center[0]), float(center[1])
    ct, st = np.cos(theta), np.sin(theta)
    if shape in ("point", "circle", "starfish", "acorn", "peanut"):
        rho, d1, d2 = _radial_profile(shape, theta, scale)
        x = np.stack([a + rho * ct, b + rho * st], axis=-1)
        dx = np.stack([d1 * ct - rho * st, d1 * st + rho * ct], axis=-1)
        ddx = np.stack(
            [(d2 - rho) * ct - 2.0 * d1 * st, (d2 - rho) * st + 2.0 * d1 * ct],
            axis=-1,
        )
        return x, dx, ddx
    if shape == "kite":
        x1 = a + scale * (ct + 0.65 * np.cos(2 * theta) - 0.65)
        x2 = b + scale * 1.5 * st
        d1x = scale * (-st - 1.3 * np.sin(2 * theta))
        d1y = scale * 1.5 * ct
        d2x = scale * (-ct - 2.6 * np.cos(2 * theta))
        d2y = -scale * 1.5 * st
        return (
            np.stack([x1, x2], axis=-1),
            np.stack([d1x, d1y], axis=-1),
            np.stack([d2x, d2y], axis=-1),
        )
    if shape == "rounded_square":
        c = scale * np.sqrt(2.0) / 2.0
        c3, s3 = ct**3, st**3
        dc3 = -3.0 * ct**2 * st
        ds3 = 3.0 * st**2 * ct
        ddc3 = 6.0 * ct * st**2 - 3.0 * c3
        dds3 = 6.0 * st * ct**2 - 3.0 * s3
        x1 = a + c * (c3 + s3 + ct + st)
        x2 = b + c * (-c3 + s3 - ct + st)
        d1x = c * (dc3 + ds3 - st + ct)
        d1y = c * (-dc3 + ds3 + st + ct)
        d2x = c * (ddc3 + dds3 - ct - st)
        d2y = c * (-ddc3 + dds3 + ct - st)
        return (
            np.stack([x1, x2], axis=-1),
            np.stack([d1x, d1y], axis=-1),
            np.stack([d2x, d2y], axis=-1),
        )
    raise ValueError(f"unknown boundary shape: {shape!r}")


BOUNDARY_SHAPES = (
    "point",
    "circle",
    "kite",
    "starfish",
    "acorn",
    "rounded_square",
    "peanut",
)


@dataclass(frozen=True)
class BoundaryCurve:
    """Closed 2D boundary sampled at n equispaced parameter values.

    ``nodes``, ``d1`` and ``d2`` hold the curve and its first two parameter
    derivatives at theta_m = 2*pi*m/n; all are (n, 2) arrays.
    """

    shape: str
    center: tuple[float, float]
    scale: float
    n: int
    thetas: np.ndarray
    nodes: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    def point_at(self, theta) -> np.ndarray:
        """Evaluate the parameterization at arbitrary angles."""
        x, _, _ = _param_xy(self.shape, np.atleast_1d(np.asarray(theta, float)), self.center, self.scale)
        return x

    def diameter(self) -> float:
        """Maximum pairwise node distance (boundary diameter estimate)."""
        d = self.nodes[:, None, :] - self.nodes[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())


def make_boundary(shape: str, center=(0.0, 0.0), scale: float = 1.0, n: int = 128) -> BoundaryCurve:
    """Build a boundary curve of the given shape.

    ``scale`` multiplies the radial profile (kite and rounded-square scale
    both coordinates).  ``n`` must be at least 8 and even (the integral-
    equation quadrature requires an even node count).
    """
    if shape not in BOUNDARY_SHAPES:
        raise ValueError(f"unknown boundary shape: {shape!r}; expected one of {BOUNDARY_SHAPES}")
    if n < 8:
        raise ValueError(f"node count must be >= 8, got {n}")
    if n % 2 != 0:
        raise ValueError(f"node count must be even, got {n}")
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    thetas = 2.0 * np.pi * np.arange(n) / n
    x, dx, ddx = _param_xy(shape, thetas, center, scale)
    return BoundaryCurve(shape, (float(center[0]), float(center[1])), float(scale), n, thetas, x, dx, ddx)


@dataclass(frozen=True)
class SurfaceGeometry:
    """Sensor or source layout: points with per-point quadrature weights."""

    dimension: int
    points: np.ndarray  # (N, dimension)
    weights: np.ndarray  # (N,)
    aperture: str = "full"

    def __post_init__(self):
        if self.points.ndim != 2 or self.points.shape[1] != self.dimension:
            raise ValueError("points must have shape (N, dimension)")
        if len(self.weights) != len(self.points):
            raise ValueError("one weight per point required")
        if not np.all(self.weights > 0):
            raise ValueError("all quadrature weights must be > 0")

    @property
    def n_points(self) -> int:
        return len(self.points)


def make_circle_sensors(
    n: int,
    radius: float,
    aperture_start: float = 0.0,
    aperture_span: float = 2.0 * np.pi,
) -> SurfaceGeometry:
    """Points on a circular arc of the given radius, centered at the origin.

    Full aperture (span 2*pi) places n points with step span/n, open at the
    wrap-around; a limited aperture includes both arc endpoints with step
    span/(n-1).  Weights are uniform: radius*span/n.
    """
    if n < 1:
        raise ValueError("need at least one sensor")
    if not radius > 0:
        raise ValueError("radius must be > 0")
    if not 0.0 < aperture_span <= 2.0 * np.pi + _FULL_CIRCLE_EPS:
        raise ValueError("aperture span must lie in (0, 2*pi]")
    full = aperture_span >= 2.0 * np.pi - _FULL_CIRCLE_EPS
    if full or n == 1:
        step = aperture_span / n
    else:
        step = aperture_span / (n - 1)
    angles = aperture_start + step * np.arange(n)
    pts = radius * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    w = np.full(n, radius * aperture_span / n)
    return SurfaceGeometry(2, pts, w, "full" if full else f"arc:{aperture_span:.6g}")


def make_fibonacci_sphere_sensors(n: int, radius: float) -> SurfaceGeometry:
    """Near-uniform spiral layout of n points on the sphere of given radius.

    Point i sits at height alpha_i = (2i - n + 1)/n with azimuth
    (3 - sqrt(5))*i*pi; weights are uniform 4*pi*R^2/n.
    """
    if n < 2:
        raise ValueError("need at least two sphere points")
    if not radius > 0:
        raise ValueError("radius must be > 0")
    i = np.arange(n)
    alpha = (2.0 * i - n + 1.0) / n
    rxy = np.sqrt(np.maximum(1.0 - alpha**2, 0.0))
    phi = (3.0 - np.sqrt(5.0)) * i * np.pi
    pts = radius * np.stack([rxy * np.cos(phi), alpha, rxy * np.sin(phi)], axis=-1)
    w = np.full(n, 4.0 * np.pi * radius**2 / n)
    return SurfaceGeometry(3, pts, w, "sphere")


@dataclass(frozen=True)
class SamplingGrid:
    """Tensor-product probe grid over a box, flattened in C (row-major) order."""

    bounds: tuple  # ((lo, hi), ...) per axis
    counts: tuple  # points per axis
    axes: tuple = field(default=None)  # per-axis coordinate arrays
    points: np.ndarray = field(default=None)  # (P, dim)

    @property
    def dimension(self) -> int:
        return len(self.bounds)

    @property
    def n_points(self) -> int:
        return int(np.prod(self.counts))

    @property
    def spacings(self) -> tuple:
        return tuple(
            (hi - lo) / (c - 1) for (lo, hi), c in zip(self.bounds, self.counts)
        )

    def values_shape(self) -> tuple:
        return tuple(self.counts)


def make_sampling_grid(bounds, counts) -> SamplingGrid:
    """Equidistant grid with the given per-axis (lo, hi) bounds and counts."""
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    counts = tuple(int(c) for c in np.atleast_1d(counts))
    if len(counts) == 1 and len(bounds) > 1:
        counts = counts * len(bounds)
    if len(bounds) != len(counts):
        raise ValueError("one count per axis required")
    for (lo, hi), c in zip(bounds, counts):
        if c < 2:
            raise ValueError(f"need at least 2 points per axis, got {c}")
        if not hi > lo:
            raise ValueError(f"invalid axis bounds ({lo}, {hi})")
    axes = tuple(np.linspace(lo, hi, c) for (lo, hi), c in zip(bounds, counts))
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel(order="C") for m in mesh], axis=-1)
    return SamplingGrid(bounds, counts, axes, pts)


@dataclass
class SeparationReport:
    """Outcome of the probe-region vs. measurement-surface sanity checks."""

    dist_grid_surface: float
    max_scatterer_diameter: float
    separation_ok: bool
    boundaries_inside: bool
    grid_disjoint_from_surface: bool
    warnings: list

    @property
    def all_ok(self) -> bool:
        return self.separation_ok and self.boundaries_inside and self.grid_disjoint_from_surface


def _dist_points_to_box(points: np.ndarray, bounds) -> np.ndarray:
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    d = min(points.shape[1], len(bounds))
    excess = np.maximum(
        np.maximum(lo[:d] - points[:, :d], points[:, :d] - hi[:d]), 0.0
    )
    return np.sqrt((excess**2).sum(axis=1))


def check_separation(grid: SamplingGrid, surface: SurfaceGeometry, boundaries=()) -> SeparationReport:
    """Diagnostic checks: probe region strictly separated from the sensors,
    scatterers contained in the probe region, sensors outside the region.

    Non-fatal: returns a report with human-readable warnings.
    """
    warnings = []
    dists = _dist_points_to_box(surface.points, grid.bounds)
    dist_gs = float(dists.min())
    inside = dists <= 0.0
    disjoint = not bool(inside.any())
    if not disjoint:
        warnings.append(
            f"{int(inside.sum())} measurement point(s) lie inside the probe region"
        )

    max_diam = 0.0
    contained = True
    for b in boundaries:
        max_diam = max(max_diam, b.diameter())
        lo = np.array([bb[0] for bb in grid.bounds[:2]])
        hi = np.array([bb[1] for bb in grid.bounds[:2]])
        if np.any(b.nodes[:, :2] < lo) or np.any(b.nodes[:, :2] > hi):
            contained = False
            warnings.append(f"boundary {b.shape}@{b.center} extends outside the probe region")

    sep_ok = dist_gs > max_diam
    if not sep_ok:
        warnings.append(
            f"probe-region/sensor distance {dist_gs:.4g} does not exceed "
            f"max scatterer diameter {max_diam:.4g}"
        )
    return SeparationReport(dist_gs, max_diam, sep_ok, contained, disjoint, warnings)
