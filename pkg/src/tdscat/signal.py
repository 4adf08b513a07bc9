"""Causal pulse signals and uniform time grids.

The probing pulse is a Gaussian-modulated sinusoid.  All forward models and
indicator computations share the same pulse definition and the same closed
time grids, so this module is the single source of truth for both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SignalSpec", "TimeGrid", "eval_signal", "sample_signal"]


@dataclass(frozen=True)
class SignalSpec:
    """Gaussian-modulated sinusoidal pulse sin(omega*t) * exp(-sigma*(t-t0)^2).

    Parameters
    ----------
    omega : float
        Center angular frequency (rad per unit time), > 0.
    sigma : float
        Bandwidth parameter of the Gaussian envelope (1/time^2), > 0.
    t0 : float
        Time shift of the envelope peak.
    causal_truncation : bool
        If True (default), the pulse is forced to exactly zero for t < 0.
        For the default parameters the truncated mass is below 1e-6, but the
        hard zero makes discrete causality statements exact.
    """

    omega: float
    sigma: float
    t0: float
    causal_truncation: bool = True

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")

    @property
    def center_wavelength(self) -> float:
        """Wavelength 2*pi*c/omega for unit sound speed (multiply by c)."""
        return 2.0 * np.pi / self.omega

    def envelope_halfwidth(self, tol: float = 1e-14) -> float:
        """Half-width h such that |pulse| < tol outside [t0-h, t0+h]."""
        return float(np.sqrt(np.log(1.0 / tol) / self.sigma))


@dataclass(frozen=True)
class TimeGrid:
    """Closed uniform grid t_k = k*dt, k = 0..n_steps, with t_n = terminal."""

    terminal: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if not self.terminal > 0:
            raise ValueError(f"terminal time must be > 0, got {self.terminal}")

    @property
    def dt(self) -> float:
        return self.terminal / self.n_steps

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    def nodes(self) -> np.ndarray:
        return np.arange(self.n_nodes) * self.dt


def eval_signal(spec: SignalSpec, t) -> np.ndarray | float:
    """Evaluate the pulse at time(s) ``t``.

    Total function: accepts scalars or arrays, never raises for any real t.
    """
    t = np.asarray(t, dtype=np.float64)
    val = np.sin(spec.omega * t) * np.exp(-spec.sigma * (t - spec.t0) ** 2)
    if spec.causal_truncation:
        val = np.where(t < 0.0, 0.0, val)
    if val.ndim == 0:
        return float(val)
    return val


def sample_signal(spec: SignalSpec, grid: TimeGrid) -> np.ndarray:
    """Pulse sampled on all nodes of ``grid``; element k is eval_signal(t_k)."""
    return np.asarray(eval_signal(spec, grid.nodes()))
