"""Seeded sampling of the exponentially correlated Gaussian noise.

Paths are drawn with the exact AR(1) discretisation of the stationary
Ornstein-Uhlenbeck process with covariance (γ/2) e^{−γ|t−s|}, so the node
covariance is exact for any step size. Integrals against the (nowhere
differentiable) time derivative of a path are always moved onto the smooth
co-factor by parts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .model import CorrelationKernel, ExponentialKernel, TimeGrid, trapezoid

W0_MODES = ("stationary", "zero")


@dataclass(frozen=True)
class NoiseTrajectory:
    grid: TimeGrid
    values: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (len(self.grid),):
            raise ValueError(
                f"noise has {values.shape[0] if values.ndim else 0} values for a grid of {len(self.grid)} nodes"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def w0(self) -> float:
        return float(self.values[0])

    def restrict(self, n: int) -> "NoiseTrajectory":
        """The same path on the first ``n`` steps."""
        return NoiseTrajectory(self.grid.prefix(n), self.values[: n + 1], self.seed, self.meta)


def sample(
    kernel: CorrelationKernel,
    grid: TimeGrid,
    seed: int,
    w0_mode: str = "stationary",
) -> NoiseTrajectory:
    """Draw one path of the stationary exponentially correlated noise.

    Parameters
    ----------
    kernel : ExponentialKernel
        Sets γ; the white-noise limit has no sampled paths.
    grid : TimeGrid
    seed : int
        Seed for :func:`numpy.random.default_rng`.
    w0_mode : {"stationary", "zero"}
        Draw w(0) from N(0, γ/2) or pin it to zero.
    """
    if not isinstance(kernel, ExponentialKernel):
        raise ValueError("white noise enters only through the Markovian-limit oracle; cannot sample paths")
    if w0_mode not in W0_MODES:
        raise ValueError(f"w0_mode must be one of {W0_MODES}, got {w0_mode!r}")
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(len(grid))
    var = 0.5 * kernel.gamma
    rho = np.exp(-kernel.gamma * grid.dt)
    # -expm1 keeps 1 − ρ² accurate for γΔt ≪ 1
    step_sd = np.sqrt(var * -np.expm1(-2.0 * kernel.gamma * grid.dt))
    drive = step_sd * xi
    drive[0] = np.sqrt(var) * xi[0] if w0_mode == "stationary" else 0.0
    w = lfilter([1.0], [1.0, -rho], drive)
    return NoiseTrajectory(grid, w, seed, {"gamma": kernel.gamma, "w0_mode": w0_mode})


def sample_many(kernel, grid, seeds, w0_mode: str = "stationary") -> list[NoiseTrajectory]:
    return [sample(kernel, grid, int(s), w0_mode) for s in seeds]


def integral_against(noise: NoiseTrajectory, values_of_e, mode: str = "plain", derivative_of_e=None) -> complex:
    """∫_0^t w(s) e(s) ds, or ∫_0^t ẇ(s) e(s) ds by parts.

    In ``against_derivative`` mode the result is
    w(t)e(t) − w(0)e(0) − ∫ w ė ds, so ``derivative_of_e`` is required.
    """
    e = np.asarray(values_of_e)
    w = noise.values
    if e.shape != w.shape:
        raise ValueError(f"length mismatch: e has {e.shape}, noise has {w.shape}")
    dt = noise.grid.dt
    if mode == "plain":
        return complex(trapezoid(w * e, dt))
    if mode == "against_derivative":
        if derivative_of_e is None:
            raise ValueError("against_derivative mode needs the derivative of e")
        de = np.asarray(derivative_of_e)
        if de.shape != w.shape:
            raise ValueError(f"length mismatch: de has {de.shape}, noise has {w.shape}")
        return complex(w[-1] * e[-1] - w[0] * e[0] - trapezoid(w * de, dt))
    raise ValueError(f"unknown mode {mode!r}")
