"""Ladder integration: grids, trajectories, the two integrators, and the
closed-form cascade solution used as an accuracy oracle."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .physics import ConfigError, RateRealization

# Real-axis stability boundary of classical RK4 (|z| < 2.785...).
RK4_STABILITY = 2.78


class IntegrationError(RuntimeError):
    """The integrator produced non-finite values or could not proceed."""


class Integrator(str, enum.Enum):
    IMPLICIT_TRAPEZOID = "implicit_trapezoid"
    RK4 = "rk4"


@dataclass(frozen=True)
class SimGrid:
    """Output grid and integrator selection for one trajectory.

    error_tol is the target relative error on E and P per e-fold of decay
    (implicit trapezoid only); dt_internal is the fixed internal step of the
    RK4 mode and must satisfy dt_internal < 2.78 / max(Gamma_M).
    """

    output_times: np.ndarray
    integrator: Integrator = Integrator.IMPLICIT_TRAPEZOID
    dt_internal: float | None = None
    error_tol: float = 1e-6
    active_window_eps: float = 1e-14

    def __post_init__(self):
        times = np.ascontiguousarray(self.output_times, dtype=np.float64)
        object.__setattr__(self, "output_times", times)
        if times.ndim != 1 or times.shape[0] < 2:
            raise ConfigError("grid.output_times must be a 1-D array with at least 2 samples")
        if times[0] != 0.0:
            raise ConfigError(f"grid.output_times must start at 0, got {times[0]}")
        if np.any(np.diff(times) <= 0.0) or not np.all(np.isfinite(times)):
            raise ConfigError("grid.output_times must be finite and strictly increasing")
        if not isinstance(self.integrator, Integrator):
            raise ConfigError(f"grid.integrator must be an Integrator, got {self.integrator!r}")
        if self.integrator is Integrator.RK4:
            if self.dt_internal is None or not (self.dt_internal > 0):
                raise ConfigError("grid.dt_internal must be a positive step for the RK4 mode")
        if not (self.error_tol > 0):
            raise ConfigError(f"grid.error_tol must be positive, got {self.error_tol}")
        if not (0.0 <= self.active_window_eps < 1e-6):
            raise ConfigError(
                f"grid.active_window_eps must lie in [0, 1e-6), got {self.active_window_eps}")

    @property
    def t_max(self) -> float:
        return float(self.output_times[-1])

    @classmethod
    def uniform(cls, t_max: float, n_out: int = 1024, **kwargs) -> "SimGrid":
        """Uniform grid of n_out samples on [0, t_max]."""
        if not (t_max > 0):
            raise ConfigError(f"grid.t_max must be positive, got {t_max}")
        if n_out < 2:
            raise ConfigError(f"grid.n_out must be at least 2, got {n_out}")
        return cls(output_times=np.linspace(0.0, t_max, n_out), **kwargs)


@dataclass
class Trajectory:
    """One integrated realization: stored quanta E(t) and emitted power P(t).

    energy is in photon quanta (hbar*omega_a == 1), power in quanta/s.
    states, when requested, holds the clamped level occupations at the output
    times (row k is rho at times[k]); meant for small ladders.
    """

    times: np.ndarray
    energy: np.ndarray
    power: np.ndarray
    states: np.ndarray | None = None
    n_steps: int = 0
    n_rejected: int = 0
    min_rho: float = 0.0
    clamped_count: int = 0  # negative raw rates zeroed in the source realization
    backend: str = _kernels.BACKEND

    def to_csv(self, path) -> None:
        from .serialize import write_csv
        write_csv(path, ("t_ns", "E", "P"),
                  (self.times * 1e9, self.energy, self.power))


def ladder_rhs(rho: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """Time derivative of the level occupations under the decay cascade."""
    rho = np.asarray(rho, dtype=np.float64)
    rates = np.asarray(rates, dtype=np.float64)
    if rho.shape != rates.shape:
        raise ValueError(f"rho and rates must have equal length, got {rho.shape} vs {rates.shape}")
    d = -rates * rho
    d[:-1] += rates[1:] * rho[1:]
    return d


def _as_rate_array(rates) -> np.ndarray:
    if isinstance(rates, RateRealization):
        gamma = rates.rates
    else:
        gamma = np.asarray(rates, dtype=np.float64)
    gamma = np.ascontiguousarray(gamma, dtype=np.float64)
    if gamma.ndim != 1 or gamma.shape[0] < 1:
        raise ValueError("rates must be a 1-D array of per-level decay rates")
    if gamma[0] != 0.0:
        raise ValueError(f"the ground level must have zero rate, got rates[0] = {gamma[0]}")
    if np.any(gamma < 0.0) or not np.all(np.isfinite(gamma)):
        raise ValueError("rates must be finite and non-negative (clamp before integrating)")
    return gamma


def integrate(rates, grid: SimGrid, initial: np.ndarray | None = None,
              store_states: bool = False) -> Trajectory:
    """Integrate the cascade and sample E, P (and optionally rho) on the grid.

    rates may be a RateRealization or a plain array Gamma_0..Gamma_N.  The
    default initial condition puts all population in the top level.  Raises
    IntegrationError on non-finite results, step-size underflow, or an RK4
    step beyond the stability bound.
    """
    gamma = _as_rate_array(rates)
    n_levels = gamma.shape[0]

    if initial is None:
        rho0 = np.zeros(n_levels)
        rho0[-1] = 1.0
    else:
        rho0 = np.ascontiguousarray(initial, dtype=np.float64)
        if rho0.shape != (n_levels,):
            raise ValueError(f"initial state must have length {n_levels}, got {rho0.shape}")
        if np.any(rho0 < 0.0) or not np.all(np.isfinite(rho0)):
            raise ValueError("initial occupations must be finite and non-negative")

    if grid.integrator is Integrator.RK4:
        gmax = float(gamma.max())
        if gmax > 0.0:
            bound = RK4_STABILITY / gmax
            if grid.dt_internal >= bound:
                raise IntegrationError(
                    f"RK4 step {grid.dt_internal:.3e} s violates the stability bound "
                    f"{bound:.3e} s (= {RK4_STABILITY}/max Gamma_M)")
        e, p, states, stats = _kernels.run_rk4(
            gamma, rho0, grid.output_times, grid.dt_internal, store_states)
    else:
        e, p, states, stats = _kernels.run_trapezoid(
            gamma, rho0, grid.output_times, grid.error_tol,
            grid.active_window_eps, store_states)

    if stats["status"] == _kernels.STATUS_NONFINITE:
        raise IntegrationError("integration produced non-finite values")
    if stats["status"] == _kernels.STATUS_UNDERFLOW:
        raise IntegrationError(
            f"adaptive step size underflowed at error_tol={grid.error_tol:g}; "
            "tolerances below ~1e-11 sit at the double-precision floor of the "
            "step-doubling estimate, and a very stiff ladder has the same effect")

    clamped = rates.clamped_count if isinstance(rates, RateRealization) else 0
    return Trajectory(times=grid.output_times.copy(), energy=e, power=p, states=states,
                      n_steps=stats["n_steps"], n_rejected=stats["n_rejected"],
                      min_rho=stats["min_rho"], clamped_count=clamped,
                      backend=_kernels.BACKEND)


def bateman_closed_form(rates, times) -> np.ndarray:
    """Exact occupations of the cascade started from the top level.

    Classic partial-fraction solution of a linear decay chain with pairwise
    distinct rates; returns an array of shape (len(times), len(rates)).
    Accurate for small ladders only (catastrophic cancellation sets in around
    16 levels); raises ValueError on repeated rates.
    """
    gamma = np.asarray(rates, dtype=np.float64)
    if isinstance(rates, RateRealization):
        gamma = rates.rates
    if gamma.ndim != 1 or gamma.shape[0] < 1:
        raise ValueError("rates must be a 1-D array")
    if np.unique(gamma).shape[0] != gamma.shape[0]:
        raise ValueError("closed-form solution requires pairwise distinct rates")

    t = np.asarray(times, dtype=np.float64)
    n = gamma.shape[0] - 1
    rho = np.zeros((t.shape[0], n + 1))
    rho[:, n] = np.exp(-gamma[n] * t)
    for m in range(n - 1, -1, -1):
        prefactor = float(np.prod(gamma[m + 1:n + 1]))
        acc = np.zeros_like(t)
        for k in range(m, n + 1):
            d = gamma[m:n + 1] - gamma[k]
            denom = float(np.prod(np.delete(d, k - m)))
            acc += np.exp(-gamma[k] * t) / denom
        rho[:, m] = prefactor * acc
    return rho
