"""Physical constants, cloud configuration, and the stochastic rate sampler.

The model describes n_exc initially excited two-level atoms held in a
spherical cloud of radius R.  The collective state is reduced to a ladder
labelled by the number of remaining excitations M, and each level decays to
the one below it at a rate

    Gamma_M = M * gamma_a + c * sqrt(n_exc - M) * M * u_M * gamma_a

where c = xi * sqrt(pi + 29/12) / (kappa_a * R) collects the geometry of the
dipole-dipole couplings, u_M is a uniform random number on [-1, 1], and xi
is an order-unity calibration factor.  The square-root spread comes from the
eigenvalue statistics of the excitation-exchange couplings across an
M-excitation manifold; the extra factor sqrt(M) folded into the M term
accounts for stimulated enhancement of the downward step.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# Variance constant of the pairwise coupling average over a uniform ball:
# <g^2> = (pi + 29/12) / (kappa_a * R)^2 in the far-field-dominated regime.
COUPLING_VARIANCE_CONST = math.pi + 29.0 / 12.0


class ConfigError(ValueError):
    """A configuration value is missing, malformed, or out of range."""


class UMode(str, enum.Enum):
    """Scope of the random modifier u in the rate formula."""

    PER_LEVEL = "per_level"              # independent draw for every level M
    PER_REALIZATION = "per_realization"  # a single draw shared by all levels


@dataclass(frozen=True)
class PhysicalParams:
    """Atomic transition constants in SI units (defaults: Rb-87 D2 line)."""

    gamma_a: float = TWO_PI * 6.02e6  # natural linewidth (rad/s)
    lambda_a: float = 780e-9          # transition wavelength (m)

    def __post_init__(self):
        if not (self.gamma_a > 0 and math.isfinite(self.gamma_a)):
            raise ConfigError(f"physics.gamma_a must be positive, got {self.gamma_a}")
        if not (self.lambda_a > 0 and math.isfinite(self.lambda_a)):
            raise ConfigError(f"physics.lambda_a must be positive, got {self.lambda_a}")

    @property
    def kappa_a(self) -> float:
        """Transition wavenumber 2*pi/lambda_a (1/m)."""
        return TWO_PI / self.lambda_a

    @property
    def tau_a(self) -> float:
        """Independent-atom lifetime 1/gamma_a (s)."""
        return 1.0 / self.gamma_a


def compute_od(n_total: int, kappa_a: float, radius: float) -> float:
    """Resonant optical depth of a uniform spherical cloud, 3*N/(kappa_a*R)^2."""
    if n_total < 0:
        raise ConfigError(f"cloud.n_total must be non-negative, got {n_total}")
    if kappa_a <= 0 or radius <= 0:
        raise ConfigError("kappa_a and radius must be positive")
    return 3.0 * n_total / (kappa_a * radius) ** 2


def radius_for_od(od: float, n_total: int, kappa_a: float) -> float:
    """Invert compute_od: the radius at which a cloud of n_total atoms has the given OD."""
    if od <= 0:
        raise ConfigError(f"cloud.od must be positive, got {od}")
    if n_total <= 0 or kappa_a <= 0:
        raise ConfigError("n_total and kappa_a must be positive")
    return math.sqrt(3.0 * n_total / od) / kappa_a


def off_resonant_factor(detuning: float) -> float:
    """Intensity suppression (2*Delta/gamma_a)^2 of scattering at detuning Delta.

    `detuning` is given in units of gamma_a.  Valid in the far-detuned regime
    where the driving is weak compared to the detuning.
    """
    return (2.0 * detuning) ** 2


@dataclass(frozen=True)
class CloudConfig:
    """Cloud geometry and excitation state for one simulation arm."""

    n_total: int           # atoms in the cloud
    f_exc: float           # excited fraction prepared by the pulse
    radius: float          # cloud radius (m)
    xi: float = 1.0        # order-unity calibration of the coupling spread
    u_mode: UMode = UMode.PER_LEVEL
    clamp_negative: bool = True  # clamp Gamma_M < 0 to zero (counted)

    def __post_init__(self):
        if not isinstance(self.n_total, (int, np.integer)) or self.n_total < 1:
            raise ConfigError(f"cloud.n_total must be a positive integer, got {self.n_total!r}")
        if not (0.0 <= self.f_exc <= 1.0):
            raise ConfigError(f"cloud.f_exc must lie in [0, 1], got {self.f_exc}")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ConfigError(f"cloud.radius must be positive, got {self.radius}")
        if not (self.xi >= 0 and math.isfinite(self.xi)):
            raise ConfigError(f"cloud.xi must be non-negative, got {self.xi}")
        if not isinstance(self.u_mode, UMode):
            raise ConfigError(f"cloud.u_mode must be a UMode, got {self.u_mode!r}")

    @property
    def n_exc(self) -> int:
        """Initial excitation number, f_exc * n_total rounded half to even."""
        return int(round(self.f_exc * self.n_total))

    def coupling_strength(self, phys: PhysicalParams) -> float:
        """Dimensionless spread amplitude c = xi*sqrt(pi + 29/12)/(kappa_a*R)."""
        return self.xi * math.sqrt(COUPLING_VARIANCE_CONST) / (phys.kappa_a * self.radius)

    def od(self, phys: PhysicalParams) -> float:
        return compute_od(self.n_total, phys.kappa_a, self.radius)


@dataclass(frozen=True)
class RateRealization:
    """One random draw of the ladder rates Gamma_M, M = 0..n_exc."""

    rates: np.ndarray      # shape (n_exc + 1,), rad/s; rates[0] == 0
    u_mode: UMode
    clamped_count: int     # levels whose raw rate was negative and clamped
    seed_tag: int = -1     # realization index within its ensemble, -1 if standalone

    @property
    def n_exc(self) -> int:
        return self.rates.shape[0] - 1


def rate_halfwidth(cloud: CloudConfig, phys: PhysicalParams, m: np.ndarray | int):
    """Half-width c*sqrt(n_exc - M)*M*gamma_a of the uniform rate spread at level M."""
    n = cloud.n_exc
    m_arr = np.asarray(m, dtype=np.float64)
    if np.any(m_arr < 0) or np.any(m_arr > n):
        raise ValueError(f"level index must lie in [0, {n}]")
    return cloud.coupling_strength(phys) * np.sqrt(n - m_arr) * m_arr * phys.gamma_a


def sample_rates(cloud: CloudConfig, phys: PhysicalParams,
                 rng: np.random.Generator, seed_tag: int = -1) -> RateRealization:
    """Draw one realization of the stochastic ladder rates.

    The stream consumption depends only on n_exc and u_mode (one uniform per
    level above the ground state, or a single shared uniform), so two clouds
    that differ only in xi or radius consume identical random numbers.
    """
    n = cloud.n_exc
    gamma = phys.gamma_a
    m_arr = np.arange(n + 1, dtype=np.float64)

    if cloud.u_mode is UMode.PER_LEVEL:
        u = rng.uniform(-1.0, 1.0, size=n)
    else:
        u = np.full(n, rng.uniform(-1.0, 1.0))

    # Width vanishes identically at M = 0 and M = n, so rates[0] == 0 and
    # rates[n] == n*gamma_a hold exactly in floating point.
    width = cloud.coupling_strength(phys) * np.sqrt(n - m_arr) * m_arr * gamma
    rates = m_arr * gamma
    if n > 0:
        rates[1:] += width[1:] * u

    negative = rates < 0.0
    clamped = int(np.count_nonzero(negative))
    if clamped and cloud.clamp_negative:
        rates[negative] = 0.0

    return RateRealization(rates=rates, u_mode=cloud.u_mode, clamped_count=clamped,
                           seed_tag=seed_tag)
