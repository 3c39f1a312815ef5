"""Stochastic rate-ladder simulations of collective photon emission from
dilute cold-atom clouds: superradiant early decay, subradiant tails, and the
transition between them, driven by random level-to-level decay rates whose
spread mirrors the eigenvalue statistics of dipole-dipole exchange couplings.
"""

from ._kernels import BACKEND
from .physics import (
    COUPLING_VARIANCE_CONST,
    CloudConfig,
    ConfigError,
    PhysicalParams,
    RateRealization,
    UMode,
    compute_od,
    off_resonant_factor,
    radius_for_od,
    rate_halfwidth,
    sample_rates,
)
from .ladder import (
    IntegrationError,
    Integrator,
    SimGrid,
    Trajectory,
    bateman_closed_form,
    integrate,
    ladder_rhs,
)
from .observables import (
    DecayTimeStats,
    Trace,
    instantaneous_tau,
    log_trace,
    mean_decay_time,
    normalize,
    transition_time,
)
from .ensemble import (
    EnsembleConfig,
    EnsembleSummary,
    SweepRow,
    realization_stream,
    resolve_threads,
    run_ensemble,
    sweep,
    with_xi,
    write_sweep_csv,
)
from .exchange import (
    AtomCloudSample,
    CouplingMatrix,
    OracleReport,
    SpectrumResult,
    build_couplings,
    build_subspace_hamiltonian,
    geometric_coupling,
    oracle_run,
    sample_cloud,
    spectrum,
)
from .traces import (
    FitResult,
    energy_from_power,
    find_t_zero,
    fit_xi,
    pulse_onset,
    read_sidecar,
    read_trace_csv,
    rezero,
    subtract_background,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "COUPLING_VARIANCE_CONST",
    "AtomCloudSample",
    "CloudConfig",
    "ConfigError",
    "CouplingMatrix",
    "DecayTimeStats",
    "EnsembleConfig",
    "EnsembleSummary",
    "FitResult",
    "IntegrationError",
    "Integrator",
    "OracleReport",
    "PhysicalParams",
    "RateRealization",
    "SimGrid",
    "SpectrumResult",
    "SweepRow",
    "Trace",
    "Trajectory",
    "UMode",
    "bateman_closed_form",
    "build_couplings",
    "build_subspace_hamiltonian",
    "compute_od",
    "energy_from_power",
    "find_t_zero",
    "fit_xi",
    "geometric_coupling",
    "instantaneous_tau",
    "integrate",
    "ladder_rhs",
    "log_trace",
    "mean_decay_time",
    "normalize",
    "off_resonant_factor",
    "oracle_run",
    "pulse_onset",
    "radius_for_od",
    "rate_halfwidth",
    "read_sidecar",
    "read_trace_csv",
    "realization_stream",
    "resolve_threads",
    "rezero",
    "run_ensemble",
    "sample_cloud",
    "sample_rates",
    "spectrum",
    "subtract_background",
    "sweep",
    "transition_time",
    "with_xi",
    "write_sweep_csv",
    "__version__",
]
