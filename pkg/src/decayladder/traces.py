"""Measured-trace ingestion and the one-parameter shape-factor fit.

File conventions: CSV with a header row, first column t_ns, second column
the recorded value (photon counts or pulse intensity); metadata travels in
a JSON sidecar next to the CSV.  Times are nanoseconds in files and seconds
everywhere in memory.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .ensemble import EnsembleConfig, run_ensemble, with_xi
from .observables import Trace

FIT_WINDOW_TAU = 9.0          # fitting window upper edge, units of tau_a
PULSE_OFF_FRACTION = 0.10     # "pulse over" threshold relative to its peak
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def read_trace_csv(path) -> Trace:
    """Load a two-column trace file (t_ns, value) into a Trace in seconds."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty trace file") from None
        if len(header) != 2 or header[0].strip() != "t_ns":
            raise ValueError(f"{path}: expected header 't_ns,<value>', got {header!r}")
        label = header[1].strip()
        times, values = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                times.append(float(row[0]))
                values.append(float(row[1]))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric entry {row!r}") from None
    t = np.asarray(times) * 1e-9
    v = np.asarray(values)
    if t.size < 2:
        raise ValueError(f"{path}: need at least 2 samples, got {t.size}")
    if not np.all(np.diff(t) > 0):
        raise ValueError(f"{path}: t_ns must be strictly increasing")
    if np.any(v < 0):
        raise ValueError(f"{path}: negative values; subtract background explicitly")
    return Trace(times=t, values=v, label=label)


def read_sidecar(trace_path) -> Optional[dict]:
    """Metadata JSON living next to a trace CSV, or None when absent."""
    base, _ = os.path.splitext(os.fspath(trace_path))
    sidecar = base + ".json"
    if not os.path.exists(sidecar):
        return None
    with open(sidecar) as fh:
        return json.load(fh)


def find_t_zero(pulse: Trace) -> float:
    """Time when the excitation pulse has dropped below 10% of its peak.

    Returns the first sample time after the global peak where the intensity
    is under the threshold.  Raises when the pulse never falls that far
    inside the record (including a peak on the very last sample).
    """
    v = pulse.values
    peak = int(np.argmax(v))
    if peak == v.size - 1:
        raise ValueError("pulse peak sits on the last sample; no post-peak region")
    tail = v[peak + 1:]
    below = np.nonzero(tail < PULSE_OFF_FRACTION * v[peak])[0]
    if below.size == 0:
        raise ValueError("pulse never drops below 10% of its peak in the record")
    return float(pulse.times[peak + 1 + below[0]])


def pulse_onset(pulse: Trace) -> float:
    """Time of the first sample above 10% of the pulse peak (pulse start)."""
    v = pulse.values
    above = np.nonzero(v > PULSE_OFF_FRACTION * v.max())[0]
    if above.size == 0:
        raise ValueError("pulse trace is identically zero")
    return float(pulse.times[above[0]])


def subtract_background(trace: Trace, t_cut: float) -> Tuple[Trace, float]:
    """Remove the mean dark-count level estimated from samples before t_cut.

    Values that dip below the estimated level are floored at zero (negative
    count rates carry no signal).  Returns the corrected trace and the level.
    """
    mask = trace.times < t_cut
    if not np.any(mask):
        return trace, 0.0
    level = float(np.mean(trace.values[mask]))
    corrected = np.maximum(trace.values - level, 0.0)
    return Trace(times=trace.times, values=corrected, label=trace.label), level


def rezero(trace: Trace, t0: float) -> Trace:
    """Keep samples at or after t0 and shift the clock so t0 becomes 0."""
    mask = trace.times >= t0
    if np.count_nonzero(mask) < 2:
        raise ValueError(f"fewer than 2 samples remain at or after t0 = {t0}")
    return Trace(times=trace.times[mask] - t0, values=trace.values[mask],
                 label=trace.label)


def energy_from_power(power: Trace) -> Trace:
    """Stored energy reconstructed from emitted power, normalized to E(0)=1.

    Assumes the record captures essentially the whole decay: the initial
    energy is the full trapezoidal integral of P, so the tail truncation
    bias is e^(-T/tau) for a record of length T.
    """
    v = power.values
    if np.any(v < 0):
        raise ValueError("power trace must be nonnegative")
    cum = cumulative_trapezoid(v, power.times, initial=0.0)
    total = cum[-1]
    if not total > 0.0:
        raise ValueError("power trace integrates to zero; no energy to reconstruct")
    return Trace(times=power.times, values=1.0 - cum / total,
                 label="E", normalized=True)


@dataclass(frozen=True)
class FitResult:
    """Outcome of the one-dimensional shape-factor fit."""

    xi_star: float
    residual: float              # sum of squared ln-E differences in the window
    window: Tuple[float, float]  # s
    n_realizations: int
    master_seed: int
    n_evaluations: int

    def __post_init__(self):
        if self.xi_star < 0.0:
            raise ValueError("xi_star must be non-negative")
        if self.residual < 0.0:
            raise ValueError("residual must be non-negative")

    def to_json_dict(self) -> dict:
        return {
            "xi_star": self.xi_star,
            "residual": self.residual,
            "window_ns": [self.window[0] * 1e9, self.window[1] * 1e9],
            "n_realizations": self.n_realizations,
            "master_seed": self.master_seed,
            "n_evaluations": self.n_evaluations,
        }


def fit_xi(target: Trace, base: EnsembleConfig,
           bounds: Tuple[float, float] = (0.0, 2.0),
           xtol: Optional[float] = None,
           threads: Optional[int] = None) -> FitResult:
    """Golden-section fit of the shape factor against a measured energy trace.

    Minimizes the sum of squared differences between ln E_sim(t; xi) and
    ln E_target(t) at the target's sample points inside (0, 9 tau_a).  Every
    xi evaluation reuses the same master seed, so the realizations underlying
    the objective are common random numbers and the objective is a
    deterministic, quasi-smooth function of xi.  Derivative-free and slow:
    each evaluation is a full ensemble; expect ~17 of them.
    """
    lo, hi = float(bounds[0]), float(bounds[1])
    if not (0.0 <= lo < hi):
        raise ValueError(f"xi bounds must satisfy 0 <= lo < hi, got ({lo}, {hi})")
    if xtol is None:
        xtol = 1e-3 * (hi - lo)

    tau_a = base.phys.tau_a
    window = (0.0, FIT_WINDOW_TAU * tau_a)
    if target.times[0] > window[0] or target.times[-1] < window[1]:
        raise ValueError("target trace does not cover the fit window (0, 9 tau_a)")
    sim_times = base.grid.output_times
    if sim_times[-1] < window[1]:
        raise ValueError("simulation grid does not cover the fit window (0, 9 tau_a)")

    sel = (target.times >= window[0]) & (target.times <= window[1])
    t_pts = target.times[sel]
    v_pts = target.values[sel] / target.values[0]  # rescale-invariant objective
    if np.any(v_pts <= 0.0):
        raise ValueError("target energy hits zero inside the fit window; "
                         "objective would be non-finite")
    ln_target = np.log(v_pts)

    cache: dict = {}

    def objective(xi: float) -> float:
        if xi in cache:
            return cache[xi]
        summary = run_ensemble(with_xi(base, xi), threads=threads)
        e = summary.mean_energy / summary.mean_energy[0]
        if np.any(e[sim_times <= window[1]] <= 0.0):
            raise ValueError(f"simulated energy hit zero inside the fit window at xi={xi}")
        ln_sim = np.interp(t_pts, sim_times, np.log(e))
        val = float(np.sum((ln_sim - ln_target) ** 2))
        cache[xi] = val
        return val

    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = objective(c), objective(d)
    while (b - a) > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = objective(d)

    xi_star = min(cache, key=cache.get)
    return FitResult(xi_star=xi_star, residual=cache[xi_star], window=window,
                     n_realizations=base.n_realizations,
                     master_seed=base.master_seed, n_evaluations=len(cache))
