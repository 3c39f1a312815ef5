"""Reductions from simulated or measured traces to reported quantities.

Everything here operates on a plain Trace (a sampled time series) and is free
of simulation state, so the same code path serves ensemble means and loaded
experimental records.  Decay times are defined through the local logarithmic
slope, tau(t) = -1 / (d ln V / dt), evaluated with the second-order centered
stencil on the stored grid.  Slopes at the first and last samples would need
one-sided stencils and are deliberately not provided.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

# Relative guard separating "faster than the independent rate" from roundoff.
SUPER_RATE_GUARD = 1e-9

# Default averaging window for decay-time statistics, in units of tau_a.
DECAY_WINDOW_TAU = 2.3


@dataclass(frozen=True)
class Trace:
    """A sampled scalar time series with strictly increasing times (s)."""

    times: np.ndarray
    values: np.ndarray
    label: str = ""
    normalized: bool = False
    truncated_at: Optional[int] = None  # original index where a log cut happened

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if t.ndim != 1 or v.ndim != 1 or t.shape != v.shape:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if t.size < 1:
            raise ValueError("trace must contain at least one sample")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("trace times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.times.size

    @property
    def span(self) -> float:
        return float(self.times[-1] - self.times[0])


@dataclass(frozen=True)
class DecayTimeStats:
    """Windowed decay-time summary: mean and spread of tau samples."""

    window: Tuple[float, float]  # (t_lo, t_hi) in s
    mean_tau: float              # s
    std_tau: float               # population standard deviation, s
    n_samples: int

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise ValueError("window must satisfy t_lo < t_hi")
        if self.n_samples < 2:
            raise ValueError("decay-time statistics need at least 2 samples")
        if not self.std_tau >= 0.0:
            raise ValueError("std_tau must be non-negative")

    def to_json_dict(self) -> dict:
        """JSON form with times in ns."""
        return {
            "window_ns": [self.window[0] * 1e9, self.window[1] * 1e9],
            "mean_tau_ns": self.mean_tau * 1e9,
            "std_tau_ns": self.std_tau * 1e9,
            "n_samples": self.n_samples,
        }


def normalize(trace: Trace) -> Trace:
    """Divide a trace by its first sample so that value(0) = 1.

    Idempotent.  Raises ValueError when the first sample is not positive,
    since the normalization would be meaningless.
    """
    v0 = float(trace.values[0])
    if not v0 > 0.0:
        raise ValueError(f"cannot normalize: first sample is {v0}, expected > 0")
    return Trace(times=trace.times, values=trace.values / v0,
                 label=trace.label, normalized=True,
                 truncated_at=trace.truncated_at)


def log_trace(trace: Trace) -> Trace:
    """Pointwise natural log, truncated at the first nonpositive sample.

    Truncation is not an error; the cut index is recorded on the returned
    trace so downstream consumers can tell a short record from a clean one.
    """
    v = trace.values
    bad = np.nonzero(v <= 0.0)[0]
    cut = int(bad[0]) if bad.size else None
    if cut == 0:
        raise ValueError("first sample is nonpositive, nothing to take the log of")
    end = cut if cut is not None else v.size
    label = f"ln_{trace.label}" if trace.label else "ln"
    return Trace(times=trace.times[:end], values=np.log(v[:end]),
                 label=label, normalized=trace.normalized, truncated_at=cut)


def _log_slope_at(times: np.ndarray, values: np.ndarray, i: int) -> float:
    """d ln V / dt at interior index i, second-order on a nonuniform grid."""
    n = times.size
    if i <= 0 or i >= n - 1:
        raise ValueError(f"index {i} is a boundary point; slope needs both neighbors")
    v = values[i - 1:i + 2]
    if not np.all(v > 0.0):
        raise ValueError(f"nonpositive values near index {i}; log slope undefined")
    lv = np.log(v)
    h1 = times[i] - times[i - 1]
    h2 = times[i + 1] - times[i]
    return float((h1 * h1 * lv[2] - h2 * h2 * lv[0]
                  + (h2 * h2 - h1 * h1) * lv[1]) / (h1 * h2 * (h1 + h2)))


def instantaneous_tau(trace: Trace, t: float) -> float:
    """Local decay time -1/(d ln V/dt) at the grid point nearest to t.

    The time t must map to an interior sample and the three samples around
    it must be positive.  A locally flat trace gives +inf.
    """
    i = int(np.argmin(np.abs(trace.times - t)))
    slope = _log_slope_at(trace.times, trace.values, i)
    if slope == 0.0:
        return math.inf
    return -1.0 / slope


def _interior_rates(trace: Trace) -> Tuple[np.ndarray, np.ndarray]:
    """Decay rates -d ln V/dt at every interior grid point.

    Returns (times, rates); entries where the local 3-point neighborhood
    contains a nonpositive value are NaN.
    """
    t, v = trace.times, trace.values
    n = t.size
    rates = np.full(n - 2, np.nan)
    ok = (v[:-2] > 0.0) & (v[1:-1] > 0.0) & (v[2:] > 0.0)
    idx = np.nonzero(ok)[0]
    if idx.size:
        lv = np.log(np.where(v > 0.0, v, 1.0))
        h1 = t[idx + 1] - t[idx]
        h2 = t[idx + 2] - t[idx + 1]
        slope = (h1 * h1 * lv[idx + 2] - h2 * h2 * lv[idx]
                 + (h2 * h2 - h1 * h1) * lv[idx + 1]) / (h1 * h2 * (h1 + h2))
        rates[idx] = -slope
    return t[1:-1], rates


def mean_decay_time(trace: Trace, window: Optional[Tuple[float, float]] = None,
                    *, tau_a: Optional[float] = None) -> DecayTimeStats:
    """Mean and population spread of tau over interior grid points in a window.

    When `window` is omitted the conventional (0, 2.3 tau_a) analysis window
    is used, which requires `tau_a`.
    """
    if window is None:
        if tau_a is None:
            raise ValueError("either an explicit window or tau_a must be given")
        window = (0.0, DECAY_WINDOW_TAU * tau_a)
    t_lo, t_hi = float(window[0]), float(window[1])
    if not t_lo < t_hi:
        raise ValueError(f"window must satisfy t_lo < t_hi, got ({t_lo}, {t_hi})")
    if t_lo < trace.times[0] or t_hi > trace.times[-1]:
        raise ValueError("window extends outside the trace domain")

    times, rates = _interior_rates(trace)
    inside = (times >= t_lo) & (times <= t_hi) & np.isfinite(rates) & (rates != 0.0)
    taus = 1.0 / rates[inside]
    if taus.size < 2:
        raise ValueError(f"only {taus.size} valid tau samples in window, need >= 2")
    return DecayTimeStats(window=(t_lo, t_hi),
                          mean_tau=float(np.mean(taus)),
                          std_tau=float(np.std(taus)),
                          n_samples=int(taus.size))


def transition_time(trace: Trace, tau_a: float,
                    hold: Optional[float] = None) -> Optional[float]:
    """First time the local tau rises through tau_a and stays there.

    Scans the interior decay rates for the first point that is no longer
    faster than the independent rate (within a relative guard) after at
    least one earlier point was strictly faster, and that stays at or above
    tau_a for the following `hold` interval (default 0.5 tau_a).  Returns
    None when no such sustained crossing exists, which is the verdict for a
    pure exponential.
    """
    if not tau_a > 0.0:
        raise ValueError(f"tau_a must be positive, got {tau_a}")
    if hold is None:
        hold = 0.5 * tau_a
    if trace.span < 3.0 * tau_a:
        raise ValueError("transition analysis needs a record spanning >= 3 tau_a")

    times, rates = _interior_rates(trace)
    thr = (1.0 + SUPER_RATE_GUARD) / tau_a
    super_mask = rates > thr  # NaN compares False, i.e. "not super"

    seen_super = False
    for i in range(times.size):
        if super_mask[i]:
            seen_super = True
            continue
        if not seen_super:
            continue
        # Candidate crossing: previously super, now at or above tau_a.
        t_star = times[i]
        t_end = t_star + hold
        if t_end > trace.times[-1]:
            return None  # cannot verify the hold inside the record
        k = i
        sustained = True
        while k < times.size and times[k] <= t_end:
            if super_mask[k] or not np.isfinite(rates[k]):
                sustained = False
                break
            k += 1
        if sustained:
            return float(t_star)
        seen_super = False  # the dip below tau_a did not hold; rearm
    return None
