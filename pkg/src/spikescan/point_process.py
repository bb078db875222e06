"""Spike-train containers, generative simulators, and the exact likelihood.

Spike trains are finite ascending point patterns on a half-open horizon
``[t0, t1)``, with times in milliseconds.  Three simulators are provided:
a constant-rate Poisson process, a dead-time renewal process, and the
modulated process whose conditional intensity is the product of a free
firing rate ``s(t)`` and a recovery factor ``r(time since last spike)``.
The exact log-likelihood of a realization under the modulated model is
``janossy_log_density``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .errors import InvalidParameterError, ModelError
from .rng import RngStream
from ._quad import gauss_legendre_segment

if TYPE_CHECKING:  # pragma: no cover
    from .intensity_model import IntensityPair

__all__ = [
    "SpikeTrain",
    "MultiTrain",
    "RngStream",
    "simulate_poisson",
    "simulate_renewal_deadtime",
    "simulate_modulated",
    "janossy_log_density",
]


@dataclass(frozen=True)
class SpikeTrain:
    """Ascending event times on a half-open horizon.

    Parameters
    ----------
    times : array_like
        Strictly increasing event times (ms), all inside ``horizon``.
    horizon : tuple of float
        Half-open observation interval ``[t0, t1)``, ``t1 > t0``.
    """

    times: np.ndarray
    horizon: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        t0, t1 = float(self.horizon[0]), float(self.horizon[1])
        object.__setattr__(self, "horizon", (t0, t1))
        if not t1 > t0:
            raise InvalidParameterError(f"horizon [{t0}, {t1}) has nonpositive length")
        if t.ndim != 1:
            raise InvalidParameterError("times must be one-dimensional")
        if t.size:
            if np.any(np.diff(t) <= 0):
                raise InvalidParameterError("times must be strictly increasing")
            if t[0] < t0 or t[-1] >= t1:
                raise InvalidParameterError("every time must lie in [t0, t1)")

    @property
    def length(self) -> float:
        return self.horizon[1] - self.horizon[0]

    @property
    def count(self) -> int:
        return int(self.times.size)

    def shifted(self, offset: float) -> "SpikeTrain":
        """Same pattern translated by ``offset``."""
        t0, t1 = self.horizon
        return SpikeTrain(self.times + offset, (t0 + offset, t1 + offset))


@dataclass(frozen=True)
class MultiTrain:
    """A vector of spike trains sharing one horizon.

    ``rates`` optionally records the per-train background intensities
    (ms^-1) under which the recording was, or is to be, generated.
    """

    trains: Sequence[SpikeTrain]
    rates: Optional[np.ndarray] = None

    def __post_init__(self):
        trains = tuple(self.trains)
        object.__setattr__(self, "trains", trains)
        if not trains:
            raise InvalidParameterError("MultiTrain needs at least one train")
        h = trains[0].horizon
        for tr in trains[1:]:
            if tr.horizon != h:
                raise InvalidParameterError("all trains must share one horizon")
        if self.rates is not None:
            r = np.asarray(self.rates, dtype=float)
            object.__setattr__(self, "rates", r)
            if r.shape != (len(trains),):
                raise InvalidParameterError("need one rate per train")
            if np.any(r <= 0):
                raise InvalidParameterError("rates must be strictly positive")

    @property
    def horizon(self) -> tuple:
        return self.trains[0].horizon

    @property
    def dimension(self) -> int:
        return len(self.trains)

    @property
    def total_count(self) -> int:
        return sum(tr.count for tr in self.trains)


def simulate_poisson(rate: float, length: float, rng: RngStream) -> SpikeTrain:
    """Homogeneous Poisson realization on ``[0, length)``.

    Parameters
    ----------
    rate : float
        Intensity in events per ms, ``>= 0``.
    length : float
        Horizon length in ms, ``> 0``.
    rng : RngStream
        Source of randomness; the output is a pure function of it.
    """
    if rate < 0:
        raise InvalidParameterError("rate must be nonnegative")
    if not length > 0:
        raise InvalidParameterError("length must be positive")
    gen = rng.generator()
    n = gen.poisson(rate * length)
    times = np.sort(gen.uniform(0.0, length, size=n))
    # ties have probability zero but would violate the container invariant
    times = _break_ties(times, length)
    return SpikeTrain(times, (0.0, length))


def simulate_renewal_deadtime(
    scale: float, deadtime: float, length: float, rng: RngStream
) -> SpikeTrain:
    """Renewal process with gaps ``deadtime + Exponential(scale)``.

    The first gap is measured from 0, so every gap including the first
    is at least ``deadtime``.
    """
    if not scale > 0:
        raise InvalidParameterError("scale must be positive")
    if deadtime < 0:
        raise InvalidParameterError("deadtime must be nonnegative")
    if not length > 0:
        raise InvalidParameterError("length must be positive")
    gen = rng.generator()
    mean_gap = deadtime + scale
    out = []
    t = 0.0
    block = max(16, int(length / mean_gap * 1.5) + 16)
    while True:
        gaps = deadtime + gen.exponential(scale, size=block)
        cum = t + np.cumsum(gaps)
        inside = cum[cum < length]
        out.append(inside)
        if inside.size < block:
            break
        t = cum[-1]
    times = np.concatenate(out) if out else np.empty(0)
    return SpikeTrain(times, (0.0, length))


def simulate_modulated(model: "IntensityPair", length: float, rng: RngStream) -> SpikeTrain:
    """Realization of the modulated counting process by thinning.

    The conditional intensity is ``s(t)`` before the first event and
    ``s(t) * r(t - last event)`` afterwards.  Candidate points are drawn
    from a dominating homogeneous process with rate
    ``sup s * max(1, sup r)`` and accepted with probability
    ``intensity / dominating rate``, which is exact (no discretization).
    """
    if not length > 0:
        raise InvalidParameterError("length must be positive")
    if length > model.window + 1e-12:
        raise ModelError("model is defined on a shorter horizon than requested")
    s_max = model.free_rate_bound()
    r_max = model.recovery_bound()
    if not np.isfinite(s_max) or not np.isfinite(r_max):
        raise ModelError("intensity bound is not finite")
    lam_bar = s_max * max(1.0, r_max)
    if lam_bar == 0.0:
        return SpikeTrain(np.empty(0), (0.0, length))
    gen = rng.generator()
    times = []
    t = 0.0
    last = None
    while True:
        t += gen.exponential(1.0 / lam_bar)
        if t >= length:
            break
        lam_t = float(model.free_rate_at(t))
        if last is not None:
            lam_t *= float(model.recovery_at(t - last))
        if lam_t < 0:
            raise ModelError("negative intensity evaluation")
        if lam_t > lam_bar * (1 + 1e-9):
            raise ModelError("intensity exceeds its dominating bound")
        if gen.uniform() * lam_bar <= lam_t:
            times.append(t)
            last = t
    return SpikeTrain(np.asarray(times), (0.0, length))


def janossy_log_density(model: "IntensityPair", train: SpikeTrain) -> float:
    """Exact log-likelihood of ``train`` under the modulated model.

    Returns ``-inf`` when any event factor vanishes (for example a gap
    inside the dead time); that is a legal objective value, not an error.
    The recovery factor is 1 before the first event.
    """
    t0, t1 = train.horizon
    if abs(t0) > 1e-12:
        raise InvalidParameterError("train horizon must start at 0")
    if t1 > model.window + 1e-9:
        raise ModelError("train horizon exceeds the model horizon")
    w = train.times
    T = t1

    with np.errstate(divide="ignore"):
        s_at = model.free_rate_at(w) if w.size else np.empty(0)
        if np.any(s_at <= 0):
            return float("-inf")
        log_terms = float(np.sum(np.log(s_at)))
        if w.size >= 2:
            r_at = model.recovery_at(np.diff(w))
            if np.any(r_at <= 0):
                return float("-inf")
            log_terms += float(np.sum(np.log(r_at)))

    integral = _compensator(model, w, T)
    return log_terms - integral


def _compensator(model: "IntensityPair", w: np.ndarray, T: float) -> float:
    """``integral of s(t) r(t - last event) dt`` over [0, T), r=1 before w_1.

    Each inter-event segment is cut at the spline knots of both factors
    (the integrand is polynomial between cuts, so the fixed rule is exact).
    """
    s_knots = np.asarray(getattr(model.free_rate, "interior_knots", lambda: ())())
    r_knots = np.asarray(getattr(model.recovery, "interior_knots", lambda: ())())

    def piece(lo, hi, shift=None):
        cuts = [lo, hi]
        cuts.extend(k for k in s_knots if lo < k < hi)
        if shift is not None:
            cuts.extend(shift + k for k in r_knots if lo < shift + k < hi)
        cuts = np.unique(cuts)
        acc = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            x, wt = gauss_legendre_segment(a, b)
            f = model.free_rate_at(x)
            if shift is not None:
                f = f * model.recovery_at(x - shift)
            acc += float(np.dot(wt, f))
        return acc

    total = 0.0
    first = float(w[0]) if w.size else T
    if first > 0:
        total += piece(0.0, min(first, T))
    theta = model.deadtime
    ends = np.append(w[1:], T)
    for a, b in zip(w, ends):
        lo = a + theta  # r vanishes on the dead time; integrand is 0 there
        if lo >= b:
            continue
        total += piece(lo, b, shift=a)
    return total


def _break_ties(times: np.ndarray, length: float) -> np.ndarray:
    """Perturb any exactly tied draws; keeps the container invariant."""
    if times.size < 2 or np.all(np.diff(times) > 0):
        return times
    eps = np.spacing(length)
    for i in range(1, times.size):
        if times[i] <= times[i - 1]:
            times[i] = np.nextafter(times[i - 1], np.inf)
    return times[times < length]
