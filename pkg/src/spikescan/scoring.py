"""Sliding proximity score, scan statistics, and overlap-limited matching.

The score at onset ``t`` is the window-normalized sum of kernel values
over all recorded spikes, ``S_t = T^{-1} sum_i sum_y g_i(y - t)``.  For
piecewise-constant kernels the full score path is represented exactly as
a step function assembled by one sweep over all jump events (each data
spike contributes a translated copy of its train's kernel); integer
accumulation on the value lattice avoids any float drift across long
recordings.  For other kernels the score is evaluated on a uniform onset
grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CoverageError, InvalidParameterError, SpanError
from .kernel import TemplateKernel, detect_arithmetic
from .point_process import MultiTrain

__all__ = [
    "ScoreSeries",
    "MatchConfig",
    "MatchReport",
    "score_series",
    "score_at",
    "scan_summary",
    "count_matches",
]

# comparisons against the threshold allow this absolute slack so that
# lattice-valued scores reconstructed through floats still count exact hits
CROSSING_TOL = 1e-9


@dataclass(frozen=True)
class ScoreSeries:
    """Score path on ``[0, end]``.

    Piecewise form (``grid=False``): ``values[k]`` holds on
    ``[times[k], times[k+1])`` and the last piece extends through ``end``.
    Grid form (``grid=True``): ``values[k]`` is the score at ``times[k]``.
    ``int_values``/``unit`` carry the exact lattice representation when
    the kernel values live on one (``value = int_value * unit``).
    """

    times: np.ndarray
    values: np.ndarray
    end: float
    exact: bool
    grid: bool
    int_values: Optional[np.ndarray] = None
    unit: float = 0.0

    def __post_init__(self):
        if self.times.size != self.values.size or self.times.size == 0:
            raise InvalidParameterError("times and values must align and be nonempty")

    def sample(self, ts: np.ndarray) -> np.ndarray:
        """Score at onsets ``ts`` (piecewise lookup or grid match)."""
        ts = np.asarray(ts, float)
        if self.grid:
            step = self.times[1] - self.times[0] if self.times.size > 1 else 1.0
            idx = np.rint((ts - self.times[0]) / step).astype(int)
            if np.any(np.abs(self.times[np.clip(idx, 0, self.times.size - 1)] - ts) > 1e-9):
                raise InvalidParameterError("grid series can only be sampled on its grid")
            return self.values[idx]
        idx = np.clip(np.searchsorted(self.times, ts, side="right") - 1, 0, None)
        return self.values[idx]

    def crossing_intervals(self, c: float):
        """Maximal intervals where the score is >= c (piecewise form)."""
        above = self.values >= c - CROSSING_TOL
        idx = np.flatnonzero(above)
        if idx.size == 0:
            return np.empty(0), np.empty(0)
        brk = np.flatnonzero(np.diff(idx) > 1)
        run_first = idx[np.r_[0, brk + 1]]
        run_last = idx[np.r_[brk, idx.size - 1]]
        starts = self.times[run_first]
        sentinel = np.nextafter(self.end, np.inf)  # last piece is closed at end
        after = np.minimum(run_last + 1, self.times.size - 1)
        ends = np.where(run_last + 1 < self.times.size, self.times[after], sentinel)
        return starts, ends


@dataclass(frozen=True)
class MatchConfig:
    """Threshold, window and overlap policy for match counting."""

    threshold: float
    window: float
    horizon: float
    overlap_alpha: float = 0.5
    grid_step: float = 0.2

    def __post_init__(self):
        if not 0 < self.overlap_alpha < 1:
            raise InvalidParameterError("overlap_alpha must be in (0, 1)")
        if not self.grid_step > 0:
            raise InvalidParameterError("grid_step must be positive")
        if not self.window > 0 or not self.horizon > 0:
            raise InvalidParameterError("window and horizon must be positive")

    @property
    def refractory(self) -> float:
        """Minimum spacing between match onsets, (1 - alpha) * window."""
        return (1.0 - self.overlap_alpha) * self.window


@dataclass(frozen=True)
class MatchReport:
    """Scan outputs: running maximum, detection time, match onsets."""

    max_score: float
    detection_time: float            # +inf when the threshold is never hit
    onsets: np.ndarray
    matches: int
    refractory: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.onsets, float)
        object.__setattr__(self, "onsets", s)
        if s.size > 1 and np.any(np.diff(s) < self.refractory - 1e-9):
            raise InvalidParameterError("match onsets violate the overlap spacing")
        if self.matches != s.size:
            raise InvalidParameterError("matches must equal the number of onsets")


def score_series(recording: MultiTrain, kernel: TemplateKernel, horizon: float,
                 grid_step: float = 0.2, force_grid: bool = False) -> ScoreSeries:
    """Score path of ``recording`` against the template over ``[0, horizon]``.

    The recording must cover ``[0, horizon + window)``.  Piecewise-constant
    kernels produce the exact event-driven series unless ``force_grid``;
    anything else is evaluated on the uniform grid of step ``grid_step``.
    """
    t0, t1 = recording.horizon
    need = horizon + kernel.window
    if t0 > 0 or t1 < need - 1e-9:
        raise CoverageError(
            f"recording horizon [{t0}, {t1}) does not cover [0, {need})")
    if not horizon > 0:
        raise InvalidParameterError("horizon must be positive")
    if kernel.score.piecewise_constant_flag and not force_grid:
        return _event_series(recording, kernel, horizon)
    return _grid_series(recording, kernel, horizon, grid_step)


def _event_series(recording: MultiTrain, kernel: TemplateKernel,
                  horizon: float) -> ScoreSeries:
    T = kernel.window
    tables = kernel.constant_tables()
    exact_vals = kernel.exact_value_tables()
    unit_frac = None
    if exact_vals is not None:
        try:
            q = detect_arithmetic(kernel.score)
        except SpanError:
            q = None
        if q is not None:
            unit_frac = q

    times_parts, delta_parts = [], []
    for i, tr in enumerate(recording.trains):
        edges, vals = tables[i]
        y = tr.times
        if y.size == 0 or vals.size == 0 or (vals.size == 1 and vals[0] == 0.0):
            continue
        if unit_frac is not None:
            units = np.array([int(v / unit_frac) for v in exact_vals[i]], dtype=np.int64)
            padded = np.r_[0, units, 0]
        else:
            padded = np.r_[0.0, vals, 0.0]
        # value after crossing edge j (time y - edges[j]) minus value before
        edge_deltas = padded[:-1] - padded[1:]
        ev_times = (y[:, None] - edges[None, :]).ravel()
        ev_deltas = np.broadcast_to(edge_deltas, (y.size, edges.size)).ravel()
        times_parts.append(ev_times)
        delta_parts.append(ev_deltas)

    if not times_parts:
        zero = np.zeros(1)
        return ScoreSeries(times=np.zeros(1), values=zero, end=horizon, exact=True,
                           grid=False,
                           int_values=np.zeros(1, np.int64) if unit_frac else None,
                           unit=float(unit_frac) / T if unit_frac else 0.0)

    ev_t = np.concatenate(times_parts)
    ev_d = np.concatenate(delta_parts)
    before = ev_t <= 0.0
    init = ev_d[before].sum()
    keep = (~before) & (ev_t <= horizon)
    ev_t, ev_d = ev_t[keep], ev_d[keep]
    order = np.argsort(ev_t, kind="stable")
    ev_t, ev_d = ev_t[order], ev_d[order]
    if ev_t.size:
        fresh = np.r_[True, ev_t[1:] != ev_t[:-1]]
        starts = np.flatnonzero(fresh)
        ev_d = np.add.reduceat(ev_d, starts)
        ev_t = ev_t[fresh]
    cum = init + np.cumsum(ev_d) if ev_t.size else np.empty(0, ev_d.dtype)
    times = np.r_[0.0, ev_t]
    if unit_frac is not None:
        ints = np.r_[np.int64(init), cum].astype(np.int64)
        unit = float(unit_frac) / T
        return ScoreSeries(times=times, values=ints * unit, end=horizon,
                           exact=True, grid=False, int_values=ints, unit=unit)
    vals = np.r_[float(init), cum] / T
    return ScoreSeries(times=times, values=vals, end=horizon, exact=True, grid=False)


def _grid_series(recording: MultiTrain, kernel: TemplateKernel, horizon: float,
                 step: float) -> ScoreSeries:
    n = int(np.floor(horizon / step + 1e-9))
    anchors = np.arange(n + 1) * step
    T = kernel.window
    S = np.zeros(n + 1)
    for i, tr in enumerate(recording.trains):
        if kernel.template[i].size == 0:
            continue
        for y in tr.times:
            jlo = max(0, int(np.ceil((y - T) / step - 1e-12)))
            jhi = min(n, int(np.floor(y / step + 1e-12)))
            if jhi < jlo:
                continue
            u = y - anchors[jlo:jhi + 1]
            S[jlo:jhi + 1] += kernel.evaluate(i, u)
    return ScoreSeries(times=anchors, values=S / T, end=float(anchors[-1]),
                       exact=False, grid=True)


def score_at(recording: MultiTrain, kernel: TemplateKernel, onset: float) -> float:
    """Score of a single onset, evaluated directly from the definition."""
    total = 0.0
    for i, tr in enumerate(recording.trains):
        y = tr.times
        if y.size == 0 or kernel.template[i].size == 0:
            continue
        inside = y[(y >= onset) & (y < onset + kernel.window)]
        if inside.size:
            total += float(kernel.evaluate(i, inside - onset).sum())
    return total / kernel.window


def scan_summary(series: ScoreSeries, threshold: float):
    """Running maximum and first crossing time ``(M, V)``; ``V`` is
    ``+inf`` when the threshold is never reached on the series range."""
    m = float(series.values.max())
    hit = series.values >= threshold - CROSSING_TOL
    if not hit.any():
        return m, float("inf")
    return m, float(series.times[int(np.argmax(hit))])


def count_matches(series: ScoreSeries, config: MatchConfig) -> MatchReport:
    """Overlap-limited match counting.

    Each new match onset is the first time after the previous onset plus
    the refractory spacing ``(1 - alpha) * window`` at which the score
    reaches the threshold; the count is the number of onsets within the
    series range.
    """
    c = config.threshold
    m, v = scan_summary(series, c)
    onsets = []
    if np.isfinite(v):
        if series.grid:
            cross = series.times[series.values >= c - CROSSING_TOL]
            x = cross[0]
            while True:
                onsets.append(float(x))
                nxt = np.searchsorted(cross, x + config.refractory, side="right")
                if nxt >= cross.size:
                    break
                x = cross[nxt]
        else:
            starts, ends = series.crossing_intervals(c)
            x = starts[0]
            while True:
                onsets.append(float(x))
                target = x + config.refractory
                k = np.searchsorted(ends, target, side="right")
                if k >= starts.size:
                    break
                x = max(starts[k], target)
                if x > series.end:
                    break
    sig = np.asarray(onsets)
    return MatchReport(max_score=m, detection_time=v, onsets=sig,
                       matches=int(sig.size), refractory=config.refractory)
