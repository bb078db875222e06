"""Direct and importance-sampling Monte Carlo for scan p-values.

Importance sampling draws a uniformly random anchor on the onset grid,
generates the recording from the exponentially tilted law around that
anchor (background Poisson elsewhere), and reweights by the mixture
likelihood ratio; the weight needs the score at every grid anchor, which
one incremental series pass per run provides.  All estimators are pure
functions of ``(parameters, seed)``: per-run streams are derived from the
master seed and the run index, so results do not depend on scheduling.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, InvalidParameterError
from .kernel import TemplateKernel
from .point_process import MultiTrain, SpikeTrain
from .rng import RngStream
from .scoring import (CROSSING_TOL, MatchConfig, ScoreSeries, count_matches,
                      score_series)
from .tilt import TiltSummary, tilt_summary

__all__ = [
    "McConfig",
    "Estimate",
    "MatchCountEstimate",
    "tilted_generate",
    "direct_mc_pvalue",
    "direct_mc_sweep",
    "importance_sampling_pvalue",
    "importance_sampling_sweep",
    "mc_match_count",
]

_STREAM_DIRECT, _STREAM_IS, _STREAM_COUNT = 0, 1, 2


@dataclass(frozen=True)
class McConfig:
    """Simulation budget and anchor grid for one estimation batch."""

    runs: int
    seed: int
    horizon: float                  # scan range a (ms)
    anchor_step: float = 0.2        # grid spacing for anchors and weights

    def __post_init__(self):
        if self.runs <= 0:
            raise ConfigError("runs must be positive")
        if self.anchor_step <= 0 or self.horizon <= 0:
            raise ConfigError("horizon and anchor_step must be positive")
        j = self.horizon / self.anchor_step
        if abs(j - round(j)) > 1e-9:
            raise ConfigError("horizon must be an integer number of anchor steps")

    @property
    def anchor_count(self) -> int:
        """J: the horizon holds anchors 0..J inclusive."""
        return int(round(self.horizon / self.anchor_step))


@dataclass(frozen=True)
class Estimate:
    """A p-value estimate with its standard error and provenance."""

    method: str
    threshold: float
    p_hat: float
    se: float
    runs: int
    seed: int
    wall_time: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_hat <= 1.0 + 1e-12 or self.se < 0:
            raise InvalidParameterError("estimate outside [0, 1] or negative SE")

    def to_dict(self) -> dict:
        # wall time stays off the record: artifacts must be byte-stable
        return {"method": self.method, "threshold": self.threshold,
                "p_hat": self.p_hat, "se": self.se,
                "runs": self.runs, "seed": self.seed}


@dataclass(frozen=True)
class MatchCountEstimate:
    """Empirical distribution of the overlap-limited match count."""

    counts: np.ndarray              # occurrences of k = 0, 1, ...
    runs: int
    seed: int
    mean: float
    mean_se: float

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.runs

    @property
    def prob_ses(self) -> np.ndarray:
        p = self.probs
        return np.sqrt(p * (1 - p) / self.runs)

    def to_dict(self) -> dict:
        return {"counts": [int(c) for c in self.counts], "runs": self.runs,
                "seed": self.seed, "mean": self.mean, "mean_se": self.mean_se}


# ----------------------------------------------------------------------
# generation


def _background_trains(rates: np.ndarray, length: float,
                       gen: np.random.Generator) -> list:
    out = []
    for lam in rates:
        n = gen.poisson(lam * length)
        out.append(np.sort(gen.uniform(0.0, length, n)))
    return out


def _tilted_trains(kernel: TemplateKernel, rates: np.ndarray, theta: float,
                   anchor: float, length: float, gen: np.random.Generator) -> list:
    f0 = kernel.score.peak
    T = kernel.window
    out = []
    for i, lam in enumerate(rates):
        parts = []
        if anchor > 0:
            n = gen.poisson(lam * anchor)
            parts.append(np.sort(gen.uniform(0.0, anchor, n)))
        n = gen.poisson(lam * math.exp(theta * f0) * T)
        u = np.sort(gen.uniform(0.0, T, n))
        keep = gen.uniform(size=n) <= np.exp(theta * (kernel.evaluate(i, u) - f0))
        parts.append(anchor + u[keep])
        tail = length - anchor - T
        if tail > 0:
            n = gen.poisson(lam * tail)
            parts.append(anchor + T + np.sort(gen.uniform(0.0, tail, n)))
        out.append(np.concatenate(parts) if parts else np.empty(0))
    return out


def _as_multitrain(time_arrays: list, length: float, rates: np.ndarray) -> MultiTrain:
    trains = []
    for t in time_arrays:
        if t.size > 1 and np.any(np.diff(t) <= 0):  # measure-zero ties
            t = np.unique(t)
        trains.append(SpikeTrain(t, (0.0, length)))
    return MultiTrain(trains, rates=rates)


def tilted_generate(kernel: TemplateKernel, rates, theta: float, anchor: float,
                    length: float, rng: RngStream) -> MultiTrain:
    """Recording whose intensity is ``rate_i * e^{theta g_i(v - anchor)}``
    inside the window at ``anchor`` and the plain background elsewhere.

    Window spikes come from thinning a dominating homogeneous process at
    ``rate_i * e^{theta f(0)}``; ``theta = 0`` reduces to the background.
    """
    if theta < 0:
        raise InvalidParameterError("only upward tilts (theta >= 0) are supported")
    if anchor < 0 or anchor + kernel.window > length + 1e-9:
        raise InvalidParameterError("tilt window must fit inside the horizon")
    rates = np.broadcast_to(np.asarray(rates, float), (kernel.dimension,)).copy()
    gen = rng.generator()
    arrays = _tilted_trains(kernel, rates, theta, anchor, length, gen)
    return _as_multitrain(arrays, length, rates)


# ----------------------------------------------------------------------
# score engines (per-batch precomputation)


class _SmoothGridEngine:
    """Grid score series for continuous kernels via per-train phase tables.

    The kernel is pre-sampled at ``phases x taps`` offsets; each data spike
    then contributes one reversed row slice, so a full series pass costs
    one vector add per spike instead of one kernel evaluation per
    (spike, anchor) pair.
    """

    PHASES = 256

    def __init__(self, kernel: TemplateKernel, step: float, horizon: float):
        self.kernel = kernel
        self.step = step
        self.horizon = horizon
        self.count = int(round(horizon / step))
        self.taps = int(math.ceil(kernel.window / step)) + 3
        self.tables = []
        sub = step / self.PHASES
        for i in range(kernel.dimension):
            offs = (np.arange(self.PHASES) * sub)[:, None] + \
                (np.arange(self.taps) * step)[None, :]
            self.tables.append(kernel.evaluate(i, offs.ravel()).reshape(
                self.PHASES, self.taps))

    def series_values(self, time_arrays: list) -> np.ndarray:
        J, step, T = self.count, self.step, self.kernel.window
        S = np.zeros(J + 1)
        sub = step / self.PHASES
        for i, ys in enumerate(time_arrays):
            tab = self.tables[i]
            if tab.shape[1] == 0 or self.kernel.template[i].size == 0:
                continue
            for y in ys:
                jhi = min(J, int(math.floor(y / step + 1e-12)))
                jlo = max(0, int(math.ceil((y - T) / step - 1e-12)))
                if jhi < jlo:
                    continue
                u0 = y - jhi * step
                k0 = int(u0 / step)
                p = int((u0 - k0 * step) / sub + 0.5)
                if p >= self.PHASES:
                    p = 0
                    k0 += 1
                n = jhi - jlo + 1
                S[jlo:jhi + 1] += tab[p, k0:k0 + n][::-1]
        return S / T

    def series(self, time_arrays: list) -> ScoreSeries:
        vals = self.series_values(time_arrays)
        times = np.arange(self.count + 1) * self.step
        return ScoreSeries(times=times, values=vals, end=self.horizon,
                           exact=False, grid=True)


class _EventEngine:
    """Exact event-driven series for piecewise-constant kernels."""

    def __init__(self, kernel: TemplateKernel, step: float, horizon: float):
        self.kernel = kernel
        self.step = step
        self.horizon = horizon
        self.count = int(round(horizon / step))
        self._anchors = np.arange(self.count + 1) * step

    def series(self, time_arrays: list) -> ScoreSeries:
        rates = np.ones(self.kernel.dimension)
        rec = _as_multitrain(time_arrays, self.horizon + self.kernel.window, rates)
        return score_series(rec, self.kernel, self.horizon)

    def anchor_values(self, series: ScoreSeries) -> np.ndarray:
        return series.sample(self._anchors)


def _make_engine(kernel: TemplateKernel, mc: McConfig):
    if kernel.score.piecewise_constant_flag:
        return _EventEngine(kernel, mc.anchor_step, mc.horizon)
    return _SmoothGridEngine(kernel, mc.anchor_step, mc.horizon)


# ----------------------------------------------------------------------
# estimators


def direct_mc_sweep(kernel: TemplateKernel, rates, config: MatchConfig,
                    mc: McConfig, thresholds: Sequence[float]) -> list:
    """Direct Monte Carlo estimates of the scan p-value, one realization
    batch shared across all thresholds."""
    rates = np.broadcast_to(np.asarray(rates, float), (kernel.dimension,)).copy()
    _check_geometry(kernel, config, mc)
    cs = np.asarray(thresholds, float)
    engine = _make_engine(kernel, mc)
    length = mc.horizon + kernel.window
    t0 = time.perf_counter()
    hits = np.zeros(cs.size)
    base = RngStream(mc.seed, _STREAM_DIRECT)
    for r in range(mc.runs):
        gen = base.child(r).generator()
        arrays = _background_trains(rates, length, gen)
        if isinstance(engine, _EventEngine):
            m = float(engine.series(arrays).values.max())
        else:
            m = float(engine.series_values(arrays).max())
        hits += m >= cs - CROSSING_TOL
    dt = time.perf_counter() - t0
    out = []
    for k, c in enumerate(cs):
        p = hits[k] / mc.runs
        se = math.sqrt(p * (1 - p) / mc.runs)
        out.append(Estimate(method="direct", threshold=float(c), p_hat=p, se=se,
                            runs=mc.runs, seed=mc.seed, wall_time=dt))
    return out


def direct_mc_pvalue(kernel: TemplateKernel, rates, config: MatchConfig,
                     mc: McConfig) -> Estimate:
    """Direct Monte Carlo estimate at the configured threshold."""
    return direct_mc_sweep(kernel, rates, config, mc, [config.threshold])[0]


def importance_sampling_sweep(kernel: TemplateKernel, rates, config: MatchConfig,
                              mc: McConfig, thresholds: Sequence[float],
                              summary: Optional[TiltSummary] = None,
                              tilt_at: Optional[float] = None) -> list:
    """Importance-sampling estimates sharing one tilted batch.

    The batch is tilted for ``tilt_at`` (default: the largest threshold,
    where variance reduction matters most); the unbiasedness of the
    mixture estimator does not depend on that choice, only its variance
    does.  Weights are combined in log space.
    """
    rates = np.broadcast_to(np.asarray(rates, float), (kernel.dimension,)).copy()
    _check_geometry(kernel, config, mc)
    cs = np.asarray(thresholds, float)
    if summary is None:
        ref = float(max(cs)) if tilt_at is None else float(tilt_at)
        summary = tilt_summary(kernel, rates, ref)
    theta = summary.tilt
    log_norm = summary.base_integral     # sum_i lam_i int(e^{theta g_i}-1)
    engine = _make_engine(kernel, mc)
    J = mc.anchor_count
    length = mc.horizon + kernel.window
    T = kernel.window

    t0 = time.perf_counter()
    vals = np.zeros((mc.runs, cs.size))
    base = RngStream(mc.seed, _STREAM_IS)
    for r in range(mc.runs):
        gen = base.child(r).generator()
        j = int(gen.integers(0, J + 1))
        arrays = _tilted_trains(kernel, rates, theta, j * mc.anchor_step, length, gen)
        if isinstance(engine, _EventEngine):
            series = engine.series(arrays)
            anchors = engine.anchor_values(series)
            m = float(series.values.max())
        else:
            anchors = engine.series_values(arrays)
            m = float(anchors.max())
        x = theta * T * anchors
        xm = x.max()
        log_weight = math.log(J + 1.0) + log_norm - (xm + math.log(np.exp(x - xm).sum()))
        vals[r] = math.exp(log_weight) * (m >= cs - CROSSING_TOL)
    dt = time.perf_counter() - t0
    out = []
    for k, c in enumerate(cs):
        col = vals[:, k]
        p = float(col.mean())
        se = float(col.std(ddof=1) / math.sqrt(mc.runs)) if mc.runs > 1 else 0.0
        out.append(Estimate(method="importance", threshold=float(c),
                            p_hat=min(p, 1.0), se=se, runs=mc.runs, seed=mc.seed,
                            wall_time=dt))
    return out


def importance_sampling_pvalue(kernel: TemplateKernel, rates, config: MatchConfig,
                               mc: McConfig,
                               summary: Optional[TiltSummary] = None) -> Estimate:
    """Importance-sampling estimate at the configured threshold (tilted
    for that same threshold unless a summary is supplied)."""
    return importance_sampling_sweep(kernel, rates, config, mc,
                                     [config.threshold], summary=summary)[0]


def mc_match_count(kernel: TemplateKernel, rates, config: MatchConfig,
                   mc: McConfig) -> MatchCountEstimate:
    """Empirical law of the overlap-limited match count by direct MC."""
    rates = np.broadcast_to(np.asarray(rates, float), (kernel.dimension,)).copy()
    _check_geometry(kernel, config, mc)
    engine = _make_engine(kernel, mc)
    length = mc.horizon + kernel.window
    counts_per_run = np.zeros(mc.runs, dtype=int)
    base = RngStream(mc.seed, _STREAM_COUNT)
    for r in range(mc.runs):
        gen = base.child(r).generator()
        arrays = _background_trains(rates, length, gen)
        series = engine.series(arrays)
        counts_per_run[r] = count_matches(series, config).matches
    hist = np.bincount(counts_per_run)
    mean = float(counts_per_run.mean())
    mean_se = float(counts_per_run.std(ddof=1) / math.sqrt(mc.runs)) if mc.runs > 1 else 0.0
    return MatchCountEstimate(counts=hist, runs=mc.runs, seed=mc.seed,
                              mean=mean, mean_se=mean_se)


def _check_geometry(kernel: TemplateKernel, config: MatchConfig, mc: McConfig):
    if abs(config.window - kernel.window) > 1e-9:
        raise ConfigError("match window must equal the kernel window")
    if abs(config.horizon - mc.horizon) > 1e-9:
        raise ConfigError("match horizon must equal the Monte Carlo horizon")
    if abs(config.grid_step - mc.anchor_step) > 1e-9:
        raise ConfigError("grid step must equal the anchor step")
