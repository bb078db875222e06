"""Analytic scan-statistic machinery: exponential tilting and p-values.

For a threshold ``c`` above the mean score, the tilt parameter solves the
tilted-mean identity (the exponentially reweighted score has mean exactly
``c``), giving the large-deviation exponent via a Legendre transform.  A
clump-rate constant then converts the exponent into boundary-crossing
intensities: for continuous kernels it comes from the joint local limit
of the score and its slope; for kernels with jumps it involves the
conjugate jump distribution, a random-walk overshoot factor, and a
lattice correction.  The three output laws are exponential (detection
time), Gumbel (running maximum) and Poisson (match count).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import (BranchError, DivergenceError, InvalidParameterError,
                     ModelError, SpanError, SubcriticalThresholdError)
from .kernel import TemplateKernel, detect_arithmetic, jump_span, kernel_integrals
from .rng import RngStream

__all__ = [
    "TiltSummary",
    "JumpDistribution",
    "tilt_summary",
    "jump_distribution",
    "overshoot_factor",
    "lattice_factor",
    "scan_pvalue",
    "gumbel_pvalue",
    "gumbel_z",
    "critical_threshold",
    "match_count_law",
    "MatchCountLaw",
    "round_threshold",
]


@dataclass(frozen=True)
class JumpDistribution:
    """Jump-size laws of the score path at a given tilt.

    ``probs`` weights each jump size by the post-jump kernel level (the
    law of the local walk increments under the tilted measure);
    ``conjugate_probs`` weights by the pre-jump level and drives the
    ascending walk whose overshoot enters the clump rate.  The two are
    conjugate: ``conjugate = ratio * e^{tilt * x} * probs``.
    """

    values: np.ndarray
    probs: np.ndarray
    conjugate_probs: np.ndarray
    span: Optional[Fraction]
    normalizer_ratio: float
    values_exact: Optional[tuple] = None

    def __post_init__(self):
        for p in (self.probs, self.conjugate_probs):
            if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-9:
                raise InvalidParameterError("jump probabilities must be positive and sum to 1")

    def conjugate_mean(self) -> float:
        return float(np.dot(self.values, self.conjugate_probs))


@dataclass(frozen=True)
class TiltSummary:
    """Everything the analytic approximations need for one threshold."""

    threshold: float
    mean_score: float
    tilt: float
    rate: float
    score_var: float
    slope_var: float
    branch: str
    clump_rate: float
    window: float
    rates: np.ndarray
    base_integral: float          # sum_i lam_i int(e^{tilt g_i} - 1) du
    jumps: Optional[JumpDistribution] = None
    value_span: Optional[Fraction] = None
    jump_span: Optional[Fraction] = None
    overshoot: float = 1.0
    overshoot_se: float = 0.0
    lattice_correction: float = 1.0
    solver_residual: float = 0.0

    def to_dict(self) -> dict:
        d = {
            "threshold": self.threshold,
            "mean_score": self.mean_score,
            "tilt": self.tilt,
            "rate": self.rate,
            "score_var": self.score_var,
            "slope_var": self.slope_var,
            "branch": self.branch,
            "clump_rate": self.clump_rate,
            "window": self.window,
            "rates": list(map(float, self.rates)),
            "base_integral": self.base_integral,
            "solver_residual": self.solver_residual,
        }
        if self.branch == "discontinuous":
            d.update({
                "value_span": None if self.value_span is None else str(self.value_span),
                "jump_span": None if self.jump_span is None else str(self.jump_span),
                "overshoot": self.overshoot,
                "overshoot_se": self.overshoot_se,
                "lattice_correction": self.lattice_correction,
                "jump_values": list(map(float, self.jumps.values)),
                "jump_probs_conjugate": list(map(float, self.jumps.conjugate_probs)),
                "jump_probs": list(map(float, self.jumps.probs)),
            })
        return d


def _moments(kernel: TemplateKernel, rates: np.ndarray, theta: float):
    """(mean, second moment) of the score under tilt ``theta``,
    i.e. ``T^{-1} sum lam_i int g^k e^{theta g}`` for k = 1, 2."""
    ints = kernel_integrals(kernel, theta)
    m1 = float(np.dot(rates, ints[:, 1])) / kernel.window
    m2 = float(np.dot(rates, ints[:, 2])) / kernel.window
    return m1, m2


def _solve_tilt(kernel: TemplateKernel, rates: np.ndarray, c: float):
    """Root of the tilted-mean identity; safeguarded Newton in a bracket."""
    mu = _moments(kernel, rates, 0.0)[0]
    if not c > mu:
        raise SubcriticalThresholdError(
            f"threshold {c} is not above the mean score {mu}")
    lo, hi = 0.0, 1.0
    for _ in range(80):
        if _moments(kernel, rates, hi)[0] > c:
            break
        lo = hi
        hi *= 2.0
    else:
        raise SubcriticalThresholdError("threshold is unattainable for this kernel")
    theta = 0.5 * (lo + hi)
    for _ in range(100):
        m1, m2 = _moments(kernel, rates, theta)
        res = m1 - c
        if res > 0:
            hi = theta
        else:
            lo = theta
        step = res / m2 if m2 > 0 else 0.0
        nxt = theta - step
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if abs(nxt - theta) <= 1e-14 * max(1.0, abs(theta)) and abs(res) < 1e-13 * max(1.0, c):
            theta = nxt
            break
        theta = nxt
    m1, _ = _moments(kernel, rates, theta)
    return theta, mu, abs(m1 - c)


def tilt_summary(kernel: TemplateKernel, rates, c: float,
                 rng: Optional[RngStream] = None,
                 overshoot_walks: int = 100_000) -> TiltSummary:
    """Solve the tilt for threshold ``c`` and assemble all constants.

    ``rates`` are the per-train background intensities.  ``rng`` seeds the
    overshoot-factor Monte Carlo in the rare jump configurations that have
    no exact value (lattice walks whose upward steps all equal the span
    are exact and need no simulation).
    """
    rates = np.broadcast_to(np.asarray(rates, float), (kernel.dimension,)).copy()
    if np.any(rates <= 0):
        raise InvalidParameterError("rates must be positive")
    theta, mu, resid = _solve_tilt(kernel, rates, c)
    ints = kernel_integrals(kernel, theta)
    T = kernel.window
    base = float(np.dot(rates, ints[:, 0] - T))
    rate_fn = theta * c - base / T
    v = float(np.dot(rates, ints[:, 2])) / T
    tau = float(np.dot(rates, ints[:, 3])) / T

    if not kernel.has_jumps:
        if not kernel.score.continuous:
            raise BranchError("step kernel built no jumps; template may be empty")
        if tau <= 0:
            raise ModelError("slope variance vanished on the continuous branch")
        zeta = (0.5 / math.pi) * math.sqrt(tau / v)
        return TiltSummary(threshold=c, mean_score=mu, tilt=theta, rate=rate_fn,
                           score_var=v, slope_var=tau, branch="continuous",
                           clump_rate=zeta, window=T, rates=rates,
                           base_integral=base, solver_residual=resid)

    jd = jump_distribution(kernel, theta, rates)
    q = detect_arithmetic(kernel.score)
    nu, nu_se = overshoot_factor(jd, theta, rng=rng, walks=overshoot_walks)
    K = lattice_factor(q, jd.span, theta)
    jump_sum = 0.0
    for i in range(kernel.dimension):
        gl = kernel.jump_left[i]
        gr = kernel.jump_right[i]
        jump_sum += rates[i] * float(np.sum((gl - gr) * np.exp(theta * gl)))
    zeta = nu * K * jump_sum / math.sqrt(2.0 * math.pi * T * v)
    return TiltSummary(threshold=c, mean_score=mu, tilt=theta, rate=rate_fn,
                       score_var=v, slope_var=tau, branch="discontinuous",
                       clump_rate=zeta, window=T, rates=rates, base_integral=base,
                       jumps=jd, value_span=q, jump_span=jd.span,
                       overshoot=nu, overshoot_se=nu_se, lattice_correction=K,
                       solver_residual=resid)


def jump_distribution(kernel: TemplateKernel, theta: float, rates) -> JumpDistribution:
    """Jump-size mass functions at tilt ``theta`` (kernels with jumps only)."""
    if not kernel.has_jumps:
        raise BranchError("kernel has an empty jump set")
    rates = np.broadcast_to(np.asarray(rates, float), (kernel.dimension,))
    groups = {}
    exact_ok = True
    for i in range(kernel.dimension):
        gl, gr = kernel.jump_left[i], kernel.jump_right[i]
        ex = kernel.jump_sizes_exact[i]
        for k in range(len(gl)):
            delta = gl[k] - gr[k]
            key = ex[k] if ex[k] is not None else round(float(delta), 12)
            if ex[k] is None:
                exact_ok = False
            pre, post = groups.get(key, (0.0, 0.0))
            groups[key] = (pre + rates[i] * math.exp(theta * gl[k]),
                           post + rates[i] * math.exp(theta * gr[k]))
    keys = sorted(groups, key=float)
    pre = np.array([groups[k][0] for k in keys])
    post = np.array([groups[k][1] for k in keys])
    values = np.array([float(k) for k in keys])
    span = None
    if exact_ok:
        span = jump_span(kernel)
    else:
        try:
            span = jump_span(kernel)
        except SpanError:
            span = None
    return JumpDistribution(values=values, probs=post / post.sum(),
                            conjugate_probs=pre / pre.sum(), span=span,
                            normalizer_ratio=float(pre.sum() / post.sum()),
                            values_exact=tuple(keys) if exact_ok else None)


def overshoot_factor(jd: JumpDistribution, theta: float,
                     rng: Optional[RngStream] = None, walks: int = 100_000,
                     ladder=None):
    """Limiting mean of ``e^{-theta * (first-passage excess)}``.

    The ascending random walk uses the conjugate jump law.  Exact value 1
    when every upward jump equals the lattice span (the walk then hits
    each boundary level exactly).  Otherwise a renewal Monte Carlo
    estimate averaged over a ladder of boundary levels, with its standard
    error; levels are span multiples in the arithmetic case.
    """
    drift = jd.conjugate_mean()
    if drift <= 0:
        raise DivergenceError("conjugate jump law has nonpositive drift")
    pos = jd.values[jd.values > 0]
    if pos.size == 0:
        raise DivergenceError("no upward jumps: boundary can never be crossed")
    if jd.span is not None and np.allclose(pos, float(jd.span), rtol=0, atol=1e-12):
        return 1.0, 0.0

    rng = rng or RngStream(0)
    gen = rng.generator()
    scale = float(jd.span) if jd.span is not None else float(np.max(pos))
    if ladder is None:
        ladder = [m * scale for m in (10, 20, 30, 40, 50)]
    if jd.span is not None:
        # boundary levels must sit on the lattice of the walk
        ladder = [round(b / float(jd.span)) * float(jd.span) for b in ladder]
    per = max(1, walks // len(ladder))
    samples = []
    for bi, b in enumerate(ladder):
        pos_now = np.zeros(per)
        target = np.full(per, b) if jd.span is not None else gen.uniform(b, 2 * b, per)
        active = np.ones(per, bool)
        guard = 0
        while active.any():
            n = int(active.sum())
            steps = gen.choice(jd.values, size=n, p=jd.conjugate_probs)
            pos_now[active] += steps
            crossed = active & (pos_now >= target - 1e-12)
            samples.append(np.exp(-theta * np.maximum(pos_now[crossed] - target[crossed], 0.0)))
            active &= ~crossed
            guard += 1
            if guard > 10_000_000:
                raise DivergenceError("overshoot walk failed to cross its boundary")
    x = np.concatenate(samples)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def lattice_factor(value_span: Optional[Fraction], jump_span_: Optional[Fraction],
                   theta: float) -> float:
    """Correction for lattice-valued scores and jumps.

    1 when the jump law is nonarithmetic; ``(1 - e^{-theta chi}) /
    (theta chi)`` when only the jumps are lattice; the finite geometric
    ratio when the score values are lattice too (the jump span is then an
    integer multiple of the value span).
    """
    if jump_span_ is None:
        return 1.0
    chi = float(jump_span_)
    if value_span is None:
        return (1.0 - math.exp(-theta * chi)) / (theta * chi)
    ratio = Fraction(jump_span_) / Fraction(value_span)
    if ratio.denominator != 1 or ratio <= 0:
        raise SpanError(f"jump span {jump_span_} is not an integer multiple "
                        f"of the value span {value_span}")
    qf = float(value_span)
    return (qf / chi) * (1.0 - math.exp(-theta * chi)) / (1.0 - math.exp(-theta * qf))


def scan_pvalue(summary: TiltSummary, horizon: float) -> float:
    """Analytic ``P(running max over [0, horizon] >= threshold)``."""
    lam = horizon * summary.clump_rate * math.exp(-summary.window * summary.rate)
    return float(-np.expm1(-lam))


def gumbel_pvalue(summary: TiltSummary, z: float) -> float:
    """Tail probability of the centered/scaled running maximum."""
    return float(-np.expm1(-np.exp(-z)))


def gumbel_z(summary: TiltSummary, observed_max: float) -> float:
    """Standardized exceedance of the observed maximum over the critical
    threshold carried by ``summary``."""
    return (summary.tilt * summary.window * (observed_max - summary.threshold)
            - math.log(summary.clump_rate))


def critical_threshold(kernel: TemplateKernel, rates, horizon: float,
                       rng: Optional[RngStream] = None):
    """Threshold whose exponent matches ``log(horizon) / window``.

    Returns ``(c, summary at c)``.  This is the centering used by the
    Gumbel law for the running maximum.
    """
    T = kernel.window
    if horizon <= 1.0:
        raise InvalidParameterError("horizon must exceed 1 ms for the Gumbel centering")
    target = math.log(horizon) / T
    rates_arr = np.broadcast_to(np.asarray(rates, float), (kernel.dimension,)).copy()
    mu = _moments(kernel, rates_arr, 0.0)[0]

    def rate_at(c: float) -> float:
        theta, _, _ = _solve_tilt(kernel, rates_arr, c)
        ints = kernel_integrals(kernel, theta)
        base = float(np.dot(rates_arr, ints[:, 0] - T))
        return theta * c - base / T

    span = max(abs(mu), 1e-3)
    lo = mu + 1e-9 * span
    hi = mu + 0.5 * span
    for _ in range(200):
        if rate_at(hi) > target:
            break
        hi = mu + 2 * (hi - mu)
    else:
        raise InvalidParameterError("rate function never reaches log(horizon)/window")
    c = brentq(lambda x: rate_at(x) - target, lo, hi, xtol=1e-13, rtol=8.9e-16)
    return float(c), tilt_summary(kernel, rates_arr, float(c), rng=rng)


@dataclass(frozen=True)
class MatchCountLaw:
    """Poisson law for the overlap-limited match count."""

    eta: float

    def pmf(self, k) -> np.ndarray:
        k = np.atleast_1d(np.asarray(k, dtype=int))
        out = np.exp(-self.eta + k * math.log(self.eta)
                     - np.array([math.lgamma(x + 1) for x in k])) \
            if self.eta > 0 else np.where(k == 0, 1.0, 0.0)
        return out

    def tail(self, k: int) -> float:
        """P(count >= k)."""
        ks = np.arange(k)
        return float(1.0 - self.pmf(ks).sum()) if k > 0 else 1.0


def match_count_law(summary: TiltSummary, horizon: float) -> MatchCountLaw:
    """Poisson match-count law with mean
    ``horizon * clump_rate * e^{-window * rate}``."""
    eta = horizon * summary.clump_rate * math.exp(-summary.window * summary.rate)
    return MatchCountLaw(eta=float(eta))


def round_threshold(c: float, value_span, window: float) -> float:
    """Nearest threshold with ``window * c`` on the value lattice
    (ties round up)."""
    q = float(value_span)
    if q <= 0 or window <= 0:
        raise InvalidParameterError("span and window must be positive")
    k = c * window / q
    m = math.floor(k + 0.5 + 1e-12)
    return m * q / window
