"""Score functions and per-train template kernels.

A score function ``f`` is non-increasing on ``[0, inf)`` with ``f(0) > 0``
and a finite tail value.  Given a template (one spike pattern per train),
the derived kernel of train ``i`` is ``f`` of the distance to the nearest
template spike, clipped to zero outside the template window.  The kernel
is materialized as an exact piecewise description: constant pieces carry
exact rational values where possible (this is what makes lattice
thresholds and jump spans computable without float guesswork), smooth
pieces record their governing spike.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Callable, Optional, Sequence

import numpy as np

from ._quad import adaptive_quad
from .errors import InvalidParameterError, SpanError
from .point_process import MultiTrain

__all__ = [
    "ScoreFunction",
    "TemplateKernel",
    "build_template_kernel",
    "detect_arithmetic",
    "jump_span",
    "kernel_integrals",
]


def _fraction_gcd(a: Fraction, b: Fraction) -> Fraction:
    return Fraction(gcd(a.numerator * b.denominator, b.numerator * a.denominator),
                    a.denominator * b.denominator)


def _span_of(values) -> Optional[Fraction]:
    """Largest q with every value in qZ, ignoring zeros; None if all zero."""
    vals = [Fraction(v) for v in values if v != 0]
    if not vals:
        return None
    out = abs(vals[0])
    for v in vals[1:]:
        out = _fraction_gcd(out, abs(v))
    return out


def _as_exact(x) -> Optional[Fraction]:
    """Exact rational for non-float input; None for floats (no silent guess)."""
    if isinstance(x, float):
        return None
    return Fraction(x)


@dataclass(frozen=True)
class ScoreFunction:
    """Proximity score ``f``: non-increasing, non-constant, ``f(0) > 0``.

    Use the :meth:`hamming`, :meth:`box` or :meth:`piecewise_constant`
    constructors.  For exact arithmetic-span detection the kernel values
    must be exact rationals: pass ``beta`` (or custom values) as
    ``str``/``Fraction``/``int``, or declare ``span`` explicitly.
    """

    kind: str
    epsilon: float
    beta: float
    tail: float                      # value of f at infinity
    continuous: bool
    breakpoints: tuple               # x where the definition changes
    declared_span: Optional[Fraction] = None
    exact_values: Optional[tuple] = None   # Fractions, piecewise-constant only
    _pc_values: Optional[tuple] = None     # float piece values, pc only
    _pc_edges: Optional[tuple] = None      # piece edges, pc only
    _fn: Optional[Callable] = None
    _dfn: Optional[Callable] = None

    # -- constructors -------------------------------------------------

    @classmethod
    def hamming(cls, epsilon: float, beta: float) -> "ScoreFunction":
        """Raised-cosine window: smooth descent from 1 to ``-beta`` at
        ``epsilon``, constant ``-beta`` beyond."""
        if not epsilon > 0:
            raise InvalidParameterError("epsilon must be positive")
        eps, b = float(epsilon), float(beta)

        def fn(x):
            x = np.asarray(x, float)
            return np.where(
                x < eps, 0.5 * (1 - b) + 0.5 * (1 + b) * np.cos(np.pi * x / eps), -b
            )

        def dfn(x):
            x = np.asarray(x, float)
            return np.where(x < eps, -0.5 * (1 + b) * (np.pi / eps) * np.sin(np.pi * x / eps), 0.0)

        return cls(kind="hamming", epsilon=eps, beta=b, tail=-b, continuous=True,
                   breakpoints=(eps,), _fn=fn, _dfn=dfn)

    @classmethod
    def box(cls, epsilon: float, beta, span=None) -> "ScoreFunction":
        """Indicator window: 1 inside ``epsilon``, ``-beta`` outside."""
        if not epsilon > 0:
            raise InvalidParameterError("epsilon must be positive")
        b_exact = _as_exact(beta)
        b = float(beta) if b_exact is None else float(b_exact)
        if b <= 0:
            raise InvalidParameterError("beta must be positive")
        exact = (Fraction(1), -b_exact) if b_exact is not None else None
        return cls(kind="box", epsilon=float(epsilon), beta=b, tail=-b,
                   continuous=False, breakpoints=(float(epsilon),),
                   declared_span=None if span is None else Fraction(str(span)),
                   exact_values=exact, _pc_values=(1.0, -b),
                   _pc_edges=(float(epsilon),))

    @classmethod
    def piecewise_constant(cls, edges: Sequence[float], values: Sequence,
                           span=None) -> "ScoreFunction":
        """Custom step kernel: ``values[k]`` on ``[edges[k-1], edges[k])``
        with ``edges[-1] = inf`` implied (the last value is the tail)."""
        edges = tuple(float(e) for e in edges)
        if len(values) != len(edges) + 1:
            raise InvalidParameterError("need one more value than interior edges")
        exacts = [_as_exact(v) for v in values]
        exact = tuple(exacts) if all(e is not None for e in exacts) else None
        vals = tuple(float(v) if e is None else float(e)
                     for v, e in zip(values, exacts))
        if any(vals[k + 1] > vals[k] for k in range(len(vals) - 1)):
            raise InvalidParameterError("score function must be non-increasing")
        if len(set(vals)) < 2:
            raise InvalidParameterError("score function must be non-constant")
        if vals[0] <= 0:
            raise InvalidParameterError("f(0) must be positive")
        return cls(kind="custom", epsilon=edges[0] if edges else 0.0,
                   beta=-vals[-1], tail=vals[-1], continuous=False,
                   breakpoints=edges,
                   declared_span=None if span is None else Fraction(str(span)),
                   exact_values=exact, _pc_values=vals, _pc_edges=edges)

    @classmethod
    def smooth(cls, fn: Callable, breakpoints: Sequence[float], tail: float,
               dfn: Optional[Callable] = None,
               numeric_derivative: bool = False) -> "ScoreFunction":
        """Custom continuous kernel from a callable.

        ``dfn`` is the closed-form derivative; pass
        ``numeric_derivative=True`` to accept central differences instead
        (step 1e-6, documented accuracy ~1e-8 for well-scaled kernels).
        """
        if dfn is None:
            if not numeric_derivative:
                raise InvalidParameterError(
                    "smooth kernels need a derivative closed form or an "
                    "explicit opt-in to numerical differentiation")

            def dfn(x, _f=fn):
                h = 1e-6
                x = np.asarray(x, float)
                return (_f(x + h) - _f(np.maximum(x - h, 0.0))) / (
                    x + h - np.maximum(x - h, 0.0))

        f0 = float(fn(np.zeros(1))[0])
        if f0 <= 0:
            raise InvalidParameterError("f(0) must be positive")
        if not np.isfinite(tail):
            raise InvalidParameterError("tail value must be finite")
        last = max(breakpoints, default=1.0)
        probe = np.linspace(0, last * 2 + 1.0, 257)
        pv = np.asarray(fn(probe), float)
        if np.any(np.diff(pv) > 1e-12):
            raise InvalidParameterError("score function must be non-increasing")
        beyond = np.asarray(fn(np.array([last * 1.01, last * 1.5, last * 3 + 1])), float)
        if np.any(np.abs(beyond - tail) > 1e-9):
            raise InvalidParameterError(
                "the kernel must be constant at the tail value beyond its "
                "last breakpoint")
        return cls(kind="smooth", epsilon=breakpoints[0] if breakpoints else 0.0,
                   beta=-float(tail), tail=float(tail), continuous=True,
                   breakpoints=tuple(float(b) for b in breakpoints),
                   _fn=fn, _dfn=dfn)

    # -- evaluation ---------------------------------------------------

    @property
    def piecewise_constant_flag(self) -> bool:
        return self._pc_values is not None

    @property
    def peak(self) -> float:
        """f(0), the largest kernel value."""
        return float(self(np.zeros(1))[0])

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self._pc_values is not None:
            idx = np.searchsorted(np.asarray(self._pc_edges), x, side="right")
            return np.asarray(self._pc_values)[idx]
        return np.asarray(self._fn(x), float)

    def derivative(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self._pc_values is not None:
            return np.zeros_like(x)
        return np.asarray(self._dfn(x), float)

    def value_exact(self, x: float) -> Optional[Fraction]:
        if self.exact_values is None:
            return None
        idx = int(np.searchsorted(np.asarray(self._pc_edges), x, side="right"))
        return self.exact_values[idx]

    def constant_piece_index(self, x: float) -> Optional[int]:
        """Index of the constant f-piece containing ``x``; None if the
        piece is not constant there (smooth kernels inside the window)."""
        if self._pc_values is not None:
            return int(np.searchsorted(np.asarray(self._pc_edges), x, side="right"))
        # smooth kernels are constant only beyond the last breakpoint
        if self.breakpoints and x >= self.breakpoints[-1]:
            return len(self.breakpoints)
        return None


@dataclass(frozen=True)
class _Piece:
    lo: float
    hi: float
    value: Optional[float]          # constant pieces only
    spike: Optional[float]          # governing template spike, smooth pieces
    value_exact: Optional[Fraction] = None


@dataclass(frozen=True)
class TemplateKernel:
    """Exact piecewise description of the per-train proximity kernels."""

    score: ScoreFunction
    window: float
    template: tuple                  # per-train ascending spike arrays
    pieces: tuple                    # per-train tuple of _Piece
    jump_locations: tuple            # per-train float arrays
    jump_left: tuple                 # g just left of each jump
    jump_right: tuple                # g just right of each jump
    jump_left_exact: tuple           # Fractions or None
    jump_sizes_exact: tuple          # Fractions or None

    @property
    def dimension(self) -> int:
        return len(self.template)

    @property
    def spike_counts(self) -> tuple:
        return tuple(len(w) for w in self.template)

    @property
    def has_jumps(self) -> bool:
        return any(len(j) for j in self.jump_locations)

    def evaluate(self, i: int, u) -> np.ndarray:
        """Kernel of train ``i`` by definition: f(distance to the nearest
        template spike), zero outside ``[0, window)``."""
        u = np.atleast_1d(np.asarray(u, float))
        w = self.template[i]
        if w.size == 0:
            return np.zeros_like(u)
        d = _nearest_distance(w, u)
        out = self.score(d)
        return np.where((u >= 0) & (u < self.window), out, 0.0)

    def evaluate_derivative(self, i: int, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, float))
        w = self.template[i]
        if w.size == 0:
            return np.zeros_like(u)
        k = np.searchsorted(w, u)
        lo = np.clip(k - 1, 0, w.size - 1)
        hi = np.clip(k, 0, w.size - 1)
        left = np.abs(u - w[lo])
        right = np.abs(u - w[hi])
        d = np.minimum(left, right)
        sign = np.where(left <= right, 1.0, -1.0)  # distance grows to the right of a spike
        out = self.score.derivative(d) * sign
        return np.where((u >= 0) & (u < self.window), out, 0.0)

    def evaluate_from_pieces(self, i: int, u) -> np.ndarray:
        """Evaluate via the piece table (integration view of the kernel)."""
        u = np.atleast_1d(np.asarray(u, float))
        pieces = self.pieces[i]
        starts = np.array([p.lo for p in pieces])
        idx = np.clip(np.searchsorted(starts, u, side="right") - 1, 0, len(pieces) - 1)
        out = np.empty_like(u)
        for k, p in enumerate(pieces):
            m = idx == k
            if not np.any(m):
                continue
            out[m] = p.value if p.value is not None else self.score(np.abs(u[m] - p.spike))
        return np.where((u >= 0) & (u < self.window), out, 0.0)

    def constant_tables(self):
        """Per-train ``(edges, values)`` arrays for piecewise-constant
        kernels; ``edges`` has one more entry than ``values`` and spans
        ``[0, window]``.  Raises for kernels with smooth pieces."""
        out = []
        for pieces in self.pieces:
            if any(p.value is None for p in pieces):
                raise InvalidParameterError("kernel is not piecewise constant")
            edges = np.array([p.lo for p in pieces] + [self.window])
            vals = np.array([p.value for p in pieces])
            out.append((edges, vals))
        return out

    def exact_value_tables(self):
        """Like :meth:`constant_tables` but values as exact Fractions;
        None when exact values are unavailable."""
        out = []
        for pieces in self.pieces:
            if any(p.value_exact is None for p in pieces):
                return None
            out.append(tuple(p.value_exact for p in pieces))
        return out


def _nearest_distance(w: np.ndarray, u: np.ndarray) -> np.ndarray:
    k = np.searchsorted(w, u)
    lo = np.clip(k - 1, 0, w.size - 1)
    hi = np.clip(k, 0, w.size - 1)
    return np.minimum(np.abs(u - w[lo]), np.abs(u - w[hi]))


def build_template_kernel(template: MultiTrain, score: ScoreFunction) -> TemplateKernel:
    """Construct the exact piecewise kernels for every template train.

    Empty template trains yield the all-zero kernel for that train (the
    train then contributes nothing to any score); a warning is emitted
    because matching against an empty train is ill-posed.
    """
    t0, t1 = template.horizon
    if abs(t0) > 1e-12:
        raise InvalidParameterError("template horizon must start at 0")
    T = t1
    all_pieces, jlocs, jls, jrs, jl_exact, jsz_exact = [], [], [], [], [], []
    for tr in template.trains:
        w = tr.times
        if w.size == 0:
            warnings.warn("empty template train: its kernel is identically zero",
                          stacklevel=2)
            all_pieces.append((_Piece(0.0, T, 0.0, None, Fraction(0)),))
            jlocs.append(np.empty(0))
            jls.append(np.empty(0))
            jrs.append(np.empty(0))
            jl_exact.append(())
            jsz_exact.append(())
            continue
        crit = {0.0, T}
        crit.update(float(x) for x in w)
        crit.update(float(0.5 * (a + b)) for a, b in zip(w[:-1], w[1:]))
        for b in score.breakpoints:
            crit.update(float(x) for x in np.concatenate([w - b, w + b]))
        cuts = np.array(sorted(c for c in crit if 0.0 <= c <= T))
        pieces = []
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            if hi <= lo:
                continue
            mid = 0.5 * (lo + hi)
            k = int(np.searchsorted(w, mid))
            cands = w[max(0, k - 1):k + 1]
            spike = float(cands[np.argmin(np.abs(cands - mid))])
            dmid = abs(mid - spike)
            if score.constant_piece_index(dmid) is not None:
                pieces.append(_Piece(float(lo), float(hi), float(score(dmid)),
                                     None, score.value_exact(dmid)))
            else:
                pieces.append(_Piece(float(lo), float(hi), None, spike))
        # interior jumps: compare adjacent piece limits
        locs, gl, gr, gle, jse = [], [], [], [], []
        if not score.continuous:
            for left, right in zip(pieces[:-1], pieces[1:]):
                dl, dr = left.value, right.value
                if dl is None or dr is None or dl == dr:
                    continue
                locs.append(right.lo)
                gl.append(dl)
                gr.append(dr)
                gle.append(left.value_exact)
                ex = (None if left.value_exact is None or right.value_exact is None
                      else left.value_exact - right.value_exact)
                jse.append(ex)
        all_pieces.append(tuple(pieces))
        jlocs.append(np.asarray(locs))
        jls.append(np.asarray(gl))
        jrs.append(np.asarray(gr))
        jl_exact.append(tuple(gle))
        jsz_exact.append(tuple(jse))
    return TemplateKernel(
        score=score, window=T,
        template=tuple(np.asarray(tr.times, float) for tr in template.trains),
        pieces=tuple(all_pieces),
        jump_locations=tuple(jlocs), jump_left=tuple(jls), jump_right=tuple(jrs),
        jump_left_exact=tuple(jl_exact), jump_sizes_exact=tuple(jsz_exact),
    )


def detect_arithmetic(score: ScoreFunction) -> Optional[Fraction]:
    """Largest span q with all kernel values in qZ; None if nonarithmetic.

    Continuous kernels are nonarithmetic (their range is an interval).
    Step kernels built from floats have no trustworthy exact values, so a
    span must have been declared; guessing one silently would corrupt the
    lattice corrections downstream.
    """
    if score.continuous:
        return None
    if score.exact_values is not None:
        span = _span_of(score.exact_values)
        if score.declared_span is not None:
            if any(Fraction(v) % score.declared_span != 0 for v in score.exact_values):
                raise SpanError("declared span does not divide the kernel values")
            return score.declared_span
        return span
    if score.declared_span is not None:
        return score.declared_span
    raise SpanError(
        "kernel values are floats: declare the arithmetic span explicitly "
        "(or construct the kernel from exact rationals)")


def jump_span(kernel: TemplateKernel) -> Optional[Fraction]:
    """Span of the jump-size multiset across all trains (None: no jumps
    or nonarithmetic).  Exact jump values are required; with a declared
    score span q every jump lies in qZ and the span is computed in exact
    q units."""
    if not kernel.has_jumps:
        return None
    allx = [x for tr in kernel.jump_sizes_exact for x in tr]
    if allx and all(x is not None for x in allx):
        return _span_of(allx)
    q = detect_arithmetic(kernel.score)  # raises if undeclared floats
    if q is None:
        return None
    units = []
    for gl, gr in zip(kernel.jump_left, kernel.jump_right):
        for a, b in zip(gl, gr):
            k = (a - b) / float(q)
            ki = round(k)
            if abs(k - ki) > 1e-9:
                raise SpanError("jump sizes are not on the declared lattice")
            units.append(ki)
    if not units:
        return None
    g = 0
    for u in units:
        g = gcd(g, abs(int(u)))
    return q * g if g else None


def kernel_integrals(kernel: TemplateKernel, theta: float,
                     abs_tol: float = 1e-10) -> np.ndarray:
    """Per-train tilted moments of the kernel over ``[0, window)``.

    Returns an array of shape ``(d, 4)`` with columns
    ``[int e^{th g}, int g e^{th g}, int g^2 e^{th g}, int g'^2 e^{th g}]``.
    Constant pieces are summed in closed form; smooth pieces use adaptive
    Gauss-Legendre to ``abs_tol``.  The derivative column skips the finite
    exceptional set (piece edges) where g' does not exist.
    """
    if not np.isfinite(theta):
        raise InvalidParameterError("theta must be finite")
    out = np.zeros((kernel.dimension, 4))
    f = kernel.score
    for i, pieces in enumerate(kernel.pieces):
        acc = np.zeros(4)
        for p in pieces:
            L = p.hi - p.lo
            if L <= 0:
                continue
            if p.value is not None:
                e = np.exp(theta * p.value)
                acc[0] += L * e
                acc[1] += L * p.value * e
                acc[2] += L * p.value * p.value * e
            else:
                spike = p.spike

                def dist(u):
                    return np.abs(np.asarray(u) - spike)

                acc[0] += adaptive_quad(lambda u: np.exp(theta * f(dist(u))),
                                        p.lo, p.hi, abs_tol)
                acc[1] += adaptive_quad(lambda u: f(dist(u)) * np.exp(theta * f(dist(u))),
                                        p.lo, p.hi, abs_tol)
                acc[2] += adaptive_quad(lambda u: f(dist(u)) ** 2 * np.exp(theta * f(dist(u))),
                                        p.lo, p.hi, abs_tol)
                acc[3] += adaptive_quad(
                    lambda u: f.derivative(dist(u)) ** 2 * np.exp(theta * f(dist(u))),
                    p.lo, p.hi, abs_tol)
        out[i] = acc
    return out
