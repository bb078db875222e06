import math
from fractions import Fraction

import numpy as np
import pytest

import spikescan as sk
from spikescan.errors import (BranchError, DivergenceError,
                              SpanError, SubcriticalThresholdError)
from spikescan.rng import RngStream
from spikescan.tilt import _moments, JumpDistribution
from oracles import overshoot_dp


def test_subcritical_threshold_rejected(single_spike_box):
    mu = _moments(single_spike_box, np.array([0.05]), 0.0)[0]
    with pytest.raises(SubcriticalThresholdError):
        sk.tilt_summary(single_spike_box, 0.05, mu)
    with pytest.raises(SubcriticalThresholdError):
        sk.tilt_summary(single_spike_box, 0.05, mu - 0.01)


def test_tilt_degenerates_at_mean(single_spike_box):
    mu = _moments(single_spike_box, np.array([0.05]), 0.0)[0]
    s = sk.tilt_summary(single_spike_box, 0.05, mu + 1e-8)
    assert 0 < s.tilt < 1e-4
    assert 0 < s.rate < 1e-10


def test_single_spike_box_summary(single_spike_box):
    # mean score: (0.05/20) * (8*1 + 12*(-0.3)) = 0.011
    summ = sk.tilt_summary(single_spike_box, 0.05, 0.02)
    assert np.isclose(summ.mean_score, 0.011, rtol=1e-12)
    # the tilt solves (0.05/20)(8 e^t - 3.6 e^{-0.3 t}) = 0.02: bisection oracle
    lo, hi = 0.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = (0.05 / 20.0) * (8 * math.exp(mid) - 3.6 * math.exp(-0.3 * mid))
        lo, hi = (mid, hi) if val < 0.02 else (lo, mid)
    assert np.isclose(summ.tilt, lo, atol=1e-10)
    assert summ.branch == "discontinuous"
    assert summ.slope_var == 0.0
    assert abs(summ.solver_residual) <= 1e-10


def test_tilted_mean_identity_and_legendre(box_kernel, hamming_kernel):
    for gk, c in ((box_kernel, 0.09), (hamming_kernel, 0.03)):
        summ = sk.tilt_summary(gk, 0.04, c)
        m1 = _moments(gk, np.full(4, 0.04), summ.tilt)[0]
        assert abs(m1 - c) <= 1e-10
        # rate = tilt * c - base/T exactly by construction; check dr/dc = tilt
        h = 1e-5
        up = sk.tilt_summary(gk, 0.04, c + h).rate
        dn = sk.tilt_summary(gk, 0.04, c - h).rate
        assert np.isclose((up - dn) / (2 * h), summ.tilt, rtol=1e-6)


def test_rate_function_convexity(hamming_kernel):
    mu = _moments(hamming_kernel, np.full(4, 0.04), 0.0)[0]
    cs = mu + np.linspace(0.01, 0.08, 10)
    rates = [sk.tilt_summary(hamming_kernel, 0.04, c).rate for c in cs]
    diffs = np.diff(rates)
    assert np.all(diffs > 0)
    assert np.all(np.diff(diffs) > 0)


def test_branch_exclusivity(box_kernel, hamming_kernel):
    sb = sk.tilt_summary(box_kernel, 0.04, 0.09)
    sh = sk.tilt_summary(hamming_kernel, 0.04, 0.03)
    assert sb.branch == "discontinuous" and sb.jumps is not None
    assert sh.branch == "continuous" and sh.jumps is None
    assert sh.slope_var > 0 and sh.score_var > 0 and sb.score_var > 0


def test_jump_distribution_example_geometry():
    # well-interior spikes: equal counts of +/- jumps, one pre-jump level
    # per sign; the conjugate law then has the closed form of the
    # two-level geometry
    tpl = sk.MultiTrain([sk.SpikeTrain(np.array([20.0, 40.0, 60.0, 80.0]),
                                       (0.0, 100.0))])
    gk = sk.build_template_kernel(tpl, sk.ScoreFunction.box(4.0, "0.3"))
    summ = sk.tilt_summary(gk, 0.04, 0.05)
    th = summ.tilt
    jd = summ.jumps
    assert np.allclose(jd.values, [-1.3, 1.3])
    want_lo = math.exp(-0.3 * th) / (math.exp(th) + math.exp(-0.3 * th))
    assert np.isclose(jd.conjugate_probs[0], want_lo, rtol=1e-12)
    assert np.isclose(jd.conjugate_probs.sum(), 1.0, atol=1e-12)
    assert summ.overshoot == 1.0 and summ.overshoot_se == 0.0
    assert summ.jump_span == Fraction(13, 10)


def test_jump_conjugacy(box_kernel):
    summ = sk.tilt_summary(box_kernel, 0.04, 0.09)
    jd = summ.jumps
    lhs = jd.conjugate_probs
    rhs = jd.normalizer_ratio ** -1 * np.exp(summ.tilt * jd.values) * jd.probs
    assert np.allclose(lhs, rhs, rtol=1e-12)


def test_jump_distribution_wrong_branch(hamming_kernel):
    with pytest.raises(BranchError):
        sk.jump_distribution(hamming_kernel, 1.0, 0.04)


def test_overshoot_exact_cases():
    two = JumpDistribution(values=np.array([-1.3, 1.3]),
                           probs=np.array([0.6, 0.4]),
                           conjugate_probs=np.array([0.3, 0.7]),
                           span=Fraction(13, 10), normalizer_ratio=1.0)
    assert sk.overshoot_factor(two, 0.8) == (1.0, 0.0)
    one = JumpDistribution(values=np.array([1.3]), probs=np.array([1.0]),
                           conjugate_probs=np.array([1.0]),
                           span=Fraction(13, 10), normalizer_ratio=1.0)
    assert sk.overshoot_factor(one, 0.8) == (1.0, 0.0)


def test_overshoot_nonpositive_drift():
    jd = JumpDistribution(values=np.array([-1.0, 1.0]),
                          probs=np.array([0.5, 0.5]),
                          conjugate_probs=np.array([0.8, 0.2]),
                          span=Fraction(1), normalizer_ratio=1.0)
    with pytest.raises(DivergenceError):
        sk.overshoot_factor(jd, 0.5)


def test_overshoot_three_atom_vs_dp():
    chi = 0.5
    probs = np.array([0.25, 0.45, 0.30])   # values -chi, +chi, +2chi
    jd = JumpDistribution(values=np.array([-chi, chi, 2 * chi]),
                          probs=probs, conjugate_probs=probs,
                          span=Fraction(1, 2), normalizer_ratio=1.0)
    theta = 0.7
    nu, se = sk.overshoot_factor(jd, theta, rng=RngStream(44), walks=120_000)
    want = overshoot_dp([-1, 1, 2], probs, theta, chi)
    assert se > 0
    assert abs(nu - want) <= 3 * se + 1e-4


def test_lattice_factor_cases():
    th = 0.8
    assert sk.lattice_factor(None, None, th) == 1.0
    # equal spans telescope to 1
    assert np.isclose(sk.lattice_factor(Fraction(1, 10), Fraction(1, 10), th), 1.0)
    # both arithmetic: the finite geometric series is the oracle
    q, chi = Fraction(1, 10), Fraction(13, 10)
    got = sk.lattice_factor(q, chi, th)
    ratio = int(chi / q)
    series = (float(q) / float(chi)) * sum(math.exp(-th * float(q) * r)
                                           for r in range(ratio))
    assert np.isclose(got, series, rtol=1e-12)
    # jumps-only lattice: theta -> 0 limit of (1 - e^{-theta chi})/(theta chi) is 1
    assert np.isclose(sk.lattice_factor(None, chi, 1e-9), 1.0, atol=1e-6)
    with pytest.raises(SpanError):
        sk.lattice_factor(Fraction(1, 3), Fraction(1, 2), th)


def test_scan_pvalue_monotone(hamming_kernel):
    cs = [0.02, 0.03, 0.04, 0.05]
    ps = [sk.scan_pvalue(sk.tilt_summary(hamming_kernel, 0.04, c), 900.0)
          for c in cs]
    assert all(a > b for a, b in zip(ps, ps[1:]))
    assert all(0 <= p <= 1 for p in ps)


def test_gumbel_limits_and_centering(hamming_kernel):
    cw, summ = sk.critical_threshold(hamming_kernel, 0.04, 900.0)
    assert abs(summ.rate - math.log(900.0) / 100.0) <= 1e-10
    assert sk.gumbel_pvalue(summ, 50.0) < 1e-20
    assert sk.gumbel_pvalue(summ, -50.0) == 1.0
    # consistency with the direct formula to first order
    c = cw + 0.8 / (summ.tilt * 100.0)
    z = summ.tilt * 100.0 * (c - cw) - math.log(summ.clump_rate)
    p_gumbel = sk.gumbel_pvalue(summ, z)
    p_direct = sk.scan_pvalue(sk.tilt_summary(hamming_kernel, 0.04, c), 900.0)
    assert abs(p_gumbel - p_direct) / p_direct < 0.10


def test_gumbel_invalid_horizon(hamming_kernel):
    with pytest.raises(sk.InvalidParameterError):
        sk.critical_threshold(hamming_kernel, 0.04, 0.5)


def test_match_count_law(box_kernel):
    summ = sk.tilt_summary(box_kernel, 0.04, 0.09)
    law = sk.match_count_law(summ, 5000.0)
    ks = np.arange(0, 200)
    assert abs(law.pmf(ks).sum() - 1.0) <= 1e-12
    eta = 5000.0 * summ.clump_rate * math.exp(-100.0 * summ.rate)
    assert np.isclose(law.eta, eta, rtol=1e-12)
    assert np.isclose(law.tail(0), 1.0)
    assert law.tail(1) == pytest.approx(1.0 - law.pmf(0)[0], abs=1e-12)


def test_round_threshold():
    assert sk.round_threshold(0.065, Fraction(1, 10), 500.0) == pytest.approx(0.065)
    assert sk.round_threshold(0.0651, Fraction(1, 10), 500.0) == pytest.approx(0.0652)
    assert sk.round_threshold(0.02, Fraction(1, 10), 500.0) == pytest.approx(0.02)
    # ties round up: T*c/q = 32.5 for c = 0.0065, T = 500, q = 0.1
    assert sk.round_threshold(0.0065, Fraction(1, 10), 500.0) * 500 / 0.1 == \
        pytest.approx(33.0)


def test_summary_serialization(box_kernel):
    d = sk.tilt_summary(box_kernel, 0.04, 0.09).to_dict()
    assert d["branch"] == "discontinuous"
    assert d["value_span"] == "1/10" and d["jump_span"] == "13/10"
    import json
    json.dumps(d)
