import numpy as np
import pytest

import spikescan as sk
from spikescan.errors import ConfigError, InvalidParameterError
from spikescan.montecarlo import McConfig, _background_trains
from spikescan.rng import RngStream
from spikescan.scoring import MatchConfig, score_at


def test_mcconfig_validation():
    with pytest.raises(ConfigError):
        McConfig(runs=0, seed=1, horizon=100.0)
    with pytest.raises(ConfigError):
        McConfig(runs=10, seed=1, horizon=100.1, anchor_step=0.2)
    cfg = McConfig(runs=10, seed=1, horizon=100.0, anchor_step=0.2)
    assert cfg.anchor_count == 500


def test_tilted_generate_zero_tilt_is_background(hamming_kernel):
    rng = RngStream(50)
    rec = sk.tilted_generate(hamming_kernel, 0.04, 0.0, 200.0, 1000.0, rng)
    # law equals homogeneous Poisson: mean count over replicates
    counts = [sk.tilted_generate(hamming_kernel, 0.04, 0.0, 200.0, 1000.0,
                                 RngStream(50, i)).trains[0].count
              for i in range(2000)]
    se = np.std(counts) / np.sqrt(len(counts))
    assert abs(np.mean(counts) - 40.0) <= 3 * se
    with pytest.raises(InvalidParameterError):
        sk.tilted_generate(hamming_kernel, 0.04, -0.5, 200.0, 1000.0, rng)


def test_tilted_window_mean_score(box_kernel):
    # at the solving tilt, the window score at the anchor averages c
    c = 0.09
    summ = sk.tilt_summary(box_kernel, 0.04, c)
    anchor = 150.0
    vals = [score_at(sk.tilted_generate(box_kernel, 0.04, summ.tilt, anchor,
                                        400.0, RngStream(51, i)),
                     box_kernel, anchor)
            for i in range(4000)]
    se = np.std(vals) / np.sqrt(len(vals))
    assert abs(np.mean(vals) - c) <= 3 * se


def test_tilted_acceptance_fraction(box_kernel):
    # thinning acceptance probability is int e^{th g} / (T e^{th f0})
    theta = 0.9
    ints = sk.kernel_integrals(box_kernel, theta)
    T = box_kernel.window
    f0 = box_kernel.score.peak
    accept_want = ints[:, 0].sum() / (box_kernel.dimension * T * np.exp(theta * f0))
    lam = 0.04
    props = accepted = 0
    for i in range(3000):
        gen = RngStream(52, i).generator()
        for tr in range(box_kernel.dimension):
            n = gen.poisson(lam * np.exp(theta * f0) * T)
            u = np.sort(gen.uniform(0.0, T, n))
            keep = gen.uniform(size=n) <= np.exp(
                theta * (box_kernel.evaluate(tr, u) - f0))
            props += n
            accepted += int(keep.sum())
    got = accepted / props
    se = np.sqrt(got * (1 - got) / props)
    assert abs(got - accept_want) <= 3 * se


def test_direct_mc_trivial_thresholds(box_kernel):
    cfgm = MatchConfig(threshold=-10.0, window=100.0, horizon=200.0)
    mc = McConfig(runs=50, seed=3, horizon=200.0)
    est = sk.direct_mc_pvalue(box_kernel, 0.04, cfgm, mc)
    assert est.p_hat == 1.0 and est.se == 0.0
    # impossible: above d * f(0) * (any count) / T given ~bounded spikes
    cfgm = MatchConfig(threshold=50.0, window=100.0, horizon=200.0)
    est = sk.direct_mc_pvalue(box_kernel, 0.04, cfgm, mc)
    assert est.p_hat == 0.0


def test_is_unbiasedness_surrogate(hamming_kernel):
    # indicator removed (certain event): estimator mean -> 1
    cfgm = MatchConfig(threshold=-1e9, window=100.0, horizon=800.0)
    mc = McConfig(runs=1500, seed=7, horizon=800.0)
    summ = sk.tilt_summary(hamming_kernel, 0.04, 0.04)
    est = sk.importance_sampling_pvalue(hamming_kernel, 0.04, cfgm, mc,
                                        summary=summ)
    assert abs(est.p_hat - 1.0) <= 3 * est.se


def test_cross_estimator_agreement(box_kernel):
    cw, summ_at = sk.critical_threshold(box_kernel, 0.04, 800.0)
    c = sk.round_threshold(cw + 1.0 / (summ_at.tilt * 100.0),
                           sk.detect_arithmetic(box_kernel.score), 100.0)
    summ = sk.tilt_summary(box_kernel, 0.04, c)
    cfgm = MatchConfig(threshold=c, window=100.0, horizon=800.0)
    mc = McConfig(runs=2500, seed=8, horizon=800.0)
    d = sk.direct_mc_pvalue(box_kernel, 0.04, cfgm, mc)
    i = sk.importance_sampling_pvalue(box_kernel, 0.04, cfgm, mc, summary=summ)
    assert abs(d.p_hat - i.p_hat) <= 3 * np.hypot(d.se, i.se)
    assert abs(sk.scan_pvalue(summ, 800.0) - i.p_hat) <= 4 * i.se


def test_estimates_are_reproducible(box_kernel):
    cfgm = MatchConfig(threshold=0.08, window=100.0, horizon=300.0)
    mc = McConfig(runs=40, seed=9, horizon=300.0)
    a = sk.direct_mc_pvalue(box_kernel, 0.04, cfgm, mc)
    b = sk.direct_mc_pvalue(box_kernel, 0.04, cfgm, mc)
    assert (a.p_hat, a.se) == (b.p_hat, b.se)
    ia = sk.importance_sampling_pvalue(box_kernel, 0.04, cfgm, mc)
    ib = sk.importance_sampling_pvalue(box_kernel, 0.04, cfgm, mc)
    assert (ia.p_hat, ia.se) == (ib.p_hat, ib.se)


def test_match_count_impossible_threshold(box_kernel):
    cfgm = MatchConfig(threshold=np.inf, window=100.0, horizon=300.0,
                       overlap_alpha=0.8)
    mc = McConfig(runs=30, seed=10, horizon=300.0)
    est = sk.mc_match_count(box_kernel, 0.04, cfgm, mc)
    assert est.counts.size == 1 and est.counts[0] == 30
    assert est.mean == 0.0


def test_match_count_equals_per_run_recount(box_kernel):
    """Engine counts equal an independent recount on each realization."""
    from spikescan.scoring import score_series
    from oracles import naive_count_matches
    c, a = 0.07, 400.0
    cfgm = MatchConfig(threshold=c, window=100.0, horizon=a, overlap_alpha=0.7)
    mc = McConfig(runs=120, seed=11, horizon=a)
    est = sk.mc_match_count(box_kernel, 0.04, cfgm, mc)
    base = RngStream(11, 2)  # stream id used by mc_match_count
    recount = np.zeros(est.counts.size, dtype=int)
    for r in range(mc.runs):
        gen = base.child(r).generator()
        arrays = _background_trains(np.full(4, 0.04), a + 100.0, gen)
        rec = sk.MultiTrain([sk.SpikeTrain(t, (0.0, a + 100.0)) for t in arrays])
        series = score_series(rec, box_kernel, a)
        onsets = naive_count_matches(series.times, series.values, series.end,
                                     c, cfgm.refractory, grid=False)
        recount[len(onsets)] += 1
    assert np.array_equal(recount, est.counts)


def test_geometry_validation(box_kernel):
    cfgm = MatchConfig(threshold=0.08, window=90.0, horizon=300.0)
    mc = McConfig(runs=10, seed=12, horizon=300.0)
    with pytest.raises(ConfigError):
        sk.direct_mc_pvalue(box_kernel, 0.04, cfgm, mc)
