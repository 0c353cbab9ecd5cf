from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_connected, trace_inv
from polarmin.errors import ConvergenceError, ValidationError
from polarmin.graph import add_candidate, grounded_laplacian, leader_config
from polarmin.greedy_approx import (
    ApproxParams,
    f_gains_est,
    gains_est,
    run_approx,
    sketched_trace,
    theoretical_deltas,
)
from polarmin.greedy_exact import exact_gains, run_exact
from polarmin.linalg import dense_inverse
from polarmin.validation import approx_equal


@pytest.fixture(scope="module")
def instance():
    g = random_connected(40, np.random.default_rng(11), p=0.15)
    cfg = leader_config(g, [0, 13, 27])
    return g, cfg, grounded_laplacian(g, cfg)


class TestParams:
    @pytest.mark.parametrize("kw", [{"epsilon": 0.0}, {"epsilon": 0.3}, {"workers": 0},
                                    {"block": 0}, {"p": 0}, {"precision": "half"}])
    def test_rejected(self, kw):
        with pytest.raises(ValidationError):
            ApproxParams(**kw)

    def test_precision(self):
        assert ApproxParams().dtype is np.float32
        assert ApproxParams(strict_delta=True).dtype is np.float64
        assert ApproxParams(precision="double").dtype is np.float64
        assert ApproxParams(strict_delta=True, precision="single").dtype is np.float32

    def test_sketch_size(self):
        assert ApproxParams(epsilon=0.2).sketch_size(100000) == 6908
        assert ApproxParams(p=17).sketch_size(100000) == 17

    def test_practical_deltas(self, instance):
        *_, sys = instance
        assert ApproxParams(epsilon=0.18).deltas(sys) == pytest.approx((0.03, 0.03))

    def test_theoretical_deltas(self, instance):
        g, _, sys = instance
        eps = 0.2
        d1, d2 = theoretical_deltas(sys, eps)
        n, m = g.n, g.m
        ratio = g.w_min / g.w_max
        assert d1 == pytest.approx(max(eps * math.sqrt(1 - eps) * ratio / (6 * n**3), 1e-12))
        assert 1e-12 <= d2 < d1


def test_streaming_and_materialized_agree_bitwise(instance):
    *_, sys = instance
    params = ApproxParams(epsilon=0.25, seed=3, block=7)
    a = f_gains_est(sys, params, stream=2, return_accumulators=True)
    b = gains_est(sys, params, stream=2, return_accumulators=True)
    assert np.array_equal(a.t_hat, b.t_hat) and np.array_equal(a.r_hat, b.r_hat)


@pytest.mark.parametrize("strict", [False, True])
def test_worker_count_does_not_change_bits(instance, strict):
    *_, sys = instance
    one = f_gains_est(sys, ApproxParams(seed=5, block=16, strict_delta=strict), return_accumulators=True)
    four = f_gains_est(sys, ApproxParams(seed=5, block=16, workers=4, strict_delta=strict),
                       return_accumulators=True)
    assert np.array_equal(one.t_hat, four.t_hat) and np.array_equal(one.r_hat, four.r_hat)


def test_seed_and_stream_change_the_sketch(instance):
    *_, sys = instance
    base = f_gains_est(sys, ApproxParams(seed=0), return_accumulators=True).t_hat
    assert not np.array_equal(base, f_gains_est(sys, ApproxParams(seed=1), return_accumulators=True).t_hat)
    assert not np.array_equal(base, f_gains_est(sys, ApproxParams(seed=0), stream=1,
                                                return_accumulators=True).t_hat)


def test_large_sketch_recovers_exact_terms(instance):
    *_, sys = instance
    inv = np.linalg.inv(sys.dense())
    acc = f_gains_est(sys, ApproxParams(p=20000, strict_delta=True, block=256), return_accumulators=True)
    assert np.allclose(acc.t_hat, np.sum(inv * inv, axis=0), rtol=0.06)
    assert np.allclose(acc.r_hat, np.diagonal(inv), rtol=0.06)


def test_sketch_is_unbiased(instance):
    *_, sys = instance
    inv = np.linalg.inv(sys.dense())
    runs = [f_gains_est(sys, ApproxParams(p=50, seed=s, strict_delta=True), return_accumulators=True)
            for s in range(200)]
    t_mean = np.mean([r.t_hat for r in runs], axis=0)
    r_mean = np.mean([r.r_hat for r in runs], axis=0)
    # each run has relative std ~ sqrt(2/50) = 0.2; the mean of 200 runs ~ 0.014
    assert np.allclose(t_mean, np.sum(inv * inv, axis=0), rtol=0.06)
    assert np.allclose(r_mean, np.diagonal(inv), rtol=0.06)


def test_estimates_within_three_epsilon(instance):
    *_, sys = instance
    exact = np.array([e.gain for e in exact_gains(sys, dense_inverse(sys))])
    est = np.array([e.gain for e in f_gains_est(sys, ApproxParams(epsilon=0.25, seed=1, strict_delta=True))])
    assert approx_equal(exact, est, 0.75).mean() >= 0.9


def test_sketched_trace(instance):
    *_, sys = instance
    exact = float(np.trace(np.linalg.inv(sys.dense())))
    est = sketched_trace(sys, ApproxParams(epsilon=0.1, seed=2))
    assert est == pytest.approx(exact, rel=0.1)


def test_run_approx_shape_and_quality(instance):
    g, cfg, _ = instance
    res = run_approx(g, cfg, 5, ApproxParams(epsilon=0.2, seed=4))
    assert res.algorithm == "approx" and res.k == 5
    assert len(res.trajectory) == 6 and len(res.round_seconds) == 6
    assert len(set(res.chosen)) == 5
    assert res.params["p"] == ApproxParams(epsilon=0.2).sketch_size(g.n)
    exact = run_exact(g, cfg, 5)
    assert trace_inv(g, cfg, res.chosen) <= 1.1 * exact.final
    for est, ref in zip(res.trajectory, [trace_inv(g, cfg, res.chosen[:i]) for i in range(6)]):
        assert est == pytest.approx(ref, rel=0.25)


def test_run_approx_reproducible(instance):
    g, cfg, _ = instance
    a = run_approx(g, cfg, 3, ApproxParams(seed=9))
    b = run_approx(g, cfg, 3, ApproxParams(seed=9, workers=3))
    assert a.chosen == b.chosen and a.trajectory == b.trajectory


def test_convergence_error_names_probe(instance):
    *_, sys = instance
    with pytest.raises(ConvergenceError) as info:
        f_gains_est(sys, ApproxParams(strict_delta=True, maxiter=1, block=8))
    assert info.value.probe == 0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_sketched_gains_track_exact_on_random_graphs(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(8, 30))
    g = random_connected(n, rng, p=0.3)
    cfg = leader_config(g, rng.choice(n, size=int(rng.integers(1, 4)), replace=False))
    if not len(cfg):
        return
    sys = add_candidate(grounded_laplacian(g, cfg), cfg.candidate(0))
    exact = np.array([e.gain for e in exact_gains(sys, dense_inverse(sys))])
    est = np.array([e.gain for e in f_gains_est(sys, ApproxParams(p=4000, seed=seed, block=128))])
    assert np.allclose(est, exact, rtol=0.2)


def test_path_gain_concentrates(p3):
    g, cfg = p3
    sys = grounded_laplacian(g, cfg)
    hits = 0
    for seed in range(20):
        (est,) = f_gains_est(sys, ApproxParams(epsilon=0.25, seed=seed))
        hits += bool(approx_equal(5.0 / 3.0, est.gain, 0.75))
    assert hits >= 18


def test_smaller_epsilon_shrinks_error():
    g = random_connected(50, np.random.default_rng(21), p=0.1)
    cfg = leader_config(g, [0, 25])
    sys = grounded_laplacian(g, cfg)
    exact = np.array([e.gain for e in exact_gains(sys, dense_inverse(sys))])
    errs = {}
    for eps in (0.25, 0.05):
        est = np.array([e.gain for e in f_gains_est(sys, ApproxParams(epsilon=eps, seed=1, block=256))])
        errs[eps] = float(np.median(np.abs(est / exact - 1)))
    assert errs[0.05] < errs[0.25]


def test_karate_approx_close_to_exact(karate):
    rng = np.random.default_rng(313)
    cfg = leader_config(karate, sorted(rng.choice(karate.n, size=3, replace=False).tolist()))
    exact = run_exact(karate, cfg, 6)
    approx = run_approx(karate, cfg, 6, ApproxParams(epsilon=0.2, seed=0))
    assert trace_inv(karate, cfg, approx.chosen) <= 1.05 * exact.final
