from __future__ import annotations

import io

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import random_connected
from polarmin.baselines import exact_polarization
from polarmin.dynamics import SimulationConfig, simulate, stability_bound
from polarmin.errors import StabilityError, ValidationError
from polarmin.graph import CandidateEdge, Graph, add_candidate, grounded_laplacian, leader_config


class TestStabilityBound:
    def test_identity(self):
        assert stability_bound(np.eye(4)) == pytest.approx(2.0)

    def test_two_by_two(self):
        assert stability_bound(np.array([[2.0, -1.0], [-1.0, 2.0]])) == pytest.approx(2.0 / 3.0, rel=1e-4)

    def test_never_above_true_bound(self):
        g = random_connected(40, np.random.default_rng(0))
        sys = grounded_laplacian(g, leader_config(g, [0]))
        lam = np.linalg.eigvalsh(sys.dense())[-1]
        assert stability_bound(sys) <= 2.0 / lam * (1 + 1e-12)
        assert stability_bound(sys) >= 2.0 / lam * 0.99

    def test_sparse_input(self):
        assert stability_bound(sp.identity(3, format="csr") * 4.0) == pytest.approx(0.5)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"dt": 0.0}, {"t_sample": 0.0}, {"t_burn": -1.0},
                                    {"n_paths": 0}, {"n_batches": 0}])
    def test_rejected(self, kw):
        with pytest.raises(ValidationError):
            SimulationConfig(**kw)

    def test_unstable_step_rejected(self, k3):
        g, cfg = k3
        with pytest.raises(StabilityError) as info:
            simulate(g, cfg, SimulationConfig(dt=1.0))
        assert info.value.bound == pytest.approx(2.0 / 3.0, rel=1e-4)
        assert info.value.suggested_dt < info.value.bound


def test_single_follower_matches_ou_variance():
    # one follower tied to a leader by weight w: dx = -w x dt + dW, variance 1/(2w)
    w = 2.5
    g = Graph.from_edges(2, [(0, 1, w)])
    cfg = leader_config(g, [0])
    bound = stability_bound(grounded_laplacian(g, cfg))
    est = simulate(g, cfg, SimulationConfig(dt=0.01 * bound, t_burn=10, t_sample=400, n_paths=16, seed=1))
    assert est.value == pytest.approx(1.0 / (2 * w), rel=0.05)
    assert abs(est.value - 1.0 / (2 * w)) <= max(3 * est.stderr, 0.05 / (2 * w))


def test_karate_matches_half_trace(karate):
    cfg = leader_config(karate, [0, 33])
    exact = exact_polarization(karate, cfg)
    est = simulate(karate, cfg, SimulationConfig(seed=3))
    assert abs(est.value - exact) <= max(3 * est.stderr, 0.05 * exact)


def test_added_edges_lower_polarization():
    g = Graph.from_edges(6, [(i, i + 1) for i in range(5)])
    cfg = leader_config(g, [0])
    sim = SimulationConfig(seed=0, t_sample=300)
    before = simulate(g, cfg, sim).value
    after = simulate(g, cfg, sim, added=[CandidateEdge(0, 5)]).value
    sys = add_candidate(grounded_laplacian(g, cfg), CandidateEdge(0, 5))
    assert after < before
    assert after == pytest.approx(0.5 * np.trace(np.linalg.inv(sys.dense())), rel=0.1)


def test_noise_free_relaxes_to_leaders(karate):
    cfg = leader_config(karate, [0, 33])
    est = simulate(karate, cfg, SimulationConfig(noise=False, initial_offset=1.0, leader_value=2.0,
                                                 t_burn=200, t_sample=10, n_paths=1))
    assert np.allclose(est.state, 2.0, atol=1e-8)
    assert np.all(est.state[list(cfg.leaders)] == 2.0)


def test_leaders_never_move(karate):
    cfg = leader_config(karate, [0, 33])
    est = simulate(karate, cfg, SimulationConfig(leader_value=-1.5, t_burn=1, t_sample=5, n_paths=3))
    assert np.all(est.state[list(cfg.leaders)] == -1.5)
    assert est.state.shape == (karate.n, 3)


def test_leader_value_shift_is_invisible(p4):
    g, cfg = p4
    a = simulate(g, cfg, SimulationConfig(seed=2, t_sample=50))
    b = simulate(g, cfg, SimulationConfig(seed=2, t_sample=50, leader_value=10.0))
    assert b.value == pytest.approx(a.value, rel=1e-9)


def test_reproducible_and_seed_dependent(p4):
    g, cfg = p4
    sim = SimulationConfig(seed=5, t_sample=20)
    assert simulate(g, cfg, sim) == simulate(g, cfg, sim)
    assert simulate(g, cfg, sim).value != simulate(g, cfg, SimulationConfig(seed=6, t_sample=20)).value


def test_sample_count(p4):
    g, cfg = p4
    est = simulate(g, cfg, SimulationConfig(dt=0.05, t_burn=1, t_sample=10, n_paths=2, n_batches=4))
    assert est.samples_used == 200 * 2
    assert est.dt == 0.05


def test_trajectory_csv(p3):
    g, cfg = p3
    buf = io.StringIO()
    simulate(g, cfg, SimulationConfig(dt=0.05, t_burn=0, t_sample=1.0, n_batches=1, n_paths=2),
             trajectory=buf, record_every=10)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,follower_id,x"
    # 20 steps, a record every 10, two followers labelled 1 and 2
    assert len(lines) == 1 + 2 * 2
    assert [ln.split(",")[1] for ln in lines[1:]] == ["1", "2", "1", "2"]
    assert lines[1].split(",")[0] == "0.5"


def test_single_unit_follower_half():
    g = Graph.from_edges(2, [(0, 1)])
    cfg = leader_config(g, [0])
    dt = 0.01 * stability_bound(grounded_laplacian(g, cfg))
    est = simulate(g, cfg, SimulationConfig(dt=dt, t_burn=10, t_sample=400, n_paths=16, seed=4))
    assert abs(est.value - 0.5) <= 3 * est.stderr


def test_path_default_step_matches_oracle(p3):
    g, cfg = p3
    est = simulate(g, cfg, SimulationConfig(seed=9))
    assert abs(est.value - 1.5) <= max(3 * est.stderr, 0.05 * 1.5)
