import zlib

import numpy as np
import pytest

from netlspi import oracle
from netlspi.adaptation import AdaptationConfig
from netlspi.seeding import derive_rng, episode_rng, label_key
from netlspi.tasks import initial_policy, make_task, pendulum_task, point_mass_task, rollout


class TestSeeding:
    def test_label_key_is_crc32(self):
        assert label_key("plant") == zlib.crc32(b"plant")

    def test_independent_streams(self):
        a = derive_rng(1, "plant").standard_normal(4)
        b = derive_rng(1, "w0").standard_normal(4)
        c = derive_rng(2, "plant").standard_normal(4)
        assert not np.array_equal(a, b) and not np.array_equal(a, c)
        np.testing.assert_array_equal(a, derive_rng(1, "plant").standard_normal(4))

    def test_documented_layout(self):
        ss = np.random.SeedSequence(entropy=5, spawn_key=(zlib.crc32(b"adapt"), 3))
        ref = np.random.default_rng(ss).standard_normal(3)
        np.testing.assert_array_equal(episode_rng(5, "adapt", 3).standard_normal(3), ref)


class TestTasks:
    def test_point_mass_defaults(self):
        t = point_mass_task()
        np.testing.assert_array_equal(np.diag(t.Q_plant), [10, 10, 0, 0])
        np.testing.assert_array_equal(t.S, 2 * np.eye(10))
        np.testing.assert_array_equal(t.R, 2 * np.eye(10))
        np.testing.assert_array_equal(t.initial_state[:2], [-1, 0])
        assert not np.any(t.initial_state[2:])
        assert t.horizon == 500

    def test_pendulum_defaults(self):
        t = pendulum_task()
        np.testing.assert_array_equal(np.diag(t.Q_plant), [1, 10, 1, 10])
        np.testing.assert_array_equal(t.initial_state[:4], [0, 0.1, 0, 0])
        assert t.horizon == 400

    def test_unknown(self):
        with pytest.raises(ValueError):
            make_task("rocket")

    def test_positions_unshifted(self, pm_task):
        traj = rollout(pm_task.system, np.zeros((10, 14)), pm_task.initial_state, 3)
        np.testing.assert_array_equal(pm_task.positions(traj), np.zeros((4, 2)))

    def test_rollout_stops_on_blow_up(self, pend_task):
        W = 1e3 * np.ones((10, 14))
        traj = rollout(pend_task.system, W, pend_task.initial_state, 400)
        assert traj.diverged and not pend_task.success(traj)

    def test_success(self, pm_task):
        sol = oracle.solve_discounted_riccati(pm_task.system, 0.99)
        traj = rollout(pm_task.system, sol.W_star, pm_task.initial_state, 500)
        assert pm_task.success(traj)
        assert not pm_task.success(rollout(pm_task.system, np.zeros((10, 14)), pm_task.initial_state, 500))


class TestInitialPolicy:
    def test_zero(self, pm_task):
        assert not np.any(initial_policy(pm_task, AdaptationConfig()))

    @pytest.mark.parametrize("gamma", [0.7, 0.99])
    def test_oracle_perturbation_is_stabilizing(self, pend_task, gamma):
        for seed in range(10):
            cfg = AdaptationConfig(T=400, gamma=gamma, seed=seed)
            W0 = initial_policy(pend_task, cfg, "oracle")
            assert oracle.closed_loop_radius(pend_task.system, W0) < 1
            W_star = oracle.solve_discounted_riccati(pend_task.system, gamma).W_star
            assert np.all(np.abs(W0 / W_star - 1) <= 0.2 + 1e-12)

    def test_oracle_perturbation_reproducible(self, pend_task):
        cfg = AdaptationConfig(T=400)
        a = initial_policy(pend_task, cfg, "oracle")
        np.testing.assert_array_equal(a, initial_policy(pend_task, cfg, "oracle"))

    def test_unknown_kind(self, pm_task):
        with pytest.raises(ValueError):
            initial_policy(pm_task, AdaptationConfig(), "random")
