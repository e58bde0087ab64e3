import math

import numpy as np
import pytest

from uavcollect.config import BITS_PER_MB, Scenario, desk_scenario
from uavcollect.env import ALLOCATOR_KINDS, UavDataEnv, baseline_allocator, compare_allocators
from uavcollect.datasets import greedy_nearest_action
from uavcollect.world import UavAction, UavState, coverage_radius


def single_device_env(d_mb=10.0, **kw):
    env = UavDataEnv(Scenario(n_devices=1, n_rbs=1, horizon=5, rb_bandwidth=2e6, **kw))
    env.reset(0)
    env.world.device_xy = np.array([[500.0, 500.0]])
    env.world.d_initial = np.array([d_mb * BITS_PER_MB])
    env.world.d_remaining = env.world.d_initial.copy()
    return env


def test_hover_over_device_collects_everything():
    env = single_device_env()
    out = env.step(UavAction(0, 0, 0))
    assert out.collected.sum() == 10 * BITS_PER_MB
    assert out.energy == pytest.approx(842.45)
    assert out.reward / BITS_PER_MB == pytest.approx(0.01187, abs=1e-5)
    assert out.done  # early stop: nothing left
    assert env.world.d_remaining[0] == 0


def test_no_coverage_no_data():
    env = single_device_env()
    env.world.uav = UavState(0.0, 0.0)
    out = env.step(UavAction(0, 0, 0))
    assert out.reward == 0 and out.collected.sum() == 0 and out.energy == pytest.approx(842.45)


def test_full_flight_slot_collects_nothing():
    env = single_device_env()
    out = env.step(UavAction(0.0, 1.0, 5.0))
    assert out.collected.sum() == 0


def test_horizon_ends_episode():
    env = UavDataEnv(Scenario(n_devices=3, n_rbs=1, horizon=4, early_stop=False))
    env.reset(0)
    dones = [env.step(UavAction(0, 0, 0)).done for _ in range(4)]
    assert dones == [False, False, False, True]


def test_step_rejects_bad_action_and_leaves_state():
    env = UavDataEnv(desk_scenario())
    env.reset(0)
    before = env.world.copy()
    with pytest.raises(ValueError):
        env.step(UavAction(0.0, 30.0, 1.0))
    assert env.world.uav == before.uav and env.world.t == before.t


def test_step_before_reset():
    with pytest.raises(RuntimeError):
        UavDataEnv(desk_scenario()).step(UavAction(0, 0, 0))


def test_reset_is_seeded():
    env = UavDataEnv(desk_scenario())
    a, b, c = env.reset(1), env.reset(1), env.reset(2)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    d0 = env.world.d_initial / BITS_PER_MB
    assert ((d0 >= 10) & (d0 <= 20)).all()


def test_observation_layout():
    env = UavDataEnv(desk_scenario())
    obs = env.reset(0)
    assert obs.shape == (env.obs_dim,) == (2 + 2 * 15,)
    assert obs[:2].tolist() == [0.5, 0.5]
    np.testing.assert_array_equal(obs[17:], env.covered().astype(float))


def test_action_normalization_round_trip():
    env = UavDataEnv(desk_scenario())
    act = UavAction(1.0, 12.5, 2.0)
    u = env.normalize_action(act.as_tuple())
    assert u.tolist() == pytest.approx([1 / (2 * math.pi), 0.5, 0.4])
    assert env.denormalize_action(u).as_tuple() == pytest.approx(act.as_tuple())
    assert env.denormalize_action([1.5, -1, 0.5]).as_tuple() == pytest.approx((2 * math.pi, 0, 2.5))


def test_reward_recomputation_and_conservation():
    env = UavDataEnv(desk_scenario())
    rng = np.random.default_rng(0)
    for seed in range(5):
        env.reset(seed)
        d0 = env.world.d_initial.copy()
        total = np.zeros_like(d0)
        done = False
        while not done:
            act = env.denormalize_action(rng.uniform(size=3)) if rng.uniform() < 0.5 else greedy_nearest_action(env)
            out = env.step(act)
            total += out.collected
            assert out.reward * out.energy == pytest.approx(out.collected.sum(), rel=1e-9, abs=1e-6)
            assert (out.collected <= env.scenario.n_rbs * 1e12).all()
            assert (total <= d0 * (1 + 1e-12)).all()
            assert (out.collected >= 0).all()
            done = out.done
        np.testing.assert_allclose(env.world.d_remaining, np.maximum(d0 - total, 0), rtol=1e-9, atol=1e-3)


def test_at_most_n_rbs_devices_served():
    env = UavDataEnv(Scenario(n_devices=30, n_rbs=2, horizon=3, x_max=300, y_max=300))
    env.reset(0)
    out = env.step(UavAction(0, 0, 0))
    assert int((out.collected > 0).sum()) <= 2


def test_baseline_allocators_never_beat_optimal_per_slot():
    scen = desk_scenario(n_rbs=2)
    for kind in ALLOCATOR_KINDS[1:]:
        rng = np.random.default_rng(0)
        rows = compare_allocators(UavDataEnv(scen), lambda env, r: greedy_nearest_action(env), 0, rng,
                                  ("optimal", kind))
        by_slot = {}
        for row in rows:
            by_slot.setdefault(row["slot"], {})[row["allocator"]] = row["collected_bits"]
        assert all(v["optimal"] >= v[kind] for v in by_slot.values())


def test_baseline_env_runs():
    env = UavDataEnv(desk_scenario(), baseline_allocator("random", np.random.default_rng(0)))
    env.reset(0)
    out = env.step(UavAction(0, 0, 0))
    assert np.isfinite(out.reward)


def test_covered_observation_matches_radius():
    env = UavDataEnv(desk_scenario())
    env.reset(0)
    r = coverage_radius(env.region, env.sim)
    d = np.hypot(*(env.device_xy - [500, 500]).T)
    np.testing.assert_array_equal(env.covered(), d <= r)
