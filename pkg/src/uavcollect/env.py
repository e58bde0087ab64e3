"""Slot-level MDP: move, cover, rate, allocate, collect, reward."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import allocator as alloc
from .config import BITS_PER_MB, Scenario
from .energy import PowerParams, slot_energy
from .radio import ChannelParams, expected_gain, rate_matrix
from .world import (Region, SimParams, UavAction, UavState, WorldState, advance_uav,
                    covered_mask, draw_data_volumes, place_devices, validate_action)

Allocator = Callable[[alloc.AllocationInstance, WorldState, np.ndarray], alloc.AllocationResult]


@dataclass(frozen=True)
class StepOutcome:
    next_obs: np.ndarray
    reward: float  # bits/J
    collected: np.ndarray  # bits per device
    energy: float  # J
    done: bool


def optimal_allocator(inst, world, gains):
    return alloc.solve_optimal(inst)


def baseline_allocator(kind: str, rng: np.random.Generator | None = None) -> Allocator:
    def run(inst, world, gains):
        aux = {"remaining": world.d_remaining, "gain": gains}
        return alloc.solve_baseline(inst, kind, aux, rng)
    return run


class UavDataEnv:
    """One UAV collecting data from a fixed device layout."""

    def __init__(self, scenario: Scenario, allocator: Allocator = optimal_allocator):
        self.scenario = scenario
        self.region = Region.from_scenario(scenario)
        self.sim = SimParams.from_scenario(scenario)
        self.channel = ChannelParams.from_scenario(scenario)
        self.power = PowerParams.from_scenario(scenario)
        self.device_xy = place_devices(scenario)
        self.allocator = allocator
        self.world: WorldState | None = None

    @property
    def obs_dim(self) -> int:
        return 2 + 2 * self.scenario.n_devices

    @property
    def action_high(self) -> np.ndarray:
        return np.array([2 * math.pi, self.sim.v_max, self.sim.slot_len_delta])

    def reset(self, seed: int = 0) -> np.ndarray:
        s = self.scenario
        d0 = draw_data_volumes(s, seed)
        self.world = WorldState(UavState(s.x_max / 2, s.y_max / 2), self.device_xy, d0, d0.copy(), t=1)
        return self.encode_observation(self.world)

    def covered(self, world: WorldState | None = None) -> np.ndarray:
        world = world or self.world
        return covered_mask(world.uav, world.device_xy, self.region, self.sim)

    def encode_observation(self, world: WorldState) -> np.ndarray:
        d_max = self.scenario.d_max_mb * BITS_PER_MB
        return np.concatenate([
            [world.uav.x / self.region.x_max, world.uav.y / self.region.y_max],
            world.d_remaining / d_max,
            self.covered(world).astype(float),
        ])

    def allocate(self, world: WorldState, delta_hover: float):
        """Build and solve the slot allocation problem at the UAV's current position."""
        cov = self.covered(world)
        rates = rate_matrix(world.uav, world.device_xy, self.region, self.channel, self.scenario.n_rbs)
        inst = alloc.build_instance(rates, world.d_remaining, cov, delta_hover)
        gains = expected_gain(world.uav, world.device_xy, self.region, self.channel)
        return inst, self.allocator(inst, world, gains)

    def step(self, action) -> StepOutcome:
        if self.world is None:
            raise RuntimeError("reset() must be called before step()")
        act = action if isinstance(action, UavAction) else UavAction(*map(float, action))
        validate_action(act, self.sim)
        w = self.world.copy()
        w.uav = advance_uav(w.uav, act, self.region, self.sim)
        delta_hover = self.sim.slot_len_delta - act.delta_fly
        inst, res = self.allocate(w, delta_hover)
        collected = np.minimum(res.collected(inst), w.d_remaining)
        w.d_remaining = np.maximum(w.d_remaining - collected, 0.0)
        energy = slot_energy(act.delta_fly, act.v, self.power, self.sim.slot_len_delta)
        reward = float(collected.sum()) / energy
        w.t += 1
        done = w.t > self.scenario.horizon or (self.scenario.early_stop and not (w.d_remaining > 0).any())
        self.world = w
        return StepOutcome(self.encode_observation(w), reward, collected, energy, done)

    def normalize_action(self, act) -> np.ndarray:
        return np.asarray(act, dtype=float) / self.action_high

    def denormalize_action(self, u) -> UavAction:
        hi = self.action_high
        vals = np.clip(np.asarray(u, dtype=float), 0.0, 1.0) * hi
        return UavAction(*(float(x) for x in vals))


ALLOCATOR_KINDS = ("optimal",) + alloc.BASELINE_KINDS


def compare_allocators(env: UavDataEnv, policy, seed: int, rng: np.random.Generator,
                       kinds=ALLOCATOR_KINDS) -> list[dict]:
    """Replay one episode and score every allocator on each slot's identical instance.

    The world advances with the optimal allocation, so all kinds see the same
    positions and remaining data. ``policy(env, rng)`` returns a UavAction.
    """
    env.reset(seed)
    rows = []
    done = False
    slot = 0
    while not done:
        act = policy(env, rng)
        validate_action(act, env.sim)
        w = env.world.copy()
        w.uav = advance_uav(w.uav, act, env.region, env.sim)
        inst, _ = env.allocate(w, env.sim.slot_len_delta - act.delta_fly)
        gains = expected_gain(w.uav, w.device_xy, env.region, env.channel)
        energy = slot_energy(act.delta_fly, act.v, env.power, env.sim.slot_len_delta)
        slot += 1
        for kind in kinds:
            if kind == "optimal":
                res = alloc.solve_optimal(inst)
            else:
                res = alloc.solve_baseline(inst, kind, {"remaining": w.d_remaining, "gain": gains}, rng)
            bits = float(res.collected(inst).sum())
            rows.append({"slot": slot, "allocator": kind, "collected_bits": bits, "energy_j": energy,
                         "efficiency_bits_per_j": bits / energy,
                         "contended": int(inst.covered.sum()) > env.scenario.n_rbs})
        done = env.step(act).done
    return rows
