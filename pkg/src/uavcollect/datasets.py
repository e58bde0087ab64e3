"""Behavior policies, offline trajectory generation and dataset files.

File layout (one JSON object per line):

    {"format_version": 1, "scenario_hash": ..., "policy_tag": ..., "episodes": E,
     "reward_norm": c, "number_encoding": "decimal" | "binary64", "scenario": {...}}
    {"seed": s, "steps": [{"rtg": .., "state": [..], "action": [3], "reward": ..}, ...]}
    ...

``decimal`` writes shortest round-trip decimal floats; ``binary64`` writes
each episode's columns as base64 little-endian IEEE-754 doubles.
"""
from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import Scenario, from_mapping
from .env import UavDataEnv
from .world import UavAction, coverage_radius

FORMAT_VERSION = 1


def compute_rtg(rewards) -> np.ndarray:
    """Suffix sums, accumulated so that rtg[t] == rtg[t+1] + r[t] exactly."""
    r = np.asarray(rewards, dtype=float)
    if r.size == 0:
        raise ValueError("rewards must be non-empty")
    out = np.empty_like(r)
    acc = 0.0
    for t in range(len(r) - 1, -1, -1):
        acc = r[t] + acc
        out[t] = acc
    return out


@dataclass
class Trajectory:
    states: np.ndarray  # (T, S) observations
    actions: np.ndarray  # (T, 3) physical units (theta, v, delta_fly)
    rewards: np.ndarray  # (T,) bits/J
    rtg: np.ndarray  # (T,)
    seed: int = 0
    policy_tag: str = ""
    scenario_hash: str = ""
    # per-step diagnostics, not serialized
    energy: np.ndarray | None = field(default=None, repr=False)
    collected: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def episode_return(self) -> float:
        return float(self.rewards.sum())


@dataclass
class Dataset:
    trajectories: list[Trajectory]
    scenario: Scenario
    policy_tag: str
    reward_norm: float
    number_encoding: str = "decimal"

    @property
    def scenario_hash(self) -> str:
        return self.scenario.content_hash()

    def returns(self) -> np.ndarray:
        return np.array([t.episode_return for t in self.trajectories])

    def subset(self, fraction: float, seed: int = 0) -> "Dataset":
        n = max(1, int(round(fraction * len(self.trajectories))))
        idx = np.sort(np.random.default_rng(seed).choice(len(self.trajectories), n, replace=False))
        return Dataset([self.trajectories[i] for i in idx], self.scenario, self.policy_tag,
                       self.reward_norm, self.number_encoding)


# --- behavior policies --------------------------------------------------------

def greedy_nearest_action(env: UavDataEnv, fly_budget: float = 0.5) -> UavAction:
    """Hover while covered devices still hold data, else fly toward the nearest one.

    Speed is chosen so the trip takes ``fly_budget`` of the slot when possible,
    leaving the rest for hovering on arrival.
    """
    w = env.world
    pending = w.d_remaining > 0
    if not pending.any() or (pending & env.covered(w)).any():
        return UavAction(0.0, 0.0, 0.0)
    dx = w.device_xy[:, 0] - w.uav.x
    dy = w.device_xy[:, 1] - w.uav.y
    dist = np.where(pending, np.hypot(dx, dy), np.inf)
    n = int(np.argmin(dist))
    theta = math.atan2(dy[n], dx[n]) % (2 * math.pi)
    delta = env.sim.slot_len_delta
    v = min(env.sim.v_max, dist[n] / (fly_budget * delta))
    fly = min(delta, dist[n] / v)
    return UavAction(theta, v, fly)


@dataclass(frozen=True)
class BehaviorPolicy:
    kind: str = "greedy_nearest"  # greedy_nearest | noisy | random
    sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("greedy_nearest", "noisy", "random"):
            raise ValueError(f"unknown behavior policy {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    @property
    def tag(self) -> str:
        return f"noisy(sigma={self.sigma:g})" if self.kind == "noisy" else self.kind

    @classmethod
    def parse(cls, text: str) -> "BehaviorPolicy":
        """``greedy_nearest``, ``random`` or ``noisy:<sigma>``."""
        kind, _, arg = text.partition(":")
        return cls(kind, float(arg)) if arg else cls(kind)

    def act(self, env: UavDataEnv, rng: np.random.Generator) -> UavAction:
        if self.kind == "random":
            return env.denormalize_action(rng.uniform(0.0, 1.0, 3))
        act = greedy_nearest_action(env)
        if self.kind == "greedy_nearest" or self.sigma == 0:
            return act
        u = env.normalize_action(act.as_tuple())
        noise = np.clip(rng.normal(0.0, self.sigma, 3), -2 * self.sigma, 2 * self.sigma)
        return env.denormalize_action(np.clip(u + noise, 0.0, 1.0))


class WaypointPolicy:
    """Scripted flight plan: each slot flies toward the current waypoint for at
    most ``fly`` seconds at speed ``v`` and hovers for the rest of the slot."""

    def __init__(self, waypoints, v: float, fly: float):
        if not waypoints:
            raise ValueError("need at least one waypoint")
        self.waypoints = [tuple(map(float, w)) for w in waypoints]
        self.v, self.fly = float(v), float(fly)
        self._next = 0

    def __call__(self, env: UavDataEnv, rng=None) -> UavAction:
        if env.world.t == 1:
            self._next = 0
        u = env.world.uav
        for _ in range(len(self.waypoints)):
            wx, wy = self.waypoints[self._next % len(self.waypoints)]
            dist = math.hypot(wx - u.x, wy - u.y)
            if dist > 1e-9:
                break
            self._next += 1
        else:
            return UavAction(0.0, 0.0, 0.0)
        fly = min(self.fly, dist / self.v)
        if fly < self.fly:
            self._next += 1  # arrives this slot
        return UavAction(math.atan2(wy - u.y, wx - u.x) % (2 * math.pi), self.v, fly)


def lawnmower_route(x_max: float, y_max: float, spacing: float, offset: float) -> list[tuple[float, float]]:
    """Back-and-forth lanes parallel to the x axis, ``spacing`` apart."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    pts, y, eastward = [], offset, True
    while y <= y_max:
        pts += [(0.0, y), (x_max, y)] if eastward else [(x_max, y), (0.0, y)]
        eastward = not eastward
        y += spacing
    return pts


def survey_policy(env: UavDataEnv, rng: np.random.Generator) -> WaypointPolicy:
    """Random lawnmower survey whose lanes are at least one coverage diameter apart."""
    r = coverage_radius(env.region, env.sim)
    route = lawnmower_route(env.region.x_max, env.region.y_max, rng.uniform(2.0, 2.6) * r,
                            rng.uniform(0.25, 1.0) * r)
    delta = env.sim.slot_len_delta
    return WaypointPolicy(route, rng.uniform(0.3, 0.8) * env.sim.v_max, rng.uniform(0.3, 0.7) * delta)


def run_episode(env: UavDataEnv, policy, seed: int, rng: np.random.Generator | None = None) -> Trajectory:
    """Roll out ``policy`` (a BehaviorPolicy or callable(env, rng) -> action)."""
    rng = rng if rng is not None else np.random.default_rng([seed, 1])
    obs = env.reset(seed)
    states, actions, rewards, energy, collected = [], [], [], [], []
    act_fn = policy.act if isinstance(policy, BehaviorPolicy) else policy
    while True:
        act = act_fn(env, rng)
        out = env.step(act)
        states.append(obs)
        actions.append(act.as_tuple())
        rewards.append(out.reward)
        energy.append(out.energy)
        collected.append(out.collected)
        obs = out.next_obs
        if out.done:
            break
    rewards_arr = np.array(rewards)
    tag = policy.tag if isinstance(policy, BehaviorPolicy) else getattr(policy, "__name__", "custom")
    return Trajectory(np.array(states), np.array(actions), rewards_arr, compute_rtg(rewards_arr),
                      seed=int(seed), policy_tag=tag, scenario_hash=env.scenario.content_hash(),
                      energy=np.array(energy), collected=np.array(collected))


def episode_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def generate_dataset(policy: BehaviorPolicy, scenario: Scenario, episodes: int, seed: int,
                     number_encoding: str = "decimal") -> Dataset:
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    env = UavDataEnv(scenario)
    trajs = [run_episode(env, policy, s) for s in episode_seeds(seed, episodes)]
    # largest per-step reward: normalized rewards lie in [0, 1]
    peak = float(np.max(np.concatenate([t.rewards for t in trajs])))
    reward_norm = peak if peak > 0 else 1.0
    return Dataset(trajs, scenario, policy.tag, reward_norm, number_encoding)


# --- serialization --------------------------------------------------------------

def _b64(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode()


def _unb64(text: str, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(text), dtype="<f8").reshape(shape).astype(float)


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def save_dataset(ds: Dataset, path: str | Path) -> None:
    header = {
        "format_version": FORMAT_VERSION, "scenario_hash": ds.scenario_hash,
        "policy_tag": ds.policy_tag, "episodes": len(ds.trajectories),
        "reward_norm": ds.reward_norm, "number_encoding": ds.number_encoding,
        "scenario": ds.scenario.to_dict(),
    }
    lines = [_dumps(header)]
    for tr in ds.trajectories:
        if ds.number_encoding == "decimal":
            steps = [{"rtg": float(g), "state": s.tolist(), "action": a.tolist(), "reward": float(r)}
                     for g, s, a, r in zip(tr.rtg, tr.states, tr.actions, tr.rewards)]
            lines.append(_dumps({"seed": tr.seed, "steps": steps}))
        elif ds.number_encoding == "binary64":
            lines.append(_dumps({"seed": tr.seed, "n_steps": len(tr), "state_dim": tr.states.shape[1],
                                 "rtg": _b64(tr.rtg), "state": _b64(tr.states),
                                 "action": _b64(tr.actions), "reward": _b64(tr.rewards)}))
        else:
            raise ValueError(f"unknown number encoding {ds.number_encoding!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path: str | Path) -> Dataset:
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported dataset format {header.get('format_version')!r}")
    scenario = from_mapping(Scenario, header["scenario"])
    if scenario.content_hash() != header["scenario_hash"]:
        raise ValueError(f"{path}: scenario hash mismatch")
    enc = header["number_encoding"]
    trajs = []
    for line in lines[1:]:
        rec = json.loads(line)
        if enc == "decimal":
            steps = rec["steps"]
            rtg = np.array([s["rtg"] for s in steps], dtype=float)
            states = np.array([s["state"] for s in steps], dtype=float)
            actions = np.array([s["action"] for s in steps], dtype=float).reshape(-1, 3)
            rewards = np.array([s["reward"] for s in steps], dtype=float)
        else:
            n, sd = rec["n_steps"], rec["state_dim"]
            rtg, rewards = _unb64(rec["rtg"], (n,)), _unb64(rec["reward"], (n,))
            states, actions = _unb64(rec["state"], (n, sd)), _unb64(rec["action"], (n, 3))
        trajs.append(Trajectory(states, actions, rewards, rtg, seed=rec["seed"],
                                policy_tag=header["policy_tag"], scenario_hash=header["scenario_hash"]))
    if len(trajs) != header["episodes"]:
        raise ValueError(f"{path}: header lists {header['episodes']} episodes, found {len(trajs)}")
    return Dataset(trajs, scenario, header["policy_tag"], header["reward_norm"], enc)

