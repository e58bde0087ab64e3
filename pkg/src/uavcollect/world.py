"""Region geometry, device population, UAV kinematics and coverage."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import BITS_PER_MB, Scenario


@dataclass(frozen=True)
class Region:
    x_max: float
    y_max: float
    altitude_h: float

    def __post_init__(self) -> None:
        if not (self.x_max > 0 and self.y_max > 0 and self.altitude_h > 0):
            raise ValueError("region dimensions and altitude must be strictly positive")

    @classmethod
    def from_scenario(cls, scen: Scenario) -> "Region":
        return cls(scen.x_max, scen.y_max, scen.altitude)


@dataclass(frozen=True)
class Device:
    id: int
    x: float
    y: float
    d_initial: float
    d_remaining: float


@dataclass(frozen=True)
class UavState:
    x: float
    y: float


@dataclass(frozen=True)
class UavAction:
    theta: float
    v: float
    delta_fly: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.theta, self.v, self.delta_fly)


@dataclass(frozen=True)
class SimParams:
    v_max: float
    slot_len_delta: float
    omega_max: float

    @classmethod
    def from_scenario(cls, scen: Scenario) -> "SimParams":
        return cls(scen.v_max, scen.slot_len, scen.omega_max)


def validate_action(act: UavAction, params: SimParams) -> None:
    theta, v, fly = act.as_tuple()
    for name, val, hi in (("theta", theta, 2 * math.pi), ("v", v, params.v_max),
                          ("delta_fly", fly, params.slot_len_delta)):
        if not math.isfinite(val):
            raise ValueError(f"action component {name} is not finite: {val!r}")
        if val < 0 or val > hi:
            raise ValueError(f"action component {name}={val!r} outside [0, {hi!r}]")


def advance_uav(uav: UavState, act: UavAction, region: Region, params: SimParams) -> UavState:
    """Move the UAV for one slot; each coordinate is clamped to the region."""
    validate_action(act, params)
    step = act.v * act.delta_fly
    x = uav.x + step * math.cos(act.theta)
    y = uav.y + step * math.sin(act.theta)
    return UavState(min(max(x, 0.0), region.x_max), min(max(y, 0.0), region.y_max))


def coverage_radius(region: Region, params: SimParams) -> float:
    if not 0 < params.omega_max < math.pi / 2:
        raise ValueError("omega_max must lie in (0, pi/2)")
    return region.altitude_h * math.tan(params.omega_max)


def horizontal_distances(uav: UavState, device_xy: np.ndarray) -> np.ndarray:
    return np.hypot(device_xy[:, 0] - uav.x, device_xy[:, 1] - uav.y)


def covered_mask(uav: UavState, device_xy: np.ndarray, region: Region, params: SimParams) -> np.ndarray:
    return horizontal_distances(uav, device_xy) <= coverage_radius(region, params)


def covered_set(uav: UavState, device_xy: np.ndarray, region: Region, params: SimParams) -> set[int]:
    """Ids of devices within horizontal range R_max of the UAV (boundary inclusive)."""
    return {int(i) for i in np.flatnonzero(covered_mask(uav, device_xy, region, params))}


def place_devices(scen: Scenario) -> np.ndarray:
    """Uniform device positions in the rectangle, fixed by the scenario seed."""
    rng = np.random.default_rng([scen.seed, 0x5EED])
    xs = rng.uniform(0.0, scen.x_max, scen.n_devices)
    ys = rng.uniform(0.0, scen.y_max, scen.n_devices)
    return np.stack([xs, ys], axis=1)


def draw_data_volumes(scen: Scenario, seed: int) -> np.ndarray:
    """Initial data D_n ~ U[0.5 D_max, D_max] in bits, per episode seed."""
    rng = np.random.default_rng([scen.seed, seed, 0xDA7A])
    d_max = scen.d_max_mb * BITS_PER_MB
    return rng.uniform(0.5 * d_max, d_max, scen.n_devices)


@dataclass
class WorldState:
    """Ground truth of one simulated episode."""

    uav: UavState
    device_xy: np.ndarray
    d_initial: np.ndarray
    d_remaining: np.ndarray
    t: int = 1

    @property
    def n_devices(self) -> int:
        return len(self.d_initial)

    def devices(self) -> list[Device]:
        return [Device(i, float(x), float(y), float(d0), float(d))
                for i, ((x, y), d0, d) in enumerate(zip(self.device_xy, self.d_initial, self.d_remaining))]

    def copy(self) -> "WorldState":
        return WorldState(self.uav, self.device_xy.copy(), self.d_initial.copy(),
                          self.d_remaining.copy(), self.t)
