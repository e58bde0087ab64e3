"""Rotary-wing propulsion power and per-slot energy."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .config import Scenario


@dataclass(frozen=True)
class PowerParams:
    p1_blade: float
    p2_induced: float
    u_tip: float
    v0_induced: float
    d0_drag: float
    rho_air: float
    rotor_solidity_g: float
    rotor_area_a: float

    def __post_init__(self) -> None:
        for name, val in vars(self).items():
            if not val > 0:
                raise ValueError(f"{name} must be strictly positive")

    @classmethod
    def from_scenario(cls, scen: Scenario) -> "PowerParams":
        return cls(scen.p1_blade, scen.p2_induced, scen.u_tip, scen.v0_induced,
                   scen.d0_drag, scen.rho_air, scen.rotor_solidity, scen.rotor_area)

    @property
    def hover_power(self) -> float:
        return self.p1_blade + self.p2_induced


def blade_power(v: float, p: PowerParams) -> float:
    return p.p1_blade * (1.0 + 3.0 * v * v / (p.u_tip * p.u_tip))


def induced_power(v: float, p: PowerParams) -> float:
    v0sq = p.v0_induced * p.v0_induced
    inner = math.sqrt(1.0 + v ** 4 / (4.0 * v0sq * v0sq)) - v * v / (2.0 * v0sq)
    return p.p2_induced * math.sqrt(inner)


def parasite_power(v: float, p: PowerParams) -> float:
    return 0.5 * p.d0_drag * p.rho_air * p.rotor_solidity_g * p.rotor_area_a * v ** 3


def propulsion_power(v: float, params: PowerParams) -> float:
    """Blade profile + induced + parasite power (W) at forward speed ``v``."""
    if v < 0:
        raise ValueError("speed must be non-negative")
    if v == 0:
        return params.hover_power
    return blade_power(v, params) + induced_power(v, params) + parasite_power(v, params)


def slot_energy(delta_fly: float, v: float, params: PowerParams, slot_len: float) -> float:
    """Fly for ``delta_fly`` seconds at ``v``, hover for the rest of the slot."""
    if not 0 <= delta_fly <= slot_len:
        raise ValueError("delta_fly must lie in [0, slot_len]")
    return delta_fly * propulsion_power(v, params) + (slot_len - delta_fly) * params.hover_power
