"""Probabilistic LoS air-to-ground channel and per-RB rate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Scenario
from .world import Region, UavState


@dataclass(frozen=True)
class ChannelParams:
    a: float
    b: float
    g0: float
    kappa: float
    iota: float
    p_tx: float
    rb_bandwidth_w: float
    noise_psd_n0: float
    interference_i: float = 0.0

    def __post_init__(self) -> None:
        if not 0 < self.kappa < 1:
            raise ValueError("kappa must lie in (0, 1)")
        if self.iota <= 0 or self.a <= 0 or self.b <= 0:
            raise ValueError("iota, a, b must be positive")
        if self.rb_bandwidth_w <= 0 or self.p_tx <= 0:
            raise ValueError("bandwidth and transmit power must be positive")
        if self.interference_i < 0:
            raise ValueError("interference must be non-negative")

    @classmethod
    def from_scenario(cls, scen: Scenario) -> "ChannelParams":
        return cls(
            a=scen.a, b=scen.b, g0=db_to_linear(scen.g0_db), kappa=scen.kappa, iota=scen.iota,
            p_tx=scen.p_tx, rb_bandwidth_w=scen.rb_bandwidth,
            noise_psd_n0=dbm_to_watts(scen.n0_dbm_hz), interference_i=scen.interference,
        )


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def elevation_angle(uav: UavState, device_xy, region: Region):
    """Elevation angle in degrees; 90 when the device is directly below.

    Accepts a single (x, y) pair or an (N, 2) array.
    """
    xy = np.asarray(device_xy, dtype=float)
    dist = np.hypot(xy[..., 0] - uav.x, xy[..., 1] - uav.y)
    with np.errstate(divide="ignore"):
        deg = np.degrees(np.arctan(region.altitude_h / dist))
    return float(deg) if deg.ndim == 0 else deg


def los_probability(omega_deg, params: ChannelParams):
    return 1.0 / (1.0 + params.a * np.exp(-params.b * (np.asarray(omega_deg) - params.a)))


def nlos_probability(omega_deg, params: ChannelParams):
    return 1.0 - los_probability(omega_deg, params)


def expected_gain(uav: UavState, device_xy, region: Region, params: ChannelParams):
    xy = np.asarray(device_xy, dtype=float)
    p_los = los_probability(elevation_angle(uav, xy, region), params)
    d2 = region.altitude_h ** 2 + (xy[..., 0] - uav.x) ** 2 + (xy[..., 1] - uav.y) ** 2
    g = params.g0 * (p_los + (1.0 - p_los) * params.kappa) / d2 ** (params.iota / 2.0)
    return float(g) if np.ndim(g) == 0 else g


def achievable_rate(gain, params: ChannelParams, interference=None):
    """Shannon rate in bits/s on one RB for the given expected gain(s)."""
    i_m = params.interference_i if interference is None else interference
    noise = i_m + params.rb_bandwidth_w * params.noise_psd_n0
    r = params.rb_bandwidth_w * np.log2(1.0 + params.p_tx * np.asarray(gain) / noise)
    return float(r) if np.ndim(r) == 0 else r


def rate_matrix(uav: UavState, device_xy: np.ndarray, region: Region, params: ChannelParams,
                n_rbs: int, interference_per_rb: np.ndarray | None = None) -> np.ndarray:
    """N x M rates; with a scalar interference every column is identical."""
    gains = expected_gain(uav, device_xy, region, params)
    if interference_per_rb is None:
        interference_per_rb = np.full(n_rbs, params.interference_i)
    return achievable_rate(gains[:, None], params, interference_per_rb[None, :])


def rate_for_distance(dist: float, region: Region, params: ChannelParams) -> float:
    return achievable_rate(expected_gain(UavState(0.0, 0.0), (dist, 0.0), region, params), params)

