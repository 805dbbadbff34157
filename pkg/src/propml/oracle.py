"""Deterministic ground-truth RSS used in place of a calibrated ray tracer.

The oracle is a closed-form function of the same link geometry the feature
extractor sees (LoS state, penetrations, indoor distance, angular offsets),
plus a spatially binned log-normal shadowing term keyed by a hash of
(bin, cell, seed). It makes no claim of physical accuracy.
"""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .errors import ConfigError
from .features import link_geometry
from .geodata import GeoStack
from .profile import ProfileSummary
from .scenario import DEFAULT_UE_HEIGHT, SiteTopology

_STD_NORMAL = NormalDist()


def default_penetration_table(clutter_count: int) -> tuple[float, ...]:
    """Per-building loss by land-use class: 0 dB for open/park/water, 5-12 dB for building types."""
    table = []
    n_building = max(clutter_count - 3, 1)
    for c in range(clutter_count):
        if c < 3:
            table.append(0.0)
        else:
            table.append(round(5.0 + 7.0 * (c - 3) / max(n_building - 1, 1), 6))
    return tuple(table)


@dataclass(frozen=True)
class OracleParams:
    clutter_count: int = 15
    gain_max: float = 18.3  # dBi
    hpbw_h: float = 63.0  # degrees
    hpbw_v: float = 4.7
    cap_h: float = 30.0  # dB
    cap_v: float = 20.0
    los_intercept: float = 34.5
    los_slope: float = 22.0
    nlos_intercept: float = 30.0
    nlos_slope: float = 32.0
    penetration_db: tuple[float, ...] | None = None
    indoor_db_per_m: float = 0.2
    # building losses saturate: past a few walls the signal arrives over the roofs
    building_loss_cap: float = 30.0
    shadow_sigma: float = 4.0
    shadow_bin: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.penetration_db is None:
            object.__setattr__(self, "penetration_db", default_penetration_table(self.clutter_count))
        if len(self.penetration_db) != self.clutter_count:
            raise ConfigError(
                f"penetration table has {len(self.penetration_db)} entries, clutter_count is {self.clutter_count}"
            )
        if self.shadow_sigma < 0:
            raise ConfigError("shadow_sigma must be >= 0")
        if not (self.hpbw_h > 0 and self.hpbw_v > 0):
            raise ConfigError("beamwidths must be positive")
        if not self.shadow_bin > 0:
            raise ConfigError("shadow_bin must be positive")
        if self.building_loss_cap < 0:
            raise ConfigError("building_loss_cap must be >= 0")


def horizontal_pattern_loss(theta_off: float, params: OracleParams) -> float:
    return min(12.0 * (theta_off / params.hpbw_h) ** 2, params.cap_h)


def vertical_pattern_loss(phi: float, params: OracleParams) -> float:
    return min(12.0 * (phi / params.hpbw_v) ** 2, params.cap_v)


def state_pathloss(d: float, los: bool, params: OracleParams) -> float:
    d = max(d, 1.0)
    if los:
        return params.los_intercept + params.los_slope * math.log10(d)
    return params.nlos_intercept + params.nlos_slope * math.log10(d)


def shadow_db(x: float, y: float, cell_id: str, params: OracleParams) -> float:
    """Gaussian shadowing, constant within a ``shadow_bin`` square for a given cell."""
    if params.shadow_sigma == 0:
        return 0.0
    ix = math.floor(x / params.shadow_bin)
    iy = math.floor(y / params.shadow_bin)
    digest = hashlib.blake2b(
        f"{params.seed}|{ix}|{iy}|{cell_id}".encode(), digest_size=8
    ).digest()
    u = (struct.unpack("<Q", digest)[0] + 0.5) / 2.0**64
    return params.shadow_sigma * _STD_NORMAL.inv_cdf(u)


def oracle_from_geometry(
    site: SiteTopology, summary: ProfileSummary, angles, x: float, y: float, params: OracleParams
) -> float:
    d, theta_hor, phi_ver, _, _ = angles
    penetration = float(np.dot(summary.n_pen_c, params.penetration_db)) if summary.n_pen else 0.0
    building = min(penetration + params.indoor_db_per_m * summary.d_indoor, params.building_loss_cap)
    return (
        site.tx_power
        + params.gain_max
        - horizontal_pattern_loss(theta_hor, params)
        - vertical_pattern_loss(phi_ver, params)
        - state_pathloss(d, summary.los, params)
        - building
        - shadow_db(x, y, site.cell_id, params)
    )


def oracle_rss(
    geo: GeoStack,
    site: SiteTopology,
    x: float,
    y: float,
    h_ue: float = DEFAULT_UE_HEIGHT,
    params: OracleParams | None = None,
) -> float:
    """Ground-truth RSS (dBm) at (x, y) from ``site``."""
    if params is None:
        params = OracleParams(clutter_count=geo.clutter_count)
    if params.clutter_count != geo.clutter_count:
        raise ConfigError("oracle clutter_count differs from the raster stack")
    _, summary, angles = link_geometry(geo, site, x, y, h_ue)
    return oracle_from_geometry(site, summary, angles, x, y, params)
