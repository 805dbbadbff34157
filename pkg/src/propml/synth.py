"""Seeded synthetic Manhattan-style cities with ground-truth UE traces.

Land-use classes: 0 open/street, 1 park, 2 water, 3.. building types.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .features import FeatureMatrix, angular_separations, build_feature_matrix
from .geodata import GeoStack, RasterGrid
from .oracle import OracleParams, oracle_from_geometry
from .profile import extract_profile, summarize_profile
from .scenario import DEFAULT_UE_HEIGHT, SiteTopology, UeTrace, clean_traces, grid_traces

OPEN, PARK, WATER = 0, 1, 2
FIRST_BUILDING_CLASS = 3


@dataclass(frozen=True)
class ScenarioConfig:
    area: float = 1200.0  # side of the square area, m
    cellsize: float = 5.0
    street_width: float = 20.0
    block_size: float = 80.0
    height_range: tuple[float, float] = (6.0, 30.0)
    max_lots: int = 3  # per block side
    # lot boundaries snap to this lattice; with the default street pitch it
    # matches the 10 m measurement bins, so no bin straddles a wall
    lot_quantum: float = 10.0
    courtyard_fraction: float = 0.1
    park_fraction: float = 0.08
    water_fraction: float = 0.03
    terrain_amplitude: float = 4.0
    clutter_count: int = 15
    n_sites: int = 6
    mast_range: tuple[float, float] = (3.0, 8.0)
    tilt_range: tuple[float, float] = (2.0, 8.0)
    tx_power: float = 43.0
    freq: float = 2110.0
    ue_density: float = 5000.0  # expected UEs per km^2
    noise_sigma: float = 2.0  # per-trace measurement noise, dB
    missing_fraction: float = 0.02
    oracle: OracleParams | None = None

    def __post_init__(self):
        if self.clutter_count < FIRST_BUILDING_CLASS + 1:
            raise ConfigError("clutter_count must be at least 4 (open, park, water, one building type)")
        if self.oracle is None:
            object.__setattr__(self, "oracle", OracleParams(clutter_count=self.clutter_count))
        elif self.oracle.clutter_count != self.clutter_count:
            raise ConfigError("oracle clutter table does not match clutter_count")
        if not (self.area > 0 and self.cellsize > 0 and self.block_size > 0 and self.street_width >= 0):
            raise ConfigError("area, cellsize and block_size must be positive")
        if not self.lot_quantum > 0:
            raise ConfigError("lot_quantum must be positive")
        if self.ue_density < 0 or self.noise_sigma < 0:
            raise ConfigError("ue_density and noise_sigma must be non-negative")
        if not 0 <= self.missing_fraction <= 1:
            raise ConfigError("missing_fraction must lie in [0, 1]")
        if self.n_sites < 0:
            raise ConfigError("n_sites must be non-negative")


@dataclass
class Scenario:
    geo: GeoStack
    sites: list[SiteTopology]
    traces: list[UeTrace]
    config: ScenarioConfig = field(repr=False, default=None)
    seed: int = 0


def _split_lots(idx: np.ndarray, centers: np.ndarray, origin: float, cfg: ScenarioConfig, n: int):
    """Split a block's cell indices into ``n`` lots with boundaries on the lot lattice."""
    q = cfg.lot_quantum
    cuts = [origin + round(cfg.block_size * k / n / q) * q for k in range(1, n)]
    bounds = [origin] + cuts + [origin + cfg.block_size]
    pos = centers[idx]
    return [idx[(pos >= lo) & (pos < hi)] for lo, hi in zip(bounds[:-1], bounds[1:])]


def _city_rasters(cfg: ScenarioConfig, rng: np.random.Generator):
    n = int(round(cfg.area / cfg.cellsize))
    cs = cfg.cellsize
    centers = (np.arange(n) + 0.5) * cs
    # arrays indexed [row_from_bottom, col] while building, flipped at the end
    xx, yy = np.meshgrid(centers, centers)
    phase = rng.uniform(0, 2 * np.pi, size=2)
    wavelength = cfg.area * rng.uniform(0.6, 1.2, size=2)
    dtm = cfg.terrain_amplitude * (
        np.sin(2 * np.pi * xx / wavelength[0] + phase[0]) * np.cos(2 * np.pi * yy / wavelength[1] + phase[1])
    )
    dtm = dtm + rng.uniform(-0.002, 0.002) * xx + rng.uniform(-0.002, 0.002) * yy + 50.0

    dhm = np.zeros((n, n))
    dlu = np.full((n, n), OPEN, dtype=np.int64)
    pitch = cfg.block_size + cfg.street_width
    half_street = cfg.street_width / 2.0
    n_blocks = int(np.ceil(cfg.area / pitch))
    building_classes = np.arange(FIRST_BUILDING_CLASS, cfg.clutter_count)
    lo, hi = cfg.height_range
    for bi in range(n_blocks):
        for bj in range(n_blocks):
            x0 = bi * pitch + half_street
            y0 = bj * pitch + half_street
            cols = np.flatnonzero((centers >= x0) & (centers < x0 + cfg.block_size))
            rows = np.flatnonzero((centers >= y0) & (centers < y0 + cfg.block_size))
            if cols.size == 0 or rows.size == 0:
                continue
            kind = rng.random()
            if kind < cfg.water_fraction:
                dlu[np.ix_(rows, cols)] = WATER
                continue
            if kind < cfg.water_fraction + cfg.park_fraction:
                dlu[np.ix_(rows, cols)] = PARK
                continue
            nx = int(rng.integers(1, cfg.max_lots + 1))
            ny = int(rng.integers(1, cfg.max_lots + 1))
            for lot_cols in _split_lots(cols, centers, x0, cfg, nx):
                for lot_rows in _split_lots(rows, centers, y0, cfg, ny):
                    if lot_cols.size == 0 or lot_rows.size == 0:
                        continue
                    if rng.random() < cfg.courtyard_fraction:
                        continue
                    block = np.ix_(lot_rows, lot_cols)
                    dhm[block] = round(float(rng.uniform(lo, hi)), 1)
                    dlu[block] = int(rng.choice(building_classes))
    flip = slice(None, None, -1)
    grids = [RasterGrid.from_array(a[flip], 0.0, 0.0, cs) for a in (np.round(dtm, 3), dhm, dlu.astype(np.float64))]
    return GeoStack(*grids, clutter_count=cfg.clutter_count)


def _place_sites(cfg: ScenarioConfig, geo: GeoStack, rng: np.random.Generator) -> list[SiteTopology]:
    dhm = geo.dhm.array
    rows, cols = np.nonzero(dhm > 0)
    # prefer tall buildings away from the edge
    cs = geo.cellsize
    x = (cols + 0.5) * cs
    y = (geo.dhm.nrows - rows - 0.5) * cs
    margin = 0.1 * cfg.area
    ok = (x > margin) & (x < cfg.area - margin) & (y > margin) & (y < cfg.area - margin)
    ok &= dhm[rows, cols] >= np.median(dhm[rows, cols])
    candidates = np.flatnonzero(ok)
    if cfg.n_sites and candidates.size < cfg.n_sites:
        raise ConfigError("not enough rooftops to place the requested sites")
    chosen = rng.choice(candidates, size=cfg.n_sites, replace=False) if cfg.n_sites else []
    sites = []
    for i, k in enumerate(chosen):
        # off the cell centre (still on the same roof) so no bin centre coincides with a mast
        jitter = rng.uniform(0.1, 0.3, size=2) * cs * rng.choice([-1.0, 1.0], size=2)
        mx = round(float(x[k] + jitter[0]), 2)
        my = round(float(y[k] + jitter[1]), 2)
        mast = round(float(rng.uniform(*cfg.mast_range)), 1)
        base = float(rng.uniform(0.0, 120.0))
        for sector in range(3):
            sites.append(
                SiteTopology(
                    cell_id=f"s{i}c{sector}",
                    x=mx,
                    y=my,
                    h_bs=mast,
                    azimuth=round((base + 120.0 * sector) % 360.0, 1),
                    tilt=round(float(rng.uniform(*cfg.tilt_range)), 1),
                    tx_power=cfg.tx_power,
                    freq=cfg.freq,
                    antenna="sector",
                )
            )
    return sites


def serving_cell(geo: GeoStack, sites, x: float, y: float, params: OracleParams, h_ue: float = DEFAULT_UE_HEIGHT):
    """(strongest site, its oracle RSS) at a point. Sectors on one mast share a profile."""
    best = None
    masts = {}
    for site in sites:
        key = (site.x, site.y, site.h_bs)
        if key not in masts:
            profile = extract_profile(geo, site, x, y, h_ue)
            masts[key] = (profile, summarize_profile(profile, geo))
        profile, summary = masts[key]
        angles = angular_separations(site, x, y, profile.z_ue, profile.z_bs)
        rss = oracle_from_geometry(site, summary, angles, x, y, params)
        if best is None or rss > best[1]:
            best = (site, rss)
    return best


def generate_scenario(config: ScenarioConfig | None = None, seed: int = 0) -> Scenario:
    """Deterministic synthetic city, sites and UE traces for ``(config, seed)``."""
    cfg = config or ScenarioConfig()
    cfg = replace(cfg, oracle=replace(cfg.oracle, seed=seed))
    rng = np.random.default_rng(seed)
    geo = _city_rasters(cfg, rng)
    sites = _place_sites(cfg, geo, rng)

    expected = cfg.ue_density * (cfg.area / 1000.0) ** 2
    n_ue = int(rng.poisson(expected)) if sites else 0
    xs = rng.uniform(0.0, cfg.area, size=n_ue)
    ys = rng.uniform(0.0, cfg.area, size=n_ue)
    stamps = np.sort(rng.uniform(0.0, 3600.0, size=n_ue))
    noise = rng.normal(0.0, cfg.noise_sigma, size=n_ue) if cfg.noise_sigma > 0 else np.zeros(n_ue)
    missing = rng.random(n_ue) < cfg.missing_fraction
    traces = []
    for i in range(n_ue):
        # truncate so a point never lands on the far edge of the area
        x, y = math.floor(xs[i] * 100.0) / 100.0, math.floor(ys[i] * 100.0) / 100.0
        if any(s.x == x and s.y == y for s in sites):
            continue
        site, rss = serving_cell(geo, sites, x, y, cfg.oracle)
        value = None if missing[i] else round(rss + float(noise[i]), 3)
        traces.append(UeTrace(round(float(stamps[i]), 3), x, y, site.cell_id, value))
    return Scenario(geo, sites, traces, cfg, seed)


def scenario_features(scn: Scenario, bin_width: float = 10.0) -> FeatureMatrix:
    """Clean, bin and featurise a scenario's traces."""
    binned = grid_traces(clean_traces(scn.traces, scn.sites), bin_width)
    return build_feature_matrix(scn.geo, scn.sites, binned)
