"""Empirical pathloss baselines: COST-Hata, SUI, SPM (with Deygout diffraction) and the ITU-452 combiner.

Every ``log`` in these formulas is base 10. Distances are in km for
COST-Hata and SUI and in metres for SPM; frequencies in MHz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError, DomainError, UnknownReferenceError
from .geodata import GeoStack
from .profile import PathProfile, extract_profile
from .scenario import DEFAULT_UE_HEIGHT, site_index

SPEED_OF_LIGHT = 299_792_458.0
MODELS = ("cost-hata", "sui", "spm", "itu452")


def _require_positive(**kwargs):
    for name, value in kwargs.items():
        if not value > 0:
            raise DomainError(f"{name} must be positive, got {value}")


@dataclass(frozen=True)
class CostHataParams:
    A1: float = 46.3
    A2: float = 33.9
    A3: float = -13.82
    B1: float = 44.9
    B2: float = -6.55
    B3: float = 0.0
    area: str = "urban"  # urban | suburban | quasi_open_rural | open_rural
    correction_kind: str = "small_city"  # small_city | open_rural

    def __post_init__(self):
        if self.area not in ("urban", "suburban", "quasi_open_rural", "open_rural"):
            raise ConfigError(f"unknown COST-Hata area {self.area!r}")
        if self.correction_kind not in ("small_city", "open_rural"):
            raise ConfigError(f"unknown UE height correction {self.correction_kind!r}")


def cost_hata_base(p: CostHataParams, f: float, h_bs: float, d: float) -> float:
    lf, lh = math.log10(f), math.log10(h_bs)
    return p.A1 + p.A2 * lf + p.A3 * lh + (p.B1 + p.B2 * lh + p.B3 * h_bs) * math.log10(d)


def ue_height_correction(kind: str, f: float, h_ue: float) -> float:
    if kind == "small_city":
        lf = math.log10(f)
        return (1.1 * lf - 0.7) * h_ue - (1.56 * lf - 0.8)
    return 3.2 * math.log10(11.75 * h_ue) ** 2 - 4.97


def cost_hata(p: CostHataParams, f: float, h_bs: float, h_ue: float, d: float) -> float:
    """Pathloss in dB; ``d`` in km."""
    _require_positive(f=f, h_bs=h_bs, h_ue=h_ue, d=d)
    loss = cost_hata_base(p, f, h_bs, d) - ue_height_correction(p.correction_kind, f, h_ue)
    lf = math.log10(f)
    if p.area == "suburban":
        loss += -2.0 * math.log10(f / 28.0) ** 2 - 5.4
    elif p.area == "quasi_open_rural":
        loss += -4.78 * lf**2 + 18.33 * lf - 35.94
    elif p.area == "open_rural":
        loss += -4.78 * lf**2 + 18.33 * lf - 40.94
    return loss


@dataclass(frozen=True)
class SuiParams:
    # printed intercept; almost certainly a typo for a value near 73.66
    intercept: float = -7366.0
    a: float = 4.6
    b: float = 0.0075
    c: float = 12.6
    X: float = 10.8


def sui_bs_correction(p: SuiParams, h_bs: float) -> float:
    return p.a - p.b * h_bs + p.c / h_bs


def sui_ue_correction(p: SuiParams, h_ue: float) -> float:
    return p.X * math.log10(h_ue / 2.0)


def sui(p: SuiParams, f: float, h_bs: float, h_ue: float, d: float) -> float:
    """Pathloss in dB; ``d`` in km."""
    _require_positive(f=f, h_bs=h_bs, h_ue=h_ue, d=d)
    return (
        p.intercept
        + 26.0 * math.log10(f)
        + 10.0 * sui_bs_correction(p, h_bs) * (1.0 + math.log10(d))
        - sui_ue_correction(p, h_ue)
    )


def knife_edge_loss(v: float) -> float:
    """Single knife-edge diffraction loss J(v) in dB; zero for v <= -0.78."""
    if v <= -0.78:
        return 0.0
    return 6.9 + 20.0 * math.log10(math.sqrt((v - 0.1) ** 2 + 1.0) + v - 0.1)


def _principal_edge(t, top, t_a, z_a, t_b, z_b, wavelength):
    """Index (into t) and Fresnel parameter of the highest-v sample strictly between a and b."""
    inner = np.flatnonzero((t > t_a) & (t < t_b))
    if inner.size == 0:
        return None, -math.inf
    ti = t[inner]
    span = t_b - t_a
    line = z_a + (z_b - z_a) * (ti - t_a) / span
    d1 = ti - t_a
    d2 = t_b - ti
    v = (top[inner] - line) * np.sqrt(2.0 * span / (wavelength * d1 * d2))
    k = int(np.argmax(v))
    return int(inner[k]), float(v[k])


def deygout_loss(profile: PathProfile, f: float, rx_height: float | None = None) -> float:
    """Deygout multiple knife-edge diffraction loss over a profile, in dB.

    The principal edge maximises the Fresnel parameter against the direct
    line; the method then recurses once on each side (at most three edges).
    The receiving end is lifted by ``rx_height`` (defaults to the profile's
    UE height) above the profile's UE surface height.
    """
    _require_positive(f=f)
    if rx_height is None:
        rx_height = profile.h_ue
    wavelength = SPEED_OF_LIGHT / (f * 1e6)
    t = profile.t
    top = profile.z_ground + profile.h_building
    z_tx, z_rx = profile.z_bs, profile.z_ue + rx_height
    d = profile.d
    k, v = _principal_edge(t, top, 0.0, z_tx, d, z_rx, wavelength)
    if k is None or v <= -0.78:
        return 0.0
    loss = knife_edge_loss(v)
    t_p, z_p = float(t[k]), float(top[k])
    for (t_a, z_a, t_b, z_b) in ((0.0, z_tx, t_p, z_p), (t_p, z_p, d, z_rx)):
        _, v_sub = _principal_edge(t, top, t_a, z_a, t_b, z_b, wavelength)
        loss += knife_edge_loss(v_sub)
    return loss


@dataclass(frozen=True)
class SpmParams:
    K1: float = 23.8
    K2: float = 44.9
    K3: float = 10.89
    K4: float = 0.19
    K5: float = -10.0
    K6: float = 0.0
    K7: float = 0.0
    K_clutter: float = 1.0
    clutter_losses: tuple[float, ...] = field(default_factory=tuple)


def clutter_weights(profile: PathProfile, n_classes: int) -> np.ndarray:
    """Fraction of the path length spent over each land-use class (BS sample excluded)."""
    w = np.bincount(profile.clutter[1:], minlength=n_classes).astype(np.float64)
    return w / w.sum()


def effective_heights(profile: PathProfile, h_ue: float) -> tuple[float, float]:
    mean_ground = float(np.mean(profile.z_ground))
    return max(profile.z_bs - mean_ground, 1.0), max(profile.z_ue + h_ue - mean_ground, 1.0)


def spm(p: SpmParams, profile: PathProfile, f: float, d: float, h_ue: float) -> float:
    """Standard Propagation Model pathloss in dB; ``d`` in metres."""
    if not d >= 1.0:
        raise DomainError(f"SPM needs d >= 1 m, got {d}")
    h_bs_eff, h_ue_eff = effective_heights(profile, h_ue)
    if p.K4 != 0:
        l_diff = deygout_loss(profile, f, rx_height=h_ue)
    else:
        l_diff = 0.0
    if p.clutter_losses:
        weights = clutter_weights(profile, len(p.clutter_losses))
        f_clutter = float(np.dot(weights, p.clutter_losses))
    else:
        f_clutter = 0.0
    ld, lh = math.log10(d), math.log10(h_bs_eff)
    return (
        p.K1
        + p.K2 * ld
        + p.K3 * lh
        + p.K4 * l_diff
        + p.K5 * ld * lh
        + p.K6 * h_ue_eff
        + p.K7 * math.log10(h_ue_eff)
        + p.K_clutter * f_clutter
    )


@dataclass(frozen=True)
class Itu452Inputs:
    L_a: float
    L_b: float
    L_c: float
    L_d: float
    theta: float  # path angular distance, mrad
    A_bs: float = 0.0
    A_ue: float = 0.0


def itu452_interpolation(theta: float) -> float:
    return 1.0 - 0.5 * (1.0 + math.tanh(2.4 * (theta - 0.3) / 0.3))


def itu452(inp: Itu452Inputs) -> float:
    """Combine precomputed ITU-R P.452 sub-losses into a basic transmission loss (dB)."""
    fj = itu452_interpolation(inp.theta)
    branch = inp.L_b + (inp.L_c - inp.L_d) * fj
    return -5.0 * math.log10(10.0 ** (-0.2 * inp.L_a) + 10.0 ** (-0.2 * branch)) + inp.A_bs + inp.A_ue


# --- batch prediction -------------------------------------------------------


@dataclass
class EmpiricalConfig:
    cost_hata: CostHataParams = field(default_factory=CostHataParams)
    sui: SuiParams = field(default_factory=SuiParams)
    spm: SpmParams = field(default_factory=SpmParams)
    itu452: dict | None = None  # default sub-losses: L_a, L_b, L_c, L_d, theta, A_bs, A_ue
    h_ue: float = DEFAULT_UE_HEIGHT
    min_distance_km: float = 0.001


def _coerce(cls, values: dict):
    kinds = {f.name: f for f in fields(cls)}
    out = {}
    for key, raw in values.items():
        if key not in kinds:
            raise ConfigError(f"unknown {cls.__name__} key {key!r}")
        if key == "clutter_losses":
            out[key] = tuple(float(v) for v in raw.split(",") if v.strip())
        elif key in ("area", "correction_kind"):
            out[key] = raw
        else:
            out[key] = float(raw)
    return cls(**out)


def load_params(path) -> EmpiricalConfig:
    """Read a ``section.key = value`` text file.

    Sections: ``cost_hata``, ``sui``, ``spm``, ``itu452``, plus top-level
    ``h_ue``. ``spm.clutter_losses`` takes a comma-separated list (dB per
    land-use class). Lines starting with ``#`` are comments.
    """
    sections: dict[str, dict[str, str]] = {"cost_hata": {}, "sui": {}, "spm": {}, "itu452": {}}
    top: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if "." in key:
                section, key = key.split(".", 1)
                if section not in sections:
                    raise ConfigError(f"{path}:{lineno}: unknown section {section!r}")
                sections[section][key] = value
            else:
                top[key] = value
    cfg = EmpiricalConfig(
        cost_hata=_coerce(CostHataParams, sections["cost_hata"]),
        sui=_coerce(SuiParams, sections["sui"]),
        spm=_coerce(SpmParams, sections["spm"]),
    )
    if sections["itu452"]:
        cfg.itu452 = {k: float(v) for k, v in sections["itu452"].items()}
    for key, value in top.items():
        if key == "h_ue":
            cfg.h_ue = float(value)
        elif key == "min_distance_km":
            cfg.min_distance_km = float(value)
        else:
            raise ConfigError(f"unknown top-level key {key!r}")
    return cfg


def link_pathloss(model_id: str, geo: GeoStack, site, x: float, y: float, cfg: EmpiricalConfig, itu=None) -> float:
    """Pathloss (dB) of one link under the named empirical model."""
    if model_id == "itu452":
        values = dict(cfg.itu452 or {})
        values.update(itu or {})
        missing = [k for k in ("L_a", "L_b", "L_c", "L_d", "theta") if k not in values]
        if missing:
            raise ConfigError(f"itu452 needs sub-losses {missing} from the params file or the points table")
        return itu452(Itu452Inputs(**values))
    if model_id not in MODELS:
        raise ConfigError(f"unknown empirical model {model_id!r}; choose from {', '.join(MODELS)}")
    profile = extract_profile(geo, site, x, y, cfg.h_ue)
    if model_id == "spm":
        if cfg.spm.clutter_losses and len(cfg.spm.clutter_losses) != geo.clutter_count:
            raise ConfigError("spm clutter_losses length differs from the land-use class count")
        return spm(cfg.spm, profile, site.freq, max(profile.d, 1.0), cfg.h_ue)
    h_bs = profile.z_bs - profile.z_ground[0]
    d_km = max(profile.d / 1000.0, cfg.min_distance_km)
    if model_id == "cost-hata":
        return cost_hata(cfg.cost_hata, site.freq, h_bs, cfg.h_ue, d_km)
    return sui(cfg.sui, site.freq, h_bs, cfg.h_ue, d_km)


def empirical_predict(model_id: str, geo: GeoStack, sites, points, cfg: EmpiricalConfig | None = None) -> list[float]:
    """RSS (dBm) = transmit power - pathloss at each ``(x, y, cell_id[, itu_dict])`` point."""
    cfg = cfg or EmpiricalConfig()
    index = site_index(sites)
    out = []
    for point in points:
        x, y, cell_id = point[:3]
        itu = point[3] if len(point) > 3 else None
        if cell_id not in index:
            raise UnknownReferenceError(f"unknown cell_id '{cell_id}'")
        site = index[cell_id]
        out.append(site.tx_power - link_pathloss(model_id, geo, site, x, y, cfg, itu))
    return out
