"""Per-link feature vectors and the feature matrix fed to the learners."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, SchemaError, UnknownReferenceError
from .geodata import GeoStack
from .profile import PathProfile, ProfileSummary, extract_profile, summarize_profile
from .scenario import DEFAULT_UE_HEIGHT, BinnedMeasurement, SiteTopology, site_index

BASE_FEATURES = (
    "d", "theta_hor", "phi_ver", "d_vert", "d_man", "los", "d_fd", "d_ld",
    "n_pen", "d_indoor", "d_outdoor", "c_bs", "c_ue",
)
CATEGORICAL = ("los", "c_bs", "c_ue")
KEY_COLUMNS = ("bin_ix", "bin_iy", "cell_id", "rss_dbm")
# d_fd / d_ld value on line-of-sight links
LOS_SENTINEL = -1.0


def feature_names(clutter_count: int) -> list[str]:
    names = list(BASE_FEATURES)
    for prefix in ("n_pen_c", "d_in_c", "d_out_c"):
        names.extend(f"{prefix}{c}" for c in range(clutter_count))
    return names


def bearing_deg(dx: float, dy: float) -> float:
    """Compass bearing (clockwise from North) of the vector (dx, dy), in [0, 360)."""
    b = math.degrees(math.atan2(dx, dy)) % 360.0
    return 0.0 if b == 360.0 else b


def wrap_separation(a: float, b: float) -> float:
    """Absolute angular difference of two bearings folded into [0, 180]."""
    diff = abs(a - b) % 360.0
    return 360.0 - diff if diff > 180.0 else diff


def angular_separations(site: SiteTopology, x_ue: float, y_ue: float, z_ue: float, z_bs: float):
    """Return ``(d, theta_hor, phi_ver, d_vert, d_man)`` for one BS/UE pair.

    ``z_bs`` and ``z_ue`` are total heights. The vertical separation keeps the
    plain difference between the UE elevation angle and the BS tilt.
    """
    dx = x_ue - site.x
    dy = y_ue - site.y
    d = math.hypot(dx, dy)
    if d == 0:
        raise DegenerateGeometryError(f"UE coincides with site {site.cell_id}")
    theta_hor = wrap_separation(site.azimuth, bearing_deg(dx, dy))
    phi_ue = math.degrees(math.atan((z_ue - z_bs) / d))
    phi_ver = phi_ue - site.tilt
    d_vert = z_bs - z_ue
    d_man = abs(dx) + abs(dy)
    return d, theta_hor, phi_ver, d_vert, d_man


@dataclass(frozen=True, eq=False)
class FeatureVector:
    d: float
    theta_hor: float
    phi_ver: float
    d_vert: float
    d_man: float
    los: int
    d_fd: float
    d_ld: float
    n_pen: int
    d_indoor: float
    d_outdoor: float
    c_bs: int
    c_ue: int
    n_pen_c: np.ndarray
    d_indoor_c: np.ndarray
    d_outdoor_c: np.ndarray

    def as_array(self) -> np.ndarray:
        head = [getattr(self, name) for name in BASE_FEATURES]
        return np.concatenate([np.asarray(head, dtype=np.float64), self.n_pen_c, self.d_indoor_c, self.d_outdoor_c])


def link_geometry(geo: GeoStack, site: SiteTopology, x: float, y: float, h_ue: float = DEFAULT_UE_HEIGHT):
    """Profile, its summary and the angular terms for one link."""
    profile = extract_profile(geo, site, x, y, h_ue)
    summary = summarize_profile(profile, geo)
    angles = angular_separations(site, x, y, profile.z_ue, profile.z_bs)
    return profile, summary, angles


def vector_from(summary: ProfileSummary, angles) -> FeatureVector:
    d, theta_hor, phi_ver, d_vert, d_man = angles
    return FeatureVector(
        d=d, theta_hor=theta_hor, phi_ver=phi_ver, d_vert=d_vert, d_man=d_man,
        los=int(summary.los),
        d_fd=LOS_SENTINEL if summary.d_fd is None else summary.d_fd,
        d_ld=LOS_SENTINEL if summary.d_ld is None else summary.d_ld,
        n_pen=summary.n_pen, d_indoor=summary.d_indoor, d_outdoor=summary.d_outdoor,
        c_bs=summary.c_bs, c_ue=summary.c_ue,
        n_pen_c=summary.n_pen_c.astype(np.float64),
        d_indoor_c=summary.d_indoor_c, d_outdoor_c=summary.d_outdoor_c,
    )


def assemble_features(geo: GeoStack, site: SiteTopology, where, h_ue: float = DEFAULT_UE_HEIGHT) -> FeatureVector:
    """Feature vector for a point ``(x, y)`` or a BinnedMeasurement (evaluated at the bin centre)."""
    if isinstance(where, BinnedMeasurement):
        x, y = where.center
    else:
        x, y = where
    _, summary, angles = link_geometry(geo, site, x, y, h_ue)
    return vector_from(summary, angles)


@dataclass(eq=False)
class FeatureMatrix:
    names: list[str]
    X: np.ndarray  # (rows, features)
    y: np.ndarray  # target RSS, dBm
    keys: list[tuple[int, int, str]] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64).reshape(-1, len(self.names))
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        if self.y.size != self.X.shape[0]:
            raise SchemaError(f"{self.X.shape[0]} feature rows but {self.y.size} targets")
        if self.keys and len(self.keys) != self.X.shape[0]:
            raise SchemaError("one key per row required")
        if not self.keys:
            self.keys = [(i, 0, "") for i in range(self.X.shape[0])]

    def __len__(self):
        return self.X.shape[0]

    @property
    def categorical(self) -> np.ndarray:
        return np.array([n in CATEGORICAL for n in self.names])

    def column(self, name: str) -> np.ndarray:
        try:
            return self.X[:, self.names.index(name)]
        except ValueError:
            raise UnknownReferenceError(f"unknown feature '{name}'") from None

    def take(self, rows) -> FeatureMatrix:
        rows = np.asarray(rows, dtype=np.int64)
        return FeatureMatrix(list(self.names), self.X[rows], self.y[rows], [self.keys[i] for i in rows])

    def select(self, names) -> FeatureMatrix:
        idx = []
        for n in names:
            if n not in self.names:
                raise UnknownReferenceError(f"unknown feature '{n}'")
            idx.append(self.names.index(n))
        return FeatureMatrix(list(names), self.X[:, idx], self.y.copy(), list(self.keys))


def build_feature_matrix(geo: GeoStack, sites, binned) -> FeatureMatrix:
    index = site_index(sites)
    names = feature_names(geo.clutter_count)
    ordered = sorted(binned, key=lambda b: b.key)
    rows = np.empty((len(ordered), len(names)))
    for i, b in enumerate(ordered):
        if b.cell_id not in index:
            raise UnknownReferenceError(f"unknown cell_id '{b.cell_id}'")
        rows[i] = assemble_features(geo, index[b.cell_id], b).as_array()
    return FeatureMatrix(names, rows, [b.mean_rss for b in ordered], [b.key for b in ordered])


def point_features(geo: GeoStack, sites, points) -> np.ndarray:
    """Feature rows for ``(x, y, cell_id)`` points; sectors on one mast share the ray summary."""
    index = site_index(sites)
    rows = np.empty((len(points), len(feature_names(geo.clutter_count))))
    cache: dict = {}
    for i, (x, y, cell_id) in enumerate(points):
        if cell_id not in index:
            raise UnknownReferenceError(f"unknown cell_id '{cell_id}'")
        site = index[cell_id]
        key = (site.x, site.y, site.h_bs, x, y)
        if key not in cache:
            if len(cache) > 4096:
                cache.clear()
            profile = extract_profile(geo, site, x, y)
            cache[key] = (profile, summarize_profile(profile, geo))
        profile, summary = cache[key]
        rows[i] = vector_from(summary, angular_separations(site, x, y, profile.z_ue, profile.z_bs)).as_array()
    return rows


def _fmt(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def write_features_csv(m: FeatureMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(KEY_COLUMNS) + list(m.names))
        for key, target, row in zip(m.keys, m.y, m.X):
            w.writerow([key[0], key[1], key[2], repr(float(target))] + [_fmt(v) for v in row])


def read_features_csv(path) -> FeatureMatrix:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[:4]) != KEY_COLUMNS:
            raise SchemaError(f"{path}: feature CSV must start with {','.join(KEY_COLUMNS)}")
        names = header[4:]
        if tuple(names[: len(BASE_FEATURES)]) != BASE_FEATURES:
            raise SchemaError(f"{path}: unexpected feature columns")
        keys, ys, rows = [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise SchemaError(f"{path}: row {lineno} has {len(rec)} fields, expected {len(header)}")
            keys.append((int(rec[0]), int(rec[1]), rec[2]))
            ys.append(float(rec[3]))
            rows.append([float(v) for v in rec[4:]])
    return FeatureMatrix(names, np.array(rows, dtype=np.float64).reshape(-1, len(names)), ys, keys)
