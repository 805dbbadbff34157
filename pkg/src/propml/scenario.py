"""Site topology and UE trace records: CSV ingestion, cleaning and spatial gridding."""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParseError, SchemaError

SITE_COLUMNS = ("cell_id", "x", "y", "h_bs", "azimuth_deg", "tilt_deg", "tx_power_dbm", "freq_mhz", "antenna")
TRACE_COLUMNS = ("timestamp", "x", "y", "cell_id", "rss_dbm")

DEFAULT_UE_HEIGHT = 1.5


@dataclass(frozen=True)
class SiteTopology:
    """One BS sector. ``h_bs`` is the antenna height above ground plus building."""

    cell_id: str
    x: float
    y: float
    h_bs: float
    azimuth: float  # degrees from North, clockwise
    tilt: float  # degrees, positive below horizontal
    tx_power: float = 43.0  # dBm
    freq: float = 2110.0  # MHz
    antenna: str = "iso"

    def __post_init__(self):
        if not self.h_bs > 0:
            raise ConfigError(f"{self.cell_id}: antenna height must be positive")
        if not self.freq > 0:
            raise ConfigError(f"{self.cell_id}: frequency must be positive")
        if not 0 <= self.azimuth < 360:
            raise ConfigError(f"{self.cell_id}: azimuth must lie in [0, 360)")


@dataclass(frozen=True)
class UeTrace:
    timestamp: float
    x: float
    y: float
    cell_id: str
    rss: float | None  # dBm; None when missing
    h_ue: float = DEFAULT_UE_HEIGHT


@dataclass(frozen=True)
class BinnedMeasurement:
    bin_ix: int
    bin_iy: int
    bin_width: float
    cell_id: str
    mean_rss: float
    count: int

    @property
    def center(self) -> tuple[float, float]:
        return ((self.bin_ix + 0.5) * self.bin_width, (self.bin_iy + 0.5) * self.bin_width)

    @property
    def key(self) -> tuple[int, int, str]:
        return (self.bin_ix, self.bin_iy, self.cell_id)


def _read_rows(path, columns):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        for col in columns:
            if col not in header:
                raise SchemaError(f"{path}: missing column '{col}'")
        reader.fieldnames = header
        # data rows start at line 2
        for lineno, row in enumerate(reader, start=2):
            yield lineno, {k: (v.strip() if v is not None else "") for k, v in row.items()}


def _number(text, column, lineno):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"column '{column}' is not numeric: {text!r}", lineno) from None
    return value


def parse_sites(path) -> list[SiteTopology]:
    sites = []
    for lineno, row in _read_rows(path, SITE_COLUMNS):
        nums = {c: _number(row[c], c, lineno) for c in SITE_COLUMNS[1:-1]}
        try:
            site = SiteTopology(
                cell_id=row["cell_id"],
                x=nums["x"],
                y=nums["y"],
                h_bs=nums["h_bs"],
                azimuth=nums["azimuth_deg"],
                tilt=nums["tilt_deg"],
                tx_power=nums["tx_power_dbm"],
                freq=nums["freq_mhz"],
                antenna=row["antenna"],
            )
        except ConfigError as exc:
            raise ParseError(str(exc), lineno) from None
        sites.append(site)
    ids = [s.cell_id for s in sites]
    if len(set(ids)) != len(ids):
        raise ParseError(f"{path}: duplicate cell_id")
    return sites


def parse_traces(path) -> list[UeTrace]:
    traces = []
    for lineno, row in _read_rows(path, TRACE_COLUMNS):
        rss = None if row["rss_dbm"] == "" else _number(row["rss_dbm"], "rss_dbm", lineno)
        traces.append(
            UeTrace(
                timestamp=_number(row["timestamp"], "timestamp", lineno),
                x=_number(row["x"], "x", lineno),
                y=_number(row["y"], "y", lineno),
                cell_id=row["cell_id"],
                rss=rss,
            )
        )
    return traces


def _fmt(v: float) -> str:
    return repr(float(v))


def write_sites(sites, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SITE_COLUMNS)
        for s in sites:
            w.writerow([s.cell_id, _fmt(s.x), _fmt(s.y), _fmt(s.h_bs), _fmt(s.azimuth), _fmt(s.tilt),
                        _fmt(s.tx_power), _fmt(s.freq), s.antenna])


def write_traces(traces, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for t in traces:
            w.writerow([_fmt(t.timestamp), _fmt(t.x), _fmt(t.y), t.cell_id, "" if t.rss is None else _fmt(t.rss)])


def clean_traces(traces, sites=None) -> list[UeTrace]:
    """Drop traces with missing/non-finite RSS or coordinates, or an unknown serving cell.

    When ``sites`` is None the cell check is skipped. Order is preserved.
    """
    known = None if sites is None else {s.cell_id for s in sites}
    out = []
    for t in traces:
        if t.rss is None or not math.isfinite(t.rss):
            continue
        if not (math.isfinite(t.x) and math.isfinite(t.y)):
            continue
        if known is not None and t.cell_id not in known:
            continue
        out.append(t)
    return out


def grid_traces(traces, bin_width: float = 10.0, domain: str = "db") -> list[BinnedMeasurement]:
    """Average cleaned traces per (spatial bin, serving cell).

    ``domain="db"`` averages dBm values directly; ``domain="mw"`` averages
    linear power and converts back. Output is sorted by (bin_ix, bin_iy, cell_id).
    """
    if not bin_width > 0:
        raise ConfigError("bin_width must be positive")
    if domain not in ("db", "mw"):
        raise ConfigError(f"unknown averaging domain {domain!r}")
    groups: dict[tuple[int, int, str], list[float]] = defaultdict(list)
    for t in traces:
        key = (math.floor(t.x / bin_width), math.floor(t.y / bin_width), t.cell_id)
        groups[key].append(t.rss)
    out = []
    for key in sorted(groups):
        vals = np.asarray(groups[key], dtype=np.float64)
        if domain == "db":
            mean = float(math.fsum(vals) / len(vals))
        else:
            mean = float(10.0 * np.log10(np.mean(10.0 ** (vals / 10.0))))
        out.append(BinnedMeasurement(key[0], key[1], float(bin_width), key[2], mean, len(vals)))
    return out


def site_index(sites) -> dict[str, SiteTopology]:
    return {s.cell_id: s for s in sites}
