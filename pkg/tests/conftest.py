import numpy as np
import pytest

from propml.features import FeatureMatrix
from propml.geodata import GeoStack, RasterGrid
from propml.scenario import SiteTopology
from propml.synth import ScenarioConfig, generate_scenario, scenario_features


def make_geo(ground, building=None, clutter=None, cellsize=1.0, clutter_count=4, xll=0.0, yll=0.0):
    """Stack from 2-D arrays whose first row is north."""
    ground = np.asarray(ground, dtype=float)
    building = np.zeros_like(ground) if building is None else np.asarray(building, dtype=float)
    clutter = np.zeros_like(ground) if clutter is None else np.asarray(clutter, dtype=float)
    grids = [RasterGrid.from_array(a, xll, yll, cellsize) for a in (ground, building, clutter)]
    return GeoStack(*grids, clutter_count=clutter_count)


def flat_geo(nrows=20, ncols=120, cellsize=1.0, clutter_count=4):
    return make_geo(np.zeros((nrows, ncols)), cellsize=cellsize, clutter_count=clutter_count)


def site(x=0.5, y=10.0, h_bs=10.0, azimuth=90.0, tilt=0.0, cell_id="c1", **kw):
    return SiteTopology(cell_id, x, y, h_bs, azimuth, tilt, **kw)


def random_matrix(n=400, p=6, seed=0, noise=0.1):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, p))
    y = 3 * X[:, 0] - 2 * (X[:, 1] > 0) + X[:, 2] * X[:, 3] + noise * rng.normal(size=n)
    keys = [(i, 0, "c") for i in range(n)]
    return FeatureMatrix([f"f{j}" for j in range(p)], X, y, keys)


SMALL_CITY = ScenarioConfig(area=400.0, n_sites=2, ue_density=20000.0)


@pytest.fixture(scope="session")
def small_scenario():
    return generate_scenario(SMALL_CITY, seed=1)


@pytest.fixture(scope="session")
def small_features(small_scenario):
    return scenario_features(small_scenario)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
