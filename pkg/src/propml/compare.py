"""GBDT against the empirical models and simple learners on one measurement set."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .empirical import EmpiricalConfig, empirical_predict
from .evaluation import CvReport, metrics, repeated_kfold_cv
from .features import FeatureMatrix
from .gbdt import GbdtConfig, fit_baseline, predict_baseline
from .geodata import GeoStack

COMPARE_COLUMNS = ("model", "protocol", "rmse", "r2", "n")


@dataclass(frozen=True)
class ComparisonRow:
    model: str
    protocol: str  # "cv" (k-fold mean), "direct" (no fitting) or "cv-offset" (fold-fitted constant offset)
    rmse: float
    r2: float
    n: int


def bin_centres(m: FeatureMatrix, bin_width: float) -> list[tuple[float, float, str]]:
    return [((ix + 0.5) * bin_width, (iy + 0.5) * bin_width, cell) for ix, iy, cell in m.keys]


def _offset_learner(train: FeatureMatrix):
    offset = float(np.mean(train.y - train.X[:, 0]))
    return lambda X: X[:, 0] + offset


def _baseline_learner(kind: str):
    def train(m: FeatureMatrix):
        model = fit_baseline(m, kind)
        return lambda X: predict_baseline(model, X)

    return train


def _cv_row(name: str, protocol: str, rep: CvReport) -> ComparisonRow:
    return ComparisonRow(name, protocol, rep.mean_rmse, rep.mean_r2, sum(f.n for f in rep.folds))


def compare_models(
    geo: GeoStack,
    sites,
    m: FeatureMatrix,
    *,
    bin_width: float = 10.0,
    cfg: GbdtConfig | None = None,
    k: int = 5,
    repeats: int = 1,
    seed: int = 0,
    empirical: EmpiricalConfig | None = None,
    models=("cost-hata", "sui", "spm"),
    baselines=("linear", "knn"),
) -> list[ComparisonRow]:
    """RMSE/R^2 of the GBDT (k-fold CV) next to each empirical model and baseline learner.

    Empirical models are scored as configured ("direct") and with a constant
    offset fitted on the training folds ("cv-offset"), the usual single-number
    calibration of a planning tool against drive-test data.
    """
    rows = [_cv_row("gbdt", "cv", repeated_kfold_cv(m, cfg or GbdtConfig(), k, repeats, seed))]
    for kind in baselines:
        rows.append(_cv_row(kind, "cv", repeated_kfold_cv(m, None, k, repeats, seed, learner=_baseline_learner(kind))))
    points = bin_centres(m, bin_width)
    for name in models:
        pred = np.asarray(empirical_predict(name, geo, sites, points, empirical))
        direct = metrics(m.y, pred)
        rows.append(ComparisonRow(name, "direct", direct.rmse, direct.r2, direct.n))
        one = FeatureMatrix([name], pred[:, None], m.y, list(m.keys))
        rows.append(_cv_row(name, "cv-offset", repeated_kfold_cv(one, None, k, repeats, seed, learner=_offset_learner)))
    return rows


def best_empirical(rows: list[ComparisonRow], models=None) -> ComparisonRow:
    """Lowest-RMSE empirical row over both protocols."""
    skip = {"gbdt", "linear", "knn"}
    pool = [r for r in rows if r.model not in skip and (models is None or r.model in models)]
    return min(pool, key=lambda r: r.rmse)


def write_comparison(rows: list[ComparisonRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARE_COLUMNS)
        for r in rows:
            w.writerow([r.model, r.protocol, repr(r.rmse), repr(r.r2), r.n])
