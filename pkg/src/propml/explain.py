"""Exact path-dependent TreeSHAP, SHAP summaries and the top-k lighter model.

Absent features are marginalised by descending both branches weighted by the
training covers stored in each node, so no background dataset is needed.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DataError, ModelError, SchemaError, UnknownReferenceError
from .evaluation import CvReport, repeated_kfold_cv
from .features import FeatureMatrix
from .gbdt import GbdtConfig, TreeEnsemble, fit, predict


@dataclass(eq=False)
class ShapMatrix:
    base: float  # cover-weighted expected model output
    values: np.ndarray  # (rows, features), dB
    feature_names: list[str]

    @property
    def shape(self):
        return self.values.shape

    def total(self) -> np.ndarray:
        """base + sum of attributions per row; equals the model prediction."""
        return self.base + self.values.sum(axis=1)


@dataclass(frozen=True)
class ShapSummary:
    feature_names: tuple[str, ...]
    mean_abs: np.ndarray
    ranking: tuple[int, ...]  # feature indices, most important first

    def top(self, k: int) -> list[str]:
        return [self.feature_names[i] for i in self.ranking[:k]]


def _check_covers(e: TreeEnsemble) -> None:
    for t, tree in enumerate(e.trees):
        cover = np.asarray(tree.cover)
        if cover.size != tree.n_nodes or not np.all(np.isfinite(cover)) or cover[0] <= 0:
            raise ModelError(f"tree {t} lacks node covers; retrain or re-save the model with covers")
        internal = np.flatnonzero(tree.feature >= 0)
        if internal.size and np.any(cover[internal] <= 0):
            raise ModelError(f"tree {t} has an internal node with zero cover; retrain the model")


def tree_shap(e: TreeEnsemble, rows) -> ShapMatrix:
    """Exact Shapley attributions of every row under cover-weighted conditional expectations."""
    X = np.ascontiguousarray(rows.X if isinstance(rows, FeatureMatrix) else rows, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != e.n_features:
        raise SchemaError(f"rows have {X.shape[1]} features, model expects {e.n_features}")
    _check_covers(e)
    if not e.trees:
        return ShapMatrix(e.base_score, np.zeros((X.shape[0], e.n_features)), list(e.feature_names))
    offsets, feature, threshold, left, right, cover, value = e.packed()
    depths = np.array([t.depth() for t in e.trees], dtype=np.int64)
    phi = _kernels.tree_shap_forest(X, offsets, depths, feature, threshold, left, right, cover, value,
                                    e.learning_rate, e.n_features)
    return ShapMatrix(e.expected_value(), phi, list(e.feature_names))


def shap_summary(s: ShapMatrix) -> ShapSummary:
    if s.values.shape[0] == 0:
        raise DataError("SHAP matrix has no rows")
    mean_abs = np.mean(np.abs(s.values), axis=0)
    # descending mean, ties by feature index
    ranking = tuple(int(i) for i in np.lexsort((np.arange(mean_abs.size), -mean_abs)))
    return ShapSummary(tuple(s.feature_names), mean_abs, ranking)


def dependence_export(s: ShapMatrix, m: FeatureMatrix, feature: str, interaction: str) -> np.ndarray:
    """Columns (feature value, SHAP value of feature, interaction feature value), in row order of ``m``."""
    if s.values.shape[0] != len(m):
        raise SchemaError(f"SHAP matrix has {s.values.shape[0]} rows, feature matrix {len(m)}")
    for name in (feature, interaction):
        if name not in s.feature_names:
            raise UnknownReferenceError(f"unknown feature '{name}'")
    j = s.feature_names.index(feature)
    return np.column_stack([m.column(feature), s.values[:, j], m.column(interaction)])


# --- lighter model ----------------------------------------------------------


@dataclass
class LighterModelReport:
    full: CvReport
    top: CvReport
    selected: list[str]
    summary: ShapSummary

    def deltas(self) -> dict[str, float]:
        """Relative change (top - full) / full of rmse, r2, training and prediction time."""
        pairs = {
            "rmse": (self.full.mean_rmse, self.top.mean_rmse),
            "r2": (self.full.mean_r2, self.top.mean_r2),
            "train_s": (self.full.mean_train_s, self.top.mean_train_s),
            "predict_s": (self.full.mean_predict_s, self.top.mean_predict_s),
        }
        return {k: (b - a) / a if a else float("nan") for k, (a, b) in pairs.items()}


def lighter_model_report(
    m: FeatureMatrix,
    cfg: GbdtConfig | None = None,
    k: int = 5,
    seed: int = 0,
    *,
    cv_k: int = 5,
    repeats: int = 1,
    shap_rows: int | None = 1000,
) -> LighterModelReport:
    """Rank features by mean |SHAP| of a full-data model, keep the top ``k``, and CV both models.

    ``shap_rows`` caps the number of training rows (a seeded subsample) the
    ranking is computed on; None uses every row.
    """
    cfg = cfg or GbdtConfig()
    if not 1 <= k <= len(m.names):
        raise DataError(f"k must lie in [1, {len(m.names)}]")
    model = fit(m, cfg)
    rows = np.arange(len(m))
    if shap_rows is not None and shap_rows < len(m):
        rows = np.sort(np.random.default_rng(seed).choice(len(m), size=shap_rows, replace=False))
    summary = shap_summary(tree_shap(model, m.X[rows]))
    selected = summary.top(k)
    full = repeated_kfold_cv(m, cfg, cv_k, repeats, seed)
    top = repeated_kfold_cv(m.select(selected), cfg, cv_k, repeats, seed)
    return LighterModelReport(full, top, selected, summary)


# --- CSV output -------------------------------------------------------------


def write_shap_csv(s: ShapMatrix, keys, path) -> None:
    keys = list(keys)
    if len(keys) != s.values.shape[0]:
        raise SchemaError("one key per SHAP row required")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_ix", "bin_iy", "cell_id", "base"] + [f"phi_{n}" for n in s.feature_names])
        for key, row in zip(keys, s.values):
            w.writerow([key[0], key[1], key[2], repr(s.base)] + [repr(float(v)) for v in row])


def write_summary_csv(summary: ShapSummary, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "mean_abs_shap", "rank"])
        for rank, j in enumerate(summary.ranking, start=1):
            w.writerow([summary.feature_names[j], repr(float(summary.mean_abs[j])), rank])


def write_dependence_csv(table: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature_value", "shap_value", "interaction_value"])
        for row in table:
            w.writerow([repr(float(v)) for v in row])


def check_local_accuracy(e: TreeEnsemble, s: ShapMatrix, rows, tol: float = 1e-9) -> float:
    """Largest |base + sum(phi) - prediction| over the rows; raises ModelError above ``tol``."""
    gap = float(np.max(np.abs(s.total() - predict(e, rows)), initial=0.0))
    if gap > tol:
        raise ModelError(f"SHAP values miss the prediction by {gap:.3g}")
    return gap
