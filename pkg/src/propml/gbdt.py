"""Histogram gradient-boosted regression trees, plus linear and k-NN baselines.

Squared loss only. Feature values are bucketed once per fit into at most
``n_bins`` quantile bins; trees grow depth-wise to ``max_depth`` and a node
splits only if the gain exceeds 1e-12 with ``min_samples_leaf`` samples on
each side. A sample goes left when ``x <= threshold``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .errors import DataError, FormatError, ModelError, SchemaError
from .features import FeatureMatrix

MODEL_FORMAT = "propml-gbdt"
MODEL_VERSION = 1
MIN_GAIN = 1e-12


@dataclass(frozen=True)
class GossConfig:
    a: float = 0.2  # fraction kept by largest |gradient|
    b: float = 0.1  # random fraction of the rest

    def __post_init__(self):
        if not (0 <= self.a <= 1 and 0 <= self.b <= 1 and self.a + self.b <= 1):
            raise DataError("GOSS fractions need 0 <= a, b and a + b <= 1")


@dataclass(frozen=True)
class GbdtConfig:
    n_estimators: int = 500
    max_depth: int = 8
    learning_rate: float = 0.1
    min_samples_leaf: int = 20
    n_bins: int = 255
    goss: GossConfig | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 0:
            raise DataError("n_estimators must be >= 0")
        if self.max_depth < 1:
            raise DataError("max_depth must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise DataError("learning_rate must lie in (0, 1]")
        if self.min_samples_leaf < 1:
            raise DataError("min_samples_leaf must be >= 1")
        if not 2 <= self.n_bins <= 65535:
            raise DataError("n_bins must lie in [2, 65535]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> GbdtConfig:
        d = dict(d)
        if d.get("goss") is not None:
            d["goss"] = GossConfig(**d["goss"])
        return cls(**d)


@dataclass(eq=False)
class Tree:
    feature: np.ndarray  # int32, -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    cover: np.ndarray  # training samples reaching the node
    value: np.ndarray  # leaf output before shrinkage

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def expected_value(self) -> float:
        """Cover-weighted mean leaf output."""
        leaves = self.feature < 0
        return float(np.dot(self.cover[leaves], self.value[leaves]) / self.cover[0])


@dataclass(eq=False)
class TreeEnsemble:
    base_score: float
    learning_rate: float
    trees: list[Tree]
    feature_names: list[str]
    config: GbdtConfig = field(default_factory=GbdtConfig)
    train_rmse: list[float] = field(default_factory=list)
    _packed: tuple | None = field(default=None, repr=False)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def packed(self):
        """Flat node arrays of all trees plus per-tree offsets (cached)."""
        if self._packed is None or self._packed[0].size != len(self.trees) + 1:
            sizes = [t.n_nodes for t in self.trees]
            offsets = np.zeros(len(self.trees) + 1, np.int64)
            offsets[1:] = np.cumsum(sizes)

            def cat(name, dtype):
                if not self.trees:
                    return np.zeros(0, dtype)
                return np.concatenate([getattr(t, name) for t in self.trees]).astype(dtype)

            self._packed = (
                offsets,
                cat("feature", np.int32),
                cat("threshold", np.float64),
                cat("left", np.int32),
                cat("right", np.int32),
                cat("cover", np.float64),
                cat("value", np.float64),
            )
        return self._packed

    def expected_value(self) -> float:
        return self.base_score + sum(self.learning_rate * t.expected_value() for t in self.trees)

    def truncated(self, n_trees: int) -> TreeEnsemble:
        """The same model restricted to its first ``n_trees`` trees."""
        from dataclasses import replace

        cfg = replace(self.config, n_estimators=n_trees)
        return TreeEnsemble(self.base_score, self.learning_rate, self.trees[:n_trees], list(self.feature_names),
                            cfg, self.train_rmse[:n_trees])


# --- binning ----------------------------------------------------------------


def bin_edges(column: np.ndarray, n_bins: int) -> np.ndarray:
    """Split thresholds for one feature: midpoints between distinct values at quantile positions."""
    distinct = np.unique(column)
    if distinct.size <= 1:
        return np.zeros(0)
    if distinct.size <= n_bins:
        pos = np.arange(distinct.size - 1)
    else:
        ordered = np.sort(column)
        q = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
        picks = ordered[np.floor(q * (ordered.size - 1)).astype(np.int64)]
        pos = np.unique(np.searchsorted(distinct, picks))
        pos = pos[pos < distinct.size - 1]
    return (distinct[pos] + distinct[pos + 1]) / 2.0


def bin_matrix(X: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    Xb = np.empty(X.shape, dtype=np.uint16)
    for j, e in enumerate(edges):
        Xb[:, j] = np.searchsorted(e, X[:, j], side="left")
    return Xb


def _check_matrix(X, y=None):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("training matrix is empty")
    bad = ~np.isfinite(X).all(axis=1)
    if y is not None:
        bad |= ~np.isfinite(y)
    if bad.any():
        raise DataError(f"non-finite value in row {int(np.flatnonzero(bad)[0])}")
    return X


def _goss_rows(grad: np.ndarray, goss: GossConfig, rng: np.random.Generator):
    n = grad.size
    n_top = int(goss.a * n)
    n_rand = int(goss.b * n)
    order = np.argsort(-np.abs(grad), kind="stable")
    top = order[:n_top]
    rest = order[n_top:]
    n_rand = min(n_rand, rest.size)
    sampled = rng.choice(rest, size=n_rand, replace=False) if n_rand else rest[:0]
    weight = np.ones(n)
    if n_rand:
        weight[sampled] = (1.0 - goss.a) / goss.b
    rows = np.sort(np.concatenate([top, sampled])).astype(np.int64)
    return rows, weight


def _grow(Xb, residual, weight, rows, n_bins, cfg, edges):
    f, sb, left, right, cover, value = _kernels.grow_tree(
        Xb, residual, weight, rows, n_bins, int(n_bins.max()), cfg.max_depth, cfg.min_samples_leaf, MIN_GAIN
    )
    thr = np.zeros(f.size)
    split = f >= 0
    for node in np.flatnonzero(split):
        thr[node] = edges[f[node]][sb[node]]
    return Tree(f, thr, left, right, cover, value), sb


def fit_arrays(X, y, cfg: GbdtConfig, names=None, init: TreeEnsemble | None = None) -> TreeEnsemble:
    """Boost ``cfg.n_estimators`` trees on (X, y).

    With ``init`` the fit resumes from an ensemble previously fitted on the
    same data and config; the result is identical to a fresh fit with the
    larger tree count.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    X = _check_matrix(X, y)
    if y.size != X.shape[0]:
        raise SchemaError("one target per row required")
    names = list(names) if names is not None else [f"f{j}" for j in range(X.shape[1])]
    edges = [bin_edges(X[:, j], cfg.n_bins) for j in range(X.shape[1])]
    n_bins = np.array([e.size + 1 for e in edges], dtype=np.int64)
    Xb = bin_matrix(X, edges)

    if init is None:
        base = float(np.mean(y))
        trees: list[Tree] = []
        history: list[float] = []
        pred = np.full(y.size, base)
    else:
        base = init.base_score
        trees = list(init.trees)
        history = list(init.train_rmse)
        pred = predict(init, X)
    lr = cfg.learning_rate
    ones = np.ones(y.size)
    all_rows = np.arange(y.size, dtype=np.int64)
    for t in range(len(trees), cfg.n_estimators):
        residual = y - pred
        if cfg.goss is not None:
            rows, weight = _goss_rows(residual, cfg.goss, np.random.default_rng([cfg.seed, t]))
        else:
            rows, weight = all_rows, ones
        tree, split_bins = _grow(Xb, residual, weight, rows, n_bins, cfg, edges)
        _kernels.apply_binned(Xb, tree.feature, split_bins, tree.left, tree.right, tree.value, pred, lr)
        trees.append(tree)
        history.append(float(np.sqrt(np.mean((y - pred) ** 2))))
        # leaf means shrunk by lr <= 1 cannot raise the squared error on the
        # full data; GOSS leaves are fitted on a reweighted subset, so no check
        if cfg.goss is None and len(history) > 1 and history[-1] > history[-2] * (1 + 1e-12) + 1e-12:
            raise ModelError(f"training RMSE rose at iteration {t}: {history[-2]!r} -> {history[-1]!r}")
    return TreeEnsemble(base, lr, trees, names, cfg, history)


def fit(m: FeatureMatrix, cfg: GbdtConfig | None = None) -> TreeEnsemble:
    if len(m) == 0:
        raise DataError("training matrix is empty")
    return fit_arrays(m.X, m.y, cfg or GbdtConfig(), m.names)


def predict(e: TreeEnsemble, rows, n_trees: int | None = None) -> np.ndarray:
    """base_score + sum_t learning_rate * tree_t(row), optionally over the first ``n_trees`` trees."""
    X = np.ascontiguousarray(rows.X if isinstance(rows, FeatureMatrix) else rows, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != e.n_features:
        raise SchemaError(f"rows have {X.shape[1]} features, model expects {e.n_features}")
    n_trees = len(e.trees) if n_trees is None else min(n_trees, len(e.trees))
    offsets, feature, threshold, left, right, _, value = e.packed()
    return _kernels.predict_forest(X, offsets, feature, threshold, left, right, value, e.base_score,
                                   e.learning_rate, n_trees)


# --- persistence --------------------------------------------------------------


def model_to_dict(e: TreeEnsemble) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "base_score": e.base_score,
        "learning_rate": e.learning_rate,
        "config": e.config.to_dict(),
        "feature_names": list(e.feature_names),
        "train_rmse": list(e.train_rmse),
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "cover": t.cover.tolist(),
                "value": t.value.tolist(),
            }
            for t in e.trees
        ],
    }


def model_from_dict(doc: dict) -> TreeEnsemble:
    if doc.get("format") != MODEL_FORMAT:
        raise FormatError("not a propml model file")
    if doc.get("version") != MODEL_VERSION:
        raise FormatError(f"model version {doc.get('version')!r} is not supported (expected {MODEL_VERSION})")
    try:
        trees = []
        for t in doc["trees"]:
            tree = Tree(
                np.array(t["feature"], dtype=np.int32),
                np.array(t["threshold"], dtype=np.float64),
                np.array(t["left"], dtype=np.int32),
                np.array(t["right"], dtype=np.int32),
                np.array(t["cover"], dtype=np.int64),
                np.array(t["value"], dtype=np.float64),
            )
            sizes = {a.size for a in (tree.feature, tree.threshold, tree.left, tree.right, tree.cover, tree.value)}
            if len(sizes) != 1:
                raise FormatError("tree node arrays differ in length")
            trees.append(tree)
        return TreeEnsemble(
            float(doc["base_score"]),
            float(doc["learning_rate"]),
            trees,
            list(doc["feature_names"]),
            GbdtConfig.from_dict(doc["config"]),
            [float(v) for v in doc.get("train_rmse", [])],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model file: {exc}") from None


def dumps_model(e: TreeEnsemble) -> str:
    return json.dumps(model_to_dict(e), separators=(",", ":"))


def save_model(e: TreeEnsemble, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_model(e))
        fh.write("\n")


def load_model(path) -> TreeEnsemble:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc.msg})") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: not a propml model file")
    return model_from_dict(doc)


# --- baselines ----------------------------------------------------------------


@dataclass(eq=False)
class BaselineModel:
    kind: str  # "linear" or "knn"
    mean: np.ndarray
    scale: np.ndarray
    weights: np.ndarray | None = None
    intercept: float = 0.0
    train_X: np.ndarray | None = None  # standardised, k-NN only
    train_y: np.ndarray | None = None
    k: int = 5


def _standardise(X):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


def fit_baseline(m: FeatureMatrix, kind: str = "linear", k: int = 5, ridge: float = 1e-8) -> BaselineModel:
    if len(m) == 0:
        raise DataError("training matrix is empty")
    X = _check_matrix(m.X, m.y)
    mean, scale = _standardise(X)
    Z = (X - mean) / scale
    if kind == "linear":
        ybar = float(np.mean(m.y))
        A = Z.T @ Z + ridge * np.eye(Z.shape[1])
        w = np.linalg.solve(A, Z.T @ (m.y - ybar))
        return BaselineModel("linear", mean, scale, weights=w, intercept=ybar)
    if kind == "knn":
        if k < 1:
            raise DataError("k must be >= 1")
        return BaselineModel("knn", mean, scale, train_X=Z, train_y=m.y.copy(), k=k)
    raise DataError(f"unknown baseline kind {kind!r}")


def predict_baseline(b: BaselineModel, rows, chunk: int = 512) -> np.ndarray:
    X = np.asarray(rows.X if isinstance(rows, FeatureMatrix) else rows, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != b.mean.size:
        raise SchemaError(f"rows have {X.shape[1]} features, model expects {b.mean.size}")
    Z = (X - b.mean) / b.scale
    if b.kind == "linear":
        return Z @ b.weights + b.intercept
    k = min(b.k, b.train_y.size)
    out = np.empty(Z.shape[0])
    sq_train = np.sum(b.train_X**2, axis=1)
    for lo in range(0, Z.shape[0], chunk):
        q = Z[lo : lo + chunk]
        dist = np.sum(q**2, axis=1)[:, None] - 2.0 * q @ b.train_X.T + sq_train[None, :]
        nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
        out[lo : lo + chunk] = b.train_y[nearest].mean(axis=1)
    return out
