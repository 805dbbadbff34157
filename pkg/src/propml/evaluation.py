"""Metrics, repeated k-fold cross-validation, hyperparameter search and the sparsity study."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ConfigError, DataError, SchemaError
from .features import FeatureMatrix
from .gbdt import GbdtConfig, TreeEnsemble, fit_arrays, predict

STRATEGIES = ("grid", "random", "tpe", "anneal")
REPORT_COLUMNS = (
    "trial", "strategy", "n_estimators", "max_depth", "learning_rate",
    "mean_rmse", "std_rmse", "mean_r2", "train_s", "predict_s",
)


@dataclass(frozen=True)
class Metrics:
    rmse: float
    r2: float  # nan when the targets have zero variance
    n: int

    @property
    def r2_defined(self) -> bool:
        return not math.isnan(self.r2)


def metrics(y, yhat) -> Metrics:
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.size != yhat.size:
        raise SchemaError(f"{y.size} targets but {yhat.size} predictions")
    if y.size == 0:
        raise SchemaError("metrics need at least one sample")
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    rmse = math.sqrt(ss_res / y.size)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else math.nan
    return Metrics(rmse, r2, int(y.size))


# --- cross-validation -------------------------------------------------------


def kfold_indices(n: int, k: int, seed: int, repeat: int = 0) -> list[np.ndarray]:
    """Held-out index sets of one shuffled k-fold partition of ``range(n)``."""
    if k < 2:
        raise DataError("k must be >= 2")
    if n < k:
        raise DataError(f"{n} rows cannot be split into {k} folds")
    perm = np.random.default_rng([seed, repeat]).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, k)]


@dataclass
class CvReport:
    folds: list[Metrics]
    train_s: list[float]
    predict_s: list[float]
    k: int
    repeats: int
    seed: int

    def _stat(self, values, fn):
        return float(fn(np.asarray(values, dtype=np.float64)))

    @property
    def mean_rmse(self) -> float:
        return self._stat([f.rmse for f in self.folds], np.mean)

    @property
    def std_rmse(self) -> float:
        return self._stat([f.rmse for f in self.folds], np.std)

    @property
    def mean_r2(self) -> float:
        return self._stat([f.r2 for f in self.folds], np.mean)

    @property
    def std_r2(self) -> float:
        return self._stat([f.r2 for f in self.folds], np.std)

    @property
    def mean_train_s(self) -> float:
        return self._stat(self.train_s, np.mean)

    @property
    def mean_predict_s(self) -> float:
        return self._stat(self.predict_s, np.mean)

    def summary(self) -> dict:
        return {
            "k": self.k, "repeats": self.repeats, "seed": self.seed,
            "mean_rmse": self.mean_rmse, "std_rmse": self.std_rmse,
            "mean_r2": self.mean_r2, "std_r2": self.std_r2,
            "train_s": self.mean_train_s, "predict_s": self.mean_predict_s,
        }


class FitCache:
    """Shares boosting prefixes between configs that differ only in n_estimators.

    Boosting is sequential, so the first n trees of a longer fit are exactly
    the n-tree model. A cached fit is truncated or resumed instead of refit.
    Training time for a truncated model is the measured time of the fit
    that produced those trees, prorated per tree. Use one cache per matrix.
    """

    def __init__(self):
        self._store: dict = {}

    def __len__(self):
        return len(self._store)

    def fit(self, key, X, y, cfg: GbdtConfig, names) -> tuple[TreeEnsemble, float]:
        slot = (key, replace(cfg, n_estimators=0))
        hit = self._store.get(slot)
        if hit is not None and len(hit[0].trees) >= cfg.n_estimators:
            model, cum = hit
            n = cfg.n_estimators
            return model.truncated(n), (cum[n - 1] if n else 0.0)
        t0 = time.perf_counter()
        init = hit[0] if hit is not None else None
        model = fit_arrays(X, y, cfg, names, init=init)
        elapsed = time.perf_counter() - t0
        cum = list(hit[1]) if hit is not None else []
        start = cum[-1] if cum else 0.0
        added = len(model.trees) - len(cum)
        cum.extend(start + elapsed * (i + 1) / added for i in range(added))
        self._store[slot] = (model, cum)
        return model, (cum[-1] if cum else elapsed)


# A learner maps a training matrix to a predict function.
Learner = Callable[[FeatureMatrix], Callable[[np.ndarray], np.ndarray]]


def gbdt_learner(cfg: GbdtConfig) -> Learner:
    def train(m: FeatureMatrix):
        model = fit_arrays(m.X, m.y, cfg, m.names)
        return lambda X: predict(model, X)

    return train


def repeated_kfold_cv(
    m: FeatureMatrix,
    cfg: GbdtConfig | None = None,
    k: int = 5,
    repeats: int = 1,
    seed: int = 0,
    *,
    learner: Learner | None = None,
    extra_test: FeatureMatrix | None = None,
    cache: FitCache | None = None,
) -> CvReport:
    """k-fold CV repeated with fresh shuffles; fold j of repeat r is held out once.

    ``extra_test`` rows are appended to every held-out fold (they never train).
    ``cache`` lets GBDT fits share boosting prefixes across calls.
    """
    if repeats < 1:
        raise DataError("repeats must be >= 1")
    cfg = cfg or GbdtConfig()
    if len(m) < k:
        raise DataError(f"{len(m)} rows cannot be split into {k} folds")
    folds, train_s, predict_s = [], [], []
    for r in range(repeats):
        for j, held in enumerate(kfold_indices(len(m), k, seed, r)):
            mask = np.ones(len(m), dtype=bool)
            mask[held] = False
            train = m.take(np.flatnonzero(mask))
            X_test, y_test = m.X[held], m.y[held]
            if extra_test is not None and len(extra_test):
                X_test = np.vstack([X_test, extra_test.X])
                y_test = np.concatenate([y_test, extra_test.y])
            if learner is not None:
                t0 = time.perf_counter()
                fn = learner(train)
                train_s.append(time.perf_counter() - t0)
            else:
                if cache is not None:
                    model, seconds = cache.fit((seed, r, j, len(m), k), train.X, train.y, cfg, train.names)
                else:
                    t0 = time.perf_counter()
                    model = fit_arrays(train.X, train.y, cfg, train.names)
                    seconds = time.perf_counter() - t0
                train_s.append(seconds)
                fn = (lambda mod: lambda X: predict(mod, X))(model)
            t0 = time.perf_counter()
            yhat = fn(X_test)
            predict_s.append(time.perf_counter() - t0)
            folds.append(metrics(y_test, yhat))
    return CvReport(folds, train_s, predict_s, k, repeats, seed)


# --- hyperparameter search --------------------------------------------------


@dataclass(frozen=True)
class SearchSpace:
    n_estimators: tuple[int, int] = (500, 2500)
    max_depth: tuple[int, int] = (5, 20)
    learning_rate: tuple[float, float] = (0.001, 0.1)  # searched on a log scale
    grid_points: int = 3
    anneal_points: int = 5

    def __post_init__(self):
        for name in ("n_estimators", "max_depth", "learning_rate"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name} range is empty: {lo} > {hi}")
        if self.n_estimators[0] < 1 or self.max_depth[0] < 1:
            raise ConfigError("n_estimators and max_depth must be >= 1")
        if not (0 < self.learning_rate[0] and self.learning_rate[1] <= 1):
            raise ConfigError("learning rate range must lie in (0, 1]")
        if self.grid_points < 1 or self.anneal_points < 2:
            raise ConfigError("grid_points >= 1 and anneal_points >= 2 required")

    # points are handled in a unit cube: (n, depth, log10 lr)
    def bounds(self) -> np.ndarray:
        lo_lr, hi_lr = self.learning_rate
        return np.array([
            self.n_estimators, self.max_depth, (math.log10(lo_lr), math.log10(hi_lr))
        ], dtype=np.float64)

    def lattice(self, points: int) -> list[np.ndarray]:
        b = self.bounds()
        axes = [np.linspace(lo, hi, points) for lo, hi in b]
        axes[0] = np.unique(np.round(axes[0]))
        axes[1] = np.unique(np.round(axes[1]))
        return axes

    def to_config(self, point, base: GbdtConfig) -> GbdtConfig:
        b = self.bounds()
        p = np.clip(np.asarray(point, dtype=np.float64), b[:, 0], b[:, 1])
        lr = float(np.clip(10.0 ** p[2], *self.learning_rate))
        return replace(base, n_estimators=int(round(p[0])), max_depth=int(round(p[1])), learning_rate=lr)

    def contains(self, cfg: GbdtConfig) -> bool:
        return (
            self.n_estimators[0] <= cfg.n_estimators <= self.n_estimators[1]
            and self.max_depth[0] <= cfg.max_depth <= self.max_depth[1]
            and self.learning_rate[0] <= cfg.learning_rate <= self.learning_rate[1]
        )


@dataclass
class Trial:
    index: int
    config: GbdtConfig
    report: CvReport

    @property
    def mean_rmse(self) -> float:
        return self.report.mean_rmse


@dataclass
class TunerResult:
    strategy: str
    trials: list[Trial] = field(default_factory=list)

    @property
    def evaluations(self) -> int:
        return len(self.trials)

    @property
    def best(self) -> Trial:
        # first trial wins ties
        return min(self.trials, key=lambda t: (t.mean_rmse, t.index))

    @property
    def best_config(self) -> GbdtConfig:
        return self.best.config

    @property
    def best_rmse(self) -> float:
        return self.best.mean_rmse

    def best_so_far(self) -> list[float]:
        return list(np.minimum.accumulate([t.mean_rmse for t in self.trials]))


@dataclass(frozen=True)
class TpeSettings:
    gamma: float = 0.25
    n_startup: int = 5
    n_candidates: int = 24


@dataclass(frozen=True)
class AnnealSettings:
    t0: float = 1.0  # on the RMSE scale, dB
    cooling: float = 0.85


def _random_point(space: SearchSpace, rng: np.random.Generator) -> np.ndarray:
    (n_lo, n_hi), (d_lo, d_hi), (l_lo, l_hi) = space.bounds()
    return np.array([
        rng.integers(int(n_lo), int(n_hi) + 1),
        rng.integers(int(d_lo), int(d_hi) + 1),
        rng.uniform(l_lo, l_hi),
    ], dtype=np.float64)


def _silverman(samples: np.ndarray, width: float) -> float:
    n = samples.size
    sd = float(np.std(samples, ddof=1)) if n > 1 else 0.0
    h = 1.06 * sd * n ** (-0.2)
    # a degenerate sample (one point, or all equal) still needs a usable kernel
    return max(h, 0.05 * width, 1e-12)


def _log_density(x: float, centers: np.ndarray, h: float) -> float:
    z = (x - centers) / h
    log_k = -0.5 * z * z - math.log(h * math.sqrt(2.0 * math.pi))
    top = float(np.max(log_k))
    return top + math.log(float(np.mean(np.exp(log_k - top))))


def _tpe_propose(space: SearchSpace, points: np.ndarray, losses: np.ndarray, rng, settings: TpeSettings):
    b = space.bounds()
    order = np.argsort(losses, kind="stable")
    n_good = max(1, int(math.ceil(settings.gamma * losses.size)))
    good = points[order[:n_good]]
    bad = points[order[n_good:]] if losses.size > n_good else points
    widths = b[:, 1] - b[:, 0]
    h_good = [_silverman(good[:, d], widths[d]) for d in range(3)]
    h_bad = [_silverman(bad[:, d], widths[d]) for d in range(3)]
    best_score, best = -math.inf, None
    for _ in range(settings.n_candidates):
        cand = np.empty(3)
        for d in range(3):
            centre = good[rng.integers(good.shape[0]), d]
            cand[d] = np.clip(centre + h_good[d] * rng.standard_normal(), b[d, 0], b[d, 1])
        cand[0] = round(cand[0])
        cand[1] = round(cand[1])
        score = sum(
            _log_density(cand[d], good[:, d], h_good[d]) - _log_density(cand[d], bad[:, d], h_bad[d])
            for d in range(3)
        )
        if score > best_score:
            best_score, best = score, cand
    return best


def _point_of(cfg: GbdtConfig) -> np.ndarray:
    return np.array([cfg.n_estimators, cfg.max_depth, math.log10(cfg.learning_rate)])


def tune(
    m: FeatureMatrix,
    space: SearchSpace | None = None,
    strategy: str = "tpe",
    budget: int = 10,
    seed: int = 0,
    *,
    base: GbdtConfig | None = None,
    k: int = 5,
    repeats: int = 1,
    cache: FitCache | None = None,
    tpe: TpeSettings = TpeSettings(),
    anneal: AnnealSettings = AnnealSettings(),
) -> TunerResult:
    """Search (n_estimators, max_depth, learning_rate); every trial is scored by repeated k-fold CV.

    The CV partition uses ``seed`` for every trial so configs are compared on
    identical folds. ``base`` supplies the non-searched settings.
    """
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}; expected one of {', '.join(STRATEGIES)}")
    if budget < 1:
        raise ConfigError("budget must be >= 1")
    space = space or SearchSpace()
    base = base or GbdtConfig()
    cache = cache if cache is not None else FitCache()
    rng = np.random.default_rng([seed, STRATEGIES.index(strategy)])
    result = TunerResult(strategy)

    def evaluate(cfg: GbdtConfig) -> float:
        report = repeated_kfold_cv(m, cfg, k, repeats, seed, cache=cache)
        result.trials.append(Trial(len(result.trials), cfg, report))
        return report.mean_rmse

    if strategy == "grid":
        ns, depths, lrs = space.lattice(space.grid_points)
        # learning rate outermost, tree count innermost: consecutive trials
        # extend one cached boosting run
        lattice = [(n, d, lr) for lr in lrs for d in depths for n in ns]
        for point in lattice[:budget]:
            evaluate(space.to_config(point, base))
    elif strategy == "random":
        for _ in range(budget):
            evaluate(space.to_config(_random_point(space, rng), base))
    elif strategy == "tpe":
        points, losses = [], []
        for i in range(budget):
            if i < tpe.n_startup:
                point = _random_point(space, rng)
            else:
                point = _tpe_propose(space, np.array(points), np.array(losses), rng, tpe)
            cfg = space.to_config(point, base)
            losses.append(evaluate(cfg))
            points.append(_point_of(cfg))
    else:
        axes = space.lattice(space.anneal_points)
        idx = [len(a) // 2 for a in axes]
        current = evaluate(space.to_config([axes[d][idx[d]] for d in range(3)], base))
        temperature = anneal.t0
        for _ in range(budget - 1):
            d = int(rng.integers(3))
            step = 1 if rng.random() < 0.5 else -1
            if not 0 <= idx[d] + step < len(axes[d]):
                step = -step
            proposal = list(idx)
            proposal[d] = min(max(idx[d] + step, 0), len(axes[d]) - 1)
            loss = evaluate(space.to_config([axes[j][proposal[j]] for j in range(3)], base))
            delta = loss - current
            if delta <= 0 or rng.random() < math.exp(-delta / temperature):
                idx, current = proposal, loss
            temperature *= anneal.cooling

    best = result.best
    assert best.mean_rmse == min(t.mean_rmse for t in result.trials)
    return result


def write_tuning_report(results, path) -> None:
    """One CSV row per trial; ``results`` is a TunerResult or a list of them."""
    if isinstance(results, TunerResult):
        results = [results]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for res in results:
            for t in res.trials:
                r = t.report
                w.writerow([
                    t.index, res.strategy, t.config.n_estimators, t.config.max_depth, repr(t.config.learning_rate),
                    repr(r.mean_rmse), repr(r.std_rmse), repr(r.mean_r2),
                    f"{r.mean_train_s:.6f}", f"{r.mean_predict_s:.6f}",
                ])


# --- sparsity ---------------------------------------------------------------


def sparse_subsample(n: int, fraction: float, seed: int) -> np.ndarray:
    if not 0 < fraction <= 1:
        raise DataError("fraction must lie in (0, 1]")
    size = int(math.floor(fraction * n))
    if size < 10:
        raise DataError(f"a {fraction} subsample of {n} rows has {size} rows; at least 10 needed")
    return np.sort(np.random.default_rng(seed).choice(n, size=size, replace=False))


def sparsity_eval(
    m: FeatureMatrix,
    fraction: float,
    cfg: GbdtConfig | None = None,
    seed: int = 0,
    k: int = 5,
    repeats: int = 1,
    learner: Learner | None = None,
) -> CvReport:
    """CV on a seeded ``fraction`` of the rows, each fold also tested on every unsampled row."""
    keep = sparse_subsample(len(m), fraction, seed)
    mask = np.ones(len(m), dtype=bool)
    mask[keep] = False
    rest = m.take(np.flatnonzero(mask))
    return repeated_kfold_cv(m.take(keep), cfg, k, repeats, seed, learner=learner, extra_test=rest)
