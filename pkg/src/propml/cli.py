"""Command-line entry point: ``propml <command> [options]``.

Every run writes a plain-text manifest next to its main output
(``<output>.manifest.txt``) listing the resolved options, the seed, inputs,
outputs and timings. Module errors exit with status 1 and a one-line
message; usage errors exit with status 2.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .compare import best_empirical, compare_models, write_comparison
from .empirical import MODELS, EmpiricalConfig, empirical_predict, load_params
from .errors import ConfigError, PropmlError, SchemaError
from .evaluation import (
    STRATEGIES, FitCache, SearchSpace, gbdt_learner, repeated_kfold_cv, tune, write_tuning_report,
)
from .explain import (
    dependence_export, lighter_model_report, shap_summary, tree_shap, write_dependence_csv,
    write_shap_csv, write_summary_csv,
)
from .features import point_features, read_features_csv, write_features_csv
from .gbdt import GbdtConfig, GossConfig, fit, fit_baseline, load_model, predict, predict_baseline, save_model
from .geodata import load_geostack, save_geostack
from .scenario import clean_traces, grid_traces, parse_sites, parse_traces, write_sites, write_traces
from .features import build_feature_matrix
from .synth import ScenarioConfig, generate_scenario


class Manifest:
    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.options = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
        self.inputs: list[str] = []
        self.outputs: list[str] = []
        self.timings: list[tuple[str, float]] = []
        self._t0 = time.perf_counter()

    def timed(self, label: str):
        manifest = self

        class _Timer:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                manifest.timings.append((label, time.perf_counter() - self.t))

        return _Timer()

    def write(self, path) -> Path:
        path = Path(str(path) + ".manifest.txt")
        lines = [
            f"command: {self.command}",
            f"version: {__version__}",
            f"seed: {self.options.get('seed', '')}",
            "options: " + json.dumps(self.options, sort_keys=True, default=str),
        ]
        lines += [f"input: {p}" for p in self.inputs]
        lines += [f"output: {p}" for p in self.outputs]
        lines += [f"time {label}: {seconds:.3f} s" for label, seconds in self.timings]
        lines.append(f"time total: {time.perf_counter() - self._t0:.3f} s")
        path.write_text("\n".join(lines) + "\n")
        return path


def _gbdt_config(args) -> GbdtConfig:
    goss = None
    if getattr(args, "goss", None):
        try:
            a, b = (float(v) for v in args.goss.split(","))
        except ValueError:
            raise ConfigError(f"--goss expects 'a,b', got {args.goss!r}") from None
        goss = GossConfig(a, b)
    return GbdtConfig(
        n_estimators=args.n_estimators, max_depth=args.max_depth, learning_rate=args.learning_rate,
        min_samples_leaf=args.min_samples_leaf, goss=goss, seed=args.seed,
    )


def _add_gbdt_flags(p):
    d = GbdtConfig()
    p.add_argument("--n-estimators", type=int, default=d.n_estimators)
    p.add_argument("--max-depth", type=int, default=d.max_depth)
    p.add_argument("--learning-rate", type=float, default=d.learning_rate)
    p.add_argument("--min-samples-leaf", type=int, default=d.min_samples_leaf)
    p.add_argument("--goss", metavar="A,B", help="enable GOSS with top fraction A and random fraction B")


def _load_inputs(args, manifest):
    geo = load_geostack(args.geo)
    sites = parse_sites(args.sites)
    manifest.inputs += [str(args.geo), str(args.sites)]
    return geo, sites


def _features_from_traces(geo, sites, traces_path, bin_width):
    traces = clean_traces(parse_traces(traces_path), sites)
    return build_feature_matrix(geo, sites, grid_traces(traces, bin_width))


# --- commands ---------------------------------------------------------------


def cmd_gen(args, manifest):
    cfg = ScenarioConfig(
        area=args.area, cellsize=args.cellsize, n_sites=args.sites, ue_density=args.ue_density,
        clutter_count=args.clutters,
    )
    with manifest.timed("generate"):
        scn = generate_scenario(cfg, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = save_geostack(scn.geo, out)
    write_sites(scn.sites, out / "sites.csv")
    write_traces(scn.traces, out / "traces.csv")
    manifest.outputs += [str(p) for p in written] + [str(out / "sites.csv"), str(out / "traces.csv")]
    return out


def cmd_features(args, manifest):
    geo, sites = _load_inputs(args, manifest)
    manifest.inputs.append(str(args.traces))
    with manifest.timed("features"):
        m = _features_from_traces(geo, sites, args.traces, args.bin_width)
    write_features_csv(m, args.out)
    manifest.outputs.append(str(args.out))
    return args.out


def cmd_train(args, manifest):
    m = read_features_csv(args.features)
    manifest.inputs.append(str(args.features))
    cfg = _gbdt_config(args)
    with manifest.timed("fit"):
        model = fit(m, cfg)
    save_model(model, args.out_model)
    manifest.outputs.append(str(args.out_model))
    if args.report:
        with manifest.timed("cv"):
            rep = repeated_kfold_cv(m, cfg, args.folds, args.repeats, args.seed)
        with open(args.report, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fold", "rmse", "r2", "n", "train_s", "predict_s"])
            for i, (f, ts, ps) in enumerate(zip(rep.folds, rep.train_s, rep.predict_s)):
                w.writerow([i, repr(f.rmse), repr(f.r2), f.n, f"{ts:.6f}", f"{ps:.6f}"])
            w.writerow(["mean", repr(rep.mean_rmse), repr(rep.mean_r2), "", f"{rep.mean_train_s:.6f}",
                        f"{rep.mean_predict_s:.6f}"])
            w.writerow(["std", repr(rep.std_rmse), repr(rep.std_r2), "", "", ""])
        manifest.outputs.append(str(args.report))
    return args.out_model


def cmd_tune(args, manifest):
    m = read_features_csv(args.features)
    manifest.inputs.append(str(args.features))
    if args.max_rows and len(m) > args.max_rows:
        rows = np.sort(np.random.default_rng(args.seed).choice(len(m), size=args.max_rows, replace=False))
        m = m.take(rows)
    strategies = STRATEGIES if args.strategy == "all" else (args.strategy,)
    cache = FitCache()
    base = GbdtConfig(min_samples_leaf=args.min_samples_leaf, seed=args.seed)
    results = []
    for strategy in strategies:
        with manifest.timed(strategy):
            results.append(tune(m, SearchSpace(), strategy, args.budget, args.seed, base=base, k=args.folds,
                                repeats=args.repeats, cache=cache))
    write_tuning_report(results, args.report)
    manifest.outputs.append(str(args.report))
    return args.report


def _write_pgm(values: np.ndarray, path, lo: float, hi: float) -> None:
    """8-bit plain PGM; rows top (north) to bottom, dBm mapped linearly from [lo, hi] to [0, 255]."""
    if not hi > lo:
        raise ConfigError("PGM window needs max > min")
    scaled = np.rint((np.clip(values, lo, hi) - lo) / (hi - lo) * 255.0).astype(int)
    nrows, ncols = values.shape
    with open(path, "w") as fh:
        fh.write(f"P2\n{ncols} {nrows}\n255\n")
        for row in scaled:
            fh.write(" ".join(str(v) for v in row) + "\n")


def cmd_predict(args, manifest):
    model = load_model(args.model)
    geo, sites = _load_inputs(args, manifest)
    manifest.inputs.append(str(args.model))
    if args.cell:
        sites = [s for s in sites if s.cell_id in set(args.cell)]
        if not sites:
            raise ConfigError("none of the --cell ids are in the sites file")
    if args.points:
        manifest.inputs.append(str(args.points))
        with open(args.points, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"x", "y", "cell_id"} - set(reader.fieldnames or [])
            if missing:
                raise SchemaError(f"{args.points}: missing column(s) {', '.join(sorted(missing))}")
            points = [(float(r["x"]), float(r["y"]), r["cell_id"]) for r in reader]
        with manifest.timed("predict"):
            rss = predict(model, point_features(geo, sites, points))
        with open(args.out_csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "cell_id", "rss_dbm"])
            for (x, y, c), v in zip(points, rss):
                w.writerow([repr(x), repr(y), c, repr(float(v))])
        manifest.outputs.append(str(args.out_csv))
        return args.out_csv

    # coverage map: best server per bin centre, on the same absolute lattice as the trace binning
    xll, yll, xur, yur = geo.dtm.extent
    bw = args.bin_width
    if not bw > 0:
        raise ConfigError("--bin-width must be positive")
    ix0, iy0 = int(np.ceil(xll / bw - 1e-9)), int(np.ceil(yll / bw - 1e-9))
    nx = int(np.floor(xur / bw + 1e-9)) - ix0
    ny = int(np.floor(yur / bw + 1e-9)) - iy0
    if nx < 1 or ny < 1:
        raise ConfigError("bin width exceeds the raster extent")
    best = np.full((ny, nx), -np.inf)
    server = np.empty((ny, nx), dtype=object)
    masts = {(s.x, s.y) for s in sites}
    with manifest.timed("predict"):
        for site in sites:
            pts, where = [], []
            for iy in range(ny):
                for ix in range(nx):
                    x, y = (ix0 + ix + 0.5) * bw, (iy0 + iy + 0.5) * bw
                    if (x, y) in masts:
                        continue
                    pts.append((x, y, site.cell_id))
                    where.append((iy, ix))
            rss = predict(model, point_features(geo, sites, pts))
            for (iy, ix), v in zip(where, rss):
                if v > best[iy, ix]:
                    best[iy, ix] = v
                    server[iy, ix] = site.cell_id
    with open(args.out_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_ix", "bin_iy", "x", "y", "cell_id", "rss_dbm"])
        for iy in range(ny):
            for ix in range(nx):
                v = best[iy, ix]
                w.writerow([ix0 + ix, iy0 + iy, repr((ix0 + ix + 0.5) * bw), repr((iy0 + iy + 0.5) * bw),
                            server[iy, ix] or "", repr(float(v)) if np.isfinite(v) else ""])
    manifest.outputs.append(str(args.out_csv))
    if args.out_pgm:
        # north at the top of the image
        img = np.where(np.isfinite(best), best, args.pgm_min)[::-1]
        _write_pgm(img, args.out_pgm, args.pgm_min, args.pgm_max)
        manifest.outputs.append(str(args.out_pgm))
    return args.out_csv


def _read_points(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = set(reader.fieldnames or [])
        missing = {"x", "y", "cell_id"} - fields
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(sorted(missing))}")
        itu_cols = [c for c in ("L_a", "L_b", "L_c", "L_d", "theta", "A_bs", "A_ue") if c in fields]
        points = []
        for r in reader:
            p = (float(r["x"]), float(r["y"]), r["cell_id"])
            if itu_cols:
                p = p + ({c: float(r[c]) for c in itu_cols if r[c] != ""},)
            points.append(p)
    return points


def cmd_empirical(args, manifest):
    geo, sites = _load_inputs(args, manifest)
    cfg = load_params(args.params) if args.params else EmpiricalConfig()
    if args.params:
        manifest.inputs.append(str(args.params))
    points = _read_points(args.points)
    manifest.inputs.append(str(args.points))
    with manifest.timed("predict"):
        rss = empirical_predict(args.model_name, geo, sites, points, cfg)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "cell_id", "rss_dbm"])
        for p, v in zip(points, rss):
            w.writerow([repr(p[0]), repr(p[1]), p[2], repr(float(v))])
    manifest.outputs.append(str(args.out))
    return args.out


def cmd_compare(args, manifest):
    geo, sites = _load_inputs(args, manifest)
    manifest.inputs.append(str(args.traces))
    cfg = _gbdt_config(args)
    emp = load_params(args.params) if args.params else EmpiricalConfig()
    models = ["cost-hata", "sui", "spm"] + (["itu452"] if emp.itu452 else [])
    with manifest.timed("features"):
        m = _features_from_traces(geo, sites, args.traces, args.bin_width)
    with manifest.timed("compare"):
        rows = compare_models(geo, sites, m, bin_width=args.bin_width, cfg=cfg, k=args.folds,
                              repeats=args.repeats, seed=args.seed, empirical=emp, models=models)
    write_comparison(rows, args.report)
    manifest.outputs.append(str(args.report))
    gbdt = rows[0]
    best = best_empirical(rows)
    print(f"gbdt rmse {gbdt.rmse:.3f} dB; best empirical {best.model} ({best.protocol}) {best.rmse:.3f} dB")
    return args.report


def cmd_explain(args, manifest):
    model = load_model(args.model)
    m = read_features_csv(args.features)
    manifest.inputs += [str(args.model), str(args.features)]
    if m.names != model.feature_names:
        raise SchemaError("feature columns differ from the model's feature names")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with manifest.timed("shap"):
        s = tree_shap(model, m)
    summary = shap_summary(s)
    feature = args.feature or summary.top(1)[0]
    interaction = args.interaction or summary.top(2)[-1]
    write_shap_csv(s, m.keys, out / "shap.csv")
    write_summary_csv(summary, out / "shap_summary.csv")
    write_dependence_csv(dependence_export(s, m, feature, interaction), out / "dependence.csv")
    manifest.outputs += [str(out / n) for n in ("shap.csv", "shap_summary.csv", "dependence.csv")]
    if args.top_k:
        with manifest.timed("lighter"):
            rep = lighter_model_report(m, model.config, args.top_k, args.seed, cv_k=args.folds,
                                       shap_rows=args.shap_rows)
        with open(out / "lighter_model.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "features", "mean_rmse", "mean_r2", "train_s", "predict_s"])
            for name, cv, feats in (("full", rep.full, m.names), ("top", rep.top, rep.selected)):
                w.writerow([name, " ".join(feats), repr(cv.mean_rmse), repr(cv.mean_r2),
                            f"{cv.mean_train_s:.6f}", f"{cv.mean_predict_s:.6f}"])
            deltas = rep.deltas()
            w.writerow(["delta", "", repr(deltas["rmse"]), repr(deltas["r2"]), repr(deltas["train_s"]),
                        repr(deltas["predict_s"])])
        manifest.outputs.append(str(out / "lighter_model.csv"))
    return out


def cmd_bench(args, manifest):
    m = read_features_csv(args.features)
    manifest.inputs.append(str(args.features))
    cfg = GbdtConfig()
    if args.config:
        manifest.inputs.append(str(args.config))
        with open(args.config) as fh:
            cfg = GbdtConfig.from_dict(json.load(fh))
    cfg = replace(cfg, seed=args.seed)
    rows = []
    learners = {
        "gbdt": gbdt_learner(cfg),
        "linear": lambda t: (lambda b: lambda X: predict_baseline(b, X))(fit_baseline(t, "linear")),
        "knn": lambda t: (lambda b: lambda X: predict_baseline(b, X))(fit_baseline(t, "knn")),
    }
    for name, learner in learners.items():
        with manifest.timed(name):
            rep = repeated_kfold_cv(m, cfg, args.folds, 1, args.seed, learner=learner)
        n_test = sum(f.n for f in rep.folds) / len(rep.folds)
        rows.append([name, len(m), rep.mean_train_s, rep.mean_predict_s, rep.mean_predict_s / n_test * 1e6,
                     rep.mean_rmse])
    with open(args.report, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "rows", "train_s", "predict_s", "predict_us_per_row", "mean_rmse"])
        for r in rows:
            w.writerow([r[0], r[1], f"{r[2]:.6f}", f"{r[3]:.6f}", f"{r[4]:.3f}", repr(r[5])])
    manifest.outputs.append(str(args.report))
    return args.report


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="propml", description="ML pathloss prediction toolkit")
    parser.add_argument("--version", action="version", version=f"propml {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic city, sites and UE traces")
    d = ScenarioConfig()
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--area", type=float, default=d.area)
    p.add_argument("--cellsize", type=float, default=d.cellsize)
    p.add_argument("--sites", type=int, default=d.n_sites, help="number of 3-sector masts")
    p.add_argument("--ue-density", type=float, default=d.ue_density, help="UEs per km^2")
    p.add_argument("--clutters", type=int, default=d.clutter_count)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("features", help="bin traces and write the feature CSV")
    p.add_argument("--geo", required=True)
    p.add_argument("--sites", required=True)
    p.add_argument("--traces", required=True)
    p.add_argument("--bin-width", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="fit a GBDT model")
    p.add_argument("--features", required=True)
    _add_gbdt_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--out-model", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="hyperparameter search")
    p.add_argument("--features", required=True)
    p.add_argument("--strategy", choices=STRATEGIES + ("all",), default="tpe")
    p.add_argument("--budget", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--min-samples-leaf", type=int, default=GbdtConfig().min_samples_leaf)
    p.add_argument("--max-rows", type=int, default=0, help="tune on a seeded subsample of this many rows")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("predict", help="point predictions or a coverage map")
    p.add_argument("--model", required=True)
    p.add_argument("--geo", required=True)
    p.add_argument("--sites", required=True)
    where = p.add_mutually_exclusive_group(required=True)
    where.add_argument("--points", help="CSV with x,y,cell_id")
    where.add_argument("--grid", action="store_true", help="best-server map over the bin lattice")
    p.add_argument("--cell", action="append", help="restrict to these cell ids (repeatable)")
    p.add_argument("--bin-width", type=float, default=10.0)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-pgm")
    p.add_argument("--pgm-min", type=float, default=-120.0)
    p.add_argument("--pgm-max", type=float, default=-40.0)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("empirical", help="empirical-model predictions")
    p.add_argument("--model-name", choices=MODELS, required=True)
    p.add_argument("--params")
    p.add_argument("--geo", required=True)
    p.add_argument("--sites", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_empirical)

    p = sub.add_parser("compare", help="GBDT vs empirical models on binned traces")
    p.add_argument("--geo", required=True)
    p.add_argument("--sites", required=True)
    p.add_argument("--traces", required=True)
    p.add_argument("--params")
    p.add_argument("--bin-width", type=float, default=10.0)
    _add_gbdt_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("explain", help="SHAP exports and the top-k lighter model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--top-k", type=int, default=5, help="0 skips the lighter-model study")
    p.add_argument("--feature", help="dependence export feature (default: top ranked)")
    p.add_argument("--interaction", help="dependence colour feature (default: second ranked)")
    p.add_argument("--shap-rows", type=int, default=1000)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("bench", help="training/prediction timing table")
    p.add_argument("--features", required=True)
    p.add_argument("--config", help="JSON GBDT config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    manifest = Manifest(args.command, args)
    try:
        primary = args.func(args, manifest)
        manifest.write(primary)
    except (PropmlError, OSError, ValueError) as exc:
        print(f"propml {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
