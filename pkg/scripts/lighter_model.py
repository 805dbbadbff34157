"""SHAP ranking of the full model and CV of the top-k feature model."""
from _common import base_parser, task

from propml.explain import lighter_model_report
from propml.gbdt import GbdtConfig


def main():
    p = base_parser(__doc__)
    p.add_argument("--top-k", type=int, default=5)
    args = p.parse_args()
    _, m = task(args)
    rep = lighter_model_report(m, GbdtConfig(), k=args.top_k, seed=args.seed)
    for rank, j in enumerate(rep.summary.ranking[:10], start=1):
        print(f"{rank:2d} {rep.summary.feature_names[j]:12s} {rep.summary.mean_abs[j]:.3f} dB")
    print(f"full: rmse {rep.full.mean_rmse:.3f} dB, train {rep.full.mean_train_s:.3f} s")
    print(f"top-{args.top_k}: rmse {rep.top.mean_rmse:.3f} dB, train {rep.top.mean_train_s:.3f} s")
    print("relative change: " + ", ".join(f"{k} {100 * v:+.1f}%" for k, v in rep.deltas().items()))


if __name__ == "__main__":
    main()
