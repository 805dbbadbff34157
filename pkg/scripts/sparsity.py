"""CV RMSE of models trained on shrinking seeded fractions of the binned measurements."""
from _common import base_parser, task

from propml.evaluation import sparsity_eval
from propml.gbdt import GbdtConfig


def main():
    p = base_parser(__doc__)
    p.add_argument("--fractions", default="1.0,0.5,0.2,0.1,0.05,0.02")
    args = p.parse_args()
    _, m = task(args)
    for f in (float(v) for v in args.fractions.split(",")):
        r = sparsity_eval(m, f, GbdtConfig(), seed=args.seed)
        print(f"fraction {f:5.2f}: rmse {r.mean_rmse:.3f} +- {r.std_rmse:.3f} dB, r2 {r.mean_r2:.3f}")


if __name__ == "__main__":
    main()
