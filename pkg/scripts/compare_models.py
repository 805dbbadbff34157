"""GBDT against the empirical models and two baseline learners on one synthetic city."""
from _common import base_parser, task

from propml.compare import best_empirical, compare_models, write_comparison
from propml.gbdt import GbdtConfig


def main():
    p = base_parser(__doc__)
    p.add_argument("--out", default="comparison.csv")
    args = p.parse_args()
    scn, m = task(args)
    rows = compare_models(scn.geo, scn.sites, m, cfg=GbdtConfig(), seed=args.seed)
    write_comparison(rows, args.out)
    for r in rows:
        print(f"{r.model:10s} {r.protocol:9s} rmse {r.rmse:10.3f} dB  r2 {r.r2:8.3f}")
    best = best_empirical(rows)
    print(f"gbdt / best empirical ({best.model}, {best.protocol}): {rows[0].rmse / best.rmse:.3f}")


if __name__ == "__main__":
    main()
