"""Block-crossing density vs the one-dependent domination threshold.

    python scripts/block_domination.py [--delta 0.05] [--rows 10]

Prints the JSON domination report for a staircase geometry and a
survival-friendly parameter point; lower --delta to make crossings easy.
"""

import argparse
import json

from cpree import Params, build_block_geometry, domination_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--delta", type=float, default=0.05)
    ap.add_argument("--gamma", type=float, default=1.0)
    ap.add_argument("--p", type=float, default=0.5)
    ap.add_argument("--rows", type=int, default=10)
    ap.add_argument("--replicates", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=31)
    ap.add_argument("--geometry", type=int, nargs=4, default=[1, 2, 6, 6],
                    metavar=("N", "A", "B4", "K"),
                    help="n a 4*b k (b is passed as B4/4 to allow integers)")
    args = ap.parse_args()

    n, a, b4, k = args.geometry
    params = Params(d=1, gamma=args.gamma, delta0=args.delta, delta1=args.delta,
                    p=args.p)
    geom = build_block_geometry(n, a, b4 / 4.0, k)
    rep = domination_report(params, geom, args.rows, args.replicates, args.seed)
    print(json.dumps(rep, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
