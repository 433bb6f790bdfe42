"""Compare Monte Carlo estimators against the exact chain on a 3-site box.

    python scripts/oracle_check.py [--replicates N] [--seed S]
"""

import argparse

from cpree import Box, InitLaw, Params, estimators, oracle
from cpree._rng import derive_seed
from cpree.background import all_sites


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--replicates", type=int, default=50_000)
    ap.add_argument("--seed", type=int, default=101)
    ap.add_argument("--workers", type=int, default=2)
    args = ap.parse_args()

    p = Params(d=1, gamma=1.0, delta0=2.0, delta1=0.5, p=0.5)
    box = Box(1)
    gen = oracle.build_generator(p, 3)
    all_ones = oracle.point_distribution(3, [1, 1, 1], [1, 1, 1])

    rows = []
    est = estimators.estimate_upper_density(p, 0.5, box, args.replicates,
                                            derive_seed(args.seed, 0), args.workers)
    exact = oracle.exact_event_prob(gen, all_ones, 0.5, oracle.infected_indicator(3, 1))
    rows.append(("P[origin infected at 0.5]", est, exact))

    est = estimators.estimate_survival(p, InitLaw("ones", all_sites(box, 1)), box,
                                       1.0, args.replicates,
                                       derive_seed(args.seed, 1), args.workers)
    exact = oracle.exact_event_prob(gen, all_ones, 1.0, oracle.any_infected_indicator(3))
    rows.append(("P[nonempty at 1]", est, exact))

    _, s1, s2 = estimators.estimate_duality_residual(
        p, [(0,)], [(-1,), (0,), (1,)], 0.5, box, args.replicates,
        derive_seed(args.seed, 2), args.workers, return_sides=True)
    ex1 = oracle.exact_event_prob(
        gen, oracle.product_background_distribution(3, p.p, [1]), 0.5,
        oracle.infected_meets(3, [0, 1, 2]))
    ex2 = oracle.exact_event_prob(
        gen, oracle.product_background_distribution(3, p.p, [0, 1, 2]), 0.5,
        oracle.infected_meets(3, [1]))
    rows.append(("duality side A->B", s1, ex1))
    rows.append(("duality side B->A", s2, ex2))

    print(f"{'quantity':<28} {'estimate':>10} {'exact':>10} {'|diff|':>9} {'3*hw':>9}")
    for name, est, exact in rows:
        diff = abs(est.value - exact)
        flag = "ok" if diff <= 3 * est.half_width() else "OFF"
        print(f"{name:<28} {est.value:>10.5f} {exact:>10.5f} {diff:>9.2e} "
              f"{3 * est.half_width():>9.2e}  {flag}")


if __name__ == "__main__":
    main()
