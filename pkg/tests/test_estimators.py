import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpree import (Box, InitLaw, Params, check_orthant_inequalities,
                   estimate_duality_residual, estimate_fstc, estimate_survival,
                   estimate_truncated_occupancy, estimate_upper_density,
                   estimate_upper_density_curve, scan_critical, wilson_interval)
from cpree import estimators, oracle
from cpree import _kernels
from cpree._rng import derive_seed
from cpree.background import all_sites, infected_array

P = Params(d=1, gamma=1.0, delta0=2.0, delta1=0.5, p=0.5)
REPS = 4000


class TestWilson:
    @given(st.integers(1, 10_000), st.data())
    @settings(max_examples=120, deadline=None)
    def test_bounds(self, n, data):
        k = data.draw(st.integers(0, n))
        lo, hi = wilson_interval(k, n)
        assert 0.0 <= lo <= k / n <= hi <= 1.0

    def test_zero_and_full(self):
        lo, hi = wilson_interval(0, 100)
        assert lo == 0.0 and hi > 0.0
        lo, hi = wilson_interval(100, 100)
        assert hi == 1.0 and lo < 1.0

    def test_needs_replicates(self):
        with pytest.raises(ValueError):
            wilson_interval(0, 0)


class TestSurvival:
    def test_empty_start_exact_zero(self):
        est = estimate_survival(P, InitLaw("zeros", ()), Box(1), 1.0, 500, 3)
        assert est.value == 0.0

    def test_single_site_closed_form(self):
        p1 = Params(d=1, gamma=1.0, delta0=1.0, delta1=1.0, p=0.5)
        est = estimate_survival(p1, InitLaw("zeros", ((0,),)), Box(0), 1.0, REPS, 11)
        assert abs(est.value - np.exp(-1.0)) <= 3 * est.half_width()

    def test_matches_oracle(self):
        gen = oracle.build_generator(P, 3)
        init = oracle.point_distribution(3, [1, 1, 1], [1, 1, 1])
        exact = oracle.exact_event_prob(gen, init, 1.0, oracle.any_infected_indicator(3))
        est = estimate_survival(P, InitLaw("ones", all_sites(Box(1), 1)), Box(1),
                                1.0, REPS, 13)
        assert abs(est.value - exact) <= 3 * est.half_width()

    def test_reproducible(self):
        a = estimate_survival(P, InitLaw("zeros", ((0,),)), Box(2), 2.0, 300, 7)
        b = estimate_survival(P, InitLaw("zeros", ((0,),)), Box(2), 2.0, 300, 7)
        assert a == b

    def test_worker_invariance(self):
        kw = dict(params=P, init=InitLaw("zeros", ((0,),)), box=Box(2), horizon=2.0,
                  replicates=600, master_seed=7)
        assert estimate_survival(**kw, workers=1) == estimate_survival(**kw, workers=3)

    def test_validation(self):
        with pytest.raises(ValueError):
            estimate_survival(P, InitLaw("zeros", ((0,),)), Box(1), 1.0, 0, 1)
        with pytest.raises(ValueError):
            estimate_survival(P, InitLaw("zeros", ((0,),)), Box(1), 0.0, 10, 1)


class TestDuality:
    def test_equal_sets_exact_zero(self):
        resid, s1, s2 = estimate_duality_residual(P, [(0,)], [(0,)], 0.5, Box(1),
                                                  500, 5, return_sides=True)
        assert resid.value == 0.0 and resid.ci_low == 0.0 and resid.ci_high == 0.0
        assert s1 == s2

    def test_reflection_symmetric_pair(self):
        resid = estimate_duality_residual(P, [(-1,)], [(1,)], 0.5, Box(1),
                                          REPS, 23)
        se = resid.half_width() / estimators.Z95
        assert abs(resid.value) <= 3 * se

    def test_sides_match_oracle(self):
        A, B = [(0,)], [(-1,), (0,), (1,)]
        resid, s1, s2 = estimate_duality_residual(P, A, B, 0.5, Box(1), REPS, 29,
                                                  return_sides=True)
        gen = oracle.build_generator(P, 3)
        ex1 = oracle.exact_event_prob(
            gen, oracle.product_background_distribution(3, P.p, [1]), 0.5,
            oracle.infected_meets(3, [0, 1, 2]))
        ex2 = oracle.exact_event_prob(
            gen, oracle.product_background_distribution(3, P.p, [0, 1, 2]), 0.5,
            oracle.infected_meets(3, [1]))
        assert abs(s1.value - ex1) <= 3 * s1.half_width()
        assert abs(s2.value - ex2) <= 3 * s2.half_width()
        assert abs(resid.value) <= 3 * resid.half_width() / estimators.Z95

    def test_requires_stationary_background(self):
        with pytest.raises(ValueError):
            estimate_duality_residual(P, [(0,)], [(1,)], 0.5, Box(1), 100, 1,
                                      background=0.9)

    def test_empty_sets_rejected(self):
        with pytest.raises(ValueError):
            estimate_duality_residual(P, [], [(0,)], 0.5, Box(1), 100, 1)


class TestUpperDensity:
    def test_t_zero_is_one(self):
        est = estimate_upper_density(P, 0.0, Box(1), 100, 1)
        assert est.value == 1.0

    def test_huge_deltas_die_fast(self):
        ph = Params(d=1, gamma=1.0, delta0=50.0, delta1=50.0, p=0.5)
        est = estimate_upper_density(ph, 1.0, Box(2), 2000, 31)
        assert est.value < 0.05

    def test_matches_oracle(self):
        gen = oracle.build_generator(P, 3)
        init = oracle.point_distribution(3, [1, 1, 1], [1, 1, 1])
        exact = oracle.exact_event_prob(gen, init, 0.5, oracle.infected_indicator(3, 1))
        est = estimate_upper_density(P, 0.5, Box(1), REPS, 37)
        assert abs(est.value - exact) <= 3 * est.half_width()

    def test_curve_monotone_in_law(self):
        curve = estimate_upper_density_curve(P, [0.25, 0.5, 1.0, 2.0], Box(3),
                                             REPS, 41)
        vals = [e.value for _, e in curve]
        ses = [e.half_width() for _, e in curve]
        for i in range(len(vals) - 1):
            assert vals[i + 1] <= vals[i] + 3 * (ses[i] + ses[i + 1])


class TestScan:
    def test_delta_equal_flat_and_flagged(self):
        pe = Params(d=1, gamma=1.0, delta0=1.0, delta1=1.0, p=0.5)
        res = scan_critical(pe, [0.1, 0.5, 0.9], InitLaw("zeros", ((0,),)), Box(4),
                            3.0, 800, 0.5, 43)
        assert res.p_invariant
        assert res.pseudo_critical is None
        vals = {e.value for e in res.estimates}
        assert len(vals) == 1

    def test_curve_exactly_monotone(self):
        res = scan_critical(P, list(np.linspace(0, 1, 6)), InitLaw("zeros", ((0,),)),
                            Box(6), 6.0, 800, 0.5, 47)
        vals = [e.value for e in res.estimates]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_binary_search_equals_direct_grid_evaluation(self):
        # the grid counts from the coupled scan must equal independent per-p
        # survival runs on the same replicate substreams
        grid = [0.15, 0.4, 0.65, 0.9]
        box, horizon, reps, master = Box(4), 4.0, 400, 53
        init = InitLaw("zeros", ((0,),))
        res = scan_critical(P, grid, init, box, horizon, reps, 0.5, master)
        coords = box.coords_array(1)
        nbr = box.neighbor_table(1)
        ones = np.ones(box.n_sites(1), np.uint8)
        eta0 = infected_array(box, 1, [(0,)])
        for p_val, est in zip(grid, res.estimates):
            hits = _kernels.chunk_hit(np.uint64(master), 0, reps, coords, nbr, ones,
                                      P.gamma, P.delta1, P.delta0 - P.delta1,
                                      float(p_val), horizon, horizon,
                                      0, 0.0, ones * 0, eta0, ones)
            assert int(hits) == round(est.value * reps)

    def test_crossing_interpolation(self):
        grid = [0.0, 0.5, 1.0]

        class Fake:
            pass

        res = scan_critical(P, grid, InitLaw("zeros", ((0,),)), Box(6), 6.0, 600,
                            0.2, 59)
        if res.pseudo_critical is not None:
            vals = [e.value for e in res.estimates]
            assert vals[0] < 0.2 <= max(vals)
            assert grid[0] < res.pseudo_critical <= grid[-1]

    def test_validation(self):
        with pytest.raises(ValueError):
            scan_critical(P, [], InitLaw("zeros", ((0,),)), Box(2), 1.0, 10, 0.5, 1)
        with pytest.raises(ValueError):
            scan_critical(P, [0.5, 0.4], InitLaw("zeros", ((0,),)), Box(2), 1.0,
                          10, 0.5, 1)
        with pytest.raises(ValueError):
            scan_critical(P, [0.1, 0.9], InitLaw("zeros", ((0,),)), Box(2), 1.0,
                          10, 1.5, 1)


class TestFstc:
    def test_no_time_to_spread(self):
        ph = Params(d=1, gamma=1.0, delta0=40.0, delta1=0.5, p=0.1)
        est = estimate_fstc(ph, 3, 4, 0.01, "fstc1", 400, 61)
        assert est.value < 0.05

    def test_reproducible(self):
        a = estimate_fstc(P, 1, 3, 2.0, "fstc2", 300, 67)
        b = estimate_fstc(P, 1, 3, 2.0, "fstc2", 300, 67)
        assert a == b and 0.0 <= a.value <= 1.0

    def test_monotone_in_l_variant1(self):
        # fstc1 at fixed T: larger L nests the event pathwise (bigger
        # truncation, bigger target window, same evaluation time)
        pe = Params(d=1, gamma=1.0, delta0=1.2, delta1=0.4, p=0.6)
        for r in range(80):
            args = dict(replicates=1, master_seed=derive_seed(71, r))
            small = estimate_fstc(pe, 1, 3, 3.0, "fstc1", **args)
            big = estimate_fstc(pe, 1, 5, 3.0, "fstc1", trunc=6, **args)
            assert small.value <= big.value

    def test_monotone_in_t_variant2(self):
        # fstc2 at fixed (n, L): longer window nests the event pathwise
        pe = Params(d=1, gamma=1.0, delta0=1.2, delta1=0.4, p=0.6)
        for r in range(80):
            args = dict(replicates=1, master_seed=derive_seed(73, r))
            short = estimate_fstc(pe, 1, 3, 2.0, "fstc2", **args)
            long = estimate_fstc(pe, 1, 3, 5.0, "fstc2", **args)
            assert short.value <= long.value

    def test_geometry_validation(self):
        with pytest.raises(ValueError):
            estimate_fstc(P, 4, 3, 1.0, "fstc1", 10, 1)
        with pytest.raises(ValueError):
            estimate_fstc(P, 1, 3, 1.0, "fstc9", 10, 1)


class TestOrthant:
    def test_huge_thresholds_trivial(self):
        rep = check_orthant_inequalities(P, 2, 5, 2.0, 500, 500, 300, 79)
        assert rep.ineq_counts.lhs == 1.0 and rep.ineq_counts.rhs == 1.0
        assert rep.holds()

    def test_degenerate_window_flagged(self):
        rep = check_orthant_inequalities(P, 2, 5, 0.0, 2, 1, 100, 83)
        assert rep.degenerate_window

    def test_holds_at_desk_scale(self):
        rep = check_orthant_inequalities(P, 2, 8, 8.0, 2, 1, 3000, 89)
        assert rep.ineq_counts.holds_within_3sigma
        assert rep.ineq_sides.holds_within_3sigma

    def test_validation(self):
        with pytest.raises(ValueError):
            check_orthant_inequalities(P, 9, 5, 1.0, 1, 1, 10, 1)


class TestTruncatedOccupancyTrend:
    def test_staircase_decreases_to_survival(self):
        # P[|trunc set| >= 1 at t] = P[alive at t] decreases toward survival
        A = [(0,)]
        stair = [(6, 3.0), (8, 6.0), (10, 9.0)]
        ests = [estimate_truncated_occupancy(P, A, L, t, 1, 3000, 97)
                for L, t in stair]
        surv = estimate_survival(P, InitLaw("zeros", tuple(A)), Box(10), 9.0,
                                 3000, 97)
        vals = [e.value for e in ests]
        for i in range(len(vals) - 1):
            assert vals[i + 1] <= vals[i] + 3 * (ests[i].half_width()
                                                 + ests[i + 1].half_width())
        assert vals[-1] >= surv.value - 3 * (ests[-1].half_width() + surv.half_width())


class TestDigestAndCsv:
    def test_digest_stable_and_sensitive(self):
        d1 = estimators.config_digest("x", params=P, box=Box(2), t=0.5)
        d2 = estimators.config_digest("x", params=P, box=Box(2), t=0.5)
        d3 = estimators.config_digest("x", params=P, box=Box(2), t=0.6)
        assert d1 == d2 and d1 != d3

    def test_write_csv(self, tmp_path):
        est = estimate_survival(P, InitLaw("zeros", ((0,),)), Box(1), 1.0, 200, 3)
        row = {"config_digest": est.config_digest, "estimator_name": "survival",
               "d": P.d, "gamma": P.gamma, "delta0": P.delta0, "delta1": P.delta1,
               "p": P.p, "box_L": 1, "horizon": 1.0, "variant": "",
               "value": est.value, "ci_low": est.ci_low, "ci_high": est.ci_high,
               "replicates": est.replicates, "master_seed": est.master_seed}
        path = tmp_path / "est.csv"
        estimators.write_estimates_csv(path, [row])
        text = path.read_text().splitlines()
        assert text[0].startswith("config_digest,estimator_name")
        assert len(text) == 2


class TestLargeBoxSurvivalTrend:
    def test_survival_approaches_one_in_initial_width(self):
        # supercritical parameters: survival from an empty background becomes
        # near-certain as the seeded block grows
        ps = Params(d=1, gamma=2.0, delta0=3.0, delta1=0.3, p=0.9)
        ests = []
        for n in (0, 2, 5):
            init = InitLaw("zeros", tuple((x,) for x in range(-n, n + 1)))
            ests.append(estimate_survival(ps, init, Box(30), 20.0, 2000,
                                          derive_seed(111, n)))
        vals = [e.value for e in ests]
        for lo, hi in zip(ests, ests[1:]):
            assert hi.value >= lo.value - 3 * (lo.half_width() + hi.half_width())
        assert vals[-1] > 0.9


class TestAsymmetricAndPeriodic:
    def test_asymmetric_parameters_match_oracle(self):
        # p != 1/2 and gamma != 1 would expose mark-threshold or rate mixups
        # that symmetric choices mask
        pa = Params(d=1, gamma=3.0, delta0=2.5, delta1=0.4, p=0.2)
        gen = oracle.build_generator(pa, 3)
        all_ones = oracle.point_distribution(3, [1, 1, 1], [1, 1, 1])
        est = estimate_upper_density(pa, 0.7, Box(1), 10_000, 1)
        exact = oracle.exact_event_prob(gen, all_ones, 0.7,
                                        oracle.infected_indicator(3, 1))
        assert abs(est.value - exact) <= 3 * est.half_width()
        _, s1, s2 = estimate_duality_residual(pa, [(0,)], [(-1,), (1,)], 0.6,
                                              Box(1), 10_000, 2, return_sides=True)
        ex1 = oracle.exact_event_prob(
            gen, oracle.product_background_distribution(3, 0.2, [1]), 0.6,
            oracle.infected_meets(3, [0, 2]))
        ex2 = oracle.exact_event_prob(
            gen, oracle.product_background_distribution(3, 0.2, [0, 2]), 0.6,
            oracle.infected_meets(3, [1]))
        assert abs(s1.value - ex1) <= 3 * s1.half_width()
        assert abs(s2.value - ex2) <= 3 * s2.half_width()

    def test_periodic_boundary_matches_oracle(self):
        pp = Params(d=1, gamma=1.0, delta0=2.0, delta1=0.5, p=0.4)
        gen = oracle.build_generator(pp, 3, "periodic")
        est = estimate_survival(pp, InitLaw("zeros", ((0,),)), Box(1, "periodic"),
                                1.2, 10_000, 3)
        init = oracle.point_distribution(3, [0, 0, 0], [0, 1, 0])
        exact = oracle.exact_event_prob(gen, init, 1.2,
                                        oracle.any_infected_indicator(3))
        assert abs(est.value - exact) <= 3 * est.half_width()
