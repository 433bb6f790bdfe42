import itertools

import numpy as np
import pytest

from cpree import Params
from cpree import oracle

P = Params(d=1, gamma=1.0, delta0=2.0, delta1=0.5, p=0.3)


class TestGenerator:
    def test_single_site_rates(self):
        gen = oracle.build_generator(P, 1)
        # states: index = b + 2c
        s00, s10, s01, s11 = 0, 1, 2, 3  # (b,c): 00, 10, 01, 11
        assert gen.rate(s01, s00) == pytest.approx(P.delta0)
        assert gen.rate(s11, s10) == pytest.approx(P.delta1)
        assert gen.rate(s00, s10) == pytest.approx(P.gamma * P.p)
        assert gen.rate(s10, s00) == pytest.approx(P.gamma * (1 - P.p))
        assert gen.rate(s00, s01) == 0.0  # no infected neighbors on 1 site

    def test_rows_sum_to_zero(self):
        for n in (1, 2, 3):
            gen = oracle.build_generator(P, n)
            assert np.allclose(gen.Q.sum(axis=1), 0.0, atol=1e-12)
            off = gen.Q - np.diag(np.diag(gen.Q))
            assert np.all(off >= 0)

    def test_two_site_infection_rate(self):
        gen = oracle.build_generator(P, 2)
        frm = oracle.state_index([0, 0], [0, 1])  # site 1 infected
        to = oracle.state_index([0, 0], [1, 1])
        assert gen.rate(frm, to) == pytest.approx(1.0)

    def test_periodic_two_cycle_doubles(self):
        gen = oracle.build_generator(P, 2, "periodic")
        frm = oracle.state_index([0, 0], [0, 1])
        to = oracle.state_index([0, 0], [1, 1])
        assert gen.rate(frm, to) == pytest.approx(2.0)

    def test_only_single_site_transitions(self):
        gen = oracle.build_generator(P, 2)
        for a in range(gen.n_states):
            for b in range(gen.n_states):
                if a == b or gen.Q[a, b] == 0:
                    continue
                diff = sum((oracle.pair_bits(a, x) != oracle.pair_bits(b, x))
                           for x in range(2))
                assert diff == 1

    def test_validation(self):
        with pytest.raises(ValueError):
            oracle.build_generator(P, 5)
        with pytest.raises(ValueError):
            oracle.build_generator(Params(d=2, gamma=1, delta0=1, delta1=1, p=0.5), 2)
        with pytest.raises(ValueError):
            oracle.build_generator(P, 2, "wrapped")


class TestTransient:
    def test_t_zero_identity(self):
        gen = oracle.build_generator(P, 2)
        init = oracle.point_distribution(2, [1, 0], [0, 1])
        assert np.array_equal(oracle.transient_distribution(gen, init, 0.0), init)

    def test_single_site_recovery_closed_form(self):
        p1 = Params(d=1, gamma=1.0, delta0=1.0, delta1=1.0, p=0.5)
        gen = oracle.build_generator(p1, 1)
        init = oracle.point_distribution(1, [0], [1])
        got = oracle.exact_event_prob(gen, init, 1.0, oracle.any_infected_indicator(1))
        assert got == pytest.approx(np.exp(-1.0), abs=1e-9)

    def test_background_limit(self):
        gen = oracle.build_generator(P, 1)
        init = oracle.point_distribution(1, [0], [0])
        got = oracle.exact_event_prob(gen, init, 60.0, oracle.background_indicator(1, 0))
        assert got == pytest.approx(0.3, abs=1e-8)

    def test_mass_conserved_and_nonnegative(self):
        gen = oracle.build_generator(P, 3)
        init = oracle.product_background_distribution(3, 0.3, [1])
        dist = oracle.transient_distribution(gen, init, 0.8, tol=1e-12)
        assert dist.min() >= -1e-15
        assert dist.sum() == pytest.approx(1.0, abs=1e-11)

    def test_semigroup(self):
        gen = oracle.build_generator(P, 2)
        init = oracle.point_distribution(2, [0, 1], [1, 0])
        tol = 1e-10
        one = oracle.transient_distribution(gen, init, 0.9, tol)
        two = oracle.transient_distribution(
            gen, oracle.transient_distribution(gen, init, 0.4, tol), 0.5, tol)
        assert np.abs(one - two).max() <= 2 * tol

    def test_against_scipy_expm(self):
        from scipy.linalg import expm

        gen = oracle.build_generator(P, 2)
        init = oracle.product_background_distribution(2, 0.6, [0])
        for t in (0.2, 1.0, 3.5):
            ref = init @ expm(gen.Q * t)
            got = oracle.transient_distribution(gen, init, t, tol=1e-12)
            assert np.abs(ref - got).max() < 1e-9

    def test_validation(self):
        gen = oracle.build_generator(P, 1)
        with pytest.raises(ValueError):
            oracle.transient_distribution(gen, np.ones(4), 1.0)  # not a distribution
        with pytest.raises(ValueError):
            oracle.transient_distribution(gen, oracle.point_distribution(1, [0], [0]),
                                          -1.0)
        with pytest.raises(ValueError):
            oracle.transient_distribution(gen, oracle.point_distribution(1, [0], [0]),
                                          1.0, tol=0.0)


class TestEventProb:
    def test_trivial_predicates(self):
        gen = oracle.build_generator(P, 2)
        init = oracle.point_distribution(2, [0, 0], [1, 0])
        assert oracle.exact_event_prob(gen, init, 0.7, lambda s: True) == \
            pytest.approx(1.0, abs=1e-9)

    def test_empty_start_stays_empty(self):
        gen = oracle.build_generator(P, 2)
        init = oracle.point_distribution(2, [1, 0], [0, 0])
        none_infected = ~oracle.any_infected_indicator(2)
        for t in (0.5, 2.0, 10.0):
            assert oracle.exact_event_prob(gen, init, t, none_infected) == \
                pytest.approx(1.0, abs=1e-9)

    def test_monotone_pair_at_law_level(self):
        gen = oracle.build_generator(P, 2)
        lo = oracle.point_distribution(2, [0, 0], [1, 0])
        hi = oracle.point_distribution(2, [1, 1], [1, 1])
        pred = oracle.any_infected_indicator(2)
        for t in (0.3, 1.0, 2.5):
            p_lo = oracle.exact_event_prob(gen, lo, t, pred)
            p_hi = oracle.exact_event_prob(gen, hi, t, pred)
            assert p_hi >= p_lo - 1e-12


class TestDualityExact:
    @pytest.mark.parametrize("n_sites", [2, 3])
    def test_self_duality_product_p(self, n_sites):
        gen = oracle.build_generator(P, n_sites)
        tol = 1e-10
        sets = [frozenset(s) for r in range(1, n_sites + 1)
                for s in itertools.combinations(range(n_sites), r)]
        for A in sets:
            for B in sets:
                lhs = oracle.exact_event_prob(
                    gen, oracle.product_background_distribution(n_sites, P.p, A),
                    0.6, oracle.infected_meets(n_sites, B), tol)
                rhs = oracle.exact_event_prob(
                    gen, oracle.product_background_distribution(n_sites, P.p, B),
                    0.6, oracle.infected_meets(n_sites, A), tol)
                assert abs(lhs - rhs) <= 2 * tol

    def test_duality_needs_stationary_background(self):
        gen = oracle.build_generator(P, 3)
        lhs = oracle.exact_event_prob(
            gen, oracle.product_background_distribution(3, 0.9, [0, 1]), 0.6,
            oracle.infected_meets(3, [2]))
        rhs = oracle.exact_event_prob(
            gen, oracle.product_background_distribution(3, 0.9, [2]), 0.6,
            oracle.infected_meets(3, [0, 1]))
        assert abs(lhs - rhs) > 1e-5


class TestDeltaEqualReduction:
    def test_infection_marginal_p_invariant(self):
        pe = Params(d=1, gamma=2.0, delta0=1.0, delta1=1.0, p=0.2)
        init_eta = [1, 0, 1]
        m = {}
        for p_val in (0.2, 0.8):
            gen = oracle.build_generator(pe.with_p(p_val), 3)
            init = oracle.product_background_distribution(3, 0.5, [0, 2])
            dist = oracle.transient_distribution(gen, init, 0.9, tol=1e-12)
            m[p_val] = oracle.infection_marginal(gen, dist)
        assert np.abs(m[0.2] - m[0.8]).max() < 1e-10


class TestFixtures:
    def test_csv_roundtrip(self, tmp_path):
        gen = oracle.build_generator(P, 2)
        init = oracle.product_background_distribution(2, P.p, [0])
        prob = oracle.exact_event_prob(gen, init, 0.5, oracle.any_infected_indicator(2))
        path = tmp_path / "fix.csv"
        oracle.write_fixture_csv(path, [
            {"params": P, "n_sites": 2, "t": 0.5, "predicate": "any_infected",
             "probability": prob}])
        import csv

        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        assert float(rows[0]["probability"]) == prob
        assert float(rows[0]["gamma"]) == P.gamma

    def test_empty_rows_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            oracle.write_fixture_csv(tmp_path / "x.csv", [])
