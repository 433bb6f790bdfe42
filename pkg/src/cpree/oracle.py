"""Exact finite-state reference chain for tiny one-dimensional lattices.

Builds the generator straight from the per-site rate table (recovery at
delta0 or delta1 by background state, background flips at gamma*p and
gamma*(1-p), infection at one per infected neighbor) and solves the
transient by uniformization. Every statistical test in the package is
anchored against this module on lattices of up to four sites.

State encoding: site i carries the pair value b_i + 2*c_i (background bit
low, infection bit high) and the state index is sum_i value_i * 4^i, site
0 least significant. Fixtures built on this encoding are portable.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

MAX_SITES = 4
DEFAULT_TOL = 1e-10


def pair_bits(state, site):
    v = (state >> (2 * site)) & 3
    return v & 1, v >> 1


def set_pair(state, site, b, c):
    v = b + 2 * c
    return (state & ~(3 << (2 * site))) | (v << (2 * site))


def state_index(background_bits, infected_bits):
    state = 0
    for i, (b, c) in enumerate(zip(background_bits, infected_bits)):
        state |= (int(b) + 2 * int(c)) << (2 * i)
    return state


@dataclass
class GeneratorMatrix:
    n_sites: int
    boundary: str
    params: object
    Q: np.ndarray

    @property
    def n_states(self):
        return self.Q.shape[0]

    def rate(self, state_from, state_to):
        return float(self.Q[state_from, state_to])


def build_generator(params, n_sites, boundary="closed"):
    """Exact generator on n_sites (d=1 only, at most 4 sites)."""
    if params.d != 1:
        raise ValueError("the exact reference chain is built for d=1 only")
    if not (1 <= n_sites <= MAX_SITES):
        raise ValueError(f"n_sites must be in 1..{MAX_SITES}")
    if boundary not in ("closed", "periodic"):
        raise ValueError("boundary must be 'closed' or 'periodic'")
    S = 4 ** n_sites
    Q = np.zeros((S, S))
    gp = params.gamma * params.p
    gq = params.gamma * (1.0 - params.p)
    for state in range(S):
        for x in range(n_sites):
            b, c = pair_bits(state, x)
            # background flip
            rate = gp if b == 0 else gq
            Q[state, set_pair(state, x, 1 - b, c)] += rate
            if c == 1:
                Q[state, set_pair(state, x, b, 0)] += params.delta1 if b == 1 else params.delta0
            else:
                # infection at one per infected neighbor (directional, so a
                # periodic 2-cycle counts its single neighbor twice)
                lam = 0.0
                for step in (1, -1):
                    y = x + step
                    if boundary == "periodic":
                        y %= n_sites
                    elif not (0 <= y < n_sites):
                        continue
                    lam += pair_bits(state, y)[1]
                if lam > 0:
                    Q[state, set_pair(state, x, b, 1)] += lam
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return GeneratorMatrix(n_sites=n_sites, boundary=boundary, params=params, Q=Q)


def transient_distribution(gen, initial, t, tol=DEFAULT_TOL):
    """Distribution at time t by uniformization; neglected mass < tol."""
    initial = np.asarray(initial, float)
    if initial.shape != (gen.n_states,):
        raise ValueError("initial distribution has wrong length")
    if np.any(initial < -1e-12) or abs(initial.sum() - 1.0) > 1e-9:
        raise ValueError("initial must be a probability distribution")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    lam = float(np.max(-np.diag(gen.Q)))
    if lam == 0.0 or t == 0.0:
        return initial.copy()
    P = np.eye(gen.n_states) + gen.Q / lam
    m = lam * t
    logm = math.log(m)
    v = initial.copy()
    out = np.zeros_like(v)
    cum = 0.0
    k = 0
    k_max = int(m + 12.0 * math.sqrt(m) + 60.0)
    while cum < 1.0 - tol and k <= k_max:
        w = math.exp(k * logm - m - math.lgamma(k + 1))
        out += w * v
        cum += w
        v = v @ P
        k += 1
    return out


def exact_event_prob(gen, initial, t, predicate, tol=DEFAULT_TOL):
    """Probability mass at time t on states satisfying the predicate.

    predicate: boolean vector over states, or a callable on state indices.
    """
    dist = transient_distribution(gen, initial, t, tol)
    if callable(predicate):
        ind = np.fromiter((bool(predicate(s)) for s in range(gen.n_states)),
                          bool, gen.n_states)
    else:
        ind = np.asarray(predicate, bool)
    return float(dist[ind].sum())


# -- predicate and initial-distribution helpers --------------------------------

def infected_indicator(n_sites, site):
    S = 4 ** n_sites
    return np.array([pair_bits(s, site)[1] == 1 for s in range(S)])


def any_infected_indicator(n_sites):
    S = 4 ** n_sites
    return np.array([any(pair_bits(s, x)[1] == 1 for x in range(n_sites))
                     for s in range(S)])


def infected_meets(n_sites, sites):
    S = 4 ** n_sites
    sites = list(sites)
    return np.array([any(pair_bits(s, x)[1] == 1 for x in sites) for s in range(S)])


def background_indicator(n_sites, site):
    S = 4 ** n_sites
    return np.array([pair_bits(s, site)[0] == 1 for s in range(S)])


def point_distribution(n_sites, background_bits, infected_bits):
    dist = np.zeros(4 ** n_sites)
    dist[state_index(background_bits, infected_bits)] = 1.0
    return dist


def product_background_distribution(n_sites, q, infected_sites):
    """Background i.i.d. Bernoulli(q), infected set exactly as given."""
    eta = [1 if x in set(infected_sites) else 0 for x in range(n_sites)]
    dist = np.zeros(4 ** n_sites)
    for pattern in range(2 ** n_sites):
        bits = [(pattern >> i) & 1 for i in range(n_sites)]
        w = 1.0
        for b in bits:
            w *= q if b else 1.0 - q
        dist[state_index(bits, eta)] = w
    return dist


def infection_marginal(gen, dist):
    """Marginal law of the infection coordinate (sums out the background)."""
    out = np.zeros(2 ** gen.n_sites)
    for s in range(gen.n_states):
        key = 0
        for x in range(gen.n_sites):
            key |= pair_bits(s, x)[1] << x
        out[key] += dist[s]
    return out


def write_fixture_csv(path, rows):
    """Emit (params, n_sites, t, predicate-id, probability) fixture rows."""
    if not rows:
        raise ValueError("no fixture rows to write")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["d", "gamma", "delta0", "delta1", "p", "n_sites", "t",
                    "predicate", "probability"])
        for r in rows:
            params = r["params"]
            w.writerow([params.d, f"{params.gamma:.17g}", f"{params.delta0:.17g}",
                        f"{params.delta1:.17g}", f"{params.p:.17g}", r["n_sites"],
                        f"{r['t']:.17g}", r["predicate"], f"{r['probability']:.17g}"])
