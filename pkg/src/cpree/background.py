"""Background chain paths, agreement coupling, and initial laws.

The background at each site is the 2-state chain with flip-to-1 rate
gamma*p and flip-to-0 rate gamma*(1-p), realized from the marked flip
stream: every flip event jumps the state to 1 if its mark < p and to 0
otherwise, regardless of where the chain sat before. Two consequences
used throughout:

  * paths started from different states agree forever after the first
    flip event, which is how the agreement field is computed, and
  * raising p only upgrades flip targets, giving the pathwise monotone
    coupling in p.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels, _rng
from .events import EventKind

_LAW_CODES = {"zeros": 0, "ones": 1, "product": 2, "explicit": 3}


@dataclass
class Configuration:
    """A (background, infected) pair of bit arrays over a box."""

    background: np.ndarray
    infected: np.ndarray

    def __post_init__(self):
        self.background = np.ascontiguousarray(self.background, np.uint8)
        self.infected = np.ascontiguousarray(self.infected, np.uint8)
        if self.background.shape != self.infected.shape:
            raise ValueError("background and infected arrays must align")

    def copy(self):
        return Configuration(self.background.copy(), self.infected.copy())

    def leq(self, other):
        """Coordinatewise partial order on the pair."""
        return bool(np.all(self.background <= other.background)
                    and np.all(self.infected <= other.infected))

    def infected_sites(self, box, d):
        return [box.site(i, d) for i in np.nonzero(self.infected)[0]]


@dataclass(frozen=True)
class InitLaw:
    """Initial law: a background law plus an explicit infected set.

    background is one of "zeros", "ones", a density q in [0, 1] (product
    measure), or an explicit bit array. infected is a tuple of sites.
    """

    background: object = "zeros"
    infected: tuple = ()

    def law_code(self):
        bg = self.background
        if isinstance(bg, str):
            if bg not in ("zeros", "ones"):
                raise ValueError(f"unknown background law {bg!r}")
            return _LAW_CODES[bg], 0.0, None
        if isinstance(bg, (int, float)) and not isinstance(bg, bool):
            q = float(bg)
            if not (0.0 <= q <= 1.0):
                raise ValueError("product density must lie in [0, 1]")
            return _LAW_CODES["product"], q, None
        arr = np.ascontiguousarray(bg, np.uint8)
        return _LAW_CODES["explicit"], 0.0, arr


def infected_array(box, d, sites):
    eta = np.zeros(box.n_sites(d), np.uint8)
    for site in sites:
        eta[box.index(site, d)] = 1
    return eta


def all_sites(box, d):
    return tuple(box.site(i, d) for i in range(box.n_sites(d)))


def sample_initial(law, box, d, seed):
    """Draw a Configuration; background per the law, infected exactly A."""
    n = box.n_sites(d)
    code, q, arr = law.law_code()
    if code == 0:
        beta = np.zeros(n, np.uint8)
    elif code == 1:
        beta = np.ones(n, np.uint8)
    elif code == 3:
        if arr.shape[0] != n:
            raise ValueError("explicit background has wrong length for box")
        beta = arr.copy()
    else:
        u = _rng.uniforms(seed, _kernels.INIT_BG_TAG, n)
        beta = (u < q).astype(np.uint8)
    eta = infected_array(box, d, law.infected)
    return Configuration(beta, eta)


def background_transition_prob(gamma, p, t, from_bit, to_bit):
    """Exact transient probability of the 2-state background chain."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    decay = np.exp(-gamma * t)
    p1 = p + (1.0 - p) * decay if from_bit else p * (1.0 - decay)
    return p1 if to_bit else 1.0 - p1


@dataclass
class BitPath:
    """Piecewise-constant 0/1 path as jump times + post-jump values."""

    start_time: float
    horizon: float
    initial: int
    times: np.ndarray
    values: np.ndarray

    def value_at(self, t):
        if not (self.start_time <= t <= self.horizon):
            raise ValueError(f"t={t} outside [{self.start_time}, {self.horizon}]")
        i = int(np.searchsorted(self.times, t, side="right"))
        return self.initial if i == 0 else int(self.values[i - 1])


def background_path(log, site, initial_bit, from_time=0.0):
    """Path of one site's background started at initial_bit at from_time.

    Only flip events strictly after from_time are consulted, so the path
    is measurable with respect to the post-from_time randomness.
    """
    if not (0.0 <= from_time <= log.horizon):
        raise ValueError("from_time outside window")
    si = log.box.index(site, log.params.d)
    sel = (log.sites == si) & (log.kinds == int(EventKind.BG_FLIP)) & (log.times > from_time)
    flips = log.times[sel]
    targets = (log.marks[sel] < log.params.p).astype(np.uint8)
    cur = int(initial_bit)
    jt, jv = [], []
    for t, tgt in zip(flips, targets):
        if tgt != cur:
            jt.append(t)
            jv.append(int(tgt))
            cur = int(tgt)
    return BitPath(start_time=float(from_time), horizon=log.horizon,
                   initial=int(initial_bit), times=np.array(jt), values=np.array(jv, np.uint8))


def phi_field(log, t):
    """Agreement indicator of the all-zeros and all-ones background paths.

    Both chains jump to the same target at the first flip event, so
    phi_t(x) = 1 exactly when site x has a flip event in (0, t]; agreement
    is absorbing.
    """
    if not (0.0 <= t <= log.horizon):
        raise ValueError("t outside window")
    return (log.first_bg_times() <= t).astype(np.uint8)
