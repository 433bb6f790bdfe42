"""Forward dynamics driven by an event log.

The sweep realizes active-path reachability event by event: recoveries
clear a site (the extra stream only while its background is 0), arrows
copy infection to a neighbor, background flips retarget the recovery
rate. Truncated mode confines infection to sites strictly inside
(-L, L)^d; Richardson mode ignores recoveries entirely.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .background import Configuration
from .events import EventKind


@dataclass
class Trajectory:
    """Piecewise-constant evolution recorded as jump deltas.

    Snapshots at jump times are reconstructed on demand (state_at / states);
    storage is one delta row per actual state change.
    """

    box: object
    d: int
    from_time: float
    horizon: float
    mode: object
    initial: Configuration
    jump_times: np.ndarray
    jump_sites: np.ndarray
    jump_fields: np.ndarray  # 0 background, 1 infection
    jump_values: np.ndarray
    extinction_time: float = None

    @property
    def n_jumps(self):
        return int(self.jump_times.shape[0])

    def state_at(self, t):
        """Configuration at time t (right-continuous)."""
        if not (self.from_time <= t <= self.horizon):
            raise ValueError(f"t={t} outside [{self.from_time}, {self.horizon}]")
        cfg = self.initial.copy()
        k = np.searchsorted(self.jump_times, t, side="right")
        for i in range(k):
            arr = cfg.background if self.jump_fields[i] == 0 else cfg.infected
            arr[self.jump_sites[i]] = self.jump_values[i]
        return cfg

    @property
    def states(self):
        """Snapshots after each jump (small boxes; materializes everything)."""
        out = []
        cfg = self.initial.copy()
        for i in range(self.n_jumps):
            arr = cfg.background if self.jump_fields[i] == 0 else cfg.infected
            arr[self.jump_sites[i]] = self.jump_values[i]
            out.append(cfg.copy())
        return out

    def infected_count_at(self, t):
        return int(self.state_at(t).infected.sum())

    @property
    def survived(self):
        return self.extinction_time is None


def _resolve_mode(log, mode, trunc):
    """Resolve mode into (richardson flag, allowed mask, mode tag)."""
    n = log.n_sites
    if mode == "full":
        return 0, np.ones(n, np.uint8), "full"
    if mode == "richardson":
        return 1, np.ones(n, np.uint8), "richardson"
    if mode == "truncated":
        if trunc is None:
            raise ValueError("truncated mode needs trunc (the half-width L)")
        if trunc > log.box.half_width:
            raise ValueError("truncation width exceeds the box")
        return 0, log.box.interior_mask(log.params.d, trunc), ("truncated", int(trunc))
    raise ValueError(f"unknown mode {mode!r}")


def simulate(log, init, from_time=0.0, mode="full", trunc=None):
    """Run the pair process from `init` at `from_time`; returns a Trajectory."""
    if init.background.shape[0] != log.n_sites:
        raise ValueError("configuration does not match the log's box")
    if from_time >= log.horizon:
        raise ValueError("from_time must precede the horizon")
    richardson, allowed, mode_tag = _resolve_mode(log, mode, trunc)
    beta = init.background.copy()
    eta = init.infected.copy()
    cap = log.n_events
    jt = np.empty(cap, np.float64)
    jsite = np.empty(cap, np.int32)
    jfield = np.empty(cap, np.uint8)
    jval = np.empty(cap, np.uint8)
    cnt, has_ext, ext = _kernels.sweep_record(
        *log.arrays(), float(from_time), log.horizon, log.neighbor_table(),
        log.params.p, richardson, allowed, beta, eta, jt, jsite, jfield, jval)
    if has_ext and math.isnan(ext):
        ext = float(from_time)
    return Trajectory(box=log.box, d=log.params.d, from_time=float(from_time),
                      horizon=log.horizon, mode=mode_tag, initial=init.copy(),
                      jump_times=jt[:cnt].copy(), jump_sites=jsite[:cnt].copy(),
                      jump_fields=jfield[:cnt].copy(), jump_values=jval[:cnt].copy(),
                      extinction_time=float(ext) if has_ext else None)


def coupled_simulate(log, inits, from_time=0.0, mode="full", trunc=None):
    """Trajectories of several initial configurations off the same log.

    Comparable initial pairs stay ordered at every time (attractiveness);
    that is a property of the shared-log construction, asserted in tests,
    not something this function enforces.
    """
    return [simulate(log, init, from_time=from_time, mode=mode, trunc=trunc)
            for init in inits]


def active_path_exists(log, beta0, frm, to):
    """Whether an active path runs from (x, s) to (y, t) given background
    started at beta0 at time s."""
    (x, s), (y, t) = frm, to
    if not (s < t <= log.horizon) or s < 0:
        raise ValueError("need 0 <= s < t <= horizon")
    d = log.params.d
    xi = log.box.index(x, d)
    yi = log.box.index(y, d)
    n = log.n_sites
    beta = np.ascontiguousarray(beta0, np.uint8).copy()
    eta = np.zeros(n, np.uint8)
    eta[xi] = 1
    mask = np.zeros(n, np.uint8)
    mask[yi] = 1
    hit = _kernels.sweep_hit(*log.arrays(), float(s), float(t), log.neighbor_table(),
                             log.params.p, np.ones(n, np.uint8), beta, eta, mask)
    return bool(hit)


@dataclass
class BoundaryStats:
    """Reach statistics on the sides of the space-time box [-L, L]^d x [0, T]."""

    L: int
    T: float
    side_points: dict
    n_count: int
    n_plus_count: int


def side_masks(box, d, L):
    """(all-sides mask |x|_inf = L, plus-side mask x1 = L and x_i >= 0)."""
    n = box.n_sites(d)
    side_any = np.zeros(n, np.uint8)
    side_plus = np.zeros(n, np.uint8)
    for i in range(n):
        site = box.site(i, d)
        if max(abs(c) for c in site) == L:
            side_any[i] = 1
            if site[0] == L and all(c >= 0 for c in site[1:]):
                side_plus[i] = 1
    return side_any, side_plus


def max_separated_count(ts, gap=1.0):
    """Maximum cardinality of a subset with pairwise separation >= gap.

    Greedy earliest-first selection, which is maximal for interval
    constraints on a line.
    """
    last = -np.inf
    cnt = 0
    for t in sorted(ts):
        if t >= last + gap:
            cnt += 1
            last = t
    return cnt


def boundary_stats(log, A, L, T):
    """Reach times and 1-separated counts on the sides of the L-box.

    Reach times are arrow landings on |y|_inf = L from infected interior
    sites of the truncated dynamics under the empty initial background.
    """
    d = log.params.d
    if L > log.box.half_width:
        raise ValueError("L exceeds the simulation box")
    if T > log.horizon:
        raise ValueError("T exceeds the horizon")
    n = log.n_sites
    interior = log.box.interior_mask(d, L)
    for site in A:
        if interior[log.box.index(site, d)] == 0:
            raise ValueError(f"initial site {site} not strictly inside (-L, L)^d")
    side_any, side_plus = side_masks(log.box, d, L)
    beta = np.zeros(n, np.uint8)
    eta = np.zeros(n, np.uint8)
    for site in A:
        eta[log.box.index(site, d)] = 1
    cap = log.n_events
    rec_site = np.empty(cap, np.int32)
    rec_time = np.empty(cap, np.float64)
    nrec, cnt = _kernels.sweep_boundary(*log.arrays(), float(T), log.neighbor_table(),
                                        log.params.p, interior, side_any, beta, eta,
                                        rec_site, rec_time)
    side_points = {}
    for i in range(nrec):
        site = log.box.site(int(rec_site[i]), d)
        side_points.setdefault(site, []).append(float(rec_time[i]))
    n_count = int(cnt[side_any == 1].sum())
    n_plus = int(cnt[side_plus == 1].sum())
    return BoundaryStats(L=int(L), T=float(T), side_points=side_points,
                         n_count=n_count, n_plus_count=n_plus)


def extinction_lower_bound(params, m):
    """(delta1 / (delta0 + gamma + 2d))^m, the bound for m infected sites."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    base = params.delta1 / (params.delta0 + params.gamma + 2 * params.d)
    return base ** m


def extinction_lower_bound_sides(params, k):
    """Side-count variant carrying the no-outgoing-arrows factor e^{-4d}."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    base = (math.exp(-4 * params.d) * params.delta1
            / (params.delta0 + params.gamma + 2 * params.d))
    return base ** k


def brute_force_path_exists(log, beta0, frm, to):
    """Literal path-definition oracle for tiny logs.

    Enumerates arrow sequences with strictly increasing times and checks
    every vertical segment against the effective recovery points (the
    delta1 stream always, the extra stream while the background is 0).
    Exponential in the arrow count; use on hand-built fixtures only.
    """
    from .background import background_path

    (x, s), (y, t) = frm, to
    d = log.params.d
    if not (0 <= s < t <= log.horizon):
        raise ValueError("need 0 <= s < t <= horizon")
    beta0 = np.ascontiguousarray(beta0, np.uint8)
    paths = {}

    def bg_value(si, u):
        if si not in paths:
            paths[si] = background_path(log, log.box.site(si, d), int(beta0[si]), s)
        return paths[si].value_at(u)

    def recovery_in(si, lo, hi):
        """Effective recovery point at box-index si in open interval (lo, hi)?"""
        sel = (log.sites == si) & (log.times > lo) & (log.times < hi)
        for i in np.nonzero(sel)[0]:
            k = int(log.kinds[i])
            if k == int(EventKind.RECOVERY1):
                return True
            if k == int(EventKind.RECOVERY_EXTRA) and bg_value(si, log.times[i]) == 0:
                return True
        return False

    arrows = [(float(log.times[i]), int(log.sites[i]), int(log.dirs[i]))
              for i in np.nonzero((log.kinds == int(EventKind.ARROW))
                                  & (log.times > s) & (log.times <= t))[0]]
    nbr = log.neighbor_table()
    xi = log.box.index(x, d)
    yi = log.box.index(y, d)

    def search(cur, cur_time):
        if cur == yi and not recovery_in(cur, cur_time, t):
            return True
        for at, asite, adir in arrows:
            if at <= cur_time or asite != cur:
                continue
            tgt = nbr[asite, adir]
            if tgt < 0:
                continue
            if recovery_in(cur, cur_time, at):
                continue
            if search(int(tgt), at):
                return True
        return False

    return search(xi, s)
