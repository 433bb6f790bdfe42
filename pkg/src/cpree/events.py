"""The graphical representation on a finite space-time window.

A single event log holds every Poisson stream the dynamics may consume:

  * background flips at rate gamma, each carrying a uniform mark in [0,1)
    (the flip targets state 1 when mark < p, state 0 otherwise; one marked
    stream is distribution-equal to two independent streams of rates
    gamma*p and gamma*(1-p), and the marks give a pathwise monotone
    coupling in p),
  * recoveries at rate delta1 (always lethal) and extra recoveries at rate
    delta0 - delta1 (lethal only while the background is 0),
  * infection arrows at rate 1 per lattice direction.

The log is state-independent: any number of coupled dynamics can be run
off the same realization.
"""

import struct
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import _kernels

MAGIC = b"CPRE"
DUMP_VERSION = 1


@dataclass(frozen=True)
class Params:
    """Model parameters. Infection rate is fixed to 1 per infected neighbor."""

    d: int
    gamma: float
    delta0: float
    delta1: float
    p: float

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension d must be >= 1")
        if not (self.gamma > 0):
            raise ValueError("gamma must be positive")
        if not (self.delta0 > 0 and self.delta1 > 0):
            raise ValueError("recovery rates must be positive")
        if self.delta1 > self.delta0:
            raise ValueError("delta1 <= delta0 is a standing assumption")
        if not (0.0 <= self.p <= 1.0):
            raise ValueError("p must lie in [0, 1]")

    @property
    def total_site_rate(self):
        return self.gamma + self.delta0 + 2 * self.d

    def with_p(self, p):
        return Params(self.d, self.gamma, self.delta0, self.delta1, p)


@dataclass(frozen=True)
class Box:
    """Sites [-half_width, half_width]^d with closed or periodic boundary."""

    half_width: int
    boundary: str = "closed"

    def __post_init__(self):
        if self.half_width < 0:
            raise ValueError("half_width must be >= 0")
        if self.boundary not in ("closed", "periodic"):
            raise ValueError("boundary must be 'closed' or 'periodic'")

    def side(self):
        return 2 * self.half_width + 1

    def n_sites(self, d):
        return self.side() ** d

    def contains(self, site):
        return all(abs(int(c)) <= self.half_width for c in site)

    def index(self, site, d):
        """Linear index; coordinate 0 is least significant."""
        site = _as_site(site, d)
        if not self.contains(site):
            raise ValueError(f"site {site} outside box of half width {self.half_width}")
        idx = 0
        for c in reversed(site):
            idx = idx * self.side() + (c + self.half_width)
        return idx

    def site(self, idx, d):
        out = []
        for _ in range(d):
            out.append(idx % self.side() - self.half_width)
            idx //= self.side()
        return tuple(out)

    def coords_array(self, d):
        n = self.n_sites(d)
        coords = np.empty((n, d), np.int64)
        for i in range(n):
            coords[i] = self.site(i, d)
        return coords

    def neighbor_table(self, d):
        """int32[n_sites, 2d]; direction j is axis j//2, sign + for even j.

        Closed boundary marks off-box neighbors with -1 (arrows there are
        discarded); periodic wraps coordinates.
        """
        n = self.n_sites(d)
        nbr = np.empty((n, 2 * d), np.int32)
        side = self.side()
        for i in range(n):
            site = list(self.site(i, d))
            for j in range(2 * d):
                axis = j // 2
                step = 1 if j % 2 == 0 else -1
                c = site[axis] + step
                if self.boundary == "periodic":
                    c = (c + self.half_width) % side - self.half_width
                    site2 = site.copy()
                    site2[axis] = c
                    nbr[i, j] = self.index(tuple(site2), d)
                elif abs(c) <= self.half_width:
                    site2 = site.copy()
                    site2[axis] = c
                    nbr[i, j] = self.index(tuple(site2), d)
                else:
                    nbr[i, j] = -1
        return nbr

    def interior_mask(self, d, trunc=None):
        """1 on sites strictly inside (-trunc, trunc)^d (default: whole box)."""
        n = self.n_sites(d)
        if trunc is None:
            return np.ones(n, np.uint8)
        out = np.zeros(n, np.uint8)
        for i in range(n):
            if max(abs(c) for c in self.site(i, d)) <= trunc - 1:
                out[i] = 1
        return out


class EventKind(IntEnum):
    BG_FLIP = 0
    RECOVERY1 = 1
    RECOVERY_EXTRA = 2
    ARROW = 3


def direction_vector(j, d):
    v = [0] * d
    v[j // 2] = 1 if j % 2 == 0 else -1
    return tuple(v)


def direction_index(vec):
    nz = [(axis, c) for axis, c in enumerate(vec) if c != 0]
    if len(nz) != 1 or abs(nz[0][1]) != 1:
        raise ValueError(f"not a unit lattice direction: {vec}")
    axis, c = nz[0]
    return 2 * axis + (0 if c > 0 else 1)


@dataclass(frozen=True)
class Event:
    site: tuple
    time: float
    kind: EventKind
    mark: float = None
    direction: tuple = None


@dataclass(eq=False)
class EventLog:
    """Realized graphical representation on box x (0, horizon].

    Immutable after construction; the flat arrays are globally sorted by
    (time, site index, kind, direction) and shared read-only by any number
    of coupled sweeps.
    """

    params: Params
    box: Box
    horizon: float
    seed: int
    times: np.ndarray
    sites: np.ndarray
    kinds: np.ndarray
    dirs: np.ndarray
    marks: np.ndarray
    _nbr: np.ndarray = field(default=None, repr=False)

    @property
    def n_events(self):
        return int(self.times.shape[0])

    @property
    def n_sites(self):
        return self.box.n_sites(self.params.d)

    def neighbor_table(self):
        if self._nbr is None:
            self._nbr = self.box.neighbor_table(self.params.d)
        return self._nbr

    def events_in(self, site, interval):
        """Time-ordered events at `site` with times in (s, t]."""
        s, t = interval
        if not (0.0 <= s < t <= self.horizon):
            raise ValueError(f"malformed interval {interval}; need 0 <= s < t <= horizon")
        si = self.box.index(site, self.params.d)
        idx = np.nonzero((self.sites == si) & (self.times > s) & (self.times <= t))[0]
        return [self._event(i) for i in idx]

    def events_at_site(self, site):
        si = self.box.index(site, self.params.d)
        idx = np.nonzero(self.sites == si)[0]
        return [self._event(i) for i in idx]

    def _event(self, i):
        kind = EventKind(int(self.kinds[i]))
        site = self.box.site(int(self.sites[i]), self.params.d)
        mark = float(self.marks[i]) if kind == EventKind.BG_FLIP else None
        direction = (direction_vector(int(self.dirs[i]), self.params.d)
                     if kind == EventKind.ARROW else None)
        return Event(site=site, time=float(self.times[i]), kind=kind,
                     mark=mark, direction=direction)

    def first_bg_times(self):
        """First background-flip time per site (inf where none)."""
        out = np.full(self.n_sites, np.inf)
        sel = self.kinds == int(EventKind.BG_FLIP)
        np.minimum.at(out, self.sites[sel], self.times[sel])
        return out

    def arrays(self):
        return self.times, self.sites, self.kinds, self.dirs, self.marks

    # -- binary fixture format ------------------------------------------------

    def dump(self, fh):
        p, b = self.params, self.box
        fh.write(MAGIC)
        fh.write(struct.pack("<HIddddIBdQ", DUMP_VERSION, p.d, p.gamma, p.delta0,
                             p.delta1, p.p, b.half_width,
                             0 if b.boundary == "closed" else 1,
                             self.horizon, self.seed & 0xFFFFFFFFFFFFFFFF))
        n = self.n_sites
        order = np.lexsort((self.times, self.sites))
        bounds = np.searchsorted(self.sites[order], np.arange(n + 1))
        for s in range(n):
            rows = order[bounds[s]:bounds[s + 1]]
            fh.write(struct.pack("<I", len(rows)))
            for i in rows:
                kind = int(self.kinds[i])
                aux = float(self.marks[i]) if kind == EventKind.BG_FLIP else (
                    float(self.dirs[i]) if kind == EventKind.ARROW else 0.0)
                fh.write(struct.pack("<dBd", float(self.times[i]), kind, aux))

    @classmethod
    def load(cls, fh):
        if fh.read(4) != MAGIC:
            raise ValueError("bad magic; not an event-log dump")
        hdr = struct.unpack("<HIddddIBdQ", fh.read(struct.calcsize("<HIddddIBdQ")))
        version, d, gamma, delta0, delta1, p, half_width, bnd, horizon, seed = hdr
        if version != DUMP_VERSION:
            raise ValueError(f"unsupported dump version {version}")
        params = Params(d, gamma, delta0, delta1, p)
        box = Box(half_width, "closed" if bnd == 0 else "periodic")
        events = []
        for si in range(box.n_sites(d)):
            (cnt,) = struct.unpack("<I", fh.read(4))
            site = box.site(si, d)
            for _ in range(cnt):
                t, kind, aux = struct.unpack("<dBd", fh.read(17))
                kind = EventKind(kind)
                events.append(Event(
                    site=site, time=t, kind=kind,
                    mark=aux if kind == EventKind.BG_FLIP else None,
                    direction=direction_vector(int(aux), d) if kind == EventKind.ARROW else None))
        return from_events(params, box, horizon, events, seed=seed)


def _as_site(site, d):
    if np.isscalar(site):
        site = (int(site),)
    site = tuple(int(c) for c in site)
    if len(site) != d:
        raise ValueError(f"site {site} has wrong dimension (expected {d})")
    return site


def build_event_log(params, box, horizon, seed):
    """Generate the log; a pure function of (params, box, horizon, seed)."""
    if not isinstance(params, Params):
        raise TypeError("params must be a Params instance")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    coords = box.coords_array(params.d)
    gt, gs, gk, gd, gm = _kernels.gen_log(
        np.uint64(seed & 0xFFFFFFFFFFFFFFFF), coords, params.gamma,
        params.delta1, params.delta0 - params.delta1, float(horizon))
    return EventLog(params=params, box=box, horizon=float(horizon),
                    seed=int(seed), times=gt, sites=gs, kinds=gk, dirs=gd, marks=gm)


def from_events(params, box, horizon, events, seed=0):
    """Build a log from explicit Event records (hand-built fixtures)."""
    n = len(events)
    times = np.empty(n, np.float64)
    sites = np.empty(n, np.int32)
    kinds = np.empty(n, np.int8)
    dirs = np.full(n, -1, np.int8)
    marks = np.full(n, np.nan, np.float64)
    for i, ev in enumerate(events):
        if not (0.0 < ev.time <= horizon):
            raise ValueError(f"event time {ev.time} outside (0, horizon]")
        times[i] = ev.time
        sites[i] = box.index(ev.site, params.d)
        kinds[i] = int(ev.kind)
        if ev.kind == EventKind.BG_FLIP:
            if ev.mark is None or not (0.0 <= ev.mark <= 1.0):
                raise ValueError("background flip needs a mark in [0, 1]")
            marks[i] = ev.mark
        elif ev.kind == EventKind.ARROW:
            if ev.direction is None:
                raise ValueError("arrow needs a direction")
            dirs[i] = direction_index(ev.direction)
    order = np.lexsort((dirs, kinds, sites, times))
    return EventLog(params=params, box=box, horizon=float(horizon), seed=int(seed),
                    times=times[order], sites=sites[order], kinds=kinds[order],
                    dirs=dirs[order], marks=marks[order])
