"""Block geometry, block-crossing estimates, the renormalized field, and
the comparison against oriented percolation.

The staircase region is a union of k space-time slabs, each 10a wide and
6b tall, shifted 2a right and 5b up per step; crossings seed a block of
radius n and must cover a full block translate in the final window while
confined to the region. A field of such crossings, one-dependent by
construction from disjoint logs, is compared against the density at which
a one-dependent field stochastically dominates the product measure that
makes oriented percolation survive. The report is heuristic evidence
shaped like the survival certificate, not a proof.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._rng import derive_seed
from .background import infected_array
from .estimators import _proportion_estimate, config_digest, run_replicates
from .events import Box


@dataclass(frozen=True)
class Slab:
    x1_lo: float
    x1_hi: float
    t_lo: float
    t_hi: float


@dataclass(frozen=True)
class BlockGeometry:
    """The k-step staircase region, its reflection, and the derived offset.

    Slab j spans x1 in [-5a, 5a] + 2ja (other coordinates [-5a, 5a]) and
    time [0, 6b] + 5jb; the target window is ([-a, a] + 2ka) x [-a,a]^(d-1)
    x [5kb, (5k+1)b]. `reflected` mirrors the first spatial coordinate.
    """

    n: int
    a: int
    b: float
    k: int
    reflected: bool = False

    def __post_init__(self):
        if not (0 <= self.n < self.a):
            raise ValueError("need n < a")
        if self.k < 1:
            raise ValueError("need k >= 1")
        if self.b <= 0:
            raise ValueError("need b > 0")

    @property
    def sign(self):
        return -1 if self.reflected else 1

    @property
    def slabs(self):
        out = []
        for j in range(self.k):
            lo, hi = -5 * self.a + 2 * j * self.a, 5 * self.a + 2 * j * self.a
            if self.reflected:
                lo, hi = -hi, -lo
            out.append(Slab(lo, hi, 5 * j * self.b, 5 * j * self.b + 6 * self.b))
        return out

    @property
    def lateral_half_width(self):
        return 5 * self.a

    @property
    def horizon(self):
        return (5 * self.k + 1) * self.b

    @property
    def target_window(self):
        """(x1_lo, x1_hi, t_lo, t_hi); other coordinates span [-a, a]."""
        c = self.sign * 2 * self.k * self.a
        return (c - self.a, c + self.a, 5 * self.k * self.b, self.horizon)

    @property
    def start_window(self):
        """Starts live in [-a, a]^d x [0, b]."""
        return (-self.a, self.a, 0.0, self.b)

    @property
    def c_offset(self):
        """Horizontal gap between the reflected region's rightmost boundary
        and the left corner of the forward target window, clamped at 0."""
        refl = BlockGeometry(self.n, self.a, self.b, self.k, reflected=True)
        reflected_max = max(s.x1_hi for s in refl.slabs)
        target_left = 2 * self.k * self.a - self.a
        return max(0.0, float(target_left - reflected_max))

    def reflect(self):
        return BlockGeometry(self.n, self.a, self.b, self.k, not self.reflected)

    @property
    def box_half_width(self):
        return (2 * self.k + 3) * self.a


def build_block_geometry(n, a, b, k):
    return BlockGeometry(int(n), int(a), float(b), int(k))


def _interval_masks(geom, box, d):
    """Time-interval boundaries and allowed-site masks for the staircase."""
    bounds = sorted({s.t_lo for s in geom.slabs} | {s.t_hi for s in geom.slabs})
    bounds = [t for t in bounds if 0.0 < t < geom.horizon]
    mask_times = np.array(bounds, np.float64)
    edges = [0.0] + bounds + [geom.horizon]
    n_sites = box.n_sites(d)
    masks = np.zeros((len(edges) - 1, n_sites), np.uint8)
    lat = geom.lateral_half_width
    for iv in range(len(edges) - 1):
        mid = 0.5 * (edges[iv] + edges[iv + 1])
        ranges = [(s.x1_lo, s.x1_hi) for s in geom.slabs if s.t_lo <= mid < s.t_hi]
        for i in range(n_sites):
            site = box.site(i, d)
            if any(abs(c) > lat for c in site[1:]):
                continue
            if any(lo <= site[0] <= hi for lo, hi in ranges):
                masks[iv, i] = 1
    return mask_times, masks


def _target_rows(geom, box, d):
    x_lo, x_hi, _, _ = geom.target_window
    centers = [(x1,) + rest
               for x1 in range(int(x_lo), int(x_hi) + 1)
               for rest in itertools.product(range(-geom.a, geom.a + 1), repeat=d - 1)]
    offsets = list(itertools.product(range(-geom.n, geom.n + 1), repeat=d))
    rows = np.empty((len(centers), len(offsets)), np.int32)
    for r, c in enumerate(centers):
        for kk, off in enumerate(offsets):
            rows[r, kk] = box.index(tuple(ci + oi for ci, oi in zip(c, off)), d)
    return rows, centers


def _block_args(params, geom, start):
    d = params.d
    x, t = start
    x = tuple(int(c) for c in (x if hasattr(x, "__len__") else (x,)))
    wx_lo, wx_hi, wt_lo, wt_hi = geom.start_window
    if len(x) != d or any(not (wx_lo <= c <= wx_hi) for c in x) or not (wt_lo <= t <= wt_hi):
        raise ValueError(f"start {start} outside [-a, a]^d x [0, b]")
    box = Box(geom.box_half_width)
    coords = box.coords_array(d)
    nbr = box.neighbor_table(d)
    eta0 = infected_array(box, d, [tuple(ci + oi for ci, oi in zip(x, off))
                                   for off in itertools.product(range(-geom.n, geom.n + 1),
                                                                repeat=d)])
    mask_times, masks = _interval_masks(geom, box, d)
    targets, centers = _target_rows(geom, box, d)
    _, _, wlo, whi = geom.target_window
    return box, coords, nbr, eta0, mask_times, masks, targets, centers, float(t), wlo, whi


def estimate_block_event(params, geom, start, replicates, master_seed, workers=1):
    """Probability that the seeded block crosses the staircase: some target
    translate fully infected inside the final window, all paths confined to
    the region, empty background at the start time."""
    digest = config_digest("block_event", params=params, geom=asdict_geom(geom),
                           start=[list(np.atleast_1d(start[0])), start[1]],
                           replicates=replicates)
    (box, coords, nbr, eta0, mask_times, masks, targets, _centers,
     t0, wlo, whi) = _block_args(params, geom, start)
    rest = (coords, nbr, params.gamma, params.delta1, params.delta0 - params.delta1,
            params.p, geom.horizon, t0, eta0, mask_times, masks, targets,
            wlo, whi, 1)
    hits = int(run_replicates(_kernels.chunk_coverage, master_seed, rest,
                              replicates, workers))
    return _proportion_estimate(hits, replicates, master_seed, digest)


def estimate_box_coverage(params, n, replicates, master_seed, workers=1):
    """The seeding-brush probability: paths from the origin cover all of
    [0, 2n] x [-n, n]^(d-1) at time 1 while confined to that box."""
    d = params.d
    digest = config_digest("box_coverage", params=params, n=n, replicates=replicates)
    box = Box(2 * n if n > 0 else 1)
    coords = box.coords_array(d)
    nbr = box.neighbor_table(d)
    region = [c for c in itertools.product(*([range(0, 2 * n + 1)] +
                                             [range(-n, n + 1)] * (d - 1)))]
    allowed = np.zeros(box.n_sites(d), np.uint8)
    for c in region:
        allowed[box.index(c, d)] = 1
    targets = np.array([[box.index(c, d) for c in region]], np.int32)
    eta0 = infected_array(box, d, [(0,) * d])
    mask_times = np.empty(0, np.float64)
    masks = allowed[None, :].copy()
    rest = (coords, nbr, params.gamma, params.delta1, params.delta0 - params.delta1,
            params.p, 1.0, 0.0, eta0, mask_times, masks, targets,
            math.inf, math.inf, 1)
    hits = int(run_replicates(_kernels.chunk_coverage, master_seed, rest,
                              replicates, workers))
    return _proportion_estimate(hits, replicates, master_seed, digest)


def asdict_geom(geom):
    return {"n": geom.n, "a": geom.a, "b": geom.b, "k": geom.k,
            "reflected": geom.reflected}


@dataclass
class RenormField:
    """Levels of crossing indicators with witness centers where defined."""

    X: np.ndarray          # uint8[rows, cols]
    witness_x: np.ndarray  # int64[rows, cols, d]; valid where X == 1
    witness_t: np.ndarray  # float64[rows, cols]; valid where X == 1
    geom: BlockGeometry
    master_seed: int

    @property
    def rows(self):
        return self.X.shape[0]

    @property
    def cols(self):
        return self.X.shape[1]

    def row_density(self, level):
        """Mean of X over the reachable cone of the level."""
        width = min(level + 1, self.cols)
        return float(self.X[level, :width].mean())


def build_renorm_field(params, geom, rows, cols, master_seed):
    """Level-by-level construction of the crossing field.

    Child i at level l+1 opens when a crossing succeeds from parent i-1
    (forward block) or parent i (reflected block), started at the parent's
    witness; both bonds out of one parent read the same fresh log, parents
    two apart read disjoint logs, giving one-dependence within a level.
    The witness is the earliest crossing time, forward bond first on ties,
    target centers in fixed lexicographic order.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    d = params.d
    X = np.zeros((rows, cols), np.uint8)
    wx = np.zeros((rows, cols, d), np.int64)
    wt = np.full((rows, cols), np.nan)
    X[0, 0] = 1
    wt[0, 0] = 0.0

    geoms = {False: geom, True: geom.reflect()}
    cache = {}

    def block_args(reflected):
        if reflected not in cache:
            g = geoms[reflected]
            box = Box(g.box_half_width)
            coords = box.coords_array(d)
            nbr = box.neighbor_table(d)
            mask_times, masks = _interval_masks(g, box, d)
            targets, centers = _target_rows(g, box, d)
            cache[reflected] = (box, coords, nbr, mask_times, masks, targets, centers, g)
        return cache[reflected]

    offsets = list(itertools.product(range(-geom.n, geom.n + 1), repeat=d))
    for level in range(rows - 1):
        for child in range(cols):
            best = None
            for reflected, parent in ((False, child - 1), (True, child)):
                if not (0 <= parent < cols) or X[level, parent] == 0:
                    continue
                box, coords, nbr, mask_times, masks, targets, centers, g = \
                    block_args(reflected)
                start_x = tuple(wx[level, parent])
                eta0 = infected_array(box, d, [tuple(c + o for c, o in zip(start_x, off))
                                               for off in offsets])
                seed = derive_seed(master_seed, level, parent)
                _, _, wlo, whi = g.target_window
                found, row, t_hit = _kernels.block_event_once(
                    np.uint64(seed), coords, nbr, params.gamma, params.delta1,
                    params.delta0 - params.delta1, params.p, g.horizon,
                    float(wt[level, parent]), eta0, mask_times, masks, targets,
                    wlo, whi, 1)
                if found:
                    center = centers[row]
                    shift = g.sign * 2 * g.k * g.a
                    y_rel = (center[0] - shift,) + tuple(center[1:])
                    t_rel = float(t_hit) - 5 * g.k * g.b
                    cand = (float(t_hit), 0 if not reflected else 1, y_rel, t_rel)
                    if best is None or cand[:2] < best[:2]:
                        best = cand
            if best is not None:
                X[level + 1, child] = 1
                wx[level + 1, child] = best[2]
                wt[level + 1, child] = best[3]
    return RenormField(X=X, witness_x=wx, witness_t=wt, geom=geom,
                       master_seed=master_seed)


def lss_density_threshold(p_target):
    """One-dependent density sufficient to dominate product density p_target."""
    if not (0.0 <= p_target <= 1.0):
        raise ValueError("p_target must lie in [0, 1]")
    return 1.0 - (1.0 - math.sqrt(p_target)) ** 3


def op_survival(p_bond, depth, replicates, master_seed):
    """Monte Carlo survival of site-0-seeded oriented percolation on N."""
    if not (0.0 <= p_bond <= 1.0):
        raise ValueError("p_bond must lie in [0, 1]")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    digest = config_digest("op_survival", p_bond=p_bond, depth=depth,
                           replicates=replicates)
    flags = _kernels.op_survive_flags(np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF),
                                      replicates, float(p_bond), depth)
    return _proportion_estimate(int(flags.sum()), replicates, master_seed, digest)


def op_survive_flags(p_bond, depth, replicates, master_seed):
    """Per-replicate survival flags; same master seed shares the uniforms
    across p_bond values (exact pathwise monotone coupling)."""
    return _kernels.op_survive_flags(np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF),
                                     replicates, float(p_bond), depth)


def op_survival_exact(p_bond, depth):
    """Exhaustive-enumeration survival probability (small depths only).

    Sums over all open/closed patterns of the reachable cone; serves as
    the independent oracle for op_survival.
    """
    sites = [(level, i) for level in range(1, depth + 1) for i in range(level + 1)]
    if len(sites) > 22:
        raise ValueError("cone too large for exhaustive enumeration")
    total = 0.0
    for pattern in range(2 ** len(sites)):
        open_set = {sites[j] for j in range(len(sites)) if (pattern >> j) & 1}
        prob = 1.0
        for j in range(len(sites)):
            prob *= p_bond if (pattern >> j) & 1 else (1.0 - p_bond)
        frontier = {0}
        for level in range(1, depth + 1):
            frontier = {i for i in range(level + 1)
                        if (level, i) in open_set and (i in frontier or i - 1 in frontier)}
            if not frontier:
                break
        if frontier:
            total += prob
    return total


def row_lag_correlation(X, lag, start_level=1):
    """Pooled Pearson correlation of (X[n, i], X[n, i+lag]) pairs inside the
    reachable cone. Returns (corr, n_pairs, se_null); corr is None when the
    pooled variance vanishes."""
    rows, cols = X.shape
    pairs = []
    for level in range(start_level, rows):
        width = min(level + 1, cols)
        for i in range(width - lag):
            pairs.append((X[level, i], X[level, i + lag]))
    if len(pairs) < 8:
        raise ValueError("insufficient rows for correlation estimates")
    arr = np.asarray(pairs, float)
    sx, sy = arr[:, 0].std(), arr[:, 1].std()
    if sx == 0.0 or sy == 0.0:
        return None, len(pairs), 1.0 / math.sqrt(len(pairs))
    corr = float(np.corrcoef(arr[:, 0], arr[:, 1])[0, 1])
    return corr, len(pairs), 1.0 / math.sqrt(len(pairs))


def domination_report(params, geom, field_rows, replicates, master_seed,
                      p_target=0.25, workers=1):
    """Numerical echo of the renormalization survival certificate.

    Estimates the block-crossing density, compares it against the
    one-dependent domination threshold for p_target, builds a field and
    reports within-row correlations (lag 1 expected nonzero, lag >= 2
    expected null). Explicitly non-rigorous.
    """
    if not (0.25 <= p_target < 1.0):
        raise ValueError("p_target must lie in [1/4, 1)")
    if field_rows < 6:
        # lag-2 pools (rows-1)(rows-2)/2 cone pairs; need at least 8
        raise ValueError("insufficient rows for correlation estimates")
    density = estimate_block_event(params, geom, ((0,) * params.d, 0.0),
                                   replicates, derive_seed(master_seed, 1), workers)
    threshold = lss_density_threshold(p_target)
    ffield = build_renorm_field(params, geom, field_rows, field_rows,
                                derive_seed(master_seed, 2))
    lag1, n1, se1 = row_lag_correlation(ffield.X, 1)
    lag2, n2, se2 = row_lag_correlation(ffield.X, 2)
    report = {
        "geometry": asdict_geom(geom) | {"c_offset": geom.c_offset,
                                         "box_half_width": geom.box_half_width},
        "params": {"d": params.d, "gamma": params.gamma, "delta0": params.delta0,
                   "delta1": params.delta1, "p": params.p},
        "density": {"value": density.value, "ci_low": density.ci_low,
                    "ci_high": density.ci_high, "replicates": density.replicates},
        "p_target": p_target,
        "lss_threshold": threshold,
        "certificate": bool(density.value >= threshold),
        "certificate_conservative": bool(density.ci_low >= threshold),
        "correlations": {
            "lag1": {"value": lag1, "pairs": n1, "se_null": se1},
            "lag2plus": {"value": lag2, "pairs": n2, "se_null": se2},
        },
        "field_rows": field_rows,
        "row_densities": [ffield.row_density(r) for r in range(ffield.rows)],
        "master_seed": master_seed,
        "note": "heuristic echo of the renormalization certificate; not a proof",
    }
    return report
