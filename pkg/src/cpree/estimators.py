"""Monte Carlo estimators for the survival, duality, density, critical-scan
and finite space-time quantities.

Every estimator is a pure function of its inputs and a master seed:
replicate r consumes the derived substream (master_seed, r), and counts
are aggregated by commutative integer sums, so results are identical for
any worker count or scheduling. Proportions carry 95% Wilson intervals;
signed residuals carry normal-approximation intervals.
"""

import hashlib
import itertools
import json
import math
import multiprocessing
from dataclasses import dataclass, field, asdict

import numpy as np

from . import _kernels
from ._rng import derive_seed
from .background import InitLaw, all_sites, infected_array
from .dynamics import side_masks
from .events import Box, Params

Z95 = 1.959963984540054


def wilson_interval(successes, n, z=Z95):
    """95% Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("need at least one replicate")
    ph = successes / n
    denom = 1.0 + z * z / n
    center = (ph + z * z / (2 * n)) / denom
    half = z * math.sqrt(ph * (1.0 - ph) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == n else min(1.0, center + half)
    return lo, hi


def _normalize(v):
    if isinstance(v, Params) or isinstance(v, Box):
        return asdict(v)
    if isinstance(v, InitLaw):
        return {"background": _normalize(v.background), "infected": _normalize(v.infected)}
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (tuple, list)):
        return [_normalize(x) for x in v]
    if isinstance(v, dict):
        return {k: _normalize(x) for k, x in sorted(v.items())}
    return v


def config_digest(name, **inputs):
    """Stable hash of the canonicalized estimator inputs."""
    payload = json.dumps({"estimator": name, **{k: _normalize(v) for k, v in inputs.items()}},
                         sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Estimate:
    value: float
    replicates: int
    ci_low: float
    ci_high: float
    master_seed: int
    config_digest: str

    def half_width(self):
        return 0.5 * (self.ci_high - self.ci_low)


def _proportion_estimate(successes, replicates, master_seed, digest):
    lo, hi = wilson_interval(successes, replicates)
    return Estimate(value=successes / replicates, replicates=replicates,
                    ci_low=lo, ci_high=hi, master_seed=master_seed,
                    config_digest=digest)


# -- worker plumbing -----------------------------------------------------------

def _kernel_span(kernel, master, rest, lo, hi):
    return kernel(np.uint64(master), lo, hi, *rest)


def run_replicates(kernel, master, rest, replicates, workers=1):
    """Sum kernel(master, lo, hi, *rest) over a partition of replicate
    indices; identical for every worker count (sums commute)."""
    master = int(master) & 0xFFFFFFFFFFFFFFFF
    if workers <= 1:
        return kernel(np.uint64(master), 0, replicates, *rest)
    bounds = np.linspace(0, replicates, workers + 1, dtype=int)
    jobs = [(kernel, master, rest, int(lo), int(hi))
            for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(min(workers, len(jobs))) as pool:
        parts = pool.starmap(_kernel_span, jobs)
    return np.sum(parts, axis=0)


def _init_arrays(init, box, d):
    """(law code, q, explicit bits, infected array) for the kernels."""
    code, q, arr = init.law_code()
    n = box.n_sites(d)
    if arr is None:
        arr = np.zeros(n, np.uint8)
    elif arr.shape[0] != n:
        raise ValueError("explicit background has wrong length for box")
    eta0 = infected_array(box, d, init.infected)
    return code, q, arr, eta0


def _log_args(params, box):
    coords = box.coords_array(params.d)
    nbr = box.neighbor_table(params.d)
    return coords, nbr


# -- survival / duality / density ----------------------------------------------

def estimate_survival(params, init, box, horizon, replicates, master_seed, workers=1):
    """Fraction of replicates whose infected set is nonempty at the horizon
    (extinction is absorbing, so this is survival up to the horizon)."""
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    digest = config_digest("survival", params=params, init=init, box=box,
                           horizon=horizon, replicates=replicates)
    code, q, arr, eta0 = _init_arrays(init, box, params.d)
    coords, nbr = _log_args(params, box)
    n = coords.shape[0]
    ones = np.ones(n, np.uint8)
    rest = (coords, nbr, ones, params.gamma, params.delta1,
            params.delta0 - params.delta1, params.p, float(horizon), float(horizon),
            code, q, arr, eta0, ones)
    hits = int(run_replicates(_kernels.chunk_hit, master_seed, rest, replicates, workers))
    return _proportion_estimate(hits, replicates, master_seed, digest)


def _hit_probability(params, init, box, t, mask_sites, replicates, seed, workers, digest):
    code, q, arr, eta0 = _init_arrays(init, box, params.d)
    coords, nbr = _log_args(params, box)
    n = coords.shape[0]
    ones = np.ones(n, np.uint8)
    mask = infected_array(box, params.d, mask_sites)
    rest = (coords, nbr, ones, params.gamma, params.delta1,
            params.delta0 - params.delta1, params.p, float(t), float(t),
            code, q, arr, eta0, mask)
    hits = int(run_replicates(_kernels.chunk_hit, seed, rest, replicates, workers))
    return _proportion_estimate(hits, replicates, seed, digest)


def estimate_duality_residual(params, A, B, t, box, replicates, master_seed,
                              workers=1, background=None, return_sides=False):
    """Signed residual of the two sides of the self-duality identity.

    Both sides run under the stationary product-p background, the only law
    under which the identity holds; requesting anything else is an error.
    Equal A and B share the estimator path, so the residual is exactly 0.
    With return_sides, returns (residual, side_AB, side_BA) Estimates.
    """
    if not A or not B:
        raise ValueError("A and B must be nonempty")
    if t <= 0:
        raise ValueError("t must be positive")
    if background is not None:
        ok = isinstance(background, (int, float)) and float(background) == params.p
        if not ok:
            raise ValueError("duality requires the stationary product-p background")
    digest = config_digest("duality", params=params, A=list(A), B=list(B), t=t,
                           box=box, replicates=replicates)
    A = [tuple(int(c) for c in np.atleast_1d(a)) for a in A]
    B = [tuple(int(c) for c in np.atleast_1d(b)) for b in B]
    side1 = _hit_probability(params, InitLaw(params.p, tuple(A)), box, t, B,
                             replicates, derive_seed(master_seed, 0), workers, digest)
    if set(A) == set(B):
        residual = Estimate(value=0.0, replicates=replicates, ci_low=0.0,
                            ci_high=0.0, master_seed=master_seed,
                            config_digest=digest)
        return (residual, side1, side1) if return_sides else residual
    side2 = _hit_probability(params, InitLaw(params.p, tuple(B)), box, t, A,
                             replicates, derive_seed(master_seed, 1), workers, digest)
    n = replicates
    var = (side1.value * (1 - side1.value) + side2.value * (1 - side2.value)) / n
    half = Z95 * math.sqrt(var)
    resid = side1.value - side2.value
    residual = Estimate(value=resid, replicates=n, ci_low=resid - half,
                        ci_high=resid + half, master_seed=master_seed,
                        config_digest=digest)
    return (residual, side1, side2) if return_sides else residual


def estimate_upper_density(params, t, box, replicates, master_seed, workers=1):
    """P[origin infected at t] from the all-ones pair start."""
    digest = config_digest("upper_density", params=params, t=t, box=box,
                           replicates=replicates)
    origin = (0,) * params.d
    if t == 0:
        return Estimate(value=1.0, replicates=replicates, ci_low=1.0, ci_high=1.0,
                        master_seed=master_seed, config_digest=digest)
    init = InitLaw("ones", all_sites(box, params.d))
    return _hit_probability(params, init, box, t, [origin], replicates,
                            master_seed, workers, digest)


def estimate_upper_density_curve(params, t_grid, box, replicates, master_seed, workers=1):
    """Upper-density estimates on an ascending t grid (one log per replicate)."""
    t_grid = np.asarray(sorted(t_grid), float)
    if np.any(t_grid <= 0):
        raise ValueError("t grid must be positive (t=0 is exactly 1)")
    digest = config_digest("upper_density_curve", params=params, t_grid=t_grid,
                           box=box, replicates=replicates)
    init = InitLaw("ones", all_sites(box, params.d))
    code, q, arr, eta0 = _init_arrays(init, box, params.d)
    coords, nbr = _log_args(params, box)
    n = coords.shape[0]
    ones = np.ones(n, np.uint8)
    mask = infected_array(box, params.d, [(0,) * params.d])
    rest = (coords, nbr, ones, params.gamma, params.delta1,
            params.delta0 - params.delta1, params.p, float(t_grid[-1]),
            code, q, arr, eta0, mask, t_grid)
    counts = run_replicates(_kernels.chunk_hit_curve, master_seed, rest,
                            replicates, workers)
    return [(float(t), _proportion_estimate(int(c), replicates, master_seed, digest))
            for t, c in zip(t_grid, counts)]


# -- critical scan ---------------------------------------------------------------

@dataclass
class ScanResult:
    grid: np.ndarray
    estimates: list
    threshold: float
    pseudo_critical: float = None
    p_invariant: bool = False
    master_seed: int = 0
    config_digest: str = ""


def scan_critical(params, p_grid, init, box, horizon, replicates, threshold,
                  master_seed, workers=1):
    """Survival-to-horizon across a p grid off shared logs.

    The marked-flip coupling re-reads the same marks at every p, so the
    per-replicate survival indicator is a nondecreasing step function of p
    and the estimated curve is exactly monotone. params.p is ignored.
    """
    grid = np.asarray(p_grid, float)
    if grid.size == 0:
        raise ValueError("empty p grid")
    if np.any(np.diff(grid) <= 0) or grid[0] < 0 or grid[-1] > 1:
        raise ValueError("p grid must be strictly increasing within [0, 1]")
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must lie in (0, 1)")
    digest = config_digest("critical_scan", params=params, p_grid=grid, init=init,
                           box=box, horizon=horizon, replicates=replicates,
                           threshold=threshold)
    code, q, arr, eta0 = _init_arrays(init, box, params.d)
    coords, nbr = _log_args(params, box)
    ones = np.ones(coords.shape[0], np.uint8)
    p_invariant = params.delta0 == params.delta1
    probe = grid[:1] if p_invariant else grid
    rest = (coords, nbr, ones, params.gamma, params.delta1,
            params.delta0 - params.delta1, float(horizon), probe, code, q, arr, eta0)
    hist = run_replicates(_kernels.chunk_scan, master_seed, rest, replicates, workers)
    counts = np.cumsum(hist)[:probe.size]
    if p_invariant:
        counts = np.full(grid.size, counts[0])
    estimates = [_proportion_estimate(int(c), replicates, master_seed, digest)
                 for c in counts]
    pseudo = None
    if not p_invariant:
        vals = np.array([e.value for e in estimates])
        above = np.nonzero(vals >= threshold)[0]
        if above.size and above[0] > 0:
            i = above[0]
            x0, x1 = grid[i - 1], grid[i]
            y0, y1 = vals[i - 1], vals[i]
            pseudo = float(x0 + (threshold - y0) * (x1 - x0) / (y1 - y0))
    return ScanResult(grid=grid, estimates=estimates, threshold=float(threshold),
                      pseudo_critical=pseudo, p_invariant=p_invariant,
                      master_seed=master_seed, config_digest=digest)


# -- finite space-time condition --------------------------------------------------

def _block_targets(box, d, centers, n):
    """Site-index rows for translates center + [-n, n]^d, in center order."""
    offsets = list(itertools.product(range(-n, n + 1), repeat=d))
    rows = np.empty((len(centers), len(offsets)), np.int32)
    for r, c in enumerate(centers):
        for k, off in enumerate(offsets):
            rows[r, k] = box.index(tuple(ci + oi for ci, oi in zip(c, off)), d)
    return rows


def fstc_geometry(n, L, T, variant, d):
    """(trunc, box half-width, horizon, win_lo, win_hi, check_end, centers)."""
    if not (0 <= n < L):
        raise ValueError("need 0 <= n < L")
    if T <= 0:
        raise ValueError("T must be positive")
    if variant == "fstc1":
        trunc = L + n
        centers = list(itertools.product(range(0, L), repeat=d))
        return trunc, trunc, T + 1.0, math.inf, math.inf, 1, centers
    if variant == "fstc2":
        trunc = L + 2 * n + 1
        centers = [(L + n,) + rest for rest in itertools.product(range(0, L), repeat=d - 1)]
        return trunc, trunc, T + 1.0, 1.0, T + 1.0, 0, centers
    if variant == "fstc3":
        trunc = 2 * L + 3 * n
        centers = [(x1,) + rest for x1 in range(L + n, 2 * L + n + 1)
                   for rest in itertools.product(range(0, 2 * L), repeat=d - 1)]
        return trunc, trunc, 2.0 * T, float(T), 2.0 * T, 0, centers
    raise ValueError(f"unknown variant {variant!r}")


def estimate_fstc(params, n, L, T, variant, replicates, master_seed, workers=1,
                  trunc=None):
    """Probability of the finite space-time spread event for one variant.

    Truncated dynamics start from the block [-n, n]^d with empty
    background; the event asks for a fully infected translate of the block
    in the variant's target window. `trunc` widens the confinement region
    beyond the variant's default (used by the monotonicity tests).
    """
    d = params.d
    trunc_default, box_half, horizon, win_lo, win_hi, check_end, centers = \
        fstc_geometry(n, L, T, variant, d)
    if trunc is None:
        trunc = trunc_default
    if trunc < trunc_default:
        raise ValueError("trunc below the variant's confinement width")
    box = Box(max(int(trunc), box_half))
    digest = config_digest("fstc", params=params, n=n, L=L, T=T, variant=variant,
                           replicates=replicates, trunc=trunc)
    coords, nbr = _log_args(params, box)
    eta0 = infected_array(box, d, list(itertools.product(range(-n, n + 1), repeat=d)))
    interior = box.interior_mask(d, int(trunc))
    targets = _block_targets(box, d, centers, n)
    mask_times = np.empty(0, np.float64)
    masks = interior[None, :].copy()
    rest = (coords, nbr, params.gamma, params.delta1, params.delta0 - params.delta1,
            params.p, float(horizon), 0.0, eta0, mask_times, masks, targets,
            float(win_lo), float(win_hi), check_end)
    hits = int(run_replicates(_kernels.chunk_coverage, master_seed, rest,
                              replicates, workers))
    return _proportion_estimate(hits, replicates, master_seed, digest)


# -- orthant inequalities ----------------------------------------------------------

@dataclass
class InequalityCheck:
    lhs: float
    rhs: float
    margin: float
    se: float
    holds_within_3sigma: bool


@dataclass
class OrthantReport:
    ineq_counts: InequalityCheck
    ineq_sides: InequalityCheck
    N: int
    M: int
    replicates: int
    master_seed: int
    config_digest: str
    degenerate_window: bool = False

    def holds(self):
        return (self.ineq_counts.holds_within_3sigma
                and self.ineq_sides.holds_within_3sigma)


def _delta_margin(p_lhs, p_raw, exponent, cov, n):
    """margin = p_raw^exponent - p_lhs with a delta-method standard error."""
    rhs = p_raw ** exponent
    grad = exponent * p_raw ** (exponent - 1.0) if 0.0 < p_raw else (
        0.0 if exponent > 1.0 else math.inf)
    if p_raw == 0.0 and exponent > 1.0:
        grad = 0.0
    var_l = p_lhs * (1 - p_lhs) / n
    var_r = p_raw * (1 - p_raw) / n
    if var_r == 0.0 or not math.isfinite(grad):
        se = math.sqrt(var_l)
    else:
        se = math.sqrt(max(0.0, var_l + grad * grad * var_r - 2.0 * grad * cov / n))
    margin = rhs - p_lhs
    return rhs, margin, se


def check_orthant_inequalities(params, n, L, T, N, M, replicates, master_seed,
                               workers=1):
    """Estimate both sides of the orthant comparison inequalities.

    Inequality 1: P[|trunc set at T ∩ [0,L)^d| <= N] <= P[|trunc set at T| <= 2^d N]^(2^-d).
    Inequality 2: P[N_plus <= M]^(d 2^d) <= P[N <= M d 2^d].
    Statistical sanity report from one shared ensemble, not a proof.
    """
    d = params.d
    if not (0 <= n < L):
        raise ValueError("need 0 <= n < L")
    digest = config_digest("orthant", params=params, n=n, L=L, T=T, N=N, M=M,
                           replicates=replicates)
    box = Box(L)
    coords, nbr = _log_args(params, box)
    interior = box.interior_mask(d, L)
    side_any, side_plus = side_masks(box, d, L)
    orth = np.zeros(box.n_sites(d), np.uint8)
    for c in itertools.product(range(0, L), repeat=d):
        orth[box.index(c, d)] = 1
    eta0 = infected_array(box, d, list(itertools.product(range(-n, n + 1), repeat=d)))
    thr_2dn = (2 ** d) * N
    thr_md2d = M * d * (2 ** d)
    degenerate = T <= 0
    if degenerate:
        size_full = int(eta0.sum())
        size_orth = int((eta0 & orth).sum())
        sums = np.array([
            replicates * (size_orth <= N), replicates * (size_full <= thr_2dn), 0,
            replicates * (0 <= M), replicates * (0 <= thr_md2d), 0], np.int64)
        sums[2] = min(sums[0], sums[1])
        sums[5] = min(sums[3], sums[4])
    else:
        rest = (coords, nbr, interior, side_any, side_plus, orth, eta0,
                params.gamma, params.delta1, params.delta0 - params.delta1,
                params.p, float(T), N, thr_2dn, M, thr_md2d)
        sums = run_replicates(_kernels.chunk_orthant, master_seed, rest,
                              replicates, workers)
    nrep = replicates
    pl1, pr1 = sums[0] / nrep, sums[1] / nrep
    cov1 = sums[2] / nrep - pl1 * pr1
    rhs1, margin1, se1 = _delta_margin(pl1, pr1, 2.0 ** (-d), cov1, nrep)
    ineq1 = InequalityCheck(lhs=pl1, rhs=rhs1, margin=margin1, se=se1,
                            holds_within_3sigma=margin1 >= -3.0 * se1)
    pl2_raw, pr2 = sums[3] / nrep, sums[4] / nrep
    cov2 = sums[5] / nrep - pl2_raw * pr2
    b = d * 2 ** d
    lhs2 = pl2_raw ** b
    grad = b * pl2_raw ** (b - 1.0)
    var_l = pl2_raw * (1 - pl2_raw) / nrep
    var_r = pr2 * (1 - pr2) / nrep
    se2 = math.sqrt(max(0.0, grad * grad * var_l + var_r - 2.0 * grad * cov2 / nrep))
    margin2 = pr2 - lhs2
    ineq2 = InequalityCheck(lhs=lhs2, rhs=pr2, margin=margin2, se=se2,
                            holds_within_3sigma=margin2 >= -3.0 * se2)
    return OrthantReport(ineq_counts=ineq1, ineq_sides=ineq2, N=N, M=M,
                         replicates=replicates, master_seed=master_seed,
                         config_digest=digest, degenerate_window=degenerate)


def estimate_truncated_occupancy(params, A, L, t, N, replicates, master_seed,
                                 workers=1):
    """P[|truncated set at t| >= N] from infected set A, empty background."""
    d = params.d
    box = Box(L)
    digest = config_digest("truncated_occupancy", params=params, A=list(A), L=L,
                           t=t, N=N, replicates=replicates)
    coords, nbr = _log_args(params, box)
    interior = box.interior_mask(d, L)
    side_any, side_plus = side_masks(box, d, L)
    orth = np.zeros(box.n_sites(d), np.uint8)
    eta0 = infected_array(box, d, A)
    rest = (coords, nbr, interior, side_any, side_plus, orth, eta0,
            params.gamma, params.delta1, params.delta0 - params.delta1,
            params.p, float(t), 0, N - 1, 0, 0)
    sums = run_replicates(_kernels.chunk_orthant, master_seed, rest,
                          replicates, workers)
    hits = replicates - int(sums[1])  # |set| >= N is the complement of <= N-1
    return _proportion_estimate(hits, replicates, master_seed, digest)


def write_estimates_csv(path, rows):
    """One row per estimate, 17-significant-digit floats.

    Row fields: config_digest, estimator_name, d, gamma, delta0, delta1, p,
    box_L, horizon, variant, value, ci_low, ci_high, replicates, master_seed.
    """
    import csv

    header = ["config_digest", "estimator_name", "d", "gamma", "delta0", "delta1",
              "p", "box_L", "horizon", "variant", "value", "ci_low", "ci_high",
              "replicates", "master_seed"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([r[h] if not isinstance(r[h], float) else f"{r[h]:.17g}"
                        for h in header])
