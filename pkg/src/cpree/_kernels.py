"""Compiled event generation and event-sweep kernels.

Everything here operates on the flat array form of an event log:

    times  float64[E]  event times, globally sorted
    sites  int32[E]    box-linear site index
    kinds  int8[E]     0 background flip, 1 recovery, 2 extra recovery, 3 arrow
    dirs   int8[E]     arrow direction index (axis*2 + (0 pos / 1 neg)), -1 otherwise
    marks  float64[E]  uniform mark for background flips, NaN otherwise

Per-site event streams are generated independently from counter-based
keyed substreams (see _rng), merged per site in (time, kind, direction)
order and then heap-merged globally in (time, site) order, so replay is
deterministic including the measure-zero tie cases.

The estimator hot paths (`chunk_*`) regenerate logs replicate by
replicate inside compiled loops; they call the exact same generation and
sweep routines as the Python-facing EventLog/simulate API, so the two
paths cannot drift apart.
"""

import numpy as np
from numba import njit, uint64, int64, int32, int8, uint8, float64

from ._rng import (
    philox_block,
    mix64,
    seed_word,
    stream_word,
    u64_to_unit,
    _GOLDEN,
)

# stream kind tags (per site)
K_BG_T = 0
K_BG_M = 1
K_REC1 = 2
K_RECX = 3
K_ARROW0 = 4

# event kind codes
EV_BG = 0
EV_REC1 = 1
EV_RECX = 2
EV_ARROW = 3

# tag for initial-configuration sampling streams
INIT_BG_TAG = 101

_INF = np.inf


@njit(inline="always", cache=True)
def derive1(master, r):
    """Child seed for replicate r; matches _rng.derive_seed(master, r)."""
    return mix64(uint64(master) ^ (uint64(r) + _GOLDEN))


@njit(cache=True)
def _fill_gap_times(k0, k1, rate, horizon, out):
    """Arrival times of a rate-`rate` Poisson stream in (0, horizon].

    Inverse-CDF exponential gaps from the keyed uniform stream; returns
    the arrival count, or -1 if `out` is too small.
    """
    if rate <= 0.0:
        return 0
    n = 0
    t = 0.0
    ctr = uint64(0)
    b0 = uint64(0)
    b1 = uint64(0)
    b2 = uint64(0)
    b3 = uint64(0)
    bi = 4
    inv = 1.0 / rate
    cap = out.shape[0]
    while True:
        if bi == 4:
            ctr += uint64(1)
            b0, b1, b2, b3 = philox_block(ctr, uint64(0), uint64(0), uint64(0), k0, k1)
            bi = 0
        if bi == 0:
            x = b0
        elif bi == 1:
            x = b1
        elif bi == 2:
            x = b2
        else:
            x = b3
        bi += 1
        t -= np.log(u64_to_unit(x)) * inv
        if t > horizon:
            return n
        if n >= cap:
            return -1
        out[n] = t
        n += 1


@njit(cache=True)
def _fill_uniforms(k0, k1, n, out):
    ctr = uint64(0)
    i = 0
    while i < n:
        ctr += uint64(1)
        b0, b1, b2, b3 = philox_block(ctr, uint64(0), uint64(0), uint64(0), k0, k1)
        out[i] = u64_to_unit(b0)
        if i + 1 < n:
            out[i + 1] = u64_to_unit(b1)
        if i + 2 < n:
            out[i + 2] = u64_to_unit(b2)
        if i + 3 < n:
            out[i + 3] = u64_to_unit(b3)
        i += 4


@njit(inline="always", cache=True)
def _stream_cap(rate, horizon, mult):
    m = rate * horizon
    return int64((m + 8.0 * np.sqrt(m + 1.0) + 16.0) * mult)


@njit(cache=True)
def gen_log(seed, coords, gamma, delta1, deltax, horizon):
    """Generate the full event log for all sites; globally time-sorted.

    Returns (times, sites, kinds, dirs, marks). Retries internally with
    larger scratch if a stream overruns its high-probability cap, which
    leaves the realized values unchanged (streams are prefix-stable).
    """
    n_sites = coords.shape[0]
    d = coords.shape[1]
    nd = 2 * d
    k0 = seed_word(seed)

    mult = 1.0
    while True:
        cap_bg = _stream_cap(gamma, horizon, mult)
        cap_r1 = _stream_cap(delta1, horizon, mult)
        cap_rx = _stream_cap(deltax, horizon, mult)
        cap_ar = _stream_cap(1.0, horizon, mult)
        site_cap = cap_bg + cap_r1 + cap_rx + nd * cap_ar

        buf_bg = np.empty(cap_bg, np.float64)
        buf_mk = np.empty(cap_bg, np.float64)
        buf_r1 = np.empty(cap_r1, np.float64)
        buf_rx = np.empty(cap_rx, np.float64)
        buf_ar = np.empty((nd, cap_ar), np.float64)
        n_ar = np.empty(nd, np.int64)

        st = np.empty(n_sites * site_cap, np.float64)
        sk = np.empty(n_sites * site_cap, np.int8)
        sd = np.empty(n_sites * site_cap, np.int8)
        sm = np.empty(n_sites * site_cap, np.float64)
        site_n = np.zeros(n_sites, np.int64)

        overflow = False
        for s in range(n_sites):
            row = coords[s]
            n_bg = _fill_gap_times(k0, stream_word(row, K_BG_T), gamma, horizon, buf_bg)
            if n_bg < 0:
                overflow = True
                break
            if n_bg > 0:
                _fill_uniforms(k0, stream_word(row, K_BG_M), n_bg, buf_mk)
            n_r1 = _fill_gap_times(k0, stream_word(row, K_REC1), delta1, horizon, buf_r1)
            n_rx = _fill_gap_times(k0, stream_word(row, K_RECX), deltax, horizon, buf_rx)
            if n_r1 < 0 or n_rx < 0:
                overflow = True
                break
            for j in range(nd):
                nj = _fill_gap_times(k0, stream_word(row, K_ARROW0 + j), 1.0, horizon, buf_ar[j])
                if nj < 0:
                    overflow = True
                    break
                n_ar[j] = nj
            if overflow:
                break

            # merge the site's streams; scan order realizes the kind tie rule
            base = s * site_cap
            p_bg = 0
            p_r1 = 0
            p_rx = 0
            p_ar = np.zeros(nd, np.int64)
            total = n_bg + n_r1 + n_rx
            for j in range(nd):
                total += n_ar[j]
            for e in range(total):
                best = _INF
                bk = -1
                bj = -1
                if p_bg < n_bg and buf_bg[p_bg] < best:
                    best = buf_bg[p_bg]
                    bk = EV_BG
                if p_r1 < n_r1 and buf_r1[p_r1] < best:
                    best = buf_r1[p_r1]
                    bk = EV_REC1
                if p_rx < n_rx and buf_rx[p_rx] < best:
                    best = buf_rx[p_rx]
                    bk = EV_RECX
                for j in range(nd):
                    if p_ar[j] < n_ar[j] and buf_ar[j][p_ar[j]] < best:
                        best = buf_ar[j][p_ar[j]]
                        bk = EV_ARROW
                        bj = j
                o = base + e
                st[o] = best
                sk[o] = bk
                if bk == EV_BG:
                    sd[o] = -1
                    sm[o] = buf_mk[p_bg]
                    p_bg += 1
                elif bk == EV_REC1:
                    sd[o] = -1
                    sm[o] = np.nan
                    p_r1 += 1
                elif bk == EV_RECX:
                    sd[o] = -1
                    sm[o] = np.nan
                    p_rx += 1
                else:
                    sd[o] = bj
                    sm[o] = np.nan
                    p_ar[bj] += 1
            site_n[s] = total

        if overflow:
            mult *= 2.0
            continue

        # global heap merge, keyed (time, site index)
        E = 0
        for s in range(n_sites):
            E += site_n[s]
        gt = np.empty(E, np.float64)
        gs = np.empty(E, np.int32)
        gk = np.empty(E, np.int8)
        gd = np.empty(E, np.int8)
        gm = np.empty(E, np.float64)

        heap_t = np.empty(n_sites, np.float64)
        heap_s = np.empty(n_sites, np.int32)
        ptr = np.zeros(n_sites, np.int64)
        hn = 0
        for s in range(n_sites):
            if site_n[s] > 0:
                t = st[s * site_cap]
                i = hn
                hn += 1
                while i > 0:
                    par = (i - 1) // 2
                    if heap_t[par] > t or (heap_t[par] == t and heap_s[par] > s):
                        heap_t[i] = heap_t[par]
                        heap_s[i] = heap_s[par]
                        i = par
                    else:
                        break
                heap_t[i] = t
                heap_s[i] = s

        for e in range(E):
            s = heap_s[0]
            o = s * site_cap + ptr[s]
            gt[e] = st[o]
            gs[e] = s
            gk[e] = sk[o]
            gd[e] = sd[o]
            gm[e] = sm[o]
            ptr[s] += 1
            if ptr[s] < site_n[s]:
                nt = st[s * site_cap + ptr[s]]
                ns = s
            else:
                hn -= 1
                if hn == 0:
                    break
                nt = heap_t[hn]
                ns = heap_s[hn]
            # sift down
            i = 0
            while True:
                lc = 2 * i + 1
                if lc >= hn:
                    break
                rc = lc + 1
                c = lc
                if rc < hn and (heap_t[rc] < heap_t[lc] or (heap_t[rc] == heap_t[lc] and heap_s[rc] < heap_s[lc])):
                    c = rc
                if heap_t[c] < nt or (heap_t[c] == nt and heap_s[c] < ns):
                    heap_t[i] = heap_t[c]
                    heap_s[i] = heap_s[c]
                    i = c
                else:
                    break
            heap_t[i] = nt
            heap_s[i] = ns

        return gt, gs, gk, gd, gm


@njit(inline="always", cache=True)
def _apply(si, k, dr, mk, nbr, p, richardson, allowed, beta, eta, n_inf):
    """Apply one event to (beta, eta).

    Returns (n_inf, changed_site, which) with which codes
    0 no change, 1 background set, 2 infection added, 3 infection removed.
    """
    if k == EV_BG:
        nb = uint8(1) if mk < p else uint8(0)
        if beta[si] != nb:
            beta[si] = nb
            return n_inf, si, 1
        return n_inf, si, 0
    if k == EV_ARROW:
        y = nbr[si, dr]
        if y >= 0 and eta[si] == 1 and eta[y] == 0 and allowed[si] == 1 and allowed[y] == 1:
            eta[y] = 1
            return n_inf + 1, int32(y), 2
        return n_inf, si, 0
    if richardson == 1:
        return n_inf, si, 0
    if eta[si] == 1 and (k == EV_REC1 or beta[si] == 0):
        eta[si] = 0
        return n_inf - 1, si, 3
    return n_inf, si, 0


@njit(cache=True)
def sweep_final(gt, gs, gk, gd, gm, t_start, t_end, nbr, p, richardson, allowed,
                beta, eta, stop_on_extinct):
    """Evolve (beta, eta) in place over events in (t_start, t_end].

    Returns (has_ext, ext_time); ext_time is the first event time at
    which the infected set became empty (t_start if it started empty).
    """
    n_inf = int64(0)
    for s in range(eta.shape[0]):
        n_inf += eta[s]
    has_ext = n_inf == 0
    ext = t_start if has_ext else np.nan
    if has_ext and stop_on_extinct == 1:
        return True, ext
    i = np.searchsorted(gt, t_start, side="right")
    E = gt.shape[0]
    while i < E:
        t = gt[i]
        if t > t_end:
            break
        n_inf, _, which = _apply(gs[i], gk[i], gd[i], gm[i], nbr, p, richardson,
                                 allowed, beta, eta, n_inf)
        if which == 3 and n_inf == 0 and not has_ext:
            has_ext = True
            ext = t
            if stop_on_extinct == 1:
                return True, ext
        i += 1
    return has_ext, ext


@njit(cache=True)
def sweep_record(gt, gs, gk, gd, gm, t_start, t_end, nbr, p, richardson, allowed,
                 beta, eta, jt, jsite, jfield, jval):
    """Like sweep_final but records every state change as a delta row.

    jfield: 0 background, 1 infection. Returns (n_changes, has_ext, ext).
    """
    n_inf = int64(0)
    for s in range(eta.shape[0]):
        n_inf += eta[s]
    has_ext = n_inf == 0
    ext = t_start if has_ext else np.nan
    cnt = 0
    i = np.searchsorted(gt, t_start, side="right")
    E = gt.shape[0]
    while i < E:
        t = gt[i]
        if t > t_end:
            break
        n_inf, site, which = _apply(gs[i], gk[i], gd[i], gm[i], nbr, p, richardson,
                                    allowed, beta, eta, n_inf)
        if which != 0:
            jt[cnt] = t
            jsite[cnt] = site
            if which == 1:
                jfield[cnt] = 0
                jval[cnt] = beta[site]
            else:
                jfield[cnt] = 1
                jval[cnt] = uint8(1) if which == 2 else uint8(0)
            cnt += 1
            if which == 3 and n_inf == 0 and not has_ext:
                has_ext = True
                ext = t
        i += 1
    return cnt, has_ext, ext


@njit(cache=True)
def sweep_hit(gt, gs, gk, gd, gm, t_start, t_end, nbr, p, allowed, beta, eta, mask):
    """1 if the infected set meets `mask` at t_end, else 0 (early exit on
    extinction, which is absorbing for the infection coordinate)."""
    n_inf = int64(0)
    for s in range(eta.shape[0]):
        n_inf += eta[s]
    if n_inf == 0:
        return 0
    i = np.searchsorted(gt, t_start, side="right")
    E = gt.shape[0]
    while i < E:
        t = gt[i]
        if t > t_end:
            break
        n_inf, _, _ = _apply(gs[i], gk[i], gd[i], gm[i], nbr, p, 0, allowed,
                             beta, eta, n_inf)
        if n_inf == 0:
            return 0
        i += 1
    for s in range(eta.shape[0]):
        if eta[s] == 1 and mask[s] == 1:
            return 1
    return 0


@njit(cache=True)
def sweep_hit_curve(gt, gs, gk, gd, gm, t_start, nbr, p, allowed, beta, eta,
                    mask, q_times, out_hits):
    """Hit indicator (infected set meets mask) at each ascending query time."""
    n_inf = int64(0)
    for s in range(eta.shape[0]):
        n_inf += eta[s]
    nq = q_times.shape[0]
    qi = 0
    i = np.searchsorted(gt, t_start, side="right")
    E = gt.shape[0]
    while qi < nq:
        advance = True
        if i < E and gt[i] <= q_times[qi]:
            n_inf, _, _ = _apply(gs[i], gk[i], gd[i], gm[i], nbr, p, 0, allowed,
                                 beta, eta, n_inf)
            i += 1
            advance = False
        if advance:
            hit = uint8(0)
            if n_inf > 0:
                for s in range(eta.shape[0]):
                    if eta[s] == 1 and mask[s] == 1:
                        hit = uint8(1)
                        break
            out_hits[qi] = hit
            qi += 1


@njit(cache=True)
def sweep_multi_check(gt, gs, gk, gd, gm, t_start, t_end, nbr, ps, rich, alloweds,
                      betas, etas, pred):
    """Evolve several coupled configurations off one log, checking an exact
    pathwise predicate after every state change.

    pred 0: (beta_k, eta_k) <= (beta_{k+1}, eta_{k+1}) for all consecutive k
    pred 1: eta_2 == eta_0 | eta_1 (additivity)
    pred 2: all eta_k identical
    Returns 1 if the predicate held at every jump time, else 0.
    """
    K = betas.shape[0]
    n = betas.shape[1]
    i = np.searchsorted(gt, t_start, side="right")
    E = gt.shape[0]
    while i < E:
        t = gt[i]
        if t > t_end:
            break
        changed = False
        for c in range(K):
            _, _, which = _apply(gs[i], gk[i], gd[i], gm[i], nbr, ps[c], rich[c],
                                 alloweds[c], betas[c], etas[c], 0)
            if which != 0:
                changed = True
        if changed:
            if pred == 0:
                for c in range(K - 1):
                    for s in range(n):
                        if betas[c, s] > betas[c + 1, s] or etas[c, s] > etas[c + 1, s]:
                            return 0
            elif pred == 1:
                for s in range(n):
                    if etas[2, s] != (etas[0, s] | etas[1, s]):
                        return 0
            else:
                for c in range(1, K):
                    for s in range(n):
                        if etas[c, s] != etas[0, s]:
                            return 0
        i += 1
    return 1


@njit(cache=True)
def sweep_boundary(gt, gs, gk, gd, gm, t_end, nbr, p, interior, side_any, beta, eta,
                   rec_site, rec_time):
    """Truncated-mode sweep recording boundary reach times.

    An arrow from an infected interior site landing on a side site at time
    t <= t_end records (site, time); the landing never infects. Returns
    (n_recorded, greedy counts per site) where the greedy counter realizes
    the maximal 1-separated subset per time line (arrivals come in time
    order, so earliest-first greedy is exact).
    """
    n = beta.shape[0]
    n_inf = int64(0)
    for s in range(n):
        n_inf += eta[s]
    last = np.full(n, -1e308)
    cnt = np.zeros(n, np.int64)
    nrec = 0
    cap = rec_site.shape[0]
    i = 0
    E = gt.shape[0]
    while i < E:
        t = gt[i]
        if t > t_end:
            break
        k = gk[i]
        si = gs[i]
        if k == EV_ARROW:
            y = nbr[si, gd[i]]
            if y >= 0 and eta[si] == 1 and interior[si] == 1:
                if side_any[y] == 1:
                    if nrec < cap:
                        rec_site[nrec] = y
                        rec_time[nrec] = t
                        nrec += 1
                    if t >= last[y] + 1.0:
                        cnt[y] += 1
                        last[y] = t
                elif interior[y] == 1 and eta[y] == 0:
                    eta[y] = 1
                    n_inf += 1
        else:
            n_inf, _, _ = _apply(si, k, gd[i], gm[i], nbr, p, 0, interior, beta, eta, n_inf)
        i += 1
    return nrec, cnt


@njit(inline="always", cache=True)
def _covered_target(eta, targets, start_row):
    """First target row >= start_row whose block is fully infected, or -1."""
    nt = targets.shape[0]
    bs = targets.shape[1]
    for r in range(start_row, nt):
        ok = True
        for c in range(bs):
            if eta[targets[r, c]] == 0:
                ok = False
                break
        if ok:
            return r
    return -1


@njit(cache=True)
def sweep_coverage(gt, gs, gk, gd, gm, t_start, t_end, nbr, p, mask_times, masks,
                   targets, win_lo, win_hi, check_end, beta, eta):
    """Region-confined sweep detecting full coverage of a target translate.

    masks[j] is the allowed-site mask on the j-th time interval (interval
    boundaries in mask_times, strictly increasing, within (t_start, t_end]);
    crossing a boundary kills infection outside the new mask. Coverage of
    any `targets` row is tested at the window entry time win_lo, after each
    infection added at a time in [win_lo, win_hi), and at t_end when
    check_end is set. Returns (found, target_row, time); target_row scans
    in row order so the first (deterministic-order) witness is reported.
    """
    n = eta.shape[0]
    m = mask_times.shape[0]
    mi = 0
    n_inf = int64(0)
    for s in range(n):
        n_inf += eta[s]
    entry_pending = win_lo <= t_end
    i = np.searchsorted(gt, t_start, side="right")
    E = gt.shape[0]
    while True:
        t_next = _INF
        if i < E:
            t_next = gt[i]
        if t_next > t_end:
            t_next = _INF

        # virtual items (mask boundaries, window entry) before the next event
        while True:
            nb = mask_times[mi] if mi < m else _INF
            ne = win_lo if entry_pending else _INF
            if nb <= ne:
                if nb <= t_next and nb <= t_end:
                    mi += 1
                    for s in range(n):
                        if eta[s] == 1 and masks[mi, s] == 0:
                            eta[s] = 0
                            n_inf -= 1
                    continue
            elif ne < t_next:
                entry_pending = False
                r = _covered_target(eta, targets, 0)
                if r >= 0:
                    return 1, r, win_lo
                continue
            break

        if t_next == _INF:
            break
        n_inf, _, which = _apply(gs[i], gk[i], gd[i], gm[i], nbr, p, 0, masks[mi],
                                 beta, eta, n_inf)
        if which == 2 and t_next >= win_lo and t_next < win_hi:
            r = _covered_target(eta, targets, 0)
            if r >= 0:
                return 1, r, t_next
        i += 1

    if check_end == 1:
        r = _covered_target(eta, targets, 0)
        if r >= 0:
            return 1, r, t_end
    return 0, -1, np.nan


# ----------------------------------------------------------------------
# replicate-chunk kernels for the estimators
# ----------------------------------------------------------------------

@njit(inline="always", cache=True)
def _sample_background(rep_seed, n, bg_law, bg_q, bg_bits, beta):
    """Fill beta per the initial law; matches background.sample_initial."""
    if bg_law == 0:
        for s in range(n):
            beta[s] = 0
    elif bg_law == 1:
        for s in range(n):
            beta[s] = 1
    elif bg_law == 3:
        for s in range(n):
            beta[s] = bg_bits[s]
    else:
        k0 = seed_word(rep_seed)
        k1 = mix64(uint64(INIT_BG_TAG) * _GOLDEN ^ uint64(0x6A09E667F3BCC909))
        ctr = uint64(0)
        s = 0
        while s < n:
            ctr += uint64(1)
            b0, b1, b2, b3 = philox_block(ctr, uint64(0), uint64(0), uint64(0), k0, k1)
            beta[s] = uint8(1) if u64_to_unit(b0) < bg_q else uint8(0)
            if s + 1 < n:
                beta[s + 1] = uint8(1) if u64_to_unit(b1) < bg_q else uint8(0)
            if s + 2 < n:
                beta[s + 2] = uint8(1) if u64_to_unit(b2) < bg_q else uint8(0)
            if s + 3 < n:
                beta[s + 3] = uint8(1) if u64_to_unit(b3) < bg_q else uint8(0)
            s += 4
    return beta


@njit(cache=True)
def chunk_hit(master, lo, hi, coords, nbr, allowed, gamma, delta1, deltax, p,
              horizon, t_end, bg_law, bg_q, bg_bits, eta0, mask):
    """Count replicates whose infected set meets `mask` at t_end."""
    n = coords.shape[0]
    beta = np.empty(n, np.uint8)
    eta = np.empty(n, np.uint8)
    count = int64(0)
    for r in range(lo, hi):
        rs = derive1(master, r)
        gt, gs, gk, gd, gm = gen_log(rs, coords, gamma, delta1, deltax, horizon)
        _sample_background(rs, n, bg_law, bg_q, bg_bits, beta)
        for s in range(n):
            eta[s] = eta0[s]
        count += sweep_hit(gt, gs, gk, gd, gm, 0.0, t_end, nbr, p, allowed,
                           beta, eta, mask)
    return count


@njit(cache=True)
def chunk_hit_curve(master, lo, hi, coords, nbr, allowed, gamma, delta1, deltax, p,
                    horizon, bg_law, bg_q, bg_bits, eta0, mask, q_times):
    """Per-query-time counts of replicates whose infected set meets mask."""
    n = coords.shape[0]
    nq = q_times.shape[0]
    beta = np.empty(n, np.uint8)
    eta = np.empty(n, np.uint8)
    hits = np.empty(nq, np.uint8)
    counts = np.zeros(nq, np.int64)
    for r in range(lo, hi):
        rs = derive1(master, r)
        gt, gs, gk, gd, gm = gen_log(rs, coords, gamma, delta1, deltax, horizon)
        _sample_background(rs, n, bg_law, bg_q, bg_bits, beta)
        for s in range(n):
            eta[s] = eta0[s]
        sweep_hit_curve(gt, gs, gk, gd, gm, 0.0, nbr, p, allowed, beta, eta,
                        mask, q_times, hits)
        for q in range(nq):
            counts[q] += hits[q]
    return counts


@njit(cache=True)
def chunk_scan(master, lo, hi, coords, nbr, allowed, gamma, delta1, deltax,
               horizon, p_grid, bg_law, bg_q, bg_bits, eta0):
    """Histogram of the first p-grid index at which each replicate survives.

    The marked-flip coupling makes per-replicate survival nondecreasing in
    p, so binary search over the grid returns exactly the full evaluation.
    Index G (= len(p_grid)) counts replicates that die at every grid p.
    """
    n = coords.shape[0]
    G = p_grid.shape[0]
    beta0 = np.empty(n, np.uint8)
    beta = np.empty(n, np.uint8)
    eta = np.empty(n, np.uint8)
    ones = np.ones(n, np.uint8)
    hist = np.zeros(G + 1, np.int64)
    for r in range(lo, hi):
        rs = derive1(master, r)
        gt, gs, gk, gd, gm = gen_log(rs, coords, gamma, delta1, deltax, horizon)
        _sample_background(rs, n, bg_law, bg_q, bg_bits, beta0)
        glo = 0
        ghi = G
        while glo < ghi:
            mid = (glo + ghi) // 2
            for s in range(n):
                beta[s] = beta0[s]
                eta[s] = eta0[s]
            surv = sweep_hit(gt, gs, gk, gd, gm, 0.0, horizon, nbr, p_grid[mid],
                             allowed, beta, eta, ones)
            if surv == 1:
                ghi = mid
            else:
                glo = mid + 1
        hist[glo] += 1
    return hist


@njit(cache=True)
def chunk_orthant(master, lo, hi, coords, nbr, interior, side_any, side_plus,
                  orth_mask, eta0, gamma, delta1, deltax, p, T,
                  thr_n, thr_2dn, thr_m, thr_md2d):
    """Indicator sums for the two orthant inequalities off one ensemble.

    Returns int64[6]: [I_l1, I_r1, I_l1*I_r1, I_l2, I_r2, I_l2*I_r2] sums,
    where ineq 1 compares |trunc set ∩ orthant| <= N against
    |trunc set| <= 2^d N, and ineq 2 compares N_plus <= M against
    N <= M d 2^d.
    """
    n = coords.shape[0]
    beta = np.empty(n, np.uint8)
    eta = np.empty(n, np.uint8)
    rec_site = np.empty(0, np.int32)
    rec_time = np.empty(0, np.float64)
    out = np.zeros(6, np.int64)
    for r in range(lo, hi):
        rs = derive1(master, r)
        gt, gs, gk, gd, gm = gen_log(rs, coords, gamma, delta1, deltax, T)
        for s in range(n):
            beta[s] = 0
            eta[s] = eta0[s]
        _, cnt = sweep_boundary(gt, gs, gk, gd, gm, T, nbr, p, interior, side_any,
                                beta, eta, rec_site, rec_time)
        size_full = int64(0)
        size_orth = int64(0)
        n_side = int64(0)
        n_plus = int64(0)
        for s in range(n):
            if eta[s] == 1:
                size_full += 1
                if orth_mask[s] == 1:
                    size_orth += 1
            if cnt[s] > 0:
                if side_any[s] == 1:
                    n_side += cnt[s]
                if side_plus[s] == 1:
                    n_plus += cnt[s]
        il1 = 1 if size_orth <= thr_n else 0
        ir1 = 1 if size_full <= thr_2dn else 0
        il2 = 1 if n_plus <= thr_m else 0
        ir2 = 1 if n_side <= thr_md2d else 0
        out[0] += il1
        out[1] += ir1
        out[2] += il1 * ir1
        out[3] += il2
        out[4] += ir2
        out[5] += il2 * ir2
    return out


@njit(cache=True)
def chunk_coverage(master, lo, hi, coords, nbr, gamma, delta1, deltax, p, horizon,
                   t_start, eta0, mask_times, masks, targets, win_lo, win_hi,
                   check_end):
    """Count replicates realizing the coverage event (empty background)."""
    n = coords.shape[0]
    beta = np.empty(n, np.uint8)
    eta = np.empty(n, np.uint8)
    count = int64(0)
    for r in range(lo, hi):
        rs = derive1(master, r)
        gt, gs, gk, gd, gm = gen_log(rs, coords, gamma, delta1, deltax, horizon)
        for s in range(n):
            beta[s] = 0
            eta[s] = eta0[s]
        found, _, _ = sweep_coverage(gt, gs, gk, gd, gm, t_start, horizon, nbr, p,
                                     mask_times, masks, targets, win_lo, win_hi,
                                     check_end, beta, eta)
        count += found
    return count


@njit(cache=True)
def block_event_once(seed, coords, nbr, gamma, delta1, deltax, p, horizon, t_start,
                     eta0, mask_times, masks, targets, win_lo, win_hi, check_end):
    """Single block-crossing attempt; returns (found, target_row, time)."""
    n = coords.shape[0]
    beta = np.zeros(n, np.uint8)
    eta = eta0.copy()
    gt, gs, gk, gd, gm = gen_log(seed, coords, gamma, delta1, deltax, horizon)
    return sweep_coverage(gt, gs, gk, gd, gm, t_start, horizon, nbr, p, mask_times,
                          masks, targets, win_lo, win_hi, check_end, beta, eta)


@njit(cache=True)
def chunk_containment(master, lo, hi, coords, nbr, gamma, delta1, deltax, horizon,
                      ps, rich, alloweds, betas0, etas0, pred):
    """Count replicates on which the pathwise predicate held throughout."""
    n = coords.shape[0]
    K = betas0.shape[0]
    betas = np.empty((K, n), np.uint8)
    etas = np.empty((K, n), np.uint8)
    count = int64(0)
    for r in range(lo, hi):
        rs = derive1(master, r)
        gt, gs, gk, gd, gm = gen_log(rs, coords, gamma, delta1, deltax, horizon)
        for c in range(K):
            for s in range(n):
                betas[c, s] = betas0[c, s]
                etas[c, s] = etas0[c, s]
        count += sweep_multi_check(gt, gs, gk, gd, gm, 0.0, horizon, nbr, ps, rich,
                                   alloweds, betas, etas, pred)
    return count


@njit(cache=True)
def chunk_richardson_phi(master, lo, hi, coords, nbr, gamma, delta1, deltax, p,
                         horizon, eta0, n_grid):
    """Counts, per n in n_grid, of replicates with the recovery-free spread
    contained in the background-agreement field over all t in [n, horizon].

    Containment fails at site x iff max(n, T_inf(x)) <= horizon and
    max(n, T_inf(x)) < T_bg(x), where T_inf is the first recovery-free
    infection time and T_bg the first background event at x.
    """
    n = coords.shape[0]
    eta = np.empty(n, np.uint8)
    t_inf = np.empty(n, np.float64)
    t_bg = np.empty(n, np.float64)
    counts = np.zeros(n_grid.shape[0], np.int64)
    for r in range(lo, hi):
        rs = derive1(master, r)
        gt, gs, gk, gd, gm = gen_log(rs, coords, gamma, delta1, deltax, horizon)
        for s in range(n):
            eta[s] = eta0[s]
            t_inf[s] = 0.0 if eta0[s] == 1 else _INF
            t_bg[s] = _INF
        for i in range(gt.shape[0]):
            k = gk[i]
            si = gs[i]
            if k == EV_ARROW:
                y = nbr[si, gd[i]]
                if y >= 0 and eta[si] == 1 and eta[y] == 0:
                    eta[y] = 1
                    t_inf[y] = gt[i]
            elif k == EV_BG:
                if t_bg[si] == _INF:
                    t_bg[si] = gt[i]
        for g in range(n_grid.shape[0]):
            ok = 1
            for s in range(n):
                m = t_inf[s]
                if n_grid[g] > m:
                    m = n_grid[g]
                if m <= horizon and m < t_bg[s]:
                    ok = 0
                    break
            counts[g] += ok
    return counts


@njit(cache=True)
def chunk_phi_hits(master, lo, hi, coords, gamma, t):
    """Site-pooled count of phi_t(x)=1 events (first flip arrival <= t)."""
    n = coords.shape[0]
    hits = int64(0)
    for r in range(lo, hi):
        rs = derive1(master, r)
        k0 = seed_word(rs)
        for s in range(n):
            k1 = stream_word(coords[s], K_BG_T)
            b0, b1, b2, b3 = philox_block(uint64(1), uint64(0), uint64(0), uint64(0), k0, k1)
            first = -np.log(u64_to_unit(b0)) / gamma
            if first <= t:
                hits += 1
    return hits


@njit(cache=True)
def chunk_bg_value(master, lo, hi, coords, gamma, p, t, init_bit):
    """Site-pooled count of background value 1 at time t from init_bit."""
    n = coords.shape[0]
    cap = _stream_cap(gamma, t, 1.0)
    gaps = np.empty(cap, np.float64)
    mks = np.empty(cap, np.float64)
    hits = int64(0)
    for r in range(lo, hi):
        rs = derive1(master, r)
        k0 = seed_word(rs)
        for s in range(n):
            nt = _fill_gap_times(k0, stream_word(coords[s], K_BG_T), gamma, t, gaps)
            while nt < 0:
                gaps = np.empty(gaps.shape[0] * 2, np.float64)
                mks = np.empty(gaps.shape[0], np.float64)
                nt = _fill_gap_times(k0, stream_word(coords[s], K_BG_T), gamma, t, gaps)
            val = init_bit
            if nt > 0:
                _fill_uniforms(k0, stream_word(coords[s], K_BG_M), nt, mks)
                val = 1 if mks[nt - 1] < p else 0
            hits += val
    return hits


@njit(cache=True)
def op_survive_flags(master, n_reps, p_bond, depth):
    """Per-replicate survival flags for oriented site percolation on N.

    Level l sites are open with probability p_bond from keyed uniforms, so
    two calls with the same master seed and different p_bond share the
    underlying uniforms (exact pathwise monotone coupling).
    """
    out = np.zeros(n_reps, np.uint8)
    frontier = np.zeros(depth + 2, np.uint8)
    nxt = np.zeros(depth + 2, np.uint8)
    for r in range(n_reps):
        rs = derive1(master, r)
        k0 = seed_word(rs)
        for i in range(depth + 2):
            frontier[i] = 0
        frontier[0] = 1
        alive = True
        for level in range(1, depth + 1):
            any_open = False
            for i in range(depth + 2):
                nxt[i] = 0
            for i in range(level + 1):
                parent = (i > 0 and frontier[i - 1] == 1) or frontier[i] == 1
                if parent:
                    b0, b1, b2, b3 = philox_block(uint64(level), uint64(i), uint64(0),
                                                  uint64(0), k0, uint64(0))
                    if u64_to_unit(b0) < p_bond:
                        nxt[i] = 1
                        any_open = True
            for i in range(depth + 2):
                frontier[i] = nxt[i]
            if not any_open:
                alive = False
                break
        if alive:
            out[r] = 1
    return out
