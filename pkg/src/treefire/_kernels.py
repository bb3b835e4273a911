"""Numba kernels shared by the growth field, fire engine and experiments.

All randomness is counter-based: a draw is a pure function of the key
(seed, trial, vertex, kind, index) hashed through chained splitmix64
finalizers.  The same keyed draws back every code path (pure-growth
snapshots, the event-driven fire simulation, percolation exploration),
which is what makes the monotone coupling exact.
"""

from __future__ import annotations

import numpy as np
from numba import njit

U64 = np.uint64

KIND_GROWTH = 0
KIND_IGNITION = 1
KIND_REFRESH = 2

# Simulation core return statuses.
STATUS_OK = 0
STATUS_IGN_OVERFLOW = 1
STATUS_WATCH_OVERFLOW = 2
STATUS_MEMBER_OVERFLOW = 3
STATUS_EVENT_CAP = 4

_GOLD = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53


@njit(cache=True, inline="always")
def _mix(x):
    x = x + _GOLD
    x ^= x >> U64(30)
    x *= _MIX1
    x ^= x >> U64(27)
    x *= _MIX2
    x ^= x >> U64(31)
    return x


@njit(cache=True, inline="always")
def _u01(seed, trial, vertex, kind, index):
    """Uniform in (0, 1), a pure function of the 5-component key."""
    h = _mix(U64(seed))
    h = _mix(h ^ U64(trial))
    h = _mix(h ^ U64(vertex))
    h = _mix(h ^ U64(kind))
    h = _mix(h ^ U64(index))
    return (np.float64(h >> U64(11)) + 0.5) * _INV53


@njit(cache=True, inline="always")
def _exp_gap(seed, trial, vertex, kind, index):
    """Unit-rate exponential gap from the keyed uniform (inverse CDF)."""
    return -np.log(_u01(seed, trial, vertex, kind, index))


@njit(cache=True)
def uniform_batch(seed, trial, vertices, kind, index, out):
    for i in range(vertices.shape[0]):
        out[i] = _u01(seed, trial, vertices[i], kind, index)


@njit(cache=True, nogil=True)
def first_growth_arrivals(seed, trial, n_vertices, out):
    """First growth-arrival time per vertex (vertices 0..n_vertices-1)."""
    for v in range(n_vertices):
        out[v] = _exp_gap(seed, trial, v, KIND_GROWTH, 1)


@njit(cache=True, nogil=True)
def growth_cluster(r, depth, seed, trial, t, x, visited, serial, stack, members):
    """Pure-growth cluster of x at time t on B_depth.

    Collects member vertices into `members`; returns (size, touches) where
    `touches` is 1 when the cluster reaches generation `depth`.  `visited`
    is an int64 scratch array holding the caller-managed serial marks.
    size == 0 means x is vacant at time t.
    """
    if _exp_gap(seed, trial, x, KIND_GROWTH, 1) > t:
        return 0, 0
    last_start = ((r ** depth) - 1) // (r - 1)
    touches = 0
    sp = 0
    stack[sp] = x
    sp += 1
    visited[x] = serial
    m = 0
    while sp > 0:
        sp -= 1
        w = stack[sp]
        members[m] = w
        m += 1
        if w >= last_start:
            touches = 1
        else:
            base = r * w
            for c in range(1, r + 1):
                u = base + c
                if visited[u] != serial:
                    if _exp_gap(seed, trial, u, KIND_GROWTH, 1) <= t:
                        visited[u] = serial
                        stack[sp] = u
                        sp += 1
        if w > 0:
            pu = (w - 1) // r
            if visited[pu] != serial:
                if _exp_gap(seed, trial, pu, KIND_GROWTH, 1) <= t:
                    visited[pu] = serial
                    stack[sp] = pu
                    sp += 1
    return m, touches


@njit(cache=True, nogil=True)
def root_cluster_explore(seed, trial, r, depth, t, stack, early_exit):
    """Explore the root's pure-growth cluster without per-vertex arrays.

    The root's cluster only extends downward, so no visited marks are
    needed and the tree may be far larger than memory (labels stay below
    2^63).  Returns (size, touches).  With early_exit the walk stops at
    the first boundary vertex and the size is only a lower bound.
    """
    if _exp_gap(seed, trial, 0, KIND_GROWTH, 1) > t:
        return 0, 0
    last_start = ((r ** depth) - 1) // (r - 1)
    sp = 0
    stack[sp] = 0
    sp += 1
    size = 0
    touches = 0
    while sp > 0:
        sp -= 1
        w = stack[sp]
        size += 1
        if w >= last_start:
            touches = 1
            if early_exit:
                return size, 1
        else:
            base = r * w
            for c in range(1, r + 1):
                u = base + c
                if _exp_gap(seed, trial, u, KIND_GROWTH, 1) <= t:
                    stack[sp] = u
                    sp += 1
    return size, touches


@njit(cache=True, nogil=True)
def root_reach_mc(seed, trial0, trials, r, depth, t, stack):
    """Count trials whose root cluster reaches generation `depth`."""
    hits = 0
    for i in range(trials):
        _, touch = root_cluster_explore(seed, trial0 + i, r, depth, t, stack, True)
        hits += touch
    return hits


@njit(cache=True, nogil=True)
def root_cluster_sizes_mc(seed, trial0, trials, r, depth, t, stack, sizes, touches):
    for i in range(trials):
        s, touch = root_cluster_explore(seed, trial0 + i, r, depth, t, stack, False)
        sizes[i] = s
        touches[i] = touch


@njit(cache=True, inline="always")
def _advance(seed, trial, v, arr_time, arr_idx, lastburn):
    """Move v's growth pointer to the first arrival after its last burn."""
    while arr_time[v] <= lastburn[v]:
        arr_idx[v] += 1
        arr_time[v] += _exp_gap(seed, trial, v, KIND_GROWTH, arr_idx[v])


@njit(cache=True, nogil=True)
def sim_fire(
    r,
    depth,
    n_vertices,
    gens,
    seed,
    trial,
    lam,
    horizon,
    # per-vertex scratch buffers (reused across trials by the caller)
    arr_time,
    arr_idx,
    lastburn,
    visited,
    stack,
    members,
    # ignition event output
    ign_t,
    ign_v,
    # burn event output
    burn_t,
    burn_v,
    burn_n,
    # flattened burn membership (only filled when record_members)
    memb_flat,
    record_members,
    # destruction watch list
    watch_mask,
    use_watch,
    watch_t,
    watch_v,
    # scaling statistics over a frozen target cluster
    smask,
    tau_n,
    use_stats,
    # occupancy snapshot at a fixed time
    snap_time,
    snap_occ,
    use_snap,
    # final occupancy at the horizon
    final_occ,
    max_events,
):
    """Event-driven forest fire on B_depth over [0, horizon].

    Growth arrivals are consumed lazily per vertex: arr_time[v] always
    holds the first arrival strictly after lastburn[v], so occupancy at
    time s is simply arr_time[v] <= s.  Only ignition events are
    materialised; they are generated per vertex, sorted by (time, vertex)
    and processed in order.  A growth arrival and an ignition sharing a
    timestamp resolve growth-first (the <= in the occupancy test).

    Returns (status, n_ign, n_burn, n_memb, n_watch, last_strike, N, K, J,
    n_events).  With use_stats, (last_strike, N, K, J) summarise lightning
    and destruction inside the masked cluster up to tau_n: N strikes, the
    last strike time (-1.0 if none), K/J the maximal depth-from-boundary
    of a struck / destroyed masked vertex (-1 if none).
    """
    for v in range(n_vertices):
        arr_time[v] = _exp_gap(seed, trial, v, KIND_GROWTH, 1)
        arr_idx[v] = 1
        lastburn[v] = -1.0
        visited[v] = -1

    # Enumerate ignition arrivals up to the horizon.
    n_ign = 0
    cap_ign = ign_t.shape[0]
    if lam > 0.0:
        inv = 1.0 / lam
        for v in range(n_vertices):
            k = 1
            t = _exp_gap(seed, trial, v, KIND_IGNITION, 1) * inv
            while t <= horizon:
                if n_ign >= cap_ign:
                    return (STATUS_IGN_OVERFLOW, n_ign, 0, 0, 0, -1.0, 0, -1, -1, 0)
                ign_t[n_ign] = t
                ign_v[n_ign] = v
                n_ign += 1
                k += 1
                t += _exp_gap(seed, trial, v, KIND_IGNITION, k) * inv

    # Sort by time; break exact ties by vertex id (insertion over the run).
    order = np.argsort(ign_t[:n_ign])
    st = ign_t[:n_ign][order]
    sv = ign_v[:n_ign][order]
    i = 0
    while i + 1 < n_ign:
        if st[i + 1] == st[i]:
            j = i + 1
            while j < n_ign and st[j] == st[i]:
                j += 1
            for a in range(i + 1, j):
                key = sv[a]
                b = a - 1
                while b >= i and sv[b] > key:
                    sv[b + 1] = sv[b]
                    b -= 1
                sv[b + 1] = key
            i = j
        else:
            i += 1
    for i in range(n_ign):
        ign_t[i] = st[i]
        ign_v[i] = sv[i]

    n_burn = 0
    n_memb = 0
    n_watch = 0
    last_strike = -1.0
    stat_n = 0
    stat_k = -1
    stat_j = -1
    snapped = False
    serial = 0
    n_events = n_ign
    if n_events > max_events:
        return (STATUS_EVENT_CAP, n_ign, 0, 0, 0, -1.0, 0, -1, -1, n_events)

    for ei in range(n_ign):
        s = ign_t[ei]
        z = ign_v[ei]
        if use_snap and (not snapped) and s > snap_time:
            for v in range(n_vertices):
                _advance(seed, trial, v, arr_time, arr_idx, lastburn)
                snap_occ[v] = 1 if arr_time[v] <= snap_time else 0
            snapped = True
        if use_stats and s <= tau_n and smask[z] == 1:
            stat_n += 1
            last_strike = s
            dk = depth - gens[z]
            if dk > stat_k:
                stat_k = dk
        _advance(seed, trial, z, arr_time, arr_idx, lastburn)
        if arr_time[z] <= s:
            # Instantaneous burn of the occupied cluster of z.
            serial += 1
            sp = 0
            stack[sp] = z
            sp += 1
            visited[z] = serial
            m = 0
            while sp > 0:
                sp -= 1
                w = stack[sp]
                members[m] = w
                m += 1
                if w > 0:
                    pu = (w - 1) // r
                    if visited[pu] != serial:
                        _advance(seed, trial, pu, arr_time, arr_idx, lastburn)
                        if arr_time[pu] <= s:
                            visited[pu] = serial
                            stack[sp] = pu
                            sp += 1
                if gens[w] < depth:
                    base = r * w
                    for c in range(1, r + 1):
                        u = base + c
                        if visited[u] != serial:
                            _advance(seed, trial, u, arr_time, arr_idx, lastburn)
                            if arr_time[u] <= s:
                                visited[u] = serial
                                stack[sp] = u
                                sp += 1
            for ii in range(m):
                w = members[ii]
                lastburn[w] = s
                if use_stats and s <= tau_n and smask[w] == 1:
                    dj = depth - gens[w]
                    if dj > stat_j:
                        stat_j = dj
                if use_watch and watch_mask[w] == 1:
                    if n_watch >= watch_t.shape[0]:
                        return (STATUS_WATCH_OVERFLOW, n_ign, n_burn, n_memb,
                                n_watch, last_strike, stat_n, stat_k, stat_j,
                                n_events)
                    watch_t[n_watch] = s
                    watch_v[n_watch] = w
                    n_watch += 1
                if record_members:
                    if n_memb >= memb_flat.shape[0]:
                        return (STATUS_MEMBER_OVERFLOW, n_ign, n_burn, n_memb,
                                n_watch, last_strike, stat_n, stat_k, stat_j,
                                n_events)
                    memb_flat[n_memb] = w
                    n_memb += 1
            if n_burn >= burn_t.shape[0]:
                return (STATUS_IGN_OVERFLOW, n_ign, n_burn, n_memb, n_watch,
                        last_strike, stat_n, stat_k, stat_j, n_events)
            burn_t[n_burn] = s
            burn_v[n_burn] = z
            burn_n[n_burn] = m
            n_burn += 1
            n_events += m
            if n_events > max_events:
                return (STATUS_EVENT_CAP, n_ign, n_burn, n_memb, n_watch,
                        last_strike, stat_n, stat_k, stat_j, n_events)

    if use_snap and not snapped:
        for v in range(n_vertices):
            _advance(seed, trial, v, arr_time, arr_idx, lastburn)
            snap_occ[v] = 1 if arr_time[v] <= snap_time else 0
    for v in range(n_vertices):
        _advance(seed, trial, v, arr_time, arr_idx, lastburn)
        final_occ[v] = 1 if arr_time[v] <= horizon else 0

    return (STATUS_OK, n_ign, n_burn, n_memb, n_watch, last_strike,
            stat_n, stat_k, stat_j, n_events)


@njit(cache=True, nogil=True)
def masked_cluster(r, depth, occ, x, visited, serial, stack, members):
    """Cluster of x in the 0/1 occupancy array `occ`; returns its size."""
    if occ[x] == 0:
        return 0
    sp = 0
    stack[sp] = x
    sp += 1
    visited[x] = serial
    m = 0
    last_start = ((r ** depth) - 1) // (r - 1)
    while sp > 0:
        sp -= 1
        w = stack[sp]
        members[m] = w
        m += 1
        if w > 0:
            pu = (w - 1) // r
            if visited[pu] != serial and occ[pu] == 1:
                visited[pu] = serial
                stack[sp] = pu
                sp += 1
        if w < last_start:
            base = r * w
            for c in range(1, r + 1):
                u = base + c
                if visited[u] != serial and occ[u] == 1:
                    visited[u] = serial
                    stack[sp] = u
                    sp += 1
    return m


@njit(cache=True, nogil=True)
def sdp_realize(
    r,
    depth,
    n_vertices,
    starts,
    seed,
    trial,
    p,
    delta,
    time_mode,
    tau,
    eps,
    X,
    Y,
    Xstar,
    Z,
    reach,
):
    """One stabilise-vacate-refresh realization on B_depth.

    X is Bernoulli(p) occupancy read off the growth first arrivals (so it
    is exactly the pure-growth snapshot at time tau = -log(1-p)).  X*
    vacates every X-cluster touching generation `depth` (the finite-volume
    proxy for infinite clusters).  Y is the refresh field: Bernoulli(delta)
    from an independent stream kind, or, in time mode, the indicator of a
    growth arrival in (tau, tau+eps].  Z = X* or Y.

    Returns (x_root_reach, z_root_reach): whether the root's X-cluster /
    Z-cluster touches generation `depth`.
    """
    ethr = 1.0 - p  # first arrival <= tau  <=>  u >= e^{-tau} = 1 - p
    for v in range(n_vertices):
        X[v] = 1 if _u01(seed, trial, v, KIND_GROWTH, 1) >= ethr else 0

    if time_mode:
        for v in range(n_vertices):
            k = 1
            t = _exp_gap(seed, trial, v, KIND_GROWTH, 1)
            while t <= tau:
                k += 1
                t += _exp_gap(seed, trial, v, KIND_GROWTH, k)
            Y[v] = 1 if t <= tau + eps else 0
    else:
        for v in range(n_vertices):
            Y[v] = 1 if _u01(seed, trial, v, KIND_REFRESH, 1) < delta else 0

    # Bottom-up: reach[v] = X-cluster path from v down to generation depth.
    for v in range(starts[depth], n_vertices):
        reach[v] = X[v]
    for g in range(depth - 1, -1, -1):
        for v in range(starts[g], starts[g + 1]):
            rr = 0
            if X[v] == 1:
                base = r * v
                for c in range(1, r + 1):
                    if reach[base + c] == 1:
                        rr = 1
                        break
            reach[v] = rr
    x_root_reach = reach[0]

    # Top-down: does v's whole X-cluster touch the boundary?  Stored in
    # Xstar temporarily; a cluster touches iff the member or any ancestor
    # along the occupied path has downward reach.
    Xstar[0] = reach[0]
    for g in range(1, depth + 1):
        for v in range(starts[g], starts[g + 1]):
            if X[v] == 1:
                tch = reach[v]
                if tch == 0:
                    pu = (v - 1) // r
                    if X[pu] == 1 and Xstar[pu] == 1:
                        tch = 1
                Xstar[v] = tch
            else:
                Xstar[v] = 0
    for v in range(n_vertices):
        Xstar[v] = 1 if (X[v] == 1 and Xstar[v] == 0) else 0

    for v in range(n_vertices):
        Z[v] = 1 if (Xstar[v] == 1 or Y[v] == 1) else 0

    for v in range(starts[depth], n_vertices):
        reach[v] = Z[v]
    for g in range(depth - 1, -1, -1):
        for v in range(starts[g], starts[g + 1]):
            rr = 0
            if Z[v] == 1:
                base = r * v
                for c in range(1, r + 1):
                    if reach[base + c] == 1:
                        rr = 1
                        break
            reach[v] = rr
    z_root_reach = reach[0]
    return x_root_reach, z_root_reach


@njit(cache=True, nogil=True)
def sdp_root_reach_mc(r, depth, n_vertices, starts, seed, trial0, trials,
                      p, delta, time_mode, tau, eps,
                      X, Y, Xstar, Z, reach):
    """Monte Carlo count of trials whose root Z-cluster touches the boundary."""
    hits = 0
    for i in range(trials):
        _, zr = sdp_realize(r, depth, n_vertices, starts, seed, trial0 + i,
                            p, delta, time_mode, tau, eps, X, Y, Xstar, Z, reach)
        hits += zr
    return hits
