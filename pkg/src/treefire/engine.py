"""Event-driven forest-fire process on the truncated tree.

Dynamics on B_n over [0, horizon]: every vertex carries a rate-1 growth
clock and a rate-lam lightning clock (both keyed counter-based streams).
A growth arrival occupies a vacant vertex (a no-op on an occupied one);
a lightning arrival at an occupied vertex instantly burns its whole
occupied cluster; lightning on a vacant vertex is a no-op.  Simultaneous
growth and lightning resolve growth-first; vertices are processed in id
order within a timestamp.  Everything is a pure function of
(seed, trial, lam, horizon), so reruns are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .rng import StreamFamily
from .topology import TreeTopology

DEFAULT_MAX_EVENTS = 200_000_000

GROW = "GROW"
IGNITE = "IGNITE"
BURN = "BURN"
_KIND_RANK = {GROW: 0, IGNITE: 1, BURN: 2}


class EventCapExceeded(RuntimeError):
    """The run exceeded its event-count safety cap."""


class CouplingViolation(RuntimeError):
    """A supplied cluster is inconsistent with the coupled growth field."""


@dataclass
class EngineBuffers:
    """Per-vertex scratch arrays, reusable across runs of equal size."""

    arr_time: np.ndarray
    arr_idx: np.ndarray
    lastburn: np.ndarray
    visited: np.ndarray
    stack: np.ndarray
    members: np.ndarray

    @staticmethod
    def for_topology(topology: TreeTopology) -> "EngineBuffers":
        n = topology.vertex_count
        return EngineBuffers(
            arr_time=np.empty(n, dtype=np.float64),
            arr_idx=np.empty(n, dtype=np.int64),
            lastburn=np.empty(n, dtype=np.float64),
            visited=np.empty(n, dtype=np.int64),
            stack=np.empty(n, dtype=np.int64),
            members=np.empty(n, dtype=np.int64),
        )


@dataclass(frozen=True)
class FireStatistics:
    """Lightning/destruction summary over a frozen cluster up to tau_n.

    iota: time from tau_n back to the last strike inside the cluster
          (tau_n when no strike landed);
    strikes: number of strikes inside the cluster;
    strike_depth: max depth-from-boundary (n - generation) of a struck
          member, -1 if none;
    destruction_depth: max depth-from-boundary of a destroyed member, -1
          if nothing was destroyed.
    """

    iota: float
    strikes: int
    strike_depth: int
    destruction_depth: int


@dataclass
class ForestFireState:
    topology: TreeTopology
    streams: StreamFamily
    lam: float
    horizon: float
    final_occupancy: np.ndarray
    ignition_times: np.ndarray
    ignition_vertices: np.ndarray
    burn_times: np.ndarray
    burn_vertices: np.ndarray
    burn_sizes: np.ndarray
    burn_members_flat: np.ndarray | None
    burn_member_offsets: np.ndarray | None
    snapshot_time: float | None = None
    snapshot_occupancy: np.ndarray | None = None
    watch_times: np.ndarray | None = None
    watch_vertices: np.ndarray | None = None
    statistics: FireStatistics | None = None
    _gens: np.ndarray = field(default=None, repr=False)

    def burn_members(self, i: int) -> np.ndarray:
        if self.burn_members_flat is None:
            raise RuntimeError("burn membership was not recorded for this run")
        lo, hi = self.burn_member_offsets[i], self.burn_member_offsets[i + 1]
        return self.burn_members_flat[lo:hi]


def run(
    topology: TreeTopology,
    streams: StreamFamily,
    lam: float,
    horizon: float,
    *,
    record_members: bool = True,
    snapshot_time: float | None = None,
    watch_vertices=None,
    stats_cluster=None,
    stats_tau_n: float | None = None,
    max_events: int = DEFAULT_MAX_EVENTS,
    buffers: EngineBuffers | None = None,
) -> ForestFireState:
    """Simulate the forest fire on B_n over [0, horizon].

    lam = 0 is the pure-growth degenerate case.  Optional extras, all
    computed in the single pass: an occupancy snapshot at a fixed time,
    burn times of a watch set, and FireStatistics over a frozen cluster
    mask up to stats_tau_n.
    """
    if lam < 0.0:
        raise ValueError(f"lightning rate must be >= 0, got {lam}")
    if horizon < 0.0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    if snapshot_time is not None and not 0.0 <= snapshot_time <= horizon:
        raise ValueError("snapshot_time must lie in [0, horizon]")
    if (stats_cluster is None) != (stats_tau_n is None):
        raise ValueError("stats_cluster and stats_tau_n go together")

    nv = topology.vertex_count
    gens = topology.generations_array()
    if buffers is None:
        buffers = EngineBuffers.for_topology(topology)

    use_watch = watch_vertices is not None
    watch_mask = np.zeros(nv if use_watch else 1, dtype=np.uint8)
    if use_watch:
        for v in watch_vertices:
            topology._check_vertex(v)
            watch_mask[v] = 1
    watch_cap = 4096

    use_stats = stats_cluster is not None
    smask = np.zeros(nv if use_stats else 1, dtype=np.uint8)
    if use_stats:
        for v in stats_cluster:
            topology._check_vertex(v)
            smask[v] = 1

    use_snap = snapshot_time is not None
    snap_occ = np.zeros(nv if use_snap else 1, dtype=np.uint8)
    final_occ = np.zeros(nv, dtype=np.uint8)

    expected_ign = lam * nv * horizon
    ign_cap = int(expected_ign + 6.0 * math.sqrt(expected_ign + 1.0)) + 64
    memb_cap = max(4 * ign_cap, 1024) if record_members else 1

    while True:
        ign_t = np.empty(ign_cap, dtype=np.float64)
        ign_v = np.empty(ign_cap, dtype=np.int64)
        burn_t = np.empty(ign_cap, dtype=np.float64)
        burn_v = np.empty(ign_cap, dtype=np.int64)
        burn_n = np.empty(ign_cap, dtype=np.int64)
        memb_flat = np.empty(memb_cap, dtype=np.int64)
        watch_t = np.empty(watch_cap if use_watch else 1, dtype=np.float64)
        watch_v = np.empty(watch_cap if use_watch else 1, dtype=np.int64)

        (status, n_ign, n_burn, n_memb, n_watch, last_strike,
         stat_n, stat_k, stat_j, _n_events) = _kernels.sim_fire(
            topology.r, topology.depth, nv, gens,
            streams.seed, streams.trial, lam, horizon,
            buffers.arr_time, buffers.arr_idx, buffers.lastburn,
            buffers.visited, buffers.stack, buffers.members,
            ign_t, ign_v, burn_t, burn_v, burn_n,
            memb_flat, record_members,
            watch_mask, use_watch, watch_t, watch_v,
            smask, stats_tau_n if use_stats else 0.0, use_stats,
            snapshot_time if use_snap else 0.0, snap_occ, use_snap,
            final_occ, max_events,
        )
        if status == _kernels.STATUS_OK:
            break
        if status == _kernels.STATUS_EVENT_CAP:
            raise EventCapExceeded(
                f"run exceeded the event cap of {max_events}; raise max_events "
                f"or shorten the horizon"
            )
        if status == _kernels.STATUS_IGN_OVERFLOW:
            ign_cap *= 4
            memb_cap = max(memb_cap, 4 * ign_cap) if record_members else 1
        elif status == _kernels.STATUS_MEMBER_OVERFLOW:
            memb_cap *= 4
        elif status == _kernels.STATUS_WATCH_OVERFLOW:
            watch_cap *= 4
        else:  # pragma: no cover
            raise RuntimeError(f"unexpected kernel status {status}")

    stats = None
    if use_stats:
        iota = stats_tau_n - last_strike if stat_n > 0 else stats_tau_n
        stats = FireStatistics(iota, int(stat_n), int(stat_k), int(stat_j))

    offsets = None
    members_flat = None
    if record_members:
        offsets = np.zeros(n_burn + 1, dtype=np.int64)
        np.cumsum(burn_n[:n_burn], out=offsets[1:])
        members_flat = memb_flat[:n_memb].copy()

    return ForestFireState(
        topology=topology,
        streams=streams,
        lam=lam,
        horizon=horizon,
        final_occupancy=final_occ.astype(bool),
        ignition_times=ign_t[:n_ign].copy(),
        ignition_vertices=ign_v[:n_ign].copy(),
        burn_times=burn_t[:n_burn].copy(),
        burn_vertices=burn_v[:n_burn].copy(),
        burn_sizes=burn_n[:n_burn].copy(),
        burn_members_flat=members_flat,
        burn_member_offsets=offsets,
        snapshot_time=snapshot_time,
        snapshot_occupancy=snap_occ.astype(bool) if use_snap else None,
        watch_times=watch_t[:n_watch].copy() if use_watch else None,
        watch_vertices=watch_v[:n_watch].copy() if use_watch else None,
        statistics=stats,
        _gens=gens,
    )


def destruction_times(state: ForestFireState, z: int, window=None) -> np.ndarray:
    """Times at which vertex z burned, optionally restricted to (a, b]."""
    state.topology._check_vertex(z)
    if state.burn_members_flat is None:
        raise RuntimeError(
            "destruction_times requires a run with record_members=True"
        )
    out = []
    for i in range(state.burn_times.shape[0]):
        if z in state.burn_members(i):
            out.append(state.burn_times[i])
    times = np.array(out, dtype=np.float64)
    if window is not None:
        a, b = window
        times = times[(times > a) & (times <= b)]
    return times


def occupancy_at(state: ForestFireState, t: float, z: int) -> bool:
    """Occupancy of z at time t, reconstructed from the recorded events."""
    if not 0.0 <= t <= state.horizon:
        raise ValueError(f"query time {t} outside [0, {state.horizon}]")
    burns = destruction_times(state, z)
    last_burn = float(burns[burns <= t].max()) if np.any(burns <= t) else -1.0
    clock = state.streams.growth_stream(z)
    k = 1
    while True:
        a = clock.arrival(k)
        if a > t:
            return False
        if a > last_burn:
            return True
        k += 1


def event_log(state: ForestFireState) -> list[tuple[float, int, str, int]]:
    """Full event log as (time, vertex, kind, burn_size) rows.

    Growth arrivals (including no-ops on occupied vertices) are
    reconstructed from the keyed streams; ignitions and burns come from
    the recorded run.  Every BURN row directly follows its triggering
    IGNITE row at the same timestamp.  Intended for small trees: the log
    grows linearly with vertex-count * horizon.
    """
    rows: list[tuple[float, int, str, int]] = []
    for v in range(state.topology.vertex_count):
        for a in state.streams.growth_stream(v).arrivals_up_to(state.horizon):
            rows.append((a, v, GROW, 0))
    for t, v in zip(state.ignition_times, state.ignition_vertices):
        rows.append((float(t), int(v), IGNITE, 0))
    for i, (t, v, sz) in enumerate(
        zip(state.burn_times, state.burn_vertices, state.burn_sizes)
    ):
        rows.append((float(t), int(v), BURN, int(sz)))
    rows.sort(key=lambda row: (row[0], row[1], _KIND_RANK[row[2]]))
    return rows


def event_log_to_csv(state: ForestFireState, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("time,vertex,kind,burn_size\n")
        for t, v, kind, sz in event_log(state):
            fh.write(f"{t!r},{v},{kind},{sz}\n")


def fire_statistics(
    state: ForestFireState, cluster_members, tau_n: float
) -> FireStatistics:
    """Recompute FireStatistics for a frozen cluster from recorded events.

    The cluster must be the pure-growth cluster at tau_n under the same
    streams; members that are vacant in the coupled growth field at tau_n
    mean the caller mixed up seeds/trials, which is reported as a
    CouplingViolation rather than silently producing garbage.
    """
    if state.burn_members_flat is None:
        raise RuntimeError("fire_statistics requires record_members=True")
    if not 0.0 <= tau_n <= state.horizon:
        raise ValueError(f"tau_n {tau_n} outside [0, {state.horizon}]")
    members = set(int(v) for v in cluster_members)
    for v in members:
        state.topology._check_vertex(v)
        if state.streams.growth_stream(v).arrival(1) > tau_n:
            raise CouplingViolation(
                f"vertex {v} is vacant in the coupled growth field at {tau_n}"
            )
    depth = state.topology.depth
    gens = state._gens
    strikes = 0
    last = -1.0
    kmax = -1
    for t, v in zip(state.ignition_times, state.ignition_vertices):
        if t <= tau_n and int(v) in members:
            strikes += 1
            last = max(last, float(t))
            kmax = max(kmax, depth - int(gens[int(v)]))
    jmax = -1
    for i in range(state.burn_times.shape[0]):
        if state.burn_times[i] <= tau_n:
            for w in state.burn_members(i):
                if int(w) in members:
                    jmax = max(jmax, depth - int(gens[int(w)]))
    iota = tau_n - last if strikes > 0 else tau_n
    return FireStatistics(iota, strikes, kmax, jmax)
