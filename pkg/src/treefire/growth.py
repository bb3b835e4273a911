"""Pure-growth occupancy field on the truncated tree.

The field at time t occupies each vertex independently with probability
1 - e^{-t}, realised as {first growth arrival <= t} on the keyed GROWTH
streams.  Because the forest-fire engine consumes the same streams, the
snapshot here is the exact pointwise upper coupling of the fire process.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels, analytics
from .rng import StreamFamily
from .topology import TreeTopology


@dataclass(frozen=True)
class GrowthSnapshot:
    topology: TreeTopology
    streams: StreamFamily
    t: float
    occupied: np.ndarray  # bool, one entry per vertex


def snapshot(topology: TreeTopology, streams: StreamFamily, t: float) -> GrowthSnapshot:
    """Occupancy of every vertex of B_n at time t."""
    if t < 0.0:
        raise ValueError(f"time must be >= 0, got {t}")
    arrivals = streams.first_growth_arrivals(topology.vertex_count)
    return GrowthSnapshot(topology, streams, t, arrivals <= t)


def is_occupied(topology: TreeTopology, streams: StreamFamily, t: float, v: int) -> bool:
    """Occupancy of a single vertex without materialising the field."""
    topology._check_vertex(v)
    return streams.growth_stream(v).arrival(1) <= t


def cluster_of(snap: GrowthSnapshot, x: int) -> np.ndarray:
    """Vertices of the occupied cluster containing x (empty if x vacant)."""
    topo = snap.topology
    topo._check_vertex(x)
    if not snap.occupied[x]:
        return np.empty(0, dtype=np.int64)
    occ = snap.occupied.view(np.uint8)
    visited = np.full(topo.vertex_count, -1, dtype=np.int64)
    stack = np.empty(topo.vertex_count, dtype=np.int64)
    members = np.empty(topo.vertex_count, dtype=np.int64)
    size = _kernels.masked_cluster(topo.r, topo.depth, occ, x, visited, 0, stack, members)
    out = members[:size].copy()
    out.sort()
    return out


def infinite_proxy(snap: GrowthSnapshot, x: int) -> bool:
    """Finite-volume stand-in for {cluster of x is infinite}.

    True when the cluster of x inside B_n reaches generation n.  This is
    an upward-biased proxy: boundary-touching clusters need not extend to
    an infinite cluster of the full tree.
    """
    topo = snap.topology
    members = cluster_of(snap, x)
    if members.size == 0:
        return False
    return bool(members[-1] >= topo.layer_start(topo.depth))


@dataclass(frozen=True)
class ClusterScalingEstimate:
    """Monte Carlo samples of |S^n_{t,x}| / m(t)^n for x = root."""

    r: int
    depth: int
    t: float
    trials: int
    sizes: np.ndarray       # raw cluster sizes, one per trial
    touches: np.ndarray     # boundary-reach indicator per trial
    ratios: np.ndarray      # sizes / m(t)^n

    @property
    def mean_ratio(self) -> float:
        return float(self.ratios.mean())

    def conditioned_ratios(self) -> np.ndarray:
        """Ratios restricted to boundary-touching trials."""
        sel = self.ratios[self.touches > 0]
        if sel.size == 0:
            raise RuntimeError(
                "conditioning event (boundary-touching cluster) never observed"
            )
        return sel


def truncated_cluster_size_samples(
    seed: int,
    r: int,
    depth: int,
    t: float,
    trials: int,
    trial0: int = 0,
) -> ClusterScalingEstimate:
    """Sample the root's pure-growth cluster size on B_depth.

    Exploration is lazy (occupancy drawn per visited vertex from the keyed
    streams), so the cost scales with the cluster, not the tree.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    m = analytics.offspring_mean(r, t)
    sizes = np.empty(trials, dtype=np.int64)
    touches = np.empty(trials, dtype=np.int64)
    stack = np.empty(1 << 22, dtype=np.int64)
    _kernels.root_cluster_sizes_mc(seed, trial0, trials, r, depth, t, stack, sizes, touches)
    ratios = sizes.astype(np.float64) / m**depth
    return ClusterScalingEstimate(r, depth, t, trials, sizes, touches, ratios)


def boundary_reach_frequency(
    seed: int, r: int, depth: int, p: float, trials: int, trial0: int = 0
) -> float:
    """Monte Carlo frequency of the root's cluster reaching generation depth.

    The occupancy density p is converted to the growth time with that
    density so the draws stay coupled to the snapshot definition.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"density must be in (0, 1), got {p}")
    t = -np.log1p(-p)
    stack = np.empty(1 << 22, dtype=np.int64)
    hits = _kernels.root_reach_mc(seed, trial0, trials, r, depth, t, stack)
    return hits / trials
