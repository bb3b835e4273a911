"""Stabilise-vacate-refresh percolation on the truncated tree.

Three-step construction on B_n: X is Bernoulli(p) occupancy, X* removes
every X-cluster touching generation n (the finite-volume stand-in for
infinite clusters), and Y refreshes each vertex independently with
probability delta; Z = X* or Y.  The quantity of interest is the
probability that the root's Z-cluster again reaches generation n.

Two equivalent parametrisations are supported: direct (p, delta), and a
time parametrisation (tau, eps) with p = 1 - e^{-tau} and Y = {growth
arrival in (tau, tau+eps]}, which ties the construction to the growth
field's keyed streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, analytics
from .rng import StreamFamily
from .stats import wilson_interval
from .topology import TreeTopology


@dataclass(frozen=True)
class SdpConfig:
    topology: TreeTopology
    p: float
    delta: float
    time_mode: bool = False
    tau: float = float("nan")
    eps: float = float("nan")

    @staticmethod
    def from_probabilities(topology: TreeTopology, p: float, delta: float) -> "SdpConfig":
        if not 0.0 < p < 1.0:
            raise ValueError(f"p must be in (0, 1), got {p}")
        if not 0.0 <= delta < 1.0:
            raise ValueError(f"delta must be in [0, 1), got {delta}")
        return SdpConfig(topology, p, delta)

    @staticmethod
    def from_times(topology: TreeTopology, tau: float, eps: float) -> "SdpConfig":
        if tau <= 0.0 or eps < 0.0:
            raise ValueError("need tau > 0 and eps >= 0")
        p = 1.0 - math.exp(-tau)
        delta = 1.0 - math.exp(-eps)
        return SdpConfig(topology, p, delta, True, tau, eps)


@dataclass(frozen=True)
class SdpRealization:
    config: SdpConfig
    streams: StreamFamily
    X: np.ndarray
    Xstar: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    root_x_reaches: bool
    root_z_reaches: bool


def realize(config: SdpConfig, streams: StreamFamily) -> SdpRealization:
    """Draw one (X, X*, Y, Z) realization on B_n."""
    topo = config.topology
    nv = topo.vertex_count
    starts = topo.layer_starts_array()
    X = np.empty(nv, dtype=np.uint8)
    Y = np.empty(nv, dtype=np.uint8)
    Xstar = np.empty(nv, dtype=np.uint8)
    Z = np.empty(nv, dtype=np.uint8)
    reach = np.empty(nv, dtype=np.uint8)
    xr, zr = _kernels.sdp_realize(
        topo.r, topo.depth, nv, starts, streams.seed, streams.trial,
        config.p, config.delta, config.time_mode, config.tau, config.eps,
        X, Y, Xstar, Z, reach,
    )
    return SdpRealization(config, streams, X, Xstar, Y, Z, bool(xr), bool(zr))


@dataclass(frozen=True)
class ThetaEstimate:
    config: SdpConfig
    trials: int
    hits: int

    @property
    def estimate(self) -> float:
        return self.hits / self.trials

    def wilson(self, z: float = 1.96) -> tuple[float, float]:
        return wilson_interval(self.hits, self.trials, z)


def estimate_theta(config: SdpConfig, seed: int, trials: int, trial0: int = 0) -> ThetaEstimate:
    """Monte Carlo estimate of P[root's Z-cluster reaches generation n].

    Trials index the keyed streams directly, so estimates at different
    (p, delta) with the same seed/trial range share their underlying
    uniforms: comparisons are pathwise-monotone where the construction is.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    topo = config.topology
    nv = topo.vertex_count
    starts = topo.layer_starts_array()
    X = np.empty(nv, dtype=np.uint8)
    Y = np.empty(nv, dtype=np.uint8)
    Xstar = np.empty(nv, dtype=np.uint8)
    Z = np.empty(nv, dtype=np.uint8)
    reach = np.empty(nv, dtype=np.uint8)
    hits = _kernels.sdp_root_reach_mc(
        topo.r, topo.depth, nv, starts, seed, trial0, trials,
        config.p, config.delta, config.time_mode, config.tau, config.eps,
        X, Y, Xstar, Z, reach,
    )
    return ThetaEstimate(config, trials, int(hits))


def critical_delta_threshold(r: int, p: float) -> float:
    """Sufficient refresh threshold from the recovery bound at r = 2.

    For r = 2 and p >= 1/2, any delta <= 1 - p_c/p keeps the refreshed
    configuration subcritical (theta(p, delta) = 0); the returned value is
    that bound, 1 - 1/(2p).
    """
    if r != 2:
        raise ValueError(
            "the closed-form recovery threshold is only established for r=2; "
            "for r>=3 only existence of a positive threshold is known"
        )
    if p < 0.5:
        return 1.0  # already subcritical, every delta works
    return 1.0 - analytics.critical_probability(r) / p


@dataclass(frozen=True)
class DeltaScanRow:
    p: float
    delta: float
    depth: int
    trials: int
    hits: int
    estimate: float
    ci_low: float
    ci_high: float
    zero_indistinguishable: bool


@dataclass(frozen=True)
class DeltaScanResult:
    rows: list[DeltaScanRow]
    extrapolated: dict  # (p, delta) -> Aitken-extrapolated limit (heuristic)
    critical_delta: dict  # (p, depth) -> largest zero-indistinguishable delta


def critical_delta_scan(
    r: int,
    p: float,
    deltas,
    depths,
    seed: int,
    trials: int,
) -> DeltaScanResult:
    """Scan theta(p, delta) estimates over a delta grid and depths.

    A (delta, depth) cell is flagged zero-indistinguishable when its
    estimate is within three binomial standard errors of zero.  The
    extrapolated n -> infinity limits use Aitken's delta-squared on the
    last three depths and are a labelled heuristic, not a guarantee.
    """
    deltas = sorted(set(float(d) for d in deltas), reverse=True)
    depths = sorted(set(int(n) for n in depths))
    rows = []
    by_delta: dict[float, list[float]] = {d: [] for d in deltas}
    for n in depths:
        topo = TreeTopology(r, n)
        for d in deltas:
            cfg = SdpConfig.from_probabilities(topo, p, d)
            est = estimate_theta(cfg, seed, trials)
            lo, hi = est.wilson()
            se = math.sqrt(max(est.estimate * (1 - est.estimate), 1e-12) / trials)
            rows.append(
                DeltaScanRow(
                    p, d, n, trials, est.hits, est.estimate, lo, hi,
                    est.estimate <= 3.0 * se,
                )
            )
            by_delta[d].append(est.estimate)

    extrapolated = {}
    if len(depths) >= 3:
        for d, vals in by_delta.items():
            e1, e2, e3 = vals[-3], vals[-2], vals[-1]
            denom = (e1 - e2) - (e2 - e3)
            if abs(denom) > 1e-12:
                extrapolated[(p, d)] = e3 - (e2 - e3) ** 2 / denom
            else:
                extrapolated[(p, d)] = e3

    critical = {}
    for n in depths:
        flagged = [
            row.delta for row in rows if row.depth == n and row.zero_indistinguishable
        ]
        critical[(p, n)] = max(flagged) if flagged else 0.0

    return DeltaScanResult(rows, extrapolated, critical)
