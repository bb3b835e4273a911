"""Closed-form branching-process quantities and small exact oracles.

Everything here is deterministic: the offspring mean/variance of the
pure-growth cluster, criticality constants, the percolation function on
the infinite tree, the transition-time tau_n induced by a lightning-rate
schedule, an asymptotic-regime classifier for such schedules, and an
exact CTMC oracle (uniformization) for trees of depth <= 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .topology import TreeTopology, tree_vertex_count

THETA_TOL = 1e-12
THETA_BRACKET_LO = 1e-15
THETA_MAX_ITER = 200
CTMC_TRUNCATION_ERROR = 1e-9


def offspring_mean(r: int, t: float) -> float:
    """Mean number of occupied children per occupied vertex at time t."""
    if t < 0.0:
        raise ValueError(f"time must be >= 0, got {t}")
    return r * (1.0 - math.exp(-t))


def offspring_variance(r: int, t: float) -> float:
    """Variance of the number of occupied children at time t."""
    if t < 0.0:
        raise ValueError(f"time must be >= 0, got {t}")
    q = 1.0 - math.exp(-t)
    return r * q * (1.0 - q)


def critical_time(r: int) -> float:
    """Time at which the occupancy density reaches 1/r."""
    return math.log(r / (r - 1.0))


def critical_probability(r: int) -> float:
    return 1.0 / r


def mean_inverse(r: int, y: float) -> float:
    """Inverse of t -> r(1 - e^{-t}): the time with offspring mean y."""
    if not 0.0 <= y < r:
        raise ValueError(f"offspring mean {y} outside [0, {r})")
    return math.log(r / (r - y))


def occupancy_probability(t: float) -> float:
    """Probability a fixed vertex is occupied under pure growth at time t."""
    if t < 0.0:
        raise ValueError(f"time must be >= 0, got {t}")
    return 1.0 - math.exp(-t)


def expected_truncated_cluster_size(r: int, t: float, n: int) -> float:
    """E|cluster of the root| under pure growth at time t on B_n.

    Equals (1 - e^{-t}) * sum_{i=0}^{n} m(t)^i: the root is occupied with
    probability 1 - e^{-t} and, given that, generation i of its cluster
    has mean m(t)^i.
    """
    if n < 0:
        raise ValueError(f"depth must be >= 0, got {n}")
    m = offspring_mean(r, t)
    if abs(m - 1.0) < 1e-12:
        series = float(n + 1)
    else:
        series = (m ** (n + 1) - 1.0) / (m - 1.0)
    return occupancy_probability(t) * series


def moment_bounds(r: int, t: float, n: int) -> tuple[float, float, float]:
    """(lower, upper) bounds on E|S^n|/m^n and an upper bound on E|S^n|^2/m^2n.

    Valid in the supercritical window t > t_c where m(t) > 1.
    """
    m = offspring_mean(r, t)
    if m <= 1.0:
        raise ValueError(f"moment bounds require m(t) > 1, got m={m}")
    s2 = offspring_variance(r, t)
    lower = occupancy_probability(t)
    upper = m / (m - 1.0)
    second = (s2 / (m * (m - 1.0)) + 1.0) * (m / (m - 1.0)) ** 2
    return lower, upper, second


def theta_fixed_point(r: int, p: float) -> float:
    """Percolation probability on the infinite r-ary tree at density p.

    Largest root of theta = p(1 - (1-theta)^r), found by bisection on the
    fixed bracket [1e-15, 1]; 0 below the critical density 1/r.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"density must be in [0, 1], got {p}")
    if p <= critical_probability(r):
        return 0.0

    def f(x: float) -> float:
        return p * (1.0 - (1.0 - x) ** r) - x

    lo, hi = THETA_BRACKET_LO, 1.0
    # f(lo) > 0 for p > 1/r, f(1) = p - 1 <= 0.
    for _ in range(THETA_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < THETA_TOL:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class FuncSpec:
    """A named scale function of n: const c, n^gamma, or exp(n^alpha)."""

    kind: str  # "const" | "power" | "exppow"
    param: float

    def __call__(self, n: int) -> float:
        if self.kind == "const":
            return self.param
        if self.kind == "power":
            return float(n) ** self.param
        if self.kind == "exppow":
            return math.exp(float(n) ** self.param)
        raise ValueError(f"unknown function kind {self.kind!r}")

    def label(self) -> str:
        if self.kind == "const":
            return f"const:{self.param:g}"
        if self.kind == "power":
            return f"power:{self.param:g}"
        return f"exppow:{self.param:g}"

    @staticmethod
    def parse(text: str) -> "FuncSpec":
        text = text.strip()
        if text == "sqrt":
            return FuncSpec("power", 0.5)
        if ":" in text:
            kind, _, param = text.partition(":")
            kind = kind.strip()
            if kind == "exp":
                kind = "exppow"
            if kind not in ("const", "power", "exppow"):
                raise ValueError(f"unknown function kind {kind!r}")
            return FuncSpec(kind, float(param))
        # bare number means a constant
        return FuncSpec("const", float(text))


@dataclass(frozen=True)
class LambdaSchedule:
    """Per-vertex lightning rate as a function of the truncation depth n.

    Two forms: an explicit function of n, or g(n)/m(tau)^n for a scale
    function g and a target transition time tau.
    """

    r: int
    form: str  # "direct" | "g_over_m_tau_n"
    func: FuncSpec
    tau: float = float("nan")

    @staticmethod
    def constant(r: int, value: float) -> "LambdaSchedule":
        return LambdaSchedule(r, "direct", FuncSpec("const", value))

    @staticmethod
    def from_g(r: int, tau: float, g: FuncSpec) -> "LambdaSchedule":
        if not tau > critical_time(r):
            raise ValueError(
                f"tau={tau} must exceed the critical time {critical_time(r):.6f}"
            )
        return LambdaSchedule(r, "g_over_m_tau_n", g, tau)

    def rate(self, n: int) -> float:
        if self.form == "direct":
            lam = self.func(n)
        else:
            lam = self.func(n) / offspring_mean(self.r, self.tau) ** n
        if not lam > 0.0:
            raise ValueError(f"schedule gives non-positive rate {lam} at n={n}")
        return lam

    def g_value(self, n: int) -> float:
        """g(n) = rate(n) * m(tau)^n for the g-form schedule."""
        if self.form != "g_over_m_tau_n":
            raise ValueError("g_value requires the g-form schedule")
        return self.func(n)

    def label(self) -> str:
        if self.form == "direct":
            return f"direct[{self.func.label()}]"
        return f"g[{self.func.label()}]/m({self.tau:g})^n"


def transition_time(schedule: LambdaSchedule, f: FuncSpec, n: int) -> float:
    """tau_n: the time with rate(n) * m(tau_n)^n = f(n).

    This is where the expected number of lightning hits on the root's
    pure-growth cluster reaches order f(n); destruction of large clusters
    concentrates around it.
    """
    lam = schedule.rate(n)
    fn = f(n)
    if not fn > 0.0:
        raise ValueError(f"f({n}) = {fn} must be > 0")
    y = math.exp((math.log(fn) - math.log(lam)) / n)
    if y >= schedule.r:
        raise ValueError(
            f"f(n)/rate(n) = {fn / lam:g} exceeds r^n at n={n}; no finite tau_n"
        )
    t = mean_inverse(schedule.r, y)
    check = lam * offspring_mean(schedule.r, t) ** n
    if not math.isclose(check, fn, rel_tol=1e-8):
        raise ArithmeticError(
            f"tau_n self-check failed: got {check:g}, expected {fn:g}"
        )
    return t


class Regime(Enum):
    NO_FIRE = "no_fire"
    EXPONENTIAL_INTERMEDIATE = "exponential_intermediate"
    SUBEXPONENTIAL = "subexponential"
    CONSTANT = "constant"


class AmbiguousRegime(ValueError):
    """The sampled schedule does not fit any regime cleanly."""


# Classifier calibration: slope margin (nats per level) separating the
# exponential bands, and the minimum total decay for a subexponential call.
_SLOPE_MARGIN = 0.02
_MIN_SUBEXP_DROP = 0.25
_MAX_FIT_RESIDUAL = 0.1


@dataclass(frozen=True)
class RegimeFit:
    regime: Regime
    slope: float
    fitted_m: float | None
    residual: float


def classify_regime(schedule: LambdaSchedule, n_values) -> RegimeFit:
    """Classify the asymptotic regime of a rate schedule from samples.

    Fits log rate(n) = a + b*n + c*log n by least squares; the linear
    coefficient b estimates -log of the exponential base.  Bands:
      b + log r < -margin        NO_FIRE            (rate * |B_n| -> 0)
      -log r + margin < b < -margin
                                  EXPONENTIAL_INTERMEDIATE (m = e^{-b})
      |b| <= margin, decaying     SUBEXPONENTIAL
      flat                        CONSTANT
    Anything between bands, or a poor fit, raises AmbiguousRegime rather
    than guessing.
    """
    ns = np.asarray(sorted(set(int(n) for n in n_values)), dtype=np.float64)
    if ns.size < 4:
        raise ValueError("need at least 4 depths to classify a schedule")
    rates = np.array([schedule.rate(int(n)) for n in ns])
    logs = np.log(rates)

    span = float(np.max(rates) / np.min(rates) - 1.0)
    if span < 1e-9:
        return RegimeFit(Regime.CONSTANT, 0.0, None, 0.0)

    design = np.column_stack([np.ones_like(ns), ns, np.log(ns)])
    coef, *_ = np.linalg.lstsq(design, logs, rcond=None)
    resid = float(np.max(np.abs(design @ coef - logs)))
    if resid > _MAX_FIT_RESIDUAL:
        raise AmbiguousRegime(
            f"schedule {schedule.label()} fits no regime (residual {resid:.3g})"
        )
    b = float(coef[1])
    logr = math.log(schedule.r)

    if b + logr < -_SLOPE_MARGIN:
        return RegimeFit(Regime.NO_FIRE, b, None, resid)
    if -logr + _SLOPE_MARGIN < b < -_SLOPE_MARGIN:
        return RegimeFit(Regime.EXPONENTIAL_INTERMEDIATE, b, math.exp(-b), resid)
    if abs(b) <= _SLOPE_MARGIN:
        drop = float(logs[0] - logs[-1])
        if drop > _MIN_SUBEXP_DROP:
            return RegimeFit(Regime.SUBEXPONENTIAL, b, None, resid)
        if abs(drop) <= 0.05:
            return RegimeFit(Regime.CONSTANT, b, None, resid)
    raise AmbiguousRegime(
        f"schedule {schedule.label()} falls between regime bands (slope {b:.4f})"
    )


# ---------------------------------------------------------------------------
# Exact CTMC oracle for depth <= 1 (uniformization)

_CTMC_MAX_R = 6  # 2^(r+1) states must stay tiny


def _cluster_bits(state: int, v: int, r: int) -> int:
    """Bitmask of the occupied cluster of v in a depth-1 tree state."""
    bits = 1 << v
    if v == 0:
        for c in range(1, r + 1):
            if state >> c & 1:
                bits |= 1 << c
    elif state & 1:  # root occupied links the children together
        bits |= 1
        for c in range(1, r + 1):
            if state >> c & 1:
                bits |= 1 << c
    return bits


def ctmc_occupancy(r: int, n: int, lam: float, t: float, query) -> float:
    """Exact occupancy probability on B_0 or B_1 by uniformization.

    The state space is the occupancy bitmask (2 states at n=0, 2^(r+1) at
    n=1).  Growth adds a vertex at rate 1; lightning at rate lam on an
    occupied vertex clears its cluster instantly (lightning on vacant
    vertices is a no-op).  `query` is a vertex id for a marginal, or a
    {vertex: bool} mapping for a joint probability.  Poisson truncation
    keeps the total error below 1e-9.
    """
    if n not in (0, 1):
        raise ValueError(f"exact oracle only covers depth 0 or 1, got n={n}")
    if n == 1 and r > _CTMC_MAX_R:
        raise ValueError(f"depth-1 oracle limited to r <= {_CTMC_MAX_R}")
    if lam < 0.0 or t < 0.0:
        raise ValueError("lam and t must be >= 0")
    n_vertices = 1 if n == 0 else r + 1
    n_states = 1 << n_vertices

    q = n_vertices * (1.0 + lam)
    phat = np.zeros((n_states, n_states))
    for s in range(n_states):
        total = 0.0
        for v in range(n_vertices):
            if not s >> v & 1:
                phat[s, s | (1 << v)] += 1.0 / q
                total += 1.0 / q
            elif lam > 0.0:
                target = s & ~_cluster_bits(s, v, r)
                phat[s, target] += lam / q
                total += lam / q
        phat[s, s] += 1.0 - total

    dist = np.zeros(n_states)
    dist[0] = 1.0  # all vacant at time zero
    result = np.zeros(n_states)
    qt = q * t
    weight = math.exp(-qt)
    acc = weight
    k = 0
    result += weight * dist
    while 1.0 - acc > CTMC_TRUNCATION_ERROR * 1e-3:
        k += 1
        dist = dist @ phat
        weight *= qt / k
        acc += weight
        result += weight * dist
        if k > 100 * (qt + 10):
            raise ArithmeticError("uniformization failed to converge")

    if isinstance(query, int):
        sel = [s for s in range(n_states) if s >> query & 1]
    else:
        sel = [
            s
            for s in range(n_states)
            if all(bool(s >> v & 1) == bool(occ) for v, occ in query.items())
        ]
    return float(sum(result[s] for s in sel))


def b0_occupancy(lam: float, t: float) -> float:
    """Closed-form root occupancy on B_0: two-state chain, up 1 / down lam."""
    total = 1.0 + lam
    return (1.0 - math.exp(-total * t)) / total


def make_topology(r: int, depth: int) -> TreeTopology:
    return TreeTopology(r, depth)


__all__ = [
    "offspring_mean",
    "offspring_variance",
    "critical_time",
    "critical_probability",
    "mean_inverse",
    "occupancy_probability",
    "expected_truncated_cluster_size",
    "moment_bounds",
    "theta_fixed_point",
    "FuncSpec",
    "LambdaSchedule",
    "transition_time",
    "Regime",
    "RegimeFit",
    "AmbiguousRegime",
    "classify_regime",
    "ctmc_occupancy",
    "b0_occupancy",
    "tree_vertex_count",
    "make_topology",
]
