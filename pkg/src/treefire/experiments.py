"""Convergence experiments coupling the fire engine to the growth field.

Three harnesses, each sweeping the truncation depth n over a grid with a
lightning-rate schedule lam(n) = g(n)/m(tau)^n:

* run_equality_destruction: joint frequency of (a) the target staying identical to
  the coupled pure-growth field on [0, tau - delta] and (b) every
  boundary-touching target burning inside (tau - delta, tau + delta);
  plus the conditioned variant on the window (tau_n, tau_n + delta].
* run_destruction_direction: whether the first destruction inside the
  window lands after tau (slow schedules) or before tau (fast schedules).
* run_cluster_scaling: the lightning/destruction statistics of the root's
  frozen cluster at tau_n (last-strike gap, strike count, strike depth,
  destruction depth), their normalisations, and the per-trial cluster
  mismatch inequality |S \\ C| <= N (r^{J+1} - 1)/(r - 1).

Part-(a) equality and the mismatch inequality are evaluated exactly per
trial from recorded events, never statistically.  All trial draws are
keyed by (seed, trial), so results are independent of the worker count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, engine
from .analytics import FuncSpec, LambdaSchedule, offspring_mean, transition_time
from .rng import StreamFamily
from .stats import mann_kendall, wilson_interval
from .topology import TreeTopology

SCHEMA_VERSION = 1

# Serial base for cluster searches run outside the engine kernel; engine
# burn serials are small, so these can never collide with stale marks.
_SERIAL_BASE = 10**9


@dataclass(frozen=True)
class ConvergenceExperiment:
    """Shared configuration of the depth-sweep experiments."""

    r: int
    tau: float
    delta: float
    n_list: tuple[int, ...]
    trials: int
    seed: int
    targets: tuple[int, ...] = (0,)
    g: FuncSpec = field(default_factory=lambda: FuncSpec("const", 1.0))
    f: FuncSpec = field(default_factory=lambda: FuncSpec("power", 0.5))
    workers: int = 1
    max_events: int = engine.DEFAULT_MAX_EVENTS

    def __post_init__(self):
        if len(self.n_list) < 1:
            raise ValueError("n_list must be non-empty")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if not 0.0 < self.delta < self.tau:
            raise ValueError("need 0 < delta < tau")
        smallest = TreeTopology(self.r, min(self.n_list))
        for z in self.targets:
            smallest._check_vertex(z)

    def schedule(self) -> LambdaSchedule:
        return LambdaSchedule.from_g(self.r, self.tau, self.g)


@dataclass
class ExperimentSummary:
    kind: str
    config: dict
    rows: list[dict]
    checks: dict
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        payload = {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "config": self.config,
            "rows": self.rows,
            "checks": self.checks,
        }
        return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False)

    def write_json(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    def write_csv(self, path) -> None:
        if not self.rows:
            raise ValueError("no rows to write")
        cols = list(self.rows[0].keys())
        with open(path, "w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for row in self.rows:
                fh.write(",".join(_csv_cell(row[c]) for c in cols) + "\n")


def _csv_cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _config_dict(exp: ConvergenceExperiment, **extra) -> dict:
    cfg = {
        "r": exp.r,
        "tau": exp.tau,
        "delta": exp.delta,
        "n_list": list(exp.n_list),
        "trials": exp.trials,
        "seed": exp.seed,
        "targets": list(exp.targets),
        "g": exp.g.label(),
        "f": exp.f.label(),
    }
    cfg.update(extra)
    return cfg


def _map_trials(trials: int, workers: int, worker_factory):
    """Run `trials` trial functions, each returning a record, in order.

    worker_factory() builds a fresh per-thread callable (owning its own
    scratch buffers); records land in a list indexed by trial, so the
    result is independent of scheduling.
    """
    results = [None] * trials
    workers = max(1, min(workers, trials))
    if workers == 1:
        fn = worker_factory()
        for i in range(trials):
            results[i] = fn(i)
        return results

    ranges = []
    base, rem = divmod(trials, workers)
    lo = 0
    for w in range(workers):
        hi = lo + base + (1 if w < rem else 0)
        ranges.append((lo, hi))
        lo = hi

    def chunk(lo_hi):
        lo, hi = lo_hi
        fn = worker_factory()
        for i in range(lo, hi):
            results[i] = fn(i)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(chunk, ranges))
    return results


class _TrialContext:
    """Per-thread scratch state for one depth n."""

    def __init__(self, exp: ConvergenceExperiment, n: int):
        self.topology = TreeTopology(exp.r, n)
        self.buffers = engine.EngineBuffers.for_topology(self.topology)
        self.buffers.visited.fill(-1)
        self.serial = _SERIAL_BASE

    def growth_cluster(self, seed, trial, t, x):
        """(members, touches) of x's pure-growth cluster at time t."""
        self.serial += 1
        topo = self.topology
        size, touch = _kernels.growth_cluster(
            topo.r, topo.depth, seed, trial, t, x,
            self.buffers.visited, self.serial, self.buffers.stack,
            self.buffers.members,
        )
        return self.buffers.members[:size].copy(), bool(touch)

    def masked_cluster(self, occ_uint8, x):
        self.serial += 1
        topo = self.topology
        size = _kernels.masked_cluster(
            topo.r, topo.depth, occ_uint8, x,
            self.buffers.visited, self.serial, self.buffers.stack,
            self.buffers.members,
        )
        return self.buffers.members[:size].copy()


def _burn_times_of(state: engine.ForestFireState, z: int) -> np.ndarray:
    sel = state.watch_vertices == z
    return state.watch_times[sel]


def _check_growth_coupling(seed: int, trial: int, burns: np.ndarray, z: int) -> None:
    """Exact replay check: a vertex can only burn while grown.

    Recomputes the first growth arrival through the pure-Python stream
    path (independent of the kernel's hash implementation) and asserts it
    precedes every recorded burn of z.
    """
    if burns.size == 0:
        return
    first = StreamFamily(seed, trial).growth_stream(int(z)).arrival(1)
    if first > float(burns.min()) + 1e-12:
        raise engine.CouplingViolation(
            f"vertex {z} burned at {burns.min()} before its first growth "
            f"arrival {first}: engine/stream coupling is broken"
        )


def run_equality_destruction(exp: ConvergenceExperiment) -> ExperimentSummary:
    """Joint equality-then-destruction frequency over the depth grid."""
    schedule = exp.schedule()
    rows = []
    for n in exp.n_list:
        lam = schedule.rate(n)
        tau_n = transition_time(schedule, exp.f, n)
        horizon = max(exp.tau, tau_n) + exp.delta
        t_equal = exp.tau - exp.delta

        def factory(n=n, lam=lam, tau_n=tau_n, horizon=horizon, t_equal=t_equal):
            ctx = _TrialContext(exp, n)

            def one(trial: int) -> tuple:
                seed = exp.seed
                streams = StreamFamily(seed, trial)
                proxy_tau = {}
                proxy_taun = {}
                for z in exp.targets:
                    _, proxy_tau[z] = ctx.growth_cluster(seed, trial, exp.tau, z)
                    _, proxy_taun[z] = ctx.growth_cluster(seed, trial, tau_n, z)
                state = engine.run(
                    ctx.topology, streams, lam, horizon,
                    record_members=False, watch_vertices=exp.targets,
                    buffers=ctx.buffers, max_events=exp.max_events,
                )
                a_ok = True
                b_ok = True
                for z in exp.targets:
                    burns = _burn_times_of(state, z)
                    _check_growth_coupling(seed, trial, burns, z)
                    if np.any(burns <= t_equal):
                        a_ok = False
                    if proxy_tau[z] and not np.any(
                        (burns > t_equal) & (burns < exp.tau + exp.delta)
                    ):
                        b_ok = False
                x = exp.targets[0]
                burns_x = _burn_times_of(state, x)
                cond = proxy_taun[x]
                cond_hit = bool(
                    np.any((burns_x > tau_n) & (burns_x <= tau_n + exp.delta))
                )
                return (a_ok, b_ok, a_ok and b_ok, cond, cond_hit)

            return one

        recs = _map_trials(exp.trials, exp.workers, factory)
        a = sum(r[0] for r in recs)
        joint = sum(r[2] for r in recs)
        n_cond = sum(r[3] for r in recs)
        cond_hit = sum(r[3] and r[4] for r in recs)
        jlo, jhi = wilson_interval(joint, exp.trials)
        row = {
            "n": n,
            "lam": lam,
            "tau_n": tau_n,
            "trials": exp.trials,
            "freq_a": a / exp.trials,
            "freq_joint": joint / exp.trials,
            "joint_ci_low": jlo,
            "joint_ci_high": jhi,
            "conditioned_trials": n_cond,
            "freq_destroyed_conditioned": cond_hit / n_cond if n_cond else float("nan"),
        }
        rows.append(row)

    joint_series = [row["freq_joint"] for row in rows]
    cond_series = [row["freq_destroyed_conditioned"] for row in rows]
    mk_joint = mann_kendall(joint_series)
    mk_cond = mann_kendall(cond_series)
    g_roots = [exp.g(n) ** (1.0 / n) for n in exp.n_list]
    checks = {
        "g_nth_roots": g_roots,
        "g_nth_root_approaches_one": all(
            abs(g_roots[i + 1] - 1.0) <= abs(g_roots[i] - 1.0) + 1e-12
            for i in range(len(g_roots) - 1)
        ),
        "joint_trend_s": mk_joint.s,
        "joint_trend_p_decreasing": mk_joint.p_decreasing,
        "joint_non_decreasing": mk_joint.non_decreasing(),
        "joint_final": joint_series[-1],
        "conditioned_trend_s": mk_cond.s,
        "conditioned_non_decreasing": mk_cond.non_decreasing(),
    }
    return ExperimentSummary(
        "equality_then_destruction", _config_dict(exp), rows, checks
    )


def run_destruction_direction(
    exp: ConvergenceExperiment, variant: str
) -> ExperimentSummary:
    """Destruction-direction experiment: does the first burn inside the
    window (tau - delta, tau + delta) land after or before tau?

    variant="after" is meant for slow schedules (g well below n/log n),
    variant="before" for fast ones (g at least exp(n^alpha)); the side
    check tau_n >= tau resp. tau_n < tau is reported per depth.
    """
    if variant not in ("after", "before"):
        raise ValueError(f"variant must be 'after' or 'before', got {variant!r}")
    schedule = exp.schedule()
    rows = []
    for n in exp.n_list:
        lam = schedule.rate(n)
        tau_n = transition_time(schedule, exp.f, n)
        horizon = exp.tau + exp.delta

        def factory(n=n, lam=lam, horizon=horizon):
            ctx = _TrialContext(exp, n)

            def one(trial: int) -> tuple:
                seed = exp.seed
                streams = StreamFamily(seed, trial)
                proxy = {}
                for z in exp.targets:
                    _, proxy[z] = ctx.growth_cluster(seed, trial, exp.tau, z)
                state = engine.run(
                    ctx.topology, streams, lam, horizon,
                    record_members=False, watch_vertices=exp.targets,
                    buffers=ctx.buffers, max_events=exp.max_events,
                )
                observed = 0
                after = 0
                for z in exp.targets:
                    if not proxy[z]:
                        continue
                    burns = _burn_times_of(state, z)
                    _check_growth_coupling(seed, trial, burns, z)
                    in_win = burns[
                        (burns > exp.tau - exp.delta) & (burns < exp.tau + exp.delta)
                    ]
                    if in_win.size:
                        observed += 1
                        if float(in_win.min()) > exp.tau:
                            after += 1
                return (observed, after)

            return one

        recs = _map_trials(exp.trials, exp.workers, factory)
        observed = sum(r[0] for r in recs)
        after = sum(r[1] for r in recs)
        frac_after = after / observed if observed else float("nan")
        lo, hi = wilson_interval(after, observed) if observed else (0.0, 1.0)
        gap_scaled = (exp.tau - tau_n) * exp.f(n)
        rows.append(
            {
                "n": n,
                "lam": lam,
                "tau_n": tau_n,
                "tau_n_minus_tau": tau_n - exp.tau,
                "gap_times_f": gap_scaled,
                "trials": exp.trials,
                "window_destructions": observed,
                "fraction_after_tau": frac_after,
                "fraction_ci_low": lo,
                "fraction_ci_high": hi,
            }
        )

    focus = [row["fraction_after_tau"] for row in rows]
    if variant == "before":
        focus = [1.0 - v for v in focus]
    mk = mann_kendall(focus)
    tau_gaps = [row["tau_n_minus_tau"] for row in rows]
    gap_scaled = [row["gap_times_f"] for row in rows]
    checks = {
        "variant": variant,
        "direction_series": focus,
        "direction_trend_s": mk.s,
        "direction_p_decreasing": mk.p_decreasing,
        "direction_non_decreasing": mk.non_decreasing(),
        "direction_final": focus[-1],
        "tau_n_side_ok": all(
            (g >= 0.0) if variant == "after" else (g < 0.0) for g in tau_gaps
        ),
        "gap_times_f_increasing": all(
            gap_scaled[i + 1] > gap_scaled[i] for i in range(len(gap_scaled) - 1)
        ),
    }
    return ExperimentSummary(
        "destruction_direction_" + variant, _config_dict(exp), rows, checks
    )


@dataclass(frozen=True)
class ScalingTrial:
    cluster_size: int
    mismatch: int
    iota: float
    strikes: int
    strike_depth: int
    destruction_depth: int
    inequality_ok: bool


def run_cluster_scaling(exp: ConvergenceExperiment) -> ExperimentSummary:
    """Normalised strike/destruction statistics of the root's frozen cluster.

    Per trial: S is the pure-growth cluster of the target at tau_n, C the
    engine cluster at tau_n; the statistics (iota, N, K, J) cover strikes
    and destruction inside S up to tau_n; the cluster-mismatch inequality
    |S \\ C| <= N (r^{J+1} - 1)/(r - 1) is asserted exactly per trial.
    """
    schedule = exp.schedule()
    x = exp.targets[0]
    rows = []
    all_ok = True
    for n in exp.n_list:
        lam = schedule.rate(n)
        tau_n = transition_time(schedule, exp.f, n)
        fn = exp.f(n)
        logn = math.log(n)

        def factory(n=n, lam=lam, tau_n=tau_n):
            ctx = _TrialContext(exp, n)

            def one(trial: int) -> ScalingTrial:
                seed = exp.seed
                streams = StreamFamily(seed, trial)
                s_members, _ = ctx.growth_cluster(seed, trial, tau_n, x)
                state = engine.run(
                    ctx.topology, streams, lam, tau_n,
                    record_members=False, snapshot_time=tau_n,
                    stats_cluster=s_members, stats_tau_n=tau_n,
                    buffers=ctx.buffers, max_events=exp.max_events,
                )
                st = state.statistics
                occ = state.snapshot_occupancy.view(np.uint8)
                c_members = ctx.masked_cluster(occ, x)
                s_set = set(int(v) for v in s_members)
                if not all(int(v) in s_set for v in c_members):
                    raise engine.CouplingViolation(
                        "engine cluster escaped the coupled growth cluster"
                    )
                mismatch = len(s_members) - len(c_members)
                bound = st.strikes * (
                    (exp.r ** (st.destruction_depth + 1) - 1) // (exp.r - 1)
                )
                return ScalingTrial(
                    len(s_members), mismatch, st.iota, st.strikes,
                    st.strike_depth, st.destruction_depth, mismatch <= bound,
                )

            return one

        recs = _map_trials(exp.trials, exp.workers, factory)
        ok = all(rec.inequality_ok for rec in recs)
        all_ok = all_ok and ok
        iota_f = np.array([rec.iota * fn for rec in recs])
        n_f = np.array([rec.strikes / fn for rec in recs])
        k_log = np.array([rec.strike_depth / logn for rec in recs])
        j_flog = np.array([rec.destruction_depth / (fn * logn) for rec in recs])
        rows.append(
            {
                "n": n,
                "lam": lam,
                "tau_n": tau_n,
                "trials": exp.trials,
                "inequality_ok": ok,
                "iota_f_p05": float(np.quantile(iota_f, 0.05)),
                "strikes_over_f_p95": float(np.quantile(n_f, 0.95)),
                "strike_depth_over_logn_p95": float(np.quantile(k_log, 0.95)),
                "destruction_depth_over_flogn_p95": float(np.quantile(j_flog, 0.95)),
                "mean_cluster_size": float(
                    np.mean([rec.cluster_size for rec in recs])
                ),
                "mean_mismatch": float(np.mean([rec.mismatch for rec in recs])),
            }
        )

    def upper_ok(key):
        return mann_kendall([row[key] for row in rows]).non_increasing()

    checks = {
        "inequality_all_trials": all_ok,
        "iota_f_p05_min": min(row["iota_f_p05"] for row in rows),
        "strikes_over_f_bounded": upper_ok("strikes_over_f_p95"),
        "strike_depth_bounded": upper_ok("strike_depth_over_logn_p95"),
        "destruction_depth_bounded": upper_ok("destruction_depth_over_flogn_p95"),
    }
    return ExperimentSummary(
        "cluster_scaling", _config_dict(exp), rows, checks
    )
