"""Acceptance suite: one test (and one printed PASS/FAIL line) per criterion.

Heavier than the unit suites; the depth-sweep criteria use 4 worker
threads.  Every quantity below is either an exact closed form, an
independent oracle, or a Monte Carlo estimate compared at 3 standard
errors / a trend test at level 1e-2.
"""

import json
import math
import time

import numpy as np
import pytest

from treefire import analytics, engine, growth, sdp
from treefire.analytics import FuncSpec, theta_fixed_point
from treefire.cli import main as cli_main
from treefire.experiments import (
    ConvergenceExperiment,
    run_cluster_scaling,
    run_destruction_direction,
    run_equality_destruction,
)
from treefire.rng import StreamFamily
from treefire.topology import TreeTopology

WORKERS = 4


def _report(num: int, desc: str, ok: bool, detail: str = "") -> None:
    line = f"criterion {num:2d} [{'PASS' if ok else 'FAIL'}] {desc}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, line


def _engine_marginal(r, depth, lam, t, trials, seed, vertex=0):
    topo = TreeTopology(r, depth)
    buffers = engine.EngineBuffers.for_topology(topo)
    hits = 0
    for trial in range(trials):
        state = engine.run(
            topo, StreamFamily(seed, trial), lam, t,
            record_members=False, buffers=buffers,
        )
        hits += int(state.final_occupancy[vertex])
    return hits / trials


def test_criterion_01_b0_oracle():
    trials = 100_000
    start = time.monotonic()
    worst = 0.0
    for t in (0.25, 0.5, 1.0, 2.0):
        exact = 0.5 * (1.0 - math.exp(-2.0 * t))
        assert analytics.b0_occupancy(1.0, t) == pytest.approx(exact, abs=1e-12)
        assert analytics.ctmc_occupancy(2, 0, 1.0, t, 0) == pytest.approx(exact, abs=1e-9)
        est = _engine_marginal(2, 0, 1.0, t, trials, seed=101)
        se = math.sqrt(exact * (1.0 - exact) / trials)
        worst = max(worst, abs(est - exact) / se)
    elapsed = time.monotonic() - start
    _report(
        1, "single-vertex marginal vs two-state chain, 4 times x 1e5 trials",
        worst <= 3.0 and elapsed < 10.0,
        f"worst |err|/se={worst:.2f}, {elapsed:.1f}s",
    )


def test_criterion_02_b1_oracle():
    trials = 100_000
    start = time.monotonic()
    exact = analytics.ctmc_occupancy(2, 1, 1.0, 1.0, 0)
    est = _engine_marginal(2, 1, 1.0, 1.0, trials, seed=202)
    se = math.sqrt(exact * (1.0 - exact) / trials)
    elapsed = time.monotonic() - start
    _report(
        2, "depth-1 root marginal vs uniformization oracle, 1e5 trials",
        abs(est - exact) <= 3.0 * se and elapsed < 60.0,
        f"exact={exact:.5f} est={est:.5f} |err|/se={abs(est - exact) / se:.2f}, {elapsed:.1f}s",
    )


def test_criterion_03_coupling_identity():
    start = time.monotonic()
    topo = TreeTopology(2, 16)
    buffers = engine.EngineBuffers.for_topology(topo)
    all_equal = True
    for trial in range(100):
        fam = StreamFamily(303, trial)
        state = engine.run(topo, fam, 1e-30, 2.0, record_members=False, buffers=buffers)
        snap = growth.snapshot(topo, fam, 2.0)
        all_equal = all_equal and bool(np.array_equal(state.final_occupancy, snap.occupied))
    elapsed = time.monotonic() - start
    _report(
        3, "engine at lambda=1e-30 bitwise equals pure-growth snapshot, n=16 x 100 trials",
        all_equal and elapsed < 60.0,
        f"{elapsed:.1f}s",
    )


def test_criterion_04_moment_closed_form():
    r, t, n, trials = 2, 1.0, 10, 100_000
    est = growth.truncated_cluster_size_samples(404, r, n, t, trials)
    exact = analytics.expected_truncated_cluster_size(r, t, n)
    se = est.sizes.std(ddof=1) / math.sqrt(trials)
    mc_ok = abs(est.sizes.mean() - exact) <= 3.0 * se

    lower, upper, _ = analytics.moment_bounds(r, t, 0)
    m = analytics.offspring_mean(r, t)
    bounds_ok = all(
        lower <= analytics.expected_truncated_cluster_size(r, t, k) / m**k <= upper
        for k in range(31)
    )
    _report(
        4, "cluster-size mean vs closed form (3 se, 1e5 trials) + exact ratio bounds n<=30",
        mc_ok and bounds_ok,
        f"exact={exact:.4f} est={est.sizes.mean():.4f} se={se:.4f}",
    )


def test_criterion_05_theta_fixed_point():
    start = time.monotonic()
    theta = theta_fixed_point(2, 0.75)
    exact_ok = abs(theta - 2.0 / 3.0) <= 1e-9
    freqs = [
        growth.boundary_reach_frequency(505, 2, n, 0.75, trials=100_000)
        for n in (12, 18, 24)
    ]
    # the sequence converges almost immediately at p=0.75, so "decreasing"
    # is checked within twice the binomial standard error
    se = math.sqrt(theta * (1 - theta) / 100_000)
    decreasing = all(b <= a + 2 * se for a, b in zip(freqs, freqs[1:]))
    gap = abs(freqs[-1] - theta)
    elapsed = time.monotonic() - start
    _report(
        5, "theta(2,0.75)=2/3 to 1e-9; boundary reach decreasing, final gap < 0.01",
        exact_ok and decreasing and gap < 0.01 and elapsed < 300.0,
        f"freqs={[f'{f:.5f}' for f in freqs]} gap={gap:.5f}, {elapsed:.0f}s",
    )


def test_criterion_06_equality_then_destruction():
    start = time.monotonic()
    exp = ConvergenceExperiment(
        r=2, tau=1.0, delta=0.3, n_list=(8, 10, 12, 14, 16, 18, 20),
        trials=2000, seed=606, targets=(0,),
        g=FuncSpec("const", 1.0), f=FuncSpec("power", 0.5), workers=WORKERS,
    )
    summary = run_equality_destruction(exp)  # raises on any coupling violation
    checks = summary.checks
    elapsed = time.monotonic() - start
    joints = [row["freq_joint"] for row in summary.rows]
    _report(
        6, "equality-then-destruction joint freq non-decreasing, final > 0.8",
        checks["joint_non_decreasing"]
        and checks["joint_final"] > 0.8
        and checks["g_nth_root_approaches_one"]
        and elapsed < 1800.0,
        f"joint={[f'{v:.3f}' for v in joints]}, {elapsed:.0f}s",
    )


def test_criterion_07_destruction_direction():
    start = time.monotonic()
    after = run_destruction_direction(
        ConvergenceExperiment(
            r=2, tau=1.0, delta=0.3, n_list=(8, 10, 12, 14, 16, 18, 20),
            trials=1500, seed=707, g=FuncSpec("const", 1.0),
            f=FuncSpec("power", 0.5), workers=WORKERS,
        ),
        "after",
    )
    a = after.checks
    after_ok = (
        a["tau_n_side_ok"]
        and a["direction_non_decreasing"]
        and a["direction_final"] > a["direction_series"][0]
    )

    before = run_destruction_direction(
        ConvergenceExperiment(
            r=2, tau=1.0, delta=0.3, n_list=(8, 10, 12, 14, 16),
            trials=300, seed=708, g=FuncSpec("exppow", 0.6),
            f=FuncSpec("power", 0.5), workers=WORKERS,
        ),
        "before",
    )
    b = before.checks
    before_ok = (
        b["tau_n_side_ok"]  # tau_n < tau deterministically on the grid
        and b["direction_non_decreasing"]
        and b["gap_times_f_increasing"]
    )
    elapsed = time.monotonic() - start
    _report(
        7, "destruction direction: after-fraction rises (slow g); before-side checks (fast g)",
        after_ok and before_ok,
        f"after={[f'{v:.3f}' for v in a['direction_series']]} "
        f"before={[f'{v:.3f}' for v in b['direction_series']]}, {elapsed:.0f}s",
    )


def test_criterion_08_cluster_scaling():
    start = time.monotonic()
    summary = run_cluster_scaling(
        ConvergenceExperiment(
            r=2, tau=1.0, delta=0.3, n_list=(8, 10, 12, 14, 16),
            trials=1000, seed=808, g=FuncSpec("const", 1.0),
            f=FuncSpec("power", 0.5), workers=WORKERS,
        )
    )
    checks = summary.checks
    elapsed = time.monotonic() - start
    _report(
        8, "mismatch inequality in 100% of trials + bounded normalized statistics",
        checks["inequality_all_trials"]
        and checks["iota_f_p05_min"] > 0.005
        and checks["strikes_over_f_bounded"]
        and checks["strike_depth_bounded"]
        and checks["destruction_depth_bounded"],
        f"iota_f_p05_min={checks['iota_f_p05_min']:.4f}, {elapsed:.0f}s",
    )


def _xstar_reaches_boundary(topo: TreeTopology, xstar: np.ndarray) -> bool:
    """Layered bottom-up pass: any X*-path from some vertex to generation n."""
    r = topo.r
    reach = np.zeros(topo.vertex_count, dtype=bool)
    lo = topo.layer_start(topo.depth)
    reach[lo:] = xstar[lo:] > 0
    for k in range(topo.depth - 1, -1, -1):
        a, sz = topo.layer_start(k), topo.layer_size(k)
        child_lo = topo.layer_start(k + 1)
        child_reach = reach[child_lo : child_lo + sz * r].reshape(sz, r)
        reach[a : a + sz] = (xstar[a : a + sz] > 0) & child_reach.any(axis=1)
    return bool(reach.any())


def test_criterion_09_sdp():
    start = time.monotonic()
    topo = TreeTopology(2, 8)
    inv_ok = True
    for trial in range(10_000):
        mode = trial % 2
        if mode == 0:
            cfg = sdp.SdpConfig.from_probabilities(topo, 0.75, 0.2)
        else:
            cfg = sdp.SdpConfig.from_times(topo, 1.0, 0.25)
        real = sdp.realize(cfg, StreamFamily(909, trial))
        inv_ok = (
            inv_ok
            and bool(np.all(real.Xstar <= real.X))
            and bool(np.array_equal(real.Z, real.Xstar | real.Y))
            and not _xstar_reaches_boundary(topo, real.Xstar)
        )

    # refresh trend: theta(0.75, delta) estimates over a shared stream family
    topo18 = TreeTopology(2, 18)
    deltas = (0.4, 0.2, 0.1, 0.05)
    hits = [
        sdp.estimate_theta(
            sdp.SdpConfig.from_probabilities(topo18, 0.75, d), seed=910, trials=3000
        ).hits
        for d in deltas
    ]
    trend_ok = all(b <= a for a, b in zip(hits, hits[1:])) and hits[0] > hits[-1]

    # below the r=2 recovery threshold (delta=0.2 < 1/3) estimates sink to 0
    assert sdp.critical_delta_threshold(2, 0.75) == pytest.approx(1.0 / 3.0)
    ests, ses = [], []
    for n in (10, 14, 18):
        est = sdp.estimate_theta(
            sdp.SdpConfig.from_probabilities(TreeTopology(2, n), 0.75, 0.2),
            seed=911, trials=5000,
        )
        ests.append(est.estimate)
        ses.append(math.sqrt(est.estimate * (1 - est.estimate) / est.trials + 1e-9))
    sink_ok = all(
        ests[i + 1] <= ests[i] + 2.0 * math.hypot(ses[i], ses[i + 1])
        for i in range(len(ests) - 1)
    ) and ests[-1] <= 0.005
    elapsed = time.monotonic() - start
    _report(
        9, "refresh-percolation invariants 100%; theta decreasing in delta and in n below threshold",
        inv_ok and trend_ok and sink_ok,
        f"hits/3000={hits} subcritical={[f'{v:.4f}' for v in ests]}, {elapsed:.0f}s",
    )


def test_criterion_10_determinism(tmp_path):
    cases = {
        "theta": (["theta", "--r", "2", "--p", "0.75", "--depth", "12",
                   "--trials", "5000", "--seed", "1"], "--out"),
        "sdp": (["sdp", "--r", "2", "--depth", "10", "--p", "0.75",
                 "--delta", "0.2", "--trials", "2000", "--seed", "1"], "--out"),
        "scaling": (["scaling", "--r", "2", "--tau", "1.0", "--delta", "0.3",
                     "--n-list", "6 8 10", "--trials", "100", "--seed", "1"],
                    "--out-json"),
        "sdp-scan": (["sdp-scan", "--r", "2", "--p", "0.75", "--deltas", "0.4 0.1",
                      "--depths", "6 8", "--trials", "500", "--seed", "1"],
                     "--out-json"),
    }
    ok = True
    for name, (argv, out_flag) in cases.items():
        paths = [tmp_path / f"{name}-{i}.json" for i in (0, 1)]
        for path in paths:
            ok = ok and cli_main(argv + [out_flag, str(path)]) == 0
        ok = ok and paths[0].read_bytes() == paths[1].read_bytes()

    converge = ["converge", "--r", "2", "--tau", "1.0", "--delta", "0.3",
                "--n-list", "6 8 10", "--trials", "200", "--seed", "1",
                "--mode", "equality"]
    outs = [tmp_path / f"conv-{w}.json" for w in (1, 2, 1)]
    for path, w in zip(outs, (1, 2, 1)):
        assert cli_main(converge + ["--workers", str(w), "--out-json", str(path)]) == 0
    ok = (
        ok
        and outs[0].read_bytes() == outs[1].read_bytes()  # workers 1 vs 2
        and outs[0].read_bytes() == outs[2].read_bytes()  # exact rerun
    )
    payload = json.loads(outs[0].read_text())
    ok = ok and "workers" not in payload["config"]
    _report(10, "CLI outputs byte-identical on rerun, including across --workers", ok)
