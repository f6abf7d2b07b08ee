"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Tolerances are pinned here exactly as the criteria state them.
"""

import itertools
import json
import math
import time

import numpy as np

from ghz_lhv import experiment as ex
from ghz_lhv import lhv_core as lhv
from ghz_lhv import qm_oracle as qm
from ghz_lhv import stations as st
from ghz_lhv.lhv_core import PI, Region

GRID128 = -PI + 2 * PI * np.arange(128) / 128
GRID64 = -PI + 2 * PI * np.arange(64) / 64
N_MC = 10**6


def test_01_correlation_law(criterion):
    t0 = time.perf_counter()
    err = max(abs(ex.quadrature_triple_correlation(d) - math.cos(d)) for d in GRID128)
    dt = time.perf_counter() - t0
    ok = criterion(1, "correlation law", err < 1e-9 and dt < 1.0, f"max |quad - cos| = {err:.2e} (< 1e-9), {dt:.3f} s (< 1 s)")
    assert ok


def test_02_per_trial_exactness(criterion):
    t0 = time.perf_counter()
    exceptions = 0
    for d, want in ((0.0, 1), (PI, -1)):
        b = ex.run_trials(ex.ScheduleSpec.fixed(d, 0, 0), N_MC, seed=0, workers=4)
        exceptions += int(np.count_nonzero(b.products != want))
    dt = time.perf_counter() - t0
    ok = criterion(2, "per-trial exactness", exceptions == 0 and dt < 10, f"{exceptions} exceptions over 2 x {N_MC} trials, {dt:.2f} s (< 10 s)")
    assert ok


def test_03_ghz_identities(criterion):
    t0 = time.perf_counter()
    rep = ex.ghz_paradox_report(0.0, N_MC, seed=0, workers=4)
    dt = time.perf_counter() - t0
    products = tuple(r.mean_product for r in rep.rows)
    constant = all(r.constant for r in rep.rows)
    ok = products == (1.0, -1.0, -1.0, -1.0) and constant and rep.mermin_model == 4.0 and dt < 10
    criterion(
        3, "GHZ identities", ok,
        f"products {products}, per-trial constant {constant}, Mermin {rep.mermin_model} "
        f"(classical bound 2; settings enter only via delta_eff), {dt:.2f} s (< 10 s)",
    )
    assert ok


def test_04_measure_invariance(criterion):
    jac = max(ex.jacobian_deviation(d) for d in GRID64)
    omega, _ = ex.hidden_stream(0, 0, N_MC)
    ks = max(ex.ks_distance_to_g(lhv.transform_L(omega, d)) for d in GRID64)
    ok = criterion(4, "measure invariance", jac < 1e-6 and ks < 0.002, f"Jacobian dev {jac:.2e} (< 1e-6), KS {ks:.5f} (< 0.002), 64 deltas, N={N_MC}")
    assert ok


def test_05_partition_measures(criterion):
    err = diff_err = 0.0
    for d in GRID128:
        mu = ex.partition_measures(d)
        c = math.cos(d)
        for r in Region:
            err = max(err, abs(mu[r] - ((1 + c) / 4 if r.correlated else (1 - c) / 4)))
        diff = mu[Region.PP] + mu[Region.MM] - mu[Region.PM] - mu[Region.MP]
        diff_err = max(diff_err, abs(diff - c))
    ok = criterion(5, "partition measures", err < 1e-9 and diff_err < 1e-9, f"max cell error {err:.2e}, difference-identity error {diff_err:.2e} (< 1e-9), 128 deltas")
    assert ok


def test_06_conditional_correlations(criterion):
    err = 0.0
    for d in GRID128:
        p = ex.conditional_pair_correlations(d)
        c = math.cos(d)
        err = max(err, abs(p.positive - c), abs(p.nonpositive + c))
    tol = 5 / math.sqrt(N_MC)
    worst = 0.0
    for d in (-2.5, -PI / 2, 0.0, PI / 3, 2.0):
        rep = ex.estimate_correlators(ex.run_trials(ex.ScheduleSpec.fixed(d, 0, 0), N_MC, seed=1, workers=4))
        worst = max(worst, *map(abs, rep.singles), *map(abs, rep.pairs))
    ok = criterion(
        6, "conditional correlations", err < 1e-9 and worst < tol,
        f"quadrature +-cos error {err:.2e} (< 1e-9); max |single|,|pair| {worst:.5f} (< {tol:.3f}), N={N_MC}, 5 deltas",
    )
    assert ok


def test_07_star_remap(criterion):
    bad = {}
    for d in (0.0, PI / 4, PI / 2, 3 * PI / 4):
        bad[round(d, 4)] = int(np.count_nonzero(ex.star_products(d, 10**5, seed=0) != 1))
    ok = criterion(7, "star remap", not any(bad.values()), f"non-(+1) trials per delta {bad}, N=1e5 each")
    assert ok


def test_08_oracle_agreement(criterion):
    g5 = -PI + 2 * PI * np.arange(5) / 5
    triple_err = lower_err = joint_err = 0.0
    I = qm.Identity()
    for phi in (0.0, PI / 3, -2.0):
        s = qm.ghz_state(3, phi)
        for a, b, c in itertools.product(g5, repeat=3):
            ops = [qm.XY(a), qm.XY(b), qm.XY(c)]
            val = qm.expectation(s, ops)
            triple_err = max(triple_err, abs(val - math.cos(a + b + c + phi)))
            for mask in itertools.product((0, 1), repeat=3):
                if 0 < sum(mask) < 3:
                    spec = [op if m else I for op, m in zip(ops, mask)]
                    lower_err = max(lower_err, abs(qm.expectation(s, spec)))
            table = qm.joint_distribution(s, ops)
            joint_err = max(joint_err, abs(sum(table.values()) - 1.0))
            joint_err = max(joint_err, abs(qm.correlator_from_distribution(table, (0, 1, 2)) - val))
            for sites in ((0,), (1,), (2,), (0, 1), (1, 2), (0, 2)):
                joint_err = max(joint_err, abs(qm.correlator_from_distribution(table, sites)))
    ok = triple_err < 1e-12 and lower_err < 1e-12 and joint_err < 1e-12
    criterion(8, "oracle agreement", ok, f"triple {triple_err:.1e}, singles/pairs {lower_err:.1e}, joint consistency {joint_err:.1e} (all < 1e-12), 5x5x5x3 grid")
    assert ok


def _report_bytes(rep):
    return json.dumps(rep.to_dict(), sort_keys=True).encode()


def test_09_determinism(criterion):
    sched = ex.ScheduleSpec("per-trial-random", ((0, 0, 0), (0, PI / 2, PI / 2), (1.0, -0.4, 2.2)), seed=11)
    runs = [ex.run_trials(sched, 300000, 0.3, 99, workers=w, chunk_size=c) for w, c in ((1, 1 << 18), (1, 1 << 18), (4, 50000), (8, 12345))]
    trials_same = len({r.to_bytes() for r in runs}) == 1
    reports_same = len({_report_bytes(ex.estimate_correlators(r)) for r in runs}) == 1
    s = st.two_chart_settings(1.1)
    transport = {_report_bytes(st.run_distributed(s, 50000, seed=4, transport=t).report()) for t in st.TRANSPORTS}
    ok = trials_same and reports_same and len(transport) == 1
    criterion(9, "determinism", ok, f"trial bytes identical {trials_same}, reports identical {reports_same} (workers 1/4/8), channels == sockets {len(transport) == 1}")
    assert ok


def test_10_distributed_equivalence(criterion):
    ok_all = True
    for d in (0.0, PI / 3, -2.0, PI):
        run = st.run_distributed(st.two_chart_settings(d), 10**4, seed=6, transport="sockets")
        ref = ex.run_trials(ex.ScheduleSpec.fixed(d, 0, 0), 10**4, seed=6)
        ok_all &= bool(
            np.array_equal(run.s_a, ref.s_a) and np.array_equal(run.s_b, ref.s_b) and np.array_equal(run.s_c, ref.s_c)
        )
    comp = st.composition_check(PI / 3, PI / 4, 10**5, seed=0)
    criterion(
        10, "distributed equivalence", ok_all,
        f"two-chart stations == run_trials bit-for-bit {ok_all} (1e4 trials, 4 deltas); composition finding at (pi/3, pi/4): "
        f"agree fraction {comp.agree_fraction:.3f}, station triple {comp.station_triple:.3f} vs reference {comp.reference_triple:.3f} "
        f"(gap {comp.correlator_gap:+.3f}, reported not asserted)",
    )
    assert ok_all
