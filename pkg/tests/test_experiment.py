import math
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghz_lhv import experiment as ex
from ghz_lhv import lhv_core as lhv
from ghz_lhv import qm_oracle as qm
from ghz_lhv.lhv_core import PI, Region

canonical = st.floats(min_value=-PI, max_value=PI, allow_nan=False, exclude_max=True)


# -- settings and schedules ---------------------------------------------------


def test_effective_delta_wraps():
    assert ex.effective_delta(PI / 2, PI / 2, 0.0) == pytest.approx(-PI)
    assert ex.SettingTriple(0.1, 0.2, 0.3, 0.4).effective_delta == pytest.approx(1.0)


def test_schedule_validation():
    with pytest.raises(ValueError):
        ex.ScheduleSpec("fixed", ())
    with pytest.raises(ValueError):
        ex.ScheduleSpec("fixed", ((0.0, 0.0),))
    with pytest.raises(ValueError):
        ex.ScheduleSpec("bogus", ((0.0, 0.0, 0.0),))
    with pytest.raises(ValueError):
        ex.ScheduleSpec("fixed", ((0.0, 0.0, 0.0),), seed=-1)


def test_schedule_expansion_deterministic_and_chunkable():
    s = ex.ScheduleSpec("per-trial-random", ((0, 0, 0), (0, PI / 2, PI / 2), (1, 1, 1)), seed=9)
    whole = s.choices(0, 1000)
    assert np.array_equal(whole, np.concatenate([s.choices(0, 400), s.choices(400, 600)]))
    assert set(np.unique(whole)) == {0, 1, 2}
    alt = ex.ScheduleSpec("alternating", ((0, 0, 0), (1, 1, 1)))
    assert list(alt.choices(3, 4)) == [1, 0, 1, 0]


def test_invalid_inputs():
    with pytest.raises(ValueError):
        ex.run_trials(ex.ScheduleSpec.fixed(), 0)
    with pytest.raises(TypeError):
        ex.run_trials("fixed", 10)
    with pytest.raises(ValueError):
        ex.estimate_correlators(ex.simulate_chunk(ex.ScheduleSpec.fixed(), 0, 0, 0.0, 0))


# -- run_trials ---------------------------------------------------------------


def test_records_are_a_pure_cache():
    b = ex.run_trials(ex.ScheduleSpec.fixed(0.4, -0.2, 1.1), 500, phi=0.3, seed=4)
    for r in b.records():
        d = r.settings.effective_delta
        wb = lhv.omega_B_of(r.omega, r.eta, d)
        assert r.outcomes == (lhv.response(r.omega, r.eta), lhv.response(wb, r.eta), lhv.outcome_C(r.eta))
        assert r.region == lhv.region_of(r.omega, d)


def test_exact_products_at_zero_and_pi():
    b0 = ex.run_trials(ex.ScheduleSpec.fixed(), 10**5, seed=1)
    assert np.all(b0.products == 1)
    bpi = ex.run_trials(ex.ScheduleSpec.fixed(PI, 0, 0), 10**5, seed=1)
    assert np.all(bpi.products == -1)
    # pi reached through the sum of settings and the phase
    bsum = ex.run_trials(ex.ScheduleSpec.fixed(PI / 2, PI / 4, 0), 10**5, phi=PI / 4, seed=2)
    assert np.all(bsum.products == -1)


def test_workers_and_chunks_do_not_change_bytes():
    sched = ex.ScheduleSpec("per-trial-random", ((0, 0, 0), (0.5, 0.1, 2.0)), seed=3)
    ref = ex.run_trials(sched, 50000, 0.2, 77).to_bytes()
    assert ex.run_trials(sched, 50000, 0.2, 77, workers=4, chunk_size=7000).to_bytes() == ref
    assert ex.run_trials(sched, 50000, 0.2, 77, workers=1, chunk_size=1 << 12).to_bytes() == ref
    assert ex.run_trials(sched, 50000, 0.2, 78).to_bytes() != ref


def test_mc_triple_at_pi_over_3():
    b = ex.run_trials(ex.ScheduleSpec.fixed(PI / 3, 0, 0), 10**6, seed=0, workers=4)
    rep = ex.estimate_correlators(b)
    assert rep.triple == pytest.approx(0.5, abs=0.005)
    n = rep.n_trials
    for v in (*rep.singles, *rep.pairs):
        assert abs(v) < 5 / math.sqrt(n)


@pytest.mark.parametrize("delta", [-2.7, -1.0, 0.4, 1.9, 3.0])
def test_mc_agrees_with_quadrature(delta):
    rep = ex.estimate_correlators(ex.run_trials(ex.ScheduleSpec.fixed(delta, 0, 0), 10**5, seed=5))
    assert abs(rep.triple - ex.quadrature_triple_correlation(delta)) < 5 * rep.stderr["ABC"]


# -- estimate_correlators -----------------------------------------------------


class _Fake:
    def __init__(self, a, b, c):
        self.s_a, self.s_b, self.s_c = a, b, c

    def __len__(self):
        return len(self.s_a)



def test_estimate_constant_sequence():
    ones = np.ones(10, np.int8)
    rep = ex.estimate_correlators(_Fake(ones, ones, ones))
    assert rep.triple == 1.0 and rep.stderr["ABC"] == 0.0
    assert rep.singles == (1.0, 1.0, 1.0) and rep.method == "monte_carlo"


def test_estimate_stderr_formula():
    a = np.array([1, -1, 1, 1], np.int8)
    one = np.ones(4, np.int8)
    rep = ex.estimate_correlators(_Fake(a, one, one))
    assert rep.singles[0] == 0.5
    assert rep.stderr["A"] == pytest.approx(np.std(a) / 2)


def test_estimate_independent_of_order():
    b = ex.run_trials(ex.ScheduleSpec.fixed(1.0, 0, 0), 20000, seed=8)
    perm = np.random.default_rng(0).permutation(len(b))
    r1 = ex.estimate_correlators(b)
    r2 = ex.estimate_correlators(_Fake(b.s_a[perm], b.s_b[perm], b.s_c[perm]))
    assert r1 == r2


# -- quadrature ---------------------------------------------------------------


@pytest.mark.parametrize("delta, want", [(0.0, 1.0), (PI / 2, 0.0), (2.0, math.cos(2.0)), (-PI, -1.0)])
def test_quadrature_examples(delta, want):
    assert ex.quadrature_triple_correlation(delta) == pytest.approx(want, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(canonical)
def test_quadrature_cos_law(delta):
    assert abs(ex.quadrature_triple_correlation(delta) - math.cos(delta)) < 1e-9


def test_quadrature_report_has_zero_singles_pairs_and_stderr():
    rep = ex.quadrature_correlators(0.8)
    assert rep.method == "quadrature"
    assert all(v == 0.0 for v in rep.stderr.values())
    assert all(abs(v) < 1e-12 for v in (*rep.singles, *rep.pairs))
    assert rep.triple == pytest.approx(math.cos(0.8), abs=1e-12)


@pytest.mark.parametrize("delta", [0.0, PI / 4, PI / 2, 2.2, -1.3])
def test_conditional_pairs(delta):
    p = ex.conditional_pair_correlations(delta)
    c = math.cos(delta)
    assert p.positive == pytest.approx(c, abs=1e-9)
    assert p.nonpositive == pytest.approx(-c, abs=1e-9)
    assert abs(p.whole) < 1e-12


@pytest.mark.parametrize("delta", [0.0, 0.7, PI / 2, 3.0, -0.7, -PI])
def test_partition_measures(delta):
    mu = ex.partition_measures(delta)
    c = math.cos(delta)
    assert mu[Region.PP] == pytest.approx((1 + c) / 4, abs=1e-12)
    assert mu[Region.MM] == pytest.approx((1 + c) / 4, abs=1e-12)
    assert mu[Region.PM] == pytest.approx((1 - c) / 4, abs=1e-12)
    assert mu[Region.MP] == pytest.approx((1 - c) / 4, abs=1e-12)


def test_jacobian_and_ks_harnesses():
    for d in (0.0, 1.0, -2.5, -PI):
        assert ex.jacobian_deviation(d) < 1e-6
    w, _ = ex.hidden_stream(0, 0, 10**5)
    assert ex.ks_distance_to_g(w) < 0.01
    assert ex.ks_distance_to_g(np.linspace(-PI, PI, 10**5)) > 0.05


# -- star remap ---------------------------------------------------------------


@pytest.mark.parametrize("delta", [0.0, PI / 4, PI / 2, 3 * PI / 4])
def test_star_products_all_plus_one(delta):
    prods = ex.star_products(delta, 10**5, seed=3)
    assert np.all(prods == 1)
    assert ex.star_correlation_check(delta, 1000, seed=9) == 1.0


# -- paradox ------------------------------------------------------------------


def test_paradox_report():
    rep = ex.ghz_paradox_report(0.0, 20000, seed=1)
    got = {r.name: (r.mean_product, r.constant) for r in rep.rows}
    assert got == {"XXX": (1.0, True), "XYY": (-1.0, True), "YXY": (-1.0, True), "YYX": (-1.0, True)}
    assert rep.mermin_model == 4.0
    assert rep.mermin_oracle == pytest.approx(4.0, abs=1e-12)
    assert rep.weak_products == (1, -1, -1, -1)
    assert "(-1)^3" in rep.note


def test_paradox_with_phase():
    rep = ex.ghz_paradox_report(PI / 2, 20000, seed=1)
    xxx = rep.rows[0]
    assert not xxx.constant
    assert abs(xxx.mean_product) < 5 / math.sqrt(20000)
    assert xxx.oracle == pytest.approx(0.0, abs=1e-12)


# -- oracle comparison --------------------------------------------------------


def test_compare_with_oracle():
    g = -PI + 2 * PI * np.arange(5) / 5
    grid = [(a, b, c) for a in g for b in g for c in g]
    table = ex.compare_with_oracle(grid, 0.0, n_joint=20000)
    assert len(table.rows) == 125
    assert table.max_discrepancy < 1e-6
    first = ex.compare_with_oracle([(0, 0, 0)], 0.0, joint_points=()).rows[0]
    assert first.model == pytest.approx(1.0) and first.oracle == pytest.approx(1.0)
    assert first.discrepancy < 1e-9
    (j,) = table.joint
    assert 0.0 <= j.tv_distance <= 1.0
    assert sum(j.model.values()) == pytest.approx(1.0)


def test_empirical_joint_and_tv():
    b = ex.run_trials(ex.ScheduleSpec.fixed(), 1000, seed=0)
    t = ex.empirical_joint(b)
    assert len(t) == 8 and sum(t.values()) == pytest.approx(1.0)
    assert ex.total_variation(t, t) == 0.0
    assert ex.total_variation({(1, 1, 1): 1.0}, {(-1, -1, -1): 1.0}) == 1.0


# -- free will ----------------------------------------------------------------


def test_freewill_audit():
    scheds = [
        ex.ScheduleSpec.fixed(),
        ex.ScheduleSpec("per-trial-random", ((0, 0, 0), (0, PI / 2, PI / 2), (2.0, 0.5, -1.0)), seed=1),
        ex.ScheduleSpec("alternating", ((PI, 0, 0), (1, 1, 1))),
    ]
    rep = ex.freewill_audit(scheds, 10**5, seed=2)
    assert rep.streams_identical
    assert all(stat < 0.01 for _, _, stat, _ in rep.cross_schedule_ks)
    assert rep.setting_conditional_ks
    assert all(stat < 0.02 for _, _, stat, _ in rep.setting_conditional_ks)
    assert all(a < 0.01 and b < 0.01 for _, a, b in rep.chart_ks)


def test_freewill_needs_two_schedules():
    with pytest.raises(ValueError):
        ex.freewill_audit([ex.ScheduleSpec.fixed()], 10)
