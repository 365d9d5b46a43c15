import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import enumerate_vertices, merit_order_cost, random_benign_case
from pvdispatch.dispatch import (
    DispatchCase,
    DispatchError,
    EvaluationReport,
    GeneratorSpec,
    build_da_lp,
    build_rt_lp,
    compute_metrics,
    default_fleet,
    load_fleet_csv,
    nmae,
    save_fleet_csv,
    solve_da,
    solve_rt,
)
from pvdispatch.lp import check_solution, LpSolution, LpStatus, solve_lp


def case_t1(demand, forecast, actual=None, fleet=None, voll=1000.0):
    return DispatchCase(
        demand=[demand],
        forecast=[forecast],
        actual=[actual if actual is not None else forecast],
        fleet=fleet or default_fleet(),
        voll=voll,
    )


class TestBuildDaLp:
    def test_t1_shape(self):
        lp = build_da_lp(case_t1(80.0, 0.0))
        assert lp.n_vars == 5  # 3 generators + rnw + ls
        assert lp.A_eq.shape == (1, 5)
        # up and down ramp rows per generator, degenerate at T=1
        assert lp.A_ub.shape == (6, 5)
        np.testing.assert_array_equal(lp.A_ub, 0.0)

    def test_t2_ramp_rows_include_wrap(self):
        case = DispatchCase(
            demand=[50.0, 60.0], forecast=[0.0, 0.0], actual=[0.0, 0.0],
            fleet=default_fleet(),
        )
        lp = build_da_lp(case)
        # 2 up + 2 down rows per generator, covering t=1->0 and the wrap 0->1
        assert lp.A_ub.shape == (12, lp.n_vars)
        per_gen = lp.A_ub[:4, :]
        assert np.count_nonzero(per_gen) == 8

    def test_zero_demand_zero_solution(self):
        case = DispatchCase(
            demand=[0.0, 0.0], forecast=[5.0, 5.0], actual=[5.0, 5.0],
            fleet=default_fleet(),
        )
        da = solve_da(case)
        assert da.objective == pytest.approx(0.0, abs=1e-9)
        np.testing.assert_allclose(da.p, 0.0, atol=1e-9)

    def test_inconsistent_lengths_rejected(self):
        with pytest.raises(DispatchError, match="lengths"):
            DispatchCase(
                demand=[1.0, 2.0], forecast=[0.0], actual=[0.0, 0.0],
                fleet=default_fleet(),
            )


class TestSolveDa:
    def test_merit_order_fixture(self):
        da = solve_da(case_t1(80.0, 0.0))
        np.testing.assert_allclose(da.p[:, 0], [50.0, 30.0, 0.0], atol=1e-6)
        assert da.objective == pytest.approx(1750.0, abs=1e-6)

    def test_merit_order_matches_fill_oracle(self):
        fleet = default_fleet()
        for demand in (10.0, 55.0, 80.0, 101.0, 130.0):
            expected_cost, expected_sched = merit_order_cost(demand, fleet)
            da = solve_da(case_t1(demand, 0.0))
            assert da.objective == pytest.approx(expected_cost, abs=1e-6)
            np.testing.assert_allclose(da.p[:, 0], expected_sched, atol=1e-6)

    def test_free_renewable_preferred(self):
        da = solve_da(case_t1(20.0, 30.0))
        assert da.rnw[0] == pytest.approx(20.0, abs=1e-9)
        np.testing.assert_allclose(da.p[:, 0], 0.0, atol=1e-9)
        assert da.objective == pytest.approx(0.0, abs=1e-9)

    def test_shortage_sheds_at_voll(self):
        da = solve_da(case_t1(200.0, 0.0))
        assert da.ls[0] == pytest.approx(70.0, abs=1e-6)
        expected = 50 * 20 + 50 * 25 + 30 * 30 + 70 * 1000
        assert da.objective == pytest.approx(expected, abs=1e-6)

    def test_t1_against_vertex_enumeration(self):
        for demand, forecast in ((80.0, 0.0), (60.0, 25.0), (140.0, 10.0)):
            case = case_t1(demand, forecast)
            lp = build_da_lp(case)
            status, best, _ = enumerate_vertices(lp)
            assert status == "optimal"
            da = solve_da(case)
            assert da.objective == pytest.approx(best, abs=1e-6)

    def test_ramp_constraints_bind(self):
        # Demand jumps by 60; each unit can move at most its ramp.
        fleet = (
            GeneratorSpec("A", cost=10.0, pmax=100.0, ramp=15.0),
            GeneratorSpec("B", cost=50.0, pmax=100.0, ramp=15.0, rt_available=True),
        )
        case = DispatchCase(
            demand=[20.0, 80.0, 20.0, 20.0], forecast=[0.0] * 4,
            actual=[0.0] * 4, fleet=fleet,
        )
        da = solve_da(case)
        moves_a = np.abs(np.diff(np.r_[da.p[0], da.p[0, 0]]))
        moves_b = np.abs(np.diff(np.r_[da.p[1], da.p[1, 0]]))
        assert moves_a.max() <= 15.0 + 1e-6
        assert moves_b.max() <= 15.0 + 1e-6
        balance = da.p.sum(axis=0) + da.rnw + da.ls
        np.testing.assert_allclose(balance, case.demand, atol=1e-6)


class TestSolveRt:
    def test_zero_error_closure_single(self):
        rng = np.random.Generator(np.random.PCG64(0))
        case = random_benign_case(rng)
        da = solve_da(case)
        rt = solve_rt(case, da)
        assert rt.objective == pytest.approx(0.0, abs=1e-6)
        assert rt.spill.sum() == pytest.approx(0.0, abs=1e-6)
        np.testing.assert_allclose(rt.ls_rt, 0.0, atol=1e-6)

    def test_shortfall_covered_by_flexible_unit(self):
        t = np.arange(24)
        demand = 80 + 15 * np.sin(2 * np.pi * (t - 15) / 24)
        pv = np.clip(24 * np.sin(np.pi * (t - 6) / 12), 0.0, None)
        actual = pv.copy()
        actual[12] -= 10.0
        case = DispatchCase(
            demand=demand, forecast=pv, actual=actual, fleet=default_fleet()
        )
        da = solve_da(case)
        rt = solve_rt(case, da)
        assert rt.delta[2, 12] == pytest.approx(10.0, abs=1e-6)
        assert rt.objective == pytest.approx(300.0, abs=1e-6)  # 10 MWh at $30

    def test_surplus_spilled_when_nothing_can_back_down(self):
        # Day-ahead sees no renewables; actuals exceed demand headroom and
        # the only flexible unit was never scheduled, so surplus spills.
        fleet = default_fleet()
        case = DispatchCase(
            demand=[80.0], forecast=[0.0], actual=[30.0], fleet=fleet
        )
        da = solve_da(case)
        rt = solve_rt(case, da)
        # 30 MW arrives; demand can absorb it by backing down... only G3 is
        # flexible and holds 0 MW day-ahead, so nothing backs down: spill.
        assert rt.spill[0] == pytest.approx(30.0, abs=1e-6)
        assert rt.objective == pytest.approx(0.0, abs=1e-6)

    def test_surplus_first_relieves_scheduled_flexible_unit(self):
        case = case_t1(120.0, 0.0, actual=25.0)
        da = solve_da(case)
        assert da.p[2, 0] == pytest.approx(20.0, abs=1e-6)  # G3 scheduled
        rt = solve_rt(case, da)
        # Backing G3 down earns -30/MWh; 20 MW down, remaining 5 spills.
        assert rt.delta[2, 0] == pytest.approx(-20.0, abs=1e-6)
        assert rt.spill[0] == pytest.approx(5.0, abs=1e-6)
        assert rt.objective == pytest.approx(-600.0, abs=1e-6)

    def test_surplus_restores_shed_load_before_spilling(self):
        case = case_t1(200.0, 0.0, actual=40.0)
        da = solve_da(case)
        assert da.ls[0] == pytest.approx(70.0, abs=1e-6)
        rt = solve_rt(case, da)
        # Serving previously shed load credits VOLL, far better than spill.
        assert rt.ls_rt[0] == pytest.approx(-40.0, abs=1e-6)
        assert rt.spill[0] == pytest.approx(0.0, abs=1e-6)
        assert rt.objective == pytest.approx(-40000.0, abs=1e-6)

    def test_frozen_units_hold_day_ahead_schedule(self):
        rng = np.random.Generator(np.random.PCG64(3))
        case = random_benign_case(rng)
        actual = case.actual * 0.6
        case2 = DispatchCase(
            demand=case.demand, forecast=case.forecast, actual=actual,
            fleet=case.fleet, voll=case.voll,
        )
        da = solve_da(case2)
        rt = solve_rt(case2, da)
        for v, gen in enumerate(case2.fleet):
            if not gen.rt_available:
                np.testing.assert_array_equal(rt.delta[v], 0.0)

    def test_rt_capacity_and_ramp_respected(self):
        rng = np.random.Generator(np.random.PCG64(4))
        for trial in range(10):
            case = random_benign_case(rng)
            scale = rng.uniform(0.3, 1.7, case.horizon)
            case = DispatchCase(
                demand=case.demand, forecast=case.forecast,
                actual=case.forecast * scale, fleet=case.fleet, voll=case.voll,
            )
            da = solve_da(case)
            rt = solve_rt(case, da)
            combined = da.p + rt.delta
            for v, gen in enumerate(case.fleet):
                assert combined[v].min() >= -1e-6
                assert combined[v].max() <= gen.pmax + 1e-6
                moves = np.abs(np.diff(np.r_[combined[v], combined[v, 0]]))
                assert moves.max() <= gen.ramp + 1e-6
            assert (rt.spill <= case.actual + 1e-6).all()
            total_shed = da.ls + rt.ls_rt
            assert total_shed.min() >= -1e-6
            assert (total_shed <= case.demand + 1e-6).all()


class TestMetrics:
    def test_co2_identity_fixtures(self):
        # emission factor 202 kg/MWh
        assert abs(263.7 * 202 - 53267) <= 1.0
        assert abs(108.7 * 202 - 21957) <= 1.0
        assert abs(140.56 * 202 - 28393) <= 1.0

    def test_report_co2_consistency(self):
        case = case_t1(120.0, 0.0)
        da = solve_da(case)
        rt = solve_rt(case, da)
        report = compute_metrics(
            case, da, rt, np.array([0.0]), np.array([1.0])
        )
        assert report.co2_kg == report.gas_mwh * 202.0
        assert report.gas_mwh == pytest.approx(20.0, abs=1e-6)

    def test_nmae_perfect_zero(self):
        assert nmae(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0

    def test_nmae_hand_example(self):
        assert nmae(np.array([5.0, 5.0]), np.array([0.0, 10.0])) == pytest.approx(1.0)

    def test_nmae_zero_mean_rejected(self):
        with pytest.raises(DispatchError, match="zero mean"):
            nmae(np.array([1.0]), np.array([0.0]))

    @given(
        scale=st.floats(0.01, 100.0),
        values=st.lists(st.floats(0.0, 50.0), min_size=2, max_size=12),
        offsets=st.lists(st.floats(-5.0, 5.0), min_size=2, max_size=12),
    )
    @settings(max_examples=60, deadline=None)
    def test_nmae_scale_invariance(self, scale, values, offsets):
        n = min(len(values), len(offsets))
        actual = np.array(values[:n]) + 1.0  # keep the mean positive
        forecast = np.clip(actual + np.array(offsets[:n]), 0.0, None)
        base = nmae(forecast, actual)
        scaled = nmae(scale * forecast, scale * actual)
        assert scaled == pytest.approx(base, rel=1e-9, abs=1e-12)

    def test_cost_is_sum_of_objectives(self):
        case = case_t1(90.0, 10.0, actual=2.0)
        da = solve_da(case)
        rt = solve_rt(case, da)
        report = compute_metrics(case, da, rt, case.forecast, case.actual)
        assert report.cost_usd == pytest.approx(da.objective + rt.objective)


class TestProperties:
    def test_zero_error_closure_many_cases(self):
        rng = np.random.Generator(np.random.PCG64(123))
        for _ in range(20):
            case = random_benign_case(rng)
            da = solve_da(case)
            rt = solve_rt(case, da)
            assert abs(rt.objective) <= 1e-6
            assert rt.spill.max(initial=0.0) <= 1e-6
            assert np.abs(rt.ls_rt).max(initial=0.0) <= 1e-6

    def test_monotone_shortfall_cost(self):
        rng = np.random.Generator(np.random.PCG64(321))
        for _ in range(8):
            case = random_benign_case(rng)
            da = solve_da(case)
            rt_full = solve_rt(case, da)
            cost_full = da.objective + rt_full.objective
            shrink = rng.uniform(0.3, 0.95, case.horizon)
            case_low = DispatchCase(
                demand=case.demand, forecast=case.forecast,
                actual=case.actual * shrink, fleet=case.fleet, voll=case.voll,
            )
            rt_low = solve_rt(case_low, da)
            cost_low = da.objective + rt_low.objective
            assert cost_low >= cost_full - 1e-6

    def test_spill_never_exceeds_total_actual(self):
        rng = np.random.Generator(np.random.PCG64(55))
        for _ in range(10):
            case = random_benign_case(rng)
            boost = rng.uniform(1.0, 2.5, case.horizon)
            case2 = DispatchCase(
                demand=case.demand, forecast=case.forecast,
                actual=case.actual * boost, fleet=case.fleet, voll=case.voll,
            )
            da = solve_da(case2)
            rt = solve_rt(case2, da)
            assert rt.spill.sum() <= case2.actual.sum() + 1e-6

    def test_emitted_schedules_pass_lp_audit(self):
        rng = np.random.Generator(np.random.PCG64(77))
        case = random_benign_case(rng)
        case = DispatchCase(
            demand=case.demand, forecast=case.forecast,
            actual=case.actual * rng.uniform(0.5, 1.5, case.horizon),
            fleet=case.fleet, voll=case.voll,
        )
        lp_da = build_da_lp(case)
        sol_da = solve_lp(lp_da)
        assert check_solution(lp_da, sol_da, tol=1e-6) == []
        da = solve_da(case)
        lp_rt = build_rt_lp(case, da)
        sol_rt = solve_lp(lp_rt)
        assert check_solution(lp_rt, sol_rt, tol=1e-6) == []


class TestFleetCsv:
    def test_roundtrip(self, tmp_path):
        p = tmp_path / "fleet.csv"
        save_fleet_csv(default_fleet(), p)
        back = load_fleet_csv(p)
        assert back == default_fleet()

    def test_header_enforced(self, tmp_path):
        p = tmp_path / "fleet.csv"
        p.write_text("nom,cost\nG1,5\n")
        with pytest.raises(DispatchError, match="header"):
            load_fleet_csv(p)

    def test_bad_flag_reported_with_row(self, tmp_path):
        p = tmp_path / "fleet.csv"
        p.write_text(
            "name,cost,pmax,pmin,ramp,rt_available,gas_fired\n"
            "G1,20,50,0,20,maybe,0\n"
        )
        with pytest.raises(DispatchError, match="row 1"):
            load_fleet_csv(p)

    def test_validation_voll_must_beat_costs(self):
        with pytest.raises(DispatchError, match="voll"):
            case_t1(10.0, 0.0, voll=25.0)
