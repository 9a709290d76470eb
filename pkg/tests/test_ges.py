import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adeqsim.ges import (
    DduSpec,
    GesUnit,
    ThermalVesSpec,
    available_energy,
    ddu_soc_bounds,
    initial_state,
    response_discomfort,
    step_soc,
    thermal_to_ges,
    update_degradation,
)
from adeqsim.stochastic import derive_stream

from conftest import ideal_es


def _battery(**kw):
    from adeqsim.ges import DegradationSpec

    args = dict(
        name="b", kind="ES-D", bus=0, p_charge_max=30.0, p_discharge_max=30.0,
        energy_rated=100.0, eta_c=1.0, eta_d=1.0, self_discharge=0.0,
        soc_init=0.5, degradation=DegradationSpec(life_cycles=4000.0),
    )
    args.update(kw)
    return GesUnit(**args)


class TestStepSoc:
    def test_lossless_bookkeeping(self):
        unit = _battery()
        s = initial_state(unit)
        s = step_soc(s, 10.0, 0.0, unit, dt=1.0)
        assert s.soc == pytest.approx(0.6, abs=1e-12)
        assert s.charge_history == [10.0]

    def test_self_discharge_only(self):
        unit = _battery(self_discharge=0.05, soc_init=0.8)
        s = step_soc(initial_state(unit), 0.0, 0.0, unit)
        assert s.soc == pytest.approx(0.76, abs=1e-12)

    def test_discharge_efficiency_draws_more(self):
        unit = _battery(eta_d=0.9, p_discharge_max=9.0)
        s = step_soc(initial_state(unit), 0.0, 9.0, unit)
        assert s.soc == pytest.approx(0.4, abs=1e-12)

    def test_simultaneous_power_rejected(self):
        unit = _battery()
        with pytest.raises(ValueError, match="simultaneous"):
            step_soc(initial_state(unit), 5.0, 5.0, unit)

    def test_soc_escape_signals_caller_bug(self):
        unit = _battery(soc_init=0.99)
        with pytest.raises(ValueError, match="caller"):
            step_soc(initial_state(unit), 30.0, 0.0, unit)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.booleans(), st.floats(0.0, 1.0)), min_size=1,
                    max_size=40))
    def test_energy_conservation_ideal(self, moves):
        # eta = 1, eps = 0: charged - discharged == dSoC * S exactly
        unit = ideal_es(power=20.0, duration=5.0, soc_init=0.5)
        s = initial_state(unit)
        charged = discharged = 0.0
        for is_charge, frac in moves:
            room = (1.0 - s.soc) * unit.energy_rated
            avail = s.soc * unit.energy_rated
            if is_charge:
                p = min(frac * unit.p_charge_max, room)
                s = step_soc(s, p, 0.0, unit)
                charged += p
            else:
                p = min(frac * unit.p_discharge_max, avail)
                s = step_soc(s, 0.0, p, unit)
                discharged += p
        d_soc = s.soc - unit.soc_init
        assert charged - discharged == pytest.approx(
            d_soc * unit.energy_rated, rel=1e-9, abs=1e-9)


class TestDegradation:
    def test_zero_throughput_no_change(self):
        unit = _battery(energy_rated=400.0)
        s0 = initial_state(unit)
        s1 = update_degradation(s0, 0.0, 0.0, 0.5, unit)
        assert s1.alpha == s0.alpha == 0.0
        assert s1.energy_available == 400.0

    def test_hand_evaluated_increment(self):
        # kappa (Ec+Ed)/S / L with Table-style constants
        unit = _battery(energy_rated=400.0)
        s = update_degradation(initial_state(unit), 200.0, 200.0, 0.5, unit)
        assert s.alpha == pytest.approx(1.25e-4, rel=1e-12)
        assert s.energy_available == pytest.approx(400.0 * (1 - 0.2 * 1.25e-4))

    def test_endpoint_after_full_life(self):
        # cumulative-sum oracle: 8000 cycles of S/2 + S/2 throughput
        unit = _battery(energy_rated=400.0)
        s = initial_state(unit)
        alpha_oracle = 0.0
        for _ in range(8000):
            s = update_degradation(s, 200.0, 200.0, 0.5, unit)
            alpha_oracle = min(1.0, alpha_oracle + 0.5 * (400.0 / 400.0) / 4000.0)
        assert s.alpha == alpha_oracle
        assert s.energy_available == pytest.approx(0.8 * 400.0, abs=1e-9)
        assert s.energy_available == 400.0 * (1.0 - 0.2 * alpha_oracle)

    def test_alpha_monotone_and_capacity_banded(self):
        rng = np.random.default_rng(3)
        unit = _battery(energy_rated=100.0)
        s = initial_state(unit)
        prev = 0.0
        for _ in range(200):
            s = update_degradation(s, rng.uniform(0, 50), rng.uniform(0, 50),
                                   rng.uniform(0.01, 0.99), unit)
            assert s.alpha >= prev
            prev = s.alpha
            assert 0.8 * 100.0 - 1e-9 <= s.energy_available <= 100.0 + 1e-9


class TestDduBounds:
    def test_no_spec_is_identity(self):
        unit = ideal_es()
        b = ddu_soc_bounds(0.1, 0.9, unit, 0.3, derive_stream(1, ["d"]))
        assert (b.ddu_min, b.ddu_max) == (0.1, 0.9)

    def test_incentive_location_parameter(self):
        spec = DduSpec(a_g_lower=1.0, price_charge=50.0, price_cap=300.0)
        assert spec.incentive_mean_lower == pytest.approx(1.0 / 6.0)

    def test_zero_levels_reproduce_diu(self):
        unit = ideal_es(ddu=DduSpec(a_g_lower=0.0, a_g_upper=0.0,
                                    b_h_lower=0.0, b_h_upper=0.0))
        b = ddu_soc_bounds(0.2, 0.8, unit, 0.5, derive_stream(2, ["d"]))
        assert b.ddu_min == pytest.approx(0.2)
        assert b.ddu_max == pytest.approx(0.8)

    def test_discomfort_strictly_contracts_upper(self):
        # g == 0, b_h = 6, RD = 0.2 -> location 1.2; every draw contracts
        unit = ideal_es(ddu=DduSpec(a_g_lower=0.0, a_g_upper=0.0, b_h_upper=6.0))
        hits = []
        for k in range(200):
            b = ddu_soc_bounds(0.0, 0.9, unit, 0.2, derive_stream(k, ["mc"]))
            hits.append(b.ddu_max)
        assert max(hits) < 0.9
        q = ddu_soc_bounds(0.0, 0.9, unit, 0.2, derive_stream(1, ["q"]),
                           m_samples=10_000)
        assert q.max_quantile(0.9999) < 0.9

    def test_pure_discomfort_contained_in_diu(self):
        unit = ideal_es(ddu=DduSpec(a_g_lower=0.0, a_g_upper=0.0))
        for k in range(50):
            b = ddu_soc_bounds(0.25, 0.75, unit, 0.4, derive_stream(k, ["c"]))
            assert 0.25 <= b.ddu_min <= 1.0
            assert 0.0 <= b.ddu_max <= 0.75

    def test_bounds_clamped_to_unit_interval(self):
        unit = ideal_es(ddu=DduSpec(b_h_lower=50.0, b_h_upper=50.0))
        b = ddu_soc_bounds(0.5, 0.9, unit, 1.0, derive_stream(5, ["x"]))
        assert 0.0 <= b.ddu_min <= 1.0
        assert 0.0 <= b.ddu_max <= 1.0


class TestResponseDiscomfort:
    def test_no_response_zero(self):
        unit = ideal_es(ddu=DduSpec())
        assert response_discomfort([], [], 0.5, 0.5, unit, horizon=24) == 0.0

    def test_hand_evaluated_mix(self):
        unit = ideal_es(power=30.0, ddu=DduSpec(discomfort_weight=0.5))
        rd = response_discomfort([0.0], [30.0], 0.4, 0.5, unit, horizon=24)
        assert rd == pytest.approx(0.5 / 24 + 0.5 * 0.1, abs=1e-12)

    def test_weight_one_ignores_soc(self):
        unit = ideal_es(power=30.0, ddu=DduSpec(discomfort_weight=1.0))
        a = response_discomfort([15.0], [0.0], 0.1, 0.9, unit, horizon=24)
        b = response_discomfort([15.0], [0.0], 0.9, 0.1, unit, horizon=24)
        assert a == b

    def test_bounded_when_normalized(self):
        rng = np.random.default_rng(8)
        unit = ideal_es(power=10.0, ddu=DduSpec(discomfort_weight=0.3))
        for _ in range(50):
            n = int(rng.integers(1, 24))
            c = rng.uniform(0, 10, n)
            d = np.zeros(n)
            rd = response_discomfort(c, d, rng.uniform(0, 1), rng.uniform(0, 1),
                                     unit, horizon=24)
            assert 0.0 <= rd <= 1.0


class TestThermalMapping:
    def test_limit_large_rc(self):
        spec = ThermalVesSpec(1000.0, 1000.0, 1.0, 18.0, 24.0, (30.0,), 21.0)
        eps, _, _ = thermal_to_ges(spec)
        assert eps == pytest.approx(0.0, abs=1e-5)

    def test_direct_exponential(self):
        spec = ThermalVesSpec(2.0, 1.0, 1.0, 18.0, 24.0, (30.0,), 21.0)
        eps, energy, power = thermal_to_ges(spec, dt=1.0)
        assert eps == pytest.approx(1.0 - np.exp(-0.5), rel=1e-12)
        assert energy == pytest.approx(6.0 / (2.0 * eps), rel=1e-12)
        assert power[0] == pytest.approx((30.0 - 21.0) / 2.0, rel=1e-12)

    def test_smaller_rc_means_smaller_capacity(self):
        # fixed band and R: larger self-discharge (smaller RC) shrinks S
        energies = []
        for cap in [8.0, 4.0, 2.0, 1.0]:
            spec = ThermalVesSpec(2.0, cap, 1.0, 18.0, 24.0, (30.0,), 21.0)
            _, energy, _ = thermal_to_ges(spec)
            energies.append(energy)
        assert all(a > b for a, b in zip(energies, energies[1:]))


def test_available_energy_without_degradation():
    unit = ideal_es()
    assert available_energy(0.7, unit) == unit.energy_rated
