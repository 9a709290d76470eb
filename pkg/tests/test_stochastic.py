import numpy as np
import pytest

from adeqsim.stochastic import (
    build_scenario,
    derive_stream,
    sample_bernoulli_state,
    sample_distribution,
    sample_two_state_path,
)
from adeqsim.system import Bus, CGUnit

from conftest import make_model


def test_same_seed_and_tags_replay():
    a = derive_stream(42, ["y1", "u3", "outage"]).rng.random(64)
    b = derive_stream(42, ["y1", "u3", "outage"]).rng.random(64)
    assert np.array_equal(a, b)


def test_distinct_tags_are_uncorrelated():
    a = derive_stream(42, ["y1", "u3"]).rng.standard_normal(10_000)
    b = derive_stream(42, ["y1", "u4"]).rng.standard_normal(10_000)
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) < 0.05
    assert not np.array_equal(a, b)


def test_seed_changes_sequence():
    a = derive_stream(42, ["y1", "u3"]).rng.random(32)
    b = derive_stream(43, ["y1", "u3"]).rng.random(32)
    assert not np.array_equal(a, b)


def test_two_state_no_repair_needed():
    path = sample_two_state_path(100.0, 0.0, 1000, derive_stream(1, ["p"]))
    assert path.all()


def test_two_state_stationary_fraction():
    # closed-form stationary up-fraction MTTF/(MTTF+MTTR) as the oracle
    path = sample_two_state_path(1960.0, 40.0, 10**6, derive_stream(7, ["76mw"]))
    assert path.mean() == pytest.approx(0.98, abs=0.005)


def test_two_state_symmetric():
    path = sample_two_state_path(100.0, 100.0, 10**6, derive_stream(3, ["sym"]))
    assert path.mean() == pytest.approx(0.5, abs=0.005)


def test_two_state_starts_up():
    for seed in range(5):
        path = sample_two_state_path(5.0, 5.0, 100, derive_stream(seed, ["s"]))
        assert path[0]


def test_bernoulli_extremes_and_mean():
    s = derive_stream(11, ["b"])
    assert all(sample_bernoulli_state(1.0, s) for _ in range(20))
    assert not any(sample_bernoulli_state(0.0, s) for _ in range(20))
    draws = [sample_bernoulli_state(0.95, s) for _ in range(10_000)]
    assert np.mean(draws) == pytest.approx(0.95, abs=0.005)


def test_normal_degenerate():
    assert sample_distribution("normal", 3.5, 0.0, derive_stream(1, ["n"])) == 3.5


def test_lognormal_mean_matches_closed_form():
    s = derive_stream(5, ["ln"])
    draws = [sample_distribution("lognormal", 0.0, 0.25, s) for _ in range(100_000)]
    assert np.mean(draws) == pytest.approx(np.exp(0.25**2 / 2), rel=0.01)


def test_truncated_normal_stays_inside():
    s = derive_stream(9, ["tn"])
    draws = [
        sample_distribution("truncated-normal", 0.5, 0.1, s, bounds=(0.0, 1.0))
        for _ in range(2000)
    ]
    assert min(draws) > 0.0 and max(draws) < 1.0


def test_truncated_normal_inconsistent_params():
    s = derive_stream(9, ["tn2"])
    with pytest.raises(ValueError, match="100 attempts"):
        sample_distribution("truncated-normal", 10.0, 1e-6, s, bounds=(0.0, 1.0))


def _outage_model(horizon=24):
    return make_model(
        cg=(
            CGUnit("cg-a", 0, 100.0, 1960.0, 40.0),
            CGUnit("cg-b", 0, 50.0, 450.0, 50.0),
        ),
        horizon=horizon,
    )


def test_build_scenario_deterministic():
    model = _outage_model(horizon=24 * 30)
    a = build_scenario(model, 2, 123)
    b = build_scenario(model, 2, 123)
    assert np.array_equal(a.cg_on, b.cg_on)
    assert np.array_equal(a.load_mw, b.load_mw)
    c = build_scenario(model, 3, 123)
    assert not np.array_equal(a.cg_on, c.cg_on)


def test_build_scenario_all_on_when_failure_free(one_bus_model):
    sc = build_scenario(one_bus_model, 0, 7)
    assert sc.cg_on.all()
    assert sc.load_mw[:, 0] == pytest.approx(100.0)


def test_scenario_availability_matches_stationary_probability():
    # average over 5 simulated years against MTTF/(MTTF+MTTR) per unit
    model = _outage_model(horizon=8760)
    ups = np.zeros(2)
    for y in range(5):
        sc = build_scenario(model, y, 2024)
        ups += sc.cg_on.mean(axis=0)
    ups /= 5
    for k, u in enumerate(model.cg_units):
        expect = u.mttf / (u.mttf + u.mttr)
        assert ups[k] == pytest.approx(expect, abs=0.01)


def test_rg_availability_is_state_times_capacity_factor():
    from adeqsim.system import RGUnit

    cf = np.linspace(0.0, 1.0, 24)
    model = make_model(
        cg=(CGUnit("cg0", 0, 100.0, 1e9, 0.0),),
        rg=(RGUnit("rg0", 0, 80.0, "wind", 1e9, 0.0),),
        series={"load0": np.full(24, 100.0), "wind": cf},
    )
    sc = build_scenario(model, 0, 1)
    assert sc.rg_on.all()
    assert sc.rg_available_mw[:, 0] == pytest.approx(80.0 * cf)
