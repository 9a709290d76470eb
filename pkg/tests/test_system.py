import json

import numpy as np
import pytest

from adeqsim.system import (
    ConfigError,
    attach_ges,
    load_system_config,
    scale_res_penetration,
)

from conftest import Bus, CGUnit, Line, RGUnit, ideal_es, make_model

MINIMAL_DOC = json.dumps({
    "buses": [{"id": 0, "kind": "PQ", "load_series": "load0"}],
    "cg_units": [{"bus": 0, "capacity": 150.0, "mttf": 1960, "mttr": 40}],
    "series": {"load0": [100.0] * 24},
    "study": {"horizon_hours": 24, "gamma": 0.05},
})


def test_minimal_document_loads():
    model = load_system_config(MINIMAL_DOC)
    assert model.horizon == 24
    assert model.total_cg_capacity == 150.0
    assert model.load_matrix.shape == (24, 1)


def test_dangling_bus_reference():
    doc = json.loads(MINIMAL_DOC)
    doc["buses"].append({"id": 1, "kind": "PV"})
    doc["lines"] = [{"from": 0, "to": 99, "reactance": 0.1, "flow_limit": 50.0}]
    with pytest.raises(ConfigError, match="references bus"):
        load_system_config(json.dumps(doc))


def test_dangling_series_reference():
    doc = json.loads(MINIMAL_DOC)
    doc["buses"][0]["load_series"] = "nope"
    with pytest.raises(ConfigError, match="dangling series reference"):
        load_system_config(json.dumps(doc))


def test_parse_error_reports_position():
    with pytest.raises(ConfigError, match="line 1"):
        load_system_config("{nope}")


def test_gamma_invariant():
    doc = json.loads(MINIMAL_DOC)
    doc["study"]["gamma"] = 1.5
    with pytest.raises(ConfigError, match="gamma"):
        load_system_config(json.dumps(doc))


def test_round_trip_is_structurally_identical():
    doc = json.loads(MINIMAL_DOC)
    doc["ges_units"] = [{
        "name": "v", "kind": "VES-T", "bus": 0, "p_charge_max": 30.0,
        "p_discharge_max": 30.0, "energy_rated": 30.0, "eta_c": 1.0,
        "eta_d": 1.0, "self_discharge": 0.5, "soc_init": 0.6,
        "ddu": {"b_h_upper": 6.0}, "baseline": {"charge_mean_mw": 9.0},
        "diu_bounds": {"min_mean": 0.1, "max_mean": 0.9},
    }]
    model = load_system_config(json.dumps(doc))
    cfg = model.to_config()
    model2 = load_system_config(json.dumps(cfg))
    assert model2.to_config() == cfg


def test_series_csv_sidecar(tmp_path):
    csv_path = tmp_path / "series.csv"
    csv_path.write_text("load0,price\n" + "\n".join(
        f"{100.0 + h},{20.0 + h}" for h in range(24)))
    doc = json.loads(MINIMAL_DOC)
    del doc["series"]
    doc["series_csv"] = ["series.csv"]
    doc["study"]["price_series"] = "price"
    cfg_path = tmp_path / "sys.json"
    cfg_path.write_text(json.dumps(doc))
    from adeqsim.system import load_system_config_path

    model = load_system_config_path(cfg_path)
    assert model.load_matrix[5, 0] == 105.0
    assert model.price[3] == 23.0


class TestScaleResPenetration:
    def _fleet(self):
        return make_model(
            buses=(Bus(0, "PV", "load0"), Bus(1, "PQ", "load0")),
            lines=(Line("l0", 0, 1, 0.1, 10_000.0),),
            cg=(CGUnit("cg0", 0, 3405.0, 1960, 40),),
            series={"load0": np.full(24, 100.0), "wind": np.full(24, 0.4)},
            rg_template={"capacity_factor_series": "wind"},
        )

    def test_zero_fraction_identity(self):
        model = self._fleet()
        assert scale_res_penetration(model, 0.0) is model

    def test_hand_arithmetic_split(self):
        out = scale_res_penetration(self._fleet(), 0.3)
        assert out.total_rg_capacity == pytest.approx(1021.5)
        assert out.total_cg_capacity == pytest.approx(2383.5)

    def test_total_capacity_preserved_exactly(self):
        model = self._fleet()
        for f in (0.1, 0.3, 0.77):
            out = scale_res_penetration(model, f)
            assert out.total_cg_capacity + out.total_rg_capacity == 3405.0

    def test_full_conversion(self):
        out = scale_res_penetration(self._fleet(), 1.0)
        assert out.total_cg_capacity == 0.0
        assert out.total_rg_capacity == 3405.0
        assert out.rg_units[-1].bus == 0


class TestAttachGes:
    def _rg_model(self):
        return make_model(
            buses=(Bus(0, "PV", None), Bus(1, "PQ", "load0")),
            lines=(Line("l0", 0, 1, 0.1, 10_000.0),),
            cg=(CGUnit("cg0", 0, 200.0, 1e9, 0.0),),
            rg=(RGUnit("rg0", 0, 100.0, "wind", 1e9, 0.0),),
            series={"load0": np.full(24, 100.0), "wind": np.full(24, 0.5)},
        )

    def test_bundled_sizing(self):
        out = attach_ges(self._rg_model(), ideal_es(kind="ES-R"),
                         "bundled-with-rg", 0.3, 4.0)
        (g,) = out.ges_units
        assert g.bus == 0
        assert g.p_discharge_max == pytest.approx(30.0)
        assert g.energy_rated == pytest.approx(120.0)

    def test_load_bus_sizing(self):
        out = attach_ges(self._rg_model(), ideal_es(kind="VES-T"),
                         "at-load-buses", 0.3, 1.0)
        (g,) = out.ges_units
        assert g.bus == 1
        assert g.p_discharge_max == pytest.approx(30.0)
        assert g.energy_rated == pytest.approx(30.0)

    def test_equal_units_share_half(self):
        model = self._rg_model()
        model = model.with_rg(model.rg_units + (
            RGUnit("rg1", 1, 100.0, "wind", 1e9, 0.0),))
        out = attach_ges(model, ideal_es(kind="ES-R"), "bundled-with-rg", 0.3, 4.0)
        assert [g.capacity_share for g in out.ges_units] == [0.5, 0.5]

    def test_bundled_requires_rg(self):
        model = make_model(cg=(CGUnit("cg0", 0, 100.0, 1e9, 0.0),))
        with pytest.raises(ConfigError, match="no RG"):
            attach_ges(model, ideal_es(), "bundled-with-rg", 0.3, 4.0)

    def test_topology_and_load_untouched(self):
        model = self._rg_model()
        out = attach_ges(model, ideal_es(kind="ES-R"), "bundled-with-rg", 0.3, 4.0)
        assert out.lines is model.lines
        assert out.series["load0"] is model.series["load0"]
