import numpy as np
import pytest

from adeqsim.ges import GesUnit
from adeqsim.system import (
    Bus,
    CGUnit,
    Line,
    RGUnit,
    StudyConfig,
    SystemModel,
)


def make_model(*, buses=None, lines=(), cg=(), rg=(), ges=(), series=None,
               horizon=24, gamma=0.05, seed=1, price_series=None,
               scenarios=3, years=1, rg_template=None):
    if buses is None:
        buses = (Bus(0, "PQ", "load0"),)
    if series is None:
        series = {"load0": np.full(24, 100.0)}
    study = StudyConfig(horizon_hours=horizon, gamma=gamma, master_seed=seed,
                        price_series=price_series, scenarios=scenarios,
                        years=years, rg_template=rg_template)
    return SystemModel(buses=tuple(buses), lines=tuple(lines), cg_units=tuple(cg),
                       rg_units=tuple(rg), ges_units=tuple(ges),
                       series=dict(series), study=study).validate()


@pytest.fixture
def one_bus_model():
    return make_model(
        cg=(CGUnit("cg0", 0, 200.0, 1e9, 0.0),),
    )


def ideal_es(name="es0", bus=0, power=30.0, duration=4.0, **kw):
    args = dict(
        name=name, kind="ES-D", bus=bus,
        p_charge_max=power, p_discharge_max=power,
        energy_rated=power * duration,
        eta_c=1.0, eta_d=1.0, self_discharge=0.0,
        soc_init=0.5, soc_min=0.0, soc_max=1.0, for_rate=0.0,
    )
    args.update(kw)
    return GesUnit(**args)


__all__ = ["make_model", "ideal_es", "Bus", "Line", "CGUnit", "RGUnit"]
