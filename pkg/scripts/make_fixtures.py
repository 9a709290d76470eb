#!/usr/bin/env python3
"""Regenerate the bundled fixture systems (deterministic).

Writes JSON configs (and the 24-bus CSV series sidecar) into
src/adeqsim/fixtures/.  Run from the repository root:

    python3 scripts/make_fixtures.py
"""

import csv
import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "adeqsim" / "fixtures"

# hourly shape: night valley, morning rise, midday plateau, evening peak
DAY_SHAPE = np.array([
    0.62, 0.58, 0.56, 0.55, 0.56, 0.60, 0.68, 0.78, 0.86, 0.91, 0.93, 0.92,
    0.91, 0.90, 0.90, 0.91, 0.94, 0.99, 1.00, 0.97, 0.91, 0.83, 0.74, 0.67,
])
WEEK_FACTOR = np.array([1.0, 1.0, 0.99, 0.99, 1.0, 0.93, 0.90])

PRICE_DAY = np.array([
    18.0, 16.0, 15.0, 15.0, 16.0, 20.0, 32.0, 48.0, 62.0, 70.0, 74.0, 72.0,
    68.0, 64.0, 62.0, 64.0, 72.0, 88.0, 104.0, 98.0, 80.0, 58.0, 40.0, 26.0,
])


def weekly_profile(n_hours, scale=1.0, jitter=0.0, rng=None):
    out = np.empty(n_hours)
    for t in range(n_hours):
        d = (t // 24) % 7
        out[t] = DAY_SHAPE[t % 24] * WEEK_FACTOR[d]
    if jitter and rng is not None:
        out = out * (1.0 + jitter * rng.standard_normal(n_hours))
    return out * scale


def wind_cf(n_hours, rng, mean=0.32):
    """Smooth synthetic capacity-factor series in [0.02, 0.95]."""
    ar = np.empty(n_hours)
    x = 0.0
    for t in range(n_hours):
        x = 0.96 * x + 0.28 * rng.standard_normal()
        ar[t] = x
    diurnal = 0.08 * np.sin(2 * np.pi * (np.arange(n_hours) % 24) / 24.0 + 4.0)
    raw = mean + 0.16 * ar + diurnal
    return np.clip(raw, 0.02, 0.95)


def price_series(n_hours, rng, jitter=0.10):
    base = np.tile(PRICE_DAY, n_hours // 24 + 1)[:n_hours]
    return np.round(base * (1.0 + jitter * rng.standard_normal(n_hours)), 2)


def write(name, doc):
    path = OUT / name
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print("wrote", path)


def smoke_1bus():
    rng = np.random.default_rng(101)
    load = np.round(weekly_profile(168, scale=120.0), 3)
    doc = {
        "buses": [{"id": 0, "kind": "PQ", "load_series": "load0"}],
        "lines": [],
        "cg_units": [
            {"name": "cg-a", "bus": 0, "capacity": 90.0, "mttf": 1960, "mttr": 40},
            {"name": "cg-b", "bus": 0, "capacity": 45.0, "mttf": 450, "mttr": 50},
        ],
        "rg_units": [],
        "ges_units": [],
        "ges_attach": {
            "template": {
                "name": "es", "kind": "ES-D", "eta_c": 0.9, "eta_d": 0.9,
                "self_discharge": 0.05, "soc_init": 0.4, "for_rate": 0.05,
                "degradation": {"life_cycles": 4000, "soh_initial": 1.0,
                                "soh_end": 0.8},
            },
            "placement": "at-load-buses",
            "power_fraction": 0.3,
            "duration_hours": 4.0,
        },
        "series": {
            "load0": load.tolist(),
            "price": price_series(168, rng).tolist(),
        },
        "study": {"horizon_hours": 8760, "gamma": 0.05, "master_seed": 1,
                  "reliability_price": 10000.0, "price_series": "price",
                  "scenarios": 5, "years": 1},
    }
    write("smoke-1bus.json", doc)


def cong_2bus():
    doc = {
        "buses": [
            {"id": 0, "kind": "PV"},
            {"id": 1, "kind": "PQ", "load_series": "load1"},
        ],
        "lines": [
            {"name": "l01", "from": 0, "to": 1, "reactance": 0.1,
             "flow_limit": 60.0},
        ],
        "cg_units": [
            {"name": "cg0", "bus": 0, "capacity": 100.0, "mttf": 1e9, "mttr": 0},
        ],
        "rg_units": [],
        "ges_units": [
            {"name": "es@b1", "kind": "ES-D", "bus": 1, "p_charge_max": 20.0,
             "p_discharge_max": 20.0, "energy_rated": 80.0, "eta_c": 1.0,
             "eta_d": 1.0, "self_discharge": 0.0, "soc_init": 0.5,
             "for_rate": 0.0},
        ],
        "series": {"load1": [80.0] * 24, "price": PRICE_DAY.tolist()},
        "study": {"horizon_hours": 24, "gamma": 0.05, "master_seed": 1,
                  "price_series": "price", "scenarios": 1, "years": 1},
    }
    write("cong-2bus.json", doc)


def fault_3bus():
    rng = np.random.default_rng(303)
    load = np.round(weekly_profile(168, scale=135.0), 3)
    doc = {
        "buses": [
            {"id": 0, "kind": "PV"},
            {"id": 1, "kind": "PV"},
            {"id": 2, "kind": "PQ", "load_series": "load2"},
        ],
        "lines": [
            {"name": "l01", "from": 0, "to": 1, "reactance": 0.12,
             "flow_limit": 500.0, "mttf": 30000, "mttr": 12},
            {"name": "l02", "from": 0, "to": 2, "reactance": 0.10,
             "flow_limit": 500.0, "mttf": 30000, "mttr": 12},
            {"name": "l12", "from": 1, "to": 2, "reactance": 0.10,
             "flow_limit": 500.0, "mttf": 30000, "mttr": 12},
        ],
        "cg_units": [
            {"name": "cg-a", "bus": 0, "capacity": 70.0, "mttf": 220, "mttr": 24},
            {"name": "cg-b", "bus": 1, "capacity": 60.0, "mttf": 180, "mttr": 18},
            {"name": "cg-c", "bus": 1, "capacity": 40.0, "mttf": 300, "mttr": 30},
        ],
        "rg_units": [],
        "ges_units": [],
        "ges_attach": {
            "template": {
                "name": "es", "kind": "ES-D", "eta_c": 0.9, "eta_d": 0.9,
                "self_discharge": 0.05, "soc_init": 0.4, "for_rate": 0.05,
                "degradation": {"life_cycles": 4000, "soh_initial": 1.0,
                                "soh_end": 0.8},
            },
            "placement": "at-load-buses",
            "power_fraction": 0.3,
            "duration_hours": 4.0,
        },
        "series": {
            "load2": load.tolist(),
            "price": price_series(168, rng).tolist(),
            "wind": np.round(wind_cf(336, rng), 4).tolist(),
        },
        "study": {"horizon_hours": 8760, "gamma": 0.05, "master_seed": 1,
                  "price_series": "price", "scenarios": 10, "years": 1,
                  "rg_template": {"capacity_factor_series": "wind",
                                  "mttf": 1960, "mttr": 40,
                                  "max_curtail_rate": 1.0}},
    }
    write("fault-3bus.json", doc)


def ves_3bus():
    rng = np.random.default_rng(404)
    load = np.round(weekly_profile(168, scale=135.0), 3)
    # thermostatic fleet: baseline consumption holds SoC near 0.6 against
    # the 0.5/h self-discharge; bound draws follow a day/night pattern
    soc_min_day = [0.05] * 7 + [0.10] * 10 + [0.15] * 5 + [0.05] * 2
    soc_max_day = [0.92] * 7 + [0.88] * 10 + [0.85] * 5 + [0.92] * 2
    peak = float(load.max())
    p_rated = round(0.3 * peak, 3)
    baseline = [round(0.30 * p_rated, 3)] * 24
    doc = {
        "buses": [
            {"id": 0, "kind": "PV"},
            {"id": 1, "kind": "PV"},
            {"id": 2, "kind": "PQ", "load_series": "load2"},
        ],
        "lines": [
            {"name": "l01", "from": 0, "to": 1, "reactance": 0.12,
             "flow_limit": 500.0, "mttf": 30000, "mttr": 12},
            {"name": "l02", "from": 0, "to": 2, "reactance": 0.10,
             "flow_limit": 500.0, "mttf": 30000, "mttr": 12},
            {"name": "l12", "from": 1, "to": 2, "reactance": 0.10,
             "flow_limit": 500.0, "mttf": 30000, "mttr": 12},
        ],
        "cg_units": [
            {"name": "cg-a", "bus": 0, "capacity": 70.0, "mttf": 220, "mttr": 24},
            {"name": "cg-b", "bus": 1, "capacity": 60.0, "mttf": 180, "mttr": 18},
            {"name": "cg-c", "bus": 1, "capacity": 40.0, "mttf": 300, "mttr": 30},
        ],
        "rg_units": [],
        "ges_units": [
            {"name": "ves@b2", "kind": "VES-T", "bus": 2,
             "p_charge_max": p_rated, "p_discharge_max": p_rated,
             "energy_rated": round(2.0 * p_rated, 3),
             "eta_c": 1.0, "eta_d": 1.0, "self_discharge": 0.5,
             "soc_init": 0.6, "soc_min": 0.0, "soc_max": 1.0,
             "for_rate": 0.05,
             "ddu": {"a_g_lower": 1.0, "a_g_upper": 1.0, "b_h_lower": 2.0,
                     "b_h_upper": 6.0, "price_charge": 50.0,
                     "price_discharge": 250.0, "price_cap": 300.0,
                     "discomfort_weight": 0.5, "family": "lognormal",
                     "cov": 0.25},
             "baseline": {"charge_mean_mw": baseline,
                          "discharge_mean_mw": 0.0, "cov": 0.25},
             "diu_bounds": {"min_mean": soc_min_day, "min_sigma": 0.03,
                            "max_mean": soc_max_day, "max_sigma": 0.03}},
        ],
        "series": {
            "load2": load.tolist(),
            "price": price_series(168, rng).tolist(),
        },
        "study": {"horizon_hours": 8760, "gamma": 0.05, "master_seed": 1,
                  "price_series": "price", "scenarios": 10, "years": 1},
    }
    write("ves-3bus.json", doc)


# RTS-79-style 24-bus network: bus pairs, per-unit reactance, MW limit
RTS_LINES = [
    (1, 2, 0.0139, 250), (1, 3, 0.2112, 250), (1, 5, 0.0845, 250),
    (2, 4, 0.1267, 250), (2, 6, 0.1920, 250), (3, 9, 0.1190, 250),
    (3, 24, 0.0839, 500), (4, 9, 0.1037, 250), (5, 10, 0.0883, 250),
    (6, 10, 0.0605, 250), (7, 8, 0.0614, 250), (8, 9, 0.1651, 250),
    (8, 10, 0.1651, 250), (9, 11, 0.0839, 500), (9, 12, 0.0839, 500),
    (10, 11, 0.0839, 500), (10, 12, 0.0839, 500), (11, 13, 0.0476, 600),
    (11, 14, 0.0418, 600), (12, 13, 0.0476, 600), (12, 23, 0.0966, 600),
    (13, 23, 0.0865, 600), (14, 16, 0.0389, 600), (15, 16, 0.0173, 600),
    (15, 21, 0.0490, 600), (15, 21, 0.0490, 600), (15, 24, 0.0519, 600),
    (16, 17, 0.0259, 600), (16, 19, 0.0231, 600), (17, 18, 0.0144, 600),
    (17, 22, 0.1053, 600), (18, 21, 0.0259, 600), (18, 21, 0.0259, 600),
    (19, 20, 0.0396, 600), (19, 20, 0.0396, 600), (20, 23, 0.0216, 600),
    (20, 23, 0.0216, 600), (21, 22, 0.0678, 600),
]

# bus -> share of the 2850 MW system peak
RTS_LOAD = {
    1: 108, 2: 97, 3: 180, 4: 74, 5: 71, 6: 136, 7: 125, 8: 171, 9: 175,
    10: 195, 13: 265, 14: 194, 15: 317, 16: 100, 18: 333, 19: 181, 20: 128,
}

# aggregated fleet after moving 1021.5 MW to wind at buses 13/18/23
RTS_CG = [
    ("cg@b1", 1, 192.0, 1960, 40), ("cg@b2", 2, 192.0, 1960, 40),
    ("cg@b7", 7, 300.0, 1200, 50), ("cg@b13", 13, 295.5, 950, 50),
    ("cg@b15", 15, 215.0, 960, 40), ("cg@b16", 16, 155.0, 960, 40),
    ("cg@b18", 18, 100.0, 1100, 150), ("cg@b21", 21, 400.0, 1100, 150),
    ("cg@b22", 22, 300.0, 1980, 20), ("cg@b23", 23, 234.0, 1150, 100),
]
RTS_RG = [
    ("rg@b13", 13, 295.5), ("rg@b18", 18, 300.0), ("rg@b23", 23, 426.0),
]


def rts_24bus():
    rng = np.random.default_rng(2424)
    n_hours = 336
    shape = weekly_profile(n_hours)
    gen_buses = sorted({u[1] for u in RTS_CG})
    series_names = []
    columns = {}
    for bus, peak in sorted(RTS_LOAD.items()):
        name = f"load{bus}"
        series_names.append(name)
        columns[name] = np.round(shape * peak, 3)
    columns["wind"] = np.round(wind_cf(n_hours, rng), 4)
    columns["price"] = price_series(n_hours, rng)
    series_names += ["wind", "price"]

    buses = []
    for b in range(1, 25):
        kind = "PV" if b in gen_buses or b in (13, 18, 23) else "PQ"
        bus = {"id": b - 1, "kind": kind}
        if b in RTS_LOAD:
            bus["load_series"] = f"load{b}"
        if kind == "PQ" and b not in RTS_LOAD:
            bus["kind"] = "PV"  # junction buses without load or generation
        buses.append(bus)

    doc = {
        "buses": buses,
        "lines": [
            {"name": f"l{k}", "from": f - 1, "to": t - 1, "reactance": x,
             "flow_limit": float(lim), "mttf": 29200, "mttr": 11}
            for k, (f, t, x, lim) in enumerate(RTS_LINES)
        ],
        "cg_units": [
            {"name": n, "bus": b - 1, "capacity": c, "mttf": mttf, "mttr": mttr}
            for (n, b, c, mttf, mttr) in RTS_CG
        ],
        "rg_units": [
            {"name": n, "bus": b - 1, "capacity": c,
             "capacity_factor_series": "wind", "mttf": 1960, "mttr": 40,
             "max_curtail_rate": 1.0}
            for (n, b, c) in RTS_RG
        ],
        "ges_units": [],
        "ges_attach": {
            "template": {
                "name": "es", "kind": "ES-R", "eta_c": 0.9, "eta_d": 0.9,
                "self_discharge": 0.05, "soc_init": 0.4, "for_rate": 0.05,
                "degradation": {"life_cycles": 4000, "soh_initial": 1.0,
                                "soh_end": 0.8},
            },
            "placement": "bundled-with-rg",
            "power_fraction": 0.3,
            "duration_hours": 4.0,
        },
        "series_csv": ["rts24-series.csv"],
        "study": {"horizon_hours": 8760, "gamma": 0.05, "master_seed": 1,
                  "reliability_price": 10000.0, "price_series": "price",
                  "scenarios": 50, "years": 1,
                  "rg_template": {"capacity_factor_series": "wind",
                                  "mttf": 1960, "mttr": 40,
                                  "max_curtail_rate": 1.0}},
    }
    write("rts24.json", doc)
    with open(OUT / "rts24-series.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(series_names)
        for t in range(n_hours):
            w.writerow([f"{columns[name][t]:.10g}" for name in series_names])
    print("wrote", OUT / "rts24-series.csv")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    smoke_1bus()
    cong_2bus()
    fault_3bus()
    ves_3bus()
    rts_24bus()
