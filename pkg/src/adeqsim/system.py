"""Study-system definition: network, fleets, series, and configuration IO.

A SystemModel is immutable after construction; capacity-credit search and
sweeps derive modified copies instead of mutating, so scenario workers can
share one instance freely.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .ges import (
    BaselineSpec,
    DduSpec,
    DegradationSpec,
    DiuBoundsSpec,
    GesConfigError,
    GesUnit,
)

PV = "PV"
PQ = "PQ"


class ConfigError(ValueError):
    """Configuration parse or invariant failure, naming the offender."""


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str  # PV (generation) or PQ (load)
    load_series_ref: str | None = None


@dataclass(frozen=True)
class Line:
    name: str
    from_bus: int
    to_bus: int
    reactance: float
    flow_limit: float
    mttf: float = 1e9
    mttr: float = 0.0


@dataclass(frozen=True)
class CGUnit:
    name: str
    bus: int
    capacity: float
    mttf: float
    mttr: float


@dataclass(frozen=True)
class RGUnit:
    name: str
    bus: int
    capacity: float
    capacity_factor_series_ref: str
    mttf: float
    mttr: float
    max_curtail_rate: float = 1.0


@dataclass(frozen=True)
class StudyConfig:
    horizon_hours: int = 8760
    gamma: float = 0.05
    master_seed: int = 1
    reliability_price: float = 10000.0
    price_series: str | None = None
    scenarios: int = 50
    years: int = 1
    rg_template: dict | None = None


def tile_series(values, horizon):
    """Tile (or truncate) a series periodically to the study horizon."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ConfigError("series must be a nonempty 1-D array")
    reps = int(np.ceil(horizon / arr.size))
    return np.tile(arr, reps)[:horizon]


@dataclass(eq=False)
class SystemModel:
    buses: tuple = ()
    lines: tuple = ()
    cg_units: tuple = ()
    rg_units: tuple = ()
    ges_units: tuple = ()
    series: dict = field(default_factory=dict)
    study: StudyConfig = field(default_factory=StudyConfig)

    # -- derived, cached (instances are treated as immutable) --

    @property
    def n_buses(self):
        return len(self.buses)

    @property
    def horizon(self):
        return self.study.horizon_hours

    @cached_property
    def load_matrix(self):
        """Hourly load in MW, shape (horizon, n_buses)."""
        out = np.zeros((self.horizon, self.n_buses))
        for b in self.buses:
            if b.load_series_ref:
                out[:, b.id] = tile_series(self.series[b.load_series_ref], self.horizon)
        return out

    @cached_property
    def peak_load_by_bus(self):
        return self.load_matrix.max(axis=0) if self.n_buses else np.zeros(0)

    @cached_property
    def price(self):
        if self.study.price_series:
            return tile_series(self.series[self.study.price_series], self.horizon)
        return np.zeros(self.horizon)

    def capacity_factor(self, rg: RGUnit):
        return tile_series(self.series[rg.capacity_factor_series_ref], self.horizon)

    def on_probability(self, ges: GesUnit):
        """Hourly on-state probability of a GES unit (constant 1-FOR or
        the referenced profile)."""
        if ges.on_prob_series:
            return tile_series(self.series[ges.on_prob_series], self.horizon)
        return np.full(self.horizon, 1.0 - ges.for_rate)

    @property
    def total_cg_capacity(self):
        return sum(u.capacity for u in self.cg_units)

    @property
    def total_rg_capacity(self):
        return sum(u.capacity for u in self.rg_units)

    @property
    def total_ges_power(self):
        return sum(u.p_discharge_max for u in self.ges_units)

    # -- validation --

    def validate(self):
        ids = [b.id for b in self.buses]
        if not self.buses:
            raise ConfigError("buses: at least one bus required")
        if sorted(ids) != list(range(len(ids))):
            raise ConfigError("buses: ids must be unique and contiguous from 0")
        if any(b.kind not in (PV, PQ) for b in self.buses):
            raise ConfigError("buses: kind must be PV or PQ")
        for b in self.buses:
            if b.kind == PQ and not b.load_series_ref:
                raise ConfigError(f"bus {b.id}: PQ bus must reference a load series")
            if b.load_series_ref and b.load_series_ref not in self.series:
                raise ConfigError(
                    f"bus {b.id}: dangling series reference {b.load_series_ref!r}")
        n = len(ids)
        for ln in self.lines:
            if not (0 <= ln.from_bus < n and 0 <= ln.to_bus < n):
                raise ConfigError(f"line {ln.name}: references bus outside 0..{n - 1}")
            if ln.reactance <= 0:
                raise ConfigError(f"line {ln.name}: reactance must be > 0")
            if ln.flow_limit <= 0:
                raise ConfigError(f"line {ln.name}: flow_limit must be > 0")
            if ln.mttf <= 0 or ln.mttr < 0:
                raise ConfigError(f"line {ln.name}: need mttf > 0 and mttr >= 0")
        if n > 1 and not self._connected():
            raise ConfigError("lines: graph not connected at full availability")
        for u in self.cg_units:
            if not (0 <= u.bus < n):
                raise ConfigError(f"cg unit {u.name}: references bus {u.bus} outside 0..{n - 1}")
            if u.capacity <= 0:
                raise ConfigError(f"cg unit {u.name}: capacity must be > 0")
            if u.mttf <= 0 or u.mttr < 0:
                raise ConfigError(f"cg unit {u.name}: need mttf > 0 and mttr >= 0")
        for u in self.rg_units:
            if not (0 <= u.bus < n):
                raise ConfigError(f"rg unit {u.name}: references bus {u.bus} outside 0..{n - 1}")
            if u.capacity_factor_series_ref not in self.series:
                raise ConfigError(
                    f"rg unit {u.name}: dangling series reference "
                    f"{u.capacity_factor_series_ref!r}")
            cf = np.asarray(self.series[u.capacity_factor_series_ref], dtype=float)
            if cf.min() < 0.0 or cf.max() > 1.0:
                raise ConfigError(f"rg unit {u.name}: capacity factors outside [0,1]")
            if not 0.0 <= u.max_curtail_rate <= 1.0:
                raise ConfigError(f"rg unit {u.name}: max_curtail_rate outside [0,1]")
        for g in self.ges_units:
            try:
                g.validate()
            except GesConfigError as exc:
                raise ConfigError(str(exc)) from exc
            if not (0 <= g.bus < n):
                raise ConfigError(f"ges unit {g.name}: references bus {g.bus} outside 0..{n - 1}")
            if g.on_prob_series and g.on_prob_series not in self.series:
                raise ConfigError(
                    f"ges unit {g.name}: dangling series reference {g.on_prob_series!r}")
        if self.total_cg_capacity + self.total_rg_capacity <= 0:
            raise ConfigError("fleet: sum of installed capacity must be > 0")
        if not 0.0 < self.study.gamma < 1.0:
            raise ConfigError("study.gamma: must lie in (0,1)")
        if self.study.horizon_hours < 1:
            raise ConfigError("study.horizon_hours: must be >= 1")
        if self.study.price_series and self.study.price_series not in self.series:
            raise ConfigError(
                f"study.price_series: dangling series reference {self.study.price_series!r}")
        return self

    def _connected(self):
        n = len(self.buses)
        adj = {i: [] for i in range(n)}
        for ln in self.lines:
            adj[ln.from_bus].append(ln.to_bus)
            adj[ln.to_bus].append(ln.from_bus)
        seen = {0}
        stack = [0]
        while stack:
            for j in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == n

    # -- serialization --

    def to_config(self):
        cfg = {
            "buses": [
                {"id": b.id, "kind": b.kind, **(
                    {"load_series": b.load_series_ref} if b.load_series_ref else {})}
                for b in self.buses
            ],
            "lines": [
                {"name": ln.name, "from": ln.from_bus, "to": ln.to_bus,
                 "reactance": ln.reactance, "flow_limit": ln.flow_limit,
                 "mttf": ln.mttf, "mttr": ln.mttr}
                for ln in self.lines
            ],
            "cg_units": [
                {"name": u.name, "bus": u.bus, "capacity": u.capacity,
                 "mttf": u.mttf, "mttr": u.mttr}
                for u in self.cg_units
            ],
            "rg_units": [
                {"name": u.name, "bus": u.bus, "capacity": u.capacity,
                 "capacity_factor_series": u.capacity_factor_series_ref,
                 "mttf": u.mttf, "mttr": u.mttr,
                 "max_curtail_rate": u.max_curtail_rate}
                for u in self.rg_units
            ],
            "ges_units": [ges_to_dict(g) for g in self.ges_units],
            "series": {k: list(map(float, v)) for k, v in sorted(self.series.items())},
            "study": {
                "horizon_hours": self.study.horizon_hours,
                "gamma": self.study.gamma,
                "master_seed": self.study.master_seed,
                "reliability_price": self.study.reliability_price,
                "scenarios": self.study.scenarios,
                "years": self.study.years,
                **({"price_series": self.study.price_series}
                   if self.study.price_series else {}),
                **({"rg_template": self.study.rg_template}
                   if self.study.rg_template else {}),
            },
        }
        return cfg

    def fingerprint(self):
        return json.dumps(self.to_config(), sort_keys=True)

    # -- derived variants (used by sweeps and capacity-credit search) --

    def with_ges(self, units):
        m = replace(self, ges_units=tuple(units))
        _clear_cache(m)
        return m

    def with_cg(self, units):
        m = replace(self, cg_units=tuple(units))
        _clear_cache(m)
        return m

    def with_rg(self, units):
        m = replace(self, rg_units=tuple(units))
        _clear_cache(m)
        return m

    def scaled_cg(self, factor):
        units = tuple(replace(u, capacity=u.capacity * factor) for u in self.cg_units)
        return self.with_cg(units)

    def scaled_loads(self, factor):
        series = dict(self.series)
        refs = {b.load_series_ref for b in self.buses if b.load_series_ref}
        for ref in refs:
            series[ref] = np.asarray(self.series[ref], dtype=float) * factor
        m = replace(self, series=series)
        _clear_cache(m)
        return m

    def with_study(self, **kwargs):
        m = replace(self, study=replace(self.study, **kwargs))
        _clear_cache(m)
        return m


def _clear_cache(model):
    for key in ("load_matrix", "peak_load_by_bus", "price"):
        model.__dict__.pop(key, None)


# -- configuration ingestion --


def _req(d, key, where):
    if key not in d:
        raise ConfigError(f"{where}: missing required field {key!r}")
    return d[key]


def _parse_pattern(value, where):
    """A baseline/bound pattern: scalar or list of hourly values."""
    if isinstance(value, (int, float)):
        return (float(value),)
    if isinstance(value, (list, tuple)) and value:
        return tuple(float(v) for v in value)
    raise ConfigError(f"{where}: expected number or nonempty list")


def ges_from_dict(d, index=0):
    where = f"ges_units[{index}]"
    deg = d.get("degradation")
    ddu = d.get("ddu")
    baseline = d.get("baseline")
    bounds = d.get("diu_bounds")
    return GesUnit(
        name=d.get("name", f"ges{index}"),
        kind=_req(d, "kind", where),
        bus=int(_req(d, "bus", where)),
        p_charge_max=float(_req(d, "p_charge_max", where)),
        p_discharge_max=float(_req(d, "p_discharge_max", where)),
        energy_rated=float(_req(d, "energy_rated", where)),
        eta_c=float(d.get("eta_c", 0.9)),
        eta_d=float(d.get("eta_d", 0.9)),
        self_discharge=float(d.get("self_discharge", 0.0)),
        soc_init=float(d.get("soc_init", 0.5)),
        soc_min=float(d.get("soc_min", 0.0)),
        soc_max=float(d.get("soc_max", 1.0)),
        for_rate=float(d.get("for_rate", 0.0)),
        on_prob_series=d.get("on_prob_series"),
        mttf=None if d.get("mttf") is None else float(d["mttf"]),
        mttr=None if d.get("mttr") is None else float(d["mttr"]),
        degradation=None if deg is None else DegradationSpec(
            life_cycles=float(_req(deg, "life_cycles", where + ".degradation")),
            soh_initial=float(deg.get("soh_initial", 1.0)),
            soh_end=float(deg.get("soh_end", 0.8)),
        ),
        ddu=None if ddu is None else DduSpec(
            a_g_lower=float(ddu.get("a_g_lower", 1.0)),
            a_g_upper=float(ddu.get("a_g_upper", 1.0)),
            b_h_lower=float(ddu.get("b_h_lower", 2.0)),
            b_h_upper=float(ddu.get("b_h_upper", 6.0)),
            price_charge=float(ddu.get("price_charge", 50.0)),
            price_discharge=float(ddu.get("price_discharge", 250.0)),
            price_cap=float(ddu.get("price_cap", 300.0)),
            discomfort_weight=float(ddu.get("discomfort_weight", 0.5)),
            family=ddu.get("family", "lognormal"),
            cov=float(ddu.get("cov", 0.25)),
        ),
        baseline=None if baseline is None else BaselineSpec(
            charge_mean_mw=_parse_pattern(
                baseline.get("charge_mean_mw", 0.0), where + ".baseline"),
            discharge_mean_mw=_parse_pattern(
                baseline.get("discharge_mean_mw", 0.0), where + ".baseline"),
            cov=float(baseline.get("cov", 0.25)),
        ),
        diu_bounds=None if bounds is None else DiuBoundsSpec(
            min_mean=_parse_pattern(bounds.get("min_mean", 0.0), where + ".diu_bounds"),
            min_sigma=float(bounds.get("min_sigma", 0.0)),
            max_mean=_parse_pattern(bounds.get("max_mean", 1.0), where + ".diu_bounds"),
            max_sigma=float(bounds.get("max_sigma", 0.0)),
        ),
        capacity_share=float(d.get("capacity_share", 1.0)),
        rd_accumulates=bool(d.get("rd_accumulates", False)),
    )


def ges_to_dict(g: GesUnit):
    d = {
        "name": g.name, "kind": g.kind, "bus": g.bus,
        "p_charge_max": g.p_charge_max, "p_discharge_max": g.p_discharge_max,
        "energy_rated": g.energy_rated, "eta_c": g.eta_c, "eta_d": g.eta_d,
        "self_discharge": g.self_discharge, "soc_init": g.soc_init,
        "soc_min": g.soc_min, "soc_max": g.soc_max, "for_rate": g.for_rate,
        "capacity_share": g.capacity_share, "rd_accumulates": g.rd_accumulates,
    }
    if g.on_prob_series:
        d["on_prob_series"] = g.on_prob_series
    if g.mttf is not None:
        d["mttf"], d["mttr"] = g.mttf, g.mttr
    if g.degradation:
        d["degradation"] = {
            "life_cycles": g.degradation.life_cycles,
            "soh_initial": g.degradation.soh_initial,
            "soh_end": g.degradation.soh_end,
        }
    if g.ddu:
        d["ddu"] = {
            "a_g_lower": g.ddu.a_g_lower, "a_g_upper": g.ddu.a_g_upper,
            "b_h_lower": g.ddu.b_h_lower, "b_h_upper": g.ddu.b_h_upper,
            "price_charge": g.ddu.price_charge,
            "price_discharge": g.ddu.price_discharge,
            "price_cap": g.ddu.price_cap,
            "discomfort_weight": g.ddu.discomfort_weight,
            "family": g.ddu.family, "cov": g.ddu.cov,
        }
    if g.baseline:
        d["baseline"] = {
            "charge_mean_mw": list(g.baseline.charge_mean_mw),
            "discharge_mean_mw": list(g.baseline.discharge_mean_mw),
            "cov": g.baseline.cov,
        }
    if g.diu_bounds:
        d["diu_bounds"] = {
            "min_mean": list(g.diu_bounds.min_mean),
            "min_sigma": g.diu_bounds.min_sigma,
            "max_mean": list(g.diu_bounds.max_mean),
            "max_sigma": g.diu_bounds.max_sigma,
        }
    return d


def _read_series_csv(path: Path):
    out = {}
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty series csv")
    names = [h.strip() for h in rows[0]]
    cols = [[] for _ in names]
    for r, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(names):
            raise ConfigError(f"{path}:{r}: expected {len(names)} columns")
        for j, cell in enumerate(row):
            cols[j].append(float(cell))
    for name, col in zip(names, cols):
        out[name] = np.asarray(col, dtype=float)
    return out


def load_system_config(text, base_dir=None):
    """Parse and validate a JSON configuration document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error at line {exc.lineno}, col {exc.colno}: "
                          f"{exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be an object")

    series = {}
    for name, values in doc.get("series", {}).items():
        series[name] = np.asarray(values, dtype=float)
    for rel in doc.get("series_csv", []):
        path = Path(rel)
        if not path.is_absolute():
            path = (Path(base_dir) if base_dir else Path.cwd()) / rel
        if not path.exists():
            raise ConfigError(f"series_csv: file not found: {path}")
        series.update(_read_series_csv(path))

    buses = tuple(
        Bus(id=int(_req(b, "id", f"buses[{i}]")),
            kind=_req(b, "kind", f"buses[{i}]"),
            load_series_ref=b.get("load_series"))
        for i, b in enumerate(doc.get("buses", []))
    )
    lines = tuple(
        Line(name=ln.get("name", f"line{i}"),
             from_bus=int(_req(ln, "from", f"lines[{i}]")),
             to_bus=int(_req(ln, "to", f"lines[{i}]")),
             reactance=float(_req(ln, "reactance", f"lines[{i}]")),
             flow_limit=float(_req(ln, "flow_limit", f"lines[{i}]")),
             mttf=float(ln.get("mttf", 1e9)),
             mttr=float(ln.get("mttr", 0.0)))
        for i, ln in enumerate(doc.get("lines", []))
    )
    cg = tuple(
        CGUnit(name=u.get("name", f"cg{i}"),
               bus=int(_req(u, "bus", f"cg_units[{i}]")),
               capacity=float(_req(u, "capacity", f"cg_units[{i}]")),
               mttf=float(_req(u, "mttf", f"cg_units[{i}]")),
               mttr=float(_req(u, "mttr", f"cg_units[{i}]")))
        for i, u in enumerate(doc.get("cg_units", []))
    )
    rg = tuple(
        RGUnit(name=u.get("name", f"rg{i}"),
               bus=int(_req(u, "bus", f"rg_units[{i}]")),
               capacity=float(_req(u, "capacity", f"rg_units[{i}]")),
               capacity_factor_series_ref=_req(
                   u, "capacity_factor_series", f"rg_units[{i}]"),
               mttf=float(u.get("mttf", 1960.0)),
               mttr=float(u.get("mttr", 40.0)),
               max_curtail_rate=float(u.get("max_curtail_rate", 1.0)))
        for i, u in enumerate(doc.get("rg_units", []))
    )
    ges = tuple(ges_from_dict(d, i) for i, d in enumerate(doc.get("ges_units", [])))

    st = doc.get("study", {})
    study = StudyConfig(
        horizon_hours=int(st.get("horizon_hours", 8760)),
        gamma=float(st.get("gamma", 0.05)),
        master_seed=int(st.get("master_seed", 1)),
        reliability_price=float(st.get("reliability_price", 10000.0)),
        price_series=st.get("price_series"),
        scenarios=int(st.get("scenarios", 50)),
        years=int(st.get("years", 1)),
        rg_template=st.get("rg_template"),
    )

    model = SystemModel(buses=buses, lines=lines, cg_units=cg, rg_units=rg,
                        ges_units=ges, series=series, study=study).validate()

    attach = doc.get("ges_attach")
    if attach:
        template = ges_from_dict({
            "bus": 0, "p_charge_max": 1.0, "p_discharge_max": 1.0,
            "energy_rated": 1.0, **attach["template"]})
        model = attach_ges(
            model, template,
            placement=_req(attach, "placement", "ges_attach"),
            power_fraction=float(_req(attach, "power_fraction", "ges_attach")),
            duration_hours=float(_req(attach, "duration_hours", "ges_attach")),
        )
    return model


def load_system_config_path(path):
    path = Path(path)
    return load_system_config(path.read_text(), base_dir=path.parent)


# -- fleet transforms --


def scale_res_penetration(model: SystemModel, fraction) -> SystemModel:
    """Convert `fraction` of each PV bus's CG capacity into co-located RG.

    Total installed capacity is preserved exactly; fraction 0 returns the
    model unchanged.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0,1]")
    if fraction == 0.0:
        return model
    template = model.study.rg_template or {}
    cf_ref = template.get("capacity_factor_series")
    if not cf_ref:
        raise ConfigError("study.rg_template.capacity_factor_series required "
                          "for penetration scaling")
    new_cg = []
    new_rg = list(model.rg_units)
    by_bus = {}
    for u in model.cg_units:
        moved = u.capacity * fraction
        by_bus[u.bus] = by_bus.get(u.bus, 0.0) + moved
        kept = u.capacity - moved
        if kept > 0:
            new_cg.append(replace(u, capacity=kept))
    for bus in sorted(by_bus):
        if by_bus[bus] <= 0:
            continue
        new_rg.append(RGUnit(
            name=f"rg-pen@b{bus}",
            bus=bus,
            capacity=by_bus[bus],
            capacity_factor_series_ref=cf_ref,
            mttf=float(template.get("mttf", 1960.0)),
            mttr=float(template.get("mttr", 40.0)),
            max_curtail_rate=float(template.get("max_curtail_rate", 1.0)),
        ))
    m = replace(model, cg_units=tuple(new_cg), rg_units=tuple(new_rg))
    _clear_cache(m)
    return m.validate()


BUNDLED_WITH_RG = "bundled-with-rg"
AT_LOAD_BUSES = "at-load-buses"


def attach_ges(model: SystemModel, template: GesUnit, placement,
               power_fraction, duration_hours) -> SystemModel:
    """Attach one GES unit per target bus from a template.

    Rated power is power_fraction of local RG capacity (bundled) or of
    peak local load (load-bus placement); energy is duration * power.
    Capacity shares are energy-proportional.
    """
    if power_fraction <= 0 or duration_hours <= 0:
        raise ValueError("power_fraction and duration_hours must be > 0")
    if placement == BUNDLED_WITH_RG:
        basis = {}
        for u in model.rg_units:
            basis[u.bus] = basis.get(u.bus, 0.0) + u.capacity
        if not basis:
            raise ConfigError("ges_attach: bundled placement on a model with no RG")
    elif placement == AT_LOAD_BUSES:
        peaks = model.peak_load_by_bus
        basis = {b.id: float(peaks[b.id]) for b in model.buses
                 if b.kind == PQ and b.load_series_ref and peaks[b.id] > 0}
        if not basis:
            raise ConfigError("ges_attach: no load buses with positive load")
    else:
        raise ConfigError(f"ges_attach: unknown placement {placement!r}")

    units = list(model.ges_units)
    created = []
    for bus in sorted(basis):
        power = power_fraction * basis[bus]
        if power <= 0:
            continue
        created.append(replace(
            template,
            name=f"{template.kind.lower()}@b{bus}",
            bus=bus,
            p_charge_max=power,
            p_discharge_max=power,
            energy_rated=power * duration_hours,
        ))
    total_energy = sum(u.energy_rated for u in units + created)
    out = [replace(u, capacity_share=u.energy_rated / total_energy)
           for u in units + created]
    m = replace(model, ges_units=tuple(out))
    _clear_cache(m)
    return m.validate()
