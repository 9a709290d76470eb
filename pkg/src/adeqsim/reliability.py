"""Sequential Monte Carlo reliability engine.

Each scenario-year is a sampled chronological realization run through the
chosen storage strategy hour by hour.  Two books are kept: the
*theoretical* curtailment (what the schedule promises, given what the
scheduler knew under the chosen uncertainty mode) and the *practical*
curtailment, which replays every scheduled storage discharge against the
realized outages, self-discharge, degraded capacity and realized
decision-dependent SoC bounds, converting infeasible discharge MW-for-MW
into additional unserved energy.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import dispatch as dp
from .dispatch import (
    COORDINATED,
    EMERGENCY,
    FIXED,
    GREEDY,
    MODES,
    NORMAL,
    RECOVERY,
    STRATEGIES,
    U1,
    U2,
    U3,
    ChanceFloor,
    HourInputs,
    TopologyCase,
)
from .ges import (
    available_energy,
    degradation_after,
    distortion_factor,
    soc_after,
)
from .stochastic import build_scenario, derive_stream
from .system import SystemModel

CAUSE_DEFICIT = "generation-deficit"
CAUSE_CONGESTION = "congestion"
CAUSE_STORAGE = "storage-unavailable"

_TRACK_TOL = 1e-6
_ARB_CACHE = {}
_FIXED_CACHE = {}


@dataclass
class CurtailmentRecord:
    scenario: int
    hour: int
    bus: int
    mw: float
    cause: str


@dataclass
class OpsTrace:
    """Hourly operations of scenario 0 (plot-ready)."""

    unit_names: list
    labels: list
    rc: np.ndarray
    soc: np.ndarray  # scheduled view, (n_units, T)
    soc_real: np.ndarray
    charge: np.ndarray
    discharge: np.ndarray
    curtail_theoretical: np.ndarray
    curtail_practical: np.ndarray


@dataclass
class ReliabilityReport:
    eens_theoretical: float
    eens_practical: float
    lolp: float
    lolp_theoretical: float
    yearly_theoretical: list
    yearly_practical: list
    cov_series: list
    converged: bool
    scenario_count: int
    years: int
    horizon: int
    strategy: str
    mode: str
    master_seed: int
    warnings: int = 0
    sched_storage_energy: float = 0.0
    ops: OpsTrace | None = None
    records: list | None = None

    def to_dict(self):
        return {
            "eens_theoretical_mwh_per_yr": self.eens_theoretical,
            "eens_practical_mwh_per_yr": self.eens_practical,
            "lolp": self.lolp,
            "lolp_theoretical": self.lolp_theoretical,
            "yearly_theoretical": list(self.yearly_theoretical),
            "yearly_practical": list(self.yearly_practical),
            "cov_series": [None if math.isinf(c) else c for c in self.cov_series],
            "converged": self.converged,
            "scenario_count": self.scenario_count,
            "years": self.years,
            "horizon_hours": self.horizon,
            "strategy": self.strategy,
            "mode": self.mode,
            "master_seed": self.master_seed,
            "warnings": self.warnings,
            "scheduled_storage_energy_mwh": self.sched_storage_energy,
        }


def convergence_check(yearly_values, threshold=0.05):
    """Running coefficient of variation of the mean estimate.

    A single sample is never converged; constant samples converge with
    CoV exactly 0.
    """
    vals = np.asarray(list(yearly_values), dtype=float)
    covs = []
    for y in range(1, len(vals) + 1):
        if y < 2:
            covs.append(math.inf)
            continue
        mean = vals[:y].mean()
        sd = vals[:y].std(ddof=1)
        covs.append(float(sd / (abs(mean) * math.sqrt(y))) if mean else 0.0)
    converged = len(covs) >= 2 and covs[-1] < threshold
    return covs, converged


def compute_indices(records, n_samples, horizon):
    """Aggregate curtailment records into EENS/LOLP indices (per Eq.-style
    averaging: totals over samples divided by the sample count)."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    x_total = 0.0
    y_total = 0.0
    lol_hours_t = set()
    lol_hours_p = set()
    for r in records:
        if r.cause == CAUSE_STORAGE:
            y_total += r.mw
        else:
            x_total += r.mw
            lol_hours_t.add((r.scenario, r.hour))
        lol_hours_p.add((r.scenario, r.hour))
    eens_t = x_total / n_samples
    eens_p = (x_total + y_total) / n_samples
    lolp_t = len(lol_hours_t) / (n_samples * horizon)
    lolp_p = len(lol_hours_p) / (n_samples * horizon)
    return eens_t, eens_p, lolp_t, lolp_p


# -- per-unit runtime --


class _UnitRun:
    __slots__ = (
        "unit", "idx", "bus", "on_view", "floor_view", "ceil_view",
        "deg_in_view", "chance", "soc_s", "alpha_s", "sav_s", "use_s",
        "soc_r", "alpha_r", "sav_r", "use_r", "bs_c", "bs_d", "soc_da",
        "draws", "eps", "pc", "pd", "ec", "ed", "srated", "phi",
    )

    def __init__(self, unit, idx, mode, gamma, chance_stream):
        self.unit = unit
        self.idx = idx
        self.bus = unit.bus
        self.eps = unit.self_discharge
        self.pc = unit.p_charge_max
        self.pd = unit.p_discharge_max
        self.ec = unit.eta_c
        self.ed = unit.eta_d
        self.srated = unit.energy_rated
        self.phi = unit.capacity_share
        self.deg_in_view = mode == U3 and unit.degradation is not None
        self.chance = None
        if mode == U3 and unit.ddu is not None:
            self.chance = ChanceFloor(unit, gamma).build(chance_stream)
        soh0 = unit.degradation.soh_initial if unit.degradation else 1.0
        self.soc_s = unit.soc_init
        self.alpha_s = 0.0
        self.sav_s = unit.energy_rated * soh0
        self.use_s = 0.0
        self.soc_r = unit.soc_init
        self.alpha_r = 0.0
        self.sav_r = unit.energy_rated * soh0
        self.use_r = 0.0
        self.bs_c = None
        self.bs_d = None
        self.soc_da = None
        self.draws = None
        self.on_view = None
        self.floor_view = None
        self.ceil_view = None

    def bind_scenario(self, draws, mode, horizon):
        self.draws = draws
        u = self.unit
        if mode == U1:
            self.on_view = None  # treated as always on
            self.floor_view = None
            self.ceil_view = None
        else:
            self.on_view = draws.on
            self.floor_view = draws.diu_min  # None for ES
            self.ceil_view = draws.diu_max

    # view accessors -------------------------------------------------

    def view_on(self, t):
        return True if self.on_view is None else bool(self.on_view[t])

    def view_floor(self, t):
        if self.floor_view is None:
            return self.unit.soc_min
        return float(self.floor_view[t])

    def view_ceil(self, t):
        if self.ceil_view is None:
            return self.unit.soc_max
        return float(self.ceil_view[t])

    def view_basis(self):
        return self.sav_s if self.deg_in_view else self.srated

    def sched_rd(self, t_in_day, soc_next, horizon=24):
        if self.unit.ddu is None:
            return 0.0
        rho = self.unit.ddu.discomfort_weight
        da = self.soc_da[t_in_day] if self.soc_da is not None else self.unit.soc_init
        return rho * self.use_s / horizon + (1.0 - rho) * abs(soc_next - da)

    def real_rd(self, t_in_day, horizon=24):
        if self.unit.ddu is None:
            return 0.0
        rho = self.unit.ddu.discomfort_weight
        da = self.soc_da[t_in_day] if self.soc_da is not None else self.unit.soc_init
        return rho * self.use_r / horizon + (1.0 - rho) * abs(self.soc_r - da)

    def emergency_floor(self, t, t_in_day):
        """SoC floor for emergency discharge under the active mode."""
        base = self.view_floor(t)
        if self.chance is None:
            return base, 0.0
        # fixed point on RD: the floor depends on the discomfort the
        # discharge itself will create; damped iteration, cap 10
        rd = self.sched_rd(t_in_day, self.soc_s)
        floor = self.chance.floor(base, rd)
        worst = floor
        for _ in range(10):
            cap = dp.max_emergency_discharge(
                self.unit, self.soc_s, self.view_basis(), floor, self.view_on(t))
            soc_next = soc_after(self.soc_s, 0.0, cap, self.unit, 1.0,
                                 self.view_basis())
            extra_use = (cap / self.pd) if self.pd > 0 else 0.0
            rho = self.unit.ddu.discomfort_weight
            da = self.soc_da[t_in_day] if self.soc_da is not None else self.unit.soc_init
            rd_new = rho * (self.use_s + extra_use) / 24.0 + \
                (1.0 - rho) * abs(soc_next - da)
            rd_mix = 0.5 * rd + 0.5 * rd_new
            new_floor = self.chance.floor(base, rd_mix)
            worst = max(worst, new_floor)
            if abs(rd_mix - rd) <= 1e-4:
                return new_floor, 0.0
            rd = rd_mix
            floor = new_floor
        return worst, 1.0  # non-convergence: most conservative iterate

    # realized bound draws -------------------------------------------

    def real_floor(self, t, t_in_day):
        u = self.unit
        base = u.soc_min if self.draws.diu_min is None else float(self.draws.diu_min[t])
        if u.ddu is None or self.draws.ddu_z is None:
            return base
        rd = self.real_rd(t_in_day)
        g = float(distortion_factor(self.draws.ddu_z[0, t],
                                    u.ddu.incentive_mean_lower, u.ddu))
        h = float(distortion_factor(self.draws.ddu_z[1, t],
                                    u.ddu.b_h_lower * rd, u.ddu))
        return min(max(base * (1.0 - g) * (1.0 + h), 0.0), 1.0)

    def real_ceil(self, t, t_in_day):
        u = self.unit
        base = u.soc_max if self.draws.diu_max is None else float(self.draws.diu_max[t])
        if u.ddu is None or self.draws.ddu_z is None:
            return base
        rd = self.real_rd(t_in_day)
        g = float(distortion_factor(self.draws.ddu_z[2, t],
                                    u.ddu.incentive_mean_upper, u.ddu))
        h = float(distortion_factor(self.draws.ddu_z[3, t],
                                    u.ddu.b_h_upper * rd, u.ddu))
        return min(max(base * (1.0 + g) * (1.0 - h), 0.0), 1.0)


def replay_step(run: _UnitRun, t, t_in_day, day, sched_c, sched_d):
    """Replay one scheduled hour against the realization.

    Returns the unserved MW (scheduled discharge that could not be
    delivered); the realized state advances with the executed powers.
    """
    u = run.unit
    drift = (1.0 - run.eps) * run.soc_r
    if not run.draws.on[t]:
        exec_c = exec_d = 0.0
        lost = sched_d
    else:
        if sched_d > 0.0:
            floor = run.real_floor(t, t_in_day)
            room_d = (drift - floor) * run.ed * run.sav_r
            exec_d = min(sched_d, run.pd, room_d if room_d > 0.0 else 0.0)
            exec_c = 0.0
        elif sched_c > 0.0:
            ceil = run.real_ceil(t, t_in_day)
            room_c = (ceil - drift) * run.sav_r / run.ec
            exec_c = min(sched_c, run.pc, room_c if room_c > 0.0 else 0.0)
            exec_d = 0.0
        else:
            exec_c = exec_d = 0.0
        lost = sched_d - exec_d
        if lost < 0.0:
            lost = 0.0
    soc = drift + (run.ec * exec_c - exec_d / run.ed) / run.sav_r
    run.soc_r = 0.0 if soc < 0.0 else (1.0 if soc > 1.0 else soc)
    deg = u.degradation
    if deg is not None and exec_c + exec_d > 0.0:
        inc = run.draws.kappa_by_day[day] * (exec_c + exec_d) / run.srated \
            / deg.life_cycles
        a = run.alpha_r + inc
        run.alpha_r = 1.0 if a > 1.0 else a
        run.sav_r = run.srated * (
            deg.soh_initial - (deg.soh_initial - deg.soh_end) * run.alpha_r)
    if u.ddu is not None:
        bs_c = run.bs_c[t_in_day] if run.bs_c is not None else 0.0
        bs_d = run.bs_d[t_in_day] if run.bs_d is not None else 0.0
        if run.pc > 0:
            run.use_r += abs(exec_c - bs_c) / run.pc
        if run.pd > 0:
            run.use_r += abs(exec_d - bs_d) / run.pd
    return lost, exec_c, exec_d


def practical_replay(unit, sched_charge, sched_discharge, draws, *,
                     soc_start=None, soc_da=None, gamma=0.05):
    """Replay a scheduled window for one unit; returns (additional ENS in
    MWh, executed charge array, executed discharge array)."""
    run = _UnitRun(unit, 0, U2, gamma, None)
    run.bind_scenario(draws, U2, len(sched_charge))
    if soc_start is not None:
        run.soc_r = soc_start
    if soc_da is not None:
        run.soc_da = np.asarray(soc_da, dtype=float)
    n = len(sched_charge)
    ens = 0.0
    exec_c = np.zeros(n)
    exec_d = np.zeros(n)
    for t in range(n):
        lost, ec, ed = replay_step(run, t, t % 24, t // 24,
                                   float(sched_charge[t]), float(sched_discharge[t]))
        ens += lost
        exec_c[t] = ec
        exec_d[t] = ed
    return ens, exec_c, exec_d


# -- scenario preparation --


class _Prep:
    def __init__(self, model: SystemModel, scenario):
        T = model.horizon
        n = model.n_buses
        self.load_bus = scenario.load_mw
        self.load_tot = self.load_bus.sum(axis=1)
        cg = np.zeros((T, n))
        for k, u in enumerate(model.cg_units):
            cg[:, u.bus] += scenario.cg_on[:, k] * u.capacity
        rg = np.zeros((T, n))
        rg_min = np.zeros((T, n))
        for k, u in enumerate(model.rg_units):
            av = scenario.rg_available_mw[:, k]
            rg[:, u.bus] += av
            rg_min[:, u.bus] += (1.0 - u.max_curtail_rate) * av
        self.cg_bus = cg
        self.rg_bus = rg
        self.rg_min_bus = rg_min
        self.av_tot = cg.sum(axis=1) + rg.sum(axis=1)
        self.rc = self.av_tot - self.load_tot

        self.model = model
        self._topo_cache = {}
        n_lines = len(model.lines)
        if n_lines:
            self.all_on_key = bytes([1] * n_lines)
            self.line_keys = [
                scenario.line_on[t].astype(np.int8).tobytes() for t in range(T)
            ]
        else:
            self.all_on_key = b""
            self.line_keys = None

        self.has_rg_min = bool(rg_min.max() > 0.0)

    def topo(self, t) -> TopologyCase:
        key = self.line_keys[t] if self.line_keys is not None else b""
        return self.topo_for_key(key)

    def topo_for_key(self, key) -> TopologyCase:
        case = self._topo_cache.get(key)
        if case is None:
            line_on = np.frombuffer(key, dtype=np.int8).astype(bool) \
                if key else np.zeros(0, dtype=bool)
            case = TopologyCase(self.model, line_on)
            self._topo_cache[key] = case
        return case


def _batch_verify(prep: _Prep, hours, net_by_bus, x_arr, records,
                  scenario_idx, n_units, ges_bus, charge_rec, discharge_rec):
    """Vectorized copper-plate + line-limit verification of many hours.

    `hours` carry recorded (already decided) storage actions; their
    curtailment is the supply shortfall unless a line limit binds or the
    network is islanded, in which case the hour is re-solved exactly.
    """
    if hours.size == 0:
        return 0
    load_tot = prep.load_tot[hours]
    av = prep.av_tot[hours]
    net_tot = net_by_bus[hours].sum(axis=1)  # discharge - charge per hour
    need = load_tot - net_tot
    shortfall = np.maximum(0.0, need - av)
    x_arr[hours] = shortfall

    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(av > 0, np.clip(need / av, 0.0, 1.0), 0.0)
    gen = (prep.cg_bus[hours] + prep.rg_bus[hours]) * factor[:, None]
    inj = gen - prep.load_bus[hours] + net_by_bus[hours]
    rows = np.flatnonzero(shortfall > 0)
    if rows.size:
        with np.errstate(divide="ignore", invalid="ignore"):
            share = np.where(load_tot[rows, None] > 0,
                             prep.load_bus[hours[rows]] /
                             load_tot[rows, None], 0.0)
        inj[rows] += share * shortfall[rows, None]
    resid = inj.sum(axis=1)
    dump = np.argmax(prep.cg_bus[hours] + prep.rg_bus[hours], axis=1)
    inj[np.arange(hours.size), dump] -= resid

    exact = shortfall > load_tot + 1e-9  # charge overdraw needs the LP
    if prep.has_rg_min:
        exact |= (prep.rg_min_bus[hours] >
                  prep.rg_bus[hours] * factor[:, None] + 1e-9).any(axis=1)

    if len(prep.model.lines):
        if prep.line_keys is None:
            keys = None
        # group hours by line-outage signature and check flows per group
        groups = {}
        for i, t in enumerate(hours):
            key = prep.line_keys[t] if prep.line_keys is not None else b""
            groups.setdefault(key, []).append(i)
        for key, idx in groups.items():
            topo = prep.topo_for_key(key)
            idx = np.asarray(idx)
            if topo.n_components > 1:
                exact[idx] = True
                continue
            flows = inj[idx] @ topo.ptdf.T
            lim = topo.limit[None, :] + 1e-6
            bad = (np.abs(flows) > lim)[:, topo.active].any(axis=1) \
                if len(topo.active) else np.zeros(len(idx), bool)
            exact[idx] |= bad

    n_lp = 0
    for i in np.flatnonzero(exact):
        t = int(hours[i])
        inputs = HourInputs(
            cg_av=prep.cg_bus[t], rg_av=prep.rg_bus[t],
            rg_min=prep.rg_min_bus[t], load=prep.load_bus[t],
            ges_fixed_charge=charge_rec[:, t] if n_units else _EMPTY,
            ges_fixed_discharge=discharge_rec[:, t] if n_units else _EMPTY,
            ges_bus=ges_bus, ges_max_extra=np.zeros(n_units))
        res = dp.solve_hour(inputs, prep.topo(t), want_theta=False)
        x_arr[t] = res.total_curtailment
        n_lp += 1
        if records is not None and x_arr[t] > 0:
            for b in np.flatnonzero(res.curtail_by_bus > 1e-12):
                records.append(CurtailmentRecord(
                    scenario_idx, t, int(b), float(res.curtail_by_bus[b]),
                    CAUSE_CONGESTION))
    if records is not None:
        plain = np.flatnonzero((shortfall > 1e-12) & ~exact)
        for i in plain:
            t = int(hours[i])
            share = prep.load_bus[t] / prep.load_tot[t]
            for b in np.flatnonzero(prep.load_bus[t] > 0):
                records.append(CurtailmentRecord(
                    scenario_idx, t, int(b),
                    float(shortfall[i] * share[b]), CAUSE_DEFICIT))
    return n_lp


_EMPTY = np.zeros(0)


# -- engine --


class _Engine:
    def __init__(self, model, strategy, mode, gamma, master_seed,
                 collect_ops=False, collect_records=False):
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}")
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.model = model
        self.strategy = strategy
        self.mode = mode
        self.gamma = gamma
        self.seed = master_seed
        self.collect_ops = collect_ops
        self.collect_records = collect_records
        self.units = model.ges_units
        self.n_units = len(self.units)
        self.ges_bus = np.array([u.bus for u in self.units], dtype=int)
        self._fleet_key = tuple(
            (u.name, u.bus, u.p_charge_max, u.p_discharge_max, u.energy_rated,
             u.eta_c, u.eta_d, u.self_discharge, u.soc_init, u.soc_min,
             u.soc_max)
            for u in self.units)
        self.warnings = 0

    # day-ahead plans ------------------------------------------------

    def _fixed_plan(self, day):
        t0 = day * 24
        model = self.model
        nominal = np.zeros((24, model.n_buses))
        for u in model.cg_units:
            nominal[:, u.bus] += u.capacity
        for u in model.rg_units:
            nominal[:, u.bus] += u.capacity * model.capacity_factor(u)[t0:t0 + 24]
        key = (self._fleet_key, model.load_matrix[t0:t0 + 24].tobytes(),
               nominal.tobytes())
        plan = _FIXED_CACHE.get(key)
        if plan is None:
            plan = dp.fixed_dispatch_schedule(self.model, None, day)
            if len(_FIXED_CACHE) > 1024:
                _FIXED_CACHE.clear()
            _FIXED_CACHE[key] = plan
        return plan

    def _arbitrage_plan(self, unit, day):
        t0 = day * 24
        prices = self.model.price[t0:t0 + 24]
        key = (unit.name, unit.p_charge_max, unit.p_discharge_max,
               unit.energy_rated, unit.eta_c, unit.eta_d,
               unit.self_discharge, unit.soc_init, unit.soc_min,
               unit.soc_max, prices.tobytes())
        plan = _ARB_CACHE.get(key)
        if plan is None:
            plan = dp.arbitrage_schedule(unit, prices, 0)
            if len(_ARB_CACHE) > 4096:
                _ARB_CACHE.clear()
            _ARB_CACHE[key] = plan
        return plan

    def _bind_day(self, runs, day, t0):
        """Compute each unit's day-ahead baseline for this day."""
        for run in runs:
            u = run.unit
            if self.strategy == FIXED:
                plan = self._fixed_plan(day)
                k = plan.unit_names.index(u.name)
                run.bs_c = plan.charge[k]
                run.bs_d = plan.discharge[k]
                run.soc_da = plan.soc[k]
            elif self.strategy == COORDINATED:
                if u.is_ves:
                    if self.mode == U1 or run.draws.baseline_charge is None:
                        run.bs_c = np.zeros(24)
                        run.bs_d = np.zeros(24)
                        run.soc_da = np.full(24, u.soc_init)
                    else:
                        run.bs_c, run.bs_d, run.soc_da = self._ves_baseline(
                            run, day, t0)
                else:
                    plan = self._arbitrage_plan(u, day)
                    run.bs_c = plan.charge[0]
                    run.bs_d = plan.discharge[0]
                    run.soc_da = plan.soc[0]
            if not u.rd_accumulates:
                run.use_s = 0.0
                run.use_r = 0.0

    def _ves_baseline(self, run, day, t0):
        """Feasible baseline path from the drawn self-consumption."""
        u = run.unit
        bs_c = np.zeros(24)
        bs_d = np.zeros(24)
        soc_da = np.empty(24)
        soc = run.soc_da[-1] if run.soc_da is not None else u.soc_init
        for h in range(24):
            t = t0 + h
            if t >= self.model.horizon:
                soc_da[h:] = soc
                break
            floor = run.view_floor(t)
            ceil = run.view_ceil(t)
            net = float(run.draws.baseline_charge[t]) - \
                float(run.draws.baseline_discharge[t])
            drift = (1.0 - u.self_discharge) * soc
            if net >= 0:
                c = min(net, u.p_charge_max, max(0.0, (ceil - drift)) *
                        u.energy_rated / u.eta_c)
                d = 0.0
            else:
                d = min(-net, u.p_discharge_max, max(0.0, (drift - floor)) *
                        u.eta_d * u.energy_rated)
                c = 0.0
            bs_c[h] = c
            bs_d[h] = d
            soc = soc_after(soc, c, d, u, 1.0, u.energy_rated)
            soc = min(max(soc, 0.0), 1.0)
            soc_da[h] = soc
        return bs_c, bs_d, soc_da

    # hourly decisions -----------------------------------------------

    def _normal_actions(self, runs, t, h, rc):
        """Scheduled charge/discharge per unit outside emergencies."""
        n = self.n_units
        charge = np.zeros(n)
        discharge = np.zeros(n)
        label = NORMAL
        if self.strategy == FIXED:
            for run in runs:
                charge[run.idx] = run.bs_c[h]
                discharge[run.idx] = run.bs_d[h]
        elif self.strategy == GREEDY:
            rc_pos = max(0.0, rc)
            for run in runs:
                if not run.view_on(t):
                    continue
                u = run.unit
                drift = (1.0 - run.eps) * run.soc_s
                headroom = (u.soc_max - drift) * run.srated / run.ec
                charge[run.idx] = min(run.phi * rc_pos, run.pc,
                                      max(0.0, headroom))
        else:  # coordinated: track the day-ahead SoC target
            for run in runs:
                u = run.unit
                target = run.soc_da[h]
                drift = (1.0 - run.eps) * run.soc_s
                prev_da = run.soc_da[h - 1] if h > 0 else u.soc_init
                if abs(run.soc_s - prev_da) > _TRACK_TOL:
                    label = RECOVERY
                if not run.view_on(t):
                    continue
                basis = run.view_basis()
                if target > drift:
                    c = min(run.pc, (target - drift) * basis / run.ec,
                            max(0.0, run.phi * rc))
                    # never charge beyond the view ceiling
                    ceil = run.view_ceil(t)
                    c = min(c, max(0.0, (ceil - drift) * basis / run.ec))
                    charge[run.idx] = max(0.0, c)
                elif target < drift:
                    d = min(run.pd, (drift - target) * basis * run.ed)
                    floor = run.view_floor(t)
                    if run.chance is not None:
                        floor = max(floor, run.chance.floor(
                            floor, run.sched_rd(h, run.soc_s)))
                    d = min(d, dp.max_emergency_discharge(
                        u, run.soc_s, basis, floor, True))
                    discharge[run.idx] = max(0.0, d)
        return charge, discharge, label

    def _emergency_bounds(self, runs, t, h):
        caps = np.zeros(self.n_units)
        for run in runs:
            floor = run.view_floor(t)
            if run.chance is not None:
                floor, warn = run.emergency_floor(t, h)
                self.warnings += int(warn)
            caps[run.idx] = dp.max_emergency_discharge(
                run.unit, run.soc_s, run.view_basis(), floor, run.view_on(t))
        return caps

    def _clip_fixed_emergency(self, charge, discharge, prep, t):
        """Scheduled charging beyond what the system can physically source
        is reduced (never counted as unserved energy)."""
        total_c = float(charge.sum())
        if total_c <= 0.0:
            return charge
        # the hour stays balanceable while deficit <= curtailable load
        supply = float(prep.av_tot[t] + discharge.sum())
        allowed = max(0.0, min(total_c, supply))
        if allowed < total_c:
            charge = charge * (allowed / total_c)
        return charge

    # main loop ------------------------------------------------------

    def run_scenario(self, scenario_idx, years):
        model = self.model
        T = model.horizon
        chance_root = derive_stream(self.seed, ("chance",))
        runs = [
            _UnitRun(u, i, self.mode, self.gamma,
                     chance_root.child(u.name))
            for i, u in enumerate(self.units)
        ]
        out_t = []
        out_p = []
        out_lol_t = []
        out_lol_p = []
        records = [] if self.collect_records else None
        ops = None
        sched_energy = 0.0

        for year in range(years):
            year_index = scenario_idx * years + year
            scenario = build_scenario(model, year_index, self.seed)
            prep = _Prep(model, scenario)
            for run in runs:
                run.bind_scenario(scenario.ves_diu_draws[run.unit.name],
                                  self.mode, T)
            collect = self.collect_ops and scenario_idx == 0 and year == 0
            if collect:
                ops = OpsTrace(
                    unit_names=[u.name for u in self.units],
                    labels=[NORMAL] * T,
                    rc=prep.rc.copy(),
                    soc=np.zeros((self.n_units, T)),
                    soc_real=np.zeros((self.n_units, T)),
                    charge=np.zeros((self.n_units, T)),
                    discharge=np.zeros((self.n_units, T)),
                    curtail_theoretical=np.zeros(T),
                    curtail_practical=np.zeros(T),
                )
            x_arr = np.zeros(T)
            y_arr = np.zeros(T)
            charge_rec = np.zeros((self.n_units, T))
            discharge_rec = np.zeros((self.n_units, T))
            n_days = T // 24
            for day in range(n_days):
                t0 = day * 24
                self._bind_day(runs, day, t0)
                kappa_day = [float(r.draws.kappa_by_day[day]) for r in runs]
                for h in range(24):
                    t = t0 + h
                    rc = float(prep.rc[t])
                    if rc < 0.0:
                        label = EMERGENCY
                        charge = np.zeros(self.n_units)
                        discharge = np.zeros(self.n_units)
                        caps = np.zeros(self.n_units)
                        if self.strategy == FIXED:
                            for run in runs:
                                charge[run.idx] = run.bs_c[h]
                                discharge[run.idx] = run.bs_d[h]
                            charge = self._clip_fixed_emergency(
                                charge, discharge, prep, t)
                        else:
                            caps = self._emergency_bounds(runs, t, h)
                        inputs = HourInputs(
                            cg_av=prep.cg_bus[t], rg_av=prep.rg_bus[t],
                            rg_min=prep.rg_min_bus[t], load=prep.load_bus[t],
                            ges_fixed_charge=charge,
                            ges_fixed_discharge=discharge,
                            ges_bus=self.ges_bus, ges_max_extra=caps)
                        result = dp.solve_hour(inputs, prep.topo(t),
                                               want_theta=False)
                        if result.warning:
                            self.warnings += 1
                        charge = result.ges_charge
                        discharge = result.ges_discharge
                        x_arr[t] = result.total_curtailment
                        if records is not None and x_arr[t] > 0:
                            for b in np.flatnonzero(result.curtail_by_bus > 1e-12):
                                records.append(CurtailmentRecord(
                                    scenario_idx, t, int(b),
                                    float(result.curtail_by_bus[b]),
                                    CAUSE_DEFICIT))
                    else:
                        # surplus hour: actions are congestion-independent,
                        # so line limits are verified in a batch afterwards
                        charge, discharge, label = self._normal_actions(
                            runs, t, h, rc)

                    # theoretical state step + practical replay
                    y_t = 0.0
                    for run in runs:
                        c = float(charge[run.idx])
                        d = float(discharge[run.idx])
                        charge_rec[run.idx, t] = c
                        discharge_rec[run.idx, t] = d
                        sched_energy += d
                        basis = run.view_basis()
                        soc_next = soc_after(run.soc_s, c, d, run.unit, 1.0,
                                             basis)
                        run.soc_s = min(max(soc_next, 0.0), 1.0)
                        if run.unit.ddu is not None:
                            bc = run.bs_c[h] if run.bs_c is not None else 0.0
                            bd = run.bs_d[h] if run.bs_d is not None else 0.0
                            if run.pc > 0:
                                run.use_s += abs(c - bc) / run.pc
                            if run.pd > 0:
                                run.use_s += abs(d - bd) / run.pd
                        if run.deg_in_view:
                            run.alpha_s = degradation_after(
                                run.alpha_s, c, d, kappa_day[run.idx], run.unit)
                            run.sav_s = available_energy(run.alpha_s, run.unit)
                        lost, ec, ed = replay_step(run, t, h, day, c, d)
                        y_t += lost
                        if records is not None and lost > 1e-12:
                            records.append(CurtailmentRecord(
                                scenario_idx, t, run.bus, lost, CAUSE_STORAGE))
                        if collect:
                            ops.soc[run.idx, t] = run.soc_s
                            ops.soc_real[run.idx, t] = run.soc_r
                            ops.charge[run.idx, t] = c
                            ops.discharge[run.idx, t] = d
                    y_arr[t] = y_t
                    if collect:
                        ops.labels[t] = label

            net_by_bus = np.zeros((T, model.n_buses))
            for run in runs:
                net_by_bus[:, run.bus] += discharge_rec[run.idx] - \
                    charge_rec[run.idx]
            surplus_hours = np.flatnonzero(prep.rc >= 0.0)
            _batch_verify(prep, surplus_hours, net_by_bus, x_arr, records,
                          scenario_idx, self.n_units, self.ges_bus,
                          charge_rec, discharge_rec)

            if collect:
                ops.curtail_theoretical = x_arr.copy()
                ops.curtail_practical = x_arr + y_arr

            out_t.append(float(x_arr.sum()))
            out_p.append(float(x_arr.sum() + y_arr.sum()))
            out_lol_t.append(int((x_arr > 1e-9).sum()))
            out_lol_p.append(int((x_arr + y_arr > 1e-9).sum()))

        return (out_t, out_p, out_lol_t, out_lol_p, records, ops,
                self.warnings, sched_energy)


def _vectorized_reference(model, scenario_idx, years, master_seed,
                          collect_records=False):
    """Fast storage-free path; agrees with the hourly loop exactly."""
    out_t, out_lol = [], []
    records = [] if collect_records else None
    for year in range(years):
        scenario = build_scenario(model, scenario_idx * years + year,
                                  master_seed)
        prep = _Prep(model, scenario)
        T = model.horizon
        x = np.zeros(T)
        net = np.zeros((T, model.n_buses))
        _batch_verify(prep, np.arange(T), net, x, records, scenario_idx,
                      0, np.zeros(0, dtype=int), np.zeros((0, T)),
                      np.zeros((0, T)))
        out_t.append(float(x.sum()))
        out_lol.append(int((x > 1e-9).sum()))
    return out_t, out_lol, records


def _run_one_scenario(args):
    (model, strategy, mode, gamma, seed, s, years,
     collect_ops, collect_records) = args
    if not model.ges_units:
        t_list, lol, recs = _vectorized_reference(model, s, years, seed,
                                                  collect_records)
        return (t_list, list(t_list), lol, list(lol), recs, None, 0, 0.0)
    eng = _Engine(model, strategy, mode, gamma, seed,
                  collect_ops=collect_ops, collect_records=collect_records)
    return eng.run_scenario(s, years)


def _resolve_threads(threads):
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("ADEQSIM_THREADS")
    if env:
        return max(1, int(env))
    return 1


def run_smcs(model: SystemModel, strategy=COORDINATED, mode=U3, years=None,
             scenarios=None, master_seed=None, collect_ops=False,
             collect_records=False, threads=None,
             convergence_threshold=0.05) -> ReliabilityReport:
    """Run the sequential Monte Carlo assessment.

    Deterministic in (model, strategy, mode, years, scenarios, seed) --
    worker parallelism never changes results, only wall time.
    """
    years = model.study.years if years is None else int(years)
    scenarios = model.study.scenarios if scenarios is None else int(scenarios)
    master_seed = model.study.master_seed if master_seed is None else int(master_seed)
    if years < 1 or scenarios < 1:
        raise ValueError("years and scenarios must be >= 1")

    jobs = [
        (model, strategy, mode, model.study.gamma, master_seed, s, years,
         collect_ops and s == 0, collect_records)
        for s in range(scenarios)
    ]
    n_workers = min(_resolve_threads(threads), scenarios)
    if n_workers > 1:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(n_workers) as pool:
            results = pool.map(_run_one_scenario, jobs, chunksize=1)
    else:
        results = [_run_one_scenario(j) for j in jobs]

    yearly_t, yearly_p = [], []
    lol_t = lol_p = 0
    warnings = 0
    sched_energy = 0.0
    records = [] if collect_records else None
    ops = None
    for s, res in enumerate(results):
        t_list, p_list, lt, lp, recs, trace, warns, se = res
        yearly_t.extend(t_list)
        yearly_p.extend(p_list)
        lol_t += sum(lt)
        lol_p += sum(lp)
        warnings += warns
        sched_energy += se
        if recs is not None and records is not None:
            records.extend(recs)
        if trace is not None and ops is None:
            ops = trace

    n_samples = scenarios * years
    covs, converged = convergence_check(yearly_t, convergence_threshold)
    total_hours = n_samples * model.horizon
    return ReliabilityReport(
        eens_theoretical=float(np.mean(yearly_t)),
        eens_practical=float(np.mean(yearly_p)),
        lolp=lol_p / total_hours,
        lolp_theoretical=lol_t / total_hours,
        yearly_theoretical=[float(v) for v in yearly_t],
        yearly_practical=[float(v) for v in yearly_p],
        cov_series=covs,
        converged=converged,
        scenario_count=scenarios,
        years=years,
        horizon=model.horizon,
        strategy=strategy,
        mode=mode,
        master_seed=master_seed,
        warnings=warnings,
        sched_storage_energy=sched_energy,
        ops=ops,
        records=records,
    )
