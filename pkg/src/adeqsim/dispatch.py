"""Storage dispatch strategies and the hourly curtailment subproblem.

Three strategies are provided: a frozen day-ahead peak-shaving schedule, a
greedy keep-full policy, and the two-stage coordinated policy (day-ahead
self-energy management plus real-time emergency/recovery corrections).

The hourly DC-OPF that minimizes load curtailment first tries a
copper-plate dispatch checked against line limits; only hours where the
network actually binds (or islands) fall back to the LP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from . import lp
from .ges import GesUnit, available_energy, soc_after
from .system import SystemModel

FIXED = "fixed"
GREEDY = "greedy"
COORDINATED = "coordinated"
STRATEGIES = (FIXED, GREEDY, COORDINATED)

U1, U2, U3 = "U1", "U2", "U3"
MODES = (U1, U2, U3)

NORMAL = "normal"
EMERGENCY = "emergency"
RECOVERY = "recovery"

_FLOW_TOL = 1e-6
_BALANCE_TOL = 1e-9


@dataclass
class OperatingContext:
    """System-wide state visible to a dispatch decision at one hour."""

    residual_capacity: float
    gamma: float
    baseline_soc: np.ndarray | None = None

    @property
    def emergency(self):
        return self.residual_capacity < 0.0


@dataclass
class DispatchPlan:
    """Day-ahead schedule for a set of GES units (24-hour window)."""

    unit_names: list
    charge: np.ndarray  # (n_units, 24) MW
    discharge: np.ndarray
    soc: np.ndarray  # end-of-hour SoC, (n_units, 24)
    peak_by_bus: dict | None = None  # fixed dispatch only
    profit: float | None = None  # arbitrage only


@dataclass
class HourlyDispatchResult:
    curtail_by_bus: np.ndarray
    flows: np.ndarray
    theta: np.ndarray
    cg_dispatch: np.ndarray
    rg_dispatch: np.ndarray
    ges_charge: np.ndarray
    ges_discharge: np.ndarray
    state_label: str = NORMAL
    used_lp: bool = False
    warning: str | None = None

    @property
    def total_curtailment(self):
        return float(self.curtail_by_bus.sum())


class TopologyCase:
    """DC network machinery for one line-outage signature."""

    def __init__(self, model: SystemModel, line_on):
        n = model.n_buses
        self.n_buses = n
        self.line_on = np.asarray(line_on, dtype=bool)
        self.fb = np.array([ln.from_bus for ln in model.lines], dtype=int)
        self.tb = np.array([ln.to_bus for ln in model.lines], dtype=int)
        self.sus = np.array([1.0 / ln.reactance for ln in model.lines])
        self.limit = np.array([ln.flow_limit for ln in model.lines])
        self.active = np.flatnonzero(self.line_on)

        adj = [[] for _ in range(n)]
        for k in self.active:
            adj[self.fb[k]].append(self.tb[k])
            adj[self.tb[k]].append(self.fb[k])
        comp = np.full(n, -1, dtype=int)
        comps = []
        for start in range(n):
            if comp[start] >= 0:
                continue
            cid = len(comps)
            stack = [start]
            comp[start] = cid
            members = [start]
            while stack:
                for j in adj[stack.pop()]:
                    if comp[j] < 0:
                        comp[j] = cid
                        stack.append(j)
                        members.append(j)
            comps.append(sorted(members))
        self.component_of = comp
        self.components = comps
        self.roots = [c[0] for c in comps]

        # reduced susceptance factorizations per multi-bus component
        B = np.zeros((n, n))
        for k in self.active:
            i, j, s = self.fb[k], self.tb[k], self.sus[k]
            B[i, i] += s
            B[j, j] += s
            B[i, j] -= s
            B[j, i] -= s
        self._lu = {}
        for cid, members in enumerate(comps):
            keep = [b for b in members if b != self.roots[cid]]
            if keep:
                self._lu[cid] = (keep, lu_factor(B[np.ix_(keep, keep)]))
        self._ptdf = None

    @property
    def n_components(self):
        return len(self.components)

    @property
    def ptdf(self):
        """Line-flow sensitivities to bus injections (slack at each
        component root); lazily built and cached."""
        if self._ptdf is None:
            n = self.n_buses
            out = np.zeros((len(self.fb), n))
            for b in range(n):
                inj = np.zeros(n)
                inj[b] = 1.0
                out[:, b] = self.flows(self.solve_theta(inj))
            self._ptdf = out
        return self._ptdf

    def solve_theta(self, injections):
        theta = np.zeros(self.n_buses)
        for cid in self._lu:
            keep, fac = self._lu[cid]
            theta[keep] = lu_solve(fac, injections[keep])
        return theta

    def flows(self, theta):
        f = np.zeros(len(self.fb))
        f[self.active] = (theta[self.fb[self.active]] -
                          theta[self.tb[self.active]]) * self.sus[self.active]
        return f

    def within_limits(self, flows, margin=0.0):
        if not len(self.active):
            return True
        a = self.active
        return bool(np.all(np.abs(flows[a]) <= self.limit[a] - margin + _FLOW_TOL))


def _proportional(amount, caps):
    """Split `amount` over entries proportionally to caps (deterministic)."""
    caps = np.asarray(caps, dtype=float)
    total = caps.sum()
    if total <= 0.0 or amount <= 0.0:
        return np.zeros_like(caps)
    out = caps * (min(amount, total) / total)
    return out


@dataclass
class HourInputs:
    """Per-hour bus-level data for the curtailment subproblem."""

    cg_av: np.ndarray  # available CG per bus
    rg_av: np.ndarray  # available RG per bus
    rg_min: np.ndarray  # minimum RG dispatch per bus (curtail limit)
    load: np.ndarray
    ges_fixed_charge: np.ndarray  # per unit, MW (already decided)
    ges_fixed_discharge: np.ndarray  # per unit, MW
    ges_bus: np.ndarray  # bus index per unit
    ges_max_extra: np.ndarray  # optimizable emergency discharge cap per unit


def solve_hour(inputs: HourInputs, topo: TopologyCase,
               want_theta=True) -> HourlyDispatchResult:
    """Minimize total curtailment for one hour.

    The copper-plate candidate (proportional generator dispatch, needed
    storage discharge, load-proportional curtailment) is certified against
    line limits; if it violates them or the network is islanded, the exact
    LP is solved instead.
    """
    n = topo.n_buses
    fixed_net = np.zeros(n)
    np.add.at(fixed_net, inputs.ges_bus,
              inputs.ges_fixed_discharge - inputs.ges_fixed_charge)
    eff_load = inputs.load - fixed_net
    av = inputs.cg_av + inputs.rg_av

    # per-component copper plate (every island balances independently)
    curtail = np.zeros(n)
    cg = np.zeros(n)
    rg = np.zeros(n)
    extra = np.zeros(len(inputs.ges_max_extra))
    inj = np.zeros(n)
    ok = True
    for members in topo.components:
        members = np.asarray(members)
        eff_c = float(eff_load[members].sum())
        av_c = float(av[members].sum())
        if eff_c < 0.0:
            ok = False
            break
        umask = np.isin(inputs.ges_bus, members) if len(inputs.ges_bus) else \
            np.zeros(0, dtype=bool)
        caps_c = np.where(umask, inputs.ges_max_extra, 0.0)
        need_extra = eff_c - av_c
        extra_c = _proportional(max(0.0, need_extra), caps_c)
        deficit = max(0.0, need_extra - float(extra_c.sum()))
        load_c = float(inputs.load[members].sum())
        if deficit > load_c + _BALANCE_TOL:
            ok = False
            break
        if load_c > 0 and deficit > 0:
            curtail[members] = inputs.load[members] * (deficit / load_c)
        gen_need = eff_c - float(extra_c.sum()) - deficit
        factor = 0.0 if av_c <= 0 else min(1.0, max(0.0, gen_need / av_c))
        cg[members] = inputs.cg_av[members] * factor
        rg[members] = inputs.rg_av[members] * factor
        if np.any(inputs.rg_min[members] > rg[members] + _BALANCE_TOL):
            ok = False
            break
        extra += extra_c
        inj_c = cg[members] + rg[members] + curtail[members] - eff_load[members]
        inj[members] = inj_c
        np.add.at(inj, inputs.ges_bus[umask], extra_c[umask])
        # proportional dispatch leaves a tiny residual; dump it on the
        # component's largest generator bus
        resid = float(inj[members].sum())
        if abs(resid) > _BALANCE_TOL:
            inj[members[int(np.argmax(av[members]))]] -= resid

    if ok:
        flows = topo.ptdf @ inj if len(topo.fb) else np.zeros(0)
        if topo.within_limits(flows):
            theta = topo.solve_theta(inj) if want_theta else np.zeros(n)
            return HourlyDispatchResult(
                curtail_by_bus=curtail, flows=flows, theta=theta,
                cg_dispatch=cg, rg_dispatch=rg,
                ges_charge=inputs.ges_fixed_charge.copy(),
                ges_discharge=inputs.ges_fixed_discharge + extra,
                used_lp=False)
    return _solve_hour_lp(inputs, topo)


def _solve_hour_lp(inputs: HourInputs, topo: TopologyCase,
                   relax_rg_min=False, drop_fixed_charge=False):
    n = topo.n_buses
    prob = lp.LpProblem(name="curtailment-hour")
    theta = [prob.add_var(lo=-np.inf, hi=np.inf, name=f"th{b}") for b in range(n)]
    for root in topo.roots:
        prob.add_row("==", 0.0, [(theta[root], 1.0)])

    rg_min = np.zeros(n) if relax_rg_min else inputs.rg_min
    fixed_charge = (np.zeros_like(inputs.ges_fixed_charge)
                    if drop_fixed_charge else inputs.ges_fixed_charge)
    cg = {b: prob.add_var(lo=0.0, hi=inputs.cg_av[b], name=f"cg{b}")
          for b in range(n) if inputs.cg_av[b] > 0}
    rg = {b: prob.add_var(lo=rg_min[b], hi=inputs.rg_av[b], name=f"rg{b}")
          for b in range(n) if inputs.rg_av[b] > 0}
    lc = {b: prob.add_var(obj=1.0 + 1e-6 * b, lo=0.0, hi=inputs.load[b],
                          name=f"lc{b}")
          for b in range(n) if inputs.load[b] > 0}
    extra = {}
    for u in range(len(inputs.ges_max_extra)):
        if inputs.ges_max_extra[u] > 0:
            extra[u] = prob.add_var(obj=1e-7 * (1.0 + 1e-3 * u), lo=0.0,
                                    hi=inputs.ges_max_extra[u], name=f"d{u}")

    fixed_net = np.zeros(n)
    np.add.at(fixed_net, inputs.ges_bus,
              inputs.ges_fixed_discharge - fixed_charge)

    balance = [[] for _ in range(n)]
    for k in topo.active:
        i, j, s = int(topo.fb[k]), int(topo.tb[k]), topo.sus[k]
        lim = topo.limit[k]
        prob.add_row("<=", lim, [(theta[i], s), (theta[j], -s)])
        prob.add_row(">=", -lim, [(theta[i], s), (theta[j], -s)])
        balance[i].append((theta[i], -s))
        balance[i].append((theta[j], s))
        balance[j].append((theta[j], -s))
        balance[j].append((theta[i], s))

    for b in range(n):
        coefs = list(balance[b])
        if b in cg:
            coefs.append((cg[b], 1.0))
        if b in rg:
            coefs.append((rg[b], 1.0))
        if b in lc:
            coefs.append((lc[b], 1.0))
        for u, var in extra.items():
            if inputs.ges_bus[u] == b:
                coefs.append((var, 1.0))
        prob.add_row("==", float(inputs.load[b] - fixed_net[b]), coefs)

    sol = lp.solve_lp(prob)
    if sol.status != lp.OPTIMAL:
        if not relax_rg_min:
            out = _solve_hour_lp(inputs, topo, relax_rg_min=True,
                                 drop_fixed_charge=drop_fixed_charge)
            out.warning = out.warning or "rg minimum-take relaxed"
            return out
        if not drop_fixed_charge:
            out = _solve_hour_lp(inputs, topo, relax_rg_min=True,
                                 drop_fixed_charge=True)
            out.warning = "scheduled charge unservable; dropped"
            return out
        raise lp.LpError(f"hourly curtailment LP {sol.status}")

    x = sol.x
    th = np.array([x[theta[b]] for b in range(n)])
    flows = topo.flows(th)
    curtail = np.zeros(n)
    for b, var in lc.items():
        curtail[b] = max(0.0, x[var])
    cg_disp = np.zeros(n)
    for b, var in cg.items():
        cg_disp[b] = x[var]
    rg_disp = np.zeros(n)
    for b, var in rg.items():
        rg_disp[b] = x[var]
    discharge = inputs.ges_fixed_discharge.copy()
    for u, var in extra.items():
        discharge[u] += max(0.0, x[var])
    return HourlyDispatchResult(
        curtail_by_bus=curtail, flows=flows, theta=th,
        cg_dispatch=cg_disp, rg_dispatch=rg_disp,
        ges_charge=fixed_charge.copy(), ges_discharge=discharge,
        used_lp=True)


# -- day-ahead schedules --


def _net_plan(charge, discharge, unit):
    """Enforce charge/discharge complementarity, preserving the SoC flux."""
    flux = unit.eta_c * charge - discharge / unit.eta_d
    c = np.where(flux >= 0, flux / unit.eta_c, 0.0)
    d = np.where(flux < 0, -flux * unit.eta_d, 0.0)
    return c, d


def _soc_path(charge, discharge, unit, soc0, basis):
    out = np.empty(charge.shape[-1])
    soc = soc0
    for h in range(charge.shape[-1]):
        soc = soc_after(soc, charge[h], discharge[h], unit, 1.0, basis)
        out[h] = soc
    return out


def fixed_dispatch_schedule(model: SystemModel, scenario, day) -> DispatchPlan:
    """Daily peak-shaving LP; the schedule is frozen (outage-blind).

    Minimizes the summed per-bus peak of net load, with nominal (no-outage)
    generator availability on the day.
    """
    units = model.ges_units
    t0 = day * 24
    hours = range(t0, min(t0 + 24, model.horizon))
    n_h = len(hours)
    if n_h < 24:
        raise ValueError("fixed dispatch needs a full 24-hour window")

    load = model.load_matrix[t0:t0 + 24]
    nominal = np.zeros_like(load)
    for u in model.cg_units:
        nominal[:, u.bus] += u.capacity
    for u in model.rg_units:
        nominal[:, u.bus] += u.capacity * model.capacity_factor(u)[t0:t0 + 24]
    net = load - nominal

    peaks = {b: float(net[:, b].max()) for b in range(model.n_buses)}
    if not units:
        return DispatchPlan([], np.zeros((0, 24)), np.zeros((0, 24)),
                            np.zeros((0, 24)), peak_by_bus=peaks)

    prob = lp.LpProblem(name=f"peak-shave-d{day}")
    ges_buses = sorted({u.bus for u in units})
    pk = {b: prob.add_var(obj=1.0, lo=-np.inf, hi=np.inf, name=f"pk{b}")
          for b in ges_buses}
    cvar = np.empty((len(units), 24), dtype=int)
    dvar = np.empty_like(cvar)
    svar = np.empty_like(cvar)
    eps = 1e-9
    for k, u in enumerate(units):
        for h in range(24):
            cvar[k, h] = prob.add_var(obj=eps, lo=0.0, hi=u.p_charge_max)
            dvar[k, h] = prob.add_var(obj=eps, lo=0.0, hi=u.p_discharge_max)
            svar[k, h] = prob.add_var(lo=u.soc_min, hi=u.soc_max)
    for k, u in enumerate(units):
        s = u.energy_rated
        for h in range(24):
            coefs = [(svar[k, h], 1.0), (cvar[k, h], -u.eta_c / s),
                     (dvar[k, h], 1.0 / (u.eta_d * s))]
            rhs = 0.0
            if h == 0:
                rhs = (1.0 - u.self_discharge) * u.soc_init
            else:
                coefs.append((svar[k, h - 1], -(1.0 - u.self_discharge)))
            prob.add_row("==", rhs, coefs)
        prob.add_row("==", u.soc_init, [(svar[k, 23], 1.0)])
    for b in ges_buses:
        members = [k for k, u in enumerate(units) if u.bus == b]
        for h in range(24):
            coefs = [(pk[b], -1.0)]
            for k in members:
                coefs.append((cvar[k, h], 1.0))
                coefs.append((dvar[k, h], -1.0))
            prob.add_row("<=", -net[h, b], coefs)

    sol = lp.solve_lp(prob)
    if sol.status != lp.OPTIMAL:
        raise lp.LpError(f"peak-shaving LP {sol.status}: inconsistent GES parameters")

    charge = np.array([[sol.x[cvar[k, h]] for h in range(24)]
                       for k in range(len(units))])
    discharge = np.array([[sol.x[dvar[k, h]] for h in range(24)]
                          for k in range(len(units))])
    soc = np.empty_like(charge)
    for k, u in enumerate(units):
        charge[k], discharge[k] = _net_plan(charge[k], discharge[k], u)
        soc[k] = _soc_path(charge[k], discharge[k], u, u.soc_init, u.energy_rated)
        peaks[u.bus] = float(sol.x[pk[u.bus]])
    return DispatchPlan([u.name for u in units], charge, discharge, soc,
                        peak_by_bus=peaks)


def arbitrage_schedule(unit: GesUnit, price_series, day=0) -> DispatchPlan:
    """Daily energy-arbitrage LP for one ES unit (day-ahead prices)."""
    prices = np.asarray(price_series, dtype=float)
    if prices.size >= 24 * (day + 1):
        prices = prices[day * 24:(day + 1) * 24]
    if prices.size != 24:
        raise ValueError("arbitrage needs 24 price points")

    prob = lp.LpProblem(name="arbitrage")
    eps = 1e-9
    c_idx = [prob.add_var(obj=prices[h] + eps, lo=0.0, hi=unit.p_charge_max)
             for h in range(24)]
    d_idx = [prob.add_var(obj=-prices[h] + eps, lo=0.0, hi=unit.p_discharge_max)
             for h in range(24)]
    s_idx = [prob.add_var(lo=unit.soc_min, hi=unit.soc_max) for _ in range(24)]
    s = unit.energy_rated
    for h in range(24):
        coefs = [(s_idx[h], 1.0), (c_idx[h], -unit.eta_c / s),
                 (d_idx[h], 1.0 / (unit.eta_d * s))]
        rhs = 0.0
        if h == 0:
            rhs = (1.0 - unit.self_discharge) * unit.soc_init
        else:
            coefs.append((s_idx[h - 1], -(1.0 - unit.self_discharge)))
        prob.add_row("==", rhs, coefs)
    prob.add_row("==", unit.soc_init, [(s_idx[23], 1.0)])
    sol = lp.solve_lp(prob)
    if sol.status != lp.OPTIMAL:
        raise lp.LpError(f"arbitrage LP {sol.status}")

    charge = np.array([sol.x[i] for i in c_idx])
    discharge = np.array([sol.x[i] for i in d_idx])
    charge, discharge = _net_plan(charge, discharge, unit)
    soc = _soc_path(charge, discharge, unit, unit.soc_init, unit.energy_rated)
    profit = float(np.dot(prices, discharge - charge))
    return DispatchPlan([unit.name], charge[None, :], discharge[None, :],
                        soc[None, :], profit=profit)


# -- real-time building blocks --


def greedy_normal_charge(context: OperatingContext, ges_states, units):
    """Charge allocation under the greedy policy in the normal state."""
    rc = max(0.0, context.residual_capacity)
    out = np.zeros(len(units))
    for k, (u, st) in enumerate(zip(units, ges_states)):
        headroom = (u.soc_max - (1.0 - u.self_discharge) * st.soc) * \
            u.energy_rated / u.eta_c
        out[k] = min(u.capacity_share * rc, u.p_charge_max, max(0.0, headroom))
    return out


def recovery_action(unit: GesUnit, state, baseline_soc, residual_capacity, phi):
    """Charge or discharge steering the real-time SoC back to baseline."""
    s_av = state.energy_available or available_energy(state.alpha, unit)
    drift = (1.0 - unit.self_discharge) * state.soc
    if baseline_soc > drift:
        charge = min(unit.p_charge_max,
                     (baseline_soc - drift) * s_av / unit.eta_c,
                     max(0.0, phi * residual_capacity))
        return max(0.0, charge), 0.0
    if baseline_soc < drift:
        discharge = min(unit.p_discharge_max,
                        (drift - baseline_soc) * s_av * unit.eta_d)
        return 0.0, max(0.0, discharge)
    return 0.0, 0.0


@dataclass
class ChanceFloor:
    """Deterministic equivalent of the DDU chance constraint.

    The (1-gamma) quantile of the lower-bound distortion factor is
    precomputed on an RD grid from M common base draws; the floor at any
    (rd, diu_min) is diu_min * interp(rd), clamped to [0,1].
    """

    unit: GesUnit
    gamma: float
    m_samples: int = 1000
    rd_grid: np.ndarray = field(default=None)
    q_grid: np.ndarray = field(default=None)

    def build(self, stream):
        ddu = self.unit.ddu
        rng = stream.rng
        zg = rng.standard_normal(self.m_samples)
        zh = rng.standard_normal(self.m_samples)
        from .ges import distortion_factor

        g = distortion_factor(zg, ddu.incentive_mean_lower, ddu)
        self.rd_grid = np.linspace(0.0, 1.5, 49)
        q = np.empty_like(self.rd_grid)
        for i, rd in enumerate(self.rd_grid):
            h = distortion_factor(zh, ddu.b_h_lower * rd, ddu)
            q[i] = np.quantile((1.0 - g) * (1.0 + h), 1.0 - self.gamma)
        self.q_grid = q
        return self

    def floor(self, diu_min, rd):
        f = float(np.interp(rd, self.rd_grid, self.q_grid))
        return min(max(diu_min * f, 0.0), 1.0)


def max_emergency_discharge(unit, soc, s_basis, floor, on, dt=1.0):
    """Discharge cap from power rating and the SoC floor."""
    if not on:
        return 0.0
    room = ((1.0 - unit.self_discharge) * soc - floor) * unit.eta_d * s_basis / dt
    return max(0.0, min(unit.p_discharge_max, room))


# -- public hourly entry points --


def _hour_arrays(model: SystemModel, scenario, hour):
    n = model.n_buses
    cg = np.zeros(n)
    for k, u in enumerate(model.cg_units):
        if scenario.cg_on[hour, k]:
            cg[u.bus] += u.capacity
    rg = np.zeros(n)
    rg_min = np.zeros(n)
    for k, u in enumerate(model.rg_units):
        av = float(scenario.rg_available_mw[hour, k])
        rg[u.bus] += av
        rg_min[u.bus] += (1.0 - u.max_curtail_rate) * av
    load = scenario.load_mw[hour]
    topo = TopologyCase(model, scenario.line_on[hour]
                        if len(model.lines) else np.zeros(0, dtype=bool))
    return cg, rg, rg_min, load, topo


def residual_capacity(model: SystemModel, scenario, hour):
    """System-wide available generation minus load at one hour."""
    cg, rg, _, load, _ = _hour_arrays(model, scenario, hour)
    return float(cg.sum() + rg.sum() - load.sum())


def emergency_opf(model: SystemModel, scenario, hour, ges_states,
                  mode="plain", gamma=0.05) -> HourlyDispatchResult:
    """Hourly DC-OPF minimizing total load curtailment.

    Storage can discharge down to its SoC floor: the deterministic DIU
    floor in plain mode, or in chance mode the (1-gamma) quantile of the
    decision-dependent lower bound, resolved by damped fixed-point
    iteration on the response discomfort.
    """
    from .stochastic import derive_stream

    cg, rg, rg_min, load, topo = _hour_arrays(model, scenario, hour)
    units = model.ges_units
    caps = np.zeros(len(units))
    warning = None
    for k, (u, st) in enumerate(zip(units, ges_states)):
        on = bool(scenario.ges_on[hour, k])
        s_av = st.energy_available or available_energy(st.alpha, u)
        floor = st.diu_min
        if mode == "chance-constrained" and u.ddu is not None:
            floor, converged = _chance_floor_fixed_point(
                u, st, s_av, on, gamma,
                derive_stream(model.study.master_seed, ("opf", hour, u.name)))
            if not converged:
                warning = "chance-constraint fixed point hit iteration cap"
        caps[k] = max_emergency_discharge(u, st.soc, s_av, floor, on)
    inputs = HourInputs(
        cg_av=cg, rg_av=rg, rg_min=rg_min, load=load,
        ges_fixed_charge=np.zeros(len(units)),
        ges_fixed_discharge=np.zeros(len(units)),
        ges_bus=np.array([u.bus for u in units], dtype=int),
        ges_max_extra=caps)
    out = solve_hour(inputs, topo)
    out.state_label = EMERGENCY
    if warning and not out.warning:
        out.warning = warning
    return out


def _chance_floor_fixed_point(unit, state, s_av, on, gamma, stream):
    """Damped fixed point (0.5, tol 1e-4, cap 10) on the discomfort that
    the emergency discharge itself would create."""
    from .ges import ddu_soc_bounds, response_discomfort

    rd = state.rd
    worst_floor = 0.0
    for _ in range(10):
        # fresh child stream per iterate replays the same base draws, so
        # the quantile noise does not wander with rd
        bounds = ddu_soc_bounds(state.diu_min, state.diu_max, unit, rd,
                                stream.child("q"))
        floor = bounds.min_quantile(1.0 - gamma)
        worst_floor = max(worst_floor, floor)
        cap = max_emergency_discharge(unit, state.soc, s_av, floor, on)
        soc_next = soc_after(state.soc, 0.0, cap, unit, 1.0, s_av)
        rd_new = response_discomfort(
            state.charge_history, list(state.discharge_history) + [cap],
            soc_next, state.soc, unit)
        rd_mix = 0.5 * rd + 0.5 * rd_new
        if abs(rd_mix - rd) <= 1e-4:
            return floor, True
        rd = rd_mix
    return worst_floor, False


def coordinated_step(model: SystemModel, scenario, hour, ges_states,
                     baselines, gamma=0.05) -> HourlyDispatchResult:
    """One real-time hour of the coordinated policy.

    Emergency (system residual capacity < 0) delegates to the
    chance-constrained OPF; otherwise each unit steers toward its
    day-ahead baseline SoC (charging bounded by its share of the residual
    capacity), which covers both the on-plan normal state and recovery.
    """
    rc = residual_capacity(model, scenario, hour)
    units = model.ges_units
    if rc < 0.0:
        return emergency_opf(model, scenario, hour, ges_states,
                             mode="chance-constrained", gamma=gamma)

    cg, rg, rg_min, load, topo = _hour_arrays(model, scenario, hour)
    charge = np.zeros(len(units))
    discharge = np.zeros(len(units))
    label = NORMAL
    for k, (u, st) in enumerate(zip(units, ges_states)):
        target = float(np.asarray(baselines[k]).ravel()[hour % 24]) \
            if np.ndim(baselines[k]) else float(baselines[k])
        if abs(st.soc - target) > 1e-6:
            label = RECOVERY
        if not scenario.ges_on[hour, k]:
            continue
        c, d = recovery_action(u, st, target, rc, u.capacity_share)
        charge[k], discharge[k] = c, d
    inputs = HourInputs(
        cg_av=cg, rg_av=rg, rg_min=rg_min, load=load,
        ges_fixed_charge=charge, ges_fixed_discharge=discharge,
        ges_bus=np.array([u.bus for u in units], dtype=int),
        ges_max_extra=np.zeros(len(units)))
    out = solve_hour(inputs, topo)
    out.state_label = label
    return out
