"""Generic energy storage (GES) model shared by physical ES and virtual ES.

Covers SoC bookkeeping, cycle degradation of available capacity,
construction of decision-dependent SoC bounds from incentive/discomfort
distortions, the response-discomfort scalar driving those distortions,
and the thermal-building parameter mapping for thermostatic VES.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special, stats

ES_KINDS = ("ES-R", "ES-D")
VES_KINDS = ("VES-T", "VES-E")


class GesConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DegradationSpec:
    """Cycle-degradation bookkeeping parameters."""

    life_cycles: float
    soh_initial: float = 1.0
    soh_end: float = 0.8

    def validate(self, where=""):
        if self.life_cycles <= 0:
            raise GesConfigError(f"{where}: life_cycles must be positive")
        if not self.soh_end < self.soh_initial <= 1.0:
            raise GesConfigError(f"{where}: need soh_end < soh_initial <= 1")


@dataclass(frozen=True)
class DduSpec:
    """Incentive/discomfort distortion of the SoC bounds.

    Separate coefficients are kept for the lower- and upper-bound
    distortions (the printed parameter table lists minus/plus pairs).
    """

    a_g_lower: float = 1.0
    a_g_upper: float = 1.0
    b_h_lower: float = 2.0
    b_h_upper: float = 6.0
    price_charge: float = 50.0
    price_discharge: float = 250.0
    price_cap: float = 300.0
    discomfort_weight: float = 0.5  # rho
    family: str = "lognormal"
    cov: float = 0.25

    def validate(self, where=""):
        if not 0.0 <= self.discomfort_weight <= 1.0:
            raise GesConfigError(f"{where}: discomfort_weight outside [0,1]")
        if self.price_cap <= 0:
            raise GesConfigError(f"{where}: price_cap must be positive")
        if max(self.price_charge, self.price_discharge) > self.price_cap:
            raise GesConfigError(f"{where}: capacity prices exceed price cap")
        if self.family not in ("lognormal", "beta"):
            raise GesConfigError(f"{where}: unknown DDU family {self.family!r}")
        if self.cov < 0:
            raise GesConfigError(f"{where}: cov must be >= 0")

    @property
    def incentive_mean_lower(self):
        return self.a_g_lower * self.price_charge / self.price_cap

    @property
    def incentive_mean_upper(self):
        return self.a_g_upper * self.price_charge / self.price_cap


@dataclass(frozen=True)
class BaselineSpec:
    """Self-consumption DIU: lognormal hourly baseline power (tiled)."""

    charge_mean_mw: tuple = (0.0,)
    discharge_mean_mw: tuple = (0.0,)
    cov: float = 0.25

    def validate(self, where=""):
        if self.cov < 0:
            raise GesConfigError(f"{where}: baseline cov must be >= 0")
        if min(self.charge_mean_mw) < 0 or min(self.discharge_mean_mw) < 0:
            raise GesConfigError(f"{where}: baseline means must be >= 0")


@dataclass(frozen=True)
class DiuBoundsSpec:
    """Hourly normal draws for the DIU SoC bounds (tiled patterns)."""

    min_mean: tuple = (0.0,)
    min_sigma: float = 0.0
    max_mean: tuple = (1.0,)
    max_sigma: float = 0.0

    def validate(self, where=""):
        if self.min_sigma < 0 or self.max_sigma < 0:
            raise GesConfigError(f"{where}: bound sigmas must be >= 0")


@dataclass(frozen=True)
class GesUnit:
    """Static parameters of one generic storage unit."""

    name: str
    kind: str  # ES-R | ES-D | VES-T | VES-E
    bus: int
    p_charge_max: float
    p_discharge_max: float
    energy_rated: float
    eta_c: float = 0.9
    eta_d: float = 0.9
    self_discharge: float = 0.0
    soc_init: float = 0.5
    soc_min: float = 0.0
    soc_max: float = 1.0
    for_rate: float = 0.0
    on_prob_series: str | None = None  # VES hourly on-probability series ref
    mttf: float | None = None
    mttr: float | None = None
    degradation: DegradationSpec | None = None
    ddu: DduSpec | None = None
    baseline: BaselineSpec | None = None
    diu_bounds: DiuBoundsSpec | None = None
    capacity_share: float = 1.0
    rd_accumulates: bool = False

    @property
    def is_ves(self):
        return self.kind in VES_KINDS

    def validate(self):
        w = f"ges unit {self.name!r}"
        if self.kind not in ES_KINDS + VES_KINDS:
            raise GesConfigError(f"{w}: unknown kind {self.kind!r}")
        if not (0.0 < self.eta_c <= 1.0 and 0.0 < self.eta_d <= 1.0):
            raise GesConfigError(f"{w}: efficiencies must lie in (0,1]")
        if not 0.0 <= self.self_discharge < 1.0:
            raise GesConfigError(f"{w}: self_discharge must lie in [0,1)")
        if not 0.0 <= self.soc_min < self.soc_max <= 1.0:
            raise GesConfigError(f"{w}: need 0 <= soc_min < soc_max <= 1")
        if not 0.0 <= self.soc_init <= 1.0:
            raise GesConfigError(f"{w}: soc_init outside [0,1]")
        if not 0.0 <= self.for_rate <= 1.0:
            raise GesConfigError(f"{w}: for_rate outside [0,1]")
        if min(self.p_charge_max, self.p_discharge_max) < 0 or self.energy_rated <= 0:
            raise GesConfigError(f"{w}: ratings must be positive")
        if (self.mttf is None) != (self.mttr is None):
            raise GesConfigError(f"{w}: give both mttf and mttr or neither")
        for spec in (self.degradation, self.ddu, self.baseline, self.diu_bounds):
            if spec is not None:
                spec.validate(w)


@dataclass
class GesState:
    """Evolving state of one unit along a chronological simulation."""

    soc: float
    alpha: float = 0.0
    energy_available: float = 0.0
    rd: float = 0.0
    charge_history: list = field(default_factory=list)
    discharge_history: list = field(default_factory=list)
    diu_min: float = 0.0
    diu_max: float = 1.0
    ddu_min: float = 0.0
    ddu_max: float = 1.0


def initial_state(unit: GesUnit) -> GesState:
    soh0 = unit.degradation.soh_initial if unit.degradation else 1.0
    return GesState(
        soc=unit.soc_init,
        energy_available=unit.energy_rated * soh0,
        diu_min=unit.soc_min,
        diu_max=unit.soc_max,
        ddu_min=unit.soc_min,
        ddu_max=unit.soc_max,
    )


def soc_after(soc, p_charge, p_discharge, unit, dt, energy_basis):
    """One-step SoC recursion; energy_basis is rated (day-ahead) or
    available (real-time) capacity."""
    return (1.0 - unit.self_discharge) * soc + (
        unit.eta_c * p_charge - p_discharge / unit.eta_d
    ) * dt / energy_basis


def step_soc(state: GesState, p_charge, p_discharge, unit: GesUnit, dt=1.0,
             energy_basis=None) -> GesState:
    """Advance the SoC one step and append to the action history.

    Simultaneous charge and discharge, or powers beyond the unit rating,
    indicate a caller bug and raise.
    """
    tol = 1e-9
    if p_charge < -tol or p_discharge < -tol:
        raise ValueError(f"{unit.name}: negative power")
    if p_charge > unit.p_charge_max + tol or p_discharge > unit.p_discharge_max + tol:
        raise ValueError(f"{unit.name}: power beyond rating")
    if p_charge > tol and p_discharge > tol:
        raise ValueError(f"{unit.name}: simultaneous charge and discharge")
    basis = unit.energy_rated if energy_basis is None else energy_basis
    soc = soc_after(state.soc, p_charge, p_discharge, unit, dt, basis)
    if soc < -1e-9 or soc > 1.0 + 1e-9:
        raise ValueError(f"{unit.name}: SoC {soc} left [0,1]; caller constraint bug")
    new = replace(
        state,
        soc=min(max(soc, 0.0), 1.0),
        charge_history=state.charge_history + [float(p_charge)],
        discharge_history=state.discharge_history + [float(p_discharge)],
    )
    return new


def degradation_after(alpha, e_charged, e_discharged, kappa, unit):
    """Cumulative-degradation increment from one period's throughput."""
    if unit.degradation is None:
        return alpha
    inc = kappa * (e_charged + e_discharged) / unit.energy_rated
    return min(1.0, alpha + inc / unit.degradation.life_cycles)


def available_energy(alpha, unit):
    if unit.degradation is None:
        return unit.energy_rated
    d = unit.degradation
    return unit.energy_rated * (d.soh_initial - (d.soh_initial - d.soh_end) * alpha)


def update_degradation(state: GesState, e_charged, e_discharged, kappa,
                       unit: GesUnit) -> GesState:
    """Apply cycle degradation from the period's charged/discharged energy."""
    if e_charged < 0 or e_discharged < 0:
        raise ValueError(f"{unit.name}: negative energy")
    alpha = degradation_after(state.alpha, e_charged, e_discharged, kappa, unit)
    return replace(state, alpha=alpha, energy_available=available_energy(alpha, unit))


def distortion_factor(z, mean, ddu: DduSpec):
    """Map standard-normal base draws to the distortion family with the
    given mean; mean 0 degenerates to exactly 0 (no distortion)."""
    z = np.asarray(z, dtype=float)
    if mean <= 0.0:
        return np.zeros_like(z)
    if ddu.cov == 0.0:
        return np.full_like(z, mean)
    if ddu.family == "lognormal":
        s2 = math.log1p(ddu.cov**2)
        return np.exp(math.log(mean) - 0.5 * s2 + math.sqrt(s2) * z)
    # beta on (0,1): feasible only while the variance fits the support
    sd = mean * ddu.cov
    if mean >= 1.0 or sd * sd >= mean * (1.0 - mean):
        raise GesConfigError(f"beta distortion infeasible for mean={mean}, cov={ddu.cov}")
    nu = mean * (1.0 - mean) / (sd * sd) - 1.0
    return stats.beta.ppf(special.ndtr(z), mean * nu, (1.0 - mean) * nu)


@dataclass
class DduBounds:
    """Realized DDU SoC bounds plus quantile access to their distributions."""

    ddu_min: float
    ddu_max: float
    diu_min: float
    diu_max: float
    unit: GesUnit
    rd: float
    _base: np.ndarray  # (4, M) standard normals for quantile evaluation

    def min_quantile(self, q):
        """q-quantile of the lower DDU bound (empirical, M samples)."""
        return float(np.quantile(self._min_samples(), q))

    def max_quantile(self, q):
        return float(np.quantile(self._max_samples(), q))

    def _min_samples(self):
        ddu = self.unit.ddu
        g = distortion_factor(self._base[0], ddu.incentive_mean_lower, ddu)
        h = distortion_factor(self._base[1], ddu.b_h_lower * self.rd, ddu)
        return np.clip(self.diu_min * (1.0 - g) * (1.0 + h), 0.0, 1.0)

    def _max_samples(self):
        ddu = self.unit.ddu
        g = distortion_factor(self._base[2], ddu.incentive_mean_upper, ddu)
        h = distortion_factor(self._base[3], ddu.b_h_upper * self.rd, ddu)
        return np.clip(self.diu_max * (1.0 + g) * (1.0 - h), 0.0, 1.0)


def ddu_soc_bounds(diu_min, diu_max, unit: GesUnit, rd, stream,
                   m_samples=1000) -> DduBounds:
    """Distort the DIU SoC bounds by incentive (g) and discomfort (h).

    Upper bound scales by (1+g)(1-h), lower by (1-g)(1+h); both are
    clamped to [0,1].  The returned object also evaluates empirical
    quantiles of either bound from m_samples common base draws.
    """
    if not 0.0 <= diu_min <= diu_max <= 1.0:
        raise ValueError(f"{unit.name}: invalid DIU bounds ({diu_min}, {diu_max})")
    if unit.ddu is None:
        base = np.zeros((4, m_samples))
        return DduBounds(diu_min, diu_max, diu_min, diu_max, unit, rd, base)
    rng = stream.rng
    z = rng.standard_normal(4)
    base = rng.standard_normal((4, m_samples))
    ddu = unit.ddu
    g_lo = float(distortion_factor(z[0], ddu.incentive_mean_lower, ddu))
    h_lo = float(distortion_factor(z[1], ddu.b_h_lower * rd, ddu))
    g_up = float(distortion_factor(z[2], ddu.incentive_mean_upper, ddu))
    h_up = float(distortion_factor(z[3], ddu.b_h_upper * rd, ddu))
    lo = min(max(diu_min * (1.0 - g_lo) * (1.0 + h_lo), 0.0), 1.0)
    hi = min(max(diu_max * (1.0 + g_up) * (1.0 - h_up), 0.0), 1.0)
    return DduBounds(lo, hi, diu_min, diu_max, unit, rd, base)


def response_discomfort(charge_history, discharge_history, soc_rt, soc_baseline,
                        unit: GesUnit, horizon=24) -> float:
    """Discomfort scalar: rho-weighted normalized response energy plus
    (1-rho)-weighted SoC deviation from the day-ahead baseline."""
    rho = unit.ddu.discomfort_weight if unit.ddu else 0.5
    c = np.asarray(charge_history, dtype=float)
    d = np.asarray(discharge_history, dtype=float)
    use = 0.0
    if c.size and unit.p_charge_max > 0:
        use += float(np.sum(c / unit.p_charge_max))
    if d.size and unit.p_discharge_max > 0:
        use += float(np.sum(d / unit.p_discharge_max))
    return rho * use / horizon + (1.0 - rho) * abs(soc_rt - soc_baseline)


@dataclass(frozen=True)
class ThermalVesSpec:
    """First-order building thermal model behind a thermostatic VES."""

    thermal_resistance: float  # degC per unit power
    thermal_capacity: float  # energy per degC
    conversion_efficiency: float
    temp_in_min: float
    temp_in_max: float
    temp_out_series: tuple
    temp_in_setpoint: float

    def validate(self):
        if min(self.thermal_resistance, self.thermal_capacity,
               self.conversion_efficiency) <= 0:
            raise GesConfigError("thermal parameters must be positive")
        if not self.temp_in_min < self.temp_in_max:
            raise GesConfigError("need temp_in_min < temp_in_max")


def thermal_to_ges(spec: ThermalVesSpec, dt=1.0):
    """Map thermal-building parameters to storage parameters.

    Returns (self-discharge rate, energy capacity, hourly power series) in
    the power/energy units implied by the thermal resistance.
    """
    spec.validate()
    rc = spec.thermal_resistance * spec.thermal_capacity
    epsilon = 1.0 - math.exp(-dt / rc)
    kr = spec.conversion_efficiency * spec.thermal_resistance
    energy = dt * (spec.temp_in_max - spec.temp_in_min) / (kr * epsilon)
    power = (np.asarray(spec.temp_out_series, dtype=float) - spec.temp_in_setpoint) / kr
    return epsilon, energy, power
