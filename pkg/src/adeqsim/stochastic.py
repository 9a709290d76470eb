"""Reproducible random streams and decision-independent scenario sampling.

Every stochastic quantity is drawn from a stream keyed by (master seed,
tag path), so two evaluations that differ only in a capacity parameter
see identical outage histories: this common-random-numbers discipline is
what makes the capacity-credit bisection stable.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .system import SystemModel


def _tag_key(tag):
    digest = hashlib.sha256(repr(tag).encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class RandomStream:
    """Deterministic, tag-addressed random stream."""

    master_seed: int
    tag_path: tuple = ()

    @cached_property
    def rng(self) -> np.random.Generator:
        key = tuple(_tag_key(t) for t in self.tag_path)
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=key)
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, *tags) -> "RandomStream":
        return RandomStream(self.master_seed, self.tag_path + tuple(tags))


def derive_stream(master_seed, tags) -> RandomStream:
    return RandomStream(int(master_seed), tuple(tags))


def sample_two_state_path(mttf, mttr, horizon, stream: RandomStream):
    """Alternating up/down path: exponential durations with means mttf and
    mttr, discretized by ceiling to whole hours, starting up."""
    if mttf <= 0:
        raise ValueError("mttf must be > 0")
    if mttr < 0:
        raise ValueError("mttr must be >= 0")
    path = np.ones(horizon, dtype=bool)
    if mttr == 0.0:
        return path
    rng = stream.rng
    pos = 0
    while pos < horizon:
        up = int(np.ceil(rng.exponential(mttf)))
        pos += up
        if pos >= horizon:
            break
        down = int(np.ceil(rng.exponential(mttr)))
        path[pos:pos + down] = False
        pos += down
    return path


def sample_bernoulli_state(p_on, stream: RandomStream) -> bool:
    if not 0.0 <= p_on <= 1.0:
        raise ValueError("p_on must lie in [0,1]")
    return bool(stream.rng.random() < p_on)


def sample_distribution(kind, mu, sigma, stream: RandomStream, bounds=None):
    """Scalar draw from normal / lognormal / truncated-normal.

    For the truncated case draws are rejected until inside bounds, at
    most 100 attempts; exhausting them signals inconsistent parameters.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    rng = stream.rng
    if kind == "normal":
        return float(mu + sigma * rng.standard_normal())
    if kind == "lognormal":
        return float(np.exp(mu + sigma * rng.standard_normal()))
    if kind == "truncated-normal":
        if bounds is None or not bounds[0] < bounds[1]:
            raise ValueError("truncated-normal requires bounds (lo, hi)")
        for _ in range(100):
            x = mu + sigma * rng.standard_normal()
            if bounds[0] < x < bounds[1]:
                return float(x)
        raise ValueError(
            f"truncated-normal({mu}, {sigma}) produced no draw in {bounds} "
            f"after 100 attempts")
    raise ValueError(f"unknown distribution kind {kind!r}")


def truncated_normal_array(mu, sigma, lo, hi, size, rng):
    """Vectorized rejection sampling with the same 100-attempt contract."""
    out = mu + sigma * rng.standard_normal(size)
    for _ in range(100):
        bad = (out <= lo) | (out >= hi)
        n_bad = int(bad.sum())
        if not n_bad:
            return out
        out[bad] = mu + sigma * rng.standard_normal(n_bad)
    raise ValueError(f"truncated normal({mu}, {sigma}) on ({lo}, {hi}) not converging")


def _lognormal_from_mean(mean, cov, z):
    """Lognormal with the given mean and coefficient of variation, via
    pre-drawn standard normals (elementwise mean allowed)."""
    mean = np.asarray(mean, dtype=float)
    if cov == 0.0:
        return np.broadcast_to(mean, z.shape).copy()
    s2 = np.log1p(cov * cov)
    out = np.zeros_like(z)
    pos = mean > 0
    if np.ndim(mean) == 0:
        if mean > 0:
            out = np.exp(np.log(mean) - 0.5 * s2 + np.sqrt(s2) * z)
        return out
    out[..., pos] = np.exp(
        np.log(mean[pos]) - 0.5 * s2 + np.sqrt(s2) * z[..., pos])
    return out


@dataclass
class GesDraws:
    """Per-unit decision-independent realizations over one year."""

    on: np.ndarray  # bool (T,)
    kappa_by_day: np.ndarray  # (n_days,)
    baseline_charge: np.ndarray | None = None  # MW (T,)
    baseline_discharge: np.ndarray | None = None
    diu_min: np.ndarray | None = None  # SoC bound draws (T,)
    diu_max: np.ndarray | None = None
    ddu_z: np.ndarray | None = None  # (4, T) base normals for g/h draws


@dataclass
class ScenarioState:
    """One sampled chronological realization of a simulation year."""

    year_index: int
    cg_on: np.ndarray  # bool (T, n_cg)
    rg_on: np.ndarray  # bool (T, n_rg)
    rg_available_mw: np.ndarray  # (T, n_rg)
    line_on: np.ndarray  # bool (T, n_lines)
    load_mw: np.ndarray  # (T, n_buses)
    ges_on: np.ndarray  # bool (T, n_ges)
    ves_diu_draws: dict = field(default_factory=dict)  # unit name -> GesDraws


def build_scenario(model: SystemModel, year_index, master_seed) -> ScenarioState:
    """Sample every decision-independent path for one simulated year.

    Pure function of (model, year_index, master_seed); distinct years use
    disjoint streams so they can be built in parallel.
    """
    T = model.horizon
    root = derive_stream(master_seed, ("scenario", int(year_index)))

    cg_on = np.ones((T, len(model.cg_units)), dtype=bool)
    for k, u in enumerate(model.cg_units):
        cg_on[:, k] = sample_two_state_path(
            u.mttf, u.mttr, T, root.child("cg", u.name, "outage"))

    rg_on = np.ones((T, len(model.rg_units)), dtype=bool)
    rg_av = np.zeros((T, len(model.rg_units)))
    for k, u in enumerate(model.rg_units):
        rg_on[:, k] = sample_two_state_path(
            u.mttf, u.mttr, T, root.child("rg", u.name, "outage"))
        rg_av[:, k] = rg_on[:, k] * u.capacity * model.capacity_factor(u)

    line_on = np.ones((T, len(model.lines)), dtype=bool)
    for k, ln in enumerate(model.lines):
        if ln.mttr > 0:
            line_on[:, k] = sample_two_state_path(
                ln.mttf, ln.mttr, T, root.child("line", ln.name, "outage"))

    n_days = (T + 23) // 24
    ges_on = np.ones((T, len(model.ges_units)), dtype=bool)
    draws = {}
    for k, g in enumerate(model.ges_units):
        if g.mttf is not None:
            on = sample_two_state_path(
                g.mttf, g.mttr, T, root.child("ges", g.name, "outage"))
        else:
            p_on = model.on_probability(g)
            on = root.child("ges", g.name, "outage").rng.random(T) < p_on
        ges_on[:, k] = on

        kappa = truncated_normal_array(
            0.5, 0.1, 0.0, 1.0, n_days, root.child("ges", g.name, "kappa").rng)

        rec = GesDraws(on=on, kappa_by_day=kappa)
        if g.baseline is not None:
            rng_b = root.child("ges", g.name, "baseline").rng
            mean_c = np.resize(np.asarray(g.baseline.charge_mean_mw), T)
            mean_d = np.resize(np.asarray(g.baseline.discharge_mean_mw), T)
            rec.baseline_charge = np.minimum(
                _lognormal_from_mean(mean_c, g.baseline.cov, rng_b.standard_normal(T)),
                g.p_charge_max)
            rec.baseline_discharge = np.minimum(
                _lognormal_from_mean(mean_d, g.baseline.cov, rng_b.standard_normal(T)),
                g.p_discharge_max)
        if g.diu_bounds is not None:
            rng_s = root.child("ges", g.name, "bounds").rng
            spec = g.diu_bounds
            mn = np.resize(np.asarray(spec.min_mean), T) + \
                spec.min_sigma * rng_s.standard_normal(T)
            mx = np.resize(np.asarray(spec.max_mean), T) + \
                spec.max_sigma * rng_s.standard_normal(T)
            mn = np.clip(mn, 0.0, 1.0)
            mx = np.clip(mx, 0.0, 1.0)
            # keep draws ordered; a crossed pair collapses to its midpoint
            bad = mn > mx
            if bad.any():
                mid = 0.5 * (mn[bad] + mx[bad])
                mn[bad] = mid
                mx[bad] = mid
            rec.diu_min = mn
            rec.diu_max = mx
        if g.ddu is not None:
            rec.ddu_z = root.child("ges", g.name, "ddu").rng.standard_normal((4, T))
        draws[g.name] = rec

    return ScenarioState(
        year_index=int(year_index),
        cg_on=cg_on,
        rg_on=rg_on,
        rg_available_mw=rg_av,
        line_on=line_on,
        load_mw=model.load_matrix.copy(),
        ges_on=ges_on,
        ves_diu_draws=draws,
    )
