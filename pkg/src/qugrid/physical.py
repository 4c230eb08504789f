"""Per-node power model: generation, storage, priority dispatch, frequency.

All powers are kW, energies kWh, times seconds. Dispatch follows a fixed
merit order (renewables, baseload, battery, import, shed) and shedding
removes the lowest-priority tiers first. Every step satisfies an exact
power balance:

    generation + import + battery_discharge
        == served + battery_charge_input + curtailed
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class GenerationProfile:
    solar_peak_kw: float = 24.0
    wind_capacity_kw: float = 15.0
    smr_rating_kw: float = 18.0


@dataclass
class Battery:
    capacity_kwh: float = 60.0
    soc_kwh: float = 15.0
    max_charge_kw: float = 40.0
    max_discharge_kw: float = 40.0
    round_trip_efficiency: float = 0.9


@dataclass
class LoadModel:
    base_kw: float = 60.0
    noise_sigma_kw: float = 6.0
    noise_autocorr: float = 0.95
    # (tier name, demand fraction), highest priority first; fractions sum to 1
    priority_tiers: tuple[tuple[str, float], ...] = (
        ("critical", 0.3),
        ("important", 0.3),
        ("deferrable", 0.4),
    )

    def step_noise(self, prev_noise_kw: float, rng: np.random.Generator) -> float:
        """AR(1) demand deviation: stationary sigma = noise_sigma_kw."""
        rho = self.noise_autocorr
        innovation = self.noise_sigma_kw * math.sqrt(max(0.0, 1.0 - rho * rho))
        return rho * prev_noise_kw + innovation * rng.standard_normal()

    def demand(self, noise_kw: float) -> float:
        return max(0.0, self.base_kw + noise_kw)


@dataclass
class FrequencyState:
    delta_f_hz: float = 0.0
    inertia_h_s: float = 5.0
    droop_d_pu: float = 1.0


@dataclass
class DispatchResult:
    served_kw: float
    shed_kw: float
    import_kw: float
    battery_flow_kw: float   # positive = discharge, negative = charge input
    curtailed_kw: float
    shed_by_tier: dict[str, float]


@dataclass
class NodeState:
    node_id: int
    generation: GenerationProfile
    battery: Battery
    load_model: LoadModel
    frequency: FrequencyState
    # filled in by the tick loop before dispatch
    gen_solar_kw: float = 0.0
    gen_wind_kw: float = 0.0
    gen_smr_kw: float = 0.0
    load_kw: float = 0.0
    shed_energy_kwh: float = 0.0
    demand_energy_kwh: float = 0.0
    wind_cf: float = field(default=2.0 / 7.0)  # stationary mean of Beta(2,5)
    load_noise_kw: float = 0.0

    @property
    def generation_kw(self) -> float:
        return self.gen_solar_kw + self.gen_wind_kw + self.gen_smr_kw

    @property
    def shed_fraction(self) -> float:
        if self.demand_energy_kwh <= 0:
            return 0.0
        return self.shed_energy_kwh / self.demand_energy_kwh


def solar_output(t: float, peak_kw: float, window: tuple[float, float] = (0.0, 3600.0)) -> float:
    """Half-sine daylight profile: zero outside the window, peak at midpoint."""
    start, end = window
    if peak_kw <= 0.0 or t < start or t > end or end <= start:
        return 0.0
    return peak_kw * math.sin(math.pi * (t - start) / (end - start))


def wind_capacity_factor(prev_cf: float, rng: np.random.Generator, rho: float = 0.9) -> float:
    """AR(1)-smoothed Beta(2,5) capacity factor, clamped to [0,1]."""
    draw = rng.beta(2.0, 5.0)
    return min(1.0, max(0.0, rho * prev_cf + (1.0 - rho) * draw))


def wind_output(capacity_kw: float, cf: float) -> float:
    return capacity_kw * min(1.0, max(0.0, cf))


def step_frequency(state: FrequencyState, imbalance_pu: float, dt: float) -> FrequencyState:
    """Explicit-Euler step of d(df)/dt = (P - D*df) / (2H)."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    deriv = (imbalance_pu - state.droop_d_pu * state.delta_f_hz) / (2.0 * state.inertia_h_s)
    return FrequencyState(
        delta_f_hz=state.delta_f_hz + deriv * dt,
        inertia_h_s=state.inertia_h_s,
        droop_d_pu=state.droop_d_pu,
    )


def accumulate_eens(shed_kw: float, dt: float, acc_kwh: float) -> float:
    if shed_kw < 0:
        raise ValueError(f"shed_kw must be >= 0, got {shed_kw}")
    return acc_kwh + shed_kw * dt / 3600.0


def _shed_from_tiers(deficit_kw: float, demand_kw: float,
                     tiers: tuple[tuple[str, float], ...]) -> dict[str, float]:
    """Allocate a deficit to tiers, lowest priority (end of list) first."""
    shed: dict[str, float] = {name: 0.0 for name, _ in tiers}
    remaining = deficit_kw
    for name, fraction in reversed(tiers):
        if remaining <= 0:
            break
        tier_load = fraction * demand_kw
        cut = min(tier_load, remaining)
        shed[name] = cut
        remaining -= cut
    return shed


def dispatch(node: NodeState, demand_kw: float, import_cap_kw: float,
             islanded: bool, dt: float, min_soc_kwh: float = 0.0) -> DispatchResult:
    """Serve demand in merit order; update battery state of charge in place.

    Deficit order: local generation, battery discharge, grid import (zero
    when islanded), then shedding of the lowest-priority tiers. Surplus
    order: battery charge (efficiency applied on charge), then curtailment.
    `min_soc_kwh` is the dispatch floor: grid-connected operation can hold
    back a reserve that islanded operation is allowed to release.
    """
    if demand_kw < 0:
        raise ValueError(f"demand must be >= 0, got {demand_kw}")
    battery = node.battery
    generation = node.generation_kw
    hours = dt / 3600.0

    if generation >= demand_kw:
        surplus = generation - demand_kw
        headroom_kw = (battery.capacity_kwh - battery.soc_kwh) / (
            hours * battery.round_trip_efficiency) if hours > 0 else 0.0
        charge_input = min(surplus, battery.max_charge_kw, max(0.0, headroom_kw))
        battery.soc_kwh += charge_input * hours * battery.round_trip_efficiency
        battery.soc_kwh = min(battery.soc_kwh, battery.capacity_kwh)
        curtailed = surplus - charge_input
        return DispatchResult(
            served_kw=demand_kw,
            shed_kw=0.0,
            import_kw=0.0,
            battery_flow_kw=-charge_input,
            curtailed_kw=curtailed,
            shed_by_tier={name: 0.0 for name, _ in node.load_model.priority_tiers},
        )

    deficit = demand_kw - generation
    usable_kwh = max(0.0, battery.soc_kwh - min_soc_kwh)
    discharge_limit_kw = usable_kwh / hours if hours > 0 else 0.0
    discharge = min(deficit, battery.max_discharge_kw, discharge_limit_kw)
    battery.soc_kwh = max(0.0, battery.soc_kwh - discharge * hours)
    deficit -= discharge

    import_kw = 0.0 if islanded else min(deficit, max(0.0, import_cap_kw))
    deficit -= import_kw

    shed_by_tier = _shed_from_tiers(deficit, demand_kw, node.load_model.priority_tiers)
    shed = sum(shed_by_tier.values())
    return DispatchResult(
        served_kw=demand_kw - shed,
        shed_kw=shed,
        import_kw=import_kw,
        battery_flow_kw=discharge,
        curtailed_kw=0.0,
        shed_by_tier=shed_by_tier,
    )
