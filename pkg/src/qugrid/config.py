"""Scenario files: schema, defaults, strict validation with field-path errors.

Scenario files are JSON with a versioned `schema_version`. Unknown keys are
rejected so typos cannot silently fall back to defaults. Every numeric
constraint from the domain models is re-checked here at load time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

from .errors import ParseError, ValidationError
from .network import TopologyKind
from .threat import AttackKind, AttackPlan, DefenseTier, Intensity, PIPELINE_STAGES

SCHEMA_VERSION = 1

_EXTRA_TOGGLES = ("classical_ids", "pingpong_ids")
_ALL_TOGGLES = tuple(PIPELINE_STAGES) + _EXTRA_TOGGLES


@dataclass
class PhysicalConfig:
    import_cap_kw: float = 35.0
    battery_kwh: float = 60.0
    battery_initial_soc_kwh: float = 15.0
    battery_max_charge_kw: float = 15.0
    battery_max_discharge_kw: float = 15.0
    battery_round_trip_efficiency: float = 0.9
    battery_reserve_grid_kwh: float = 15.0
    battery_reserve_islanded_kwh: float = 5.0
    solar_peak_kw: float = 24.0
    solar_window_s: tuple[float, float] | None = None  # None = full horizon
    wind_capacity_kw: float = 15.0
    wind_autocorr: float = 0.9
    smr_rating_kw: float = 18.0
    load_base_kw: float = 61.0
    load_sigma_kw: float = 6.0
    load_autocorr: float = 0.95
    priority_tiers: tuple[tuple[str, float], ...] = (
        ("critical", 0.3), ("important", 0.3), ("deferrable", 0.4))
    inertia_h_s: float = 5.0
    droop_d_pu: float = 1.0
    islanding_windows: tuple[tuple[float, float], ...] = ()
    frequency_shed_enabled: bool = False
    frequency_shed_threshold_hz: float = 0.5
    telemetry_interval_s: float = 2.0
    setpoint_interval_s: float = 2.0
    setpoint_expiry_s: float = 6.0
    fallback_import_fraction: float = 0.3
    import_margin_kw: float = 12.0


@dataclass
class LinkConfig:
    latency_ms: float = 0.8
    jitter_ms: float = 0.3
    bandwidth_kbps: float = 10000.0
    loss_prob: float = 0.001
    queue_capacity: int = 64
    endpoint_processing_ms: float = 25.5


@dataclass
class QuantumConfig:
    base_keyrate_bps: float = 1500.0
    qber_baseline: float = 0.011
    ids_threshold: float = 0.025
    abort_qber: float = 0.11
    token_bits: int = 256
    encryption_bits_per_msg: int = 444
    verify_scaling_bits_per_node: float = 2.0
    pool_initial_bits: int = 150000
    probe_interval_s: float = 4.0
    probe_sample_size: int = 200
    eta_swap: float = 0.5
    kak_stage_fail_prob: float = 0.013
    token_valid_window_s: float = 30.0


@dataclass
class DetectionConfig:
    wls_interval_s: float = 5.0
    wls_alpha: float = 0.05
    wls_sigma_injection_kw: float = 4.0
    wls_sigma_witness_kw: float = 2.0
    challenge_mean_interval_s: float = 150.0
    ewma_lambda: float = 0.2
    ewma_k_sigma: float = 5.0
    ewma_sigma_floor_kw: float = 1.0
    telemetry_sigma_kw: float = 1.5


@dataclass
class DefenseSection:
    tier: DefenseTier = DefenseTier.NONE
    toggle_overrides: dict[str, bool] = field(default_factory=dict)
    rate_limit_msgs_per_s: float = 30.0
    quarantine_threshold: int = 40
    quarantine_window_s: float = 20.0
    quarantine_duration_s: float = 60.0
    signature_forge_success: float = 0.35
    plausibility_k_sigma: float = 5.0
    plausibility_sigma_kw: float = 2.0
    consistency_tolerance_kw: float = 10.0


@dataclass
class AttackSection:
    kind: AttackKind
    intensity: Intensity
    windows: tuple[tuple[float, float], ...]
    participants: tuple[int, ...]
    targets: tuple[int, ...] = ()
    rate_msgs_per_s: float = 8.0
    fdi_gen_inflation: float = 0.18
    fdi_soc_deflation: float = 0.5
    spoof_shed_fraction: float = 0.5
    spoof_shed_duration_s: float = 4.0


@dataclass
class AnalyticConfig:
    curves: str = "swap_scaling"  # swap_scaling | distillation | secret_key
    qber_levels: tuple[float, ...] = (0.01, 0.015, 0.02, 0.03)
    max_hops: int = 8
    fidelity_min: float = 0.55
    fidelity_max: float = 1.0
    fidelity_points: int = 46
    qber_max: float = 0.15
    qber_points: int = 151


@dataclass
class SweepConfig:
    axis: str  # n_nodes | defense_tier | attack_kind | intensity | topology | seed
    values: tuple = ()
    seeds: tuple[int, ...] = (1,)


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    mode: str = "simulate"  # simulate | analytic
    topology_kind: TopologyKind = TopologyKind.STAR
    n_nodes: int = 5
    duration_s: float = 3600.0
    physics_dt_s: float = 1.0
    master_seed: int = 1
    defense: DefenseSection = field(default_factory=DefenseSection)
    attacks: tuple[AttackSection, ...] = ()
    physical: PhysicalConfig = field(default_factory=PhysicalConfig)
    links: LinkConfig = field(default_factory=LinkConfig)
    quantum: QuantumConfig = field(default_factory=QuantumConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    analytic: AnalyticConfig = field(default_factory=AnalyticConfig)
    sweep: SweepConfig | None = None

    def attack_plans(self) -> tuple[AttackPlan, ...]:
        return tuple(
            AttackPlan(
                kind=a.kind, intensity=a.intensity, windows=a.windows,
                participants=a.participants, targets=a.targets,
                rate_msgs_per_s=a.rate_msgs_per_s)
            for a in self.attacks)


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ValidationError(path, message)


def _check_keys(data: dict, allowed: set[str], path: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ValidationError(f"{path}.{sorted(unknown)[0]}" if path else sorted(unknown)[0],
                              "unknown key")


def _section(data: dict, key: str, cls, path: str):
    """Build a flat dataclass section from a dict, rejecting unknown keys."""
    raw = data.get(key, {})
    if not isinstance(raw, dict):
        raise ValidationError(path, "must be an object")
    names = {f.name for f in dc_fields(cls)}
    _check_keys(raw, names, path)
    kwargs = {}
    for f in dc_fields(cls):
        if f.name in raw:
            value = raw[f.name]
            if f.name in ("priority_tiers",):
                value = tuple((str(n), float(x)) for n, x in value)
            elif f.name in ("islanding_windows",):
                value = tuple((float(a), float(b)) for a, b in value)
            elif f.name == "solar_window_s" and value is not None:
                value = (float(value[0]), float(value[1]))
            elif isinstance(value, list):
                value = tuple(value)
            kwargs[f.name] = value
    return cls(**kwargs)


def parse_scenario_dict(data: dict, name_hint: str = "scenario") -> ScenarioConfig:
    top_keys = {
        "schema_version", "name", "mode", "topology", "duration_s", "physics_dt_s",
        "master_seed", "defense", "attacks", "physical", "links", "quantum",
        "detection", "analytic", "sweep",
    }
    _check_keys(data, top_keys, "")
    version = data.get("schema_version")
    _require(version == SCHEMA_VERSION, "schema_version",
             f"expected {SCHEMA_VERSION}, got {version!r}")

    mode = data.get("mode", "simulate")
    _require(mode in ("simulate", "analytic"), "mode", f"unknown mode {mode!r}")

    topo_raw = data.get("topology", {})
    _check_keys(topo_raw, {"kind", "n_nodes"}, "topology")
    kind_name = topo_raw.get("kind", "star")
    try:
        kind = TopologyKind(kind_name)
    except ValueError:
        raise ValidationError("topology.kind", f"unknown topology {kind_name!r}") from None
    n_nodes = int(topo_raw.get("n_nodes", 5))
    _require(n_nodes >= 2, "topology.n_nodes", "must be >= 2")

    duration = float(data.get("duration_s", 3600.0))
    _require(duration > 0, "duration_s", "must be positive")
    dt = float(data.get("physics_dt_s", 1.0))
    _require(dt > 0, "physics_dt_s", "must be positive")

    defense_raw = data.get("defense", {})
    allowed = {f.name for f in dc_fields(DefenseSection)}
    _check_keys(defense_raw, allowed, "defense")
    tier_name = defense_raw.get("tier", "none")
    try:
        tier = DefenseTier(tier_name)
    except ValueError:
        raise ValidationError("defense.tier", f"unknown tier {tier_name!r}") from None
    toggle_overrides = dict(defense_raw.get("toggle_overrides", {}))
    for toggle in toggle_overrides:
        _require(toggle in _ALL_TOGGLES, f"defense.toggle_overrides.{toggle}", "unknown stage")
    defense_kwargs = {k: v for k, v in defense_raw.items() if k not in ("tier", "toggle_overrides")}
    defense = DefenseSection(tier=tier, toggle_overrides=toggle_overrides, **defense_kwargs)
    _require(0.0 <= defense.signature_forge_success <= 1.0,
             "defense.signature_forge_success", "must be in [0,1]")
    _require(defense.rate_limit_msgs_per_s > 0, "defense.rate_limit_msgs_per_s",
             "must be positive")

    attacks = []
    for idx, raw in enumerate(data.get("attacks", [])):
        path = f"attacks[{idx}]"
        names = {f.name for f in dc_fields(AttackSection)}
        _check_keys(raw, names, path)
        try:
            akind = AttackKind(raw.get("kind"))
        except ValueError:
            raise ValidationError(f"{path}.kind", f"unknown attack {raw.get('kind')!r}") from None
        try:
            intensity = Intensity(raw.get("intensity", "S3"))
        except ValueError:
            raise ValidationError(f"{path}.intensity",
                                  f"unknown intensity {raw.get('intensity')!r}") from None
        windows = tuple((float(a), float(b)) for a, b in raw.get("windows", []))
        participants = tuple(int(p) for p in raw.get("participants", []))
        targets = tuple(int(t) for t in raw.get("targets", []))
        for p in participants + targets:
            _require(0 < p < n_nodes or akind is AttackKind.MITM,
                     f"{path}.participants", f"node {p} out of range")
        extra = {k: raw[k] for k in (
            "rate_msgs_per_s", "fdi_gen_inflation", "fdi_soc_deflation",
            "spoof_shed_fraction", "spoof_shed_duration_s") if k in raw}
        section = AttackSection(kind=akind, intensity=intensity, windows=windows,
                                participants=participants, targets=targets, **extra)
        try:
            section_plan = AttackPlan(kind=akind, intensity=intensity, windows=windows,
                                      participants=participants, targets=targets)
            section_plan.validate(duration)
        except Exception as exc:
            raise ValidationError(f"{path}.windows", str(exc)) from None
        attacks.append(section)

    physical = _section(data, "physical", PhysicalConfig, "physical")
    _require(physical.import_cap_kw >= 0, "physical.import_cap_kw", "must be >= 0")
    _require(0 < physical.battery_round_trip_efficiency <= 1,
             "physical.battery_round_trip_efficiency", "must be in (0,1]")
    _require(0 <= physical.battery_initial_soc_kwh <= physical.battery_kwh,
             "physical.battery_initial_soc_kwh", "must be within [0, capacity]")
    tier_sum = sum(x for _, x in physical.priority_tiers)
    _require(abs(tier_sum - 1.0) < 1e-9, "physical.priority_tiers", "fractions must sum to 1")
    _require(all(0 <= x <= 1 for _, x in physical.priority_tiers),
             "physical.priority_tiers", "fractions must be in [0,1]")
    _require(physical.inertia_h_s > 0, "physical.inertia_h_s", "must be positive")
    _require(physical.droop_d_pu >= 0, "physical.droop_d_pu", "must be >= 0")
    for idx, (a, b) in enumerate(physical.islanding_windows):
        _require(0 <= a < b <= duration, f"physical.islanding_windows[{idx}]",
                 "must satisfy 0 <= start < end <= duration")

    links = _section(data, "links", LinkConfig, "links")
    _require(links.latency_ms >= 0, "links.latency_ms", "must be >= 0")
    _require(0.0 <= links.loss_prob <= 1.0, "links.loss_prob", "must be in [0,1]")
    _require(links.bandwidth_kbps > 0, "links.bandwidth_kbps", "must be positive")
    _require(links.queue_capacity >= 1, "links.queue_capacity", "must be >= 1")

    quant = _section(data, "quantum", QuantumConfig, "quantum")
    _require(0.0 <= quant.qber_baseline <= 0.5, "quantum.qber_baseline", "must be in [0,0.5]")
    _require(quant.base_keyrate_bps >= 0, "quantum.base_keyrate_bps", "must be >= 0")
    _require(quant.probe_sample_size >= 1, "quantum.probe_sample_size", "must be >= 1")
    _require(quant.probe_interval_s > 0, "quantum.probe_interval_s", "must be positive")
    _require(0.0 <= quant.kak_stage_fail_prob <= 1.0,
             "quantum.kak_stage_fail_prob", "must be in [0,1]")

    detect = _section(data, "detection", DetectionConfig, "detection")
    _require(0.0 < detect.wls_alpha < 1.0, "detection.wls_alpha", "must be in (0,1)")
    _require(0.0 < detect.ewma_lambda <= 1.0, "detection.ewma_lambda", "must be in (0,1]")

    analytic = _section(data, "analytic", AnalyticConfig, "analytic")

    sweep = None
    if "sweep" in data:
        raw = data["sweep"]
        _check_keys(raw, {"axis", "values", "seeds"}, "sweep")
        axis = raw.get("axis")
        _require(axis in ("n_nodes", "defense_tier", "attack_kind", "intensity",
                          "topology", "seed"), "sweep.axis", f"unknown axis {axis!r}")
        values = tuple(raw.get("values", ()))
        _require(len(values) > 0, "sweep.values", "must be non-empty")
        seeds = tuple(int(s) for s in raw.get("seeds", (1,)))
        _require(len(seeds) > 0, "sweep.seeds", "must be non-empty")
        sweep = SweepConfig(axis=axis, values=values, seeds=seeds)

    return ScenarioConfig(
        name=str(data.get("name", name_hint)),
        mode=mode,
        topology_kind=kind,
        n_nodes=n_nodes,
        duration_s=duration,
        physics_dt_s=dt,
        master_seed=int(data.get("master_seed", 1)),
        defense=defense,
        attacks=tuple(attacks),
        physical=physical,
        links=links,
        quantum=quant,
        detection=detect,
        analytic=analytic,
        sweep=sweep,
    )


def parse_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: top level must be an object")
    return parse_scenario_dict(data, name_hint=path.stem)


def apply_override(data: dict, dotted_key: str, raw_value: str) -> None:
    """Apply a --override key=value onto the raw scenario dict (in place)."""
    parts = dotted_key.split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ValidationError(dotted_key, "cannot override inside a non-object")
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value
    node[parts[-1]] = value
