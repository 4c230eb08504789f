"""The master simulation loop coupling power, network, quantum, and defense.

One run wires the four layers together through the engine's event queue:

* PhysicsTick drives dispatch, storage, frequency, and the controller's
  periodic estimation duties.
* MessageSend/MessageArrival move classed, security-enveloped traffic over
  the topology; the staged defense pipeline runs at the destination.
* KeyPoolTick, IdsProbe and ChallengeIssue advance the quantum services.
* AttackWindowStart/End toggle adversarial traffic and channel interference.

Node 0 is the central controller; nodes 1..n-1 are microgrids. The logical
traffic pattern is hub-and-spoke: telemetry and priority flows run
node->controller, setpoints controller->node. Each microgrid keeps a
dedicated quantum association with the controller (key pool, error rate,
fidelity, IDS state) regardless of the classical topology, so quantum
service metrics depend on node count rather than graph shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import detection, network, physical, quantum, threat
from .config import ScenarioConfig
from .engine import Clock, EventKind, EventQueue, RngRegistry, STREAM_LABELS, Event
from .metrics import MessageRecord, RunLog

WIND_MEAN_CF = 2.0 / 7.0  # Beta(2,5) mean

_STREAMS = STREAM_LABELS + ("witness",)


@dataclass
class Beliefs:
    """Latest accepted telemetry per claimed node identity."""

    gen_kw: dict[int, float] = field(default_factory=dict)
    load_kw: dict[int, float] = field(default_factory=dict)
    soc_kwh: dict[int, float] = field(default_factory=dict)
    updated_at: dict[int, float] = field(default_factory=dict)


@dataclass
class MgState:
    node: physical.NodeState
    import_budget_kw: float
    budget_updated_at: float
    islanded: bool = False
    forced_shed_fraction: float = 0.0
    forced_shed_until: float = -1.0


class Simulation:
    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.clock = Clock(now=0.0, physics_dt=config.physics_dt_s, horizon=config.duration_s)
        self.queue = EventQueue(self.clock)
        self.rngs = RngRegistry(config.master_seed, _STREAMS)

        self.topology = network.build_topology(config.topology_kind, config.n_nodes)
        self.router = network.Router(self.topology)
        links = config.links
        self.links = network.build_links(
            self.topology,
            latency_s=links.latency_ms / 1000.0,
            jitter_s=links.jitter_ms / 1000.0,
            bandwidth_bps=links.bandwidth_kbps * 1000.0,
            loss_prob=links.loss_prob,
            queue_capacity=links.queue_capacity,
        )
        self.endpoint_processing_s = links.endpoint_processing_ms / 1000.0

        phys = config.physical
        self.mgs: dict[int, MgState] = {}
        for i in range(1, config.n_nodes):
            node = physical.NodeState(
                node_id=i,
                generation=physical.GenerationProfile(
                    solar_peak_kw=phys.solar_peak_kw,
                    wind_capacity_kw=phys.wind_capacity_kw,
                    smr_rating_kw=phys.smr_rating_kw,
                ),
                battery=physical.Battery(
                    capacity_kwh=phys.battery_kwh,
                    soc_kwh=phys.battery_initial_soc_kwh,
                    max_charge_kw=phys.battery_max_charge_kw,
                    max_discharge_kw=phys.battery_max_discharge_kw,
                    round_trip_efficiency=phys.battery_round_trip_efficiency,
                ),
                load_model=physical.LoadModel(
                    base_kw=phys.load_base_kw,
                    noise_sigma_kw=phys.load_sigma_kw,
                    noise_autocorr=phys.load_autocorr,
                    priority_tiers=phys.priority_tiers,
                ),
                frequency=physical.FrequencyState(
                    inertia_h_s=phys.inertia_h_s, droop_d_pu=phys.droop_d_pu),
            )
            self.mgs[i] = MgState(
                node=node,
                import_budget_kw=phys.import_cap_kw,
                budget_updated_at=0.0,
            )
        self.solar_window = phys.solar_window_s or (0.0, config.duration_s)

        quant = config.quantum
        self.associations: dict[int, quantum.QuantumLink] = {}
        self.ids_states: dict[int, quantum.IdsState] = {}
        for i in range(1, config.n_nodes):
            link = quantum.QuantumLink(
                node=i,
                base_keyrate_bps=quant.base_keyrate_bps,
                qber_baseline=quant.qber_baseline,
                hops=1,
                eta_swap=quant.eta_swap,
                abort_qber=quant.abort_qber,
                key_pool_bits=quant.pool_initial_bits,
            )
            self.associations[i] = link
            self.ids_states[i] = quantum.IdsState(
                probe_interval_s=quant.probe_interval_s,
                probe_sample_size=quant.probe_sample_size,
                threshold=quant.ids_threshold,
            )
        extra_bits = round(quant.verify_scaling_bits_per_node * max(0, config.n_nodes - 5))
        self.authority = quantum.TokenAuthority(
            self.associations,
            token_bits=quant.token_bits,
            encryption_bits=quant.encryption_bits_per_msg,
            extra_bits=extra_bits,
            valid_window_s=quant.token_valid_window_s,
        )

        d = config.defense
        self.defense = threat.DefenseConfig(
            tier=d.tier,
            toggles=self._resolve_toggles(d),
            rate_limit_msgs_per_s=d.rate_limit_msgs_per_s,
            quarantine_threshold=d.quarantine_threshold,
            quarantine_window_s=d.quarantine_window_s,
            quarantine_duration_s=d.quarantine_duration_s,
            signature_forge_success=d.signature_forge_success,
            plausibility_k_sigma=d.plausibility_k_sigma,
            plausibility_sigma_kw=d.plausibility_sigma_kw,
            consistency_tolerance_kw=d.consistency_tolerance_kw,
        )
        self.pipelines: dict[int, threat.DefensePipeline] = {
            i: threat.DefensePipeline(self.defense, self.authority, self.rngs.stream("signature"))
            for i in range(config.n_nodes)
        }
        self.ctx = threat.PipelineContext(
            registered_nodes=frozenset(range(config.n_nodes)))

        self.beliefs = Beliefs()
        det = config.detection
        self.wls = detection.WlsHarness(
            topology=self.topology,
            sigma_injection_kw=det.wls_sigma_injection_kw,
            sigma_witness_kw=det.wls_sigma_witness_kw,
            alpha=det.wls_alpha,
        ) if config.n_nodes >= 3 else None
        self.tracker = detection.EwmaTracker(
            lam=det.ewma_lambda, k_sigma=det.ewma_k_sigma,
            sigma_floor=det.ewma_sigma_floor_kw)
        self.challenge_records: list[detection.ChallengeRecord] = []

        self.plans = config.attack_plans()
        self.attack_sections = config.attacks
        self.active_plans: set[int] = set()
        self.mitm_state: dict | None = None

        self.log = RunLog(
            scenario=config.name,
            seed=config.master_seed,
            topology=config.topology_kind.value,
            n_nodes=config.n_nodes,
            tier=config.defense.tier.value,
            duration_s=config.duration_s,
        )
        self._msg_id = 0
        self._quantum_overhead_samples = 0
        self._quantum_overhead_total_s = 0.0
        # hot-path stream handles
        self._rng_wind = self.rngs.stream("wind")
        self._rng_load = self.rngs.stream("load")
        self._rng_channel = self.rngs.stream("channel")
        self._rng_routing = self.rngs.stream("routing")
        self._rng_attack = self.rngs.stream("attack")
        self._rng_qrng = self.rngs.stream("qrng")

    @staticmethod
    def _resolve_toggles(d) -> frozenset[str]:
        toggles = set(threat.TIER_TOGGLES[d.tier])
        for name, on in sorted(d.toggle_overrides.items()):
            if on:
                toggles.add(name)
            else:
                toggles.discard(name)
        return frozenset(toggles)

    # ------------------------------------------------------------------ setup

    def _schedule_initial_events(self) -> None:
        cfg = self.config
        self.queue.schedule(0.0, EventKind.PHYSICS_TICK)
        self.queue.schedule(0.5, EventKind.KEY_POOL_TICK)
        n_mgs = max(1, cfg.n_nodes - 1)
        for idx, i in enumerate(sorted(self.mgs)):
            tel_phase = cfg.physical.telemetry_interval_s * idx / n_mgs
            self.queue.schedule(tel_phase, EventKind.MESSAGE_SEND,
                                {"flavor": "telemetry", "node": i})
            sp_phase = cfg.physical.setpoint_interval_s * (idx + 0.5) / n_mgs
            self.queue.schedule(sp_phase, EventKind.MESSAGE_SEND,
                                {"flavor": "setpoint", "node": i})
            probe_phase = cfg.quantum.probe_interval_s * (idx + 1.0) / (n_mgs + 1)
            self.queue.schedule(probe_phase, EventKind.IDS_PROBE, {"node": i})
        for start, end in cfg.physical.islanding_windows:
            for i in sorted(self.mgs):
                self.queue.schedule(start, EventKind.MESSAGE_SEND,
                                    {"flavor": "priority", "node": i, "command": "island"})
                self.queue.schedule(end, EventKind.MESSAGE_SEND,
                                    {"flavor": "priority", "node": i, "command": "reconnect"})
        for plan_idx, plan in enumerate(self.plans):
            for w_idx, (start, end) in enumerate(plan.windows):
                self.queue.schedule(start, EventKind.ATTACK_WINDOW_START,
                                    {"plan": plan_idx, "window": w_idx})
                self.queue.schedule(end, EventKind.ATTACK_WINDOW_END,
                                    {"plan": plan_idx, "window": w_idx})
        if self.config.detection.challenge_mean_interval_s > 0:
            first = detection.schedule_challenge(
                0.0, cfg.detection.challenge_mean_interval_s, self.rngs.stream("qrng"))
            if first is not None:
                self.queue.schedule(first, EventKind.CHALLENGE_ISSUE)

    # ------------------------------------------------------------- event loop

    def run(self) -> RunLog:
        self._schedule_initial_events()
        self.queue.run(self._handle)
        self._finalize()
        return self.log

    def _handle(self, event: Event) -> None:
        kind = event.kind
        if kind is EventKind.PHYSICS_TICK:
            self._physics_tick(event.time)
        elif kind is EventKind.MESSAGE_SEND:
            self._message_send(event.time, event.payload)
        elif kind is EventKind.MESSAGE_ARRIVAL:
            self._message_arrival(event.time, event.payload)
        elif kind is EventKind.KEY_POOL_TICK:
            self._keypool_tick(event.time)
        elif kind is EventKind.IDS_PROBE:
            self._ids_probe(event.time, event.payload)
        elif kind is EventKind.CHALLENGE_ISSUE:
            self._challenge(event.time)
        elif kind is EventKind.ATTACK_WINDOW_START:
            self._attack_window_start(event.time, event.payload)
        elif kind is EventKind.ATTACK_WINDOW_END:
            self._attack_window_end(event.time, event.payload)

    # ---------------------------------------------------------------- physics

    def _predicted_gen(self, mg: MgState, t: float) -> float:
        gen = mg.node.generation
        return (physical.solar_output(t, gen.solar_peak_kw, self.solar_window)
                + gen.smr_rating_kw + gen.wind_capacity_kw * WIND_MEAN_CF)

    def _physics_tick(self, t: float) -> None:
        cfg = self.config
        dt = cfg.physics_dt_s
        wind_rng = self._rng_wind
        load_rng = self._rng_load
        row: dict = {"t": t}
        agg_served = agg_shed = agg_import = agg_demand = 0.0

        predicted: dict[int, float] = {}
        for i in sorted(self.mgs):
            mg = self.mgs[i]
            node = mg.node
            gen = node.generation
            node.gen_solar_kw = physical.solar_output(t, gen.solar_peak_kw, self.solar_window)
            node.wind_cf = physical.wind_capacity_factor(
                node.wind_cf, wind_rng, cfg.physical.wind_autocorr)
            node.gen_wind_kw = physical.wind_output(gen.wind_capacity_kw, node.wind_cf)
            node.gen_smr_kw = gen.smr_rating_kw
            node.load_noise_kw = node.load_model.step_noise(node.load_noise_kw, load_rng)
            node.load_kw = node.load_model.demand(node.load_noise_kw)
            predicted[i] = self._predicted_gen(mg, t)

            if mg.forced_shed_until < t:
                mg.forced_shed_fraction = 0.0
            if (cfg.physical.frequency_shed_enabled
                    and node.frequency.delta_f_hz < -cfg.physical.frequency_shed_threshold_hz):
                # emergency shed of the deferrable tier while frequency is low
                deferrable = node.load_model.priority_tiers[-1][1]
                mg.forced_shed_fraction = max(mg.forced_shed_fraction, deferrable)
                mg.forced_shed_until = max(mg.forced_shed_until, t + dt)

            budget_fresh = (t - mg.budget_updated_at) <= cfg.physical.setpoint_expiry_s
            if budget_fresh:
                cap = min(cfg.physical.import_cap_kw, mg.import_budget_kw)
            else:
                cap = cfg.physical.import_cap_kw * cfg.physical.fallback_import_fraction

            demand = node.load_kw
            pre_shed = 0.0
            if mg.forced_shed_fraction > 0.0:
                pre_shed = mg.forced_shed_fraction * demand
                demand = demand - pre_shed
            reserve = (cfg.physical.battery_reserve_islanded_kwh if mg.islanded
                       else cfg.physical.battery_reserve_grid_kwh)
            result = physical.dispatch(node, demand, cap, mg.islanded, dt,
                                       min_soc_kwh=reserve)
            shed = result.shed_kw + pre_shed
            served = node.load_kw - shed

            node.shed_energy_kwh = physical.accumulate_eens(shed, dt, node.shed_energy_kwh)
            node.demand_energy_kwh += node.load_kw * dt / 3600.0
            imbalance_pu = (served - node.load_kw) / max(1.0, node.load_model.base_kw)
            node.frequency = physical.step_frequency(node.frequency, imbalance_pu, dt)

            agg_served += served
            agg_shed += shed
            agg_import += result.import_kw
            agg_demand += node.load_kw

            p = f"node{i}_"
            row[p + "solar_kw"] = node.gen_solar_kw
            row[p + "wind_kw"] = node.gen_wind_kw
            row[p + "smr_kw"] = node.gen_smr_kw
            row[p + "load_kw"] = node.load_kw
            row[p + "served_kw"] = served
            row[p + "shed_kw"] = shed
            row[p + "import_kw"] = result.import_kw
            row[p + "batt_flow_kw"] = result.battery_flow_kw
            row[p + "curtailed_kw"] = result.curtailed_kw
            row[p + "soc_kwh"] = node.battery.soc_kwh
            row[p + "delta_f_hz"] = node.frequency.delta_f_hz
            row[p + "islanded"] = int(mg.islanded)

        self.log.eens_kwh = physical.accumulate_eens(agg_shed, dt, self.log.eens_kwh)
        self.log.peak_unserved_kw = max(self.log.peak_unserved_kw, agg_shed)
        self.log.served_energy_kwh += agg_served * dt / 3600.0
        self.log.demand_energy_kwh += agg_demand * dt / 3600.0

        # controller-side periodic duties
        self.ctx.predicted_gen_kw = predicted
        reported = {i: self.beliefs.gen_kw[i] for i in self.beliefs.gen_kw}
        if self.defense.enabled("consistency"):
            self.ctx.consistency_suspects = threat.consistency_check(
                reported, predicted, self.defense.consistency_tolerance_kw)
        if self.wls is not None and t > 0 and (
                int(round(t / dt)) % max(1, int(round(cfg.detection.wls_interval_s / dt))) == 0):
            believed = np.array([
                self.beliefs.gen_kw.get(i, predicted[i]) - self.beliefs.load_kw.get(
                    i, cfg.physical.load_base_kw)
                for i in sorted(self.mgs)])
            true = np.array([
                self.mgs[i].node.generation_kw - self.mgs[i].node.load_kw
                for i in sorted(self.mgs)])
            self.wls.run_once(believed, true, self.rngs.stream("witness"), t,
                              in_attack_window=self._any_window_active(t))

        for i in sorted(self.associations):
            link = self.associations[i]
            a = f"assoc{i}_"
            row[a + "qber"] = link.qber
            row[a + "fidelity"] = link.fidelity
            row[a + "pool_bits"] = link.key_pool_bits
            rate = (link.base_keyrate_bps * quantum.secret_key_fraction(link.qber)
                    * (link.eta_swap ** (link.hops - 1)) if link.qber < link.abort_qber else 0.0)
            row[a + "keyrate_bps"] = rate
            row[a + "alarm"] = int(self.ids_states[i].alarm)

        row["agg_served_kw"] = agg_served
        row["agg_shed_kw"] = agg_shed
        row["agg_import_kw"] = agg_import
        row["agg_pool_bits"] = sum(l.key_pool_bits for l in self.associations.values())
        row["eens_kwh"] = self.log.eens_kwh
        if not self.log.timeseries_columns:
            self.log.timeseries_columns = list(row)
        self.log.timeseries.append(row)

        if t + dt <= self.clock.horizon:
            self.queue.schedule(t + dt, EventKind.PHYSICS_TICK)

    def _any_window_active(self, t: float) -> bool:
        return any(self.plans[i].active_at(t) for i in self.active_plans)

    # --------------------------------------------------------------- messages

    def _next_id(self) -> int:
        self._msg_id += 1
        return self._msg_id

    def _message_send(self, t: float, payload: dict) -> None:
        flavor = payload["flavor"]
        cfg = self.config
        if flavor == "telemetry":
            i = payload["node"]
            node = self.mgs[i].node
            noise = self._rng_load.standard_normal() * cfg.detection.telemetry_sigma_kw
            body = {
                "gen_kw": node.generation_kw + noise,
                "load_kw": node.load_kw,
                "soc_kwh": node.battery.soc_kwh,
                "_sig": "valid",
            }
            self._send(src=i, claimed=i, dst=0, msg_class=network.MessageClass.TELEMETRY,
                       body=body, t=t)
            nxt = t + cfg.physical.telemetry_interval_s
            if nxt <= self.clock.horizon:
                self.queue.schedule(nxt, EventKind.MESSAGE_SEND, payload)
        elif flavor == "setpoint":
            i = payload["node"]
            mg = self.mgs[i]
            believed_gen = self.beliefs.gen_kw.get(i, self._predicted_gen(mg, t))
            believed_load = self.beliefs.load_kw.get(i, cfg.physical.load_base_kw)
            budget = believed_load - believed_gen + cfg.physical.import_margin_kw
            budget = min(cfg.physical.import_cap_kw, max(0.0, budget))
            body = {"import_budget_kw": budget, "_sig": "valid"}
            self._send(src=0, claimed=0, dst=i, msg_class=network.MessageClass.CONTROL_SETPOINT,
                       body=body, t=t)
            nxt = t + cfg.physical.setpoint_interval_s
            if nxt <= self.clock.horizon:
                self.queue.schedule(nxt, EventKind.MESSAGE_SEND, payload)
        elif flavor == "priority":
            body = {"command": payload["command"], "_sig": "valid"}
            self._send(src=0, claimed=0, dst=payload["node"],
                       msg_class=network.MessageClass.PRIORITY_ACTION, body=body, t=t)
        elif flavor == "attack":
            self._attack_emit(t, payload)

    def _send(self, src: int, claimed: int, dst: int,
              msg_class: network.MessageClass, body: dict, t: float,
              malicious: bool = False, attack_kind: str | None = None) -> None:
        msg = network.Message(
            id=self._next_id(),
            msg_class=msg_class,
            src=src,
            claimed_identity=claimed,
            dst=dst,
            size_bits=network.MESSAGE_SIZE_BITS[msg_class],
            payload=body,
            created_at=t,
            malicious=malicious,
            attack_kind=attack_kind,
        )
        issue_failed = False
        sender_delay = 0.0
        kak_attempts = 0
        kak_fallback = False
        if self.defense.enabled("qca_token"):
            digest = threat._payload_digest(msg)
            if claimed == src:
                token = self.authority.issue(src, dst, t, self._rng_qrng, digest)
                if token is None:
                    issue_failed = True
                else:
                    msg.envelope = token
                    self.log.authenticated_messages += 1
                sender_delay += self.defense.delay_qca_issue_s
                self._quantum_overhead_samples += 1
                self._quantum_overhead_total_s += (
                    self.defense.delay_qca_issue_s + self.defense.delay_qca_verify_s)
            else:
                msg.envelope = quantum.TokenAuthority.forge(claimed, dst, t, digest)
        if (msg_class is network.MessageClass.PRIORITY_ACTION
                and self.defense.enabled("pingpong_ids") and src == claimed):
            path_probe = self.router.route(src, dst, self._rng_routing)
            rtt = 2.0 * sum(
                network.link_between(self.links, path_probe[k], path_probe[k + 1]).latency_s
                + msg.size_bits / network.link_between(
                    self.links, path_probe[k], path_probe[k + 1]).bandwidth_bps
                for k in range(len(path_probe) - 1))
            outcome = quantum.kak_three_stage_send(
                rtt, self.config.quantum.kak_stage_fail_prob, self._rng_channel)
            sender_delay += outcome.added_latency_s
            kak_attempts = outcome.attempts
            kak_fallback = outcome.fallback
            self.log.kak_attempts += outcome.attempts
            if outcome.success:
                self.log.kak_successes += 1

        msg.security_delay_s += sender_delay
        msg.path = self.router.route(src, dst, self._rng_routing)
        msg.hop_index = 0
        record_stub = dict(kak_attempts=kak_attempts, kak_fallback=kak_fallback,
                           issue_failed=issue_failed)
        self._transmit_hop(msg, t + sender_delay, record_stub)

    def _transmit_hop(self, msg: network.Message, t: float, stub: dict) -> None:
        u = msg.path[msg.hop_index]
        v = msg.path[msg.hop_index + 1]
        link = network.link_between(self.links, u, v)
        if self.mitm_state is not None and self.mitm_state["link"] == (link.a, link.b):
            attack_rng = self._rng_attack
            if attack_rng.random() < self.mitm_state["tamper_prob"]:
                msg.tampered = True
                msg.malicious = True
                msg.attack_kind = threat.AttackKind.MITM.value
                if "gen_kw" in msg.payload:
                    msg.payload = dict(msg.payload)
                    msg.payload["gen_kw"] = msg.payload["gen_kw"] * (
                        1.0 + self.mitm_state["bias"])
                msg.security_delay_s += self.mitm_state["added_delay_s"]
                t += self.mitm_state["added_delay_s"]
        outcome = link.transmit(msg, t, self._rng_channel)
        if not outcome.delivered:
            self._record_message(msg, outcome="dropped",
                                 drop_reason=outcome.reason.value, stub=stub)
            return
        msg.network_delay_s += outcome.arrival_time - t
        self.queue.schedule(outcome.arrival_time, EventKind.MESSAGE_ARRIVAL,
                            {"msg": msg, "stub": stub})

    def _message_arrival(self, t: float, payload: dict) -> None:
        msg: network.Message = payload["msg"]
        stub = payload["stub"]
        msg.hop_index += 1
        if msg.hop_index < len(msg.path) - 1:
            self._transmit_hop(msg, t, stub)
            return

        verdict = self.pipelines[msg.dst].process(msg, t, self.ctx)
        if verdict.accepted:
            self._apply_payload(msg, t)
            total_delay = verdict.processing_delay_s + self.endpoint_processing_s
            latency_ms = (t + total_delay - msg.created_at) * 1000.0
            self._record_message(msg, outcome="accepted", latency_ms=latency_ms,
                                 stages=verdict.stages_evaluated, stub=stub)
        else:
            stage = verdict.rejecting_stage or ""
            if stage.startswith("qca_token"):
                self.log.qca_rejections += 1
            self._record_message(msg, outcome="rejected", rejecting_stage=stage,
                                 stages=verdict.stages_evaluated, stub=stub)

    def _apply_payload(self, msg: network.Message, t: float) -> None:
        body = msg.payload
        if msg.msg_class is network.MessageClass.TELEMETRY:
            ident = msg.claimed_identity
            if ident in self.mgs:
                self.beliefs.gen_kw[ident] = float(body.get("gen_kw", 0.0))
                self.beliefs.load_kw[ident] = float(body.get("load_kw", 0.0))
                self.beliefs.soc_kwh[ident] = float(body.get("soc_kwh", 0.0))
                self.beliefs.updated_at[ident] = t
        elif msg.msg_class is network.MessageClass.CONTROL_SETPOINT:
            mg = self.mgs.get(msg.dst)
            if mg is not None and "import_budget_kw" in body:
                mg.import_budget_kw = float(body["import_budget_kw"])
                mg.budget_updated_at = t
        elif msg.msg_class is network.MessageClass.PRIORITY_ACTION:
            mg = self.mgs.get(msg.dst)
            if mg is None:
                return
            command = body.get("command")
            if command == "island":
                mg.islanded = True
            elif command == "reconnect":
                mg.islanded = False
            elif command == "shed":
                mg.forced_shed_fraction = max(
                    mg.forced_shed_fraction, float(body.get("fraction", 0.0)))
                mg.forced_shed_until = t + float(body.get("duration_s", 30.0))

    def _record_message(self, msg: network.Message, outcome: str,
                        drop_reason: str = "", rejecting_stage: str = "",
                        latency_ms: float = float("nan"), stages: int = 0,
                        stub: dict | None = None) -> None:
        stub = stub or {}
        self.log.messages.append(MessageRecord(
            id=msg.id,
            msg_class=msg.msg_class.value,
            src=msg.src,
            claimed=msg.claimed_identity,
            dst=msg.dst,
            created_at=msg.created_at,
            size_bits=msg.size_bits,
            malicious=msg.malicious,
            attack_kind=msg.attack_kind or "",
            outcome=outcome,
            drop_reason=drop_reason,
            rejecting_stage=rejecting_stage,
            stages_evaluated=stages,
            latency_ms=latency_ms,
            kak_attempts=stub.get("kak_attempts", 0),
            kak_fallback=stub.get("kak_fallback", False),
            issue_failed=stub.get("issue_failed", False),
        ))

    # ---------------------------------------------------------------- quantum

    def _keypool_tick(self, t: float) -> None:
        for i in sorted(self.associations):
            link = self.associations[i]
            link.refresh_channel()
            quantum.keypool_step(link, 1.0)
        nxt = t + 1.0
        if nxt <= self.clock.horizon:
            self.queue.schedule(nxt, EventKind.KEY_POOL_TICK)

    def _ids_probe(self, t: float, payload: dict) -> None:
        i = payload["node"]
        result = quantum.pingpong_probe(
            self.associations[i], self.ids_states[i], self.rngs.stream("probe"))
        self.log.probe_count += 1
        if result.alarm:
            self.log.alarm_count += 1
        nxt = t + self.ids_states[i].probe_interval_s
        if nxt <= self.clock.horizon:
            self.queue.schedule(nxt, EventKind.IDS_PROBE, payload)

    def _challenge(self, t: float) -> None:
        qrng = self._rng_qrng
        mg_ids = sorted(self.mgs)
        target = mg_ids[int(qrng.integers(0, len(mg_ids)))]
        expected = self._predicted_gen(self.mgs[target], t)
        reported = self.beliefs.gen_kw.get(target)
        if reported is not None:
            record, self.tracker = detection.evaluate_challenge(
                float(reported), expected, self.tracker, issued_at=t, target=target)
            self.challenge_records.append(record)
        nxt = detection.schedule_challenge(
            t, self.config.detection.challenge_mean_interval_s, qrng)
        if nxt is not None and nxt <= self.clock.horizon:
            self.queue.schedule(nxt, EventKind.CHALLENGE_ISSUE)

    # ----------------------------------------------------------------- attack

    def _attack_window_start(self, t: float, payload: dict) -> None:
        plan_idx = payload["plan"]
        plan = self.plans[plan_idx]
        section = self.attack_sections[plan_idx]
        self.active_plans.add(plan_idx)
        attack_rng = self.rngs.stream("attack")
        window_end = next(end for start, end in plan.windows if start == t)

        if plan.kind in (threat.AttackKind.CHANNEL_DISTURBANCE,
                         threat.AttackKind.FDI_PLUS_SPOOF):
            targets = plan.targets or tuple(sorted(self.mgs))
            disturbed = targets[:1] if plan.kind is threat.AttackKind.FDI_PLUS_SPOOF else targets
            for node in disturbed:
                effect = threat.channel_disturbance_effect(
                    plan.scale, attack_rng, self.config.quantum.qber_baseline)
                link = self.associations.get(node)
                if link is not None:
                    link.attack_qber_delta = effect.qber_delta
                    link.attack_fidelity_depression = effect.fidelity_depression

        if plan.kind is threat.AttackKind.MITM:
            neighbours = sorted(v for u, v in self.topology.edges if u == 0)
            self.mitm_state = {
                "link": (0, neighbours[0]),
                "tamper_prob": 0.6 * plan.scale,
                "bias": section.fdi_gen_inflation * plan.scale,
                "added_delay_s": 0.005 * plan.scale,
            }

        if plan.kind in threat.EMITTING_KINDS:
            rate_each = threat.coordinated_rate_per_participant(
                plan.rate_msgs_per_s * plan.scale, len(plan.participants))
            for p_idx, participant in enumerate(sorted(plan.participants)):
                period = 1.0 / rate_each if rate_each > 0 else math.inf
                if not math.isfinite(period):
                    continue
                phase = float(attack_rng.uniform(0.0, period))
                self.queue.schedule(
                    min(t + phase, window_end), EventKind.MESSAGE_SEND,
                    {"flavor": "attack", "plan": plan_idx, "participant": participant,
                     "period": period, "window_end": window_end, "emission": 0})

    def _attack_window_end(self, t: float, payload: dict) -> None:
        plan_idx = payload["plan"]
        plan = self.plans[plan_idx]
        self.active_plans.discard(plan_idx)
        if plan.kind in (threat.AttackKind.CHANNEL_DISTURBANCE,
                         threat.AttackKind.FDI_PLUS_SPOOF):
            for link in self.associations.values():
                link.attack_qber_delta = 0.0
                link.attack_fidelity_depression = 0.0
        if plan.kind is threat.AttackKind.MITM:
            self.mitm_state = None

    def _attack_emit(self, t: float, payload: dict) -> None:
        plan_idx = payload["plan"]
        plan = self.plans[plan_idx]
        section = self.attack_sections[plan_idx]
        participant = payload["participant"]
        attack_rng = self._rng_attack
        kind = plan.kind
        # victims never include the emitting participant: forged traffic always
        # claims an identity whose credentials the attacker does not hold
        targets = tuple(t for t in (plan.targets or tuple(sorted(self.mgs)))
                        if t != participant)
        emission = payload["emission"]

        if kind in (threat.AttackKind.FDI, threat.AttackKind.FDI_PLUS_SPOOF):
            do_fdi = kind is threat.AttackKind.FDI or attack_rng.random() < 0.5
        else:
            do_fdi = False

        if not targets and kind is not threat.AttackKind.KEY_EXHAUSTION:
            return

        if do_fdi:
            victim = targets[emission % len(targets)]
            node = self.mgs[victim].node
            inflation = 1.0 + section.fdi_gen_inflation * plan.scale
            body = {
                "gen_kw": node.generation_kw * inflation,
                "load_kw": node.load_kw,
                "soc_kwh": node.battery.soc_kwh * (1.0 - section.fdi_soc_deflation * plan.scale),
                "_sig": "forged",
            }
            self._send(src=participant, claimed=victim, dst=0,
                       msg_class=network.MessageClass.TELEMETRY, body=body, t=t,
                       malicious=True, attack_kind=kind.value)
        elif kind in (threat.AttackKind.SPOOFING, threat.AttackKind.FDI_PLUS_SPOOF):
            victim = targets[emission % len(targets)]
            if attack_rng.random() < 0.5:
                body = {"import_budget_kw": 0.0, "_sig": "forged"}
                self._send(src=participant, claimed=0, dst=victim,
                           msg_class=network.MessageClass.CONTROL_SETPOINT, body=body, t=t,
                           malicious=True, attack_kind=kind.value)
            else:
                body = {"command": "shed",
                        "fraction": section.spoof_shed_fraction * plan.scale,
                        "duration_s": section.spoof_shed_duration_s,
                        "_sig": "forged"}
                self._send(src=participant, claimed=0, dst=victim,
                           msg_class=network.MessageClass.PRIORITY_ACTION, body=body, t=t,
                           malicious=True, attack_kind=kind.value)
        elif kind is threat.AttackKind.COORDINATED_MULTI_NODE:
            # junk traffic under the controller's identity, spread across
            # sources to evade per-source limits; content is inert noise but
            # every arrival drains the claimed identity's rate budget at the
            # receiving verifier, starving legitimate control traffic
            victim = targets[emission % len(targets)]
            body = {"noise": float(attack_rng.uniform(0.0, 1.0)), "_sig": "forged"}
            self._send(src=participant, claimed=0, dst=victim,
                       msg_class=network.MessageClass.TELEMETRY, body=body, t=t,
                       malicious=True, attack_kind=kind.value)
        elif kind is threat.AttackKind.KEY_EXHAUSTION:
            node = self.mgs.get(participant)
            body = {
                "gen_kw": node.node.generation_kw if node else 0.0,
                "load_kw": node.node.load_kw if node else 0.0,
                "soc_kwh": node.node.battery.soc_kwh if node else 0.0,
                "_sig": "valid",
            }
            self._send(src=participant, claimed=participant, dst=0,
                       msg_class=network.MessageClass.TELEMETRY, body=body, t=t,
                       malicious=True, attack_kind=kind.value)

        nxt = t + payload["period"]
        if nxt < payload["window_end"]:
            self.queue.schedule(nxt, EventKind.MESSAGE_SEND, {
                **payload, "emission": emission + 1})

    # ----------------------------------------------------------------- finish

    def _finalize(self) -> None:
        log = self.log
        log.key_generated_bits = sum(
            l.generated_total_bits for l in self.associations.values())
        log.key_consumed_bits = sum(
            l.consumed_total_bits for l in self.associations.values())
        # token validations actually evaluated (pipeline short-circuits skip them)
        log.qca_checks = sum(p.stage_eval_counts["qca_token"]
                             for p in self.pipelines.values())
        log.shed_fraction_by_node = {
            i: self.mgs[i].node.shed_fraction for i in sorted(self.mgs)}
        if self._quantum_overhead_samples > 0:
            log.quantum_verify_overhead_ms = (
                self._quantum_overhead_total_s / self._quantum_overhead_samples * 1000.0)
        if self.wls is not None:
            log.wls_detection_rate = self.wls.attack_detection_rate
            log.wls_clean_flag_rate = self.wls.clean_flag_rate
        ground_truth = frozenset(
            target for plan in self.plans
            if plan.kind in (threat.AttackKind.FDI, threat.AttackKind.FDI_PLUS_SPOOF)
            for target in (plan.targets or tuple(sorted(self.mgs))))
        scores = detection.detection_scores(self.challenge_records, ground_truth)
        log.challenge_precision = scores.precision
        log.challenge_recall = scores.recall
        log.challenge_vacuous = scores.vacuous
        log.challenge_count = len(self.challenge_records)


def run(config: ScenarioConfig) -> RunLog:
    """Execute one scenario to completion; identical config yields an identical log."""
    return Simulation(config).run()
