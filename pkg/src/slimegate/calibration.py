"""All free parameters of the simulator in one auditable record.

The behavioural literature pins orderings and time windows, not constants,
so everything tunable lives here: the four wavelength phobia weights, the
reluctance-to-leave-agar hazard, desiccation timing, withdrawal dynamics,
tube electrical scale, and the overvoltage morphology response. The
shipped defaults were fitted so the acceptance campaigns reproduce the
reference behaviour; `experiments.calibrate` can re-fit them.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, replace

TICKS_PER_DAY = 1440.0  # at time_scale = 1 simulated minute per tick
TICKS_PER_HOUR = 60.0


@dataclass(frozen=True)
class Calibration:
    # Wavelength (nm) -> avoidance weight, most-avoided highest. Queried
    # through fields.phobia_weight with linear interpolation between anchors.
    phobia_anchors: tuple[tuple[float, float], ...] = (
        (466.0, 0.22),
        (568.0, 1.30),
        (585.0, 0.50),
        (626.0, 0.58),
    )

    # Agent population and motion.
    population: int = 400
    step_mm: float = 0.12
    sensor_offset_mm: float = 3.0
    sensor_angle_rad: float = 0.55
    turn_angle_rad: float = 0.35
    jitter_rad: float = 0.25

    # Trail deposition and decay. Mature trail (above the consolidation
    # threshold) decays on a much slower clock: established tubes persist.
    # Sensing saturates at sense_cap so trail works as route memory without
    # gluing the swarm to its own saturated colony.
    deposit: float = 1.0
    trail_cap: float = 300.0
    evaporation_fast: float = 4.0e-3
    evaporation_slow: float = 4.0e-5
    consolidation_threshold: float = 60.0
    trail_gain: float = 0.35
    sense_cap: float = 40.0

    # Chemoattractant field dynamics (per tick, grid units). Decay sets the
    # screening length of the steady plume: strong enough that the smell of
    # a flake one electrode away reads ~10x weaker than one nearby.
    attractant_emission: float = 1050.0
    attractant_source_radius_mm: float = 5.0
    attractant_initial_mass: float = 52_500.0
    attractant_initial_sigma_mm: float = 9.0
    attractant_diffusion_alpha: float = 0.12  # D*dt/h^2, stability-capped
    attractant_decay: float = 0.02

    # Reluctance to leave moist agar: per-attempt exit probability is
    # exit_hazard_base * dryness^exit_dryness_power, rising as the blob
    # dries out; stepping onto plastic already marked by trail above
    # follow_threshold is gated at follow_prob instead, so one successful
    # route avalanches into an exodus.
    exit_hazard_base: float = 4.8e-6
    exit_dryness_power: float = 4.0
    attractant_reference: float = 60.0  # outward attraction giving unit hazard
    evidence_floor: float = 0.02  # undirected-pioneering floor
    evidence_cap: float = 1.5
    follow_threshold: float = 12.0
    follow_probe_mm: float = 3.0
    follow_prob: float = 0.5
    bridging_boost: float = 2000.0  # contact crossing where the probe lands on agar
    activated_exit_prob: float = 0.015  # after a completed operation (reset runs)

    # Moisture / desiccation. Horizon is for the 2 ml reference blob and
    # scales linearly with blob volume.
    viability_threshold: float = 0.25
    desiccation_horizon_days: float = 4.0
    reference_volume_ml: float = 2.0

    # Withdrawal under new illumination.
    fragmentation_probability: float = 0.15
    withdrawal_speed_mult: float = 0.8
    withdrawal_trail_gain: float = 1.0
    withdrawal_beacon_gain: float = 40.0
    withdrawal_erase: float = 0.35
    residue_repulsion: float = 5000.0

    # Conductive-network extraction and electrical scale. Mats wider than
    # one tube width extract as that many parallel tubes.
    trail_threshold: float = 60.0
    tube_resistance_ohms: float = 5000.0
    reference_gap_mm: float = 10.0
    tube_width_mm: float = 5.5

    # Overvoltage morphology: above the threshold supply voltage the
    # plasmodium deposits more, steers wider and avoids crowded trail,
    # spreading into multiple interlinking tubules.
    overvoltage_threshold_volts: float = 12.0
    overvoltage_deposit_gain: float = 1.6
    overvoltage_jitter_mult: float = 1.8
    crowd_penalty: float = 1.2
    crowd_threshold: float = 120.0
    overvoltage_port_saturation: float = 150.0
    overvoltage_port_damp: float = 0.15
    settlement_ticks: int = 240  # morphology develops briefly after bridging

    # Gate-run bookkeeping.
    completion_occupancy: float = 0.22  # fraction of mass on target blob
    completion_hold_ticks: int = 30
    commitment_bias: float = 0.35  # both-dark tie-break attraction bonus
    grid_resolution: float = 0.5  # cells per mm

    def phobia_weight_of(self, wavelength_nm: float) -> float:
        xs = [wl for wl, _ in self.phobia_anchors]
        ys = [w for _, w in self.phobia_anchors]
        if wavelength_nm <= xs[0]:
            return ys[0]
        if wavelength_nm >= xs[-1]:
            return ys[-1]
        for i in range(1, len(xs)):
            if wavelength_nm <= xs[i]:
                t = (wavelength_nm - xs[i - 1]) / (xs[i] - xs[i - 1])
                return ys[i - 1] + t * (ys[i] - ys[i - 1])
        return ys[-1]

    def desiccation_horizon_ticks(self, time_scale: float, volume_ml: float | None = None) -> float:
        vol = self.reference_volume_ml if volume_ml is None else volume_ml
        days = self.desiccation_horizon_days * (vol / self.reference_volume_ml)
        return days * TICKS_PER_DAY / time_scale

    def moisture_decay_per_tick(self, time_scale: float, volume_ml: float | None = None) -> float:
        """Multiplier applied to moisture each tick; reaches the viability
        threshold strictly before the horizon elapses."""
        horizon = self.desiccation_horizon_ticks(time_scale, volume_ml)
        return math.exp(math.log(self.viability_threshold) / (horizon - 1.0))

    def validate(self) -> list[str]:
        problems = []
        if any(w <= 0 for _, w in self.phobia_anchors):
            problems.append("phobia weights must be > 0")
        for name in ("fragmentation_probability", "follow_prob", "activated_exit_prob",
                     "viability_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                problems.append(f"{name} must lie in [0, 1]")
        if self.population <= 0:
            problems.append("population must be positive")
        if self.attractant_diffusion_alpha > 0.25:
            problems.append("attractant_diffusion_alpha must be <= 0.25 for stability")
        return problems

    def to_json(self) -> str:
        d = asdict(self)
        d["phobia_anchors"] = [list(p) for p in self.phobia_anchors]
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Calibration":
        d = json.loads(text)
        d["phobia_anchors"] = tuple(tuple(p) for p in d["phobia_anchors"])
        return cls(**d)

    def with_(self, **kw) -> "Calibration":
        return replace(self, **kw)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


DEFAULT_CALIBRATION = Calibration()
