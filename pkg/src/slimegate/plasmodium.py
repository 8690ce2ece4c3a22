"""Multi-agent plasmodium model.

The organism is a swarm of trail-depositing agents plus a shared trail
field. Steering follows the classic three-sensor scheme: each agent turns
toward the best of (trail pull + chemoattractant - light repulsion) at its
left/centre/right sensors, with bounded uniform jitter. Two behaviours on
top of that produce the observed gate timing:

* reluctance - agents on moist agar only step onto bare plastic with a
  small per-attempt probability that grows as the agar dries, so a colony
  dwells for days before committing, and may run out of moisture first;
* consolidation - heavily used trail decays on a much slower clock, so a
  successful crossing hardens into a persistent tube.

Withdrawal (triggered when a colonized region is newly illuminated) flips
flagged agents into a retreat regime: they stream back toward a beacon,
erasing trail as they go; the vacated route is stamped with a strong
repellent residue that the swarm never re-enters.

States: exploring -> migrating -> {withdrawing, exploring},
withdrawing -> {exploring, sclerotized, fragmented}; the last two are
terminal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from . import _kernels as K
from .calibration import Calibration, DEFAULT_CALIBRATION
from .circuit import ConductiveNetwork, NetworkEdge
from .fields import StimulusFields, phobia_weight
from .scene import AgarBlob, Scene

MODE_EXPLORING = "exploring"
MODE_MIGRATING = "migrating"
MODE_WITHDRAWING = "withdrawing"
MODE_SCLEROTIZED = "sclerotized"
MODE_FRAGMENTED = "fragmented"
TERMINAL_MODES = frozenset({MODE_SCLEROTIZED, MODE_FRAGMENTED})

ALLOWED_TRANSITIONS = frozenset(
    {
        (MODE_EXPLORING, MODE_MIGRATING),
        (MODE_MIGRATING, MODE_WITHDRAWING),
        (MODE_MIGRATING, MODE_EXPLORING),
        (MODE_WITHDRAWING, MODE_EXPLORING),
        (MODE_WITHDRAWING, MODE_SCLEROTIZED),
        (MODE_WITHDRAWING, MODE_FRAGMENTED),
    }
)

# Fraction of mass off the home blob that counts as a migration underway,
# with hysteresis so the mode does not flap at the boundary.
MIGRATE_ENTER = 0.15
MIGRATE_EXIT = 0.05
WITHDRAWAL_DONE_FRACTION = 0.05

INITIAL_BLOB_TRAIL = 90.0  # colonized-body trail level stamped at inoculation


class StateError(RuntimeError):
    """Raised when an operation is applied to a state that forbids it."""


@dataclass(frozen=True)
class Agent:
    position: tuple[float, float]
    heading: float  # radians in [0, 2*pi)
    sensor_angle: float
    sensor_offset: float


@dataclass(frozen=True)
class Stimulus:
    attraction: float
    repulsion: float
    moisture_ok: bool


@dataclass
class Arena:
    """Static per-scene geometry shared by every step call."""

    resolution: float
    shape: tuple[int, int]
    dish_cx: float
    dish_cy: float
    dish_r: float
    blobs: np.ndarray  # (B, 3) agar discs (cx, cy, r) in mm
    barriers: np.ndarray  # (K, 4) impassable segments only

    @classmethod
    def from_scene(cls, scene: Scene, calibration: Calibration) -> "Arena":
        res = calibration.grid_resolution
        n = int(math.ceil(scene.dish_diameter * res))
        discs = [
            (b.center[0], b.center[1], b.radius) for b in scene.agar_blobs
        ]
        hard = [
            (b.segment[0][0], b.segment[0][1], b.segment[1][0], b.segment[1][1])
            for b in scene.barriers
            if not b.passable_by_plasmodium
        ]
        return cls(
            resolution=res,
            shape=(n, n),
            dish_cx=scene.center[0],
            dish_cy=scene.center[1],
            dish_r=scene.radius,
            blobs=np.array(discs, dtype=np.float64).reshape(-1, 3),
            barriers=np.array(hard, dtype=np.float64).reshape(-1, 4),
        )


@dataclass
class PlasmodiumState:
    xs: np.ndarray
    ys: np.ndarray
    hcos: np.ndarray
    hsin: np.ndarray
    trail: np.ndarray
    route: np.ndarray  # recent off-agar traffic, feeds the follow gate
    residue: np.ndarray
    mode: str
    rng_seed: int
    rng_state: np.ndarray  # uint64[2]
    grid_resolution: float
    source_blob: AgarBlob
    source_electrode: str
    sensor_angle: float
    sensor_offset: float
    tick: int = 0
    trace: list = field(default_factory=list)  # (tick, mode) on every change
    withdrawn_electrodes: frozenset = frozenset()
    activated: bool = False
    overvoltage: bool = False
    commit_sign: float = 0.0
    wd_flags: np.ndarray | None = None
    wd_region: tuple[float, float, float] | None = None  # (cx, cy, r)
    wd_will_fragment: bool = False
    wd_electrode: str | None = None

    @property
    def total_mass(self) -> int:
        return int(self.xs.shape[0])

    @property
    def agents(self) -> list[Agent]:
        out = []
        for i in range(self.total_mass):
            h = math.atan2(self.hsin[i], self.hcos[i]) % (2.0 * math.pi)
            out.append(
                Agent(
                    (float(self.xs[i]), float(self.ys[i])),
                    h,
                    self.sensor_angle,
                    self.sensor_offset,
                )
            )
        return out

    @property
    def terminal(self) -> bool:
        return self.mode in TERMINAL_MODES

    def copy(self) -> "PlasmodiumState":
        return replace(
            self,
            xs=self.xs.copy(),
            ys=self.ys.copy(),
            hcos=self.hcos.copy(),
            hsin=self.hsin.copy(),
            trail=self.trail.copy(),
            route=self.route.copy(),
            residue=self.residue.copy(),
            rng_state=self.rng_state.copy(),
            trace=list(self.trace),
            wd_flags=None if self.wd_flags is None else self.wd_flags.copy(),
        )

    def occupancy(self, cx: float, cy: float, r: float) -> float:
        """Fraction of total mass inside the given disc."""
        inside = (self.xs - cx) ** 2 + (self.ys - cy) ** 2 <= r * r
        return float(inside.sum()) / self.total_mass

    def off_source_fraction(self) -> float:
        b = self.source_blob
        return 1.0 - self.occupancy(b.center[0], b.center[1], b.radius)

    def _set_mode(self, mode: str) -> None:
        if mode == self.mode:
            return
        if (self.mode, mode) not in ALLOWED_TRANSITIONS:
            raise StateError(f"illegal mode transition {self.mode} -> {mode}")
        self.mode = mode
        self.trace.append((self.tick, mode))


def inoculate(
    scene: Scene,
    electrode_id: str,
    mass: int,
    seed: int,
    calibration: Calibration = DEFAULT_CALIBRATION,
) -> PlasmodiumState:
    """Seed `mass` agents uniformly over the agar blob on the named
    electrode. Deterministic for a fixed seed."""
    if mass <= 0:
        raise ValueError("mass must be positive: an empty plasmodium is invalid")
    try:
        scene.electrode(electrode_id)
    except KeyError as exc:
        raise ValueError(str(exc)) from None
    blob = scene.blob_on(electrode_id)
    if blob is None:
        raise ValueError(
            f"electrode {electrode_id!r} has no agar blob; the plasmodium needs moisture"
        )
    return inoculate_blob(scene, blob, mass, seed, calibration, electrode_id)


def inoculate_blob(
    scene: Scene,
    blob: AgarBlob,
    mass: int,
    seed: int,
    calibration: Calibration = DEFAULT_CALIBRATION,
    electrode_id: str = "",
) -> PlasmodiumState:
    """Lower-level inoculation onto an arbitrary blob (the two-choice arena
    has no electrodes)."""
    if mass <= 0:
        raise ValueError("mass must be positive")
    ss = np.random.SeedSequence(seed)
    gen = np.random.Generator(np.random.PCG64(ss))
    r = blob.radius * np.sqrt(gen.random(mass))
    theta = gen.random(mass) * 2.0 * np.pi
    xs = blob.center[0] + r * np.cos(theta)
    ys = blob.center[1] + r * np.sin(theta)
    h = gen.random(mass) * 2.0 * np.pi

    res = calibration.grid_resolution
    n = int(math.ceil(scene.dish_diameter * res))
    trail = np.zeros((n, n))
    gx, gy = np.meshgrid((np.arange(n) + 0.5) / res, (np.arange(n) + 0.5) / res)
    on_blob = (gx - blob.center[0]) ** 2 + (gy - blob.center[1]) ** 2 <= blob.radius**2
    trail[on_blob] = INITIAL_BLOB_TRAIL

    state = PlasmodiumState(
        xs=xs,
        ys=ys,
        hcos=np.cos(h),
        hsin=np.sin(h),
        trail=trail,
        route=np.zeros((n, n)),
        residue=np.zeros((n, n)),
        mode=MODE_EXPLORING,
        rng_seed=seed,
        rng_state=K.make_rng_state(ss.generate_state(2, np.uint64)),
        grid_resolution=res,
        source_blob=blob,
        source_electrode=electrode_id,
        sensor_angle=calibration.sensor_angle_rad,
        sensor_offset=calibration.sensor_offset_mm,
    )
    state.trace.append((0, MODE_EXPLORING))
    return state


def sense_sensors(
    agent: Agent,
    fields: StimulusFields,
    scene: Scene,
    calibration: Calibration = DEFAULT_CALIBRATION,
    led_states: dict[str, int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Attraction and repulsion sampled at the agent's left/centre/right
    sensor points. Repulsion is the phobia-weighted sum of lit-LED
    irradiance at each point."""
    states = led_states if led_states is not None else getattr(fields, "led_states", {})
    x, y = agent.position
    attraction = np.zeros(3)
    repulsion = np.zeros(3)
    for k, da in enumerate((-agent.sensor_angle, 0.0, agent.sensor_angle)):
        a = agent.heading + da
        sx = x + agent.sensor_offset * math.cos(a)
        sy = y + agent.sensor_offset * math.sin(a)
        iy, ix = fields.cell_of(sx, sy)
        attraction[k] = fields.attractant[iy, ix]
        total = 0.0
        for led in scene.leds:
            if states.get(led.channel, 0):
                total += phobia_weight(led.wavelength_nm, calibration) * fields.irradiance[
                    led.id
                ][iy, ix]
        repulsion[k] = total
    return attraction, repulsion


def sense(
    agent: Agent,
    fields: StimulusFields,
    scene: Scene,
    calibration: Calibration = DEFAULT_CALIBRATION,
    led_states: dict[str, int] | None = None,
) -> Stimulus:
    """Aggregate stimulus at the agent: front-sensor attraction/repulsion
    plus a moisture check (moist agar, or bare plastic it may traverse)."""
    attraction, repulsion = sense_sensors(agent, fields, scene, calibration, led_states)
    iy, ix = fields.cell_of(*agent.position)
    on_agar = bool(fields.agar_mask[iy, ix])
    if on_agar:
        ok = fields.moisture[iy, ix] >= calibration.viability_threshold
    else:
        ok = True  # plastic is traversable, just dry
    return Stimulus(float(attraction[1]), float(repulsion[1]), ok)


def _build_pf(
    state: PlasmodiumState,
    arena: Arena,
    calibration: Calibration,
    exit_prob: float,
) -> np.ndarray:
    pf = np.zeros(K.PF_SIZE)
    pf[K.PF_CELL_MM] = 1.0 / arena.resolution
    pf[K.PF_RES] = arena.resolution
    pf[K.PF_DISH_CX] = arena.dish_cx
    pf[K.PF_DISH_CY] = arena.dish_cy
    margin = 0.5
    pf[K.PF_DISH_R2] = (arena.dish_r - margin) ** 2
    pf[K.PF_STEP] = calibration.step_mm
    pf[K.PF_SENSOR_OFF] = calibration.sensor_offset_mm
    pf[K.PF_COS_SA] = math.cos(calibration.sensor_angle_rad)
    pf[K.PF_SIN_SA] = math.sin(calibration.sensor_angle_rad)
    pf[K.PF_COS_TA] = math.cos(calibration.turn_angle_rad)
    pf[K.PF_SIN_TA] = math.sin(calibration.turn_angle_rad)
    jitter = calibration.jitter_rad
    deposit_gain = 1.0
    crowd_pen = 0.0
    if state.overvoltage:
        jitter *= calibration.overvoltage_jitter_mult
        deposit_gain = calibration.overvoltage_deposit_gain
        crowd_pen = calibration.crowd_penalty
    pf[K.PF_JITTER] = jitter
    pf[K.PF_TRAIL_GAIN] = calibration.trail_gain
    pf[K.PF_DEPOSIT] = calibration.deposit
    pf[K.PF_TRAIL_CAP] = calibration.trail_cap
    pf[K.PF_EVAP_FAST] = calibration.evaporation_fast
    pf[K.PF_EVAP_SLOW] = calibration.evaporation_slow
    pf[K.PF_CONSOL] = calibration.consolidation_threshold
    pf[K.PF_EXIT_PROB] = exit_prob
    pf[K.PF_FOLLOW_THRESH] = calibration.follow_threshold
    pf[K.PF_FOLLOW_PROB] = calibration.follow_prob
    pf[K.PF_ACTIVATED_PROB] = calibration.activated_exit_prob if state.activated else 0.0
    pf[K.PF_RESIDUE_BLOCK] = calibration.residue_repulsion * 0.5
    pf[K.PF_WD_SPEED] = calibration.withdrawal_speed_mult
    pf[K.PF_WD_TRAIL_GAIN] = calibration.withdrawal_trail_gain
    pf[K.PF_WD_BEACON_GAIN] = calibration.withdrawal_beacon_gain
    pf[K.PF_WD_BEACON_X] = state.source_blob.center[0]
    pf[K.PF_WD_BEACON_Y] = state.source_blob.center[1]
    pf[K.PF_WD_ERASE] = calibration.withdrawal_erase
    pf[K.PF_CROWD_PEN] = crowd_pen
    pf[K.PF_CROWD_THRESH] = calibration.crowd_threshold
    pf[K.PF_DEPOSIT_GAIN] = deposit_gain
    pf[K.PF_COMMIT_BIAS] = calibration.commitment_bias
    pf[K.PF_COMMIT_SIGN] = state.commit_sign
    pf[K.PF_WITHDRAWING] = 1.0 if state.mode == MODE_WITHDRAWING else 0.0
    pf[K.PF_SENSE_CAP] = calibration.sense_cap
    pf[K.PF_FOLLOW_PROBE] = calibration.follow_probe_mm
    pf[K.PF_ATTR_REF] = calibration.attractant_reference
    pf[K.PF_EVIDENCE_FLOOR] = calibration.evidence_floor
    pf[K.PF_EVIDENCE_CAP] = calibration.evidence_cap
    if state.overvoltage:
        pf[K.PF_PORT_SAT] = calibration.overvoltage_port_saturation
        pf[K.PF_PORT_DAMP] = calibration.overvoltage_port_damp
    pf[K.PF_BRIDGE_BOOST] = calibration.bridging_boost
    return pf


def exit_probability(
    state: PlasmodiumState,
    fields: StimulusFields,
    calibration: Calibration,
) -> float:
    """Reluctance gate for this instant: grows with source-blob dryness,
    zero once the blob has dried past viability (nothing left to fuel a
    crossing)."""
    iy, ix = fields.cell_of(*state.source_blob.center)
    moisture = float(fields.moisture[iy, ix])
    if moisture < calibration.viability_threshold:
        return 0.0
    dryness = max(0.0, 1.0 - moisture / max(state.source_blob.initial_moisture, 1e-12))
    return calibration.exit_hazard_base * dryness**calibration.exit_dryness_power


def step(
    state: PlasmodiumState,
    fields: StimulusFields,
    scene: Scene,
    dt: int,
    calibration: Calibration = DEFAULT_CALIBRATION,
    arena: Arena | None = None,
    repulsion: np.ndarray | None = None,
) -> PlasmodiumState:
    """Advance the swarm dt ticks against the current fields (read-only).
    Pure: returns a new state. Raises StateError on terminal states."""
    if state.terminal:
        raise StateError(f"cannot step a terminal state ({state.mode})")
    if dt < 1:
        raise ValueError("dt must be >= 1")
    if arena is None:
        arena = Arena.from_scene(scene, calibration)
    if repulsion is None:
        led_states = getattr(fields, "led_states", {})
        repulsion = fields.combined_repulsion(scene, led_states, calibration)

    out = state.copy()
    rep = repulsion + out.residue
    pf = _build_pf(out, arena, calibration, exit_probability(out, fields, calibration))
    wd = (
        out.wd_flags
        if out.wd_flags is not None
        else np.zeros(out.total_mass, dtype=np.uint8)
    )
    K.advance_agents(
        int(dt),
        out.xs,
        out.ys,
        out.hcos,
        out.hsin,
        wd,
        out.trail,
        out.route,
        fields.attractant,
        rep,
        arena.blobs,
        arena.barriers,
        pf,
        out.rng_state,
    )
    out.tick += int(dt)

    if out.mode == MODE_WITHDRAWING:
        cx, cy, r = out.wd_region
        if out.occupancy(cx, cy, r) < WITHDRAWAL_DONE_FRACTION:
            _finalize_withdrawal(out, fields, calibration)
    else:
        frac = out.off_source_fraction()
        if out.mode == MODE_EXPLORING and frac > MIGRATE_ENTER:
            out._set_mode(MODE_MIGRATING)
        elif out.mode == MODE_MIGRATING and frac < MIGRATE_EXIT:
            out._set_mode(MODE_EXPLORING)
    return out


def trigger_withdrawal(
    state: PlasmodiumState,
    fields: StimulusFields,
    region: tuple[float, float, float],
    calibration: Calibration = DEFAULT_CALIBRATION,
    electrode_id: str | None = None,
) -> PlasmodiumState:
    """Mark the agents inside the newly lit region for retreat. The state
    flips to withdrawing (via migrating if needed); whether this particular
    withdrawal will end in fragmentation is drawn now from the seed stream.
    No-op when the region is empty of agents."""
    if state.terminal:
        raise StateError(f"cannot withdraw a terminal state ({state.mode})")
    cx, cy, r = region
    inside = (state.xs - cx) ** 2 + (state.ys - cy) ** 2 <= r * r
    if not inside.any():
        return state
    out = state.copy()
    if out.mode == MODE_EXPLORING:
        out._set_mode(MODE_MIGRATING)
    out._set_mode(MODE_WITHDRAWING)
    out.wd_flags = inside.astype(np.uint8)
    out.wd_region = region
    out.wd_electrode = electrode_id
    draw = K.rng_uniform(out.rng_state)
    out.wd_will_fragment = bool(draw < calibration.fragmentation_probability)
    return out


def _finalize_withdrawal(
    state: PlasmodiumState, fields: StimulusFields, calibration: Calibration
) -> None:
    """Withdrawal reached its target: stamp the vacated route with repellent
    residue, break its conductive trail, and settle the final mode."""
    cx, cy, r = state.wd_region
    h, w = state.trail.shape
    res = state.grid_resolution
    gx, gy = np.meshgrid((np.arange(w) + 0.5) / res, (np.arange(h) + 0.5) / res)
    region_mask = (gx - cx) ** 2 + (gy - cy) ** 2 <= r * r
    src = state.source_blob
    home = (gx - src.center[0]) ** 2 + (gy - src.center[1]) ** 2 <= src.radius**2
    route = ((state.trail >= calibration.follow_threshold) | region_mask) & ~home
    state.residue[route] += calibration.residue_repulsion
    state.trail[route] *= 0.05
    state.route[route] = 0.0
    if state.wd_electrode:
        state.withdrawn_electrodes = state.withdrawn_electrodes | {state.wd_electrode}
    state.wd_flags = None
    state.wd_region = None
    if state.wd_will_fragment:
        state._set_mode(MODE_FRAGMENTED)
    else:
        iy, ix = fields.cell_of(*src.center)
        dried_out = fields.moisture[iy, ix] < calibration.viability_threshold
        if dried_out and not state.activated:
            # A colony that never fed elsewhere has nothing left to live on.
            state._set_mode(MODE_SCLEROTIZED)
        else:
            state._set_mode(MODE_EXPLORING)
    state.wd_electrode = None


# ---------------------------------------------------------------------------
# Conductive network extraction

_NBRS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def contact_mask(scene: Scene, electrode_id: str, shape, resolution: float) -> np.ndarray:
    """Cells that form the electrical contact of an electrode: its footprint
    intersected with its agar blob (current flows through the moist agar; a
    trail touching dry footprint corners does not conduct). Bare electrodes
    fall back to the whole footprint."""
    e = scene.electrode(electrode_id)
    h, w = shape
    mask = np.zeros((h, w), dtype=bool)
    x0 = max(int(e.footprint.x0 * resolution), 0)
    x1 = min(int(math.ceil(e.footprint.x1 * resolution)), w)
    y0 = max(int(e.footprint.y0 * resolution), 0)
    y1 = min(int(math.ceil(e.footprint.y1 * resolution)), h)
    mask[y0:y1, x0:x1] = True
    blob = scene.blob_on(electrode_id)
    if blob is not None:
        gx, gy = np.meshgrid(
            (np.arange(w) + 0.5) / resolution, (np.arange(h) + 0.5) / resolution
        )
        mask &= (gx - blob.center[0]) ** 2 + (gy - blob.center[1]) ** 2 <= blob.radius**2
    return mask


def thresholded_connectivity(
    trail: np.ndarray,
    contact_a: np.ndarray,
    contact_b: np.ndarray,
    threshold: float,
) -> bool:
    """Flood-fill oracle: do cells with trail >= threshold 8-connect the two
    electrode contact zones?"""
    mask = trail >= threshold
    if not mask.any():
        return False
    labels, _ = ndimage.label(mask, structure=np.ones((3, 3), dtype=np.int8))
    la = {int(v) for v in np.unique(labels[contact_a]) if v != 0}
    lb = {int(v) for v in np.unique(labels[contact_b]) if v != 0}
    return bool(la & lb)


def extract_network(
    state: PlasmodiumState,
    scene: Scene,
    threshold: float | None = None,
    calibration: Calibration = DEFAULT_CALIBRATION,
) -> ConductiveNetwork:
    """Skeletonize the thresholded trail into a tube graph. Nodes sit at
    electrode footprints and at skeleton junctions/endpoints; every edge
    carries its traced length and a conductance proportional to mean trail
    strength over length, scaled so a cap-strength tube across the
    reference gap has the calibrated tube resistance.

    A strand of near single-tube width maps to one edge. Where the mat is
    wider than one tube width (the overvoltage morphology), the grid cannot
    resolve the individual interlinked strands, so the edge is emitted as
    the equivalent number of parallel tubes with the conductance shared
    between them."""
    from skimage.morphology import skeletonize

    thr = calibration.trail_threshold if threshold is None else threshold
    if thr <= 0:
        raise ValueError("threshold must be positive")
    mask = state.trail >= thr
    if not mask.any():
        return ConductiveNetwork({}, [])
    skel = skeletonize(mask)
    halfwidth = ndimage.distance_transform_edt(mask)
    res = state.grid_resolution
    cell_mm = 1.0 / res

    h, w = skel.shape
    ys, xs = np.nonzero(skel)
    pix = set(zip(ys.tolist(), xs.tolist()))

    # Anchor electrodes exactly like the flood-fill oracle: a mask component
    # belongs to an electrode iff it overlaps the electrode's contact zone
    # (footprint through moist agar). Skeleton pixels inside the zone take
    # the label; a touching component whose medial axis misses the zone
    # anchors through its skeleton pixel nearest the electrode centre.
    labels, _ = ndimage.label(mask, structure=np.ones((3, 3), dtype=np.int8))
    owner: dict[tuple[int, int], str] = {}
    for e in scene.electrodes:
        zone = contact_mask(scene, e.id, (h, w), res)
        touched = {int(v) for v in np.unique(labels[zone]) if v != 0}
        if not touched:
            continue
        anchored: set[int] = set()
        for iy, ix in np.argwhere(zone & skel):
            p = (int(iy), int(ix))
            owner[p] = e.id
            anchored.add(int(labels[p]))
        for comp in sorted(touched - anchored):
            best = None
            cx = e.center[0] * res
            cy = e.center[1] * res
            for p in sorted(pix):
                if labels[p] != comp:
                    continue
                d = (p[1] + 0.5 - cx) ** 2 + (p[0] + 0.5 - cy) ** 2
                if best is None or d < best[0]:
                    best = (d, p)
            if best is not None:
                owner[best[1]] = e.id

    def degree(p):
        return sum((p[0] + dy, p[1] + dx) in pix for dy, dx in _NBRS)

    node_pixels = {p for p in pix if degree(p) != 2 or p in owner}
    if not node_pixels and pix:
        node_pixels = {min(pix)}  # pure cycle: anchor one junction

    # Assign node ids: electrode pixels collapse onto the electrode label.
    node_id: dict[tuple[int, int], str] = {}
    counter = 0
    for p in sorted(node_pixels):
        if p in owner:
            node_id[p] = owner[p]
        else:
            node_id[p] = f"j{counter}"
            counter += 1

    nodes: dict[str, tuple[float, float]] = {}
    for e in scene.electrodes:
        if any(owner.get(p) == e.id for p in node_pixels):
            nodes[e.id] = e.center
    for p, nid in node_id.items():
        if not nid.startswith("j"):
            continue
        nodes.setdefault(nid, ((p[1] + 0.5) * cell_mm, (p[0] + 0.5) * cell_mm))

    # Trace chains between node pixels.
    edges: list[NetworkEdge] = []
    seen_steps: set[tuple[tuple[int, int], tuple[int, int]]] = set()

    ref_tube_cond = 1.0 / calibration.tube_resistance_ohms

    def add_edge(na, nb, length, tsum, npix, wsum):
        if na == nb and length < cell_mm * 1.5:
            return  # degenerate in-footprint stub
        mean_t = tsum / max(npix, 1)
        mean_width = 2.0 * (wsum / max(npix, 1)) * cell_mm
        strands = max(1, int(round(mean_width / calibration.tube_width_mm)))
        g = ref_tube_cond * (mean_t / calibration.trail_cap) * (
            calibration.reference_gap_mm / max(length, cell_mm * 0.5)
        )
        for _ in range(strands):
            edges.append(NetworkEdge(na, nb, length, g, mean_t))

    for p in sorted(node_pixels):
        for dy, dx in _NBRS:
            q = (p[0] + dy, p[1] + dx)
            if q not in pix or (p, q) in seen_steps:
                continue
            seen_steps.add((p, q))
            length = math.hypot(dy, dx) * cell_mm
            tsum = state.trail[p] + state.trail[q]
            wsum = halfwidth[p] + halfwidth[q]
            npx = 2
            prev, cur = p, q
            while cur not in node_pixels:
                # Chain pixels have degree 2: exactly one neighbour != prev.
                nxt = None
                for dy2, dx2 in _NBRS:
                    cand = (cur[0] + dy2, cur[1] + dx2)
                    if cand != prev and cand in pix:
                        nxt = cand
                        break
                if nxt is None:
                    break
                length += math.hypot(cur[0] - nxt[0], cur[1] - nxt[1]) * cell_mm
                tsum += state.trail[nxt]
                wsum += halfwidth[nxt]
                npx += 1
                prev, cur = cur, nxt
            if cur in node_pixels:
                seen_steps.add((cur, prev))
                na, nb = node_id[p], node_id[cur]
                if na == nb and not na.startswith("j"):
                    # Wiggle inside one footprint: all one node, no edge.
                    if owner.get(p) == owner.get(cur):
                        continue
                add_edge(na, nb, length, tsum, npx, wsum)

    return ConductiveNetwork(nodes, edges)
