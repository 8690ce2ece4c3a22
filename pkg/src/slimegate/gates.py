"""Gate harnesses and the gate-run state machine.

A GateHarness binds a scene to logical input channels, an output circuit
and a tick budget. GateRun drives one live simulation: inoculation on the
source electrode, field evolution on a fixed cadence, batched agent
stepping, a debounced completion check (stable tube connectivity between
the source and any target), desiccation failure, and input changes that
trigger withdrawal from newly lit colonized electrodes.

Completion is electrical: when the thresholded trail first 8-connects the
source footprint to a target footprint and stays connected for the hold
window, the network is extracted, its two-terminal resistance read through
the divider, and the run concludes at logic 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import plasmodium as pm
from .calibration import Calibration, DEFAULT_CALIBRATION, TICKS_PER_DAY
from .circuit import OutputReading, count_tubules, path_resistance, read_output, with_tubules
from .fields import StimulusFields, compute_irradiance, diffuse_attractant, initial_fields
from .plasmodium import Arena, PlasmodiumState, StateError
from .scene import Scene, pnand_scene, pnot_scene, validate_scene

FIELD_PERIOD = 16  # ticks between field refreshes, fixed so batching cannot
                   # change results
DEFAULT_BUDGET_TICKS = 8640  # six simulated days at one minute per tick
DEFAULT_RESET_WINDOW_TICKS = 2880
DEFAULT_SUPPLY_V = 9.0
DEFAULT_LOAD_OHM = 10_000.0
DEFAULT_LOGIC_THRESHOLD_V = 0.5

PNOT = "PNOT"
PNAND = "PNAND"

IDEAL_TABLES = {
    PNOT: {(0,): 1, (1,): 0},
    PNAND: {(0, 0): 1, (0, 1): 1, (1, 0): 1, (1, 1): 0},
}


class InputsError(ValueError):
    """Inputs map does not cover the harness channels."""


@dataclass(frozen=True)
class GateHarness:
    scene: Scene
    gate_kind: str
    inputs: dict  # logical input name -> LED channel
    source_electrode: str
    target_electrodes: tuple
    target_channels: dict  # target electrode id -> channel lighting it
    supply_voltage: float = DEFAULT_SUPPLY_V
    load_ohm: float = DEFAULT_LOAD_OHM
    logic_threshold: float = DEFAULT_LOGIC_THRESHOLD_V
    budget: int = DEFAULT_BUDGET_TICKS

    def channels(self) -> tuple:
        return tuple(sorted(self.inputs.values()))

    def normalize_inputs(self, inputs: dict) -> dict:
        got = set(inputs)
        want = set(self.inputs)
        if got != want:
            raise InputsError(f"inputs must cover exactly {sorted(want)}, got {sorted(got)}")
        return {self.inputs[k]: int(v) for k, v in inputs.items()}


@dataclass(frozen=True)
class GateOutcome:
    logic_output: int
    completed: bool
    failed: bool
    propagation_delay: int | None
    final_reading: OutputReading
    trace: tuple  # ((tick, event), ...)
    completed_target: str | None = None
    end_tick: int = 0


def build_pnot(
    gap: float = 10.0,
    supply: float = DEFAULT_SUPPLY_V,
    luminosity: float | None = None,
    budget: int = DEFAULT_BUDGET_TICKS,
    calibration: Calibration = DEFAULT_CALIBRATION,
) -> GateHarness:
    if gap <= 0:
        raise ValueError("gap must be positive")
    scene = pnot_scene(gap=gap, luminosity=luminosity or 800.0)
    harness = GateHarness(
        scene=scene,
        gate_kind=PNOT,
        inputs={"A": "A"},
        source_electrode="X",
        target_electrodes=("Y",),
        target_channels={"Y": "A"},
        supply_voltage=supply,
        budget=budget,
    )
    _check_harness(harness)
    return harness


def build_pnand(
    gap: float = 10.0,
    supply: float = DEFAULT_SUPPLY_V,
    luminosity: float | None = None,
    budget: int = DEFAULT_BUDGET_TICKS,
    calibration: Calibration = DEFAULT_CALIBRATION,
) -> GateHarness:
    if gap <= 0:
        raise ValueError("gap must be positive")
    scene = pnand_scene(gap=gap, luminosity=luminosity or 800.0)
    harness = GateHarness(
        scene=scene,
        gate_kind=PNAND,
        inputs={"A": "A", "B": "B"},
        source_electrode="X",
        target_electrodes=("Y", "Z"),
        target_channels={"Y": "A", "Z": "B"},
        supply_voltage=supply,
        budget=budget,
    )
    _check_harness(harness)
    return harness


def _check_harness(h: GateHarness) -> None:
    violations = validate_scene(h.scene)
    if violations:
        raise ValueError("invalid scene: " + "; ".join(map(str, violations)))
    scene_channels = {led.channel for led in h.scene.leds}
    for ch in h.inputs.values():
        if ch not in scene_channels:
            raise ValueError(f"input channel {ch!r} has no LED in the scene")
    if h.gate_kind == PNAND:
        if len(h.target_electrodes) != 2:
            raise ValueError("PNAND needs two targets")
        ys = [h.scene.electrode(t).center[0] for t in h.target_electrodes]
        lo, hi = min(ys), max(ys)
        between = [
            b
            for b in h.scene.barriers
            if b.light_transmission < 1.0
            and lo < (b.segment[0][0] + b.segment[1][0]) / 2.0 < hi
        ]
        if not between:
            raise ValueError("PNAND targets must be separated by a light barrier")
    elif len(h.target_electrodes) != 1:
        raise ValueError("PNOT has exactly one target")


class GateRun:
    """One live gate simulation with mutable inputs.

    The field refresh happens at fixed tick multiples of FIELD_PERIOD, so a
    run advanced in any batch pattern (CLI, campaign, interactive session)
    produces identical results for the same seed and input schedule.
    """

    def __init__(
        self,
        harness: GateHarness,
        inputs: dict,
        seed: int,
        calibration: Calibration = DEFAULT_CALIBRATION,
    ):
        self.harness = harness
        self.calibration = calibration
        self.seed = seed
        self.scene = harness.scene
        self.arena = Arena.from_scene(self.scene, calibration)
        self.tick = 0
        self.events: list = []
        self.led_states: dict = {}
        self._moist_factor = calibration.moisture_decay_per_tick(
            self.scene.time_scale, self.scene.agar_blobs[0].volume_ml
        )
        self.overvoltage = harness.supply_voltage > calibration.overvoltage_threshold_volts

        self.state = pm.inoculate(
            self.scene, harness.source_electrode, calibration.population, seed, calibration
        )
        self.state.overvoltage = self.overvoltage
        self.fields = initial_fields(self.scene, {}, calibration)
        self._moist_base = self.fields.moisture.copy()
        self._repulsion = None
        self._streak = 0
        self._streak_start: int | None = None
        self._connected_target: str | None = None
        self._trace_seen = len(self.state.trace)
        self._contacts: dict = {}

        # Current operation window.
        self.window_start = 0
        self.window_end = harness.budget
        self.outcome: GateOutcome | None = None
        self._concluded = False
        self._ever_completed = False

        self.apply_inputs(inputs, initial=True)

    # -- input handling -----------------------------------------------------

    def apply_inputs(self, inputs: dict, initial: bool = False) -> None:
        """Latch a new input map at the current tick. Newly lit colonized
        targets trigger withdrawal; with every target dark the swarm commits
        to one side on a fair coin from the seed stream."""
        led_states = self.harness.normalize_inputs(inputs)
        previous = dict(self.led_states)
        if self._ever_completed:
            # Reprogramming a fed organism: mobilized, not reluctant.
            self.state.activated = True
        self.led_states = led_states
        self.fields.led_states = led_states
        self.fields.irradiance = compute_irradiance(
            self.scene, led_states, self.calibration.grid_resolution
        )
        self._repulsion = None
        self.events.append({"tick": self.tick, "event": "inputs", "inputs": dict(led_states)})

        dark = self._dark_targets()
        if self.harness.gate_kind == PNAND and len(dark) == len(self.harness.target_electrodes):
            available = [t for t in dark if t not in self.state.withdrawn_electrodes]
            if len(available) == 1:
                t = available[0]
                cx = self.scene.electrode(t).center[0]
                self.state.commit_sign = 1.0 if cx > self.scene.center[0] else -1.0
            else:
                from ._kernels import rng_uniform

                coin = rng_uniform(self.state.rng_state)
                t = sorted(dark)[0 if coin < 0.5 else 1]
                cx = self.scene.electrode(t).center[0]
                self.state.commit_sign = 1.0 if cx > self.scene.center[0] else -1.0
                self.events.append({"tick": self.tick, "event": "commit", "target": t})
        else:
            self.state.commit_sign = 0.0

        if not initial and not self.state.terminal:
            for t in self.harness.target_electrodes:
                ch = self.harness.target_channels[t]
                if led_states.get(ch, 0) and not previous.get(ch, 0):
                    blob = self.scene.blob_on(t)
                    occ = self.state.occupancy(blob.center[0], blob.center[1], blob.radius)
                    if occ > pm.WITHDRAWAL_DONE_FRACTION:
                        self.state = pm.trigger_withdrawal(
                            self.state,
                            self.fields,
                            (blob.center[0], blob.center[1], blob.radius),
                            self.calibration,
                            electrode_id=t,
                        )
                        self.events.append(
                            {"tick": self.tick, "event": "withdrawal_start", "target": t}
                        )
        self._streak = 0
        self._streak_start = None

    def _dark_targets(self) -> list:
        out = []
        for t in self.harness.target_electrodes:
            ch = self.harness.target_channels[t]
            if not self.led_states.get(ch, 0):
                out.append(t)
        return out

    # -- simulation ---------------------------------------------------------

    def repulsion_grid(self) -> np.ndarray:
        if self._repulsion is None:
            self._repulsion = self.fields.combined_repulsion(
                self.scene, self.led_states, self.calibration
            )
        return self._repulsion

    def _refresh_fields(self, dt: int) -> None:
        self.fields = diffuse_attractant(self.fields, self.scene, dt, self.calibration)
        self.fields.led_states = self.led_states
        level = self._moist_factor**self.tick
        self.fields.moisture = self._moist_base * level
        self._repulsion = None  # irradiance unchanged, but keep the hook simple

    def _source_moisture(self) -> float:
        iy, ix = self.fields.cell_of(*self.state.source_blob.center)
        return float(self.fields.moisture[iy, ix])

    def _contact(self, electrode_id: str) -> np.ndarray:
        cached = self._contacts.get(electrode_id)
        if cached is None:
            cached = pm.contact_mask(
                self.scene, electrode_id, self.state.trail.shape, self.calibration.grid_resolution
            )
            self._contacts[electrode_id] = cached
        return cached

    def _connected(self) -> str | None:
        thr = self.calibration.trail_threshold
        src = self._contact(self.harness.source_electrode)
        for t in self.harness.target_electrodes:
            contact = self._contact(t)
            # Exact early-out: no tube can reach a contact zone that has no
            # threshold-grade trail anywhere on it.
            if float(self.state.trail[contact].max(initial=0.0)) < thr:
                continue
            if pm.thresholded_connectivity(self.state.trail, src, contact, thr):
                return t
        return None

    def _step(self, dt: int) -> None:
        self.state = pm.step(
            self.state,
            self.fields,
            self.scene,
            dt,
            self.calibration,
            self.arena,
            self.repulsion_grid(),
        )
        self.tick += dt

    def _sync_mode_events(self) -> None:
        for t, m in self.state.trace[self._trace_seen:]:
            self.events.append({"tick": t, "event": "mode", "mode": m})
        self._trace_seen = len(self.state.trace)

    def advance(self, ticks: int) -> None:
        """Advance up to `ticks`, stopping early if the current operation
        window concludes. Splitting a run into any pattern of advance calls
        yields identical results: field refreshes are pinned to fixed tick
        boundaries, not to call boundaries."""
        if self._concluded:
            return
        target_tick = min(self.tick + int(ticks), self.window_end)
        if self.tick >= self.window_end:
            self._conclude()
            return
        while self.tick < target_tick and not self._concluded:
            boundary = ((self.tick // FIELD_PERIOD) + 1) * FIELD_PERIOD
            sub = min(target_tick, boundary)
            while self.tick < sub and not self.state.terminal:
                if self._streak_start is not None:
                    # Confirming a candidate completion: tick-by-tick until
                    # the connection has held for the full debounce window.
                    self._step(1)
                    if self._connected() is None:
                        self._streak = 0
                        self._streak_start = None
                        self.events.append({"tick": self.tick, "event": "disconnected"})
                    else:
                        self._streak += 1
                        if self._streak >= self.calibration.completion_hold_ticks:
                            break
                else:
                    self._step(sub - self.tick)
            if self.tick % FIELD_PERIOD == 0:
                self._refresh_fields(FIELD_PERIOD)
            self._sync_mode_events()
            if self.state.terminal:
                self._conclude(terminal=True)
                return
            if self._streak_start is None and self.state.mode != pm.MODE_WITHDRAWING:
                t = self._connected()
                if t is not None:
                    self._connected_target = t
                    self._streak = 1
                    self._streak_start = self.tick
                    self.events.append({"tick": self.tick, "event": "connected", "target": t})
            if self._streak >= self.calibration.completion_hold_ticks:
                self._settle()
                self._conclude(completed=True)
                return
            # Desiccation only dooms a colony that never migrated: once an
            # operation completed, the organism has fed and sustains itself.
            if (
                not self._ever_completed
                and self._source_moisture() < self.calibration.viability_threshold
            ):
                self._conclude(desiccated=True)
                return
            if self.tick >= self.window_end:
                self._conclude()
                return

    def _settle(self) -> None:
        """Let the bridged network consolidate briefly before it is read:
        the recorded delay is the completion tick, but the extracted
        morphology reflects the settled state (overvoltage braiding forms
        here)."""
        end = self.tick + self.calibration.settlement_ticks
        while self.tick < end and not self.state.terminal:
            boundary = ((self.tick // FIELD_PERIOD) + 1) * FIELD_PERIOD
            sub = min(end, boundary)
            if sub > self.tick:
                self._step(sub - self.tick)
            if self.tick % FIELD_PERIOD == 0:
                self._refresh_fields(FIELD_PERIOD)
        self._sync_mode_events()

    def _conclude(
        self, completed: bool = False, desiccated: bool = False, terminal: bool = False
    ) -> None:
        # A run only counts as failed when migration was expected: some dark
        # target existed that the plasmodium had not already withdrawn from.
        reachable = [
            t for t in self._dark_targets() if t not in self.state.withdrawn_electrodes
        ]
        failed = (not completed) and bool(reachable)
        target = self._connected_target or self.harness.target_electrodes[0]
        network = pm.extract_network(
            self.state, self.scene, self.calibration.trail_threshold, self.calibration
        )
        resistance = path_resistance(
            network, self.scene, self.harness.source_electrode, target
        )
        reading = read_output(
            resistance,
            self.harness.supply_voltage,
            self.harness.load_ohm,
            self.harness.logic_threshold,
        )
        tubules = count_tubules(network, self.harness.source_electrode, target)
        reading = with_tubules(reading, tubules)
        if completed:
            delay = self._streak_start - self.window_start
        else:
            delay = None
        reason = (
            "completed"
            if completed
            else "terminal"
            if terminal
            else "desiccated"
            if desiccated
            else "window_end"
        )
        self.events.append({"tick": self.tick, "event": "conclude", "reason": reason})
        if completed:
            self._ever_completed = True
        self.outcome = GateOutcome(
            logic_output=reading.logic_level,
            completed=completed,
            failed=failed,
            propagation_delay=delay,
            final_reading=reading,
            trace=tuple((e["tick"], e["event"]) for e in self.events),
            completed_target=self._connected_target if completed else None,
            end_tick=self.tick,
        )
        self._concluded = True

    def run_to_end(self) -> GateOutcome:
        while not self._concluded:
            self.advance(max(self.window_end - self.tick, 1))
        return self.outcome

    # -- reprogramming --------------------------------------------------------

    def reset(
        self,
        new_inputs: dict,
        window: int | None = None,
    ) -> GateOutcome:
        """Apply new inputs to a concluded run and carry out the next
        operation: withdrawal from newly lit electrodes, then re-migration
        where a dark target remains. Raises StateError for failed or
        terminal (sclerotized/fragmented) runs."""
        if not self._concluded or self.outcome is None:
            raise StateError("cannot reset a run that is still in flight")
        if self.state.terminal:
            raise StateError(f"cannot reset a {self.state.mode} plasmodium")
        if self.outcome.failed:
            raise StateError("cannot reset a failed run")
        self._concluded = False
        self.outcome = None
        self._streak = 0
        self._streak_start = None
        self._connected_target = None
        self.window_start = self.tick
        self.window_end = self.tick + (window or DEFAULT_RESET_WINDOW_TICKS)
        self.apply_inputs(new_inputs)
        return self.run_to_end()

    # -- introspection --------------------------------------------------------

    def reading(self) -> OutputReading:
        """Instantaneous output reading from the current trail network."""
        network = pm.extract_network(
            self.state, self.scene, self.calibration.trail_threshold, self.calibration
        )
        best: OutputReading | None = None
        for t in self.harness.target_electrodes:
            r = path_resistance(network, self.scene, self.harness.source_electrode, t)
            reading = read_output(
                r, self.harness.supply_voltage, self.harness.load_ohm, self.harness.logic_threshold
            )
            reading = with_tubules(
                reading, count_tubules(network, self.harness.source_electrode, t)
            )
            if best is None or reading.output_voltage > best.output_voltage:
                best = reading
        return best

    def snapshot(self, max_cells: int = 128) -> dict:
        reading = self.reading()
        trail = self.state.trail
        h, w = trail.shape
        stride = max(1, int(math.ceil(max(h, w) / max_cells)))
        ds = trail[::stride, ::stride]
        return {
            "tick": self.tick,
            "mode": self.state.mode,
            "inputs": dict(self.led_states),
            "output": {
                "voltage": round(reading.output_voltage, 6),
                "logic": reading.logic_level,
            },
            "grid": {
                "w": ds.shape[1],
                "h": ds.shape[0],
                "cells": [round(float(v), 3) for v in ds.ravel().tolist()],
            },
        }


def run_gate(
    harness: GateHarness,
    inputs: dict,
    seed: int,
    calibration: Calibration = DEFAULT_CALIBRATION,
) -> GateOutcome:
    return start_run(harness, inputs, seed, calibration).run_to_end()


def start_run(
    harness: GateHarness,
    inputs: dict,
    seed: int,
    calibration: Calibration = DEFAULT_CALIBRATION,
) -> GateRun:
    return GateRun(harness, inputs, seed, calibration)


def reset_gate(run: GateRun, new_inputs: dict, window: int | None = None) -> GateOutcome:
    return run.reset(new_inputs, window)


# ---------------------------------------------------------------------------
# Truth tables


@dataclass(frozen=True)
class TruthRow:
    inputs: tuple  # bits ordered by sorted logical input name
    ideal: int
    trials: int
    successes: int
    delays: tuple

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    @property
    def median_delay(self) -> float | None:
        if not self.delays:
            return None
        return float(np.median(np.asarray(self.delays)))


@dataclass(frozen=True)
class TruthTable:
    gate_kind: str
    rows: tuple


def derived_seed(base_seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])


def truth_table(
    harness: GateHarness,
    trials: int,
    seed: int,
    calibration: Calibration = DEFAULT_CALIBRATION,
    collect=None,
) -> TruthTable:
    """Run every input combination `trials` times with derived seeds and
    score each row against the ideal Boolean table."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    names = sorted(harness.inputs)
    ideal_table = IDEAL_TABLES[harness.gate_kind]
    rows = []
    for r, bits in enumerate(sorted(ideal_table)):
        ideal = ideal_table[bits]
        inputs = dict(zip(names, bits))
        successes = 0
        delays = []
        for t in range(trials):
            outcome = run_gate(
                harness, inputs, derived_seed(seed, r, t), calibration
            )
            if outcome.logic_output == ideal:
                successes += 1
            if outcome.completed:
                delays.append(outcome.propagation_delay)
            if collect is not None:
                collect(bits, t, outcome)
        rows.append(TruthRow(bits, ideal, trials, successes, tuple(delays)))
    return TruthTable(harness.gate_kind, tuple(rows))


# ---------------------------------------------------------------------------
# Cascade estimation


@dataclass(frozen=True)
class CascadeEstimate:
    gate_count: int
    area_m2: float
    critical_path_delay_ticks: float
    depth: int


DEFAULT_BENCH_MARGIN_MM = 175.0  # breadboard + supply around each dish
DEFAULT_MEDIAN_GATE_DELAY_TICKS = 2.0 * TICKS_PER_DAY


def parse_netlist(text: str) -> tuple[dict, list]:
    """Parse the `input/output/nand` netlist format. Returns (gates, inputs)
    where gates maps output net -> (in1, in2)."""
    gates: dict[str, tuple[str, str]] = {}
    inputs: list[str] = []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "input" and len(parts) == 2:
            inputs.append(parts[1])
        elif parts[0] == "output" and len(parts) == 2:
            continue
        elif parts[0] == "nand" and len(parts) == 4:
            out, a, b = parts[1:]
            if out in gates:
                raise ValueError(f"line {n}: net {out!r} driven twice")
            gates[out] = (a, b)
        else:
            raise ValueError(f"line {n}: expected 'input <net>', 'output <net>' "
                             f"or 'nand <out> <in1> <in2>', got {line!r}")
    return gates, inputs


def estimate_cascade(
    netlist: str,
    dish_diameter_mm: float = 90.0,
    bench_margin_mm: float = DEFAULT_BENCH_MARGIN_MM,
    median_gate_delay_ticks: float = DEFAULT_MEDIAN_GATE_DELAY_TICKS,
) -> CascadeEstimate:
    """Pure arithmetic: bench area for a NAND-only netlist at the given dish
    size, and critical-path delay as depth times the median single-gate
    delay. Rejects cyclic netlists."""
    gates, inputs = parse_netlist(netlist)
    if not gates:
        return CascadeEstimate(0, 0.0, 0.0, 0)

    depth_of: dict[str, int] = {name: 0 for name in inputs}
    visiting: set[str] = set()

    def depth(net: str) -> int:
        if net in depth_of:
            return depth_of[net]
        if net not in gates:
            depth_of[net] = 0  # undeclared nets count as primary inputs
            return 0
        if net in visiting:
            raise ValueError(f"netlist is cyclic through {net!r}")
        visiting.add(net)
        a, b = gates[net]
        d = 1 + max(depth(a), depth(b))
        visiting.discard(net)
        depth_of[net] = d
        return d

    max_depth = max(depth(net) for net in gates)
    side_m = (dish_diameter_mm + bench_margin_mm) / 1000.0
    area = len(gates) * side_m * side_m
    return CascadeEstimate(
        gate_count=len(gates),
        area_m2=area,
        critical_path_delay_ticks=max_depth * median_gate_delay_ticks,
        depth=max_depth,
    )


HALF_ADDER_NETLIST = """\
# one-bit half adder, seven two-input NAND gates
input a
input b
output sum
output carry
nand ia a a
nand ib b b
nand t1 a ib
nand t2 ia b
nand sum t1 t2
nand nab a b
nand carry nab nab
"""
