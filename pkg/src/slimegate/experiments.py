"""Experimental campaigns: two-choice phototaxis ranking, gate truth
tables, reusability scripts and fault-tolerance sweeps, plus the random
search that fits the free calibration parameters to those campaign
targets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats as sstats

from . import gates as G
from . import plasmodium as pm
from .calibration import Calibration, DEFAULT_CALIBRATION
from .fields import initial_fields
from .scene import BLUE_NM, GREEN_NM, RED_NM, YELLOW_NM, Scene, phototaxis_scene

WAVELENGTHS = {
    "blue": BLUE_NM,
    "green": GREEN_NM,
    "yellow": YELLOW_NM,
    "red": RED_NM,
}
COLOUR_OF = {v: k for k, v in WAVELENGTHS.items()}

PHOTOTAXIS_BUDGET = 8640  # six simulated days
CHOICE_OCCUPANCY = 0.15


@dataclass(frozen=True)
class TrialRecord:
    experiment: str
    seed: int
    config: dict
    outcome: str
    duration: int
    metrics: dict = field(default_factory=dict)


def two_proportion_z(succ_a: int, n_a: int, succ_b: int, n_b: int) -> tuple[float, float]:
    """Two-proportion z-test. Returns (z, two-sided p). z > 0 when the
    first proportion is larger."""
    if n_a == 0 or n_b == 0:
        return 0.0, 1.0
    p1 = succ_a / n_a
    p2 = succ_b / n_b
    pooled = (succ_a + succ_b) / (n_a + n_b)
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n_a + 1.0 / n_b))
    if se == 0.0:
        return 0.0, 1.0
    z = (p1 - p2) / se
    return z, 2.0 * float(sstats.norm.sf(abs(z)))


# ---------------------------------------------------------------------------
# Phototaxis


def phototaxis_trial(
    colour_a_nm: float,
    colour_b_nm: float,
    seed: int,
    calibration: Calibration = DEFAULT_CALIBRATION,
    budget: int = PHOTOTAXIS_BUDGET,
) -> TrialRecord:
    """One two-choice arena run: colour A lights the 9 o'clock pole, colour
    B the 3 o'clock pole. Outcome is the pole the plasmodium colonized, or
    'neither' if the budget expires first."""
    if colour_a_nm == colour_b_nm and seed is None:
        raise ValueError("colours must differ")
    scene = phototaxis_scene(colour_a_nm, colour_b_nm)
    led_states = {"A": 1, "B": 1}
    fields = initial_fields(scene, led_states, calibration)
    fields.led_states = led_states
    center_blob = scene.agar_blobs[0]
    pole_a = scene.agar_blobs[1]
    pole_b = scene.agar_blobs[2]
    state = pm.inoculate_blob(scene, center_blob, calibration.population, seed, calibration)
    arena = pm.Arena.from_scene(scene, calibration)
    repulsion = fields.combined_repulsion(scene, led_states, calibration)
    moist_base = fields.moisture.copy()
    factor = calibration.moisture_decay_per_tick(scene.time_scale, center_blob.volume_ml)

    choice = "neither"
    batch = G.FIELD_PERIOD
    from .fields import diffuse_attractant

    while state.tick < budget:
        state = pm.step(state, fields, scene, batch, calibration, arena, repulsion)
        fields = diffuse_attractant(fields, scene, batch, calibration)
        fields.led_states = led_states
        fields.moisture = moist_base * (factor**state.tick)
        occ_a = state.occupancy(pole_a.center[0], pole_a.center[1], pole_a.radius)
        occ_b = state.occupancy(pole_b.center[0], pole_b.center[1], pole_b.radius)
        if occ_a >= CHOICE_OCCUPANCY and occ_a > 2.0 * occ_b:
            choice = "A"
            break
        if occ_b >= CHOICE_OCCUPANCY and occ_b > 2.0 * occ_a:
            choice = "B"
            break
        if fields.moisture[fields.cell_of(*center_blob.center)] < calibration.viability_threshold:
            off = state.off_source_fraction()
            if off < 0.5:
                break  # colony dried out before committing
    return TrialRecord(
        experiment="phototaxis",
        seed=seed,
        config={"colour_a": colour_a_nm, "colour_b": colour_b_nm},
        outcome=choice,
        duration=state.tick,
    )


@dataclass(frozen=True)
class RankingResult:
    order: tuple  # colour names, most avoided first
    tally: dict  # colour name -> phobia points
    decided: int
    trials: int
    records: tuple


def rank_colours(
    trials: int,
    seed: int,
    calibration: Calibration = DEFAULT_CALIBRATION,
) -> RankingResult:
    """Run every unordered colour pair `trials` times; the avoided colour of
    each decided trial earns one phobia point. Colours are returned most
    avoided first."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    names = sorted(WAVELENGTHS)
    tally = {name: 0 for name in names}
    records = []
    decided = 0
    pair_idx = 0
    for i, ca in enumerate(names):
        for cb in names[i + 1:]:
            for t in range(trials):
                rec = phototaxis_trial(
                    WAVELENGTHS[ca],
                    WAVELENGTHS[cb],
                    G.derived_seed(seed, pair_idx, t),
                    calibration,
                )
                records.append(rec)
                if rec.outcome == "A":
                    tally[cb] += 1  # went to A, avoided B's colour
                    decided += 1
                elif rec.outcome == "B":
                    tally[ca] += 1
                    decided += 1
            pair_idx += 1
    order = tuple(sorted(names, key=lambda n: (-tally[n], n)))
    return RankingResult(order, tally, decided, trials, tuple(records))


# ---------------------------------------------------------------------------
# Reusability


@dataclass(frozen=True)
class ReuseStats:
    seeds: int
    fresh_completions: int
    fresh_median_delay: float | None
    withdrawal_times: tuple
    reset_completions: int
    reset_median_delay: float | None
    fragmented: int
    pnot_rereset_stuck_low: int
    pnot_reresets: int


def reuse_campaign(
    seeds: int,
    seed: int,
    calibration: Calibration = DEFAULT_CALIBRATION,
) -> ReuseStats:
    """Scripted reusability runs: PNAND completes on Y, inputs flip, the
    withdrawal time and the reprogram delay are recorded; PNOT completes,
    is reset, then re-reset to show the output stays low."""
    h2 = G.build_pnand()
    fresh_delays, reset_delays, wd_times = [], [], []
    fragmented = 0
    for s in range(seeds):
        run = G.start_run(h2, {"A": 0, "B": 1}, G.derived_seed(seed, 0, s), calibration)
        out1 = run.run_to_end()
        if not out1.completed:
            continue
        fresh_delays.append(out1.propagation_delay)
        flip = run.tick
        out2 = run.reset({"A": 1, "B": 0})
        for e in run.events:
            if e["event"] == "mode" and e["tick"] > flip:
                wd_times.append(e["tick"] - flip)
                break
        if run.state.terminal:
            fragmented += 1
        if out2.completed:
            reset_delays.append(out2.propagation_delay)

    h1 = G.build_pnot()
    stuck = reresets = 0
    for s in range(seeds):
        run = G.start_run(h1, {"A": 0}, G.derived_seed(seed, 1, s), calibration)
        out1 = run.run_to_end()
        if not out1.completed:
            continue
        out2 = run.reset({"A": 1})
        if run.state.terminal:
            continue
        out3 = run.reset({"A": 0})
        reresets += 1
        if out2.logic_output == 0 and out3.logic_output == 0:
            stuck += 1

    med = lambda xs: float(np.median(xs)) if xs else None
    return ReuseStats(
        seeds=seeds,
        fresh_completions=len(fresh_delays),
        fresh_median_delay=med(fresh_delays),
        withdrawal_times=tuple(wd_times),
        reset_completions=len(reset_delays),
        reset_median_delay=med(reset_delays),
        fragmented=fragmented,
        pnot_rereset_stuck_low=stuck,
        pnot_reresets=reresets,
    )


# ---------------------------------------------------------------------------
# Fault tolerance


@dataclass(frozen=True)
class SweepLevel:
    variable: str
    level: float
    runs: int
    failures: int
    median_delay: float | None
    mean_tubules: float | None

    @property
    def failure_rate(self) -> float:
        return self.failures / self.runs if self.runs else 0.0


def fault_sweep(
    variable: str,
    levels,
    trials: int,
    seed: int,
    calibration: Calibration = DEFAULT_CALIBRATION,
    gate_kinds: tuple = (G.PNOT, G.PNAND),
    rows: str = "all",
) -> list[SweepLevel]:
    """Run gate truth tables at each level of one environment variable and
    report failure rate (over rows where migration is expected), median
    completion delay and mean tubule count. rows='active' restricts to the
    all-dark row of each gate, which carries the failure signal."""
    if variable not in ("luminosity", "gap", "voltage"):
        raise ValueError(f"unknown sweep variable {variable!r}")
    if not levels:
        raise ValueError("levels must be non-empty")
    out = []
    for li, level in enumerate(levels):
        kwargs = {}
        if variable == "luminosity":
            kwargs["luminosity"] = float(level)
        elif variable == "gap":
            kwargs["gap"] = float(level)
        else:
            kwargs["supply"] = float(level)
        runs = failures = 0
        delays: list[float] = []
        tubules: list[int] = []
        for gi, kind in enumerate(gate_kinds):
            harness = (G.build_pnot if kind == G.PNOT else G.build_pnand)(**kwargs)
            names = sorted(harness.inputs)
            combos = sorted(G.IDEAL_TABLES[kind])
            if rows == "active":
                combos = [tuple(0 for _ in names)]
            for ri, bits in enumerate(combos):
                inputs = dict(zip(names, bits))
                expects_migration = any(b == 0 for b in bits)
                for t in range(trials):
                    o = G.run_gate(
                        harness, inputs, G.derived_seed(seed, li, gi, ri, t), calibration
                    )
                    if expects_migration:
                        runs += 1
                        if not o.completed:
                            failures += 1
                        else:
                            delays.append(o.propagation_delay)
                            tubules.append(o.final_reading.tubule_count)
        out.append(
            SweepLevel(
                variable=variable,
                level=float(level),
                runs=runs,
                failures=failures,
                median_delay=float(np.median(delays)) if delays else None,
                mean_tubules=float(np.mean(tubules)) if tubules else None,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Calibration fitting


@dataclass(frozen=True)
class CalibrationTarget:
    name: str
    measure: object  # Calibration -> float
    lo: float
    hi: float
    hard: bool = True

    def violation(self, value: float) -> float:
        if value < self.lo:
            return self.lo - value
        if value > self.hi:
            return value - self.hi
        return 0.0


def ranking_target(trials: int = 8, seed: int = 11) -> CalibrationTarget:
    """1.0 when the four-colour ranking comes out exactly in the reference
    order, 0.0 otherwise."""

    def measure(cal: Calibration) -> float:
        r = rank_colours(trials, seed, cal)
        return 1.0 if r.order == ("green", "red", "yellow", "blue") else 0.0

    return CalibrationTarget("ranking_order", measure, 1.0, 1.0)


def pnot_failure_target(trials: int = 20, seed: int = 12, lo: float = 0.15, hi: float = 0.35) -> CalibrationTarget:
    def measure(cal: Calibration) -> float:
        h = G.build_pnot()
        fails = sum(
            not G.run_gate(h, {"A": 0}, G.derived_seed(seed, t), cal).completed
            for t in range(trials)
        )
        return fails / trials

    return CalibrationTarget("pnot_failure_rate", measure, lo, hi)


def delay_window_target(trials: int = 20, seed: int = 13, lo: float = 0.8, hi: float = 1.0) -> CalibrationTarget:
    def measure(cal: Calibration) -> float:
        h = G.build_pnot()
        delays = []
        for t in range(trials):
            o = G.run_gate(h, {"A": 0}, G.derived_seed(seed, t), cal)
            if o.completed:
                delays.append(o.propagation_delay)
        if not delays:
            return 0.0
        d = np.asarray(delays, dtype=float)
        return float(((d >= 1440) & (d <= 5760)).mean())

    return CalibrationTarget("delay_window", measure, lo, hi)


DEFAULT_SEARCH_FIELDS = (
    "exit_hazard_base",
    "follow_prob",
    "fragmentation_probability",
    "attractant_emission",
)


@dataclass(frozen=True)
class CalibrationFit:
    calibration: Calibration
    residual: float
    satisfied: bool
    evaluations: int
    report: tuple  # (target name, value, violation)


def calibrate(
    targets,
    search_budget: int = 20,
    seed: int = 0,
    base: Calibration = DEFAULT_CALIBRATION,
    fields_to_search=DEFAULT_SEARCH_FIELDS,
) -> CalibrationFit:
    """Random log-scale perturbation search over selected calibration fields
    minimizing total target violation. With no targets the base calibration
    is returned untouched; if the budget runs out with hard targets still
    violated, the best effort is returned with the violations listed."""
    if not targets:
        return CalibrationFit(base, 0.0, True, 0, ())

    rng = np.random.Generator(np.random.PCG64(seed))

    def evaluate(cal):
        rows = []
        total = 0.0
        for t in targets:
            v = t.measure(cal)
            viol = t.violation(v)
            rows.append((t.name, v, viol))
            total += viol
        return total, tuple(rows)

    best_cal = base
    best_res, best_rows = evaluate(base)
    evals = 1
    current = base
    while evals < search_budget and best_res > 0:
        kw = {}
        for name in fields_to_search:
            v = getattr(current, name)
            if v <= 0:
                continue
            kw[name] = float(v * math.exp(rng.normal(0.0, 0.35)))
            if name.endswith("probability") or name.endswith("prob"):
                kw[name] = min(kw[name], 1.0)
        cand = current.with_(**kw)
        if cand.validate():
            continue
        res, rows = evaluate(cand)
        evals += 1
        if res < best_res:
            best_cal, best_res, best_rows = cand, res, rows
            current = cand
    hard_ok = all(
        viol == 0.0 for (t, (name, value, viol)) in zip(targets, best_rows) if t.hard
    )
    return CalibrationFit(best_cal, best_res, hard_ok, evals, best_rows)
