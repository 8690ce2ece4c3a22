"""Scalar stimulus fields over the dish grid.

Three fields drive the plasmodium: chemoattractant concentration (emitted
by oat-flake sources, diffusing and slowly decaying), per-LED irradiance
(inverse-square falloff with barrier shadowing, so switching a channel is
just summing precomputed grids), and agar moisture (exponential drying
toward the desiccation horizon; zero over bare plastic).

Grids are float64, shape (H, W), cell (iy, ix) covering the square
[ix, ix+1) x [iy, iy+1) / resolution in mm. All update operations are
pure old-state -> new-state transformations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .calibration import Calibration, DEFAULT_CALIBRATION
from .scene import Scene, segments_intersect

LIGHT_SOFTENING_MM = 18.0  # falloff(d) = 1 / (1 + (d/soft)^2), falloff(0) = 1


def grid_shape(scene: Scene, resolution: float) -> tuple[int, int]:
    n = int(math.ceil(scene.dish_diameter * resolution))
    return (n, n)


def cell_centers(scene: Scene, resolution: float) -> tuple[np.ndarray, np.ndarray]:
    h, w = grid_shape(scene, resolution)
    xs = (np.arange(w) + 0.5) / resolution
    ys = (np.arange(h) + 0.5) / resolution
    return np.meshgrid(xs, ys)


def phobia_weight(wavelength_nm: float, calibration: Calibration = DEFAULT_CALIBRATION) -> float:
    """Avoidance weight for a wavelength: linear interpolation between the
    calibrated anchors, clamped to the nearest anchor outside their range."""
    if wavelength_nm <= 0:
        raise ValueError("wavelength must be positive")
    return calibration.phobia_weight_of(wavelength_nm)


@dataclass
class StimulusFields:
    grid_resolution: float
    attractant: np.ndarray
    irradiance: dict[str, np.ndarray]  # led id -> grid
    moisture: np.ndarray
    agar_mask: np.ndarray  # bool, True over agar
    source_cells: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    source_rates: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def shape(self) -> tuple[int, int]:
        return self.attractant.shape

    def copy(self) -> "StimulusFields":
        return StimulusFields(
            self.grid_resolution,
            self.attractant.copy(),
            {k: v.copy() for k, v in self.irradiance.items()},
            self.moisture.copy(),
            self.agar_mask.copy(),
            self.source_cells.copy(),
            self.source_rates.copy(),
        )

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        h, w = self.shape
        ix = min(max(int(x * self.grid_resolution), 0), w - 1)
        iy = min(max(int(y * self.grid_resolution), 0), h - 1)
        return iy, ix

    def combined_repulsion(
        self,
        scene: Scene,
        led_states: dict[str, int],
        calibration: Calibration = DEFAULT_CALIBRATION,
    ) -> np.ndarray:
        """Sum over lit LEDs of phobia_weight(wavelength) * irradiance."""
        total = np.zeros(self.shape)
        for led in scene.leds:
            if led_states.get(led.channel, 0):
                total += phobia_weight(led.wavelength_nm, calibration) * self.irradiance[led.id]
        return total

    def to_text(self, which: str = "attractant") -> str:
        grid = {
            "attractant": self.attractant,
            "moisture": self.moisture,
        }.get(which)
        if grid is None:
            grid = self.irradiance[which]
        return "\n".join(" ".join(repr(v) for v in row) for row in grid.tolist())


def _agar_mask(scene: Scene, resolution: float) -> np.ndarray:
    gx, gy = cell_centers(scene, resolution)
    mask = np.zeros(gx.shape, dtype=bool)
    for blob in scene.agar_blobs:
        mask |= (gx - blob.center[0]) ** 2 + (gy - blob.center[1]) ** 2 <= blob.radius**2
    return mask


def initial_fields(
    scene: Scene,
    led_states: dict[str, int] | None = None,
    calibration: Calibration = DEFAULT_CALIBRATION,
) -> StimulusFields:
    """Fields at tick 0: moisture 1.0 over agar, an already-smelled Gaussian
    plume of mass attractant_initial_mass around each source, irradiance for
    the given LED states."""
    res = calibration.grid_resolution
    h, w = grid_shape(scene, res)
    gx, gy = cell_centers(scene, res)

    attr = np.zeros((h, w))
    cells = []
    rates = []
    sigma = calibration.attractant_initial_sigma_mm
    src_r = calibration.attractant_source_radius_mm
    for src in scene.attractants:
        d2 = (gx - src.center[0]) ** 2 + (gy - src.center[1]) ** 2
        bump = np.exp(-d2 / (2.0 * sigma * sigma))
        s = bump.sum()
        if s > 0:
            attr += bump * (calibration.attractant_initial_mass / s)
        # An oat flake has extent: emission spreads over the flake disc.
        disc = np.argwhere(d2 <= src_r * src_r)
        if disc.shape[0] == 0:
            iy = min(max(int(src.center[1] * res), 0), h - 1)
            ix = min(max(int(src.center[0] * res), 0), w - 1)
            disc = np.array([[iy, ix]])
        share = src.strength * calibration.attractant_emission / disc.shape[0]
        for iy, ix in disc:
            cells.append((iy, ix))
            rates.append(share)

    mask = _agar_mask(scene, res)
    moist = np.zeros((h, w))
    for blob in scene.agar_blobs:
        sel = (gx - blob.center[0]) ** 2 + (gy - blob.center[1]) ** 2 <= blob.radius**2
        moist[sel] = np.maximum(moist[sel], blob.initial_moisture)

    f = StimulusFields(
        grid_resolution=res,
        attractant=attr,
        irradiance={},
        moisture=moist,
        agar_mask=mask,
        source_cells=np.array(cells, dtype=np.int64).reshape(-1, 2),
        source_rates=np.array(rates),
    )
    f.irradiance = compute_irradiance(scene, led_states or {}, res)
    return f


def _laplacian_no_flux(a: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """5-point Laplacian with zero-flux (reflecting) edges: total mass is
    conserved exactly up to float rounding. Out-of-grid neighbours are
    replaced by the cell's own value."""
    if out is None:
        out = np.empty_like(a)
    np.multiply(a, -4.0, out=out)
    out[1:, :] += a[:-1, :]
    out[0, :] += a[0, :]
    out[:-1, :] += a[1:, :]
    out[-1, :] += a[-1, :]
    out[:, 1:] += a[:, :-1]
    out[:, 0] += a[:, 0]
    out[:, :-1] += a[:, 1:]
    out[:, -1] += a[:, -1]
    return out


def diffuse_attractant(
    fields: StimulusFields,
    scene: Scene,
    dt: int,
    calibration: Calibration = DEFAULT_CALIBRATION,
) -> StimulusFields:
    """Advance the attractant field dt ticks: explicit diffusion with the
    stability-capped coefficient, uniform decay, then source emission. The
    per-tick order (diffuse, decay, emit) is fixed so independent oracles
    can reproduce it exactly."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    alpha = min(calibration.attractant_diffusion_alpha, 0.25)
    lam = calibration.attractant_decay
    out = fields.copy()
    a = out.attractant
    scratch = np.empty_like(a)
    for _ in range(int(dt)):
        lap = _laplacian_no_flux(a, scratch)
        np.multiply(lap, alpha, out=lap)
        lap += a
        np.multiply(lap, 1.0 - lam, out=lap)
        a, scratch = lap, a
        for (iy, ix), rate in zip(out.source_cells, out.source_rates):
            a[iy, ix] += rate
    out.attractant = a
    return out


def compute_irradiance(
    scene: Scene,
    led_states: dict[str, int],
    resolution: float = DEFAULT_CALIBRATION.grid_resolution,
) -> dict[str, np.ndarray]:
    """Per-LED irradiance grids. An LED whose channel is off (or absent from
    led_states) contributes the zero grid; a lit LED contributes
    luminosity * falloff(distance) * product of barrier transmissions along
    the straight LED-to-cell ray."""
    h, w = grid_shape(scene, resolution)
    gx, gy = cell_centers(scene, resolution)
    out: dict[str, np.ndarray] = {}
    for led in scene.leds:
        if not led_states.get(led.channel, 0):
            out[led.id] = np.zeros((h, w))
            continue
        d2 = (gx - led.position[0]) ** 2 + (gy - led.position[1]) ** 2
        grid = led.luminosity_mcd / (1.0 + d2 / (LIGHT_SOFTENING_MM**2))
        for bar in scene.barriers:
            if bar.light_transmission >= 1.0:
                continue
            crossed = _ray_crosses_segment(
                led.position, gx, gy, bar.segment[0], bar.segment[1]
            )
            grid = np.where(crossed, grid * bar.light_transmission, grid)
        out[led.id] = grid
    return out


def _ray_crosses_segment(origin, gx, gy, q1, q2) -> np.ndarray:
    """Vectorized: does the segment origin->(gx, gy) cross segment q1-q2?"""
    ox, oy = origin
    qx1, qy1 = q1
    qx2, qy2 = q2
    d1 = (qx2 - qx1) * (oy - qy1) - (qy2 - qy1) * (ox - qx1)
    d2 = (qx2 - qx1) * (gy - qy1) - (qy2 - qy1) * (gx - qx1)
    d3 = (gx - ox) * (qy1 - oy) - (gy - oy) * (qx1 - ox)
    d4 = (gx - ox) * (qy2 - oy) - (gy - oy) * (qx2 - ox)
    return ((d1 * d2) < 0) & ((d3 * d4) < 0)


def irradiance_oracle(scene: Scene, led, x: float, y: float) -> float:
    """Scalar brute-force irradiance at one point for one lit LED, using the
    shared exact segment-intersection predicate. Kept independent of the
    vectorized path so the two can cross-check each other."""
    d2 = (x - led.position[0]) ** 2 + (y - led.position[1]) ** 2
    value = led.luminosity_mcd / (1.0 + d2 / (LIGHT_SOFTENING_MM**2))
    for bar in scene.barriers:
        if bar.light_transmission >= 1.0:
            continue
        if segments_intersect(led.position, (x, y), bar.segment[0], bar.segment[1]):
            value *= bar.light_transmission
    return value


def desiccate(
    fields: StimulusFields,
    scene: Scene,
    dt: int,
    calibration: Calibration = DEFAULT_CALIBRATION,
) -> StimulusFields:
    """Dry the agar: moisture decays exponentially, tuned so it crosses the
    viability threshold strictly before the configured horizon (scaled by
    blob volume). Bare plastic stays at zero."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    out = fields.copy()
    res = fields.grid_resolution
    gx, gy = cell_centers(scene, res)
    for blob in scene.agar_blobs:
        f = calibration.moisture_decay_per_tick(scene.time_scale, blob.volume_ml)
        sel = (gx - blob.center[0]) ** 2 + (gy - blob.center[1]) ** 2 <= blob.radius**2
        out.moisture[sel] *= f ** int(dt)
    return out
