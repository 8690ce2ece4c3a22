"""Geometric model of the experimental arena.

A Scene is an immutable description of one Petri-dish setup: electrodes,
agar blobs, attractant sources, card barriers and lid-mounted LEDs, plus
the simulated-minutes-per-tick time scale. Builders for the standard
layouts (inverter dish, two-target dish, two-choice arena) live here so
every experiment starts from the same validated geometry.

Units: millimetres for lengths, nanometres for wavelengths, millicandela
for luminosity. Dish coordinates put the origin at the lower-left corner
of the bounding square, so the dish centre is at (diameter/2, diameter/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields as dc_fields

Point = tuple[float, float]

# Wavelengths (nm) of the four LED colours used throughout.
BLUE_NM = 466.0
GREEN_NM = 568.0
YELLOW_NM = 585.0
RED_NM = 626.0

DEFAULT_DISH_MM = 90.0
DEFAULT_BLOB_RESISTANCE_OHM = 18_000.0
DEFAULT_BARRIER_TRANSMISSION = 0.2
DEFAULT_LED_LUMINOSITY_MCD = 200.0

# 2 ml blob modelled as a hemisphere: r = (3V / 2pi)^(1/3), V in mm^3.
GATE_BLOB_RADIUS_MM = (3.0 * 2000.0 / (2.0 * math.pi)) ** (1.0 / 3.0)
# 2.5 cm square agar piece modelled as the equal-area disc.
SQUARE_BLOB_RADIUS_MM = math.sqrt(625.0 / math.pi)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle given by centre and size."""

    cx: float
    cy: float
    w: float
    h: float

    @property
    def x0(self) -> float:
        return self.cx - self.w / 2.0

    @property
    def x1(self) -> float:
        return self.cx + self.w / 2.0

    @property
    def y0(self) -> float:
        return self.cy - self.h / 2.0

    @property
    def y1(self) -> float:
        return self.cy + self.h / 2.0

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def corners(self) -> tuple[Point, ...]:
        return (
            (self.x0, self.y0),
            (self.x1, self.y0),
            (self.x1, self.y1),
            (self.x0, self.y1),
        )


@dataclass(frozen=True)
class Electrode:
    id: str
    center: Point
    footprint: Rect


@dataclass(frozen=True)
class AgarBlob:
    center: Point
    radius: float
    volume_ml: float = 2.0
    resistance_ohm: float = DEFAULT_BLOB_RESISTANCE_OHM
    initial_moisture: float = 1.0


@dataclass(frozen=True)
class AttractantSource:
    center: Point
    strength: float
    kind: str = "oat"


@dataclass(frozen=True)
class Barrier:
    """Card strip glued to the lid; light mostly blocked, a thin gap
    underneath lets the plasmodium crawl through."""

    segment: tuple[Point, Point]
    gap_height: float = 0.5
    light_transmission: float = DEFAULT_BARRIER_TRANSMISSION
    passable_by_plasmodium: bool = True


@dataclass(frozen=True)
class Led:
    id: str
    position: Point
    wavelength_nm: float
    luminosity_mcd: float = DEFAULT_LED_LUMINOSITY_MCD
    channel: str = "A"


@dataclass(frozen=True)
class Scene:
    dish_diameter: float = DEFAULT_DISH_MM
    electrodes: tuple[Electrode, ...] = ()
    agar_blobs: tuple[AgarBlob, ...] = ()
    attractants: tuple[AttractantSource, ...] = ()
    barriers: tuple[Barrier, ...] = ()
    leds: tuple[Led, ...] = ()
    time_scale: float = 1.0  # simulated minutes per tick

    @property
    def center(self) -> Point:
        return (self.dish_diameter / 2.0, self.dish_diameter / 2.0)

    @property
    def radius(self) -> float:
        return self.dish_diameter / 2.0

    def inside_dish(self, x: float, y: float) -> bool:
        cx, cy = self.center
        return (x - cx) ** 2 + (y - cy) ** 2 <= self.radius**2

    def electrode(self, electrode_id: str) -> Electrode:
        for e in self.electrodes:
            if e.id == electrode_id:
                return e
        raise KeyError(f"no electrode {electrode_id!r} in scene")

    def blob_on(self, electrode_id: str) -> AgarBlob | None:
        """The agar blob overlapping the named electrode, if any."""
        e = self.electrode(electrode_id)
        for blob in self.agar_blobs:
            if _circle_rect_overlap(blob.center, blob.radius, e.footprint):
                return blob
        return None

    def channels(self) -> tuple[str, ...]:
        return tuple(sorted({led.channel for led in self.leds}))


@dataclass(frozen=True)
class Violation:
    obj: str
    message: str

    def __str__(self) -> str:
        return f"{self.obj}: {self.message}"


def _circle_rect_overlap(center: Point, radius: float, rect: Rect) -> bool:
    px = min(max(center[0], rect.x0), rect.x1)
    py = min(max(center[1], rect.y0), rect.y1)
    return (px - center[0]) ** 2 + (py - center[1]) ** 2 <= radius**2


def segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    """True when segment p1-p2 properly crosses or touches segment q1-q2."""

    def orient(a: Point, b: Point, c: Point) -> float:
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_seg(a: Point, b: Point, c: Point) -> bool:
        return (
            min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
        )

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0) or d1 == 0 or d2 == 0) and (
        (d3 > 0) != (d4 > 0) or d3 == 0 or d4 == 0
    ):
        if d1 == 0 and not on_seg(q1, q2, p1):
            pass
        elif d2 == 0 and not on_seg(q1, q2, p2):
            pass
        elif d3 == 0 and not on_seg(p1, p2, q1):
            pass
        elif d4 == 0 and not on_seg(p1, p2, q2):
            pass
        else:
            return True
    return False


def validate_scene(scene: Scene) -> list[Violation]:
    """Check every scene invariant; violations are data, not exceptions."""
    out: list[Violation] = []

    if scene.time_scale <= 0:
        out.append(Violation("scene", f"time_scale must be > 0, got {scene.time_scale}"))
    if scene.dish_diameter <= 0:
        out.append(Violation("scene", "dish_diameter must be > 0"))
        return out

    seen_ids: set[str] = set()
    for e in scene.electrodes:
        if e.id in seen_ids:
            out.append(Violation(f"electrode {e.id}", "duplicate electrode id"))
        seen_ids.add(e.id)
        if e.footprint.w <= 0 or e.footprint.h <= 0:
            out.append(Violation(f"electrode {e.id}", "footprint area must be > 0"))
        for x, y in e.footprint.corners():
            if not scene.inside_dish(x, y):
                out.append(
                    Violation(f"electrode {e.id}", f"footprint corner ({x}, {y}) outside dish")
                )
                break

    for i, blob in enumerate(scene.agar_blobs):
        name = f"agar[{i}]"
        if blob.radius <= 0:
            out.append(Violation(name, "radius must be > 0"))
        if blob.resistance_ohm <= 0:
            out.append(Violation(name, "resistance must be > 0"))
        if not 0.0 <= blob.initial_moisture <= 1.0:
            out.append(Violation(name, "initial_moisture must lie in [0, 1]"))
        cx, cy = scene.center
        d = math.hypot(blob.center[0] - cx, blob.center[1] - cy)
        if d + blob.radius > scene.radius + 1e-9:
            out.append(Violation(name, "blob extends outside dish"))
        n_over = sum(
            _circle_rect_overlap(blob.center, blob.radius, e.footprint)
            for e in scene.electrodes
        )
        if n_over > 1:
            out.append(Violation(name, f"blob overlaps {n_over} electrodes (max 1)"))

    for i, a in enumerate(scene.attractants):
        if a.strength < 0:
            out.append(Violation(f"attractant[{i}]", "strength must be >= 0"))
        if not scene.inside_dish(*a.center):
            out.append(Violation(f"attractant[{i}]", "source outside dish"))

    for i, b in enumerate(scene.barriers):
        if not 0.0 <= b.light_transmission <= 1.0:
            out.append(Violation(f"barrier[{i}]", "light_transmission must lie in [0, 1]"))
        for pt in b.segment:
            if not scene.inside_dish(*pt):
                out.append(Violation(f"barrier[{i}]", f"endpoint {pt} outside dish"))
                break

    seen_led_ids: set[str] = set()
    for led in scene.leds:
        name = f"led {led.id}"
        if led.id in seen_led_ids:
            out.append(Violation(name, "duplicate led id"))
        seen_led_ids.add(led.id)
        if led.wavelength_nm <= 0:
            out.append(Violation(name, "wavelength must be positive"))
        if led.luminosity_mcd <= 0:
            out.append(Violation(name, "luminosity must be positive"))
        if not scene.inside_dish(*led.position):
            out.append(Violation(name, "position outside dish"))

    return out


# ---------------------------------------------------------------------------
# Builders for the standard layouts


def pnot_scene(
    gap: float = 10.0,
    dish: float = DEFAULT_DISH_MM,
    luminosity: float = DEFAULT_LED_LUMINOSITY_MCD,
    attractant_strength: float = 1.0,
    time_scale: float = 1.0,
) -> Scene:
    """Inverter dish: source electrode X, target Y under a green LED."""
    c = dish / 2.0
    half_w, h = 7.0, 22.0
    x_cx = c - gap / 2.0 - half_w
    y_cx = c + gap / 2.0 + half_w
    r = GATE_BLOB_RADIUS_MM
    return Scene(
        dish_diameter=dish,
        electrodes=(
            Electrode("X", (x_cx, c), Rect(x_cx, c, 2 * half_w, h)),
            Electrode("Y", (y_cx, c), Rect(y_cx, c, 2 * half_w, h)),
        ),
        agar_blobs=(
            AgarBlob((x_cx, c), r),
            AgarBlob((y_cx, c), r),
        ),
        attractants=(AttractantSource((y_cx, c), attractant_strength),),
        leds=(Led("A1", (y_cx, c), GREEN_NM, luminosity, "A"),),
        time_scale=time_scale,
    )


def pnand_scene(
    gap: float = 10.0,
    dish: float = DEFAULT_DISH_MM,
    luminosity: float = DEFAULT_LED_LUMINOSITY_MCD,
    attractant_strength: float = 1.0,
    time_scale: float = 1.0,
) -> Scene:
    """Two-target dish: X in the centre, Y and Z on the flanks, each flank
    behind its own card barrier so the two LEDs cannot contaminate each
    other's side."""
    c = dish / 2.0
    half_w, h = 7.0, 22.0
    y_cx = c - 2 * half_w - gap
    z_cx = c + 2 * half_w + gap
    r = GATE_BLOB_RADIUS_MM
    # Cards flank the centre blob directly: light from either flank LED is
    # single-shadowed over the inoculation blob but double-shadowed in the
    # far approach corridor, which keeps each dark corridor clean.
    bl = c - (r + 0.3)
    br = c + (r + 0.3)
    bar_half = 15.0
    return Scene(
        dish_diameter=dish,
        electrodes=(
            Electrode("X", (c, c), Rect(c, c, 2 * half_w, h)),
            Electrode("Y", (y_cx, c), Rect(y_cx, c, 2 * half_w, h)),
            Electrode("Z", (z_cx, c), Rect(z_cx, c, 2 * half_w, h)),
        ),
        agar_blobs=(
            AgarBlob((c, c), r),
            AgarBlob((y_cx, c), r),
            AgarBlob((z_cx, c), r),
        ),
        attractants=(
            AttractantSource((y_cx, c), attractant_strength),
            AttractantSource((z_cx, c), attractant_strength),
        ),
        barriers=(
            Barrier(((bl, c - bar_half), (bl, c + bar_half))),
            Barrier(((br, c - bar_half), (br, c + bar_half))),
        ),
        leds=(
            Led("A1", (y_cx, c), GREEN_NM, luminosity, "A"),
            Led("B1", (z_cx, c), GREEN_NM, luminosity, "B"),
        ),
        time_scale=time_scale,
    )


def phototaxis_scene(
    colour_a_nm: float,
    colour_b_nm: float,
    dish: float = DEFAULT_DISH_MM,
    luminosity: float = DEFAULT_LED_LUMINOSITY_MCD,
    attractant_strength: float = 1.6,
    time_scale: float = 1.0,
) -> Scene:
    """Two-choice arena: plain agar in the centre, attractant-loaded agar at
    the 9 o'clock (A) and 3 o'clock (B) poles, each pole lit by two LEDs of
    its assigned colour and screened from the centre by a card barrier."""
    c = dish / 2.0
    r = SQUARE_BLOB_RADIUS_MM
    a_cx = c - 30.0
    b_cx = c + 30.0
    bar_a = (a_cx + r + c - r) / 2.0
    bar_b = (b_cx - r + c + r) / 2.0
    bar_half = 22.0
    return Scene(
        dish_diameter=dish,
        agar_blobs=(
            AgarBlob((c, c), r, volume_ml=2.5),
            AgarBlob((a_cx, c), r, volume_ml=2.5),
            AgarBlob((b_cx, c), r, volume_ml=2.5),
        ),
        attractants=(
            AttractantSource((a_cx, c), attractant_strength),
            AttractantSource((b_cx, c), attractant_strength),
        ),
        barriers=(
            Barrier(((bar_a, c - bar_half), (bar_a, c + bar_half))),
            Barrier(((bar_b, c - bar_half), (bar_b, c + bar_half))),
        ),
        leds=(
            Led("A1", (a_cx, c - 6.0), colour_a_nm, luminosity, "A"),
            Led("A2", (a_cx, c + 6.0), colour_a_nm, luminosity, "A"),
            Led("B1", (b_cx, c - 6.0), colour_b_nm, luminosity, "B"),
            Led("B2", (b_cx, c + 6.0), colour_b_nm, luminosity, "B"),
        ),
        time_scale=time_scale,
    )


# ---------------------------------------------------------------------------
# Config round-trip


class SceneConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_config(scene: Scene) -> str:
    """Serialize a scene to the flat block format, deterministically: object
    lists are emitted in sorted order so equal scenes yield identical text."""
    lines = [
        "# slimegate scene",
        f"dish_diameter_mm = {_fmt(scene.dish_diameter)}",
        f"time_scale = {_fmt(scene.time_scale)}",
        "",
    ]
    for e in sorted(scene.electrodes, key=lambda e: e.id):
        lines += [
            "[electrode]",
            f"id = {e.id}",
            f"center = {_fmt(e.center[0])} {_fmt(e.center[1])}",
            f"footprint = {_fmt(e.footprint.cx)} {_fmt(e.footprint.cy)} "
            f"{_fmt(e.footprint.w)} {_fmt(e.footprint.h)}",
            "",
        ]
    for b in sorted(scene.agar_blobs, key=lambda b: b.center):
        lines += [
            "[agar]",
            f"center = {_fmt(b.center[0])} {_fmt(b.center[1])}",
            f"radius = {_fmt(b.radius)}",
            f"volume_ml = {_fmt(b.volume_ml)}",
            f"resistance_ohm = {_fmt(b.resistance_ohm)}",
            f"initial_moisture = {_fmt(b.initial_moisture)}",
            "",
        ]
    for a in sorted(scene.attractants, key=lambda a: a.center):
        lines += [
            "[attractant]",
            f"center = {_fmt(a.center[0])} {_fmt(a.center[1])}",
            f"strength = {_fmt(a.strength)}",
            f"kind = {a.kind}",
            "",
        ]
    for b in sorted(scene.barriers, key=lambda b: b.segment):
        (x1, y1), (x2, y2) = b.segment
        lines += [
            "[barrier]",
            f"segment = {_fmt(x1)} {_fmt(y1)} {_fmt(x2)} {_fmt(y2)}",
            f"gap_height = {_fmt(b.gap_height)}",
            f"light_transmission = {_fmt(b.light_transmission)}",
            f"passable = {_fmt(b.passable_by_plasmodium)}",
            "",
        ]
    for led in sorted(scene.leds, key=lambda led: led.id):
        lines += [
            "[led]",
            f"id = {led.id}",
            f"position = {_fmt(led.position[0])} {_fmt(led.position[1])}",
            f"wavelength_nm = {_fmt(led.wavelength_nm)}",
            f"luminosity_mcd = {_fmt(led.luminosity_mcd)}",
            f"channel = {led.channel}",
            "",
        ]
    return "\n".join(lines)


_BLOCK_KINDS = ("electrode", "agar", "attractant", "barrier", "led")


def scene_from_config(text: str) -> Scene:
    """Parse the scene-config format. Raises SceneConfigError with a line
    number on malformed input and on scenes that fail validation."""
    if not text.strip():
        raise SceneConfigError("empty scene document")

    top: dict[str, str] = {}
    blocks: list[tuple[str, int, dict[str, tuple[str, int]]]] = []
    current: dict[str, tuple[str, int]] | None = None

    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise SceneConfigError("unterminated block header", n)
            kind = line[1:-1].strip()
            if kind not in _BLOCK_KINDS:
                raise SceneConfigError(f"unknown block kind {kind!r}", n)
            current = {}
            blocks.append((kind, n, current))
            continue
        if "=" not in line:
            raise SceneConfigError("expected 'key = value'", n)
        key, value = (part.strip() for part in line.split("=", 1))
        if current is None:
            top[key] = value
        else:
            current[key] = (value, n)

    def floats(value: str, n: int, count: int) -> list[float]:
        parts = value.split()
        if len(parts) != count:
            raise SceneConfigError(f"expected {count} numbers, got {len(parts)}", n)
        try:
            return [float(p) for p in parts]
        except ValueError:
            raise SceneConfigError(f"bad number in {value!r}", n) from None

    def need(block: dict, key: str, kind: str, line: int) -> tuple[str, int]:
        if key not in block:
            raise SceneConfigError(f"{kind} block missing field {key!r}", line)
        return block[key]

    electrodes: list[Electrode] = []
    agar: list[AgarBlob] = []
    attract: list[AttractantSource] = []
    barriers: list[Barrier] = []
    leds: list[Led] = []

    for kind, hdr_line, block in blocks:
        if kind == "electrode":
            v, n = need(block, "center", kind, hdr_line)
            cx, cy = floats(v, n, 2)
            v, n = need(block, "footprint", kind, hdr_line)
            fx, fy, fw, fh = floats(v, n, 4)
            v, _ = need(block, "id", kind, hdr_line)
            electrodes.append(Electrode(v, (cx, cy), Rect(fx, fy, fw, fh)))
        elif kind == "agar":
            v, n = need(block, "center", kind, hdr_line)
            cx, cy = floats(v, n, 2)
            v, n = need(block, "radius", kind, hdr_line)
            (radius,) = floats(v, n, 1)
            vol = float(block.get("volume_ml", ("2.0", 0))[0])
            res = float(block.get("resistance_ohm", (repr(DEFAULT_BLOB_RESISTANCE_OHM), 0))[0])
            moist = float(block.get("initial_moisture", ("1.0", 0))[0])
            agar.append(AgarBlob((cx, cy), radius, vol, res, moist))
        elif kind == "attractant":
            v, n = need(block, "center", kind, hdr_line)
            cx, cy = floats(v, n, 2)
            v, n = need(block, "strength", kind, hdr_line)
            (strength,) = floats(v, n, 1)
            attract.append(
                AttractantSource((cx, cy), strength, block.get("kind", ("oat", 0))[0])
            )
        elif kind == "barrier":
            v, n = need(block, "segment", kind, hdr_line)
            x1, y1, x2, y2 = floats(v, n, 4)
            gap = float(block.get("gap_height", ("0.5", 0))[0])
            trans = float(
                block.get("light_transmission", (repr(DEFAULT_BARRIER_TRANSMISSION), 0))[0]
            )
            passable = block.get("passable", ("true", 0))[0].lower() != "false"
            barriers.append(Barrier(((x1, y1), (x2, y2)), gap, trans, passable))
        else:  # led
            v, n = need(block, "position", kind, hdr_line)
            px, py = floats(v, n, 2)
            v, n = need(block, "wavelength_nm", kind, hdr_line)
            (wl,) = floats(v, n, 1)
            v, n = need(block, "luminosity_mcd", kind, hdr_line)
            (lum,) = floats(v, n, 1)
            lid, _ = need(block, "id", kind, hdr_line)
            ch, _ = need(block, "channel", kind, hdr_line)
            leds.append(Led(lid, (px, py), wl, lum, ch))

    try:
        dish = float(top.get("dish_diameter_mm", repr(DEFAULT_DISH_MM)))
        ts = float(top.get("time_scale", "1.0"))
    except ValueError as exc:
        raise SceneConfigError(str(exc)) from None

    scene = Scene(
        dish_diameter=dish,
        electrodes=tuple(electrodes),
        agar_blobs=tuple(agar),
        attractants=tuple(attract),
        barriers=tuple(barriers),
        leds=tuple(leds),
        time_scale=ts,
    )
    violations = validate_scene(scene)
    if violations:
        raise SceneConfigError(
            "scene fails validation: " + "; ".join(str(v) for v in violations)
        )
    return scene


def scene_digest(scene: Scene) -> str:
    import hashlib

    return hashlib.sha256(emit_config(scene).encode()).hexdigest()[:16]
