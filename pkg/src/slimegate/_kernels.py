"""Compiled inner loop for the agent swarm.

One kernel call advances every agent a fixed number of ticks against
read-only attractant/repulsion grids (field evolution happens between
batches on a fixed tick cadence, so results do not depend on how a run is
segmented into batches). All randomness comes from an explicit
xorshift128+ state passed in and consumed in fixed agent order, which is
what makes runs bitwise reproducible for a given seed.

Falls back to plain Python (slow but identical) when SLIMEGATE_NO_NUMBA
is set, which keeps the test suite runnable without a working compiler.
"""

from __future__ import annotations

import os

import numpy as np

# Parameter-vector layout (float64). Kept flat so the kernel signature is
# stable and cheap to rebuild per batch.
PF_CELL_MM = 0
PF_RES = 1
PF_DISH_CX = 2
PF_DISH_CY = 3
PF_DISH_R2 = 4  # squared usable radius
PF_STEP = 5
PF_SENSOR_OFF = 6
PF_COS_SA = 7
PF_SIN_SA = 8
PF_COS_TA = 9
PF_SIN_TA = 10
PF_JITTER = 11
PF_TRAIL_GAIN = 12
PF_DEPOSIT = 13
PF_TRAIL_CAP = 14
PF_EVAP_FAST = 15
PF_EVAP_SLOW = 16
PF_CONSOL = 17
PF_EXIT_PROB = 18  # reluctance gate, precomputed per batch from dryness
PF_FOLLOW_THRESH = 19
PF_FOLLOW_PROB = 20
PF_ACTIVATED_PROB = 21
PF_RESIDUE_BLOCK = 22
PF_WD_SPEED = 23
PF_WD_TRAIL_GAIN = 24
PF_WD_BEACON_GAIN = 25
PF_WD_BEACON_X = 26
PF_WD_BEACON_Y = 27
PF_WD_ERASE = 28
PF_CROWD_PEN = 29
PF_CROWD_THRESH = 30
PF_DEPOSIT_GAIN = 31
PF_COMMIT_BIAS = 32
PF_COMMIT_SIGN = 33  # +1: favour x > dish_cx, -1: x < dish_cx, 0: off
PF_WITHDRAWING = 34
PF_SENSE_CAP = 35  # trail saturates when sensed: route memory, not home glue
PF_FOLLOW_PROBE = 36  # mm beyond the landing point where route traffic is read
PF_ATTR_REF = 37  # attractant level giving unit outward-evidence factor
PF_EVIDENCE_FLOOR = 38  # undirected-pioneering floor of the evidence factor
PF_EVIDENCE_CAP = 39
PF_PORT_SAT = 40  # overvoltage: route level at which an exit port congests
PF_PORT_DAMP = 41  # follow-probability multiplier through a congested port
PF_BRIDGE_BOOST = 42  # hazard multiplier when the probe touches another blob
PF_SIZE = 43

_DISABLED = os.environ.get("SLIMEGATE_NO_NUMBA", "") not in ("", "0")

if not _DISABLED:
    from numba import njit
else:  # pragma: no cover - exercised only in the no-compiler fallback
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


@njit(cache=True, nogil=True)
def rng_uniform(state):
    """xorshift128+, one double in [0, 1). Mutates state in place."""
    x = state[0]
    y = state[1]
    state[0] = y
    x ^= x << np.uint64(23)
    x ^= x >> np.uint64(17)
    x ^= y ^ (y >> np.uint64(26))
    state[1] = x
    return np.float64((x + y) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, nogil=True)
def _seg_cross(ax, ay, bx, by, cx, cy, dx, dy):
    d1 = (dx - cx) * (ay - cy) - (dy - cy) * (ax - cx)
    d2 = (dx - cx) * (by - cy) - (dy - cy) * (bx - cx)
    d3 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    d4 = (bx - ax) * (dy - ay) - (by - ay) * (dx - ax)
    return (d1 * d2) < 0.0 and (d3 * d4) < 0.0


@njit(cache=True, nogil=True)
def _on_agar(x, y, blobs):
    for b in range(blobs.shape[0]):
        dx = x - blobs[b, 0]
        dy = y - blobs[b, 1]
        if dx * dx + dy * dy <= blobs[b, 2] * blobs[b, 2]:
            return True
    return False


@njit(cache=True, nogil=True)
def _blob_index(x, y, blobs):
    for b in range(blobs.shape[0]):
        dx = x - blobs[b, 0]
        dy = y - blobs[b, 1]
        if dx * dx + dy * dy <= blobs[b, 2] * blobs[b, 2]:
            return b
    return -1


@njit(cache=True, nogil=True)
def advance_agents(
    n_ticks,
    px,
    py,
    hc,
    hs,
    wd_flag,
    trail,
    route,  # off-agar traffic layer: only agents on plastic deposit here
    attr,
    rep,
    blobs,  # (B, 3) agar discs: cx, cy, r — exact reluctance-gate geometry
    barriers,  # (K, 4) impassable segments, K may be 0
    pf,
    rng,
):
    """Advance all agents n_ticks. Sequential agent order; same-tick trail
    deposits are visible to later agents, which is part of the fixed
    reduction order the determinism contract relies on."""
    n = px.shape[0]
    h, w = trail.shape
    res = pf[PF_RES]
    off = pf[PF_SENSOR_OFF]
    cos_sa = pf[PF_COS_SA]
    sin_sa = pf[PF_SIN_SA]
    cos_ta = pf[PF_COS_TA]
    sin_ta = pf[PF_SIN_TA]
    xmax = w / res - 1e-9
    ymax = h / res - 1e-9
    withdrawing = pf[PF_WITHDRAWING] > 0.5
    n_bar = barriers.shape[0]

    for _tick in range(n_ticks):
        for i in range(n):
            x = px[i]
            y = py[i]
            c = hc[i]
            s = hs[i]
            wd = withdrawing and wd_flag[i] == 1

            # Sensor directions: left/centre/right.
            cl = c * cos_sa - s * sin_sa
            sl = s * cos_sa + c * sin_sa
            cr = c * cos_sa + s * sin_sa
            sr = s * cos_sa - c * sin_sa

            best_v = -1.0e308
            best_k = 1
            for k in range(3):
                if k == 0:
                    dcx, dcy = cl, sl
                elif k == 1:
                    dcx, dcy = c, s
                else:
                    dcx, dcy = cr, sr
                sx = x + off * dcx
                sy = y + off * dcy
                if sx < 0.0:
                    sx = 0.0
                elif sx > xmax:
                    sx = xmax
                if sy < 0.0:
                    sy = 0.0
                elif sy > ymax:
                    sy = ymax
                ix = int(sx * res)
                iy = int(sy * res)
                traw = trail[iy, ix]
                t = traw
                if t > pf[PF_SENSE_CAP]:
                    t = pf[PF_SENSE_CAP]
                r = rep[iy, ix]
                if wd:
                    bdx = pf[PF_WD_BEACON_X] - x
                    bdy = pf[PF_WD_BEACON_Y] - y
                    bn = np.sqrt(bdx * bdx + bdy * bdy) + 1e-9
                    v = (
                        pf[PF_WD_TRAIL_GAIN] * t
                        + pf[PF_WD_BEACON_GAIN] * (dcx * bdx + dcy * bdy) / bn
                        - r
                    )
                else:
                    a = attr[iy, ix]
                    if pf[PF_COMMIT_SIGN] != 0.0 and (sx - pf[PF_DISH_CX]) * pf[PF_COMMIT_SIGN] > 0.0:
                        a *= 1.0 + pf[PF_COMMIT_BIAS]
                    v = pf[PF_TRAIL_GAIN] * t + a - r
                    if pf[PF_CROWD_PEN] > 0.0 and traw > pf[PF_CROWD_THRESH]:
                        v -= pf[PF_CROWD_PEN] * (traw - pf[PF_CROWD_THRESH])
                # Centre wins ties so an unstimulated agent walks straight.
                if k == 1:
                    if v >= best_v:
                        best_v = v
                        best_k = 1
                elif v > best_v:
                    best_v = v
                    best_k = k

            if best_k == 0:
                c, s = c * cos_ta - s * sin_ta, s * cos_ta + c * sin_ta
            elif best_k == 2:
                c, s = c * cos_ta + s * sin_ta, s * cos_ta - c * sin_ta

            # Heading jitter: second-order small-angle rotation, then one
            # Newton step to renormalize the direction vector.
            j = (2.0 * rng_uniform(rng) - 1.0) * pf[PF_JITTER]
            nc = c - s * j - 0.5 * c * j * j
            ns = s + c * j - 0.5 * s * j * j
            inv = 1.5 - 0.5 * (nc * nc + ns * ns)
            c = nc * inv
            s = ns * inv

            spd = pf[PF_STEP]
            if wd:
                spd *= pf[PF_WD_SPEED]
            nx = x + spd * c
            ny = y + spd * s

            ddx = nx - pf[PF_DISH_CX]
            ddy = ny - pf[PF_DISH_CY]
            if ddx * ddx + ddy * ddy > pf[PF_DISH_R2]:
                # Hit the dish wall: stay put, face the centre.
                tdx = pf[PF_DISH_CX] - x
                tdy = pf[PF_DISH_CY] - y
                tn = np.sqrt(tdx * tdx + tdy * tdy) + 1e-12
                hc[i] = tdx / tn
                hs[i] = tdy / tn
                continue

            blocked = False
            for b in range(n_bar):
                if _seg_cross(
                    x, y, nx, ny, barriers[b, 0], barriers[b, 1], barriers[b, 2], barriers[b, 3]
                ):
                    blocked = True
                    break
            if blocked:
                hc[i] = -c
                hs[i] = -s
                continue

            cix = int(x * res)
            ciy = int(y * res)
            if cix >= w:
                cix = w - 1
            if ciy >= h:
                ciy = h - 1
            nix = int(nx * res)
            niy = int(ny * res)
            if nix >= w:
                nix = w - 1
            if niy >= h:
                niy = h - 1

            # Withdrawn-route residue acts as a hard wall.
            if rep[niy, nix] >= pf[PF_RESIDUE_BLOCK] and rep[ciy, cix] < pf[PF_RESIDUE_BLOCK]:
                hc[i] = -c
                hs[i] = -s
                continue

            # Reluctance gate on the moist-agar -> bare-plastic crossing,
            # in exact disc geometry so cell rounding cannot leak agents.
            # The pioneering hazard scales with the outward evidence (net
            # attraction a few mm past the rim): a strong food gradient
            # coaxes exits, a lit or empty horizon suppresses them. Traffic
            # already recorded on the off-agar route layer opens the gate
            # to the follow probability and the exodus avalanches.
            if not wd and _on_agar(x, y, blobs) and not _on_agar(nx, ny, blobs):
                qx = nx + pf[PF_FOLLOW_PROBE] * c
                qy = ny + pf[PF_FOLLOW_PROBE] * s
                if qx < 0.0:
                    qx = 0.0
                elif qx > xmax:
                    qx = xmax
                if qy < 0.0:
                    qy = 0.0
                elif qy > ymax:
                    qy = ymax
                qix = int(qx * res)
                qiy = int(qy * res)
                evidence = (attr[qiy, qix] - rep[qiy, qix]) / pf[PF_ATTR_REF]
                if evidence < pf[PF_EVIDENCE_FLOOR]:
                    evidence = pf[PF_EVIDENCE_FLOOR]
                elif evidence > pf[PF_EVIDENCE_CAP]:
                    evidence = pf[PF_EVIDENCE_CAP]
                # Evidence scales every crossing mode: even a well-marked
                # route is not taken into light or toward nothing.
                p = pf[PF_EXIT_PROB] * evidence
                if route[qiy, qix] >= pf[PF_FOLLOW_THRESH]:
                    pf_follow = pf[PF_FOLLOW_PROB] * (evidence if evidence < 1.0 else 1.0)
                    if pf[PF_PORT_SAT] > 0.0 and route[qiy, qix] >= pf[PF_PORT_SAT]:
                        # Overvoltage: a heavily used port congests, pushing
                        # later traffic to nucleate parallel tubules.
                        pf_follow *= pf[PF_PORT_DAMP]
                    if pf_follow > p:
                        p = pf_follow
                elif pf[PF_BRIDGE_BOOST] > 0.0:
                    # Pseudopodial contact: another blob lies within probe
                    # reach of the landing point (sub-probe gap, as under a
                    # card barrier). Crossing eases by the net evidence read
                    # on the approach to that blob, whatever the current
                    # body orientation.
                    cur_b = _blob_index(x, y, blobs)
                    best_ev = -1.0e308
                    for b in range(blobs.shape[0]):
                        if b == cur_b:
                            continue
                        bdx = blobs[b, 0] - nx
                        bdy = blobs[b, 1] - ny
                        bd = np.sqrt(bdx * bdx + bdy * bdy)
                        if bd - blobs[b, 2] > pf[PF_FOLLOW_PROBE] or bd < 1e-9:
                            continue
                        tx = nx + pf[PF_FOLLOW_PROBE] * bdx / bd
                        ty = ny + pf[PF_FOLLOW_PROBE] * bdy / bd
                        if tx < 0.0:
                            tx = 0.0
                        elif tx > xmax:
                            tx = xmax
                        if ty < 0.0:
                            ty = 0.0
                        elif ty > ymax:
                            ty = ymax
                        tix = int(tx * res)
                        tiy = int(ty * res)
                        e2 = (attr[tiy, tix] - rep[tiy, tix]) / pf[PF_ATTR_REF]
                        if e2 > best_ev:
                            best_ev = e2
                    if best_ev > 0.0:
                        if best_ev > pf[PF_EVIDENCE_CAP]:
                            best_ev = pf[PF_EVIDENCE_CAP]
                        p_bridge = pf[PF_EXIT_PROB] * pf[PF_BRIDGE_BOOST] * best_ev
                        if p_bridge > 0.5:
                            p_bridge = 0.5
                        if p_bridge > p:
                            p = p_bridge
                p_act = pf[PF_ACTIVATED_PROB] * (evidence if evidence < 1.0 else 1.0)
                if p_act > p:
                    p = p_act
                if rng_uniform(rng) >= p:
                    hc[i] = c
                    hs[i] = s
                    continue

            px[i] = nx
            py[i] = ny
            hc[i] = c
            hs[i] = s
            if wd:
                if nix != cix or niy != ciy:
                    trail[ciy, cix] *= pf[PF_WD_ERASE]
            elif rep[niy, nix] < pf[PF_RESIDUE_BLOCK]:
                # No deposition on withdrawn-residue ground: an abandoned
                # route can never consolidate back into a tube.
                t = trail[niy, nix] + pf[PF_DEPOSIT] * pf[PF_DEPOSIT_GAIN]
                if t > pf[PF_TRAIL_CAP]:
                    t = pf[PF_TRAIL_CAP]
                trail[niy, nix] = t
                if not _on_agar(nx, ny, blobs):
                    rt = route[niy, nix] + pf[PF_DEPOSIT]
                    if rt > pf[PF_TRAIL_CAP]:
                        rt = pf[PF_TRAIL_CAP]
                    route[niy, nix] = rt

        # Trail decay: consolidated (tube-grade) trail decays on the slow
        # clock, everything else on the fast one. Route traffic is recent
        # evidence, always on the fast clock.
        for iy in range(h):
            for ix in range(w):
                t = trail[iy, ix]
                if t > pf[PF_CONSOL]:
                    trail[iy, ix] = t * (1.0 - pf[PF_EVAP_SLOW])
                else:
                    trail[iy, ix] = t * (1.0 - pf[PF_EVAP_FAST])
                route[iy, ix] *= 1.0 - pf[PF_EVAP_FAST]


def make_rng_state(seed_material: np.ndarray) -> np.ndarray:
    """Build a nonzero xorshift128+ state from SeedSequence output."""
    state = np.asarray(seed_material, dtype=np.uint64).copy()
    if state[0] == 0 and state[1] == 0:
        state[0] = np.uint64(0x9E3779B97F4A7C15)
    return state


def warm_up() -> None:
    """Force kernel compilation outside of timed sections."""
    px = np.array([1.0])
    py = np.array([1.0])
    hc = np.array([1.0])
    hs = np.array([0.0])
    wd = np.zeros(1, dtype=np.uint8)
    g = np.zeros((4, 4))
    blobs = np.zeros((0, 3))
    bar = np.zeros((0, 4))
    pf = np.zeros(PF_SIZE)
    pf[PF_RES] = 1.0
    pf[PF_CELL_MM] = 1.0
    pf[PF_DISH_CX] = 2.0
    pf[PF_DISH_CY] = 2.0
    pf[PF_DISH_R2] = 4.0
    pf[PF_STEP] = 0.1
    pf[PF_TRAIL_CAP] = 10.0
    rng = make_rng_state(np.array([1, 2], dtype=np.uint64))
    advance_agents(
        1, px, py, hc, hs, wd, g, g.copy(), g.copy(), g.copy(), blobs, bar, pf, rng
    )
