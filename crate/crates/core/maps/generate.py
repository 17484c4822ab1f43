#!/usr/bin/env python3
"""Regenerates the built-in lane-graph maps in this directory.

Usage: python3 generate.py
"""
import json
import math
import os

HERE = os.path.dirname(os.path.abspath(__file__))
W = 3.5
HALF = W / 2
BOX = 7.0
ARM = 60.0


def r(v):
    return round(v, 6)


def pts(seq):
    out = []
    for x, y in seq:
        p = [r(x), r(y)]
        if not out or (abs(out[-1][0] - p[0]) > 1e-6 or abs(out[-1][1] - p[1]) > 1e-6):
            out.append(p)
    return out


def arc(cx, cy, rad, a0, a1, step=0.5):
    n = max(2, int(math.ceil(abs(a1 - a0) * rad / step)))
    return [(cx + rad * math.cos(a0 + (a1 - a0) * i / n), cy + rad * math.sin(a0 + (a1 - a0) * i / n)) for i in range(n + 1)]


def line(a, b, step=None):
    if step is None:
        return [a, b]
    d = math.hypot(b[0] - a[0], b[1] - a[1])
    n = max(1, int(math.ceil(d / step)))
    return [(a[0] + (b[0] - a[0]) * i / n, a[1] + (b[1] - a[1]) * i / n) for i in range(n + 1)]


def bezier(p0, p1, p2, p3, n=40):
    out = []
    for i in range(n + 1):
        t = i / n
        u = 1 - t
        out.append((
            u ** 3 * p0[0] + 3 * u * u * t * p1[0] + 3 * u * t * t * p2[0] + t ** 3 * p3[0],
            u ** 3 * p0[1] + 3 * u * u * t * p1[1] + 3 * u * t * t * p2[1] + t ** 3 * p3[1],
        ))
    return out


def rot(p, quarter):
    x, y = p
    for _ in range(quarter % 4):
        x, y = -y, x
    return (x, y)


def lane(id_, centerline, successors=(), left=None, right=None, width=W):
    return {
        "id": id_,
        "width": width,
        "centerline": pts(centerline),
        "successors": list(successors),
        "left": left,
        "right": right,
    }


# Arms in counter-clockwise order starting south; rotating S by k quarter turns gives ARMS[k].
ARMS = ["S", "E", "N", "W"]


def intersection_lanes(arm_len=ARM, loops=False):
    lanes = []
    base_in = [(HALF, -BOX - arm_len), (HALF, -BOX)]
    base_out = [(-HALF, -BOX), (-HALF, -BOX - arm_len)]
    # connectors from the south inbound lane, by relative turn
    straight = [(HALF, -BOX), (HALF, BOX)]
    right = arc(BOX, -BOX, BOX - HALF, math.pi, math.pi / 2)
    left = arc(-BOX, -BOX, BOX + HALF, 0.0, math.pi / 2)
    for k, arm in enumerate(ARMS):
        conns = {
            ARMS[(k + 2) % 4]: straight,
            ARMS[(k + 1) % 4]: right,
            ARMS[(k + 3) % 4]: left,
        }
        lanes.append(lane(f"{arm}_in", [rot(p, k) for p in base_in], [f"{arm}_{to}" for to in sorted(conns)]))
        succ = [f"{ARMS[(k + 3) % 4]}_in"] if loops else []
        lanes.append(lane(f"{arm}_out", [rot(p, k) for p in base_out], succ))
        for to, geom in conns.items():
            lanes.append(lane(f"{arm}_{to}", [rot(p, k) for p in geom], [f"{to}_out"]))
    if loops:
        # Outbound arm k ends where a loop swings round to inbound arm k-1 (clockwise neighbour).
        # Built for N_out -> E_in and rotated.
        end = BOX + arm_len
        rad = 10.0
        a = 10.0
        loop = []
        loop += arc(HALF + rad, end, rad, math.pi, math.pi / 2)
        loop += line((HALF + rad, end + rad), (end + a, end + rad), 1.0)
        loop += arc(end + a, end, rad, math.pi / 2, 0.0)
        loop += line((end + a + rad, end), (end + a + rad, HALF + rad), 1.0)
        loop += arc(end + a, HALF + rad, rad, 0.0, -math.pi / 2)
        loop += line((end + a, HALF), (end, HALF), 1.0)
        # N_out is S_out rotated by 2; loop for arm k = base loop rotated by (k - 2)
        for k, arm in enumerate(ARMS):
            nxt = ARMS[(k + 3) % 4]
            lanes.append(lane(f"loop_{arm}_{nxt}", [rot(p, (k - 2) % 4) for p in loop], [f"{nxt}_in"]))
            for ln in lanes:
                if ln["id"] == f"{arm}_out":
                    ln["successors"] = [f"loop_{arm}_{nxt}"]
    return lanes


def signals_at_stop_lines(kind, phase=None):
    out = []
    for arm in ARMS:
        sig = {"id": f"{kind}_{arm}", "kind": kind, "lane": f"{arm}_in", "s": ARM - 1.0}
        if phase is not None:
            sig["phase"] = phase
        out.append(sig)
    return out


def lane_merge():
    lanes = [
        lane("M1", line((-120.0, 0.0), (0.0, 0.0)), ["M2"]),
        lane("M2", line((0.0, 0.0), (150.0, 0.0)), []),
        lane("R1", line((-100.0, -3.5), (-30.0, -3.5)), ["R2"]),
        lane("R2", bezier((-30.0, -3.5), (-15.0, -3.5), (-15.0, 0.0), (0.0, 0.0)), ["M2"]),
    ]
    return {"lanes": lanes, "signals": []}


def overtake():
    lanes = [
        lane("A", line((-50.0, 0.0), (250.0, 0.0)), [], left="B"),
        lane("B", line((-50.0, 3.5), (250.0, 3.5)), [], right="A"),
    ]
    return {"lanes": lanes, "signals": []}


def four_lane():
    lanes = []
    for i in range(4):
        lanes.append(lane(
            f"L{i}",
            line((0.0, 3.5 * i), (300.0, 3.5 * i)),
            [],
            left=f"L{i + 1}" if i < 3 else None,
            right=f"L{i - 1}" if i > 0 else None,
        ))
    return {"lanes": lanes, "signals": []}


def roundabout():
    rad = 20.0
    deg = math.pi / 180
    lanes = []
    # Ring nodes: exit split at arm angle - 20 deg, entry join at arm angle + 20 deg (CCW travel).
    arm_angle = {"E": 0.0, "N": 90 * deg, "W": 180 * deg, "S": 270 * deg}
    order = ["E", "N", "W", "S"]
    nodes = []
    for arm in order:
        nodes.append(("x", arm, arm_angle[arm] - 20 * deg))
        nodes.append(("j", arm, arm_angle[arm] + 20 * deg))
    for i, (kind, arm, ang) in enumerate(nodes):
        nk, narm, nang = nodes[(i + 1) % len(nodes)]
        if nang < ang:
            nang += 2 * math.pi
        id_ = f"ring_{kind}{arm}"
        succ = [f"ring_{nk}{narm}"]
        if nk == "x":
            succ.append(f"{narm}_out")
        lanes.append(lane(id_, arc(0.0, 0.0, rad, ang, nang), sorted(succ)))
    for arm in order:
        a = arm_angle[arm]
        radial = (math.cos(a), math.sin(a))
        tang = (-math.sin(a), math.cos(a))
        far = 80.0
        # inbound on the right-hand side of the arm axis, heading toward the centre
        off_in = (HALF * tang[0], HALF * tang[1])
        p_far = (far * radial[0] + off_in[0], far * radial[1] + off_in[1])
        p_near = ((rad + 14) * radial[0] + off_in[0], (rad + 14) * radial[1] + off_in[1])
        ja = a + 20 * deg
        pj = (rad * math.cos(ja), rad * math.sin(ja))
        tj = (-math.sin(ja), math.cos(ja))
        inbound = line(p_far, p_near, 1.0)[:-1] + bezier(
            p_near,
            (p_near[0] - 6 * radial[0], p_near[1] - 6 * radial[1]),
            (pj[0] - 6 * tj[0], pj[1] - 6 * tj[1]),
            pj,
        )
        lanes.append(lane(f"{arm}_in", inbound, [f"ring_j{arm}"]))
        off_out = (-HALF * tang[0], -HALF * tang[1])
        xa = a - 20 * deg
        px = (rad * math.cos(xa), rad * math.sin(xa))
        tx = (-math.sin(xa), math.cos(xa))
        q_near = ((rad + 14) * radial[0] + off_out[0], (rad + 14) * radial[1] + off_out[1])
        q_far = (far * radial[0] + off_out[0], far * radial[1] + off_out[1])
        outbound = bezier(
            px,
            (px[0] + 6 * tx[0], px[1] + 6 * tx[1]),
            (q_near[0] - 6 * radial[0], q_near[1] - 6 * radial[1]),
            q_near,
        )[:-1] + line(q_near, q_far, 1.0)
        lanes.append(lane(f"{arm}_out", outbound, []))
    return {"lanes": sorted(lanes, key=lambda l: l["id"]), "signals": []}


def write(name, doc):
    doc["lanes"] = sorted(doc["lanes"], key=lambda l: l["id"])
    with open(os.path.join(HERE, name), "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def main():
    write("intersection.map.json", {"lanes": intersection_lanes(), "signals": []})
    write("intersection_lights.map.json", {
        "lanes": intersection_lanes(),
        "signals": signals_at_stop_lines("traffic_light", [10.0, 3.0, 12.0]),
    })
    write("intersection_stop.map.json", {"lanes": intersection_lanes(), "signals": signals_at_stop_lines("stop_sign")})
    write("town.map.json", {"lanes": intersection_lanes(loops=True), "signals": []})
    write("lane_merge.map.json", lane_merge())
    write("overtake.map.json", overtake())
    write("four_lane.map.json", four_lane())
    write("roundabout.map.json", roundabout())


if __name__ == "__main__":
    main()
