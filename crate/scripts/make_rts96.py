#!/usr/bin/env python3
"""Generate the bundled RTS-96 three-area case (crates/core/data/rts96.json).

Network data follows the published RTS-96 tables. Coordinates are synthetic:
each area occupies a 6 x 6 tile of grid slots with 0.3 degree pitch, tiles
laid side by side west to east in the order area 3, area 1, area 2. Bus
(col, row) slots are listed in LAYOUT below; bus 325 sits in the area-3 tile
next to the area-1 boundary.

The base dispatch is a merit-order dispatch (nuclear, hydro and coal first,
oil and gas units last) with bus 113 as the system slack.
"""

import json
import pathlib

LOADS = {
    1: (108, 22), 2: (97, 20), 3: (180, 37), 4: (74, 15), 5: (71, 14),
    6: (136, 28), 7: (125, 25), 8: (171, 35), 9: (175, 36), 10: (195, 40),
    13: (265, 54), 14: (194, 39), 15: (317, 64), 16: (100, 20), 18: (333, 68),
    19: (181, 37), 20: (128, 26),
}

LAYOUT = {
    1: (0, 0), 5: (1, 0), 2: (2, 0), 6: (3, 0), 8: (4, 0), 7: (5, 0),
    3: (0, 1), 4: (1, 1), 9: (2, 1), 10: (3, 1),
    24: (0, 2), 14: (1, 2), 11: (2, 2), 12: (3, 2), 13: (4, 2), 23: (5, 2),
    15: (0, 3), 16: (2, 3), 19: (3, 3), 20: (4, 3),
    21: (0, 4), 17: (1, 4),
    18: (0, 5), 22: (2, 5),
}
TILE_OFFSET = {3: 0, 1: 6, 2: 12}
LAT0, LON0, PITCH = 33.0, -99.0, 0.3

# (from, to, r, x, b, rating MVA); ratings of 108-109/108-110 and the
# 106-110 cable follow the security-constrained benchmark variant.
AREA_BRANCHES = [
    (1, 2, 0.003, 0.014, 0.461, 175), (1, 3, 0.055, 0.211, 0.057, 175),
    (1, 5, 0.022, 0.085, 0.023, 175), (2, 4, 0.033, 0.127, 0.034, 175),
    (2, 6, 0.050, 0.192, 0.052, 175), (3, 9, 0.031, 0.119, 0.032, 175),
    (3, 24, 0.002, 0.084, 0.0, 400), (4, 9, 0.027, 0.104, 0.028, 175),
    (5, 10, 0.023, 0.088, 0.024, 175), (6, 10, 0.014, 0.061, 2.459, 180),
    (7, 8, 0.016, 0.061, 0.017, 175), (8, 9, 0.043, 0.165, 0.045, 190),
    (8, 10, 0.043, 0.165, 0.045, 190), (9, 11, 0.002, 0.084, 0.0, 400),
    (9, 12, 0.002, 0.084, 0.0, 400), (10, 11, 0.002, 0.084, 0.0, 400),
    (10, 12, 0.002, 0.084, 0.0, 400), (11, 13, 0.006, 0.048, 0.100, 500),
    (11, 14, 0.005, 0.042, 0.088, 500), (12, 13, 0.006, 0.048, 0.100, 500),
    (12, 23, 0.012, 0.097, 0.203, 500), (13, 23, 0.011, 0.087, 0.182, 500),
    (14, 16, 0.005, 0.059, 0.082, 500), (15, 16, 0.002, 0.017, 0.036, 500),
    (15, 21, 0.006, 0.049, 0.103, 500), (15, 21, 0.006, 0.049, 0.103, 500),
    (15, 24, 0.007, 0.052, 0.109, 500), (16, 17, 0.003, 0.026, 0.055, 500),
    (16, 19, 0.003, 0.023, 0.049, 500), (17, 18, 0.002, 0.014, 0.030, 500),
    (17, 22, 0.014, 0.105, 0.221, 500), (18, 21, 0.003, 0.026, 0.055, 500),
    (18, 21, 0.003, 0.026, 0.055, 500), (19, 20, 0.005, 0.040, 0.083, 500),
    (19, 20, 0.005, 0.040, 0.083, 500), (20, 23, 0.003, 0.022, 0.046, 500),
    (20, 23, 0.003, 0.022, 0.046, 500), (21, 22, 0.009, 0.068, 0.142, 500),
]

TIES = [
    ("AB1", 107, 203, 0.042, 0.161, 0.044, 175, 138),
    ("AB2", 113, 215, 0.010, 0.075, 0.158, 500, 230),
    ("AB3", 123, 217, 0.010, 0.074, 0.155, 500, 230),
    ("CA1", 325, 121, 0.012, 0.097, 0.203, 500, 230),
    ("CB1", 318, 223, 0.013, 0.104, 0.218, 500, 230),
    ("C35", 325, 323, 0.012, 0.097, 0.203, 500, 230),
]

# unit type -> (p_max, q_min, q_max)
UNITS = {
    "U12": (12, 0, 6), "U20": (20, 0, 10), "U50": (50, -10, 16),
    "U76": (76, -25, 30), "U100": (100, 0, 60), "U155": (155, -50, 80),
    "U197": (197, 0, 80), "U350": (350, -25, 150), "U400": (400, -50, 200),
    "SYNC": (0, -50, 200),
}

# bus -> (voltage setpoint, [(unit type, dispatch MW), ...])
PLANTS = {
    1: (1.035, [("U20", 0), ("U20", 0), ("U76", 76), ("U76", 76)]),
    2: (1.035, [("U20", 0), ("U20", 0), ("U76", 76), ("U76", 76)]),
    7: (1.025, [("U100", 25), ("U100", 25), ("U100", 25)]),
    13: (1.020, [("U197", 150), ("U197", 150), ("U197", 150)]),
    14: (0.980, [("SYNC", 0)]),
    15: (1.014, [("U12", 0)] * 5 + [("U155", 155)]),
    16: (1.017, [("U155", 155)]),
    18: (1.050, [("U400", 400)]),
    21: (1.050, [("U400", 400)]),
    22: (1.050, [("U50", 50)] * 6),
    23: (1.050, [("U155", 155), ("U155", 155), ("U350", 350)]),
}

# Per-area dispatch overrides: (area, bus) -> list of MW per unit.
DISPATCH_OVERRIDES = {
    (2, 7): [25, 25, 25],
}


def build():
    buses, branches, gens, shunts = [], [], [], []
    for area in (1, 2, 3):
        base = area * 100
        for n in range(1, 25):
            col, row = LAYOUT[n]
            p, q = LOADS.get(n, (0, 0))
            kind = "load"
            if n in PLANTS:
                kind = "slack" if (area, n) == (1, 13) else "generator"
            buses.append({
                "id": base + n,
                "kind": kind,
                "base_kv": 138 if n <= 10 else 230,
                "lat": round(LAT0 + PITCH * row, 6),
                "lon": round(LON0 + PITCH * (col + TILE_OFFSET[area]), 6),
                "p_mw": p,
                "q_mvar": q,
            })
    buses.append({
        "id": 325, "kind": "load", "base_kv": 230,
        "lat": round(LAT0 + PITCH * 4, 6), "lon": round(LON0 + PITCH * 5, 6),
        "p_mw": 0, "q_mvar": 0,
    })

    bid = 0
    for area, prefix in ((1, "A"), (2, "B"), (3, "C")):
        base = area * 100
        for k, (f, t, r, x, b, rating) in enumerate(AREA_BRANCHES, start=1):
            bid += 1
            transformer = f <= 10 and t > 10
            kv = 230 if (f > 10 or transformer) else 138
            branches.append({
                "id": bid, "name": f"{prefix}{k}", "from": base + f, "to": base + t,
                "r_pu": r, "x_pu": x, "b_pu": b, "rating_mva": rating, "rated_kv": kv,
            })
            if (f, t) == (6, 10):
                for sid_off, end in ((1, "from"), (2, "to")):
                    shunts.append({
                        "id": area * 10 + sid_off, "attach_branch": bid, "end": end,
                        "q_mvar": -50.0, "auto_disconnect": True,
                    })
    for name, f, t, r, x, b, rating, kv in TIES:
        bid += 1
        branches.append({
            "id": bid, "name": name, "from": f, "to": t,
            "r_pu": r, "x_pu": x, "b_pu": b, "rating_mva": rating, "rated_kv": kv,
        })

    gid = 0
    for area in (1, 2, 3):
        base = area * 100
        for n, (v, units) in PLANTS.items():
            override = DISPATCH_OVERRIDES.get((area, n))
            for u, (utype, mw) in enumerate(units):
                gid += 1
                if override is not None:
                    mw = override[u]
                pmax, qmin, qmax = UNITS[utype]
                gens.append({
                    "id": gid, "name": f"{base + n}-{utype}-{u + 1}", "bus": base + n,
                    "p_mw": mw, "p_max_mw": pmax, "q_min_mvar": qmin, "q_max_mvar": qmax,
                    "v_pu": v, "slack": (area, n, u) == (1, 13, 0),
                })

    return {"name": "RTS-96 three-area", "base_mva": 100, "buses": buses,
            "branches": branches, "generators": gens, "shunts": shunts}


if __name__ == "__main__":
    out = pathlib.Path(__file__).resolve().parent.parent / "crates/core/data/rts96.json"
    out.write_text(json.dumps(build(), indent=1) + "\n")
    case = build()
    print(f"{len(case['buses'])} buses, {len(case['branches'])} branches, "
          f"{len(case['generators'])} units, load {sum(b['p_mw'] for b in case['buses'])} MW")
