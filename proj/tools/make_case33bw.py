#!/usr/bin/env python3
"""Writes the bundled 33-bus distribution case (radial and meshed variants).

Line and load data are the widely used 12.66 kV 33-bus feeder. DG sites,
capabilities and costs are desk-scale choices for this project.
"""
import json
import sys
from pathlib import Path

BASE_MVA = 10.0
BASE_KV = 12.66
Z_BASE = BASE_KV**2 / BASE_MVA

# from, to, r (ohm), x (ohm)
LINES = [
    (1, 2, 0.0922, 0.0470), (2, 3, 0.4930, 0.2511), (3, 4, 0.3660, 0.1864),
    (4, 5, 0.3811, 0.1941), (5, 6, 0.8190, 0.7070), (6, 7, 0.1872, 0.6188),
    (7, 8, 0.7114, 0.2351), (8, 9, 1.0300, 0.7400), (9, 10, 1.0440, 0.7400),
    (10, 11, 0.1966, 0.0650), (11, 12, 0.3744, 0.1238), (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129), (14, 15, 0.5910, 0.5260), (15, 16, 0.7463, 0.5450),
    (16, 17, 1.2890, 1.7210), (17, 18, 0.7320, 0.5740), (2, 19, 0.1640, 0.1565),
    (19, 20, 1.5042, 1.3554), (20, 21, 0.4095, 0.4784), (21, 22, 0.7089, 0.9373),
    (3, 23, 0.4512, 0.3083), (23, 24, 0.8980, 0.7091), (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034), (26, 27, 0.2842, 0.1447), (27, 28, 1.0590, 0.9337),
    (28, 29, 0.8042, 0.7006), (29, 30, 0.5075, 0.2585), (30, 31, 0.9744, 0.9630),
    (31, 32, 0.3105, 0.3619), (32, 33, 0.3410, 0.5302),
]
TIES = [(21, 8, 2.0, 2.0), (9, 15, 2.0, 2.0), (12, 22, 2.0, 2.0),
        (18, 33, 0.5, 0.5), (25, 29, 0.5, 0.5)]

# bus: (kW, kvar)
LOADS = {
    2: (100, 60), 3: (90, 40), 4: (120, 80), 5: (60, 30), 6: (60, 20),
    7: (200, 100), 8: (200, 100), 9: (60, 20), 10: (60, 20), 11: (45, 30),
    12: (60, 35), 13: (60, 35), 14: (120, 80), 15: (60, 10), 16: (60, 20),
    17: (60, 20), 18: (90, 40), 19: (90, 40), 20: (90, 40), 21: (90, 40),
    22: (90, 40), 23: (90, 50), 24: (420, 200), 25: (420, 200), 26: (60, 25),
    27: (60, 25), 28: (60, 20), 29: (120, 70), 30: (200, 600), 31: (150, 70),
    32: (210, 100), 33: (60, 40),
}

# bus, archetype, p_max (MW), a ($/MW^2h), b ($/MWh), c ($/h)
DGS = [
    (18, "box", 1.2, 3.0, 20.0, 5.0),
    (22, "box_circle", 1.0, 2.5, 22.0, 4.0),
    (25, "triangle", 1.5, 2.0, 18.0, 6.0),
    (30, "trapezoid", 1.0, 4.0, 21.0, 3.0),
    (33, "pentagon", 1.3, 3.5, 19.0, 5.0),
]

# Feeder-head rating (MVA) on the first section.
HEAD_RATING_MVA = 6.0


def dg_entry(bus, kind, p_max_mw, a, b, c):
    pm = p_max_mw / BASE_MVA
    gen = {"bus": bus, "p_min": 0.0, "p_max": pm, "q_min": 0.0, "q_max": 0.0,
           "cost_a": a * BASE_MVA**2, "cost_b": b * BASE_MVA, "cost_c": c, "p_set": 0.0}
    cap, s_max = [], None
    if kind == "box":
        gen["q_min"], gen["q_max"] = -0.5 * pm, 0.5 * pm
    elif kind == "box_circle":
        gen["q_min"], gen["q_max"] = -pm, pm
        s_max = pm
    elif kind == "triangle":
        gen["q_min"], gen["q_max"] = -0.6 * pm, 0.6 * pm
        cap = [{"alpha": -0.6, "beta": 1.0, "delta": 0.0},
               {"alpha": -0.6, "beta": -1.0, "delta": 0.0}]
    elif kind == "trapezoid":
        gen["q_min"], gen["q_max"] = -0.6 * pm, 0.6 * pm
        cap = [{"alpha": -0.4, "beta": 1.0, "delta": 0.2 * pm},
               {"alpha": -0.4, "beta": -1.0, "delta": 0.2 * pm}]
    elif kind == "pentagon":
        gen["q_min"], gen["q_max"] = -0.5 * pm, 0.5 * pm
        cap = [{"alpha": 1.0, "beta": 1.0, "delta": 1.2 * pm}]
    return {"generator": gen, "capability": cap, "s_max": s_max}


def branch(bid, f, t, r, x, rating=0.0, status="closed"):
    return {"id": bid, "from_bus": f, "to_bus": t, "r": r / Z_BASE, "x": x / Z_BASE,
            "b_charge": 0.0, "tap": 1.0, "shift": 0.0, "rating": rating, "status": status}


def case(meshed):
    name = "case33bw_meshed" if meshed else "case33bw"
    buses = []
    for i in range(1, 34):
        buses.append({"id": i, "kind": "slack" if i == 1 else "pq", "v_min": 0.9, "v_max": 1.1,
                      "theta_min": -3.141592653589793, "theta_max": 3.141592653589793,
                      "base_kv": BASE_KV, "v_set": 1.0, "g_shunt": 0.0, "b_shunt": 0.0})
    branches = []
    for k, (f, t, r, x) in enumerate(LINES, start=1):
        rating = HEAD_RATING_MVA / BASE_MVA if k == 1 else 0.0
        branches.append(branch(k, f, t, r, x, rating))
    for k, (f, t, r, x) in enumerate(TIES, start=len(LINES) + 1):
        branches.append(branch(k, f, t, r, x, 0.0, "closed" if meshed else "open"))
    loads = [{"bus": b, "p_d": p / 1000.0 / BASE_MVA, "q_d": q / 1000.0 / BASE_MVA}
             for b, (p, q) in sorted(LOADS.items())]
    network = {"name": name, "base_mva": BASE_MVA, "buses": buses, "branches": branches,
               "generators": [], "dgs": [dg_entry(*d) for d in DGS], "loads": loads}
    link = {"ts_bus": 6, "ds_name": name, "v_min": 0.95, "v_max": 1.05,
            "interconnect": {"id": 0, "from_bus": 0, "to_bus": 0, "r": 0.005, "x": 0.04,
                             "b_charge": 0.0, "tap": 1.0, "shift": 0.0, "rating": 0.0,
                             "status": "closed"}}
    return {"format_version": "flexfor-case/1", "network": network, "pcc_links": [link]}


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data"
    for meshed in (False, True):
        doc = case(meshed)
        path = out / (doc["network"]["name"] + ".json")
        path.write_text(json.dumps(doc, indent=2) + "\n")
        print(path)


if __name__ == "__main__":
    main()
