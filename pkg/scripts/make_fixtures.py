"""Regenerate the shipped example label space and requirement set.

The files are illustrative: a 41-label road-scene vocabulary (10 agents,
19 actions, 12 locations) and 243 hand-designed clauses over it.

    python scripts/make_fixtures.py
"""

from itertools import combinations
from pathlib import Path

AGENTS = ["Ped", "Car", "Cyc", "Mobike", "MedVeh", "LarVeh", "Bus", "EmVeh", "TL", "OthTL"]
ACTIONS = [
    "Red", "Amber", "Green", "MovAway", "MovTow", "Mov", "Brake", "Stop", "IncatLft", "IncatRht",
    "HazLit", "TurLft", "TurRht", "Ovtak", "Wait2X", "XingFmLft", "XingFmRht", "Xing", "PushObj",
]
LOCATIONS = [
    "VehLane", "OutgoLane", "OutgoCycLane", "IncomLane", "IncomCycLane", "Pav",
    "LftPav", "RhtPav", "Jun", "xing", "BusStop", "parking",
]

LIGHTS = ["TL", "OthTL"]
COLOURS = ["Red", "Amber", "Green"]
ROAD_AGENTS = [a for a in AGENTS if a not in LIGHTS]
MOTOR = ["Car", "MedVeh", "LarVeh", "Bus", "EmVeh"]
LANES = ["VehLane", "OutgoLane", "OutgoCycLane", "IncomLane", "IncomCycLane"]
PAVEMENTS = ["Pav", "LftPav", "RhtPav"]
MOVING = ["MovAway", "MovTow", "Mov", "Ovtak", "TurLft", "TurRht", "XingFmLft", "XingFmRht", "Xing"]


def nand(a, b):
    return f"!{a} | !{b}"


def implies_any(a, bs):
    return " | ".join([f"!{a}"] + list(bs))


def clauses():
    out = []
    out.append(" | ".join(AGENTS))
    out += [nand(a, b) for a, b in combinations(AGENTS, 2)]
    out += [implies_any(c, LIGHTS) for c in COLOURS]
    out += [nand(a, b) for a, b in combinations(COLOURS, 2)]
    out += [nand(light, act) for light in LIGHTS for act in ACTIONS if act not in COLOURS]
    out += [nand(light, loc) for light in LIGHTS for loc in LOCATIONS]
    out += [nand(agent, c) for agent in ROAD_AGENTS for c in COLOURS]
    out += [nand("Stop", m) for m in MOVING]
    out += [nand("MovAway", "MovTow"), nand("TurLft", "TurRht"), nand("XingFmLft", "XingFmRht"),
            nand("IncatLft", "IncatRht")]
    out.append(implies_any("PushObj", ["Ped"]))
    out += [implies_any(a, ["Ped", "Cyc"]) for a in ("Xing", "XingFmLft", "XingFmRht", "Wait2X")]
    out += [nand("Ped", a) for a in ("IncatLft", "IncatRht", "HazLit", "Brake", "Ovtak")]
    out += [nand(p, lane) for p in PAVEMENTS for lane in LANES]
    out += [nand("OutgoLane", "IncomLane"), nand("OutgoCycLane", "IncomCycLane"),
            nand("OutgoLane", "IncomCycLane"), nand("OutgoCycLane", "IncomLane"),
            nand("LftPav", "RhtPav"), nand("Pav", "LftPav"), nand("Pav", "RhtPav")]
    out += [nand(v, p) for v in MOTOR for p in PAVEMENTS]
    out += [nand(v, lane) for v in MOTOR for lane in ("OutgoCycLane", "IncomCycLane")]
    out += [implies_any(agent, [a for a in ACTIONS if a not in COLOURS]) for agent in ROAD_AGENTS]
    out += [implies_any(agent, LOCATIONS) for agent in ROAD_AGENTS]
    out += [implies_any(light, COLOURS) for light in LIGHTS]
    out += [nand("parking", lane) for lane in ("VehLane", "OutgoLane", "IncomLane")]
    out.append(implies_any("BusStop", ["Bus", "Ped"]))
    out += [nand("xing", p) for p in PAVEMENTS]
    out.append(implies_any("Xing", ["xing", "Jun"]))
    out += [nand("Wait2X", m) for m in ("Mov", "MovAway", "MovTow", "Xing", "XingFmLft", "XingFmRht")]
    out += [nand("Xing", "XingFmLft"), nand("Xing", "XingFmRht"), nand("Ovtak", "Brake"),
            nand("Ovtak", "Wait2X"), nand("PushObj", "Stop"), nand("TurLft", "IncatRht"),
            nand("TurRht", "IncatLft")]
    out.append(implies_any("Brake", ["Mov", "MovAway", "MovTow"]))
    out.append(nand("parking", "Ovtak"))
    return out


def main():
    data = Path(__file__).resolve().parents[1] / "src" / "modcl" / "data"
    labels = [(n, "agent") for n in AGENTS] + [(n, "action") for n in ACTIONS] + [(n, "location") for n in LOCATIONS]
    assert len(labels) == 41
    cs = clauses()
    assert len(cs) == 243, len(cs)
    assert len(set(cs)) == len(cs)
    (data / "road_labels.txt").write_text(
        "# Example road-scene label space: name group\n" + "".join(f"{n} {g}\n" for n, g in labels)
    )
    (data / "road_requirements.txt").write_text(
        "# Example requirements: one clause per line, '|' separated, '!' negation\n" + "".join(c + "\n" for c in cs)
    )


if __name__ == "__main__":
    main()
