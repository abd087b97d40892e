import json
import sys

LENGTH = 5.0
WIDTH = 2.0
set_speed = None


def lateral(v, lane_width):
    return v["lane_id"] * lane_width + v["lat_offset"]


def lead_vehicle(obs):
    ego = obs["ego"]
    w = obs["road"]["lane_width"]
    y = lateral(ego, w)
    ahead = [
        o for o in obs["others"]
        if o["s"] > ego["s"] and abs(lateral(o, w) - y) < WIDTH
    ]
    return min(ahead, key=lambda o: o["s"]) if ahead else None


def control(obs):
    global set_speed
    ego = obs["ego"]
    if set_speed is None:
        set_speed = ego["speed"]
    lead = lead_vehicle(obs)
    if lead is None:
        return {}
    gap = lead["s"] - ego["s"] - LENGTH
    desired = 5.0 + 1.5 * ego["speed"]
    target = lead["speed"] + 0.5 * (gap - desired)
    return {"target_speed": max(0.0, min(set_speed, target))}


def main():
    print("ready", flush=True)
    sys.stdin.readline()
    for line in sys.stdin:
        msg = json.loads(line)
        if msg["type"] == "end":
            break
        print(json.dumps(control(msg)), flush=True)


main()
