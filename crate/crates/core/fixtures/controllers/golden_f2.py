import json
import sys


def control(obs):
    ego = obs["ego"]
    lanes = obs["road"]["drivable_lanes"]
    if abs(ego["lat_offset"]) > 1e-6:
        return {}
    occupied = any(o["lane_id"] == ego["lane_id"] for o in obs["others"])
    if occupied and ego["lane_id"] - 1 in lanes:
        return {"switch_lane": -1}
    return {}


def main():
    print("ready", flush=True)
    sys.stdin.readline()
    for line in sys.stdin:
        msg = json.loads(line)
        if msg["type"] == "end":
            break
        print(json.dumps(control(msg)), flush=True)


main()
