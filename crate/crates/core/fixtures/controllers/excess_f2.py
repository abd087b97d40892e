import json
import sys


def control(obs):
    ego = obs["ego"]
    occupied = any(o["lane_id"] == ego["lane_id"] for o in obs["others"])
    if occupied:
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
