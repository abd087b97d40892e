import json
import sys

LENGTH = 5.0
set_speed = None


def control(obs):
    global set_speed
    ego = obs["ego"]
    if set_speed is None:
        set_speed = ego["speed"]
    ahead = [o for o in obs["others"] if o["lane_id"] == ego["lane_id"] and o["s"] > ego["s"]]
    if not ahead:
        return {}
    lead = min(ahead, key=lambda o: o["s"])
    gap = lead["s"] - ego["s"] - LENGTH
    ttc = gap / (ego["speed"] - lead["speed"])
    if 0.0 < ttc < 3.0:
        return {"target_speed": 0.0}
    return {"target_speed": set_speed}


def main():
    print("ready", flush=True)
    sys.stdin.readline()
    for line in sys.stdin:
        msg = json.loads(line)
        if msg["type"] == "end":
            break
        print(json.dumps(control(msg)), flush=True)


main()
