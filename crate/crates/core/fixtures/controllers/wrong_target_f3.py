import json
import sys

LENGTH = 5.0
set_speed = None


def control(obs):
    global set_speed
    ego = obs["ego"]
    if set_speed is None:
        set_speed = ego["speed"]
    if not obs["others"]:
        return {}
    lead = obs["others"][0]
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
