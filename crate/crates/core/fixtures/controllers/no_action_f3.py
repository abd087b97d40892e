import json
import sys

LENGTH = 5.0


def control(obs):
    ego = obs["ego"]
    ahead = [o for o in obs["others"] if o["lane_id"] == ego["lane_id"] and o["s"] > ego["s"]]
    if ahead:
        lead = min(ahead, key=lambda o: o["s"])
        gap = lead["s"] - ego["s"] - LENGTH
        sys.stderr.write("gap %.2f\n" % gap)
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
