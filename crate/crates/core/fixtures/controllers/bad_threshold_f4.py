import json
import sys

LENGTH = 5.0
TTC_TRIGGER = 0.1
requested = False


def ttc_in_lane(obs):
    ego = obs["ego"]
    best = None
    for o in obs["others"]:
        if o["lane_id"] != ego["lane_id"] or o["s"] <= ego["s"]:
            continue
        closing = ego["speed"] - o["speed"]
        if closing <= 0:
            continue
        ttc = max(0.0, o["s"] - ego["s"] - LENGTH) / closing
        best = ttc if best is None else min(best, ttc)
    return best


def lane_is_free(obs, lane):
    if lane not in obs["road"]["drivable_lanes"]:
        return False
    ego = obs["ego"]
    return all(o["lane_id"] != lane or abs(o["s"] - ego["s"]) > 10 for o in obs["others"])


def control(obs):
    global requested
    if requested:
        return {}
    ttc = ttc_in_lane(obs)
    if ttc is None or ttc > TTC_TRIGGER:
        return {}
    for direction in (1, -1):
        if lane_is_free(obs, obs["ego"]["lane_id"] + direction):
            requested = True
            return {"switch_lane": direction}
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
