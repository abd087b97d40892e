import json
import sys

LENGTH = 5.0
TRIGGER_GAP = 20.0
HORIZON = 4.0
CLEARANCE = 7.0
requested = False


def nearest_lane(v, lane_width):
    return round((v["lane_id"] * lane_width + v["lat_offset"]) / lane_width)


def lane_is_free(obs, lane):
    ego = obs["ego"]
    w = obs["road"]["lane_width"]
    if lane not in obs["road"]["drivable_lanes"]:
        return False
    for o in obs["others"]:
        if nearest_lane(o, w) != lane:
            continue
        ds = o["s"] - ego["s"]
        dv = o["speed"] - ego["speed"]
        t = 0.0
        while t <= HORIZON:
            if abs(ds + dv * t) < CLEARANCE:
                return False
            t += 0.05
    return True


def threatened(obs):
    ego = obs["ego"]
    w = obs["road"]["lane_width"]
    lane = nearest_lane(ego, w)
    for o in obs["others"]:
        gap = o["s"] - ego["s"] - LENGTH
        if nearest_lane(o, w) == lane and 0.0 < o["s"] - ego["s"] and gap < TRIGGER_GAP:
            return True
    return False


def control(obs):
    global requested
    if requested or not threatened(obs):
        return {}
    lane = obs["ego"]["lane_id"]
    for direction in (1, -1):
        if lane_is_free(obs, lane + direction):
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
