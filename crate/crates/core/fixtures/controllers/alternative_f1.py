import json
import sys


def control(obs):
    speed = obs["ego"]["speed"]
    if speed > 10:
        return {"target_speed": 0.5 * speed}
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
