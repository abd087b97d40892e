import json
import sys

sent = 0


def control(obs):
    global sent
    if sent < 2:
        sent += 1
        return {"switch_lane": 1}
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
