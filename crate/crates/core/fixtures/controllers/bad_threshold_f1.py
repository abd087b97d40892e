import json
import sys

THRESHOLD = 14.0


def control(obs):
    return {"brake": obs["ego"]["speed"] > THRESHOLD}


def main():
    print("ready", flush=True)
    sys.stdin.readline()
    for line in sys.stdin:
        msg = json.loads(line)
        if msg["type"] == "end":
            break
        print(json.dumps(control(msg)), flush=True)


main()
