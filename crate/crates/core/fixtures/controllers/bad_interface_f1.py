import json
import sys


def control(obs):
    return {"brake": obs["ego"]["velocity"] > 10}


def main():
    print("ready", flush=True)
    sys.stdin.readline()
    for line in sys.stdin:
        msg = json.loads(line)
        if msg["type"] == "end":
            break
        print(json.dumps(control(msg)), flush=True)


main()
