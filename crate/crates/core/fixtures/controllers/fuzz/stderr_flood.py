import json
import sys

print("ready", flush=True)
sys.stdin.readline()
for line in sys.stdin:
    msg = json.loads(line)
    if msg["type"] == "end":
        break
    sys.stderr.write("x" * 20000 + "\n")
    print(json.dumps({"brake": msg["ego"]["speed"] > 10}), flush=True)
