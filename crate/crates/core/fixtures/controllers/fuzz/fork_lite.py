import os
import sys
import time

pids = []
for _ in range(16):
    pid = os.fork()
    if pid == 0:
        time.sleep(300)
        os._exit(0)
    pids.append(pid)
path = os.environ.get("PID_FILE")
if path:
    with open(path, "a") as f:
        f.write("\n".join(str(p) for p in pids + [os.getpid()]) + "\n")
print("ready", flush=True)
sys.stdin.readline()
while True:
    time.sleep(1)
