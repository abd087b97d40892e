import sys
import time

print("ready", flush=True)
sys.stdin.readline()
while True:
    time.sleep(1)
