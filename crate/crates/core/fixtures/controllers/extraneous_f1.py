import json
import sys


class Vehicle:
    def __init__(self, s, speed):
        self.s = s
        self.speed = speed

    def step(self, dt):
        self.s += self.speed * dt


def control(obs):
    return {"brake": obs["ego"]["speed"] > 10}


def simulate():
    ego = Vehicle(0.0, 33.33)
    for _ in range(100):
        ego.step(0.05)
    print("simulated", ego.s, flush=True)


simulate()


def main():
    print("ready", flush=True)
    sys.stdin.readline()
    for line in sys.stdin:
        msg = json.loads(line)
        if msg["type"] == "end":
            break
        print(json.dumps(control(msg)), flush=True)


main()
