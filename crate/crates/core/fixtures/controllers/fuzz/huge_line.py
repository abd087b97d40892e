import sys

print("ready", flush=True)
sys.stdin.readline()
sys.stdin.readline()
sys.stdout.write('{"brake": false, "pad": "' + "x" * (1 << 20) + '"}\n')
sys.stdout.flush()
sys.stdin.readline()
