"""Reads a request and never answers in time."""
import sys
import time

for line in sys.stdin:
    time.sleep(float(sys.argv[1]) if len(sys.argv) > 1 else 5.0)
    print('{"action": {"kind": "wait"}}', flush=True)
