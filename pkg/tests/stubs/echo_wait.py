"""Answers every request with a wait."""
import json
import sys

for line in sys.stdin:
    json.loads(line)
    print(json.dumps({"action": {"kind": "wait"}, "reason": "echo"}), flush=True)
