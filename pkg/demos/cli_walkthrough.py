"""The command line tool end to end, driven from Python.

Run with ``python demos/cli_walkthrough.py [OUT_DIR]``. It writes a
synthetic scene, runs a short benchmark from a TOML manifest, scores the
results and prints the first events of one trace. Each step is the same
as typing ``commsim <subcommand> ...`` in a shell.
"""

from __future__ import annotations

import sys
import tempfile
from pathlib import Path

from commsim.cli import main as commsim

MANIFEST = """\
scene = "{scene}"

[[episodes]]
kind = "delivery"
seed = 1
planner = "heuristic"

[[episodes]]
kind = "search"
seed = 2
planner = "random"
"""


def step(*argv) -> None:
    print("$ commsim", " ".join(map(str, argv)))
    code = commsim([str(a) for a in argv])
    if code:
        sys.exit(code)


def main(out: Path) -> None:
    scene = out / "town.json"
    step("synth", "--seed", 0, "--out", scene)
    manifest = out / "bench.toml"
    manifest.write_text(MANIFEST.format(scene=scene))
    step("run", "--manifest", manifest, "--steps", 300, "--out", out / "runs")
    step("eval", out / "runs" / "results")
    trace = sorted((out / "runs" / "traces").glob("*.jsonl"))[0]
    # a trace is JSON lines; the digest subcommand folds it into one hash
    print("first events:", *trace.read_text().splitlines()[:2], sep="\n  ")
    step("trace", trace, "--digest")


if __name__ == "__main__":
    if len(sys.argv) > 1:
        main(Path(sys.argv[1]))
    else:
        with tempfile.TemporaryDirectory() as d:
            main(Path(d))
