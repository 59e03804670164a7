"""Background traffic on a synthetic town.

Run with ``python demos/traffic_census.py``. Fifty cars and thirty
pedestrians circulate for ten simulated minutes. Every minute the script
reports the busiest segment and checks the two safety invariants:
a junction is never held by more than one vehicle, and no vehicle closes
the gap to its leader.
"""

from __future__ import annotations

from commsim.synth import synth_scene
from commsim.traffic import census, gap_violations, junction_occupancy, spawn_and_step_traffic, spawn_traffic
from commsim.worldmodel import WorldMap


def main(seed: int = 1) -> None:
    world = WorldMap(synth_scene(0))
    traffic = spawn_traffic(world, 50, 30, seed=seed)
    for minute in range(1, 11):
        for _ in range(60):
            spawn_and_step_traffic(world, traffic, seed, 1.0)
        rows = census(traffic)
        seg, busiest = max(rows.items(), key=lambda kv: sum(kv[1].values()))
        occ = max(junction_occupancy(world, traffic).values(), default=0)
        print(f"t={minute:2d} min  segments in use {len(rows):3d}  busiest #{seg} {busiest}  "
              f"max junction load {occ}  gap violations {len(gap_violations(traffic))}")


if __name__ == "__main__":
    main()
