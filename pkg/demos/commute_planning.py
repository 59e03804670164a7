"""Walking versus tree-search commuting across a synthetic town.

Run with ``python demos/commute_planning.py``. One generated day is cut
down to its first two trips; each trip is planned twice, once as a
straight walk and once by Monte Carlo tree search over buses and bikes.
Both plans are then executed in the simulator.
"""

from __future__ import annotations

from commsim.planners.commute import DirectWalkPlanner, MctsCommutePlanner
from commsim.synth import synth_scene
from commsim.tasks import eval_commute, generate_commute_episode
from commsim.tasks.runner import run_commute
from commsim.worldmodel import WorldMap


def main(seed: int = 3) -> None:
    world = WorldMap(synth_scene(0))
    task = generate_commute_episode(world, seed)
    task.commutes = task.commutes[:2]
    task.subtasks = task.subtasks[:2]
    for c in task.commutes:
        a, b = world.places[c["origin"]], world.places[c["destination"]]
        print(f"trip {a.name} -> {b.name}, {c['deadline'] - c['depart']} s allowed")

    for planner in (DirectWalkPlanner(), MctsCommutePlanner(budget=2000, seed=seed)):
        for c in task.commutes:
            plan = planner.plan(world, world.places[c["origin"]].door, c["destination"])
            print(f"  {planner.name:>6}: " + ", ".join(leg.transit_type for leg in plan.legs))
        result, state = run_commute(world, task, {"a0": planner})
        m = eval_commute(result)
        print(f"  {planner.name:>6} executed: {m['travel_time']:.1f} min, price {m['travel_price']:.2f}, "
              f"walked {m['walk_km']:.2f} km, late {m['late_rate']:.0f}%")


if __name__ == "__main__":
    main()
