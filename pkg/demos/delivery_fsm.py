"""A heuristic courier carries three boxes into a shop.

Run with ``python demos/delivery_fsm.py``. The scene is a single street
with one building; the delivery automaton picks the boxes up from the
pavement, walks to the shop door, goes in and puts them on a table.
"""

from __future__ import annotations

import numpy as np

from commsim.geodata import Building, Heightfield, Place, RoadSegment, SceneBundle
from commsim.planners.fsm import DELIVERY_STATES, DeliveryFSM
from commsim.tasks import TaskSpec, eval_assistant, run_episode
from commsim.worldmodel import WorldMap


def street() -> WorldMap:
    hf = Heightfield((-100.0, -100.0), 400.0, np.zeros((2, 2)))
    road = RoadSegment(0, [(0.0, 0.0), (200.0, 0.0)], 6.0, 2, False, 1, 2, "residential")
    shop = Building(0, "Shop", [(40.0, 10.0), (60.0, 10.0), (60.0, 30.0), (40.0, 30.0)], 10.0, "retail")
    places = [Place(0, "Shop", "stores", 0, (50.0, 10.0))]
    return WorldMap(SceneBundle([road], [], [shop], places, [], [], hf))


def main() -> None:
    world = street()
    spots = [(80.0 + 0.8 * i, -6.0) for i in range(3)]
    task = TaskSpec(
        "delivery", 0,
        agents=[{"id": "a0", "pos": [100.0, -8.0], "heading": 3.14159, "cash": 10.0}],
        objects=[{"id": f"box{i}", "kind": "box", "position": list(p)} for i, p in enumerate(spots)],
        subtasks=[{"type": "deliver", "obj": f"box{i}", "source": {"point": list(p)}, "destination": 0, "bbox": []}
                  for i, p in enumerate(spots)],
        step_limit=300,
    )
    courier = DeliveryFSM()
    result, state = run_episode(world, task, {"a0": courier})

    # the automaton keeps its own transition log; print the distinct stages in order
    seen = []
    for _, to in courier.fsm.history:
        if not seen or seen[-1] != to:
            seen.append(to)
    print("stages:", " -> ".join(f"{s}:{DELIVERY_STATES.get(s, '?')}" for s in seen))
    print(f"finished after {result.ticks} ticks, success {result.success}")
    print("metrics:", eval_assistant(result))
    print("boxes now in place:", {k: o.place for k, o in state.objects.items()})


if __name__ == "__main__":
    main()
