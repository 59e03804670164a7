"""Bridge to planners running in a separate process (for example an LLM wrapper).

Wire protocol: one JSON request per line on the child's stdin, one JSON
response per line on its stdout.  Requests carry ``tick``, ``agent_id``,
``observation``, ``tasks`` and ``history``; responses are validated against
``schemas/planner_protocol.schema.json``.
"""

from __future__ import annotations

import json
import logging
import queue
import shlex
import subprocess
import threading
from importlib import resources

import jsonschema

from ..simcore import INSIDE, Action, Observation
from .base import Planner

log = logging.getLogger(__name__)

TIMEOUT_REASON = "planner timeout"
BAD_PLAN_REASON = "bad plan"
DEFAULT_TIMEOUT = 30.0
HISTORY = 20


def protocol_schema() -> dict:
    return json.loads(resources.files("commsim").joinpath("schemas/planner_protocol.schema.json").read_text())


class PlannerProcess:
    """A child process speaking line-delimited JSON. Reads happen on a helper thread so timeouts are enforceable."""

    def __init__(self, command: str | list[str], timeout: float = DEFAULT_TIMEOUT):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self.proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.DEVNULL, text=True, bufsize=1
        )
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def request(self, payload: dict) -> str | None:
        """Send one request; return the raw response line, or None on timeout / closed pipe."""
        # drop late answers to earlier, timed-out requests
        while True:
            try:
                self._lines.get_nowait()
            except queue.Empty:
                break
        try:
            self.proc.stdin.write(json.dumps(payload, sort_keys=True) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError):
            return None
        try:
            return self._lines.get(timeout=self.timeout)
        except queue.Empty:
            return None

    def close(self):
        try:
            self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=2)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()


class ExternalPlanner(Planner):
    """Asks the child process for an action, a sub-plan, or a commute plan.

    A sub-plan is queued and executed one step per tick; ``goto`` steps are
    expanded by a local navigator.  Failures never raise: a timeout yields
    ``wait("planner timeout")`` and an unparsable or schema-violating reply
    yields ``wait("bad plan")``.
    """

    name = "external"

    def __init__(self, command, timeout: float = DEFAULT_TIMEOUT):
        self.command = command
        self.timeout = timeout
        self.proc: PlannerProcess | None = None
        self.agent_id = None
        self._validator = jsonschema.Draft202012Validator(protocol_schema())

    def reset(self, agent_id, task=None, world=None):
        super().reset(agent_id, task, world)
        if self.proc is None:
            self.proc = PlannerProcess(self.command, self.timeout)
        from ..nav import Navigator

        self.nav = Navigator(world) if world is not None else None
        self.queue: list[dict] = []
        self.history: list[dict] = []
        self.failures: list[str] = []
        self.commute_plan: list[dict] | None = None

    def _tasks(self) -> list[dict]:
        return list(self.task.subtasks) if self.task is not None else []

    def ask(self, obs: Observation) -> tuple[dict | None, str | None]:
        """Send one request; return (validated response, failure reason)."""
        req = {
            "tick": obs.sim_time,
            "agent_id": self.agent_id,
            "observation": obs.to_dict(),
            "tasks": self._tasks(),
            "history": self.history[-HISTORY:],
        }
        line = self.proc.request(req)
        if line is None:
            return None, TIMEOUT_REASON
        try:
            resp = json.loads(line)
            self._validator.validate(resp)
            if "action" in resp:
                Action.from_dict(resp["action"])
            for step in resp.get("plan", ()):
                if step["kind"] != "goto":
                    Action.from_dict(step)
        except (ValueError, jsonschema.ValidationError):
            return None, BAD_PLAN_REASON
        return resp, None

    def act(self, obs: Observation) -> Action:
        while self.queue:
            step = self.queue[0]
            if step["kind"] == "goto":
                a = self._goto(obs, step)
                if a is None:
                    self.queue.pop(0)
                    continue
                return self._record(a)
            self.queue.pop(0)
            return self._record(Action.from_dict(step))
        resp, err = self.ask(obs)
        if err is not None:
            self.failures.append(err)
            log.warning("external planner %s: %s", self.agent_id, err)
            return self._record(Action.wait(err))
        if "action" in resp:
            return self._record(Action.from_dict(resp["action"]))
        if "commute_plan" in resp:
            self.commute_plan = resp["commute_plan"]
            return self._record(Action.wait())
        self.queue = list(resp["plan"])
        return self.act(obs)

    def _goto(self, obs: Observation, step: dict) -> Action | None:
        if self.nav is None:
            return None
        if "place" in step:
            if obs.mode == INSIDE:
                return None if obs.current_place == step["place"] else Action.exit_place()
            target, radius = self.world.access_point(step["place"]), 1.0
        else:
            target, radius = tuple(step["point"]), 1.0
        return self.nav.step_toward(obs, target, radius)

    def _record(self, a: Action) -> Action:
        self.history.append(a.to_dict())
        return a

    def plan(self, world, start, destination: int):
        """Ask for a commute plan; fall back to walking when the reply is missing or unusable."""
        from .commute import CommutePlan, direct_walk_plan

        if self.proc is None:
            self.proc = PlannerProcess(self.command, self.timeout)
        req = {
            "tick": 0,
            "agent_id": self.agent_id,
            "observation": {"position": [float(start[0]), float(start[1])]},
            "tasks": [{"type": "commute", "destination": world.places[destination].name}],
            "history": [],
        }
        line = self.proc.request(req)
        reason = TIMEOUT_REASON
        if line is not None:
            try:
                resp = json.loads(line)
                self._validator.validate(resp)
                plan = CommutePlan.from_json_list(resp["commute_plan"], world)
                if plan.legs and plan.destination == destination:
                    return plan
                reason = BAD_PLAN_REASON
            except (ValueError, KeyError, jsonschema.ValidationError):
                reason = BAD_PLAN_REASON
        log.warning("external commute planner: %s, walking instead", reason)
        return direct_walk_plan(start, destination)

    def close(self):
        if self.proc is not None:
            self.proc.close()
            self.proc = None
