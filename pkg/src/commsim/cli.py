"""Command-line entry points: ingest, synth, run, eval, trace and traffic.

Exit codes are a stable contract: 0 success, 2 usage or validation
problems, 3 internal errors.  Task failures inside ``run`` are data and
still exit 0.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import shlex
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import tomli

log = logging.getLogger("commsim")

EXIT_OK, EXIT_USAGE, EXIT_INTERNAL = 0, 2, 3
CONFIG_ENV = "OCS_CONFIG"
DEFAULT_STEPS = 1500
ASSISTANT_COLUMNS = ("SR", "Ts", "HR")
COMMUTE_COLUMNS = ("travel_time", "travel_price", "walk_km", "late_rate")


class UsageError(Exception):
    """Bad input from the user; maps to exit code 2."""


# --------------------------------------------------------------------------
# config


@dataclass
class RunConfig:
    scene: str = "synth:0"
    manifest: str | None = None
    kinds: list[str] = field(default_factory=lambda: ["delivery"])
    episodes: int = 1
    seed: int = 0
    steps: int = DEFAULT_STEPS
    planner: str = "heuristic"
    bindings: dict[str, str] = field(default_factory=dict)
    out: str = "runs"
    jobs: int = 1
    timeout: float = 30.0
    sim: dict = field(default_factory=dict)

    def check(self) -> None:
        if not self.scene.startswith("synth:") and not Path(self.scene).is_file():
            raise UsageError(f"scene {self.scene}: no such file")
        if self.manifest is not None and not Path(self.manifest).is_file():
            raise UsageError(f"manifest {self.manifest}: no such file")
        if self.steps < 1:
            raise UsageError("--steps must be positive")
        if self.jobs < 1:
            raise UsageError("--jobs must be positive")
        if self.timeout <= 0:
            raise UsageError("timeout must be positive")
        from .simcore import SimConfig

        try:
            SimConfig.from_overrides(self.sim)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"[sim] overrides: {exc}") from None


_CONFIG_KEYS = {"scene", "manifest", "kinds", "episodes", "seed", "steps", "planner", "bindings", "out", "jobs", "timeout", "sim"}


def load_config(path: str | None) -> dict:
    """Read a TOML config file. ``None`` falls back to $OCS_CONFIG, then to nothing."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config {path}: no such file")
    try:
        data = tomli.loads(p.read_text())
    except tomli.TOMLDecodeError as exc:
        raise UsageError(f"config {path}: {exc}") from None
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise UsageError(f"config {path}: unknown keys {sorted(unknown)}")
    if isinstance(data.get("kinds"), str):
        data["kinds"] = [data["kinds"]]
    return data


def resolve_run_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(**load_config(args.config))
    # flags win over the file
    for name in ("scene", "manifest", "seed", "steps", "planner", "out", "jobs", "episodes", "timeout"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if args.kind:
        cfg.kinds = list(args.kind)
    cfg.check()
    return cfg


# --------------------------------------------------------------------------
# scenes and manifests


def load_bundle(spec: str):
    from .geodata import GeoError, SceneBundle
    from .synth import synth_scene

    if spec.startswith("synth:"):
        try:
            return synth_scene(int(spec[6:]))
        except ValueError:
            raise UsageError(f"bad scene spec {spec!r}; expected synth:SEED") from None
    try:
        return SceneBundle.from_json(Path(spec).read_text())
    except FileNotFoundError:
        raise UsageError(f"scene {spec}: no such file") from None
    except (GeoError, ValueError, KeyError) as exc:
        raise UsageError(f"scene {spec}: {exc}") from None


_WORLDS: dict[str, object] = {}


def load_world(spec: str):
    if spec not in _WORLDS:
        from .worldmodel import WorldMap

        _WORLDS[spec] = WorldMap(load_bundle(spec))
    return _WORLDS[spec]


@dataclass(frozen=True)
class EpisodeSpec:
    kind: str
    seed: int
    planner: str
    bindings: tuple = ()  # ((agent id, planner spec), ...) overriding ``planner``

    @property
    def stem(self) -> str:
        slug = "exec" if self.planner.startswith("exec:") else self.planner
        return f"{self.kind}_{slug}_{self.seed:04d}"


def read_manifest(path: str, default_planner: str) -> tuple[str | None, list[EpisodeSpec]]:
    """Read a JSON or TOML manifest.

    Either a list of entries or a table with optional ``scene`` and an
    ``episodes`` list.  Entries carry ``kind`` and ``seed`` plus optional
    ``planner`` and ``bindings`` (agent id -> planner spec).
    """
    text = Path(path).read_text()
    try:
        data = tomli.loads(text) if path.endswith(".toml") else json.loads(text)
    except (ValueError, tomli.TOMLDecodeError) as exc:
        raise UsageError(f"manifest {path}: {exc}") from None
    scene = None
    if isinstance(data, dict):
        scene = data.get("scene")
        data = data.get("episodes")
    if not isinstance(data, list) or not data:
        raise UsageError(f"manifest {path}: expected a non-empty episode list")
    out = []
    for i, e in enumerate(data):
        if not isinstance(e, dict) or "kind" not in e or "seed" not in e:
            raise UsageError(f"manifest {path}: entry {i} needs kind and seed")
        bindings = tuple(sorted((e.get("bindings") or {}).items()))
        out.append(EpisodeSpec(e["kind"], int(e["seed"]), e.get("planner", default_planner), bindings))
    return scene, out


def episode_list(cfg: RunConfig) -> list[EpisodeSpec]:
    if cfg.manifest is not None:
        scene, eps = read_manifest(cfg.manifest, cfg.planner)
        if scene is not None and cfg.scene == RunConfig.scene:
            cfg.scene = scene
    else:
        binds = tuple(sorted(cfg.bindings.items()))
        eps = [EpisodeSpec(k, cfg.seed + i, cfg.planner, binds) for k in cfg.kinds for i in range(cfg.episodes)]
    return eps


def check_planners(eps: list[EpisodeSpec]) -> None:
    """Fail fast on unknown planner names and external commands that cannot be found."""
    from .planners import PLANNER_NAMES, UnknownPlanner, make_planner
    from .tasks.taskspec import KINDS

    for ep in eps:
        if ep.kind not in KINDS:
            raise UsageError(f"unknown task kind {ep.kind!r}")
        for spec in [ep.planner] + [p for _, p in ep.bindings]:
            if spec.startswith("exec:"):
                argv = shlex.split(spec[5:])
                if not argv:
                    raise UsageError("exec: planner needs a command")
                if shutil.which(argv[0]) is None:
                    raise UsageError(f"external planner command not found: {argv[0]}")
                continue
            if spec not in PLANNER_NAMES:
                raise UsageError(f"unknown planner {spec!r}; choose from {', '.join(PLANNER_NAMES)} or exec:CMD")
            try:
                make_planner(spec, ep.kind)
            except UnknownPlanner as exc:
                raise UsageError(str(exc)) from None


# --------------------------------------------------------------------------
# run


def _bindings_for(task, ep: EpisodeSpec, timeout: float) -> dict:
    from .planners import make_planner

    table = dict(ep.bindings)
    out = {}
    for k, aid in enumerate(task.controlled):
        spec = table.get(aid, ep.planner)
        out[aid] = make_planner(spec, task.kind, seed=ep.seed * 31 + k, timeout=timeout)
    return out


def run_one(scene: str, ep: EpisodeSpec, steps: int, sim: dict, timeout: float, out_dir: str) -> dict:
    """Generate, run and write one episode. Returns its summary row."""
    from .simcore import SimConfig, write_trace
    from .tasks import eval_assistant, eval_commute, generate_assistant_task, generate_commute_episode, run_episode

    world = load_world(scene)
    if ep.kind == "commute":
        task = generate_commute_episode(world, ep.seed)
    else:
        task = generate_assistant_task(world, ep.seed, ep.kind, step_limit=steps)
    bindings = _bindings_for(task, ep, timeout)
    result, state = run_episode(
        world, task, bindings, step_limit=steps, config=SimConfig.from_overrides(sim), planner_name=ep.planner
    )
    out = Path(out_dir)
    trace_rel = f"traces/{ep.stem}.jsonl"
    write_trace(state.trace, out / trace_rel)
    result.trace_path = trace_rel
    (out / "results" / f"{ep.stem}.json").write_text(result.to_json() + "\n")
    metrics = eval_commute(result) if ep.kind == "commute" else eval_assistant(result)
    return {"kind": ep.kind, "planner": ep.planner, "seed": ep.seed, "digest": result.digest, **metrics}


def _run_star(args):
    return run_one(*args)


SUMMARY_FIELDS = ("kind", "planner", "seed") + ASSISTANT_COLUMNS + COMMUTE_COLUMNS + ("digest",)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.1f}"
    return str(v)


def write_summary(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for r in rows:
            w.writerow([_fmt(r.get(f)) for f in SUMMARY_FIELDS])


def cmd_run(args) -> int:
    cfg = resolve_run_config(args)
    eps = episode_list(cfg)
    check_planners(eps)
    load_world(cfg.scene)  # surface scene problems before any work
    out = Path(cfg.out)
    (out / "results").mkdir(parents=True, exist_ok=True)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    jobs = [(cfg.scene, ep, cfg.steps, cfg.sim, cfg.timeout, str(out)) for ep in eps]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(_run_star, jobs))
    else:
        rows = [run_one(*j) for j in jobs]
    write_summary(rows, out / "summary.csv")
    for r in rows:
        line = f"{r['kind']} {r['planner']} seed={r['seed']}"
        if args.digest:
            line += f" digest={r['digest']}"
        print(line)
    print(f"{len(rows)} episodes written to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# eval


def aggregate(results) -> list[dict]:
    """Per-(kind, planner) means of the episode metrics, in sorted key order."""
    from .tasks import eval_assistant, eval_commute

    groups: dict[tuple[str, str], list[dict]] = {}
    for r in results:
        m = eval_commute(r) if r.kind == "commute" else eval_assistant(r)
        groups.setdefault((r.kind, r.planner), []).append(m)
    rows = []
    for (kind, planner), ms in sorted(groups.items()):
        row = {"kind": kind, "planner": planner, "episodes": len(ms)}
        for k in ms[0]:
            row[k] = sum(m[k] for m in ms) / len(ms)
        rows.append(row)
    return rows


EVAL_FIELDS = ("kind", "planner", "episodes") + ASSISTANT_COLUMNS + COMMUTE_COLUMNS


def format_eval(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVAL_FIELDS)
    for r in rows:
        w.writerow([_fmt(r.get(f)) for f in EVAL_FIELDS])
    return buf.getvalue()


def cmd_eval(args) -> int:
    from .tasks import EpisodeResult

    root = Path(args.results)
    if not root.is_dir():
        raise UsageError(f"{root}: no such directory")
    if (root / "results").is_dir():
        root = root / "results"
    files = sorted(root.glob("*.json"))
    if not files:
        raise UsageError(f"{root}: no result files")
    results = []
    for f in files:
        try:
            results.append(EpisodeResult.from_dict(json.loads(f.read_text())))
        except (ValueError, KeyError, TypeError) as exc:
            print(f"warning: skipping {f.name}: {exc}", file=sys.stderr)
    if not results:
        raise UsageError(f"{root}: no readable result files")
    sys.stdout.write(format_eval(aggregate(results)))
    return EXIT_OK


# --------------------------------------------------------------------------
# trace


class TraceError(UsageError):
    pass


def read_trace(path: str | Path) -> list[dict]:
    """Parse a JSONL trace; a malformed line raises TraceError naming its line number."""
    events = []
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise TraceError(f"{path}: no such file") from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    elif lines:
        # no final newline means the writer stopped mid-record
        raise TraceError(f"{path}:{len(lines)}: truncated line")
    for n, line in enumerate(lines, 1):
        try:
            rec = json.loads(line)
        except ValueError as exc:
            raise TraceError(f"{path}:{n}: malformed line ({exc.msg})") from None
        if not isinstance(rec, dict) or "tick" not in rec or "event" not in rec:
            raise TraceError(f"{path}:{n}: not a trace event")
        events.append(rec)
    return events


def digest_chain(events: list[dict]) -> list[str]:
    return [e["digest"] for e in events if e["event"] == "digest"]


def format_event(e: dict) -> str:
    rest = " ".join(f"{k}={json.dumps(v, sort_keys=True)}" for k, v in sorted(e.items()) if k not in ("tick", "event"))
    return f"{e['tick']:>6} {e['event']:<10} {rest}".rstrip()


def cmd_trace(args) -> int:
    events = read_trace(args.trace)
    if args.digest:
        chain = digest_chain(events)
        if not chain:
            raise TraceError(f"{args.trace}: no digest records")
        for d in chain[-args.tail :]:
            print(d)
        return EXIT_OK
    shown = sorted((e for e in events if e["event"] != "digest"), key=lambda e: e["tick"])
    if args.agent:
        shown = [e for e in shown if e.get("agent") == args.agent]
    if args.event:
        shown = [e for e in shown if e["event"] == args.event]
    for e in shown:
        print(format_event(e))
    return EXIT_OK


# --------------------------------------------------------------------------
# ingest / synth / traffic


def cmd_ingest(args) -> int:
    from .geodata import GeoError, ingest, parse_osm, read_elevation_csv

    texts = {}
    for label, p in (("osm", args.osm), ("elevation", args.elevation)):
        try:
            texts[label] = Path(p).read_text()
        except FileNotFoundError:
            raise UsageError(f"{p}: no such file") from None
    try:
        geo = parse_osm(texts["osm"])
        samples = read_elevation_csv(texts["elevation"])
        bundle, report = ingest(
            geo, samples, cell_size=args.cell, n_stops=args.stops, n_stations=args.stations, seed=args.seed,
            meta={"source": Path(args.osm).name},
        )
    except GeoError as exc:
        raise UsageError(f"ingest failed: {exc}") from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(bundle.to_json() + "\n")
    stats = {
        "roads": len(bundle.roads),
        "junctions": len(bundle.junctions),
        "buildings": len(bundle.buildings),
        "places": len(bundle.places),
        "bus_lines": len(bundle.bus_lines),
        "bike_stations": len(bundle.bike_stations),
    }
    rep = out.with_name(out.name + ".report.json")
    rep.write_text(json.dumps({"stats": stats, "warnings": report}, indent=1, sort_keys=True) + "\n")
    for w in report:
        print(f"warning: {w}", file=sys.stderr)
    print(" ".join(f"{k}={v}" for k, v in stats.items()))
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import synth_scene

    bundle = synth_scene(args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(bundle.to_json() + "\n")
    print(f"buildings={len(bundle.buildings)} places={len(bundle.places)} junctions={len(bundle.junctions)}")
    return EXIT_OK


def cmd_traffic(args) -> int:
    from .traffic import census_json, gap_violations, junction_occupancy, spawn_and_step_traffic, spawn_traffic

    world = load_world(args.scene)
    traffic = spawn_traffic(world, args.vehicles, args.pedestrians, args.seed)
    worst = 0
    gaps = 0
    for _ in range(args.ticks):
        spawn_and_step_traffic(world, traffic, args.seed, 1.0)
        worst = max([worst, *junction_occupancy(world, traffic).values()])
        gaps += len(gap_violations(traffic))
    text = census_json(traffic)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    print(f"ticks={args.ticks} max_junction_occupancy={worst} gap_violations={gaps}", file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="commsim", description="City-scale embodied agent simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="build a scene bundle from an OSM extract and elevation samples")
    s.add_argument("--osm", required=True)
    s.add_argument("--elevation", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--cell", type=float, default=10.0, help="heightfield cell size in metres")
    s.add_argument("--stops", type=int, default=6)
    s.add_argument("--stations", type=int, default=4)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("synth", help="write a synthetic scene bundle")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("run", help="run episodes and write results, traces and a summary")
    s.add_argument("--config", help=f"TOML config (default ${CONFIG_ENV})")
    s.add_argument("--scene", help="bundle path or synth:SEED")
    s.add_argument("--manifest")
    s.add_argument("--kind", action="append", help="task kind when no manifest is given (repeatable)")
    s.add_argument("--episodes", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--steps", type=int, help=f"step limit (default {DEFAULT_STEPS})")
    s.add_argument("--planner", help="NAME or exec:CMD")
    s.add_argument("--timeout", type=float, help="external planner reply timeout in seconds")
    s.add_argument("--out")
    s.add_argument("--jobs", type=int)
    s.add_argument("--digest", action="store_true", help="print each episode's final digest")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("eval", help="aggregate result files into a CSV table")
    s.add_argument("results")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("trace", help="dump a trace file")
    s.add_argument("trace")
    s.add_argument("--agent")
    s.add_argument("--event")
    s.add_argument("--digest", action="store_true", help="print the tail of the digest chain")
    s.add_argument("--tail", type=int, default=1)
    s.set_defaults(func=cmd_trace)

    s = sub.add_parser("traffic", help="run background traffic alone and dump the per-segment census")
    s.add_argument("--scene", default="synth:0")
    s.add_argument("--vehicles", type=int, default=50)
    s.add_argument("--pedestrians", type=int, default=30)
    s.add_argument("--ticks", type=int, default=600)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_traffic)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # argparse exits 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        # reader went away (e.g. piped into head); not an error
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    except KeyboardInterrupt:
        return EXIT_INTERNAL
    except Exception as exc:  # anything else is our bug
        log.exception("internal error")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
