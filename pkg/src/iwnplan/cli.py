"""Command-line interface: ``iwnplan <command> ...``.

Commands: ``validate``, ``evaluate``, ``optimize``, ``joint-design`` and
``reproduce``. Exit codes:

    0  success / converged
    1  domain failure (invalid plan or deployment, no feasible layout,
       failed reproduction criterion)
    2  input or configuration error (unreadable file, bad value)
    3  optimization exhausted its budget without reaching the target
    4  network failure talking to the LLM endpoint

Run configs are JSON files with optional sections ``task``, ``radio``,
``optimizer``, ``llm`` and ``joint`` plus top-level ``plan``, ``seed`` and
``out``; flags given on the command line override the file. Plans may be
given as a path or as ``builtin:<name>`` for the shipped plans.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from .agents import JointDesignTask, NoFeasibleLayout, joint_design_pipeline
from .geometry import FloorPlan, InvalidPlan, PlanFormatError, loads_plan, save_plan, validate_plan
from .layout import OuterDoorSpec
from .llm import LlmClient, LlmEndpointConfig, LlmError, LlmProposer, scripted_proposer
from .optimizers import (
    AcoParams,
    AnnealParams,
    InvalidParams,
    InvalidTask,
    OptimizationTrace,
    PlanningTask,
    ProposerFailure,
    aco_optimize,
    greedy_worst_point_proposer,
    optimize_loop,
    simulated_annealing_optimize,
    trace_to_jsonl,
)
from .propagation import (
    Deployment,
    InvalidDeployment,
    InvalidGrid,
    RadioConfig,
    compute_grid,
    coverage_fraction,
    export_heatmap,
)

log = logging.getLogger("iwnplan")

EXIT_OK, EXIT_DOMAIN, EXIT_INPUT, EXIT_EXHAUSTED, EXIT_NETWORK = 0, 1, 2, 3, 4

BUILTIN_PLANS = ("reference_office", "reference_complex", "empty_room")
OPTIMIZERS = ("greedy", "aco", "anneal", "llm", "scripted")
STOCHASTIC = ("aco", "anneal")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config


@dataclass
class RunConfig:
    plan: str | None = None
    coverage_target: float = 0.95
    threshold: float = 110.0
    max_aps: int = 4
    max_iterations: int = 10
    cell_size: float = 0.25
    radio: dict[str, float] = field(default_factory=dict)
    optimizer: str = "greedy"
    params: dict[str, Any] = field(default_factory=dict)
    script: list[list[list[float]]] = field(default_factory=list)
    llm: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None
    out: str = "runs"
    run_id: str | None = None

    def validate(self) -> None:
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; choose from {', '.join(OPTIMIZERS)}")
        if self.optimizer in STOCHASTIC and self.seed is None:
            raise ConfigError(f"optimizer {self.optimizer} needs a seed")
        if self.optimizer == "scripted" and not self.script:
            raise ConfigError("optimizer scripted needs a script of deployments")
        if self.plan is None:
            raise ConfigError("no plan given")


TASK_KEYS = ("coverage_target", "threshold", "max_aps", "max_iterations", "cell_size")


def read_json(path: str | Path) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _section(doc: dict, name: str) -> dict:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return sec


def config_from_file(path: str | Path | None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    known = {"plan", "seed", "out", "task", "radio", "optimizer", "llm", "joint"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    if "plan" in doc:
        p = str(doc["plan"])
        # relative plan paths are relative to the config file
        cfg.plan = p if p.startswith("builtin:") or Path(p).is_absolute() else str(Path(path).parent / p)
    if "seed" in doc:
        cfg.seed = int(doc["seed"])
    if "out" in doc:
        cfg.out = str(doc["out"])
    task = _section(doc, "task")
    for k, v in task.items():
        if k not in TASK_KEYS:
            raise ConfigError(f"{path}: unknown task key {k!r}")
        setattr(cfg, k, type(getattr(cfg, k))(v))
    cfg.radio = dict(_section(doc, "radio"))
    opt = _section(doc, "optimizer")
    cfg.optimizer = str(opt.get("name", cfg.optimizer))
    cfg.params = dict(opt.get("params", {}))
    cfg.script = list(opt.get("script", []))
    cfg.llm = dict(_section(doc, "llm"))
    return cfg


def load_plan_arg(spec: str, strict: bool = True) -> FloorPlan:
    """Load a plan from a path or ``builtin:<name>``.

    Raises ConfigError for unreadable input and PlanFormatError for
    documents that do not parse.
    """
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTIN_PLANS:
            raise ConfigError(f"unknown builtin plan {name!r}; choose from {', '.join(BUILTIN_PLANS)}")
        text = resources.files("iwnplan").joinpath(f"data/plans/{name}.json").read_text()
    else:
        try:
            text = Path(spec).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read plan {spec}: {exc.strerror or exc}") from exc
    return loads_plan(text, strict=strict)


def radio_from(d: dict[str, Any]) -> RadioConfig:
    names = {f.name for f in fields(RadioConfig)}
    bad = set(d) - names
    if bad:
        raise ConfigError(f"unknown radio keys {sorted(bad)}")
    return RadioConfig(**{k: float(v) for k, v in d.items()})


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_ap(text: str) -> tuple[float, float]:
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"AP must be given as X,Y, got {text!r}") from exc
    return x, y


def deployment_from_doc(doc: Any, radio: RadioConfig) -> Deployment:
    """Accept ``{"aps": [{"x":..,"y":..}, ...]}`` or ``[[x, y], ...]``."""
    items = doc.get("aps") if isinstance(doc, dict) else doc
    if not isinstance(items, list):
        raise ConfigError('deployment must be a list of [x, y] or an object with "aps"')
    pts = []
    for i, it in enumerate(items):
        try:
            pts.append((float(it["x"]), float(it["y"])) if isinstance(it, dict) else (float(it[0]), float(it[1])))
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ConfigError(f"deployment entry {i} is malformed") from exc
    return Deployment.of(*pts, config=radio)


def _run_dir(out: str, seed: int | None, run_id: str | None) -> Path:
    rid = run_id or f"{time.strftime('%Y%m%d-%H%M%S')}-seed{seed if seed is not None else 'none'}"
    d = Path(out) / rid
    k = 1
    while run_id is None and d.exists():
        d = Path(out) / f"{rid}.{k}"
        k += 1
    d.mkdir(parents=True, exist_ok=True)
    return d


def _summary(trace: OptimizationTrace) -> str:
    best = trace.best
    cov = 0.0 if best is None else best.coverage
    n = 0 if best is None else len(best.deployment.aps)
    return f"{trace.outcome} {len(trace.steps)} {cov:.6f} {n}"


def _write_run(run: Path, plan: FloorPlan, task: PlanningTask, trace: OptimizationTrace) -> str:
    (run / "trace.jsonl").write_text(trace_to_jsonl(trace))
    save_plan(plan, run / "plan.json")
    best = trace.best
    if best is not None:
        export_heatmap(compute_grid(plan, best.deployment, task.cell_size), task.threshold, run / "heatmap.ppm")
    line = _summary(trace)
    (run / "summary.txt").write_text(line + "\n")
    return line


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args: argparse.Namespace) -> int:
    plan = load_plan_arg(args.plan, strict=False)
    report = validate_plan(plan)
    if not report:
        print("valid")
        return EXIT_OK
    for v in report:
        print(f"{v.kind}: {v.message}")
    return EXIT_DOMAIN


def _task_from(cfg: RunConfig, plan: FloorPlan) -> PlanningTask:
    return PlanningTask(
        plan,
        coverage_target=cfg.coverage_target,
        threshold=cfg.threshold,
        max_aps=cfg.max_aps,
        max_iterations=cfg.max_iterations,
        cell_size=cfg.cell_size,
        radio=radio_from(cfg.radio),
    )


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    for k in TASK_KEYS + ("optimizer", "seed", "out", "run_id", "plan"):
        v = getattr(args, k, None)
        if v is not None:
            setattr(cfg, k, v)
    for k in ("exponent", "reference_pathloss"):
        v = getattr(args, k, None)
        if v is not None:
            cfg.radio["pathloss_exponent" if k == "exponent" else k] = v
    for item in getattr(args, "param", None) or []:
        if "=" not in item:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        cfg.params[k] = _parse_value(v)
    if getattr(args, "script", None):
        doc = read_json(args.script)
        if not isinstance(doc, list):
            raise ConfigError("script file must hold a list of deployments")
        cfg.script = doc
    if getattr(args, "llm_url", None):
        cfg.llm["base_url"] = args.llm_url
    if getattr(args, "llm_model", None):
        cfg.llm["model"] = args.llm_model
    return cfg


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(config_from_file(args.config), args)
    if cfg.plan is None:
        raise ConfigError("no plan given")
    plan = load_plan_arg(cfg.plan)
    radio = radio_from(cfg.radio)
    if args.deployment:
        dep = deployment_from_doc(read_json(args.deployment), radio)
    elif args.ap:
        dep = Deployment.of(*(_parse_ap(a) for a in args.ap), config=radio)
    else:
        raise ConfigError("give --ap X,Y (repeatable) or --deployment FILE")
    try:
        grid = compute_grid(plan, dep, cfg.cell_size)
    except InvalidDeployment as exc:
        print(f"invalid deployment: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    stats = coverage_fraction(grid, cfg.threshold)
    print(json.dumps(stats.to_dict(), indent=2, sort_keys=True))
    if args.heatmap:
        export_heatmap(grid, cfg.threshold, args.heatmap)
    return EXIT_OK


def _run_optimizer(cfg: RunConfig, task: PlanningTask, run: Path) -> OptimizationTrace:
    p = dict(cfg.params)
    if cfg.optimizer == "greedy":
        return optimize_loop(task, greedy_worst_point_proposer)
    if cfg.optimizer == "aco":
        return aco_optimize(task, AcoParams(**{**p, "seed": cfg.seed}))
    if cfg.optimizer == "anneal":
        return simulated_annealing_optimize(task, AnnealParams(**{**p, "seed": cfg.seed}))
    if cfg.optimizer == "scripted":
        return optimize_loop(task, scripted_proposer([deployment_from_doc(d, task.radio) for d in cfg.script]))
    endpoint = LlmEndpointConfig(**cfg.llm)
    client = LlmClient(endpoint, log_path=run / "llm.jsonl")
    return optimize_loop(task, LlmProposer(endpoint, window=int(p.get("window", 5)), client=client))


def cmd_optimize(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(config_from_file(args.config), args)
    cfg.validate()
    plan = load_plan_arg(cfg.plan)
    try:
        task = _task_from(cfg, plan)
    except InvalidTask as exc:
        raise ConfigError(str(exc)) from exc
    run = _run_dir(cfg.out, cfg.seed, cfg.run_id)
    try:
        trace = _run_optimizer(cfg, task, run)
    except (TypeError, InvalidParams) as exc:
        raise ConfigError(f"bad optimizer parameters: {exc}") from exc
    except ProposerFailure as exc:
        line = _write_run(run, plan, task, exc.trace)
        print(line)
        print(f"run directory: {run}")
        if isinstance(exc.__cause__, LlmError):
            print(f"network failure: {exc.__cause__}", file=sys.stderr)
            return EXIT_NETWORK
        print(f"proposer failure: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    line = _write_run(run, plan, task, trace)
    print(line)
    print(f"run directory: {run}")
    return EXIT_OK if trace.outcome == "converged" else EXIT_EXHAUSTED


def _joint_task(args: argparse.Namespace) -> tuple[JointDesignTask, RunConfig]:
    doc = read_json(args.config) if args.config else {}
    joint = dict(_section(doc, "joint")) if isinstance(doc, dict) else {}
    cfg = config_from_file(args.config) if args.config else RunConfig(threshold=80.0)
    cfg = _apply_overrides(cfg, args)
    if args.config is None or "threshold" not in _section(doc, "task"):
        cfg.threshold = args.threshold if args.threshold is not None else 80.0
    for k in ("width", "depth", "n_candidates", "max_rounds", "w_coverage", "door_width", "door_material"):
        v = getattr(args, k, None)
        if v is not None:
            joint[k] = v
    if args.rooms:
        try:
            joint["room_sizes"] = [[float(a) for a in r.lower().split("x")] for r in args.rooms.split(",")]
        except ValueError as exc:
            raise ConfigError(f"--rooms expects WxD,WxD,..., got {args.rooms!r}") from exc
    if "room_sizes" in joint:
        joint["room_sizes"] = tuple(tuple(float(v) for v in r) for r in joint["room_sizes"])
    if "outer_door" in joint:
        joint["outer_door"] = OuterDoorSpec(**joint["outer_door"])
    if "w_coverage" in joint and "w_rationality" not in joint:
        joint["w_rationality"] = 1.0 - float(joint["w_coverage"])
    radio = radio_from(cfg.radio) if cfg.radio else JointDesignTask().radio
    names = {f.name for f in fields(JointDesignTask)}
    bad = set(joint) - names
    if bad:
        raise ConfigError(f"unknown joint keys {sorted(bad)}")
    try:
        task = JointDesignTask(
            **joint,
            coverage_target=cfg.coverage_target,
            threshold=cfg.threshold,
            max_aps=cfg.max_aps,
            max_iterations=cfg.max_iterations,
            cell_size=cfg.cell_size,
            radio=radio,
            seed=cfg.seed if cfg.seed is not None else 0,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, NoFeasibleLayout):
            raise
        raise ConfigError(str(exc)) from exc
    return task, cfg


def cmd_joint_design(args: argparse.Namespace) -> int:
    task, cfg = _joint_task(args)
    iwn = cfg.optimizer if args.iwn_backend is None else args.iwn_backend
    if iwn not in ("greedy", "aco", "llm"):
        raise ConfigError(f"IWN backend must be greedy, aco or llm, got {iwn!r}")
    client = None
    if "llm" in (args.layout_backend, args.entity_backend, iwn):
        client = LlmClient(LlmEndpointConfig(**cfg.llm))
    backend: Any = iwn
    if iwn == "llm":
        backend = LlmProposer(client.endpoint, client=client)
    run = _run_dir(cfg.out, task.seed, cfg.run_id)

    def show(rec):
        for c in rec.candidates:
            if c.score is None:
                print(f"round {c.round} cand {c.index:2d}  rejected: {c.error}")
            else:
                s = c.score
                print(
                    f"round {c.round} cand {c.index:2d}  coverage {s.coverage:.4f}  aps {s.ap_count}  "
                    f"efficiency {s.iwn_efficiency:.4f}  rationality {s.rationality:.2f}  overall {s.overall:.4f}"
                )
        print(f"round {rec.round} best-so-far overall {rec.best_overall:.4f} with {rec.best_ap_count} APs")

    try:
        result = joint_design_pipeline(task, args.layout_backend, args.entity_backend, backend, client, on_round=show)
    except NoFeasibleLayout as exc:
        print(f"no feasible layout: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ProposerFailure as exc:
        if isinstance(exc.__cause__, LlmError):
            print(f"network failure: {exc.__cause__}", file=sys.stderr)
            return EXIT_NETWORK
        raise
    except LlmError as exc:
        print(f"network failure: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    with (run / "rounds.jsonl").open("w") as fh:
        for rec in result.rounds:
            for c in rec.candidates:
                fh.write(json.dumps({**c.to_dict(), "feedback": rec.feedback}, sort_keys=True) + "\n")
    planning = task.planning_task(result.best.plan)
    line = _write_run(run, result.best.plan, planning, result.trace)
    s = result.score
    (run / "score.json").write_text(json.dumps(asdict(s), sort_keys=True, indent=2) + "\n")
    print(line)
    print(
        f"best layout {result.best.fingerprint()}: coverage {s.coverage:.4f} with {s.ap_count} APs, "
        f"efficiency {s.iwn_efficiency:.4f}, overall {s.overall:.4f}"
    )
    print(f"run directory: {run}")
    return EXIT_OK


def cmd_reproduce(args: argparse.Namespace) -> int:
    from .experiments import format_table, run_case1, run_case2

    kw: dict[str, Any] = {}
    if args.target is not None:
        kw["coverage_target"] = args.target
    if args.threshold is not None:
        kw["threshold"] = args.threshold
    if args.seed is not None:
        kw["seed"] = args.seed
    if "coverage_target" in kw and not 0 < kw["coverage_target"] <= 1:
        raise ConfigError(f"coverage target must be in (0, 1], got {kw['coverage_target']}")
    try:
        res = run_case1(**kw) if args.case == "case1" else run_case2(**kw)
    except (InvalidTask, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    print(format_table(res.criteria))
    print(f"{args.case}: {res.seconds:.1f} s")
    return EXIT_OK if all(c.passed for c in res.criteria) else EXIT_DOMAIN


# ---------------------------------------------------------------------------
# parser


def _task_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; flags override it")
    p.add_argument("--threshold", type=float, help="pathloss threshold in dB")
    p.add_argument("--target", dest="coverage_target", type=float, help="coverage target fraction")
    p.add_argument("--cell-size", type=float)
    p.add_argument("--exponent", type=float, help="pathloss exponent")
    p.add_argument("--reference-pathloss", type=float, help="pathloss at the reference distance, dB")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iwnplan", description="Indoor wireless network planning.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a plan file against its rules")
    p.add_argument("plan")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("evaluate", help="coverage statistics of one deployment")
    p.add_argument("plan", nargs="?")
    _task_flags(p)
    p.add_argument("--ap", action="append", help="AP position X,Y (repeatable)")
    p.add_argument("--deployment", help="JSON file with the deployment")
    p.add_argument("--heatmap", help="write a PPM heatmap here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("optimize", help="run one optimizer on a plan")
    p.add_argument("plan", nargs="?")
    _task_flags(p)
    p.add_argument("--optimizer", choices=OPTIMIZERS)
    p.add_argument("--max-aps", type=int)
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--param", action="append", help="optimizer parameter KEY=VALUE (repeatable)")
    p.add_argument("--script", help="JSON list of deployments for the scripted optimizer")
    p.add_argument("--llm-url", help="base URL of the chat-completions endpoint")
    p.add_argument("--llm-model")
    p.add_argument("--out", help="output directory (default runs)")
    p.add_argument("--run-id", help="name of the run directory (default timestamp and seed)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("joint-design", help="joint room layout and AP design")
    _task_flags(p)
    p.add_argument("--max-aps", type=int)
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--width", type=float)
    p.add_argument("--depth", type=float)
    p.add_argument("--rooms", help="room sizes WxD,WxD,...")
    p.add_argument("--door-width", type=float)
    p.add_argument("--door-material")
    p.add_argument("--n-candidates", type=int)
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--w-coverage", type=float)
    p.add_argument("--layout-backend", choices=("rule", "llm"), default="rule")
    p.add_argument("--entity-backend", choices=("rule", "llm"), default="rule")
    p.add_argument("--iwn-backend", choices=("greedy", "aco", "llm"))
    p.add_argument("--llm-url")
    p.add_argument("--llm-model")
    p.add_argument("--out")
    p.add_argument("--run-id")
    p.set_defaults(func=cmd_joint_design)

    p = sub.add_parser("reproduce", help="run a scenario and print a pass/fail table")
    p.add_argument("case", choices=("case1", "case2"))
    p.add_argument("--target", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_reproduce)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, PlanFormatError, InvalidGrid) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvalidPlan as exc:
        print(f"invalid plan: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
