"""Command-line entry points: generate, solve, evaluate, compare, label,
train-rl, and train-il.

Every run that writes an output also writes a metadata sidecar (versions,
config hash, generator parameters, default-selector note, wall time) next to
it. Outputs themselves contain no timestamps, so a repeated command with the
same seed and config is byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bench import compare, evaluate, read_csv, to_csv
from .generators import GeneratorSpec, generate
from .milp import FILE_SUFFIX, load, save
from .training import (
    RlTrainer,
    TrainerConfig,
    il_accuracy,
    label_sb,
    load_dataset,
    save_dataset,
    train_il,
)

SELECTOR_NOTE = "best_first approximates the reference default node selector"


class UsageError(ValueError):
    """Bad invocation (exit code 2), as opposed to a runtime failure (1)."""


def _sidecar(path: Path, command: str, args: dict, extra: dict | None = None) -> None:
    meta = {
        "command": command,
        "arguments": {k: v for k, v in sorted(args.items())},
        "package_version": __version__,
        "numpy_version": np.__version__,
        "selector_note": SELECTOR_NOTE,
        "wall_seconds": args.pop("_wall_seconds", None),
    }
    if extra:
        meta.update(extra)
    side = path.with_name(path.name + ".meta.json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))


def _spec_from_args(args) -> GeneratorSpec:
    return GeneratorSpec(
        problem_class=args.problem_class,
        rows=args.rows, cols=args.cols, density=args.density,
        cost_low=args.cost_low, cost_high=args.cost_high,
        items=args.items, bids=args.bids,
        customers=args.customers, facilities=args.facilities,
        graph_nodes=args.graph_nodes, affinity=args.affinity,
        seed=args.seed,
    )


def _add_generator_args(sub) -> None:
    sub.add_argument("--class", dest="problem_class", required=True,
                     choices=["set_covering", "combinatorial_auction",
                              "capacitated_facility_location",
                              "maximum_independent_set"])
    sub.add_argument("--rows", type=int, default=100)
    sub.add_argument("--cols", type=int, default=200)
    sub.add_argument("--density", type=float, default=0.05)
    sub.add_argument("--cost-low", type=int, default=1)
    sub.add_argument("--cost-high", type=int, default=100)
    sub.add_argument("--items", type=int, default=10)
    sub.add_argument("--bids", type=int, default=50)
    sub.add_argument("--customers", type=int, default=5)
    sub.add_argument("--facilities", type=int, default=5)
    sub.add_argument("--graph-nodes", type=int, default=25)
    sub.add_argument("--affinity", type=int, default=4)


def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    spec = _spec_from_args(args)
    names = []
    for i in range(args.count):
        inst = generate(spec.replace(seed=args.seed + i))
        path = out / f"{inst.name}{FILE_SUFFIX}"
        save(inst, path)
        names.append(path.name)
    meta_args = {**vars(args), "_wall_seconds": time.perf_counter() - t0}
    meta_args.pop("func", None)
    _sidecar(out / "instances", "generate", meta_args,
             {"generator_parameters": spec.params(), "files": names})
    print(f"wrote {len(names)} instances to {out}")
    return 0


def _load_instances(paths_or_dir):
    paths = []
    for item in paths_or_dir:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.glob(f"*{FILE_SUFFIX}")))
        else:
            paths.append(p)
    if not paths:
        raise UsageError(f"no instance files in {paths_or_dir}")
    return [load(p) for p in paths]


def cmd_solve(args) -> int:
    instances = _load_instances(args.instances)
    t0 = time.perf_counter()
    records = evaluate(instances, args.policy, args.selector, seed=args.seed,
                       max_nodes=args.max_nodes, max_seconds=args.time_limit,
                       checkpoint=args.checkpoint)
    text = to_csv(records)
    if args.out:
        out = Path(args.out)
        out.write_text(text)
        meta_args = {**vars(args), "_wall_seconds": time.perf_counter() - t0}
        meta_args.pop("func", None)
        _sidecar(out, "solve", meta_args,
                 {"wall_ms_per_instance": [round(r.wall_ms, 3) for r in records]})
    else:
        sys.stdout.write(text)
    return 0


def cmd_evaluate(args) -> int:
    instances = _load_instances([args.instances])
    t0 = time.perf_counter()
    records = evaluate(instances, args.policy, args.selector, seed=args.seed,
                       max_nodes=args.max_nodes, max_seconds=args.time_limit,
                       checkpoint=args.checkpoint)
    out = Path(args.out)
    out.write_text(to_csv(records))
    meta_args = {**vars(args), "_wall_seconds": time.perf_counter() - t0}
    meta_args.pop("func", None)
    _sidecar(out, "evaluate", meta_args,
             {"wall_ms_per_instance": [round(r.wall_ms, 3) for r in records]})
    print(f"wrote {len(records)} records to {out}")
    return 0


def cmd_compare(args) -> int:
    report = compare(read_csv(args.baseline), read_csv(args.candidate))
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
        meta_args = {k: v for k, v in vars(args).items() if k != "func"}
        _sidecar(Path(args.out), "compare", meta_args)
    else:
        print(text)
    return 0


def cmd_label(args) -> int:
    spec = _spec_from_args(args)
    t0 = time.perf_counter()
    train, valid = label_sb(spec, args.num_train, args.num_valid,
                            explore_prob=args.explore_prob, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset({"train": train, "valid": valid}, out)
    meta_args = {**vars(args), "_wall_seconds": time.perf_counter() - t0}
    meta_args.pop("func", None)
    _sidecar(out, "label", meta_args,
             {"generator_parameters": spec.params(),
              "train_samples": len(train), "valid_samples": len(valid)})
    print(f"labelled {len(train)} train / {len(valid)} valid samples -> {out}")
    return 0


def cmd_train_rl(args) -> int:
    config = TrainerConfig.from_file(args.config) if args.config else TrainerConfig()
    spec = _spec_from_args(args)
    out = Path(args.out)
    t0 = time.perf_counter()
    trainer = RlTrainer(config, spec, seed=args.seed)
    trainer.train(epochs=args.epochs, eval_every=args.eval_every,
                  num_val=args.num_val, out_dir=out)
    meta_args = {**vars(args), "_wall_seconds": time.perf_counter() - t0}
    meta_args.pop("func", None)
    _sidecar(out / "run", "train-rl", meta_args,
             {"config_hash": config.config_hash(),
              "generator_parameters": spec.params(),
              "learner_steps": trainer.learner_steps,
              "episodes": len(trainer.episode_records)})
    print(f"trained {trainer.learner_steps} learner steps -> {out}")
    return 0


def cmd_train_il(args) -> int:
    from .qnet import save as save_net

    data = load_dataset(args.dataset)
    t0 = time.perf_counter()
    params, history = train_il(data["train"], data["valid"], epochs=args.epochs,
                               seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_net(params, out / "il.qnet.json")
    (out / "il_history.json").write_text(json.dumps(history, indent=2))
    meta_args = {**vars(args), "_wall_seconds": time.perf_counter() - t0}
    meta_args.pop("func", None)
    _sidecar(out / "run", "train-il", meta_args,
             {"final_valid_accuracy": il_accuracy(params, data["valid"])})
    print(f"imitation training done -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rlbnb",
        description="Branch-and-bound MILP solving with learned branching.")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("generate", help="write benchmark instances")
    _add_generator_args(gen)
    gen.add_argument("--count", type=int, default=1)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_generate)

    sol = subs.add_parser("solve", help="solve instance files, print records")
    sol.add_argument("instances", nargs="+")
    sol.add_argument("--policy", default="sb",
                     choices=["sb", "pb", "random", "mf", "most_fractional", "neural"])
    sol.add_argument("--selector", default="best_first",
                     choices=["best_first", "dfs", "bfs"])
    sol.add_argument("--checkpoint")
    sol.add_argument("--seed", type=int, default=0)
    sol.add_argument("--max-nodes", type=int)
    sol.add_argument("--time-limit", type=float, default=3600.0)
    sol.add_argument("--out")
    sol.set_defaults(func=cmd_solve)

    ev = subs.add_parser("evaluate", help="evaluate a policy over a directory")
    ev.add_argument("--instances", required=True)
    ev.add_argument("--policy", required=True,
                    choices=["sb", "pb", "random", "mf", "most_fractional", "neural"])
    ev.add_argument("--selector", default="best_first",
                    choices=["best_first", "dfs", "bfs"])
    ev.add_argument("--checkpoint")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--max-nodes", type=int)
    ev.add_argument("--time-limit", type=float, default=3600.0)
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_evaluate)

    cmp_ = subs.add_parser("compare", help="compare two evaluation CSVs")
    cmp_.add_argument("--baseline", required=True)
    cmp_.add_argument("--candidate", required=True)
    cmp_.add_argument("--out")
    cmp_.set_defaults(func=cmd_compare)

    lab = subs.add_parser("label", help="explore-then-strong-branch labelling")
    _add_generator_args(lab)
    lab.add_argument("--num-train", type=int, required=True)
    lab.add_argument("--num-valid", type=int, required=True)
    lab.add_argument("--explore-prob", type=float, default=0.05)
    lab.add_argument("--seed", type=int, default=0)
    lab.add_argument("--out", required=True)
    lab.set_defaults(func=cmd_label)

    trl = subs.add_parser("train-rl", help="train the branching agent with DQN")
    _add_generator_args(trl)
    trl.add_argument("--config", help="JSON TrainerConfig file")
    trl.add_argument("--epochs", type=int, required=True)
    trl.add_argument("--eval-every", type=int, default=0)
    trl.add_argument("--num-val", type=int, default=0)
    trl.add_argument("--seed", type=int, default=0)
    trl.add_argument("--out", required=True)
    trl.set_defaults(func=cmd_train_rl)

    til = subs.add_parser("train-il", help="imitation training from labels")
    til.add_argument("--dataset", required=True)
    til.add_argument("--epochs", type=int, default=10)
    til.add_argument("--seed", type=int, default=0)
    til.add_argument("--out", required=True)
    til.set_defaults(func=cmd_train_il)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 1
    except Exception as exc:  # surfaced as exit code 1 with a message
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
