"""Command-line benchmark front end.

Subcommands:
    generate   write a seeded synthetic dataset to a directory
    train      fit a speedup model on a dataset by imitation of the solver
    eval       run the method suite over a dataset, write metric reports
    verify     run the independent correctness suites, nonzero exit on failure
    dual       report dual bounds and duality gaps over a dataset
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from speedup_search.config import RunConfig, config_lines, resolve_config
from speedup_search.er_task import (
    ERFeatureExtractor,
    ERInstance,
    ERLayout,
    build_instance,
    plant_separable_set,
)
from speedup_search.evaluation import evaluate, metrics_lines, timing_lines
from speedup_search.ilp import solve_exact
from speedup_search.instance_io import dump_dataset, load_dataset
from speedup_search.lagrangian import solve_dual
from speedup_search.learning import train
from speedup_search.model import SpeedupModel
from speedup_search.verification import run_all_suites


def _wrap_dataset(problems, manifest) -> list[ERInstance]:
    out = []
    for problem in problems:
        layout = ERLayout.from_variable_count(problem.n_variables)
        out.append(
            ERInstance(
                problem=problem,
                layout=layout,
                difficulty=manifest.get("difficulty", "unknown"),
                separable=manifest.get("separable", False),
            )
        )
    return out


def cmd_generate(config: RunConfig, out_dir: str) -> int:
    rng = np.random.default_rng(config.seed)
    if config.separable:
        planted = plant_separable_set(
            config.count, config.entity_count, config.margin_target, rng
        )
        instances = planted.instances
        extra = {"certified_margin": planted.certified_margin}
    else:
        instances = [
            build_instance(config.entity_count, rng, config.difficulty)
            for _ in range(config.count)
        ]
        extra = {}
    manifest = {
        "seed": config.seed,
        "entity_count": config.entity_count,
        "difficulty": "separable" if config.separable else config.difficulty,
        "separable": config.separable,
        **extra,
    }
    dump_dataset([er.problem for er in instances], out_dir, manifest)
    print(f"wrote {len(instances)} instances to {out_dir}")
    return 0


def cmd_train(config: RunConfig, data_dir: str, model_path: str) -> int:
    problems, manifest = load_dataset(data_dir)
    instances = _wrap_dataset(problems, manifest)
    extractor = ERFeatureExtractor(instances[0].layout)
    result = train(
        [er.problem for er in instances],
        width=config.width,
        epochs=config.epochs,
        extractor=extractor,
    )
    result.model.save(model_path)
    print(
        f"trained on {len(instances)} instances: "
        f"{result.model.update_count} updates over {result.epochs_run} epochs, "
        f"converged={result.converged}, solver_failures={result.solver_failures}"
    )
    print(f"per-epoch updates: {result.model.epoch_log}")
    print(f"model written to {model_path}")
    return 0


def cmd_eval(config: RunConfig, data_dir: str, model_path: str, out_dir: str) -> int:
    problems, manifest = load_dataset(data_dir)
    instances = _wrap_dataset(problems, manifest)
    model = SpeedupModel.load(model_path)
    report = evaluate(
        instances,
        model,
        widths=config.widths,
        thetas=config.thetas,
        repeat=config.repeat,
        workers=config.workers,
    )
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
        fh.write("\n".join(metrics_lines(report)) + "\n")
    with open(os.path.join(out_dir, "timings.txt"), "w") as fh:
        fh.write("\n".join(timing_lines(report)) + "\n")
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write("\n".join(config_lines(config)) + "\n")
    for line in metrics_lines(report):
        print(line)
    print(f"reports written to {out_dir}")
    return 0


def cmd_verify(config: RunConfig) -> int:
    results = run_all_suites(config.seed)
    ok = True
    for result in results:
        for line in result.lines():
            print(line)
        ok = ok and result.passed
    return 0 if ok else 1


def cmd_dual(config: RunConfig, data_dir: str) -> int:
    problems, _ = load_dataset(data_dir)
    worst_gap = 0.0
    zero_gap = 0
    for idx, problem in enumerate(problems):
        primal = solve_exact(problem.clone_fresh()).objective
        dual = solve_dual(problem.clone_fresh())
        gap = primal - dual.dual_value
        worst_gap = max(worst_gap, gap)
        if abs(gap) < 1e-6:
            zero_gap += 1
        print(
            f"instance {idx}: primal={primal:.6f} dual={dual.dual_value:.6f} "
            f"gap={gap:.6g} iters={dual.iterations} converged={dual.converged}"
        )
    print(f"zero-gap instances: {zero_gap}/{len(problems)}; worst gap {worst_gap:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="speedup-search",
        description="Constraint-aware structured inference benchmark",
    )
    parser.add_argument("--config", help="key=value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int)
    p.add_argument("--entities", type=int, dest="entity_count")
    p.add_argument("--difficulty", choices=("easy", "medium", "hard"))
    p.add_argument("--seed", type=int)
    p.add_argument("--separable", action="store_true", default=None)
    p.add_argument("--margin", type=float, dest="margin_target")

    p = sub.add_parser("train", help="fit a speedup model")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--width", type=int)
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("eval", help="run the method suite")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--widths", type=lambda s: tuple(int(x) for x in s.split(",")))
    p.add_argument("--thetas", type=lambda s: tuple(float(x) for x in s.split(",")))
    p.add_argument("--repeat", type=int)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("verify", help="run correctness suites")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("dual", help="dual bounds over a dataset")
    p.add_argument("--data", required=True)

    return parser


_FLAG_KEYS = (
    "seed",
    "workers",
    "entity_count",
    "difficulty",
    "count",
    "width",
    "widths",
    "thetas",
    "epochs",
    "repeat",
    "margin_target",
    "separable",
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flags = {key: getattr(args, key, None) for key in _FLAG_KEYS}
    config = resolve_config(file_path=args.config, flag_values=flags)
    if args.command == "generate":
        return cmd_generate(config, args.out)
    if args.command == "train":
        return cmd_train(config, args.data, args.model)
    if args.command == "eval":
        return cmd_eval(config, args.data, args.model, args.out)
    if args.command == "verify":
        return cmd_verify(config)
    if args.command == "dual":
        return cmd_dual(config, args.data)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
