"""Experiment harness: generate networks, learn, post-optimize, evaluate.

All randomness flows from one root seed through named substreams (generation,
learning, evaluation sampling, boundary optimization, experts), so any stage
can be reproduced in isolation. Exit codes: 0 success, 1 configuration error,
2 success but degraded by hitting the budget cap.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from .datagen import make_expert, random_network, sample
from .discretize import MemoryCapError, normalize
from .fitness import Evaluator, FittedModel, build_model, model_complexity, node_contribution
from .metrics import kl_to_truth, structure_score
from .mo_search import run_mo
from .model import Dag, SolutionModel, dag_from_genotype
from .postopt import model_fitness, optimize_boundaries
from .so_search import run_so
from . import serialize
from .discretize import assign_bins

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2

# substream purposes
S_GENERATE, S_LEARN, S_EVALUATE, S_POSTOPT, S_EXPERT = 0, 1, 2, 3, 4


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def run_config_hash(args) -> str:
    """Hash of the semantic run parameters; paths and plumbing excluded."""
    skip = {"func", "command", "out", "data", "network", "solution", "archive", "expert"}
    return serialize.config_hash({k: v for k, v in vars(args).items() if k not in skip})


def _out_dir(path: str) -> Path:
    root = os.environ.get("BNMIX_OUTPUT_ROOT", "")
    out = Path(root) / path if root and not os.path.isabs(path) else Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _breakdown_of(model: SolutionModel, data) -> "object":
    from .fitness import FitnessBreakdown

    assignment = assign_bins(data, model)
    n_vars = len(data.meta)
    ll = np.zeros(n_vars)
    c = np.zeros(n_vars)
    for i in range(n_vars):
        ll[i], c[i] = node_contribution(i, assignment, model.dag, data.n)
    return FitnessBreakdown(ll, c)


def cmd_generate(args) -> int:
    out = _out_dir(args.out)
    chash = run_config_hash(args)
    for i in range(args.n_networks):
        rng = substream(args.seed, S_GENERATE, i)
        net = random_network(args.n_vars, args.dist, rng)
        data = sample(net, args.n_samples, rng)
        serialize.save_network(net, out / f"network_{i:03d}.json", args.seed, chash)
        serialize.save_dataset(data, out / f"data_{i:03d}.csv", args.seed, chash)
        if args.with_expert:
            expert = make_expert(net, substream(args.seed, S_EXPERT, i))
            serialize.save_expert(expert, net.n_vars, out / f"expert_{i:03d}.json", args.seed, chash)
    print(f"wrote {args.n_networks} networks to {out}")
    return EXIT_OK


def _default_bin_max(args) -> int:
    if args.bin_max is not None:
        return args.bin_max
    return 9 if args.mode == "mo" else 15


def _learn_one(args, data, rng, tag: str, out: Path, chash: str, expert_path=None):
    """Run one learning cell; returns (status, wall_time_s, evaluations)."""
    bin_max = _default_bin_max(args)
    t0 = time.perf_counter()
    if args.mode == "so":
        res = run_so(
            data,
            rng,
            policy=args.disc,
            bin_min=args.bin_min,
            bin_max=bin_max,
            max_evaluations=args.budget_evals,
            max_seconds=args.budget_seconds,
            stall_cycles=args.stall_cycles,
        )
        wall = time.perf_counter() - t0
        model = build_model(res.best.genotype, data, args.disc, args.bin_min, bin_max)
        serialize.save_solution(
            out / f"solution{tag}.json",
            res.best.genotype,
            model,
            res.best.breakdown,
            args.seed,
            chash,
            extra={"policy": args.disc, "bin_min": args.bin_min, "bin_max": bin_max,
                   "status": res.status, "evaluations": res.evaluations},
        )
        serialize.write_runlog(out / f"runlog{tag}.jsonl", res.log)
        return res.status, wall, res.evaluations
    # mo
    if expert_path is None:
        raise ValueError("--expert is required in mo mode")
    expert = serialize.load_expert(expert_path)
    expert_model = FittedModel(expert.to_solution_model(data.meta), data)
    res = run_mo(
        data,
        expert_model,
        rng,
        policy=args.disc,
        bin_min=args.bin_min,
        bin_max=bin_max,
        mc_kl=args.mc_kl,
        max_evaluations=args.budget_evals,
        max_seconds=args.budget_seconds,
        stall_cycles=args.stall_cycles,
    )
    wall = time.perf_counter() - t0
    serialize.save_archive(out / f"archive{tag}.csv", res.archive.entries, args.seed, chash)
    serialize.write_runlog(out / f"runlog{tag}.jsonl", res.log)
    return res.status, wall, res.evaluations


def cmd_learn(args) -> int:
    if args.budget_evals is None and args.budget_seconds is None:
        print("config error: set --budget-evals and/or --budget-seconds", file=sys.stderr)
        return EXIT_CONFIG
    if args.mode == "mo" and args.disc == "bd":
        print("config error: bd discretization is not available in mo mode", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args.out)
    chash = run_config_hash(args)
    data = normalize(serialize.load_dataset(args.data))
    rng = substream(args.seed, S_LEARN)
    try:
        status, wall, evals = _learn_one(args, data, rng, "", out, chash, args.expert)
    except MemoryCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"status={status} wall_time_s={wall:.2f} evaluations={evals:.1f}")
    return EXIT_BUDGET if status == "budget" else EXIT_OK


def cmd_postopt(args) -> int:
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    chash = run_config_hash(args)
    data = normalize(serialize.load_dataset(args.data))
    doc = serialize.load_solution(args.solution)
    n = len(data.meta)
    model = SolutionModel(
        Dag.from_edges(n, [tuple(e) for e in doc["edges"]]),
        tuple(doc["bins"]),
        {int(v): np.array(b) for v, b in doc["boundaries"].items()},
    )
    log: list = []
    rng = substream(args.seed, S_POSTOPT)
    optimized = optimize_boundaries(model, data, rng, max_evaluations=args.budget_evals, log=log)
    breakdown = _breakdown_of(optimized, data)
    serialize.save_solution(
        out_path,
        doc["genotype"],
        optimized,
        breakdown,
        args.seed,
        chash,
        extra={"policy": doc.get("policy", "ew"), "post_optimized": True},
    )
    serialize.write_runlog(out_path.with_suffix(".runlog.jsonl"), log)
    print(f"fitness {model_fitness(model, data):.4f} -> {model_fitness(optimized, data):.4f}")
    return EXIT_OK


def _evaluate_solution(net, data, model, fitness, test_samples, seed):
    test = sample(net, test_samples, substream(seed, S_EVALUATE))
    fitted = FittedModel(model, data)
    score = structure_score(model.dag, net.dag)
    kl = kl_to_truth(fitted, net, test, data.normalization)
    return score, kl


def cmd_evaluate(args) -> int:
    if (args.solution is None) == (args.archive is None):
        print("config error: pass exactly one of --solution / --archive", file=sys.stderr)
        return EXIT_CONFIG
    net = serialize.load_network(args.network)
    raw = serialize.load_dataset(args.data)
    data = normalize(raw)
    if args.solution:
        doc = serialize.load_solution(args.solution)
        n = len(data.meta)
        model = SolutionModel(
            Dag.from_edges(n, [tuple(e) for e in doc["edges"]]),
            tuple(doc["bins"]),
            {int(v): np.array(b) for v, b in doc["boundaries"].items()},
        )
        score, kl = _evaluate_solution(net, data, model, doc["fitness"]["total"], args.test_samples, args.seed)
        fitness = doc["fitness"]["total"]
        algorithm = f"so-{doc.get('policy', '?')}" + ("-post" if doc.get("post_optimized") else "")
    else:
        entries = serialize.load_archive(args.archive)
        if not entries:
            print("config error: empty archive", file=sys.stderr)
            return EXIT_CONFIG
        best = None
        for e in entries:
            dag = dag_from_genotype(e["genotype"], data.meta)
            acc = structure_score(dag, net.dag).accuracy
            key = (acc, -e["kl_expert"])
            if best is None or key > best[0]:
                best = (key, e)
        e = best[1]
        model = build_model(e["genotype"], data, args.disc, args.bin_min, args.bin_max or 9)
        score, kl = _evaluate_solution(net, data, model, None, args.test_samples, args.seed)
        fitness = e["ll"] - e["complexity"]
        algorithm = f"mo-{args.disc}"
    row = {
        "network_id": args.network_id,
        "algorithm": algorithm,
        "n_samples": data.n,
        "accuracy": f"{score.accuracy:.6f}",
        "sensitivity": f"{score.sensitivity:.6f}",
        "kl": f"{kl:.6f}",
        "fitness": f"{fitness:.6f}",
        "wall_time_s": args.wall_time if args.wall_time is not None else "",
        "evaluations": args.evaluations if args.evaluations is not None else "",
    }
    serialize.append_metrics(args.out, row)
    print(f"accuracy={score.accuracy:.3f} sensitivity={score.sensitivity:.3f} kl={kl:.4f}")
    return EXIT_OK


def _pipeline_cell(args, i: int, out: Path, chash: str):
    """One experiment cell: generate network i, learn, optionally post-optimize, evaluate."""
    rng = substream(args.seed, S_GENERATE, i)
    net = random_network(args.n_vars, args.dist, rng)
    raw = sample(net, args.n_samples, rng)
    serialize.save_network(net, out / f"network_{i:03d}.json", args.seed, chash)
    serialize.save_dataset(raw, out / f"data_{i:03d}.csv", args.seed, chash)
    expert_path = None
    if args.mode == "mo":
        expert = make_expert(net, substream(args.seed, S_EXPERT, i))
        expert_path = out / f"expert_{i:03d}.json"
        serialize.save_expert(expert, net.n_vars, expert_path, args.seed, chash)
    data = normalize(raw)
    tag = f"_{i:03d}"
    status, wall, evals = _learn_one(args, data, substream(args.seed, S_LEARN, i), tag, out, chash, expert_path)

    bin_max = _default_bin_max(args)
    if args.mode == "so":
        doc = serialize.load_solution(out / f"solution{tag}.json")
        model = SolutionModel(
            Dag.from_edges(len(data.meta), [tuple(e) for e in doc["edges"]]),
            tuple(doc["bins"]),
            {int(v): np.array(b) for v, b in doc["boundaries"].items()},
        )
        if args.postopt:
            t0 = time.perf_counter()
            model = optimize_boundaries(
                model, data, substream(args.seed, S_POSTOPT, i), max_evaluations=args.postopt_evals
            )
            wall += time.perf_counter() - t0
            serialize.save_solution(
                out / f"solution{tag}_post.json",
                doc["genotype"],
                model,
                _breakdown_of(model, data),
                args.seed,
                chash,
                extra={"policy": args.disc, "post_optimized": True},
            )
        score, kl = _evaluate_solution(net, data, model, None, args.test_samples, args.seed)
        fitness = model_fitness(model, data)
        algorithm = f"so-{args.disc}" + ("-post" if args.postopt else "")
    else:
        entries = serialize.load_archive(out / f"archive{tag}.csv")
        best = None
        for e in entries:
            dag = dag_from_genotype(e["genotype"], data.meta)
            acc = structure_score(dag, net.dag).accuracy
            key = (acc, -e["kl_expert"])
            if best is None or key > best[0]:
                best = (key, e)
        e = best[1]
        model = build_model(e["genotype"], data, args.disc, args.bin_min, bin_max)
        score, kl = _evaluate_solution(net, data, model, None, args.test_samples, args.seed)
        fitness = e["ll"] - e["complexity"]
        algorithm = f"mo-{args.disc}"
    row = {
        "network_id": i,
        "algorithm": algorithm,
        "n_samples": args.n_samples,
        "accuracy": f"{score.accuracy:.6f}",
        "sensitivity": f"{score.sensitivity:.6f}",
        "kl": f"{kl:.6f}",
        "fitness": f"{fitness:.6f}",
        "wall_time_s": f"{wall:.3f}",
        "evaluations": f"{evals:.1f}",
    }
    return row, status


def cmd_pipeline(args) -> int:
    if args.budget_evals is None and args.budget_seconds is None:
        print("config error: set --budget-evals and/or --budget-seconds", file=sys.stderr)
        return EXIT_CONFIG
    if args.mode == "mo" and args.disc == "bd":
        print("config error: bd discretization is not available in mo mode", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args.out)
    chash = run_config_hash(args)
    workers = int(os.environ.get("BNMIX_WORKERS", "1"))
    cells = list(range(args.n_networks))
    results = []
    if workers > 1:
        import multiprocessing as mp

        with mp.Pool(workers) as pool:
            results = pool.starmap(_pipeline_cell, [(args, i, out, chash) for i in cells])
    else:
        for i in cells:
            results.append(_pipeline_cell(args, i, out, chash))
    degraded = False
    for row, status in results:
        serialize.append_metrics(out / "metrics.csv", row)
        degraded |= status == "budget"
    print(f"pipeline complete: {len(results)} cells, metrics in {out / 'metrics.csv'}")
    return EXIT_BUDGET if degraded else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bnmix", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--seed", type=int, default=1)
        sp.add_argument("--bin-min", type=int, default=2)
        sp.add_argument("--bin-max", type=int, default=None,
                        help="defaults to 15 (so) or 9 (mo)")

    g = sub.add_parser("generate", help="write ground-truth networks and datasets")
    g.add_argument("--out", required=True)
    g.add_argument("--n-vars", type=int, required=True)
    g.add_argument("--n-networks", type=int, default=1)
    g.add_argument("--n-samples", type=int, default=1000)
    g.add_argument("--dist", choices=("ew", "ef", "random"), default="random")
    g.add_argument("--with-expert", action="store_true")
    g.add_argument("--seed", type=int, default=1)
    g.set_defaults(func=cmd_generate)

    l = sub.add_parser("learn", help="learn a network from a dataset")
    l.add_argument("--data", required=True)
    l.add_argument("--out", required=True)
    l.add_argument("--mode", choices=("so", "mo"), default="so")
    l.add_argument("--disc", choices=("ew", "ef", "bd"), default="ew")
    l.add_argument("--expert", default=None)
    l.add_argument("--budget-evals", type=float, default=None)
    l.add_argument("--budget-seconds", type=float, default=None)
    l.add_argument("--stall-cycles", type=int, default=100)
    l.add_argument("--mc-kl", type=int, default=1000)
    add_common(l)
    l.set_defaults(func=cmd_learn, mode_default="so")

    po = sub.add_parser("postopt", help="optimize a learned solution's boundaries")
    po.add_argument("--data", required=True)
    po.add_argument("--solution", required=True)
    po.add_argument("--out", required=True)
    po.add_argument("--budget-evals", type=int, default=3000)
    po.add_argument("--seed", type=int, default=1)
    po.set_defaults(func=cmd_postopt)

    e = sub.add_parser("evaluate", help="score a solution or archive against its ground truth")
    e.add_argument("--network", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--solution", default=None)
    e.add_argument("--archive", default=None)
    e.add_argument("--out", required=True)
    e.add_argument("--network-id", type=int, default=0)
    e.add_argument("--test-samples", type=int, default=20000)
    e.add_argument("--disc", choices=("ew", "ef", "bd"), default="ew")
    e.add_argument("--wall-time", default=None)
    e.add_argument("--evaluations", default=None)
    add_common(e)
    e.set_defaults(func=cmd_evaluate)

    pl = sub.add_parser("pipeline", help="generate, learn, post-optimize, evaluate")
    pl.add_argument("--out", required=True)
    pl.add_argument("--n-vars", type=int, required=True)
    pl.add_argument("--n-networks", type=int, default=1)
    pl.add_argument("--n-samples", type=int, default=1000)
    pl.add_argument("--dist", choices=("ew", "ef", "random"), default="random")
    pl.add_argument("--mode", choices=("so", "mo"), default="so")
    pl.add_argument("--disc", choices=("ew", "ef", "bd"), default="ew")
    pl.add_argument("--budget-evals", type=float, default=None)
    pl.add_argument("--budget-seconds", type=float, default=None)
    pl.add_argument("--stall-cycles", type=int, default=100)
    pl.add_argument("--mc-kl", type=int, default=1000)
    pl.add_argument("--test-samples", type=int, default=20000)
    pl.add_argument("--postopt", action="store_true")
    pl.add_argument("--postopt-evals", type=int, default=3000)
    add_common(pl)
    pl.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
