"""``prefopt`` command line: generate, train, compare, finetune, evaluate, analyze.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import InvalidArgument, InvalidConfig, ParseError, PrefOptError, TooLarge, UndefinedMetric, UnsupportedFormat
from .instances import Instance, generate_uniform, instance_rng, load_dataset, save_dataset
from .local_search import LsConfig, two_opt
from .oracle import HELD_KARP_MAX_N, solve_held_karp
from .policy import HeatmapPolicy, greedy_decode, sample_tours
from .trainer import (
    ANALYZE_STREAM,
    EVAL_STREAM,
    FINETUNE_STREAM,
    TRAIN_STREAM,
    TrainConfig,
    advantage_report,
    consistency_counts,
    metrics_csv,
    read_metrics_csv,
    train_many,
)

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 1, 2
MANIFEST = "run_manifest.json"
SUMMARY = "summary.json"
DEFAULT_FT_STEPS = 50
EARLY_FRACTION = 0.2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --- small helpers --------------------------------------------------------------


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _read_json(path: Path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno) from None


def _load_config(path: str | None, overrides: Sequence[str] = ()) -> TrainConfig:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: config is not valid JSON ({exc.msg}, line {exc.lineno})") from None
        if not isinstance(raw, dict):
            raise UsageError(f"{path}: config must be a flat JSON object")
        nested = sorted(k for k, v in raw.items() if isinstance(v, (dict, list)))
        if nested:
            raise InvalidConfig(f"config values must be scalars: {', '.join(nested)}", nested)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        raw[key.strip()] = value.strip()
    return TrainConfig.from_dict(raw)


def _require_out(args) -> Path:
    if args.out is None:
        raise UsageError("--out is required for this command")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_instances(path: str) -> list[Instance]:
    instances = load_dataset(path)
    if not instances:
        raise UsageError(f"{path}: no instances found")
    ids = [inst.id for inst in instances]
    if len(set(ids)) != len(ids):
        raise UsageError(f"{path}: duplicate instance ids")
    return instances


def _digest(instances: Sequence[Instance]) -> str:
    h = hashlib.sha256()
    for inst in instances:
        h.update(inst.id.encode())
        h.update(np.ascontiguousarray(inst.coords, dtype="<f8").tobytes())
    return h.hexdigest()


def _optima(instances: Sequence[Instance]) -> list[float | None]:
    return [solve_held_karp(inst).best_length if inst.n <= HELD_KARP_MAX_N else None for inst in instances]


def _load_policies(path: str, instances: Sequence[Instance]) -> list[HeatmapPolicy]:
    """One checkpoint file for every instance, or a directory of ``<id>.json``."""
    p = Path(path)
    if p.is_dir():
        policies = [HeatmapPolicy.load(p / f"{inst.id}.json") for inst in instances]
    else:
        policies = [HeatmapPolicy.load(p)] * len(instances)
    for inst, pol in zip(instances, policies):
        if pol.n != inst.n:
            raise UsageError(f"checkpoint has n={pol.n} but instance {inst.id} has n={inst.n}")
    return policies


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def _mean(values) -> float | None:
    vals = [v for v in values if v is not None]
    return math.fsum(vals) / len(vals) if vals else None


def _median(values) -> float | None:
    return float(np.median(values)) if len(values) else None


# --- run summaries (computed from the CSV rows so resumed runs agree) -----------


def _iters_to_gap(rows, threshold) -> int | None:
    best = math.inf
    for r in rows:
        if r["gap"] is None:
            return None
        best = min(best, r["gap"])
        if best <= threshold:
            return int(r["step"])
    return None


def _instance_summary(inst_id: str, optimum, rows, threshold: float) -> dict:
    k = max(1, int(math.ceil(EARLY_FRACTION * len(rows))))
    gaps = [r["gap"] for r in rows if r["gap"] is not None]
    return {
        "id": inst_id,
        "optimum": optimum,
        "steps": len(rows),
        "iters_to_gap": _iters_to_gap(rows, threshold),
        "best_gap": min(gaps) if gaps else None,
        "final_gap": rows[-1]["gap"],
        "early_entropy": math.fsum(r["entropy"] for r in rows[:k]) / k,
        "final_entropy": rows[-1]["entropy"],
        "final_consistency": rows[-1]["consistency"],
    }


def _run_summary(per_instance: list[dict], threshold: float) -> dict:
    return {
        "gap_threshold": threshold,
        "instances": per_instance,
        "mean_best_gap": _mean(s["best_gap"] for s in per_instance),
        "mean_final_gap": _mean(s["final_gap"] for s in per_instance),
        "mean_early_entropy": _mean(s["early_entropy"] for s in per_instance),
        "mean_final_consistency": _mean(s["final_consistency"] for s in per_instance),
        "median_iters_to_gap": _median([s["steps"] + 1 if s["iters_to_gap"] is None else s["iters_to_gap"] for s in per_instance]),
    }


def _execute_run(
    kind: str,
    cfg: TrainConfig,
    instances: list[Instance],
    out: Path,
    *,
    argv: Sequence[str],
    instances_path: str,
    jobs: int,
    resume: bool,
    threshold: float,
    policies: list[HeatmapPolicy] | None = None,
    stream: int = TRAIN_STREAM,
    extra: dict | None = None,
) -> dict:
    """Train every instance into ``out`` and return the run summary."""
    ckpt_dir, metrics_dir = out / "checkpoints", out / "metrics"
    manifest_path = out / MANIFEST
    digest = _digest(instances)
    if resume and manifest_path.exists():
        old = _read_json(manifest_path)
        if old.get("config") != cfg.to_dict() or old.get("instances_digest") != digest or old.get("kind") != kind:
            raise UsageError(f"{out}: existing run has a different config or instance set; refusing to resume")
        if old.get("status") == "complete":
            print(f"{out}: run already complete, nothing to do")
            return _read_json(out / SUMMARY)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    metrics_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool": "prefopt",
        "version": __version__,
        "kind": kind,
        "command": ["prefopt", *argv],
        "seed": cfg.seed,
        "stream": stream,
        "config": cfg.to_dict(),
        "instances_digest": digest,
        "paths": {
            "instances": str(Path(instances_path).resolve()),
            "checkpoints": "checkpoints",
            "metrics": "metrics",
            "summary": SUMMARY,
        },
        "instance_ids": [inst.id for inst in instances],
        "jobs": jobs,
        "status": "running",
        "timings": {"started": datetime.now(timezone.utc).isoformat(timespec="seconds")},
    }
    manifest.update(extra or {})
    _write_json(manifest_path, manifest)

    t0 = time.perf_counter()
    optima = _optima(instances)
    t_oracle = time.perf_counter() - t0

    todo = [
        i
        for i, inst in enumerate(instances)
        if not (resume and (ckpt_dir / f"{inst.id}.json").exists() and (metrics_dir / f"{inst.id}.csv").exists())
    ]
    # Sub-streams are keyed by dataset position, so training a subset is equivalent.
    results = _train_indexed(instances, todo, cfg, optima, policies, jobs, stream)
    for i, res in zip(todo, results):
        res.policy.save(ckpt_dir / f"{instances[i].id}.json")
        (metrics_dir / f"{instances[i].id}.csv").write_text(metrics_csv(res.metrics))
    t_train = time.perf_counter() - t0 - t_oracle

    per_instance = []
    for inst, opt in zip(instances, optima):
        rows = read_metrics_csv((metrics_dir / f"{inst.id}.csv").read_text())
        per_instance.append(_instance_summary(inst.id, opt, rows, threshold))
    summary = _run_summary(per_instance, threshold)
    _write_json(out / SUMMARY, summary)

    manifest["status"] = "complete"
    manifest["timings"].update({"oracle_seconds": round(t_oracle, 3), "train_seconds": round(t_train, 3), "trained": len(todo)})
    _write_json(manifest_path, manifest)
    return summary


def _train_indexed(instances, todo, cfg, optima, policies, jobs, stream):
    if not todo:
        return []
    return train_many(
        [instances[i] for i in todo],
        cfg,
        optima=[optima[i] for i in todo],
        policies=None if policies is None else [policies[i] for i in todo],
        jobs=jobs,
        stream=stream,
        indices=todo,
    )


# --- subcommands ----------------------------------------------------------------


def cmd_generate(args) -> int:
    out = _require_out(args)
    seed = 0 if args.seed is None else args.seed
    instances = generate_uniform(args.n, args.count, seed)
    save_dataset(instances, out)
    print(f"wrote {len(instances)} instances to {out}")
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    overrides = list(args.set or [])
    if getattr(args, "algorithm", None):
        overrides.append(f"algorithm={args.algorithm}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return _load_config(args.config, overrides)


def cmd_train(args) -> int:
    out = _require_out(args)
    cfg = _train_config(args)
    instances = _load_instances(args.instances)
    summary = _execute_run(
        "train", cfg, instances, out,
        argv=args.argv, instances_path=args.instances, jobs=args.jobs, resume=args.resume, threshold=args.gap_threshold,
    )
    _print_run(summary)
    return EXIT_OK


def cmd_finetune(args) -> int:
    out = _require_out(args)
    cfg = _train_config(args)
    steps = args.finetune_steps if args.finetune_steps is not None else (cfg.finetune_steps or DEFAULT_FT_STEPS)
    cfg = dataclasses.replace(cfg, steps=0, finetune_steps=steps).validate(allow_zero_steps=True)
    instances = _load_instances(args.instances)
    policies = _load_policies(args.checkpoints, instances)
    summary = _execute_run(
        "finetune", cfg, instances, out,
        argv=args.argv, instances_path=args.instances, jobs=args.jobs, resume=args.resume, threshold=args.gap_threshold,
        policies=policies, stream=FINETUNE_STREAM,
        extra={"source_checkpoints": str(Path(args.checkpoints).resolve())},
    )
    _print_run(summary)
    return EXIT_OK


def _print_run(summary: dict) -> None:
    print(
        "mean best gap {} | mean final gap {} | median iters to {:g} gap {}".format(
            _fmt(summary["mean_best_gap"]), _fmt(summary["mean_final_gap"]), summary["gap_threshold"], summary["median_iters_to_gap"]
        )
    )


def cmd_compare(args) -> int:
    out = _require_out(args)
    cfg_a = _load_config(args.config_a, args.set or [])
    cfg_b = _load_config(args.config_b, args.set or [])
    if args.seed is not None:
        cfg_a = dataclasses.replace(cfg_a, seed=args.seed)
        cfg_b = dataclasses.replace(cfg_b, seed=args.seed)
    if cfg_a.seed != cfg_b.seed:
        raise UsageError(f"paired comparison needs equal seeds, got {cfg_a.seed} and {cfg_b.seed}")
    inst_a = _load_instances(args.instances)
    inst_b = _load_instances(args.instances_b) if args.instances_b else inst_a
    if _digest(inst_a) != _digest(inst_b):
        raise UsageError("instance sets differ between the two sides")
    if any(inst.n > HELD_KARP_MAX_N for inst in inst_a):
        raise UsageError(f"compare needs exact optima (n <= {HELD_KARP_MAX_N})")

    common = dict(argv=args.argv, instances_path=args.instances, jobs=args.jobs, resume=args.resume, threshold=args.gap_threshold)
    sa = _execute_run("train", cfg_a, inst_a, out / "a", **common)
    sb = _execute_run("train", cfg_b, inst_a, out / "b", **common)
    summary = compare_summaries(sa, sb)
    summary["config_a"] = cfg_a.to_dict()
    summary["config_b"] = cfg_b.to_dict()
    _write_json(out / SUMMARY, summary)
    print(
        "median iters a={} b={} speedup(b/a)={}".format(summary["median_iters_a"], summary["median_iters_b"], _fmt(summary["speedup"]))
    )
    return EXIT_OK


def compare_summaries(sa: dict, sb: dict) -> dict:
    """Paired per-instance table plus aggregates.

    Runs that never reach the threshold count as ``steps + 1`` iterations.
    ``speedup`` is ``median_b / median_a``: above 1 means side A got there sooner.
    """
    rows = []
    for a, b in zip(sa["instances"], sb["instances"]):
        ia = a["steps"] + 1 if a["iters_to_gap"] is None else a["iters_to_gap"]
        ib = b["steps"] + 1 if b["iters_to_gap"] is None else b["iters_to_gap"]
        rows.append(
            {
                "id": a["id"],
                "iters_a": ia,
                "iters_b": ib,
                "censored_a": a["iters_to_gap"] is None,
                "censored_b": b["iters_to_gap"] is None,
                "delta_iters": ib - ia,
                "best_gap_a": a["best_gap"],
                "best_gap_b": b["best_gap"],
                "final_gap_a": a["final_gap"],
                "final_gap_b": b["final_gap"],
            }
        )
    med_a = _median([r["iters_a"] for r in rows])
    med_b = _median([r["iters_b"] for r in rows])
    return {
        "gap_threshold": sa["gap_threshold"],
        "per_instance": rows,
        "median_iters_a": med_a,
        "median_iters_b": med_b,
        "speedup": med_b / med_a if med_a else None,
        "wins_a": sum(r["iters_a"] < r["iters_b"] for r in rows),
        "wins_b": sum(r["iters_b"] < r["iters_a"] for r in rows),
        "ties": sum(r["iters_a"] == r["iters_b"] for r in rows),
        "median_delta_iters": _median([r["delta_iters"] for r in rows]),
        "mean_best_gap_a": sa["mean_best_gap"],
        "mean_best_gap_b": sb["mean_best_gap"],
        "mean_final_gap_a": sa["mean_final_gap"],
        "mean_final_gap_b": sb["mean_final_gap"],
        "mean_early_entropy_a": sa["mean_early_entropy"],
        "mean_early_entropy_b": sb["mean_early_entropy"],
        "mean_final_consistency_a": sa["mean_final_consistency"],
        "mean_final_consistency_b": sb["mean_final_consistency"],
    }


def cmd_evaluate(args) -> int:
    out = _require_out(args)
    instances = _load_instances(args.instances)
    policies = _load_policies(args.checkpoints, instances)
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    seed = 0 if args.seed is None else args.seed
    rows = []
    for i, (inst, pol) in enumerate(zip(instances, policies)):
        if args.decode == "greedy":
            tour = greedy_decode(pol, inst)
        else:
            batch = sample_tours(pol, inst, max(2, args.k), instance_rng(seed, i, EVAL_STREAM))
            tour = batch.tours[int(np.argmin(batch.lengths[: args.k]))]
        if inst.n <= HELD_KARP_MAX_N:
            ref, exact = solve_held_karp(inst).best_length, True
        else:
            ref = two_opt(inst, tour, LsConfig(max_iters=10**9, strategy="best_improvement")).length
            exact = False
        rows.append({"id": inst.id, "length": tour.length, "reference": ref, "exact": exact, "gap": (tour.length - ref) / ref})
    report = {
        "decode": args.decode,
        "k": args.k if args.decode == "sample_best_k" else None,
        "seed": seed,
        "instances": rows,
        "mean_gap": _mean(r["gap"] for r in rows),
        "all_exact": all(r["exact"] for r in rows),
    }
    _write_json(out / "evaluation.json", report)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "length", "reference", "exact", "gap"])
    for r in rows:
        w.writerow([r["id"], repr(r["length"]), repr(r["reference"]), int(r["exact"]), repr(r["gap"])])
    (out / "evaluation.csv").write_text(buf.getvalue())
    flag = "" if report["all_exact"] else " (reference is 2-opt, not exact)"
    print(f"mean gap {report['mean_gap']!r}{flag}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    out = _require_out(args)
    adv_rows, cons_rows, ent_rows = [], [], []
    labels = []
    for run in args.run:
        run = Path(run)
        label = run.name if run.name not in labels else f"{run.name}_{len(labels)}"
        labels.append(label)
        manifest = _read_json(run / MANIFEST)
        missing = [k for k in ("config", "paths", "instances_digest") if k not in manifest]
        if missing:
            raise ParseError(f"{run / MANIFEST}: missing {', '.join(missing)}")
        cfg = TrainConfig.from_dict(manifest["config"], allow_zero_steps=True)
        instances = _load_instances(manifest["paths"]["instances"])
        if _digest(instances) != manifest["instances_digest"]:
            raise UsageError(f"{run}: instance files changed since the run")
        policies = _load_policies(str(run / manifest["paths"]["checkpoints"]), instances)
        n_samples = args.samples or cfg.samples_per_step
        po_cfg = dataclasses.replace(cfg, algorithm="po")
        rf_cfg = dataclasses.replace(cfg, algorithm="reinforce")
        for i, (inst, pol) in enumerate(zip(instances, policies)):
            batch = sample_tours(pol, inst, n_samples, instance_rng(cfg.seed, i, ANALYZE_STREAM))
            for name, c in (("po_" + cfg.preference.kind, po_cfg), ("reinforce", rf_cfg)):
                for rank, (length, a) in enumerate(advantage_report(batch, c)):
                    adv_rows.append([label, inst.id, name, rank, repr(length), repr(a)])
            agree, ties, total = consistency_counts(batch.rewards, batch.log_probs, cfg.tie_tol)
            cons_rows.append([label, inst.id, _fmt(agree / total if total else None), ties, total])
        per_step: dict[int, list] = {}
        for inst in instances:
            rows = read_metrics_csv((run / manifest["paths"]["metrics"] / f"{inst.id}.csv").read_text())
            for r in rows:
                per_step.setdefault(int(r["step"]), []).append(r)
        for step in sorted(per_step):
            rs = per_step[step]
            ent_rows.append(
                [label, step, _fmt(_mean(r["entropy"] for r in rs)), _fmt(_mean(r["consistency"] for r in rs)), _fmt(_mean(r["gap"] for r in rs))]
            )
    _write_csv(out / "advantages.csv", ["run", "instance", "algorithm", "rank", "length", "advantage"], adv_rows)
    _write_csv(out / "consistency.csv", ["run", "instance", "consistency", "logprob_ties", "ordered_pairs"], cons_rows)
    _write_csv(out / "entropy.csv", ["run", "step", "mean_entropy", "mean_consistency", "mean_gap"], ent_rows)
    print(f"wrote advantages.csv, consistency.csv, entropy.csv to {out}")
    return EXIT_OK


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="root seed (overrides the config)")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="parallel worker processes")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")

    parser = _Parser(prog="prefopt", description="Preference optimization vs REINFORCE on TSP heatmap policies.")
    parser.add_argument("--version", action="version", version=f"prefopt {__version__}")
    parser.add_argument("--seed", type=int, default=None, help="root seed (overrides the config)")
    parser.add_argument("--jobs", type=int, default=1, help="parallel worker processes (never changes results)")
    parser.add_argument("--out", default=None, help="output directory")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("generate", parents=[common], help="write uniform random instances")
    p.add_argument("--n", type=int, required=True, help="nodes per instance (>= 3)")
    p.add_argument("--count", type=int, default=1)
    p.set_defaults(func=cmd_generate)

    def training_flags(p):
        p.add_argument("--config", help="flat JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--instances", required=True, help="instance file or directory")
        p.add_argument("--resume", action="store_true", help="skip finished instances; no-op on a complete run")
        p.add_argument("--gap-threshold", type=float, default=0.01)

    p = sub.add_parser("train", parents=[common], help="train one heatmap per instance")
    training_flags(p)
    p.add_argument("--algorithm", choices=["po", "reinforce"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", parents=[common], help="continue from checkpoints with 2-opt augmented steps")
    training_flags(p)
    p.add_argument("--checkpoints", required=True, help="checkpoint file or directory of <id>.json")
    p.add_argument("--finetune-steps", type=int)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("compare", parents=[common], help="paired runs of two configs on the same instances")
    p.add_argument("--config-a", required=True)
    p.add_argument("--config-b", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a key on both sides")
    p.add_argument("--instances", required=True)
    p.add_argument("--instances-b", help="instances for side B (must match side A)")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--gap-threshold", type=float, default=0.01)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("evaluate", parents=[common], help="optimality gaps of decoded tours")
    p.add_argument("--checkpoints", required=True)
    p.add_argument("--instances", required=True)
    p.add_argument("--decode", choices=["greedy", "sample_best_k"], default="greedy")
    p.add_argument("--k", type=int, default=64)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", parents=[common], help="export advantage, consistency and entropy CSVs")
    p.add_argument("--run", action="append", required=True, help="run directory (repeatable)")
    p.add_argument("--samples", type=int, help="tours per instance (default: config samples_per_step)")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        args.argv = argv
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        return args.func(args)
    except InvalidConfig as exc:
        print(f"prefopt: error: {exc}", file=sys.stderr)
        if exc.keys:
            print("offending keys: " + ", ".join(exc.keys), file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, InvalidArgument, TooLarge, UndefinedMetric) as exc:
        print(f"prefopt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ParseError, UnsupportedFormat) as exc:
        print(f"prefopt: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PrefOptError as exc:
        print(f"prefopt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
