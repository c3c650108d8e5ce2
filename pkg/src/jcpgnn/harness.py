"""Experiment orchestration and the ``jcpgnn`` command-line interface.

Subcommands: generate, train, eval, baseline, robustness, generalize,
bench, report. Every run appends machine-readable rows to ``results.csv``
(fixed header) and can be summarized into ``summary.json`` plus per-figure
CSVs (``fig3.csv`` solver comparison, ``fig5.csv`` corrupted-input
robustness, ``fig6.csv`` timing, ``table1.csv`` scale generalization).

All randomness is derived from the config seed, all solvers within one
experiment see identical instances in identical order, and rows carry the
config hash, so results are reproducible from (config, seeds) alone.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import re
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, model
from .hetgraph import build_graph
from .metrics import Allocation, objective
from .model import JcpgnnParams, TrainConfig, load_checkpoint, save_checkpoint
from .netgen import (
    Dataset,
    FadingConfig,
    GeometryConfig,
    NetworkInstance,
    derive_seed,
    generate_dataset,
    load_dataset,
    save_dataset,
)

RESULT_COLUMNS = [
    "experiment",
    "solver",
    "d_pairs",
    "m_channels",
    "mean_objective",
    "std_objective",
    "time_per_instance_s",
    "seed",
    "config_hash",
]

GNN_SOLVERS = {"jcpgnn", "rr_gnn"}
ALL_SOLVERS = ["jcpgnn", "exhaustive", "rr_gnn", "rr_wmmse", "closest", "random"]


@dataclass(frozen=True)
class ExperimentConfig:
    """Every free parameter of an experiment run, serialized alongside the
    results so rows are traceable to exact settings."""

    geometry: GeometryConfig
    fading: FadingConfig = field(default_factory=FadingConfig)
    n_train: int = 2000
    n_val: int = 200
    n_test: int = 500
    s_layers: int = 3
    train: TrainConfig = field(default_factory=TrainConfig)
    solvers: tuple[str, ...] = ("jcpgnn", "exhaustive", "rr_gnn", "closest", "random")
    robustness_fractions: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    scale_factors: tuple[float, ...] = (1.0, 2.0, 3.33, 5.33)
    timing_reps: int = 3
    seed: int = 2024

    @classmethod
    def desk(cls, seed: int = 2024) -> "ExperimentConfig":
        """Desktop-scale preset: D=10, M=2, 2000 train / 500 test.

        noise_power 1e-6 W puts optimal per-pair rates near 2.5 bit/s/Hz;
        with vanishing noise the soft relaxation always prefers fractional
        channel splitting and no relaxation-based learner can sharpen."""
        return cls(
            geometry=GeometryConfig(d_pairs=10, m_channels=2),
            fading=FadingConfig(noise_power=1e-6),
            n_train=2000,
            n_val=200,
            n_test=500,
            train=TrainConfig(epochs=150, lr=5e-3, batch_size=64, seed=derive_seed(seed, "train") % 2**31),
            seed=seed,
        )

    @classmethod
    def paper_scale(cls, seed: int = 2024) -> "ExperimentConfig":
        """Large preset: D=10, M=2, 10000 train / 1000 test."""
        cfg = cls.desk(seed)
        return ExperimentConfig(
            geometry=cfg.geometry,
            fading=cfg.fading,
            n_train=10000,
            n_val=500,
            n_test=1000,
            train=cfg.train,
            seed=seed,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["solvers"] = list(self.solvers)
        d["robustness_fractions"] = list(self.robustness_fractions)
        d["scale_factors"] = list(self.scale_factors)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["geometry"] = GeometryConfig(**d["geometry"])
        d["fading"] = FadingConfig(**d["fading"])
        d["train"] = TrainConfig(**d["train"])
        for key in ("solvers", "robustness_fractions", "scale_factors"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


@dataclass
class ResultRow:
    experiment: str
    solver: str
    d_pairs: int
    m_channels: int
    mean_objective: float
    std_objective: float
    time_per_instance_s: float
    seed: int
    config_hash: str

    def as_list(self):
        return [
            self.experiment,
            self.solver,
            str(self.d_pairs),
            str(self.m_channels),
            repr(self.mean_objective),
            repr(self.std_objective),
            repr(self.time_per_instance_s),
            str(self.seed),
            self.config_hash,
        ]


def append_rows(path, rows) -> None:
    path = Path(path)
    new_file = not path.exists()
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow(row.as_list())


def read_rows(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# Solvers


def make_solver(name: str, checkpoint: JcpgnnParams | None, seed: int,
                wmmse_cfg: baselines.WmmseConfig | None = None,
                guard_max_assignments: int = 2 ** 20):
    """Return solve(instance, index) -> Allocation for a named solver."""
    cfg = wmmse_cfg or baselines.WmmseConfig()
    if name in GNN_SOLVERS and checkpoint is None:
        raise ValueError(f"solver {name!r} requires a checkpoint")

    if name == "jcpgnn":
        def solve(inst, k):
            graph = build_graph(inst, checkpoint.transform)
            return model.forward(graph, checkpoint, "hard")
    elif name == "exhaustive":
        def solve(inst, k):
            return baselines.exhaustive(inst, cfg, guard_max_assignments)
    elif name == "rr_gnn":
        def solve(inst, k):
            graph = build_graph(inst, checkpoint.transform)
            fixed = baselines.round_robin(inst.d_pairs, inst.m_channels)
            return model.forward_fixed_channel(graph, checkpoint, fixed)
    elif name == "rr_wmmse":
        def solve(inst, k):
            fixed = baselines.round_robin(inst.d_pairs, inst.m_channels)
            return Allocation(channel=fixed, power=baselines.wmmse_power(inst, fixed, cfg), hard=True)
    elif name == "closest":
        def solve(inst, k):
            fixed = baselines.closest_split(inst, inst.m_channels)
            return Allocation(channel=fixed, power=baselines.wmmse_power(inst, fixed, cfg), hard=True)
    elif name == "random":
        def solve(inst, k):
            return baselines.random_alloc(inst.d_pairs, inst.m_channels,
                                          derive_seed(seed, "random", k), inst.p_max)
    else:
        raise ValueError(f"unknown solver {name!r} (choose from {ALL_SOLVERS})")
    return solve


def _check_checkpoint(checkpoint: JcpgnnParams | None, ds: Dataset, names) -> None:
    if checkpoint is None:
        return
    if any(n in GNN_SOLVERS for n in names) and checkpoint.m_channels != ds.geometry.m_channels:
        raise ValueError(
            f"checkpoint expects M={checkpoint.m_channels} channels, "
            f"dataset has M={ds.geometry.m_channels}"
        )


_WORKER_SOLVE = None


def _eval_worker_init(name, checkpoint, seed):
    global _WORKER_SOLVE
    _WORKER_SOLVE = make_solver(name, checkpoint, seed)


def _eval_worker(task):
    k, inst = task
    t0 = time.perf_counter()
    alloc = _WORKER_SOLVE(inst, k)
    dt = time.perf_counter() - t0
    return objective(inst, alloc), dt


def cmd_eval(ds: Dataset, solver_names, checkpoint: JcpgnnParams | None = None,
             seed: int = 0, experiment: str | None = None, config_hash: str = "",
             workers: int = 1) -> list[ResultRow]:
    """Mean/std hard-mode objective per solver; identical instances for all.

    Results are independent of `workers` (instances are solved
    independently and collected in order); only wall time changes."""
    if not solver_names:
        raise ValueError("solver list must be nonempty")
    _check_checkpoint(checkpoint, ds, solver_names)
    D, M = ds.geometry.d_pairs, ds.geometry.m_channels
    experiment = experiment or f"eval[D={D},M={M}]"
    rows = []
    for name in solver_names:
        if workers > 1:
            with ProcessPoolExecutor(
                max_workers=workers, initializer=_eval_worker_init,
                initargs=(name, checkpoint, seed),
            ) as pool:
                results = list(pool.map(_eval_worker, enumerate(ds.instances), chunksize=4))
            objs = [r[0] for r in results]
            times = [r[1] for r in results]
        else:
            solve = make_solver(name, checkpoint, seed)
            objs, times = [], []
            for k, inst in enumerate(ds.instances):
                t0 = time.perf_counter()
                alloc = solve(inst, k)
                times.append(time.perf_counter() - t0)
                objs.append(objective(inst, alloc))
        rows.append(ResultRow(
            experiment=experiment, solver=name, d_pairs=D, m_channels=M,
            mean_objective=float(np.mean(objs)), std_objective=float(np.std(objs)),
            time_per_instance_s=float(np.mean(times)), seed=seed, config_hash=config_hash,
        ))
    return rows


# ---------------------------------------------------------------------------
# Corrupted-input robustness


def corrupt_csi(inst: NetworkInstance, fraction: float, seed: int) -> NetworkInstance:
    """Zero a uniformly chosen fraction of the cross gains (i != j), all
    channels pooled; direct gains stay intact. Used only as model input:
    rates are always computed on the true instance."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    D, M = inst.d_pairs, inst.m_channels
    gains = inst.gains.copy()
    positions = np.argwhere(~np.eye(D, dtype=bool))  # (D*(D-1), 2)
    count = positions.shape[0] * M
    k = int(round(fraction * count))
    if k:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(count, size=k, replace=False)
        pos_idx, m_idx = chosen // M, chosen % M
        gains[positions[pos_idx, 0], positions[pos_idx, 1], m_idx] = 0.0
    return NetworkInstance(
        d_pairs=D, m_channels=M, tx_pos=inst.tx_pos.copy(), rx_pos=inst.rx_pos.copy(),
        gains=gains, weights=inst.weights.copy(), noise_power=inst.noise_power,
        p_max=inst.p_max, seed=inst.seed,
    )


def cmd_robustness(ds: Dataset, checkpoint: JcpgnnParams, fractions,
                   seed: int = 0, config_hash: str = "") -> list[ResultRow]:
    """Evaluate the model on corrupted inputs, objective on true instances.

    Rows carry raw objectives; normalization against the fraction-0 row
    happens in the report (fraction 0 normalizes to exactly 1.0 since the
    run is bit-identical)."""
    _check_checkpoint(checkpoint, ds, ["jcpgnn"])
    D, M = ds.geometry.d_pairs, ds.geometry.m_channels
    rows = []
    for f_idx, frac in enumerate(fractions):
        objs = []
        t0 = time.perf_counter()
        for k, inst in enumerate(ds.instances):
            corrupted = corrupt_csi(inst, frac, derive_seed(seed, "corrupt", f_idx, k))
            graph = build_graph(corrupted, checkpoint.transform)
            alloc = model.forward(graph, checkpoint, "hard")
            objs.append(objective(inst, alloc))
        dt = (time.perf_counter() - t0) / len(ds.instances)
        rows.append(ResultRow(
            experiment=f"robustness[f={frac:.2f}]", solver="jcpgnn", d_pairs=D, m_channels=M,
            mean_objective=float(np.mean(objs)), std_objective=float(np.std(objs)),
            time_per_instance_s=dt, seed=seed, config_hash=config_hash,
        ))
    return rows


# ---------------------------------------------------------------------------
# Scale generalization


def cmd_generalize(checkpoint: JcpgnnParams, scale_factors, n_instances: int,
                   seed: int = 0, config_hash: str = "",
                   solver_names=("jcpgnn", "rr_gnn", "closest")) -> list[ResultRow]:
    """Evaluate at k times the training pair count with area scaled to keep
    the density fixed (side grows by sqrt(k)). Base geometry and fading come
    from the checkpoint's recorded training config."""
    tc = checkpoint.train_config or {}
    if "geometry" not in tc or "fading" not in tc:
        raise ValueError("checkpoint does not record its training geometry/fading")
    base_geo = GeometryConfig(**tc["geometry"])
    fading = FadingConfig(**tc["fading"])
    rows = []
    for factor in scale_factors:
        d_k = max(1, int(round(base_geo.d_pairs * factor)))
        geo = GeometryConfig(
            d_pairs=d_k,
            m_channels=base_geo.m_channels,
            area_side=base_geo.area_side * math.sqrt(factor),
            rx_dist_min=base_geo.rx_dist_min,
            rx_dist_max=base_geo.rx_dist_max,
        )
        ds = generate_dataset(geo, fading, n_instances, derive_seed(seed, "generalize", repr(factor)))
        rows.extend(cmd_eval(
            ds, solver_names, checkpoint, seed=seed,
            experiment=f"generalize[k={factor:g},D={d_k}]", config_hash=config_hash,
        ))
    return rows


# ---------------------------------------------------------------------------
# Timing


def cmd_bench_time(ds: Dataset, solver_names, checkpoint: JcpgnnParams | None = None,
                   reps: int = 3, seed: int = 0, config_hash: str = "",
                   guard_max_assignments: int = 2 ** 20) -> list[ResultRow]:
    """Median wall time per instance per solver (monotonic clock, one
    warm-up run excluded). A solver whose enumeration guard trips is
    reported with NaN objective and time."""
    if reps < 3:
        raise ValueError(f"reps must be >= 3, got {reps}")
    _check_checkpoint(checkpoint, ds, solver_names)
    D, M = ds.geometry.d_pairs, ds.geometry.m_channels
    experiment = f"bench[D={D},M={M}]"
    rows = []
    for name in solver_names:
        solve = make_solver(name, checkpoint, seed, guard_max_assignments=guard_max_assignments)
        per_instance, objs = [], []
        try:
            for k, inst in enumerate(ds.instances):
                alloc = solve(inst, k)  # warm-up, also yields the objective
                objs.append(objective(inst, alloc))
                times = []
                for _ in range(reps):
                    t0 = time.perf_counter()
                    solve(inst, k)
                    times.append(time.perf_counter() - t0)
                per_instance.append(statistics.median(times))
            mean_obj = float(np.mean(objs))
            std_obj = float(np.std(objs))
            t_med = float(statistics.median(per_instance))
        except baselines.ExhaustiveGuardError:
            mean_obj = std_obj = t_med = float("nan")
        rows.append(ResultRow(
            experiment=experiment, solver=name, d_pairs=D, m_channels=M,
            mean_objective=mean_obj, std_objective=std_obj,
            time_per_instance_s=t_med, seed=seed, config_hash=config_hash,
        ))
    return rows


# ---------------------------------------------------------------------------
# Generate / train / report plumbing


def cmd_generate(cfg: ExperimentConfig, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for split, n in (("train", cfg.n_train), ("val", cfg.n_val), ("test", cfg.n_test)):
        ds = generate_dataset(cfg.geometry, cfg.fading, n, derive_seed(cfg.seed, "data", split))
        path = out / f"{split}.jsonl"
        save_dataset(ds, str(path))
        paths[split] = str(path)
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, sort_keys=True, indent=2)
    return paths


def cmd_train(cfg: ExperimentConfig, train_path, val_path, out_dir) -> str:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_ds = load_dataset(str(train_path))
    val_ds = load_dataset(str(val_path))
    params, history = model.train(train_ds, val_ds, cfg.train, s_layers=cfg.s_layers)
    params.train_config = {
        "geometry": asdict(cfg.geometry),
        "fading": asdict(cfg.fading),
        "train": asdict(cfg.train),
        "s_layers": cfg.s_layers,
    }
    ckpt_path = out / "checkpoint.json"
    save_checkpoint(params, str(ckpt_path))
    with open(out / "history.json", "w", encoding="utf-8") as fh:
        json.dump(history, fh, sort_keys=True)
    return str(ckpt_path)


def _group_rows(rows):
    groups: dict[tuple[str, str], list[dict]] = {}
    for r in rows:
        groups.setdefault((r["experiment"], r["solver"]), []).append(r)
    return groups


def cmd_report(results_path, out_dir) -> dict:
    """Summarize results.csv into summary.json and per-figure CSVs."""
    rows = read_rows(results_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    summary: dict = {}
    for (experiment, solver), grp in _group_rows(rows).items():
        means = [float(r["mean_objective"]) for r in grp]
        times = [float(r["time_per_instance_s"]) for r in grp]
        summary.setdefault(experiment, {})[solver] = {
            "mean_objective": float(np.mean(means)),
            "std_objective": float(np.std(means)) if len(means) > 1 else float(grp[0]["std_objective"]),
            "time_per_instance_s": float(np.mean(times)),
            "n_rows": len(grp),
        }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)

    def write_csv(name, header, data):
        with open(out / name, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(data)

    eval_rows = [r for r in rows if r["experiment"].startswith("eval[")]
    write_csv("fig3.csv", ["solver", "d_pairs", "m_channels", "mean_objective", "std_objective"],
              [[r["solver"], r["d_pairs"], r["m_channels"], r["mean_objective"], r["std_objective"]]
               for r in eval_rows])

    rob_rows = [r for r in rows if r["experiment"].startswith("robustness[")]

    def rob_key(r):
        return (r["solver"], r["d_pairs"], r["m_channels"], r["config_hash"])

    base = {}
    for r in rob_rows:
        frac = float(re.search(r"f=([0-9.]+)", r["experiment"]).group(1))
        if frac == 0.0:
            base[rob_key(r)] = float(r["mean_objective"])
    fig5 = []
    for r in rob_rows:
        frac = float(re.search(r"f=([0-9.]+)", r["experiment"]).group(1))
        b = base.get(rob_key(r))
        norm = float(r["mean_objective"]) / b if b else float("nan")
        fig5.append([r["solver"], frac, r["mean_objective"], repr(norm)])
    write_csv("fig5.csv", ["solver", "fraction", "mean_objective", "normalized"], fig5)

    bench_rows = [r for r in rows if r["experiment"].startswith("bench[")]
    write_csv("fig6.csv", ["solver", "d_pairs", "m_channels", "time_per_instance_s"],
              [[r["solver"], r["d_pairs"], r["m_channels"], r["time_per_instance_s"]] for r in bench_rows])

    gen_rows = [r for r in rows if r["experiment"].startswith("generalize[")]
    table1 = []
    for r in gen_rows:
        factor = float(re.search(r"k=([0-9.]+)", r["experiment"]).group(1))
        table1.append([r["solver"], factor, r["d_pairs"], r["m_channels"],
                       r["mean_objective"], r["std_objective"]])
    write_csv("table1.csv", ["solver", "scale_factor", "d_pairs", "m_channels",
                             "mean_objective", "std_objective"], table1)
    return summary


# ---------------------------------------------------------------------------
# CLI


def _load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            cfg = ExperimentConfig.from_dict(json.load(fh))
    elif getattr(args, "paper_scale", False):
        cfg = ExperimentConfig.paper_scale()
    else:
        cfg = ExperimentConfig.desk()
    if getattr(args, "seed", None) is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    return cfg


def _parse_solvers(args, cfg, default=None):
    if getattr(args, "solvers", None):
        return [s.strip() for s in args.solvers.split(",") if s.strip()]
    return list(default if default is not None else cfg.solvers)


def _add_common(sub, dataset=False, checkpoint=False):
    sub.add_argument("--config", help="experiment config JSON")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_argument("--out", default="runs/default", help="output directory")
    sub.add_argument("--desk", action="store_true", help="desktop-scale preset (default)")
    sub.add_argument("--paper-scale", dest="paper_scale", action="store_true",
                     help="large preset: 10000 train / 1000 test")
    if dataset:
        sub.add_argument("--dataset", required=True, help="dataset .jsonl path")
    if checkpoint:
        sub.add_argument("--checkpoint", help="model checkpoint JSON")


def _require_checkpoint(args, names=()):
    path = getattr(args, "checkpoint", None)
    if path is None:
        if any(n in GNN_SOLVERS for n in names):
            raise ValueError("--checkpoint is required when a GNN solver is selected")
        return None
    return load_checkpoint(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jcpgnn",
        description="Joint channel/power allocation benchmark: GNN vs classical solvers.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    _add_common(subs.add_parser("generate", help="write train/val/test datasets"))

    sub = subs.add_parser("train", help="train the allocation model")
    _add_common(sub)
    sub.add_argument("--dataset", help="training dataset (default <out>/train.jsonl)")
    sub.add_argument("--val", help="validation dataset (default <out>/val.jsonl)")

    sub = subs.add_parser("eval", help="evaluate solvers on a test set")
    _add_common(sub, dataset=True, checkpoint=True)
    sub.add_argument("--solvers", help="comma-separated solver list")
    sub.add_argument("--workers", type=int, default=1, help="parallel instance workers")

    sub = subs.add_parser("baseline", help="evaluate classical solvers only")
    _add_common(sub, dataset=True)
    sub.add_argument("--solvers", help="comma-separated solver list (no GNN)")
    sub.add_argument("--workers", type=int, default=1, help="parallel instance workers")

    sub = subs.add_parser("robustness", help="corrupted-input sweep")
    _add_common(sub, dataset=True, checkpoint=True)
    sub.add_argument("--fractions", help="comma-separated corruption fractions")

    sub = subs.add_parser("generalize", help="evaluate at scaled network sizes")
    _add_common(sub, checkpoint=True)
    sub.add_argument("--factors", help="comma-separated scale factors")
    sub.add_argument("--n", type=int, default=None, help="instances per factor (default n_test)")

    sub = subs.add_parser("bench", help="wall-time benchmark per solver")
    _add_common(sub, dataset=True, checkpoint=True)
    sub.add_argument("--solvers", help="comma-separated solver list")
    sub.add_argument("--reps", type=int, default=3, help="timed repetitions per instance")

    sub = subs.add_parser("report", help="summarize a results.csv")
    sub.add_argument("--results", required=True, help="results.csv path")
    sub.add_argument("--out", default="runs/default", help="output directory")
    return parser


def _run(args) -> int:
    out = Path(getattr(args, "out", "runs/default"))

    if args.command == "report":
        cmd_report(args.results, out)
        print(f"report written to {out}")
        return 0

    cfg = _load_config(args)
    chash = cfg.config_hash()
    out.mkdir(parents=True, exist_ok=True)
    results_csv = out / "results.csv"

    if args.command == "generate":
        paths = cmd_generate(cfg, out)
        print(f"datasets written: {paths}")
        return 0

    if args.command == "train":
        train_path = args.dataset or out / "train.jsonl"
        val_path = args.val or out / "val.jsonl"
        ckpt = cmd_train(cfg, train_path, val_path, out)
        print(f"checkpoint written to {ckpt}")
        return 0

    if args.command in ("eval", "baseline"):
        ds = load_dataset(args.dataset)
        default = None if args.command == "eval" else [s for s in cfg.solvers if s not in GNN_SOLVERS]
        names = _parse_solvers(args, cfg, default)
        checkpoint = _require_checkpoint(args, names) if args.command == "eval" else None
        rows = cmd_eval(ds, names, checkpoint, seed=cfg.seed, config_hash=chash,
                        workers=args.workers)
    elif args.command == "robustness":
        ds = load_dataset(args.dataset)
        checkpoint = _require_checkpoint(args, ["jcpgnn"])
        fractions = ([float(f) for f in args.fractions.split(",")]
                     if args.fractions else list(cfg.robustness_fractions))
        rows = cmd_robustness(ds, checkpoint, fractions, seed=cfg.seed, config_hash=chash)
    elif args.command == "generalize":
        checkpoint = _require_checkpoint(args, ["jcpgnn"])
        factors = ([float(f) for f in args.factors.split(",")]
                   if args.factors else list(cfg.scale_factors))
        n = args.n or cfg.n_test
        rows = cmd_generalize(checkpoint, factors, n, seed=cfg.seed, config_hash=chash)
    elif args.command == "bench":
        ds = load_dataset(args.dataset)
        names = _parse_solvers(args, cfg)
        checkpoint = _require_checkpoint(args, names)
        rows = cmd_bench_time(ds, names, checkpoint, reps=args.reps, seed=cfg.seed, config_hash=chash)
    else:  # pragma: no cover - argparse enforces the choices
        raise ValueError(f"unknown command {args.command!r}")

    append_rows(results_csv, rows)
    for row in rows:
        print(f"{row.experiment} {row.solver}: mean={row.mean_objective:.4f} "
              f"std={row.std_objective:.4f} t={row.time_per_instance_s:.5f}s")
    print(f"rows appended to {results_csv}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except Exception as exc:  # surface a single machine-parsable line
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
