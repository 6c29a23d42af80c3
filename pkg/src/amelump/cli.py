"""Command-line front end.

Subcommands: solve (full master equation), lump (one clustering), auto
(iterative refinement heuristic), sweep (error curve over clustering
resolutions), simulate (stochastic ground truth), compare (trajectory
distance), info (clustering inspection).  Every command writes its outputs
into --out together with a JSON manifest sufficient to reproduce the run.
"""

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .clustering import Clustering, cluster_degrees
from .errors import (
    AmelumpError,
    CapExceededError,
    NumericalError,
    ValidationError,
)
from .model import load_model
from .neighborhoods import DEFAULT_CAP, total_size
from .solver import (
    SolverConfig,
    Trajectory,
    auto_lump_solve,
    solve_full,
    solve_lumped,
    sweep,
    trajectory_distance,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CAPACITY = 3
EXIT_NUMERICAL = 4
EXIT_IO = 5


def _fmt(value):
    """12 significant digits, the precision of all CSV output."""
    return f"{value:.12g}"


def write_trajectory_csv(path, traj):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["t", *traj.state_names]
        if traj.stds is not None:
            header += [f"sd_{s}" for s in traj.state_names]
        writer.writerow(header)
        for i, t in enumerate(traj.times):
            row = [_fmt(t), *(_fmt(v) for v in traj.globals[i])]
            if traj.stds is not None:
                row += [_fmt(v) for v in traj.stds[i]]
            writer.writerow(row)


def read_trajectory_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    names = tuple(h for h in header[1:] if not h.startswith("sd_"))
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    return Trajectory(
        times=data[:, 0],
        globals=data[:, 1 : 1 + len(names)],
        state_names=names,
    )


def write_iteration_log_csv(path, log):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "c_i", "clusters", "epsilon"])
        for i, row in enumerate(log):
            eps = "" if math.isnan(row["epsilon"]) else _fmt(row["epsilon"])
            writer.writerow([i, row["c"], row["clusters"], eps])


def _write_manifest(out_dir, command, model_path, model, params, outputs,
                    started, seeds=None):
    manifest = {
        "command": command,
        "model_file": str(model_path) if model_path else None,
        "model_sha256": model.source_digest if model else None,
        "parameters": params,
        "seeds": seeds,
        "outputs": [str(p) for p in outputs],
        "duration_seconds": time.time() - started,
    }
    path = Path(out_dir) / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(args):
    started = time.time()
    model = load_model(args.model)
    n = total_size(model.num_states, model.kmax)
    if n > args.cap:
        raise CapExceededError(
            f"the full system has {n} neighborhood vectors, exceeding the "
            f"cap of {args.cap}; use 'lump --approx' for this model"
        )
    traj, system = solve_full(model, cap=args.cap)
    out = _out_dir(args)
    csv_path = out / "trajectory.csv"
    write_trajectory_csv(csv_path, traj)
    _write_manifest(out, "solve", args.model, model,
                    {"cap": args.cap}, [csv_path], started)
    print(f"solved {system.size} equations; trajectory in {csv_path}")
    return EXIT_OK


def cmd_lump(args):
    started = time.time()
    model = load_model(args.model)
    traj, system = solve_lumped(
        model, degree_target=args.K, p=args.P, approx=args.approx,
        cap=args.cap,
    )
    out = _out_dir(args)
    csv_path = out / "trajectory.csv"
    write_trajectory_csv(csv_path, traj)
    _write_manifest(
        out, "lump", args.model, model,
        {"K": args.K, "P": args.P, "approx": args.approx, "cap": args.cap},
        [csv_path], started,
    )
    print(f"clusters: {system.n_clusters}")
    print(f"variables: {system.size}")
    print(f"trajectory in {csv_path}")
    return EXIT_OK


def cmd_auto(args):
    started = time.time()
    model = load_model(args.model)
    mode = "approx" if args.approx else "exact"
    traj, clustering, log = auto_lump_solve(
        model, c0=args.c0, r=args.r, eps_stop=args.eps, mode=mode,
        cap=args.cap,
    )
    out = _out_dir(args)
    csv_path = out / "trajectory.csv"
    log_path = out / "iterations.csv"
    write_trajectory_csv(csv_path, traj)
    write_iteration_log_csv(log_path, log)
    _write_manifest(
        out, "auto", args.model, model,
        {"c0": args.c0, "r": args.r, "eps": args.eps, "approx": args.approx,
         "cap": args.cap},
        [csv_path, log_path], started,
    )
    print(f"converged after {len(log)} iterations "
          f"with {clustering.n_clusters} clusters")
    print(f"trajectory in {csv_path}; iteration log in {log_path}")
    return EXIT_OK


def cmd_sweep(args):
    started = time.time()
    model = load_model(args.model)
    reference = None
    n = total_size(model.num_states, model.kmax)
    reference_name = "finest lumping"
    if n <= args.cap:
        reference, _ = solve_full(model, cap=args.cap)
        reference_name = "full system"
    rows = sweep(model, start=args.start, end=args.end, approx=args.approx,
                 reference=reference, cap=args.cap)
    out = _out_dir(args)
    csv_path = out / "sweep.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write(f"# epsilon reference: {reference_name}\n")
        writer = csv.writer(fh)
        writer.writerow(["c", "clusters", "epsilon", "surrogate"])
        for row in rows:
            writer.writerow([
                row["c"], row["clusters"], _fmt(row["epsilon"]),
                "" if math.isnan(row["surrogate"]) else _fmt(row["surrogate"]),
            ])
    _write_manifest(
        out, "sweep", args.model, model,
        {"start": args.start, "end": args.end, "approx": args.approx,
         "cap": args.cap, "reference": reference_name},
        [csv_path], started,
    )
    print(f"sweep table in {csv_path}")
    return EXIT_OK


def cmd_simulate(args):
    from .netsim import average_runs  # deferred: compiles on first use

    started = time.time()
    model = load_model(args.model)
    traj = average_runs(model, args.N, runs=args.runs, seed=args.seed)
    out = _out_dir(args)
    csv_path = out / "trajectory.csv"
    write_trajectory_csv(csv_path, traj)
    _write_manifest(
        out, "simulate", args.model, model,
        {"N": args.N, "runs": args.runs}, [csv_path], started,
        seeds={"master": args.seed},
    )
    loss = max(traj.meta["erasure_loss"])
    print(f"{args.runs} runs on {args.N} nodes "
          f"(max erasure loss {loss:.4%}); trajectory in {csv_path}")
    return EXIT_OK


def cmd_compare(args):
    a = read_trajectory_csv(args.trajectory_a)
    b = read_trajectory_csv(args.trajectory_b)
    print(_fmt(trajectory_distance(a, b)))
    return EXIT_OK


def cmd_info(args):
    started = time.time()
    model = load_model(args.model)
    clustering = Clustering(model, args.K, args.P, mode="approx")
    out = _out_dir(args)
    csv_path = out / "clusters.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write(f"# clusters: {clustering.n_clusters}\n")
        fh.write(f"# degree partition cost L: "
                 f"{_fmt(clustering.dpart.cost)}\n")
        writer = csv.writer(fh)
        writer.writerow(["cluster", "degree_lo", "degree_hi",
                         *(f"key_{s}" for s in model.states.names), "size"])
        for c in range(clustering.n_clusters):
            lo, hi = clustering.dpart.intervals[clustering.cluster_intervals[c]]
            writer.writerow([
                c, lo, hi, *clustering.cluster_keys[c],
                _fmt(clustering.sizes[c]),
            ])
    _write_manifest(out, "info", args.model, model,
                    {"K": args.K, "P": args.P}, [csv_path], started)
    print(f"clusters: {clustering.n_clusters}")
    print(f"degree partition cost L: {_fmt(clustering.dpart.cost)}")
    print(f"cluster table in {csv_path}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="amelump",
        description="Lumped master-equation solver for contact processes "
                    "on networks",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=func)
        return p

    def common(p, model=True):
        if model:
            p.add_argument("model", help="model JSON file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--cap", type=int, default=DEFAULT_CAP,
                       help="max materialized neighborhood vectors")

    p = add("solve", cmd_solve, help="solve the full master equation")
    common(p)

    p = add("lump", cmd_lump, help="solve one lumped system")
    common(p)
    p.add_argument("--K", type=int, required=True, help="degree intervals")
    p.add_argument("--P", type=int, required=True,
                   help="simplex intervals per coordinate")
    p.add_argument("--approx", action="store_true",
                   help="generate equations without materializing the "
                        "neighborhood set")

    p = add("auto", cmd_auto, help="iterative refinement heuristic")
    common(p)
    p.add_argument("--c0", type=int, default=10, help="initial resolution")
    p.add_argument("--r", type=float, default=1.3, help="growth factor")
    p.add_argument("--eps", type=float, default=0.01,
                   help="consecutive-solution stopping distance")
    p.add_argument("--approx", action="store_true")

    p = add("sweep", cmd_sweep, help="error curve over resolutions")
    common(p)
    p.add_argument("--start", type=int, default=5)
    p.add_argument("--end", type=int, default=20)
    p.add_argument("--approx", action="store_true")

    p = add("simulate", cmd_simulate, help="stochastic simulation baseline")
    common(p)
    p.add_argument("--N", type=int, default=100_000, help="node count")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="master seed")

    p = add("compare", cmd_compare,
            help="distance between two trajectory CSV files")
    p.add_argument("trajectory_a")
    p.add_argument("trajectory_b")

    p = add("info", cmd_info, help="inspect a clustering")
    common(p)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--P", type=int, required=True)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        for violation in exc.violations:
            print(f"error: {violation}", file=sys.stderr)
        return EXIT_VALIDATION
    except CapExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except AmelumpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
