"""Command-line driver: ``run`` experiments, ``bench`` timings, ``validate`` invariants.

Exit codes: 0 success, 1 failed property (validate), 2 invalid input,
3 numerical or convergence failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import baselines
from .corpus import corpus_graph
from .errors import CapacityError, NumericalError, ValidationError
from .graph import Graph, LeaderConfig, candidate_universe, largest_connected_component, leader_config, load_edge_list
from .greedy_approx import ApproxParams, run_approx
from .greedy_exact import SelectionResult, exact_trajectory, run_exact
from .linalg import DEFAULT_DENSE_CAP

__all__ = ["RunSpec", "ALGORITHMS", "main", "cmd_run", "cmd_bench", "cmd_validate", "load_input"]

ALGORITHMS = ("exact", "approx", "random", "top-degree", "top-cent", "brute-force")
TRAJECTORY_FIELDS = ["repetition", "algorithm", "k_step", "R_Q", "wall_ms"]
SUMMARY_FIELDS = ["algorithm", "reps", "final_R_Q_mean", "final_R_Q_stderr", "ratio_to_exact"]
CHOSEN_FIELDS = ["repetition", "algorithm", "step", "leader", "follower", "weight"]
BENCH_FIELDS = ["network", "n", "m", "algorithm", "seconds", "candidate_seconds"]


class StageError(Exception):
    """Wraps a package error with the pipeline stage it came from."""

    def __init__(self, stage: str, exc: Exception):
        self.stage = stage
        self.exc = exc
        super().__init__(f"{stage}: {exc}")


@dataclass
class RunSpec:
    input: str
    k: int
    q: int | None = None
    leaders: list[str] | None = None
    algorithm: str = "all"
    epsilon: float = 0.2
    seed: int = 0
    reps: int = 1
    out: Path = Path("out")
    workers: int = 1
    dense_cap: int = DEFAULT_DENSE_CAP
    strict_delta: bool = False
    fix_q: bool = False
    timing: bool = True
    top_cent_score: str = "resistance"
    weight: float = 1.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.reps < 1:
            raise ValidationError("--reps must be at least 1")
        if self.k < 0:
            raise ValidationError("--k must be nonnegative")
        if (self.q is None) == (self.leaders is None):
            raise ValidationError("give exactly one of --q and --leaders")
        if self.q is not None and self.q < 1:
            raise ValidationError("--q must be at least 1")
        if self.algorithm != "all" and self.algorithm not in ALGORITHMS:
            raise ValidationError(f"unknown algorithm {self.algorithm!r}")
        if self.workers < 1:
            raise ValidationError("--workers must be at least 1")

    @property
    def algorithms(self) -> tuple[str, ...]:
        return ALGORITHMS if self.algorithm == "all" else (self.algorithm,)


def _stage(name):
    def wrap(fn):
        def inner(*a, **kw):
            try:
                return fn(*a, **kw)
            except (ValidationError, NumericalError, CapacityError, OSError) as exc:
                raise StageError(name, exc) from exc
        return inner
    return wrap


@_stage("load")
def load_input(path: str, weighted: bool | None = None) -> Graph:
    """Edge-list file, or ``corpus:NAME`` for a bundled graph; reduced to its largest component."""
    if path.startswith("corpus:"):
        return corpus_graph(path.split(":", 1)[1])
    with open(path, encoding="utf-8") as fh:
        g = load_edge_list(fh, weighted=weighted)
    if g.n == 0:
        raise ValidationError("input has no edges")
    return largest_connected_component(g)


def _seed_for(seed: int, *salt: int) -> int:
    return int(np.random.SeedSequence([seed, *salt]).generate_state(1, np.uint64)[0] >> np.uint64(1))


@_stage("leaders")
def _leaders(g: Graph, spec: RunSpec, rep: int) -> list[int]:
    if spec.leaders is not None:
        index = g.label_index()
        out = []
        for tok in spec.leaders:
            key = int(tok) if tok.lstrip("-").isdigit() and int(tok) in index else tok
            if key not in index:
                raise ValidationError(f"leader {tok!r} is not a vertex of the largest component")
            out.append(index[key])
        return sorted(set(out))
    if spec.q >= g.n:
        raise ValidationError(f"--q={spec.q} leaves no followers in a graph with {g.n} vertices")
    rng = np.random.default_rng(_seed_for(spec.seed, 0 if spec.fix_q else rep, 7))
    return sorted(rng.choice(g.n, size=spec.q, replace=False).tolist())


def _params(spec: RunSpec, rep: int) -> ApproxParams:
    return ApproxParams(epsilon=spec.epsilon, seed=_seed_for(spec.seed, rep, 11),
                        strict_delta=spec.strict_delta, workers=spec.workers)


def _run_algorithm(name: str, g: Graph, cfg: LeaderConfig, spec: RunSpec, rep: int) -> SelectionResult:
    seed = _seed_for(spec.seed, rep, 13)
    k, cap = spec.k, spec.dense_cap
    if name == "exact":
        return run_exact(g, cfg, k, cap)
    if name == "approx":
        res = run_approx(g, cfg, k, _params(spec, rep))
        if cfg.dim <= cap:
            # report the true objective of the sketched selection
            res.params["sketched_trajectory"] = res.trajectory
            res.trajectory = exact_trajectory(g, cfg, res.chosen, cap)
        return res
    if name == "random":
        return baselines.run_random(g, cfg, k, seed, cap, _params(spec, rep))
    if name == "top-degree":
        return baselines.run_top_degree(g, cfg, k, seed, cap, _params(spec, rep))
    if name == "top-cent":
        return baselines.run_top_cent(g, cfg, k, seed, spec.top_cent_score, cap, _params(spec, rep))
    if name == "brute-force":
        return baselines.run_brute_force(g, cfg, k, dense_cap=cap)
    raise ValidationError(f"unknown algorithm {name!r}")


def _skippable(name: str, g: Graph, cfg: LeaderConfig, spec: RunSpec) -> str | None:
    """Reason to skip ``name`` when running every algorithm, else None."""
    if name in ("exact", "brute-force") and cfg.dim > spec.dense_cap:
        return "follower count exceeds the dense cap"
    if name == "top-cent" and spec.top_cent_score == "resistance" and g.n > spec.dense_cap:
        return "vertex count exceeds the dense cap"
    if name == "brute-force":
        size = baselines.brute_force_size(cfg, spec.k)
        if size > baselines.BRUTE_FORCE_CAP:
            return f"{size} evaluations exceed the brute-force cap"
    return None


def _label(g: Graph, v: int):
    return g.labels[v] if g.labels else v


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_run(spec: RunSpec, log=None) -> int:
    log = log or sys.stderr
    g = load_input(spec.input, spec.extra.get("weighted"))
    spec.out.mkdir(parents=True, exist_ok=True)
    traj_rows, chosen_rows = [], []
    finals: dict[str, list[float]] = {}
    ratios: dict[str, list[float]] = {}
    for rep in range(spec.reps):
        leaders = _leaders(g, spec, rep)
        try:
            cfg = leader_config(g, leaders, weight=spec.weight)
        except ValidationError as exc:
            raise StageError("leaders", exc) from exc
        exact_final = None
        for name in spec.algorithms:
            if spec.algorithm == "all":
                why = _skippable(name, g, cfg, spec)
                if why:
                    print(f"skipping {name} (repetition {rep}): {why}", file=log)
                    continue
            try:
                res = _run_algorithm(name, g, cfg, spec, rep)
            except (ValidationError, NumericalError, CapacityError) as exc:
                raise StageError(name, exc) from exc
            if name == "exact":
                exact_final = res.final
            # greedy rounds are timed one by one; other strategies only as a whole
            cum = np.cumsum([0.0] + list(res.round_seconds))
            greedy = name in ("exact", "approx")
            for i, val in enumerate(res.trajectory):
                wall = f"{1000 * (cum[i] if greedy else cum[-1]):.3f}" if spec.timing else ""
                traj_rows.append([rep, name, i, _fmt(val), wall])
            for i, e in enumerate(res.chosen, start=1):
                chosen_rows.append([rep, name, i, _label(g, e.leader), _label(g, e.follower), _fmt(e.weight)])
            finals.setdefault(name, []).append(res.final)
            if exact_final is not None and name != "exact":
                ratios.setdefault(name, []).append(res.final / exact_final)
    _write(spec.out / "trajectory.csv", TRAJECTORY_FIELDS, traj_rows)
    _write(spec.out / "chosen_edges.csv", CHOSEN_FIELDS, chosen_rows)
    summary = []
    for name, vals in finals.items():
        v = np.asarray(vals)
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
        if name == "exact":
            ratio = "1.0"
        elif name in ratios and len(ratios[name]) == v.size:
            ratio = _fmt(np.mean(ratios[name]))
        else:
            ratio = ""
        summary.append([name, v.size, _fmt(v.mean()), _fmt(se), ratio])
    _write(spec.out / "summary.csv", SUMMARY_FIELDS, summary)
    return 0


def _write(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_bench(spec: RunSpec, inputs: Sequence[str], algorithms: Sequence[str], log=None) -> int:
    log = log or sys.stderr
    spec.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for path in inputs:
        g = load_input(path, spec.extra.get("weighted"))
        leaders = _leaders(g, spec, 0)
        t0 = time.perf_counter()
        try:
            candidate_universe(g, leaders, spec.weight)
            cand_s = time.perf_counter() - t0
            cfg = leader_config(g, leaders, weight=spec.weight)
        except ValidationError as exc:
            raise StageError("leaders", exc) from exc
        network = Path(path).stem if not path.startswith("corpus:") else path.split(":", 1)[1]
        for name in algorithms:
            if name == "exact" and cfg.dim > spec.dense_cap:
                print(f"skipping exact on {network}: {cfg.dim} followers exceed the dense cap", file=log)
                rows.append([network, g.n, g.m, name, "---", f"{cand_s:.6f}"])
                continue
            t0 = time.perf_counter()
            try:
                if name == "exact":
                    run_exact(g, cfg, spec.k, spec.dense_cap)
                else:
                    run_approx(g, cfg, spec.k, _params(spec, 0))
            except (ValidationError, NumericalError, CapacityError) as exc:
                raise StageError(name, exc) from exc
            rows.append([network, g.n, g.m, name, f"{time.perf_counter() - t0:.6f}", f"{cand_s:.6f}"])
    _write(spec.out / "bench.csv", BENCH_FIELDS, rows)
    return 0


def cmd_validate(inputs: Sequence[str], seed: int = 0, strict_delta: bool = False, out=None) -> int:
    out = out or sys.stdout
    from .validation import run_suites

    graphs = [(p, load_input(p)) for p in inputs]
    results = run_suites(graphs, seed=seed, strict_delta=strict_delta)
    ok = True
    for r in results:
        ok &= r.passed
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<28} trials={r.trials:<6} worst_slack={r.worst_slack:.3e}  {r.detail}",
              file=out)
    return 0 if ok else 1


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polarmin", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, multi_input=False):
        if multi_input:
            sp.add_argument("--input", action="append", required=True, metavar="PATH",
                            help="edge list or corpus:NAME; repeatable")
        else:
            sp.add_argument("--input", required=True, metavar="PATH", help="edge list or corpus:NAME")
        grp = sp.add_mutually_exclusive_group(required=not multi_input)
        grp.add_argument("--q", type=int, help="number of random leaders")
        grp.add_argument("--leaders", type=lambda s: [t for t in s.split(",") if t], metavar="LIST",
                         help="comma-separated leader ids")
        sp.add_argument("--k", type=int, default=20)
        sp.add_argument("--eps", type=float, default=0.2)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", type=Path, default=Path("out"), metavar="DIR")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--dense-cap", type=int, default=DEFAULT_DENSE_CAP)
        sp.add_argument("--strict-delta", action="store_true")
        sp.add_argument("--weighted", action="store_true", default=None, help="read a third weight column")
        sp.add_argument("--edge-weight", type=float, default=1.0, help="weight of every new edge")

    r = sub.add_parser("run", help="select edges and write trajectory/summary/chosen_edges CSVs")
    common(r)
    r.add_argument("--alg", default="all", choices=ALGORITHMS + ("all",))
    r.add_argument("--reps", type=int, default=1)
    r.add_argument("--fix-Q", dest="fix_q", action="store_true", help="reuse one leader set for all repetitions")
    r.add_argument("--no-timing", dest="timing", action="store_false", help="leave wall_ms empty")
    r.add_argument("--top-cent-score", choices=("resistance", "grounded"), default="resistance")

    b = sub.add_parser("bench", help="time exact and approx, write bench.csv")
    common(b, multi_input=True)
    b.add_argument("--alg", default="both", choices=("exact", "approx", "both"))

    v = sub.add_parser("validate", help="check invariants on a graph corpus")
    v.add_argument("--input", action="append", metavar="PATH",
                   help="edge list or corpus:NAME; repeatable (default: bundled small corpus)")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--strict-delta", action="store_true", help="also run the sketch concentration suite")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            from .corpus import SMALL_CORPUS

            inputs = args.input or [f"corpus:{n}" for n in SMALL_CORPUS]
            return cmd_validate(inputs, args.seed, args.strict_delta)
        q = args.q if args.q is not None or args.leaders is not None else 10
        spec = RunSpec(input=args.input if args.command == "run" else args.input[0], k=args.k, q=q,
                       leaders=args.leaders, algorithm=getattr(args, "alg", "all") if args.command == "run" else "all",
                       epsilon=args.eps, seed=args.seed, reps=getattr(args, "reps", 1), out=args.out,
                       workers=args.workers, dense_cap=args.dense_cap, strict_delta=args.strict_delta,
                       fix_q=getattr(args, "fix_q", False), timing=getattr(args, "timing", True),
                       top_cent_score=getattr(args, "top_cent_score", "resistance"), weight=args.edge_weight,
                       extra={"weighted": args.weighted})
        if args.command == "run":
            return cmd_run(spec)
        algs = ("exact", "approx") if args.alg == "both" else (args.alg,)
        return cmd_bench(spec, args.input, algs)
    except StageError as exc:
        inner = exc.exc
        print(f"error [{exc.stage}]: {inner}", file=sys.stderr)
        return 3 if isinstance(inner, NumericalError) else 2
    except ValidationError as exc:
        print(f"error [arguments]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
