"""
Command line front end.

    treecipher decide T1 T2 [--mode bijective|identity] [--complete] [--json]
    treecipher reduce T1 T2 [--json]
    treecipher gen --n N --alphabet K --seed S --scenario similar|perturbed [--prefix P]
    treecipher bench --sizes 100,200 --alphabets 2,5 --replicates 50 --scenario similar --out bench.csv

``decide`` exits with 0 (isomorphic), 1 (not isomorphic), 2 (undecided) or
3 (bad input).  ``bench`` runs one engine call per replicate and writes one
CSV row each; the worker count comes from ``TREECIPHER_WORKERS`` (default:
all CPUs).  The seed of a cell is ``derive_seed(base_seed, n, alphabet,
replicate)``, so any row can be regenerated alone with ``gen``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import engine, oracle
from .randgen import GenConfig, derive_seed, make_pair
from .trees import ParseError, dump, load

EXIT_ISOMORPHIC, EXIT_NOT_ISOMORPHIC, EXIT_UNDECIDED, EXIT_INPUT_ERROR = 0, 1, 2, 3
_EXIT = {"isomorphic": 0, "not_isomorphic": 1, "undecided": 2}


@dataclass
class BenchRecord:
    n: int
    alphabet_size: int
    seed: int
    scenario: str
    verdict: str
    wall_time_ns: int
    log10_N_final: float
    log10_N_equiv: float
    r_final: float
    map_nodes_calls: int


BENCH_FIELDS = [f.name for f in fields(BenchRecord)]


def bench_one(n: int, alphabet_size: int, seed: int, scenario: str) -> BenchRecord:
    """Generate one pair and time ``engine.run`` on it (generation is not timed)."""
    t1, t2 = make_pair(GenConfig(n, alphabet_size, seed), scenario)
    start = time.perf_counter_ns()
    out = engine.run(t1, t2)
    elapsed = time.perf_counter_ns() - start
    return BenchRecord(n, alphabet_size, seed, scenario, out.verdict, elapsed,
                       out.log10_N_final, out.log10_N_equiv, out.r_final, out.map_nodes_calls)


def _bench_star(args):
    return bench_one(*args)


def bench_grid(sizes, alphabets, replicates: int, scenarios=("similar",), base_seed: int = 0,
               workers: int | None = None) -> list[BenchRecord]:
    jobs = [
        (n, a, derive_seed(base_seed, n, a, r), sc)
        for n in sizes
        for a in alphabets
        for r in range(replicates)
        for sc in scenarios
    ]
    if workers is None:
        workers = int(os.environ.get("TREECIPHER_WORKERS", os.cpu_count() or 1))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_bench_star, jobs, chunksize=max(1, len(jobs) // (8 * workers))))
    else:
        rows = [bench_one(*job) for job in jobs]
    rows.sort(key=lambda r: (r.n, r.alphabet_size, r.seed, r.scenario))
    return rows


def write_csv(rows, out) -> None:
    writer = csv.DictWriter(out, fieldnames=BENCH_FIELDS)
    writer.writeheader()
    for r in rows:
        writer.writerow(asdict(r))


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.replace(" ", "").split(",") if x]


def _load_pair(args):
    try:
        return load(args.tree1), load(args.tree2)
    except (OSError, ParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None


def cmd_decide(args) -> int:
    pair = _load_pair(args)
    if pair is None:
        return EXIT_INPUT_ERROR
    mode = engine.CipherMode(args.mode)
    out = engine.run(*pair, mode)
    if args.complete and out.verdict == "undecided":
        out = oracle.complete_backtracking(out)
    if args.json:
        print(out.to_json())
    else:
        print(f"verdict: {out.verdict}")
        if isinstance(out, engine.NotIsomorphic):
            print(f"reason: {out.reason.value}")
        if isinstance(out, engine.Isomorphic):
            print("f: " + ", ".join(f"{a}->{b}" for a, b in sorted(out.f.items())))
        print(f"log10 N final: {out.log10_N_final:.6g}   r_final: {out.r_final:.6g}")
    return _EXIT[out.verdict]


def cmd_reduce(args) -> int:
    pair = _load_pair(args)
    if pair is None:
        return EXIT_INPUT_ERROR
    out = engine.run(*pair)
    if args.json:
        print(json.dumps({"verdict": out.verdict, "stages": out.to_dict()["stages"]}))
    else:
        for s in out.stages:
            exact = "" if s.exact_N is None else f"  N={s.exact_N}"
            print(f"{s.name:12s} log10 N={s.log10_N:.6f}{exact}")
        print(f"verdict: {out.verdict}")
    return 0


def cmd_gen(args) -> int:
    try:
        t1, t2 = make_pair(GenConfig(args.n, args.alphabet, args.seed), args.scenario)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    ext = "json" if args.format == "json" else "tree"
    paths = [Path(f"{args.prefix}_1.{ext}"), Path(f"{args.prefix}_2.{ext}")]
    for t, p in zip((t1, t2), paths):
        dump(t, p, args.format)
    print(" ".join(str(p) for p in paths))
    return 0


def cmd_bench(args) -> int:
    scenarios = ("similar", "perturbed") if args.scenario == "both" else (args.scenario,)
    try:
        out = open(args.out, "w", newline="") if args.out != "-" else sys.stdout
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    try:
        rows = bench_grid(_int_list(args.sizes), _int_list(args.alphabets), args.replicates,
                          scenarios, args.seed, args.workers)
        write_csv(rows, out)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treecipher",
                                     description="Labeled unordered tree isomorphism up to a substitution cipher.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decide", help="decide whether two trees are equal up to a label cipher")
    p.add_argument("tree1")
    p.add_argument("tree2")
    p.add_argument("--mode", choices=[m.value for m in engine.CipherMode], default="bijective")
    p.add_argument("--complete", action="store_true", help="resolve undecided runs by backtracking")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("reduce", help="print the search space size after every filter")
    p.add_argument("tree1")
    p.add_argument("tree2")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("gen", help="write a random pair of trees")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alphabet", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenario", choices=["similar", "perturbed"], default="similar")
    p.add_argument("--prefix", default="pair")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="time the reduction over a grid of random pairs")
    p.add_argument("--sizes", default="100,200,400")
    p.add_argument("--alphabets", default="5")
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--scenario", choices=["similar", "perturbed", "both"], default="similar")
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
