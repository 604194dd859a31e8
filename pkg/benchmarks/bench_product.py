"""Benchmark the two product-reachability kernel paths against each other.

Builds the product dead-state table for a few representative constraint sets
with both the numba backend (JIT scalar loops) and the pure-numpy fallback
(vectorized BFS levels), checks that the results are bit-identical, and
reports wall times. The same choice is exposed at runtime through the
LTLGUARD_BACKEND environment variable (auto | numba | numpy).

Run from the repository root:

    python benchmarks/bench_product.py
    python benchmarks/bench_product.py --repeats 9 --json
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from ltlguard._kernels import numba_available
from ltlguard.fixtures import demo_delivery_fixture
from ltlguard.ltl import STANDARD_PREDICATES, Vocabulary, parse_prefix
from ltlguard.product import build_dead_table

# the demo counting constraint, re-aimed at a fresh room per copy
COUNTING_TEMPLATE = demo_delivery_fixture().constraints[9].ltl


def counting_product(copies: int):
    """Independent at-most-three counters; product grows as 8**copies."""
    rooms = [f"room{i}" for i in range(copies)]
    vocab = Vocabulary(dict(STANDARD_PREDICATES), tuple(rooms))
    formulas = [
        parse_prefix(
            COUNTING_TEMPLATE.replace("agent_at(hallway)", f"agent_at({room})"), vocab
        )
        for room in rooms
    ]
    return formulas


def avoidance_product(width: int):
    """Many 2-state invariants; stresses the 2**width mask dimension."""
    rooms = [f"room{i}" for i in range(width)]
    vocab = Vocabulary(dict(STANDARD_PREDICATES), tuple(rooms))
    return [parse_prefix(f"G ! agent_at({room})", vocab) for room in rooms]


def demo_product():
    task = demo_delivery_fixture()
    return [c.formula for c in task.expert_constraints()]


WORKLOADS = [
    ("demo_delivery", demo_product),
    ("counting_x4", lambda: counting_product(4)),
    ("avoidance_x12", lambda: avoidance_product(12)),
]


def build_automata(formulas):
    from ltlguard.automaton import compile_automaton

    return [compile_automaton(f) for f in formulas]


def time_backend(automata, backend: str, repeats: int):
    build_dead_table(automata, backend=backend)  # warm-up (JIT for numba)
    best = float("inf")
    table = None
    for _ in range(repeats):
        start = time.perf_counter()
        table = build_dead_table(automata, backend=backend)
        best = min(best, time.perf_counter() - start)
    return best, table


def tables_equal(a, b) -> bool:
    return (
        np.array_equal(a.reachable, b.reachable)
        and np.array_equal(a.trans, b.trans)
        and np.array_equal(a.accepting, b.accepting)
        and np.array_equal(a.dead, b.dead)
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="timed runs per case")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    args = parser.parse_args(argv)

    backends = ["numpy"]
    if numba_available():
        backends.insert(0, "numba")
    else:
        print("note: numba not importable, timing the numpy path only", file=sys.stderr)

    rows = []
    for name, make in WORKLOADS:
        automata = build_automata(make())
        timings, tables = {}, {}
        for backend in backends:
            timings[backend], tables[backend] = time_backend(
                automata, backend, args.repeats
            )
        if len(backends) == 2 and not tables_equal(tables["numba"], tables["numpy"]):
            print(f"error: backend outputs differ on {name}", file=sys.stderr)
            return 1
        table = tables[backends[0]]
        rows.append(
            {
                "workload": name,
                "states": int(table.n_reachable),
                "masks": int(table.trans.shape[1]) if table.trans.size else 0,
                **{f"{b}_ms": timings[b] * 1e3 for b in backends},
            }
        )

    if args.json:
        print(json.dumps(rows, indent=1))
        return 0

    header = f"{'workload':16s} {'states':>7s} {'masks':>6s}"
    for backend in backends:
        header += f" {backend + ' (ms)':>12s}"
    if len(backends) == 2:
        header += f" {'speedup':>8s}"
    print(header)
    for row in rows:
        line = f"{row['workload']:16s} {row['states']:7d} {row['masks']:6d}"
        for backend in backends:
            line += f" {row[f'{backend}_ms']:12.2f}"
        if len(backends) == 2:
            line += f" {row['numpy_ms'] / row['numba_ms']:7.1f}x"
        print(line)
    print(f"(best of {args.repeats}; identical outputs verified across backends)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
