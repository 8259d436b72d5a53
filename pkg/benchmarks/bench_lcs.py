#!/usr/bin/env python3
"""Benchmark the LCS kernels: compiled extension vs pure Python.

The diversity filter computes one LCS per candidate pair per context, so at
corpus scale (thousands of contexts, ~10 intents each) this loop dominates
intent filtering. Usage:

    python3 benchmarks/bench_lcs.py [--pairs 2000] [--length 30]
"""

import argparse
import random
import time

from specforge import _lcs_py

try:
    from specforge import _lcs

    COMPILED = _lcs.lcs_length
except ImportError:
    COMPILED = None


def make_pairs(n_pairs: int, length: int, vocab: int, seed: int):
    rng = random.Random(seed)
    return [
        (
            [rng.randrange(vocab) for _ in range(rng.randrange(length // 2, length + 1))],
            [rng.randrange(vocab) for _ in range(rng.randrange(length // 2, length + 1))],
        )
        for _ in range(n_pairs)
    ]


def bench(fn, pairs):
    started = time.perf_counter()
    total = 0
    for a, b in pairs:
        total += fn(a, b)
    elapsed = time.perf_counter() - started
    return elapsed, total


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--pairs", type=int, default=2000)
    parser.add_argument("--length", type=int, default=30)
    parser.add_argument("--vocab", type=int, default=40)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    pairs = make_pairs(args.pairs, args.length, args.vocab, args.seed)
    py_time, py_total = bench(_lcs_py.lcs_length, pairs)
    print(f"pure python : {py_time * 1000:8.1f} ms  ({args.pairs} pairs, checksum {py_total})")
    if COMPILED is None:
        print("compiled    : extension not built (pip install -e . rebuilds it)")
        return
    cy_time, cy_total = bench(COMPILED, pairs)
    assert cy_total == py_total, "kernels disagree"
    print(f"compiled    : {cy_time * 1000:8.1f} ms  ({args.pairs} pairs, checksum {cy_total})")
    print(f"speedup     : {py_time / cy_time:8.1f}x")


if __name__ == "__main__":
    main()
