#!/usr/bin/env python3
"""Benchmark the compiled LCS kernel against the pure-Python twin.

The LCS dynamic program is the hot inner loop of every ROUGE-L call
(answer scoring, narrative similarity, the exhaustive metric checks).
This script times both backends on token-id workloads of increasing
length and on end-to-end ROUGE-L over a synthetic answer-scoring batch.

Usage: python bench/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import random
import time
from array import array

from qgforge import _lcs_py, kernels
from qgforge.simlearner import make_synthetic_corpus
from qgforge.textmetrics import rouge_l_f1

try:
    from qgforge import _lcs

    HAVE_COMPILED = True
except ImportError:
    _lcs = None
    HAVE_COMPILED = False


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_lcs(repeats: int) -> None:
    rng = random.Random(7)
    print(f"{'len':>6} {'pairs':>6} {'python':>12} {'cython':>12} {'speedup':>8}")
    for length, pairs in ((8, 2000), (32, 500), (128, 100), (512, 10)):
        workload = [
            (
                [rng.randrange(30) for _ in range(length)],
                [rng.randrange(30) for _ in range(length)],
            )
            for _ in range(pairs)
        ]
        arrays = [(array("i", a), array("i", b)) for a, b in workload]

        def run_python():
            for a, b in workload:
                _lcs_py.lcs_length(a, b)

        python_time = _time(run_python, repeats)
        if HAVE_COMPILED:

            def run_cython():
                for a, b in arrays:
                    _lcs.lcs_length(a, b)

            cython_time = _time(run_cython, repeats)
            speedup = python_time / cython_time if cython_time else float("inf")
            print(
                f"{length:>6} {pairs:>6} {python_time * 1e3:>10.2f}ms "
                f"{cython_time * 1e3:>10.2f}ms {speedup:>7.1f}x"
            )
        else:
            print(f"{length:>6} {pairs:>6} {python_time * 1e3:>10.2f}ms {'n/a':>12} {'n/a':>8}")


def bench_rouge(repeats: int) -> None:
    corpus = make_synthetic_corpus(n_train_sections=80, n_val_sections=0,
                                   n_test_sections=0, seed=3)
    answers = [rec.answer for rec in corpus]
    texts = [rec.text for rec in corpus]

    def run():
        for answer, text in zip(answers, texts):
            rouge_l_f1(text, answer)

    best = _time(run, repeats)
    rate = len(answers) / best
    print(
        f"\nROUGE-L end-to-end ({kernels.BACKEND} backend): "
        f"{len(answers)} scorings in {best * 1e3:.1f}ms ({rate:,.0f}/s)"
    )


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5, help="best-of-N timing")
    args = parser.parse_args()
    print(f"selected backend: {kernels.BACKEND} (compiled available: {HAVE_COMPILED})\n")
    bench_lcs(args.repeats)
    bench_rouge(args.repeats)


if __name__ == "__main__":
    main()
