"""Compare the compiled and pure-Python edit-distance kernels.

    python3 benchmarks/bench_edit_distance.py [--pairs N] [--length L] [--repeat R]
"""

from __future__ import annotations

import argparse
import random
import string
import timeit

from depfix._kernels._levenshtein_py import levenshtein as py_lev

try:
    from depfix._kernels._levenshtein import levenshtein as cy_lev
except ImportError:
    cy_lev = None

ALPHABET = string.ascii_letters + string.digits + " ._()[],=+-*"


def make_pairs(n: int, length: int, seed: int) -> list[tuple[str, str]]:
    rng = random.Random(seed)
    pairs = []
    for _ in range(n):
        a = "".join(rng.choices(ALPHABET, k=rng.randint(length // 2, length)))
        b = list(a)
        for _ in range(rng.randint(0, max(1, length // 4))):
            i = rng.randrange(len(b) + 1)
            b.insert(i, rng.choice(ALPHABET))
        pairs.append((a, "".join(b)))
    return pairs


def run(fn, pairs) -> None:
    for a, b in pairs:
        fn(a, b)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=2000)
    ap.add_argument("--length", type=int, default=80, help="typical completion line length")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    pairs = make_pairs(args.pairs, args.length, args.seed)
    kernels = {"python": py_lev}
    if cy_lev is not None:
        kernels["cython"] = cy_lev
        assert all(cy_lev(a, b) == py_lev(a, b) for a, b in pairs[:200])

    results = {}
    for name, fn in kernels.items():
        best = min(timeit.repeat(lambda: run(fn, pairs), number=1, repeat=args.repeat))
        results[name] = best
        print(f"{name:>7}: {best * 1e3:9.1f} ms for {len(pairs)} pairs ({best / len(pairs) * 1e6:.1f} us/pair)")
    if "cython" in results:
        print(f"speedup: {results['python'] / results['cython']:.1f}x")
    else:
        print("compiled kernel not built; only the fallback was timed")


if __name__ == "__main__":
    main()
