"""Time the compiled kernels against their numpy / pure-Python twins.

Run with ``python benchmarks/bench_kernels.py``. Each kernel is checked for
identical output before it is timed; compile time is excluded by a warm-up
call. Prints one line per kernel with both timings and the speedup.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from cascadehist import _kernels
from cascadehist.rulelist import AntecedentUniverse, mine_antecedents
from cascadehist.schema import Schema
from cascadehist.tree import Tree


def _best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _random_tree(schema, rng, depth):
    def grow(sigma, d):
        cands = [j for j in range(schema.p) if len(sigma[j]) >= 2]
        if d == 0 or not cands or (d < depth and rng.random() < 0.2):
            return None
        j = cands[rng.integers(len(cands))]
        vals = list(sigma[j])
        rng.shuffle(vals)
        cut = int(rng.integers(1, len(vals)))
        groups = [tuple(sorted(vals[:cut])), tuple(sorted(vals[cut:]))]
        return (j, tuple((g, grow(sigma[:j] + (g,) + sigma[j + 1:], d - 1)) for g in groups))

    root = tuple(tuple(range(f.q)) for f in schema.features)
    return Tree(schema, grow(root, depth))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=200_000)
    ap.add_argument("--rules", type=int, default=14)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _kernels.numba is None:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(args.seed)
    schema = Schema.from_dict({"features": [
        {"name": f"f{j}", "categories": [str(c) for c in range(q)]}
        for j, q in enumerate([4, 3, 5, 2, 6, 3, 4, 2])
    ]})
    X = np.column_stack([rng.integers(0, f.q, size=args.rows) for f in schema.features])
    X = np.ascontiguousarray(X, dtype=np.int64)

    tree = _random_tree(schema, rng, depth=6)
    feats, table = tree._tables
    pool = mine_antecedents(schema, 2)
    pick = rng.choice(len(pool), size=args.rules, replace=False)
    rules = AntecedentUniverse(schema, [pool[k] for k in pick]).matrix
    q = schema.q.astype(np.int64)

    cases = [
        ("walk_tree", lambda: _kernels.walk_tree_numpy(feats, table, X),
         lambda: _kernels.walk_tree_numba(feats, table, X)),
        ("first_match", lambda: _kernels.first_match_numpy(rules, X),
         lambda: _kernels.first_match_numba(rules, X)),
        ("ie_volumes", lambda: _kernels.ie_volumes_python(rules, q),
         lambda: _kernels.ie_volumes_numba(rules, q)),
    ]
    print(f"rows={args.rows} tree_nodes={tree.n_nodes} rules={args.rules} numba={_kernels.numba.__version__}")
    print(f"{'kernel':<12} {'numpy_s':>10} {'numba_s':>10} {'speedup':>8}")
    for name, slow, fast in cases:
        a, b = slow(), fast()  # also warms up the JIT
        if not np.array_equal(np.asarray(a), np.asarray(b)):
            raise SystemExit(f"{name}: outputs differ")
        if name == "ie_volumes":
            _kernels._conjunction_volume.cache_clear()
            t_slow = _best_of(lambda: (_kernels._conjunction_volume.cache_clear(), slow()), args.repeat)
        else:
            t_slow = _best_of(slow, args.repeat)
        t_fast = _best_of(fast, args.repeat)
        print(f"{name:<12} {t_slow:>10.5f} {t_fast:>10.5f} {t_slow / t_fast:>7.1f}x")


if __name__ == "__main__":
    main()
