"""Inner loops: leaf assignment, first-match rule lookup, inclusion-exclusion.

Every kernel exists twice: a numba ``@njit`` version and a pure numpy/Python
version. The module-level names (``walk_tree``, ``first_match``,
``ie_volumes``) point at the numba versions unless numba is missing or the
environment variable ``CASCADEHIST_DISABLE_NUMBA`` is set to a truthy value.
Both versions are importable explicitly so they can be compared.
"""
from __future__ import annotations

import os
from functools import lru_cache

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is optional
    numba = None

_FLAG = os.environ.get("CASCADEHIST_DISABLE_NUMBA", "").strip().lower()
NUMBA_ENABLED = numba is not None and _FLAG not in ("1", "true", "yes", "on")

# int64 volume arithmetic inside the compiled kernel is exact below this.
INT64_SAFE_DOMAIN = 2**62


# ---------------------------------------------------------------------------
# numpy / pure Python versions
# ---------------------------------------------------------------------------

def walk_tree_numpy(features, child_table, X):
    """Route every row of ``X`` from the root to its leaf.

    Parameters
    ----------
    features : (N,) int64
        Split feature of each node, ``-1`` for leaves.
    child_table : (N, qmax) int64
        ``child_table[i, v]`` is the child of node ``i`` reached by value ``v``
        of its split feature.
    X : (n, p) int64
        Category indices.

    Returns
    -------
    (n,) int64 array of leaf node ids.
    """
    n = X.shape[0]
    cur = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    active = features[cur] >= 0
    while active.any():
        idx = rows[active]
        node = cur[idx]
        cur[idx] = child_table[node, X[idx, features[node]]]
        active[idx] = features[cur[idx]] >= 0
    return cur


def first_match_numpy(rules, X):
    """Leaf index under first-match semantics; 0 when no rule applies.

    ``rules`` is an (m, p) int64 matrix with ``-1`` marking an unconstrained
    feature. Rule ``j`` (0-based row) owns leaf ``j + 1``.
    """
    n = X.shape[0]
    m = rules.shape[0]
    out = np.zeros(n, dtype=np.int64)
    if m == 0 or n == 0:
        return out
    free = rules < 0
    hits = np.all((X[:, None, :] == rules[None, :, :]) | free[None, :, :], axis=2)
    any_hit = hits.any(axis=1)
    out[any_hit] = np.argmax(hits[any_hit], axis=1) + 1
    return out


@lru_cache(maxsize=1 << 16)
def _conjunction_volume(key, q):
    """Volume of a conjunction keyed by its sorted (feature, value) pairs."""
    used = {f for f, _ in key}
    vol = 1
    for j, qj in enumerate(q):
        if j not in used:
            vol *= qj
    return vol


def _conjoin(a, b):
    """Merge two condition dicts; None on contradiction."""
    out = dict(a)
    for f, v in b.items():
        w = out.get(f)
        if w is None:
            out[f] = v
        elif w != v:
            return None
    return out


def ie_volumes_python(rules, q):
    """Leaf volumes of a rule list by inclusion-exclusion.

    Depth-first over subsets of earlier rules; a contradictory conjunction
    prunes every superset. Exact Python integers throughout.

    Returns a list of length m + 1, entry 0 being the default leaf.
    """
    q = tuple(int(v) for v in q)
    conds = [{j: int(v) for j, v in enumerate(row) if v >= 0} for row in np.asarray(rules)]
    total = 1
    for qj in q:
        total *= qj
    out = [0] * (len(conds) + 1)

    def vol(c):
        return _conjunction_volume(tuple(sorted(c.items())), q)

    for i, ci in enumerate(conds):
        acc = vol(ci)
        stack = [(ci, 0, 0)]
        while stack:
            conj, start, depth = stack.pop()
            for k in range(start, i):
                nxt = _conjoin(conj, conds[k])
                if nxt is None:
                    continue
                sign = -1 if depth % 2 == 0 else 1
                acc += sign * vol(nxt)
                stack.append((nxt, k + 1, depth + 1))
        out[i + 1] = acc
    out[0] = total - sum(out[1:])
    return out


# ---------------------------------------------------------------------------
# numba versions
# ---------------------------------------------------------------------------

def _walk_tree_loop(features, child_table, X):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for r in range(n):
        cur = 0
        f = features[cur]
        while f >= 0:
            cur = child_table[cur, X[r, f]]
            f = features[cur]
        out[r] = cur
    return out


def _first_match_loop(rules, X):
    n, p = X.shape
    m = rules.shape[0]
    out = np.zeros(n, dtype=np.int64)
    for r in range(n):
        for j in range(m):
            ok = True
            for f in range(p):
                v = rules[j, f]
                if v >= 0 and X[r, f] != v:
                    ok = False
                    break
            if ok:
                out[r] = j + 1
                break
    return out


def _ie_volumes_loop(rules, q):
    m, p = rules.shape
    out = np.zeros(m + 1, dtype=np.int64)
    total = np.int64(1)
    for f in range(p):
        total *= q[f]
    conj = np.empty((m + 1, p), dtype=np.int64)
    nxt = np.empty(m + 1, dtype=np.int64)
    used = np.int64(0)
    for i in range(m):
        for f in range(p):
            conj[0, f] = rules[i, f]
        acc = np.int64(1)
        for f in range(p):
            if conj[0, f] < 0:
                acc *= q[f]
        nxt[0] = 0
        d = 0
        while d >= 0:
            k = nxt[d]
            if k >= i:
                d -= 1
                continue
            nxt[d] = k + 1
            ok = True
            for f in range(p):
                a = conj[d, f]
                b = rules[k, f]
                if a < 0:
                    conj[d + 1, f] = b
                elif b < 0 or a == b:
                    conj[d + 1, f] = a
                else:
                    ok = False
                    break
            if not ok:
                continue
            v = np.int64(1)
            for f in range(p):
                if conj[d + 1, f] < 0:
                    v *= q[f]
            if d % 2 == 0:
                acc -= v
            else:
                acc += v
            nxt[d + 1] = k + 1
            d += 1
        out[i + 1] = acc
        used += acc
    out[0] = total - used
    return out


if numba is not None:
    walk_tree_numba = numba.njit(cache=True)(_walk_tree_loop)
    first_match_numba = numba.njit(cache=True)(_first_match_loop)
    _ie_volumes_numba_raw = numba.njit(cache=True)(_ie_volumes_loop)

    def ie_volumes_numba(rules, q):
        """Compiled inclusion-exclusion; int64, so the domain must stay below 2**62."""
        rules = np.ascontiguousarray(rules, dtype=np.int64).reshape(-1, len(q))
        res = _ie_volumes_numba_raw(rules, np.asarray(q, dtype=np.int64))
        return [int(v) for v in res]
else:  # pragma: no cover
    walk_tree_numba = None
    first_match_numba = None
    ie_volumes_numba = None


if NUMBA_ENABLED:
    walk_tree = walk_tree_numba
    first_match = first_match_numba
    _ie_fast = ie_volumes_numba
else:
    walk_tree = walk_tree_numpy
    first_match = first_match_numpy
    _ie_fast = None


def ie_volumes(rules, q):
    """Dispatch to the compiled kernel when enabled and int64-safe."""
    total = 1
    for qj in q:
        total *= int(qj)
    if _ie_fast is not None and total < INT64_SAFE_DOMAIN:
        return _ie_fast(rules, q)
    return ie_volumes_python(rules, q)
