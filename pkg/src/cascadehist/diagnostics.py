"""Convergence diagnostics for multi-chain searches."""
from __future__ import annotations

import math

import numpy as np


def gelman_rubin(traces, burn_in: float = 0.5) -> float:
    """Potential scale reduction factor over equal-length scalar traces.

    The leading ``burn_in`` fraction of every trace is discarded (the second
    half is kept by default). With ``n`` retained samples per chain,
    ``W`` the mean within-chain variance and ``B`` the between-chain
    variance of the means (times ``n``)::

        R = sqrt(((n - 1) / n * W + B / n) / W)

    Returns 1.0 when every retained value is identical, and ``inf`` when the
    chains are individually constant but disagree.
    """
    arr = np.asarray([np.asarray(t, dtype=float) for t in traces])
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ValueError("need at least 2 traces of equal length")
    if arr.shape[1] < 10:
        raise ValueError("traces must have at least 10 samples")
    start = int(math.floor(burn_in * arr.shape[1]))
    kept = arr[:, start:]
    n = kept.shape[1]
    if n < 2:
        raise ValueError("too few samples left after burn-in")
    w = kept.var(axis=1, ddof=1).mean()
    b = n * kept.mean(axis=1).var(ddof=1)
    if w == 0.0:
        return 1.0 if b == 0.0 else math.inf
    v = (n - 1) / n * w + b / n
    return float(math.sqrt(v / w))
