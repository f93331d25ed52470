"""Pure-Python kernels. Same contract and RNG consumption as ``_kernels.pyx``."""

import numpy as np

from seglab import rng as _rng

NAME = "python"

US, RR, FF, DSEG = 0, 1, 2, 3


def raw_words(state, count):
    return np.array([_rng.next_word(state) for _ in range(count)], dtype=np.uint64)


def permutation(state, n):
    return _rng.permutation(state, n)


def steps_per_epoch(sampling, n):
    return 2 * n if sampling == FF else n


def epoch_indices(state, sampling, n):
    """Component order of one epoch; DSEG returns (extrapolation, update) pairs."""
    if sampling == US:
        return np.array([_rng.bounded(state, n) for _ in range(n)], dtype=np.int64)
    if sampling == DSEG:
        flat = [_rng.bounded(state, n) for _ in range(2 * n)]
        return np.array(flat, dtype=np.int64).reshape(n, 2)
    perm = _rng.permutation(state, n)
    if sampling == FF:
        return np.concatenate([perm, perm[::-1]])
    return perm


def seg_epochs(G, c, z, state, sampling, anchor, alphas, betas, n_epochs):
    """Run ``n_epochs`` SEG epochs in place on ``z``.

    Returns ``(epochs_completed, diverged)``. On divergence ``z`` holds the
    first non-finite iterate and the interrupted epoch is not counted.
    """
    n = G.shape[0]
    steps = steps_per_epoch(sampling, n)
    if len(alphas) < n_epochs * steps or len(betas) < n_epochs * steps:
        raise ValueError("stepsize arrays shorter than n_epochs * steps_per_epoch")
    cur = z.copy()
    for k in range(n_epochs):
        order = epoch_indices(state, sampling, n)
        start = cur
        for s in range(steps):
            if sampling == DSEG:
                i, j = order[s]
            else:
                i = j = order[s]
            a = alphas[k * steps + s]
            b = betas[k * steps + s]
            with np.errstate(over="ignore", invalid="ignore"):
                w = cur - a * (G[i] @ cur + c[i])
                cur = cur - b * (G[j] @ w + c[j])
            if not np.all(np.isfinite(cur)):
                z[:] = cur
                return k, True
        if anchor:
            cur = 0.5 * (cur + start)
        z[:] = cur
    return n_epochs, False


def phi_samples(state, n, nu, trials):
    q = 1.0 - nu
    half = n // 2
    out = np.empty(trials)
    for t in range(trials):
        signs = [1.0] * half + [-1.0] * (n - half)
        for i in range(n - 1, 0, -1):
            j = _rng.bounded(state, i + 1)
            signs[i], signs[j] = signs[j], signs[i]
        acc = 0.0
        for s in signs:
            acc = acc * q + s
        out[t] = acc
    return out
