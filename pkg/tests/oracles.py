"""Brute-force reference computations used only by the tests."""
from __future__ import annotations

import itertools

import numpy as np


def brute_min_cut(n_inner: int, arcs) -> float:
    """Minimum s-t cut by enumerating which inner nodes (2..n+1) sit with the source."""
    best = np.inf
    for bits in itertools.product((0, 1), repeat=n_inner):
        side = {0} | {i + 2 for i, b in enumerate(bits) if b}
        best = min(best, sum(c for u, v, c in arcs if u in side and v not in side))
    return best


def all_labelings(n: int, num_labels: int) -> np.ndarray:
    return np.array(list(itertools.product(range(num_labels), repeat=n)), dtype=np.int64).reshape(-1, n)


def energies(labelings: np.ndarray, costs: np.ndarray, edges: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Potts energy of many labelings at once, written independently of the library."""
    rows = np.arange(costs.shape[0])
    e = costs[rows, labelings].sum(axis=1)
    for (i, j), w in zip(np.asarray(edges).reshape(-1, 2), weights):
        e = e + w * (labelings[:, i] != labelings[:, j])
    return e


def best_expansion(current: np.ndarray, alpha: int, costs, edges, weights) -> float:
    """Lowest energy over every subset of regions switching to alpha."""
    n = len(current)
    moves = all_labelings(n, 2).astype(bool)
    cand = np.where(moves, alpha, current[None, :])
    return float(energies(cand, costs, edges, weights).min())


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2 * h)
    return grad


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float((np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)).max())


def brute_distance(seeds, h: int, w: int) -> np.ndarray:
    ys, xs = np.mgrid[0:h, 0:w]
    d = np.full((h, w), np.inf)
    for x, y in seeds:
        d = np.minimum(d, np.hypot(xs - x, ys - y))
    return d


def confusion_with_ious(ious_percent, scale: int = 10000) -> np.ndarray:
    """Integer confusion matrix, background first, whose per-class IoUs are exactly the inputs.

    Inputs are percentages with two decimals in report order (parts..., bg).
    Class c gets ``d_c`` diagonal counts and ``e_c`` off-diagonal errors with
    d_c / (d_c + e_c) = iou_c; the errors are laid out as a multigraph whose
    degree sequence is e (paired greedily, largest first).
    """
    vals = [round(v * 100) for v in ious_percent]
    vals = vals[-1:] + vals[:-1]
    diag = [2 * v for v in vals]
    err = [2 * (scale - v) for v in vals]
    n = len(vals)
    m = np.diag(diag).astype(np.int64)
    remaining = list(err)
    while sum(remaining) > 0:
        order = sorted(range(n), key=lambda k: -remaining[k])
        a, b = order[0], order[1]
        if remaining[b] == 0:
            raise ValueError("error degrees not realizable")
        step = remaining[b] if order[2:] == [] else max(1, min(remaining[b], remaining[a] - remaining[order[2]] + 1))
        step = min(step, remaining[a], remaining[b])
        m[a, b] += step
        remaining[a] -= step
        remaining[b] -= step
    return m
