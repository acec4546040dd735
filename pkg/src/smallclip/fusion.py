"""Late fusion of per-source class probabilities, and seed ensembles.

Fusion operates on probability vectors (post-softmax) that different sources
(video head, audio model, ensemble members) produced for the same clips, and
always renormalizes its output, so results are valid probability vectors even
when inputs carry small drift. ``learn_fusion_weights`` brute-forces an
accuracy-maximizing weight vector over a simplex grid, which is honest at
validation-set scale and fully reproducible.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .scores import ScoreTable


def _check_sources(stack) -> np.ndarray:
    if stack.ndim != 2 or stack.shape[0] < 1:
        raise ContractError(f"expected a nonempty list of score vectors, "
                            f"got shape {stack.shape}")
    if not np.all(np.isfinite(stack)):
        raise ContractError("score vectors must be finite")
    if np.any(stack < 0):
        raise ContractError("fusion expects probabilities, got negative scores")
    if np.any(stack.sum(axis=1) <= 0):
        raise ContractError("score vectors must have positive sum")
    return stack


def _check_weights(weights, n) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise ContractError(f"expected {n} weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ContractError("fusion weights must be finite and nonnegative")
    if w.sum() <= 0:
        raise ContractError("fusion weights must not all be zero")
    return w


def _combine(stack, w) -> np.ndarray:
    # uniform weights take the mean path so the reduction identity is exact
    if np.all(w == w[0]):
        v = stack.sum(axis=0)
    else:
        v = w @ stack
    return v / v.sum(axis=-1, keepdims=True) if v.ndim > 1 else v / v.sum()


def fuse_mean(sources) -> np.ndarray:
    """Mean of the source vectors, renormalized to sum 1."""
    stack = _check_sources(np.stack([np.asarray(s, dtype=np.float64)
                                     for s in sources]))
    return _combine(stack, np.ones(stack.shape[0]))


def fuse_weighted(sources, weights) -> np.ndarray:
    """Convex combination of the source vectors, renormalized to sum 1."""
    stack = _check_sources(np.stack([np.asarray(s, dtype=np.float64)
                                     for s in sources]))
    return _combine(stack, _check_weights(weights, stack.shape[0]))


def ensemble_predict(models, clip) -> np.ndarray:
    """Mean prediction of same-shaped models on one clip."""
    if not models:
        raise ContractError("ensemble needs at least one model")
    return fuse_mean([m.predict(clip) for m in models])


def _aligned(tables) -> np.ndarray:
    """Stack tables as (M, N, C) in the first table's id order."""
    if not tables:
        raise ContractError("no score tables to fuse")
    first = tables[0]
    out = [first.probs]
    for t in tables[1:]:
        if t.n_classes != first.n_classes:
            raise ContractError("score tables disagree on class count")
        out.append(t.reordered(first.ids).probs)
    return np.stack(out)


def fuse_tables(tables, weights=None) -> ScoreTable:
    """Fuse whole tables over the same clips (mean, or weighted mean)."""
    stack = _aligned(tables)
    for m in range(stack.shape[0]):
        _check_sources(stack[m])
    if weights is None:
        w = np.ones(stack.shape[0])
    else:
        w = _check_weights(weights, stack.shape[0])
    fused = np.stack([_combine(stack[:, i, :], w)
                      for i in range(stack.shape[1])])
    return ScoreTable(list(tables[0].ids), fused)


def ensemble_tables(tables) -> ScoreTable:
    """Average the score tables of ensemble members (equal weights)."""
    return fuse_tables(tables, weights=None)


def _compositions(total, parts):
    # ascending lexicographic order; the order is the final tie-break
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def default_grid_step(n_sources: int) -> float:
    """0.05 for two sources, 0.1 beyond (the grid grows combinatorially)."""
    return 0.05 if n_sources <= 2 else 0.1


def learn_fusion_weights(tables, labels, grid_step=None):
    """Exhaustive simplex-grid search for fusion weights.

    ``labels`` maps clip id to class index and must cover every clip of the
    aligned tables. Candidate weights are multiples of ``grid_step`` summing
    to one (K = round(1/grid_step) steps); accuracy ties prefer the vector
    closest to uniform (exact integer distance), then the lexicographically
    smallest. Returns ``(weights, accuracy)``. Unit vectors are on the grid,
    so the winner is never worse than any single source.
    """
    stack = _aligned(tables)
    m, n_clips, _ = stack.shape
    if grid_step is None:
        grid_step = default_grid_step(m)
    if not 0 < grid_step <= 0.5:
        raise ContractError(f"grid_step must be in (0, 0.5], got {grid_step}")
    k = round(1.0 / grid_step)
    ids = tables[0].ids
    missing = [cid for cid in ids if cid not in labels]
    if missing:
        raise ContractError(f"no label for clip {missing[0]!r}")
    y = np.array([labels[cid] for cid in ids], dtype=np.int64)

    best = None  # (hits, distance-to-uniform, composition)
    for comp in _compositions(k, m):
        w = np.asarray(comp, dtype=np.float64) / k
        fused = np.einsum("m,mnc->nc", w, stack)
        hits = int(np.sum(np.argmax(fused, axis=1) == y))
        dist = sum((ki * m - k) ** 2 for ki in comp)
        if best is None or hits > best[0] or (hits == best[0] and dist < best[1]):
            best = (hits, dist, comp)
    weights = np.asarray(best[2], dtype=np.float64) / k
    return weights, best[0] / n_clips
