"""Average-linkage agglomerative clustering on a similarity matrix.

Used to produce an under-clustered starting point for VBx, so the threshold
is normally set low enough to leave more clusters than speakers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plda import llr_matrix

__all__ = ["AhcResult", "ahc_cluster", "pairwise_similarity", "DEFAULT_AHC_THRESHOLD"]

DEFAULT_AHC_THRESHOLD = -0.015


@dataclass(frozen=True)
class AhcResult:
    labels: np.ndarray
    merge_trace: list[tuple[int, int, float]]

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


def pairwise_similarity(xvectors, metric: str = "plda_llr", phi=None) -> np.ndarray:
    """Symmetric (T, T) similarity matrix of PLDA LLRs or cosine similarities."""
    X = np.atleast_2d(np.asarray(xvectors, dtype=float))
    if X.shape[0] < 1:
        raise ValueError("need at least one vector")
    if metric == "plda_llr":
        if phi is None:
            raise ValueError("plda_llr similarity needs phi")
        return llr_matrix(X, phi)
    if metric == "cosine":
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms == 0):
            raise ValueError("cosine similarity undefined for a zero-norm vector")
        Xn = X / norms[:, None]
        S = Xn @ Xn.T
        return 0.5 * (S + S.T)
    raise ValueError(f"unknown metric {metric!r}")


def ahc_cluster(similarity, threshold: float, max_clusters: int | None = None) -> AhcResult:
    """Merge the most similar pair of clusters while their average similarity > threshold.

    If ``max_clusters`` is given, merging continues past the threshold until
    at most that many clusters remain.

    Ties go to the lexicographically smallest (i, j) pair of current cluster
    indices; a merged cluster keeps the smaller index. Final labels are
    renumbered 0..K-1 in order of first appearance.
    """
    S = np.array(similarity, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("similarity must be a square matrix")
    T = S.shape[0]
    if T == 0:
        raise ValueError("cannot cluster an empty set")

    np.fill_diagonal(S, -np.inf)
    sizes = np.ones(T)
    members = np.arange(T)
    alive = np.ones(T, dtype=bool)
    row_best = np.argmax(S, axis=1)
    row_max = S[np.arange(T), row_best]
    trace: list[tuple[int, int, float]] = []
    n_clusters = T

    while n_clusters > 1:
        i = int(np.argmax(row_max))
        best = row_max[i]
        if not best > threshold and (max_clusters is None or n_clusters <= max_clusters):
            break
        j = int(row_best[i])
        a, b = min(i, j), max(i, j)
        trace.append((a, b, float(best)))
        # average linkage update: similarity to the union is the size-weighted mean
        new = (sizes[a] * S[a] + sizes[b] * S[b]) / (sizes[a] + sizes[b])
        S[a, :] = new
        S[:, a] = new
        S[a, a] = -np.inf
        S[b, :] = -np.inf
        S[:, b] = -np.inf
        sizes[a] += sizes[b]
        alive[b] = False
        n_clusters -= 1
        members[members == b] = a
        row_max[b] = -np.inf

        stale = alive & ((row_best == a) | (row_best == b))
        stale[a] = True
        # rows whose best may now be the merged cluster
        improved = alive & (S[:, a] >= row_max) & ~stale
        for r in np.flatnonzero(stale):
            row_best[r] = np.argmax(S[r])
            row_max[r] = S[r, row_best[r]]
        for r in np.flatnonzero(improved):
            if S[r, a] > row_max[r] or a < row_best[r]:
                row_best[r] = a
                row_max[r] = S[r, a]

    _, labels = np.unique(members, return_inverse=True)
    # relabel by first appearance so the partition labelling is canonical
    order = {}
    canon = np.empty(T, dtype=int)
    for t, lab in enumerate(labels):
        canon[t] = order.setdefault(int(lab), len(order))
    return AhcResult(labels=canon, merge_trace=trace)
