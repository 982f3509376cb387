"""Farthest-first clustering with known k, threshold clustering, and partition scoring.

Sample indices are 0-based throughout.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InvalidInputError, InvalidParameterError, UnsupportedSizeError

__all__ = [
    "Clustering",
    "CountingLookup",
    "check_distance_matrix",
    "cluster_known_k",
    "cluster_threshold",
    "exact_match",
    "misclassification_rate",
    "MAX_MATCHED_CLUSTERS",
]

MAX_MATCHED_CLUSTERS = 8


@dataclass(frozen=True)
class Clustering:
    """Partition of ``range(n)`` into nonempty disjoint clusters.

    Clusters are stored as sorted tuples, ordered by their smallest member.
    ``representatives[j]`` is the seed point of ``clusters[j]`` when the
    algorithm picks one.
    """

    clusters: tuple
    n: int
    representatives: tuple | None = None

    def __post_init__(self):
        pairs = [(tuple(sorted(int(i) for i in c)), None) for c in self.clusters]
        reps = self.representatives
        if reps is not None:
            if len(reps) != len(pairs):
                raise InvalidInputError("one representative per cluster is required")
            pairs = [(c, int(r)) for (c, _), r in zip(pairs, reps)]
            for c, r in pairs:
                if r not in c:
                    raise InvalidInputError(f"representative {r} is not in its cluster")
        if any(not c for c, _ in pairs):
            raise InvalidInputError("clusters must be nonempty")
        members = sorted(i for c, _ in pairs for i in c)
        if members != list(range(self.n)):
            raise InvalidInputError("clusters must be disjoint and cover 0..n-1")
        pairs.sort(key=lambda p: p[0][0])
        object.__setattr__(self, "clusters", tuple(c for c, _ in pairs))
        if reps is not None:
            object.__setattr__(self, "representatives", tuple(r for _, r in pairs))

    @classmethod
    def from_labels(cls, labels) -> "Clustering":
        groups = {}
        for i, lab in enumerate(labels):
            groups.setdefault(lab, []).append(i)
        return cls(tuple(groups.values()), len(labels))

    @property
    def k(self) -> int:
        return len(self.clusters)

    def labels(self) -> np.ndarray:
        out = np.empty(self.n, dtype=np.int64)
        for j, c in enumerate(self.clusters):
            out[list(c)] = j
        return out

    def as_sets(self) -> frozenset:
        return frozenset(frozenset(c) for c in self.clusters)


def check_distance_matrix(D, tol: float = 1e-12) -> np.ndarray:
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1] or D.shape[0] < 1:
        raise InvalidInputError("distance matrix must be square and nonempty")
    if not np.all(np.isfinite(D)):
        raise InvalidInputError("distance matrix has non-finite entries")
    if np.any(D < 0):
        raise InvalidInputError("distance matrix has negative entries")
    if np.any(np.abs(np.diag(D)) > tol) or np.any(np.abs(D - D.T) > tol):
        raise InvalidInputError("distance matrix must be symmetric with a zero diagonal")
    return D


class CountingLookup:
    """Wrap a matrix as a callable that counts distinct off-diagonal pairs read."""

    def __init__(self, D):
        self.D = check_distance_matrix(D)
        self._seen = set()

    @property
    def calls(self) -> int:
        return len(self._seen)

    def __len__(self) -> int:
        return self.D.shape[0]

    def __call__(self, i: int, j: int) -> float:
        if i != j:
            self._seen.add((min(i, j), max(i, j)))
        return float(self.D[i, j])


def _as_lookup(D):
    if callable(D):
        return D, len(D)
    D = check_distance_matrix(D)
    return (lambda i, j: float(D[i, j])), D.shape[0]


def cluster_known_k(D, k: int) -> Clustering:
    """Farthest-first seeding from point 0, then nearest-seed assignment.

    ``D`` is either a distance matrix or a callable ``D(i, j)`` with
    ``len(D)`` (for instance :class:`~procclust.distance.PairwiseDistances`),
    so that only the ``k`` seed columns, at most ``k * N`` pairs, are ever
    evaluated.  Ties go to the smallest index.
    """
    dist, N = _as_lookup(D)
    if not 1 <= k <= N:
        raise InvalidParameterError(f"k must lie in 1..{N}, got {k}")
    seeds = [0]
    nearest = [dist(i, 0) for i in range(N)]
    owner = [0] * N
    for j in range(1, k):
        chosen = set(seeds)
        best = max((i for i in range(N) if i not in chosen), key=lambda i: (nearest[i], -i))
        seeds.append(best)
        for i in range(N):
            d = dist(i, best)
            # strict: an equal distance keeps the earlier seed
            if d < nearest[i]:
                nearest[i] = d
                owner[i] = j
    # a seed at distance 0 from an earlier seed still heads its own cluster
    for j, c in enumerate(seeds):
        owner[c] = j
    clusters = [[] for _ in range(k)]
    for i in range(N):
        clusters[owner[i]].append(i)
    return Clustering(tuple(clusters), N, tuple(seeds))


def cluster_threshold(D, delta: float) -> Clustering:
    """Connected components of the graph with an edge wherever ``D[i, j] <= delta``."""
    if not delta >= 0:
        raise InvalidParameterError("delta must be nonnegative")
    D = check_distance_matrix(D)
    adjacency = csr_matrix(D <= delta)
    _, labels = connected_components(adjacency, directed=False)
    return Clustering.from_labels(labels.tolist())


def _as_clustering(c) -> Clustering:
    if isinstance(c, Clustering):
        return c
    members = [i for cl in c for i in cl]
    return Clustering(tuple(c), len(members))


def exact_match(a, b) -> bool:
    """Whether two partitions are equal as unordered families of sets."""
    a, b = _as_clustering(a), _as_clustering(b)
    if a.n != b.n:
        raise InvalidInputError(f"partitions of different sizes: {a.n} vs {b.n}")
    return a.as_sets() == b.as_sets()


def misclassification_rate(predicted, target) -> float:
    """Fraction of points misassigned under the best one-to-one label matching.

    Brute force over all matchings, so both partitions are limited to
    ``MAX_MATCHED_CLUSTERS`` clusters.  Predicted clusters left unmatched
    count as wholly misassigned.
    """
    p, t = _as_clustering(predicted), _as_clustering(target)
    if p.n != t.n:
        raise InvalidInputError(f"partitions of different sizes: {p.n} vs {t.n}")
    if max(p.k, t.k) > MAX_MATCHED_CLUSTERS:
        raise UnsupportedSizeError(f"at most {MAX_MATCHED_CLUSTERS} clusters are supported")
    overlap = np.zeros((p.k, t.k), dtype=np.int64)
    for i, ci in enumerate(p.clusters):
        for j, cj in enumerate(t.clusters):
            overlap[i, j] = len(set(ci) & set(cj))
    size = max(p.k, t.k)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[: p.k, : t.k] = overlap
    best = max(
        sum(padded[i, perm[i]] for i in range(size)) for perm in itertools.permutations(range(size))
    )
    return 1.0 - best / p.n
