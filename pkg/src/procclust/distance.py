"""Empirical distributional distance between real-valued sample paths.

Every ``m``-gram of a series falls into one cube of a grid of side ``h_l``
(level ``l``).  The distance between two series is the weighted sum, over all
gram lengths ``m`` and all levels ``l`` with weights ``2**-m * 2**-l``, of the
L1 distance between their empirical cube frequencies.

Two estimators are provided:

* :func:`dhat_exact` evaluates the infinite sums exactly.  Beyond a finite
  level the grid separates every pair of distinct cross-sample values, after
  which the level terms no longer change and the remaining tail is summed in
  closed form.
* :func:`dcheck` truncates the sums at ``m_max``/``l_max`` and may restrict
  each grid to a fixed, lexicographically ordered family of cells.

Both go through one vectorised kernel that works on a whole collection at
once, so :func:`distance_matrix` costs one pass per (level, gram length)
rather than one pass per pair.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidInputError, InvalidParameterError

__all__ = [
    "Sample",
    "PartitionScheme",
    "as_scheme",
    "CubeKey",
    "TruncationParams",
    "weight",
    "weight_sum",
    "cube_key",
    "empirical_profile",
    "cross_min_gap",
    "stabilization_level",
    "dhat_exact",
    "dcheck",
    "distance_matrix",
    "PairwiseDistances",
]

# Reciprocal grids do not nest, so the stabilisation level can be ~1/s_min.
# Levels past this cap are folded into the stable tail; the neglected weight
# is below 2**-62.
RECIPROCAL_LEVEL_CAP = 64
# Cells shared between series are followed up to this gram length; longer
# grams are scored as unshared.  The weight involved is below 2**-62.
GRAM_CAP = 64

THREADS_ENV = "PROCCLUST_THREADS"


@dataclass(frozen=True, eq=False)
class Sample:
    """One observed series."""

    id: str
    values: np.ndarray

    def __post_init__(self):
        try:
            arr = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(f"sample {self.id!r}: values are not real numbers") from exc
        if arr.size == 0:
            raise InvalidInputError(f"sample {self.id!r} is empty")
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise InvalidInputError(
                f"sample {self.id!r}: non-finite value at position {int(bad[0])}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size

    def __repr__(self) -> str:
        return f"Sample(id={self.id!r}, n={len(self)})"


class PartitionScheme(str, enum.Enum):
    """Grid family used at level ``l``: side ``2**-l`` or ``1/l``, anchored at 0."""

    DYADIC = "dyadic"
    RECIPROCAL = "reciprocal"

    def side(self, level: int) -> float:
        if self is PartitionScheme.DYADIC:
            return math.ldexp(1.0, -level)
        return 1.0 / level

    def codes(self, x, level: int) -> np.ndarray:
        """Integer cell coordinate of each value, returned as float64."""
        x = np.asarray(x, dtype=np.float64)
        if self is PartitionScheme.DYADIC:
            # exact: scaling by a power of two does not round
            return np.floor(np.ldexp(x, level))
        return np.floor(x * level)

    def upper_codes(self, x, level: int) -> np.ndarray:
        """``ceil(x / h_l)`` with the same rounding as :meth:`codes`."""
        x = np.asarray(x, dtype=np.float64)
        if self is PartitionScheme.DYADIC:
            return np.ceil(np.ldexp(x, level))
        return np.ceil(x * level)


def as_scheme(scheme) -> PartitionScheme:
    try:
        return PartitionScheme(scheme)
    except ValueError as exc:
        raise InvalidParameterError(f"unknown partition scheme {scheme!r}") from exc


@dataclass(frozen=True)
class CubeKey:
    m: int
    l: int
    coords: tuple


def weight(j: int) -> float:
    """``w_j = 2**-j``."""
    return math.ldexp(1.0, -j)


def weight_sum(a: int, b: int) -> float:
    """``sum(w_j for j in a..b)``; zero for an empty range."""
    if b < a:
        return 0.0
    a = max(a, 1)
    return math.ldexp(1.0, -(a - 1)) - math.ldexp(1.0, -b)


@dataclass(frozen=True)
class TruncationParams:
    """Finite sums for :func:`dcheck`.

    Parameters
    ----------
    m_max, l_max : int
        Largest gram length and grid level included.
    cell_cap : int, optional
        Keep at most this many cells per (m, l): the lexicographically first
        cells (by coordinates) among those meeting ``[box[0], box[1])**m``.
        ``None`` keeps every cell of the grid.
    box : (float, float)
        Half-open range whose cells are eligible when ``cell_cap`` is set.
    """

    m_max: int
    l_max: int
    cell_cap: int | None = None
    box: tuple = (0.0, 1.0)

    def __post_init__(self):
        if int(self.m_max) < 1 or int(self.l_max) < 1:
            raise InvalidParameterError("m_max and l_max must be positive")
        if self.cell_cap is not None and int(self.cell_cap) < 1:
            raise InvalidParameterError("cell_cap must be positive")
        lo, hi = (float(v) for v in self.box)
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise InvalidParameterError(f"invalid box {self.box!r}")
        object.__setattr__(self, "m_max", int(self.m_max))
        object.__setattr__(self, "l_max", int(self.l_max))
        if self.cell_cap is not None:
            object.__setattr__(self, "cell_cap", int(self.cell_cap))
        object.__setattr__(self, "box", (lo, hi))

    def contains(self, other: "TruncationParams") -> bool:
        """True if every term of ``other`` is also a term of ``self``."""
        if self.box != other.box:
            return False
        if self.m_max < other.m_max or self.l_max < other.l_max:
            return False
        if self.cell_cap is None:
            return True
        return other.cell_cap is not None and other.cell_cap <= self.cell_cap


Estimator = Union[str, TruncationParams]


def _as_sample(s, default_id="x") -> Sample:
    if isinstance(s, Sample):
        return s
    return Sample(default_id, s)


def cube_key(gram, l: int, scheme=PartitionScheme.DYADIC) -> CubeKey:
    """Cell of the level-``l`` grid containing ``gram`` (left-closed, right-open)."""
    scheme = as_scheme(scheme)
    g = np.asarray(gram, dtype=np.float64).reshape(-1)
    if g.size < 1 or l < 1:
        raise InvalidParameterError("need a non-empty gram and level >= 1")
    if not np.all(np.isfinite(g)):
        raise InvalidInputError("gram contains a non-finite value")
    return CubeKey(g.size, int(l), tuple(int(c) for c in scheme.codes(g, l)))


def empirical_profile(sample, m: int, l: int, scheme=PartitionScheme.DYADIC) -> dict:
    """Frequencies of the overlapping ``m``-grams of ``sample`` over level-``l`` cells.

    Returns a mapping ``CubeKey -> Fraction``; empty when the sample is
    shorter than ``m``.
    """
    scheme = as_scheme(scheme)
    if m < 1 or l < 1:
        raise InvalidParameterError("m and l must be positive")
    s = _as_sample(sample)
    n = len(s)
    if n < m:
        return {}
    codes = scheme.codes(s.values, l).astype(np.int64)
    windows = sliding_window_view(codes, m)
    keys, counts = np.unique(windows, axis=0, return_counts=True)
    total = n - m + 1
    return {
        CubeKey(m, l, tuple(int(c) for c in key)): Fraction(int(c), total)
        for key, c in zip(keys, counts)
    }


def cross_min_gap(samples: Sequence) -> float | None:
    """Smallest nonzero ``|x - y|`` with ``x``, ``y`` from different samples.

    ``None`` when every cross-sample pair of values is equal.
    """
    pair = _cross_adjacent_pairs([_as_sample(s).values for s in samples])
    if pair is None:
        return None
    lo, hi = pair
    return float(np.min(hi - lo))


def _cross_adjacent_pairs(arrays):
    # The minimising pair can always be taken adjacent among the distinct
    # values: an intermediate value would give a closer cross pair.
    if len(arrays) < 2:
        return None
    values = np.concatenate(arrays)
    owner = np.repeat(np.arange(len(arrays)), [a.size for a in arrays])
    order = np.argsort(values, kind="stable")
    values, owner = values[order], owner[order]
    uniq, start = np.unique(values, return_index=True)
    if uniq.size < 2:
        return None
    first_owner = np.minimum.reduceat(owner, start)
    last_owner = np.maximum.reduceat(owner, start)
    single = first_owner == last_owner
    same = single[:-1] & single[1:] & (first_owner[:-1] == first_owner[1:])
    cross = ~same
    if not cross.any():
        return None
    return uniq[:-1][cross], uniq[1:][cross]


def _level_for_gap(gap: float, scheme: PartitionScheme) -> int:
    if scheme is PartitionScheme.DYADIC:
        level = max(1, math.floor(-math.log2(gap)) + 1)
        while not math.ldexp(1.0, -level) < gap:
            level += 1
        while level > 1 and math.ldexp(1.0, -(level - 1)) < gap:
            level -= 1
        return level
    level = max(1, math.floor(1.0 / gap) + 1)
    while not 1.0 / level < gap:
        level += 1
    while level > 1 and 1.0 / (level - 1) < gap:
        level -= 1
    return level


def _collection_level(arrays, scheme: PartitionScheme) -> int:
    pairs = _cross_adjacent_pairs(arrays)
    if pairs is None:
        return 1
    lo, hi = pairs
    level = _level_for_gap(float(np.min(hi - lo)), scheme)
    # guard against rounding in the gap: every adjacent cross pair must split
    while np.any(scheme.codes(lo, level) == scheme.codes(hi, level)):
        level += 1
    return level


def stabilization_level(s1, s2, scheme=PartitionScheme.DYADIC) -> int:
    """Smallest level ``L`` with ``h_L`` below the cross-sample minimum gap.

    For every ``l >= L`` the level-``l`` terms equal the level-``L`` terms.
    Returns 1 when no two cross-sample values differ.
    """
    scheme = as_scheme(scheme)
    a, b = _as_sample(s1), _as_sample(s2)
    return _collection_level([a.values, b.values], scheme)


class _Collection:
    """Concatenated view of several series for the joint kernel."""

    def __init__(self, arrays):
        self.arrays = arrays
        self.lengths = np.array([a.size for a in arrays], dtype=np.int64)
        self.values = np.concatenate(arrays)
        self.owner = np.repeat(np.arange(len(arrays)), self.lengths)
        starts = np.concatenate([[0], np.cumsum(self.lengths)[:-1]])
        ends = starts + self.lengths
        # values left in the owning series from each position onward
        self.remaining = ends[self.owner] - np.arange(self.values.size)

    @property
    def size(self) -> int:
        return self.lengths.size


def _cap_mask(windows, level, scheme, box, cap):
    lo = float(scheme.codes(box[0], level))
    hi = float(scheme.upper_codes(box[1], level)) - 1.0
    radix = int(hi - lo) + 1
    m = windows.shape[1]
    digits = windows - lo
    inbox = np.all((digits >= 0) & (digits < radix), axis=1)
    if cap >= radix**m:
        return inbox
    target = np.empty(m, dtype=np.float64)
    rest = cap
    for j in range(m - 1, -1, -1):
        rest, target[j] = divmod(rest, radix)
    diff = digits != target
    has_diff = diff.any(axis=1)
    first = diff.argmax(axis=1)
    below = has_diff & (digits[np.arange(digits.shape[0]), first] < target[first])
    return inbox & below


def _pair_overlap(gram_ids, owner, grams_per, N):
    """``sum_B min(nu_i(B), nu_j(B))`` for all pairs, plus the shared-cell mask.

    Returns ``(overlap, shared_pos)`` where ``shared_pos`` flags the grams
    lying in a cell hit by at least two series.
    """
    keys, inv, counts = np.unique(gram_ids * N + owner, return_inverse=True, return_counts=True)
    key_ids, key_owner = keys // N, keys % N
    _, cell_inv, nown = np.unique(key_ids, return_inverse=True, return_counts=True)
    cell_inv = cell_inv.reshape(-1)
    shared_cell = nown >= 2
    shared_key = shared_cell[cell_inv]
    overlap = np.zeros((N, N))
    if shared_key.any():
        cols = (np.cumsum(shared_cell) - 1)[cell_inv]
        freq = np.zeros((N, int(shared_cell.sum())))
        sel = np.flatnonzero(shared_key)
        freq[key_owner[sel], cols[sel]] = counts[sel] / grams_per[key_owner[sel]]
        for i in range(N - 1):
            overlap[i, i + 1:] = np.minimum(freq[i], freq[i + 1:]).sum(axis=1)
        overlap += overlap.T
    return overlap, shared_key[inv.reshape(-1)]


def _level_terms(col: _Collection, codes, m_stop, cap=None, level=None, scheme=None, box=None):
    """``sum_m w_m T^{m,l}`` for every pair, at one grid level.

    ``T`` for a pair is ``S_i + S_j - 2 * sum_B min(nu_i(B), nu_j(B))`` where
    ``S`` is the retained frequency mass (1 without a cell cap).  Only cells
    hit by two or more series enter the min-sum.
    """
    if cap is not None:
        return _capped_level_terms(col, codes, m_stop, cap, level, scheme, box)
    N = col.size
    acc = np.zeros((N, N))
    lengths = col.lengths
    base = np.unique(codes, return_inverse=True)[1].astype(np.int64).reshape(-1)
    radix = int(base.max()) + 1
    # grams outside every shared cell can never extend to shared ones, so
    # only the still-shared positions are carried to the next gram length
    pos = np.arange(codes.size)
    ids = base
    m = 1
    while m <= min(m_stop, GRAM_CAP):
        if pos.size == 0:
            break
        owner = col.owner[pos]
        grams_per = np.maximum(lengths - m + 1, 0)
        overlap, shared = _pair_overlap(ids, owner, np.maximum(grams_per, 1), N)
        if not shared.any():
            break
        mass = (grams_per > 0).astype(np.float64)
        acc += weight(m) * (mass[:, None] + mass[None, :] - 2.0 * overlap)
        pos, ids = pos[shared], ids[shared]
        keep = col.remaining[pos] >= m + 1
        pos, ids = pos[keep], ids[keep]
        m += 1
        if pos.size:
            ids = np.unique(ids * radix + base[pos + m - 1], return_inverse=True)[1].reshape(-1)
    # from here on no cell is shared (or the remaining weight is below 2**-GRAM_CAP)
    top = np.minimum(lengths, m_stop)
    tail = np.array([weight_sum(m, int(t)) for t in top])
    acc += tail[:, None] + tail[None, :]
    np.fill_diagonal(acc, 0.0)
    return acc


def _capped_level_terms(col, codes, m_stop, cap, level, scheme, box):
    N = col.size
    acc = np.zeros((N, N))
    lengths = col.lengths
    base = np.unique(codes, return_inverse=True)[1].astype(np.int64).reshape(-1)
    radix = int(base.max()) + 1
    total = codes.size
    ids = base.copy()
    m = 1
    while m <= m_stop:
        pos = np.flatnonzero(col.remaining >= m)
        if pos.size == 0:
            break
        keep = _cap_mask(sliding_window_view(codes, m)[pos], level, scheme, box, cap)
        gram_ids, owner = ids[pos][keep], col.owner[pos][keep]
        grams_per = np.maximum(lengths - m + 1, 0)
        kept = np.bincount(owner, minlength=N)
        mass = np.where(grams_per > 0, kept / np.maximum(grams_per, 1), 0.0)
        overlap, _ = _pair_overlap(gram_ids, owner, np.maximum(grams_per, 1), N)
        acc += weight(m) * (mass[:, None] + mass[None, :] - 2.0 * overlap)
        m += 1
        if m <= m_stop and total - m + 1 > 0:
            nxt = ids[: total - m + 1] * radix + base[m - 1:]
            valid = col.remaining[: total - m + 1] >= m
            ids = np.full(total - m + 1, -1, dtype=np.int64)
            if valid.any():
                ids[valid] = np.unique(nxt[valid], return_inverse=True)[1].reshape(-1)
    np.fill_diagonal(acc, 0.0)
    return acc


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _run_levels(jobs, n_jobs):
    # results are summed in level order whatever the schedule
    if n_jobs is None:
        n_jobs = _default_threads()
    if n_jobs <= 1 or len(jobs) <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(lambda job: job(), jobs))


def _exact_matrix(arrays, scheme: PartitionScheme, n_jobs=None) -> np.ndarray:
    col = _Collection(arrays)
    level = _collection_level(arrays, scheme)
    if scheme is PartitionScheme.RECIPROCAL:
        level = min(level, RECIPROCAL_LEVEL_CAP)
    m_stop = int(col.lengths.max())
    levels = []
    if scheme is PartitionScheme.DYADIC:
        # dyadic grids nest: once a level separates all distinct values, every
        # finer level induces the same cells as the raw values
        n_distinct = np.unique(col.values).size
        for l in range(1, level):
            if np.unique(scheme.codes(col.values, l)).size == n_distinct:
                level = l
                break
            levels.append(l)
    else:
        levels = list(range(1, level))
    jobs = [
        (lambda l=l: _level_terms(col, scheme.codes(col.values, l), m_stop)) for l in levels
    ]
    jobs.append(lambda: _level_terms(col, col.values, m_stop))
    parts = _run_levels(jobs, n_jobs)
    out = np.zeros((col.size, col.size))
    for l, part in zip(levels, parts):
        out += weight(l) * part
    out += math.ldexp(1.0, -(level - 1)) * parts[-1]
    return out


def _truncated_matrix(arrays, params: TruncationParams, scheme, n_jobs=None) -> np.ndarray:
    col = _Collection(arrays)
    jobs = [
        (
            lambda l=l: _level_terms(
                col,
                scheme.codes(col.values, l),
                params.m_max,
                cap=params.cell_cap,
                level=l,
                scheme=scheme,
                box=params.box,
            )
        )
        for l in range(1, params.l_max + 1)
    ]
    parts = _run_levels(jobs, n_jobs)
    out = np.zeros((col.size, col.size))
    for l, part in enumerate(parts, start=1):
        out += weight(l) * part
    return out


def _matrix(arrays, estimator, scheme, n_jobs=None) -> np.ndarray:
    # identical series are at distance zero; compute on distinct ones only
    index = {}
    inverse = np.empty(len(arrays), dtype=np.int64)
    distinct = []
    for i, a in enumerate(arrays):
        key = a.tobytes()
        if key not in index:
            index[key] = len(distinct)
            distinct.append(a)
        inverse[i] = index[key]
    if len(distinct) == 1:
        return np.zeros((len(arrays), len(arrays)))
    if isinstance(estimator, TruncationParams):
        core = _truncated_matrix(distinct, estimator, scheme, n_jobs)
    elif estimator == "exact":
        core = _exact_matrix(distinct, scheme, n_jobs)
    else:
        raise InvalidParameterError(f"unknown estimator {estimator!r}")
    core = np.maximum(core, 0.0)
    core = 0.5 * (core + core.T)
    out = core[np.ix_(inverse, inverse)]
    np.fill_diagonal(out, 0.0)
    return out


def dhat_exact(s1, s2, scheme=PartitionScheme.DYADIC) -> float:
    """Empirical distributional distance with all infinite sums evaluated exactly."""
    scheme = as_scheme(scheme)
    a, b = _as_sample(s1), _as_sample(s2)
    return float(_matrix([a.values, b.values], "exact", scheme, n_jobs=1)[0, 1])


def dcheck(s1, s2, params: TruncationParams, scheme=PartitionScheme.DYADIC) -> float:
    """Truncated empirical distance: ``m <= m_max``, ``l <= l_max``, retained cells only."""
    scheme = as_scheme(scheme)
    a, b = _as_sample(s1), _as_sample(s2)
    return float(_matrix([a.values, b.values], params, scheme, n_jobs=1)[0, 1])


def distance_matrix(
    samples: Sequence,
    estimator: Estimator = "exact",
    scheme=PartitionScheme.DYADIC,
    n_jobs: int | None = None,
) -> np.ndarray:
    """Symmetric matrix of pairwise distances with a zero diagonal.

    Parameters
    ----------
    samples : sequence of Sample
    estimator : "exact" or TruncationParams
    scheme : PartitionScheme
    n_jobs : int, optional
        Worker threads over grid levels; defaults to ``$PROCCLUST_THREADS``
        or 1.  The result does not depend on it.
    """
    scheme = as_scheme(scheme)
    arrays = [_as_sample(s, f"s{i}").values for i, s in enumerate(samples)]
    if not arrays:
        raise InvalidInputError("need at least one sample")
    if len(arrays) == 1:
        return np.zeros((1, 1))
    return _matrix(arrays, estimator, scheme, n_jobs)


class PairwiseDistances:
    """Lazily evaluated, memoised pairwise distances with a call counter.

    ``calls`` counts distinct pairs actually evaluated; self-distances are
    free.  Indexing follows the order of ``samples``.
    """

    def __init__(self, samples: Sequence, estimator: Estimator = "exact", scheme=PartitionScheme.DYADIC):
        self.samples = [_as_sample(s, f"s{i}") for i, s in enumerate(samples)]
        self.estimator = estimator
        self.scheme = as_scheme(scheme)
        self._cache = {}
        self.calls = 0

    def __len__(self) -> int:
        return len(self.samples)

    def __call__(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        key = (min(i, j), max(i, j))
        if key not in self._cache:
            a, b = self.samples[key[0]].values, self.samples[key[1]].values
            self._cache[key] = float(_matrix([a, b], self.estimator, self.scheme, n_jobs=1)[0, 1])
            self.calls += 1
        return self._cache[key]
