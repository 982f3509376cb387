"""Slow, independent reference evaluations used only by the tests.

Nothing here imports the package's distance kernel: profiles are rebuilt from
scratch with plain dictionaries and exact fractions for every (m, l).
"""

import math
from fractions import Fraction


def cell(gram, level, scheme):
    if scheme == "dyadic":
        return tuple(math.floor(math.ldexp(x, level)) for x in gram)
    return tuple(math.floor(x * level) for x in gram)


def profile(xs, m, level, scheme):
    n = len(xs)
    if n < m:
        return {}
    counts = {}
    for i in range(n - m + 1):
        key = cell(xs[i:i + m], level, scheme)
        counts[key] = counts.get(key, 0) + 1
    return {k: Fraction(c, n - m + 1) for k, c in counts.items()}


def t_term(xs, ys, m, level, scheme, keep=None):
    p, q = profile(xs, m, level, scheme), profile(ys, m, level, scheme)
    cells = set(p) | set(q)
    if keep is not None:
        cells = {c for c in cells if keep(c)}
    return sum((abs(p.get(c, 0) - q.get(c, 0)) for c in cells), Fraction(0))


def brute_min_gap(xs, ys):
    gaps = [abs(x - y) for x in xs for y in ys if x != y]
    return min(gaps) if gaps else None


def brute_level(xs, ys, scheme):
    gap = brute_min_gap(xs, ys)
    if gap is None:
        return 1
    level = 1
    side = (lambda l: 2.0 ** -l) if scheme == "dyadic" else (lambda l: 1.0 / l)
    while not side(level) < gap:
        level += 1
    return level


def naive_dhat(xs, ys, scheme="dyadic"):
    """Every (m, l) up to the stabilisation level, last level weight doubled."""
    xs, ys = list(map(float, xs)), list(map(float, ys))
    top = brute_level(xs, ys, scheme)
    total = 0.0
    for m in range(1, max(len(xs), len(ys)) + 1):
        for level in range(1, top + 1):
            w = 2.0 ** -m * 2.0 ** -level
            if level == top:
                w *= 2
            total += w * float(t_term(xs, ys, m, level, scheme))
    return total


def naive_dcheck(xs, ys, m_max, l_max, scheme="dyadic", cap=None, box=(0.0, 1.0)):
    xs, ys = list(map(float, xs)), list(map(float, ys))
    total = 0.0
    for m in range(1, m_max + 1):
        for level in range(1, l_max + 1):
            keep = None
            if cap is not None:
                keep = retained_cells(m, level, scheme, cap, box)
            total += 2.0 ** -m * 2.0 ** -level * float(t_term(xs, ys, m, level, scheme, keep))
    return total


def retained_cells(m, level, scheme, cap, box):
    """Membership test for the first ``cap`` cells in lexicographic order."""
    import itertools

    if scheme == "dyadic":
        lo = math.floor(math.ldexp(box[0], level))
        hi = math.ceil(math.ldexp(box[1], level)) - 1
    else:
        lo = math.floor(box[0] * level)
        hi = math.ceil(box[1] * level) - 1
    cells = set(itertools.islice(itertools.product(range(lo, hi + 1), repeat=m), cap))
    return lambda c: c in cells
