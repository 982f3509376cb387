"""Consistency experiments on synthetic corpora with known target clusters.

The number of samples ``N`` stays fixed while the sample length ``n`` grows.
Each (length, trial) cell draws a fresh corpus from its own seeded streams,
builds a distance matrix, clusters it and scores the result against the
target partition.  Every aggregate except wall time is a deterministic
function of the config.
"""

from __future__ import annotations

import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .clustering import Clustering, CountingLookup, cluster_known_k, cluster_threshold, exact_match
from .distance import TruncationParams, as_scheme, dcheck, dhat_exact, distance_matrix
from .errors import InvalidParameterError
from .generators import CoupledPair, MarkovSpec, gen_coupled, generate, markov_alpha_bound, spec_from_dict
from .mixing import MixingBound, default_params

__all__ = [
    "Source",
    "TruncationSchedule",
    "ExperimentConfig",
    "LengthRecord",
    "ExperimentReport",
    "run_experiment",
    "CurveResult",
    "convergence_curve",
    "matching_rate",
    "is_coarsening",
    "corpus_mixing_bound",
    "draw_corpus",
]

KNOWN_K = "known-k"
THRESHOLD = "threshold"


@dataclass(frozen=True)
class Source:
    """``count`` samples of one process, all carrying target label ``label``.

    For a :class:`CoupledPair`, ``count`` pairs are drawn and the two
    components are labelled ``label/a`` and ``label/b``.
    """

    spec: object
    count: int = 1
    label: str = ""

    def labels(self, default: str):
        base = self.label or default
        if isinstance(self.spec, CoupledPair):
            return (f"{base}/a", f"{base}/b")
        return (base,)

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "count": self.count, "label": self.label}


@dataclass(frozen=True)
class TruncationSchedule:
    """Truncation parameters as a function of the shortest length ``n``.

    A ``None`` field follows the default rule ``floor(log2 n)`` (the same rule
    :func:`~procclust.mixing.default_params` uses).
    """

    m_max: int | None = None
    l_max: int | None = None
    cell_cap: int | None = None

    def __call__(self, n: int) -> TruncationParams:
        depth = max(1, min(n.bit_length() - 1, n // 2 - 1))
        return TruncationParams(
            self.m_max if self.m_max is not None else depth,
            self.l_max if self.l_max is not None else depth,
            self.cell_cap,
        )

    def to_dict(self) -> dict:
        return {"m_max": self.m_max, "l_max": self.l_max, "cell_cap": self.cell_cap}


@dataclass
class ExperimentConfig:
    sources: list
    lengths: list
    trials: int = 1
    algorithm: str = KNOWN_K
    estimator: str = "exact"
    truncation: TruncationSchedule = field(default_factory=TruncationSchedule)
    k: int | None = None
    delta: float | None = None
    scheme: str = "dyadic"
    seed: int = 0

    def validate(self):
        if not self.sources:
            raise InvalidParameterError("at least one source is required")
        for s in self.sources:
            if s.count < 1:
                raise InvalidParameterError("source counts must be positive")
        lengths = [int(n) for n in self.lengths]
        if not lengths or any(n < 1 for n in lengths):
            raise InvalidParameterError("lengths must be positive")
        if any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise InvalidParameterError("lengths must be strictly increasing")
        if self.trials < 1:
            raise InvalidParameterError("trials must be at least 1")
        if self.algorithm not in (KNOWN_K, THRESHOLD):
            raise InvalidParameterError(f"unknown algorithm {self.algorithm!r}")
        if self.estimator not in ("exact", "truncated"):
            raise InvalidParameterError(f"unknown estimator {self.estimator!r}")
        as_scheme(self.scheme)
        N = self.n_samples
        if self.algorithm == KNOWN_K:
            k = self.target_k if self.k is None else self.k
            if not 1 <= k <= N:
                raise InvalidParameterError(f"k={k} is outside 1..{N}")
        else:
            if self.delta is not None and not self.delta >= 0:
                raise InvalidParameterError("delta must be nonnegative")
            if self.delta is None and min(lengths) < 8:
                raise InvalidParameterError("the default threshold rule needs lengths >= 8")

    @property
    def target_labels(self) -> list:
        labels = []
        for idx, s in enumerate(self.sources):
            names = s.labels(f"p{idx}")
            for _ in range(s.count):
                labels.extend(names)
        return labels

    @property
    def n_samples(self) -> int:
        return len(self.target_labels)

    @property
    def target_k(self) -> int:
        return len(set(self.target_labels))

    def warnings(self) -> list:
        out = []
        seen = {}
        for idx, s in enumerate(self.sources):
            if isinstance(s.spec, CoupledPair):
                continue
            key = repr(s.spec.to_dict())
            label = s.labels(f"p{idx}")[0]
            if key in seen and seen[key] != label:
                out.append(
                    f"sources {seen[key]!r} and {label!r} share one process but have different "
                    "target labels; the target partition is not identifiable"
                )
            seen.setdefault(key, label)
        if self.algorithm == KNOWN_K and self.k is not None and self.k != self.target_k:
            out.append(f"k={self.k} differs from the {self.target_k} target clusters")
        return out

    def to_dict(self) -> dict:
        return {
            "sources": [s.to_dict() for s in self.sources],
            "lengths": list(self.lengths),
            "trials": self.trials,
            "algorithm": self.algorithm,
            "estimator": self.estimator,
            "truncation": self.truncation.to_dict(),
            "k": self.k,
            "delta": self.delta,
            "scheme": self.scheme,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        sources = [
            Source(spec_from_dict(s["spec"]), int(s.get("count", 1)), str(s.get("label", "")))
            for s in d["sources"]
        ]
        trunc = d.get("truncation") or {}
        return cls(
            sources=sources,
            lengths=[int(n) for n in d["lengths"]],
            trials=int(d.get("trials", 1)),
            algorithm=d.get("algorithm", KNOWN_K),
            estimator=d.get("estimator", "exact"),
            truncation=TruncationSchedule(trunc.get("m_max"), trunc.get("l_max"), trunc.get("cell_cap")),
            k=d.get("k"),
            delta=d.get("delta"),
            scheme=d.get("scheme", "dyadic"),
            seed=int(d.get("seed", 0)),
        )


@dataclass
class LengthRecord:
    n: int
    trials: int
    exact_match_rate: float
    mean_misclassification: float
    within_mean: float | None
    within_median: float | None
    across_mean: float | None
    across_median: float | None
    mean_distance_calls: float | None
    max_distance_calls: int | None
    call_budget: int | None
    mean_clusters: float
    threshold: float | None
    threshold_monotone: bool | None
    wall_time: float = 0.0
    trial_exact: list = field(default_factory=list)
    trial_calls: list = field(default_factory=list)

    def to_dict(self, timing: bool = False) -> dict:
        out = {
            "n": self.n,
            "trials": self.trials,
            "exact_match_rate": self.exact_match_rate,
            "mean_misclassification": self.mean_misclassification,
            "within_mean": self.within_mean,
            "within_median": self.within_median,
            "across_mean": self.across_mean,
            "across_median": self.across_median,
            "mean_distance_calls": self.mean_distance_calls,
            "max_distance_calls": self.max_distance_calls,
            "call_budget": self.call_budget,
            "mean_clusters": self.mean_clusters,
            "threshold": self.threshold,
            "threshold_monotone": self.threshold_monotone,
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: list
    warnings: list

    def summary_table(self) -> str:
        head = f"{'n':>8} {'exact':>7} {'miscl':>7} {'within':>9} {'across':>9} {'calls':>6} {'k_hat':>6}"
        lines = [head, "-" * len(head)]
        for r in self.records:
            calls = "-" if r.max_distance_calls is None else str(r.max_distance_calls)
            lines.append(
                f"{r.n:>8} {r.exact_match_rate:>7.3f} {r.mean_misclassification:>7.3f} "
                f"{_fmt(r.within_median):>9} {_fmt(r.across_median):>9} {calls:>6} {r.mean_clusters:>6.2f}"
            )
        return "\n".join(lines)


def _fmt(x) -> str:
    return "-" if x is None else f"{x:.4f}"


def matching_rate(predicted: Clustering, target: Clustering) -> float:
    """Misclassification under the best label matching, any number of clusters."""
    overlap = np.zeros((predicted.k, target.k))
    for i, ci in enumerate(predicted.clusters):
        for j, cj in enumerate(target.clusters):
            overlap[i, j] = len(set(ci) & set(cj))
    rows, cols = linear_sum_assignment(-overlap)
    return 1.0 - overlap[rows, cols].sum() / predicted.n


def is_coarsening(fine: Clustering, coarse: Clustering) -> bool:
    """Every cluster of ``fine`` lies inside one cluster of ``coarse``."""
    lab = coarse.labels()
    return all(len({int(lab[i]) for i in c}) == 1 for c in fine.clusters)


def _threshold_monotone(D) -> bool:
    # partitions change only at matrix entries; check consecutive breakpoints
    cuts = np.unique(D[np.triu_indices(D.shape[0], 1)])
    prev = cluster_threshold(D, 0.0)
    for delta in cuts:
        cur = cluster_threshold(D, float(delta))
        if not is_coarsening(prev, cur):
            return False
        prev = cur
    return True


def draw_corpus(cfg: ExperimentConfig, n: int, trial: int):
    """Samples and target labels for one (length, trial) cell."""
    samples, labels = [], []
    for idx, src in enumerate(cfg.sources):
        names = src.labels(f"p{idx}")
        for r in range(src.count):
            if isinstance(src.spec, CoupledPair):
                ids = (f"{names[0]}-{r}", f"{names[1]}-{r}")
                a, b = gen_coupled(src.spec, n, cfg.seed, ids, stream=(n, trial))
                samples += [a, b]
                labels += list(names)
            else:
                samples.append(generate(src.spec, n, cfg.seed, f"{names[0]}-{r}", stream=(n, trial)))
                labels.append(names[0])
    return samples, labels


def corpus_mixing_bound(cfg: ExperimentConfig):
    """Mixing bound for the joint law of a corpus of independent Markov paths.

    ``None`` if some source is not a Markov chain.
    """
    if not all(isinstance(s.spec, MarkovSpec) for s in cfg.sources):
        return None
    per_path = [markov_alpha_bound(s.spec) for s in cfg.sources for _ in range(s.count)]
    return MixingBound.total(per_path)


def _estimator_for(cfg: ExperimentConfig, n: int):
    if cfg.algorithm == THRESHOLD and cfg.delta is None:
        p = default_params(n, corpus_mixing_bound(cfg), cell_cap=cfg.truncation.cell_cap)
        return TruncationParams(p.m_max, p.l_max, p.cell_cap), p.delta
    if cfg.estimator == "truncated":
        return cfg.truncation(n), cfg.delta
    return "exact", cfg.delta


def _run_trial(cfg: ExperimentConfig, n: int, trial: int) -> dict:
    start = time.perf_counter()
    samples, labels = draw_corpus(cfg, n, trial)
    target = Clustering.from_labels(labels)
    estimator, delta = _estimator_for(cfg, n)
    D = distance_matrix(samples, estimator, cfg.scheme, n_jobs=1)
    calls = None
    monotone = None
    if cfg.algorithm == KNOWN_K:
        lookup = CountingLookup(D)
        k = cfg.target_k if cfg.k is None else cfg.k
        found = cluster_known_k(lookup, k)
        calls = lookup.calls
    else:
        found = cluster_threshold(D, delta)
        monotone = _threshold_monotone(D)
    iu = np.triu_indices(len(samples), 1)
    same = np.array([labels[i] == labels[j] for i, j in zip(*iu)], dtype=bool)
    values = D[iu]
    return {
        "exact": exact_match(found, target),
        "miscl": matching_rate(found, target),
        "within": values[same].tolist(),
        "across": values[~same].tolist(),
        "calls": calls,
        "k_hat": found.k,
        "delta": delta,
        "monotone": monotone,
        "time": time.perf_counter() - start,
    }


def _stat(fn, values):
    return float(fn(values)) if values else None


def run_experiment(cfg: ExperimentConfig, n_jobs: int = 1) -> ExperimentReport:
    """Run every (length, trial) cell of ``cfg`` and aggregate per length.

    ``n_jobs > 1`` spreads trials over worker processes; results are
    collected in trial order, so aggregates do not depend on it.
    """
    cfg.validate()
    records = []
    N = cfg.n_samples
    pool = ProcessPoolExecutor(max_workers=n_jobs) if n_jobs > 1 else None
    try:
        for n in cfg.lengths:
            if pool is None:
                results = [_run_trial(cfg, n, t) for t in range(cfg.trials)]
            else:
                results = list(pool.map(_run_trial, [cfg] * cfg.trials, [n] * cfg.trials, range(cfg.trials)))
            within = [v for r in results for v in r["within"]]
            across = [v for r in results for v in r["across"]]
            calls = [r["calls"] for r in results if r["calls"] is not None]
            k = cfg.target_k if cfg.k is None else cfg.k
            records.append(
                LengthRecord(
                    n=n,
                    trials=cfg.trials,
                    exact_match_rate=sum(r["exact"] for r in results) / cfg.trials,
                    mean_misclassification=float(np.mean([r["miscl"] for r in results])),
                    within_mean=_stat(np.mean, within),
                    within_median=_stat(statistics.median, within),
                    across_mean=_stat(np.mean, across),
                    across_median=_stat(statistics.median, across),
                    mean_distance_calls=_stat(np.mean, calls),
                    max_distance_calls=max(calls) if calls else None,
                    call_budget=k * N if cfg.algorithm == KNOWN_K else None,
                    mean_clusters=float(np.mean([r["k_hat"] for r in results])),
                    threshold=results[0]["delta"],
                    threshold_monotone=(
                        all(r["monotone"] for r in results) if cfg.algorithm == THRESHOLD else None
                    ),
                    wall_time=sum(r["time"] for r in results),
                    trial_exact=[bool(r["exact"]) for r in results],
                    trial_calls=calls,
                )
            )
    finally:
        if pool is not None:
            pool.shutdown()
    return ExperimentReport(cfg, records, cfg.warnings())


@dataclass
class CurveResult:
    lengths: list
    medians: list
    values: list
    reference: float | None = None
    reference_length: int | None = None


def convergence_curve(
    spec1,
    spec2,
    lengths,
    trials: int,
    estimator="exact",
    seed: int = 0,
    scheme="dyadic",
    reference: bool | None = None,
) -> CurveResult:
    """Median distance between independent paths of ``spec1`` and ``spec2`` per length.

    ``estimator`` is ``"exact"`` or a :class:`TruncationSchedule`.  When
    ``reference`` is true (default: only for distinct specs) the exact
    distance at ten times the largest length is also computed, as a stand-in
    for the distance between the two processes themselves.
    """
    lengths = [int(n) for n in lengths]
    values = []
    for n in lengths:
        row = []
        for t in range(trials):
            a = generate(spec1, n, seed, "first", stream=(n, t))
            b = generate(spec2, n, seed, "second", stream=(n, t))
            if estimator == "exact":
                row.append(dhat_exact(a, b, scheme))
            else:
                row.append(dcheck(a, b, estimator(n), scheme))
        values.append(row)
    medians = [float(statistics.median(row)) for row in values]
    if reference is None:
        reference = spec1 != spec2
    ref = ref_n = None
    if reference:
        ref_n = 10 * lengths[-1]
        a = generate(spec1, ref_n, seed, "first", stream=(ref_n, "reference"))
        b = generate(spec2, ref_n, seed, "second", stream=(ref_n, "reference"))
        ref = dhat_exact(a, b, scheme)
    return CurveResult(lengths, medians, values, ref, ref_n)
