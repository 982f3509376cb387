"""Seeded stationary ergodic test processes.

Randomness
----------
Every path is drawn from numpy's PCG64 generator seeded by
``SeedSequence(seed, spawn_key=keys)``.  String keys (sample ids) are mapped
to integers by the first 8 bytes of their SHA-256 digest, so one sample's
path depends only on ``(seed, keys)`` and not on how many other samples are
drawn alongside it.

Within a path the draws are made in a fixed order: one uniform for the
initial state, ``n - 1`` transition uniforms, then ``n`` emission uniforms.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .distance import Sample
from .errors import InvalidParameterError, InvalidSpecError
from .mixing import MixingBound

__all__ = [
    "MarkovSpec",
    "RotationSpec",
    "CoupledPair",
    "rng_for",
    "gen_markov",
    "gen_rotation",
    "gen_coupled",
    "generate",
    "markov_alpha_bound",
    "spec_from_dict",
]

ROW_TOL = 1e-12


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(seed: int, *keys) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, *keys)``."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.PCG64(seq))


def _check_transition(P, name="transition"):
    P = np.array(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 2:
        raise InvalidSpecError(f"{name} must be a square matrix with at least 2 states")
    if np.any(P < 0) or not np.all(np.isfinite(P)):
        raise InvalidSpecError(f"{name} has negative or non-finite entries")
    if np.any(np.abs(P.sum(axis=1) - 1.0) > ROW_TOL):
        raise InvalidSpecError(f"{name} rows must sum to 1")
    return P


def _is_primitive(P) -> bool:
    # irreducible and aperiodic iff some power is strictly positive;
    # Wielandt: it suffices to look up to (S-1)^2 + 1
    S = P.shape[0]
    A = (P > 0).astype(np.int64)
    M = A.copy()
    for _ in range((S - 1) ** 2 + 1):
        if M.all():
            return True
        M = np.minimum(M @ A, 1)
    return bool(M.all())


def _stationary(P) -> np.ndarray:
    S = P.shape[0]
    A = np.vstack([P.T - np.eye(S), np.ones(S)])
    rhs = np.zeros(S + 1)
    rhs[-1] = 1.0
    pi = np.linalg.lstsq(A, rhs, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _parse_emissions(emissions, S):
    if len(emissions) != S:
        raise InvalidSpecError(f"need {S} emissions, got {len(emissions)}")
    lo = np.empty(S)
    hi = np.empty(S)
    for s, e in enumerate(emissions):
        if isinstance(e, (list, tuple)):
            if len(e) != 2 or not e[0] <= e[1]:
                raise InvalidSpecError(f"emission interval {e!r} for state {s} is invalid")
            lo[s], hi[s] = float(e[0]), float(e[1])
        else:
            lo[s] = hi[s] = float(e)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise InvalidSpecError("emissions must be finite")
    return lo, hi


def _emission_dict(e):
    return list(e) if isinstance(e, (list, tuple)) else float(e)


@dataclass(frozen=True, eq=False)
class MarkovSpec:
    """Finite-state Markov chain observed through per-state emissions.

    ``emissions[s]`` is either a number (emitted every time) or a pair
    ``(lo, hi)`` for a uniform draw on ``[lo, hi)``.  The chain must be
    irreducible and aperiodic; it is started from its stationary law.
    """

    transition: np.ndarray
    emissions: tuple
    stationary: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = _check_transition(self.transition)
        if not _is_primitive(P):
            raise InvalidSpecError("transition matrix is not irreducible and aperiodic")
        emissions = tuple(tuple(e) if isinstance(e, (list, tuple)) else float(e) for e in self.emissions)
        lo, hi = _parse_emissions(emissions, P.shape[0])
        P.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "emissions", emissions)
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_hi", hi)
        object.__setattr__(self, "stationary", _stationary(P))

    @property
    def states(self) -> int:
        return self.transition.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, MarkovSpec)
            and np.array_equal(self.transition, other.transition)
            and self.emissions == other.emissions
        )

    def __hash__(self):
        return hash((self.transition.tobytes(), self.emissions))

    def to_dict(self) -> dict:
        return {
            "kind": "markov",
            "transition": self.transition.tolist(),
            "emissions": [_emission_dict(e) for e in self.emissions],
        }


@dataclass(frozen=True)
class RotationSpec:
    """Irrational-rotation process ``x_{t+1} = frac(x_t + alpha)``, ``x_1`` uniform."""

    alpha: float

    def __post_init__(self):
        a = float(self.alpha)
        if not 0 <= a < 1:
            raise InvalidSpecError("rotation step must lie in [0, 1)")
        object.__setattr__(self, "alpha", a)

    def to_dict(self) -> dict:
        return {"kind": "rotation", "alpha": self.alpha}


@dataclass(frozen=True, eq=False)
class CoupledPair:
    """Two chains on one state space driven by a single stream of uniforms.

    Each chain moves by inverse-CDF thresholds of its own transition rows,
    so both components read the same innovation ``U_t`` (and the same
    emission uniform).  The initial pair is drawn from the stationary law of
    the joint chain reached from the quantile coupling of the two marginal
    stationary laws; equal transition matrices therefore give equal paths.
    """

    transition_a: np.ndarray
    transition_b: np.ndarray
    emissions: tuple
    joint_stationary: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        Pa = _check_transition(self.transition_a, "transition_a")
        Pb = _check_transition(self.transition_b, "transition_b")
        if Pa.shape != Pb.shape:
            raise InvalidSpecError("both transitions must have the same number of states")
        for P in (Pa, Pb):
            if not _is_primitive(P):
                raise InvalidSpecError("transition matrix is not irreducible and aperiodic")
        emissions = tuple(tuple(e) if isinstance(e, (list, tuple)) else float(e) for e in self.emissions)
        lo, hi = _parse_emissions(emissions, Pa.shape[0])
        object.__setattr__(self, "transition_a", Pa)
        object.__setattr__(self, "transition_b", Pb)
        object.__setattr__(self, "emissions", emissions)
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_hi", hi)
        object.__setattr__(self, "joint_stationary", self._joint_law(Pa, Pb))

    @staticmethod
    def _joint_law(Pa, Pb):
        S = Pa.shape[0]
        ca, cb = np.cumsum(Pa, axis=1), np.cumsum(Pb, axis=1)
        J = np.zeros((S * S, S * S))
        for s in range(S):
            for t in range(S):
                cuts = np.unique(np.concatenate([[0.0], ca[s, :-1], cb[t, :-1], [1.0]]))
                for a, b in zip(cuts[:-1], cuts[1:]):
                    if b <= a:
                        continue
                    u = 0.5 * (a + b)
                    ns = min(int(np.searchsorted(ca[s], u, side="right")), S - 1)
                    nt = min(int(np.searchsorted(cb[t], u, side="right")), S - 1)
                    J[s * S + t, ns * S + nt] += b - a
        mu = np.zeros(S * S)
        pa, pb = np.cumsum(_stationary(Pa)), np.cumsum(_stationary(Pb))
        cuts = np.unique(np.concatenate([[0.0], pa[:-1], pb[:-1], [1.0]]))
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b <= a:
                continue
            u = 0.5 * (a + b)
            s = min(int(np.searchsorted(pa, u, side="right")), S - 1)
            t = min(int(np.searchsorted(pb, u, side="right")), S - 1)
            mu[s * S + t] += b - a
        # the lazy chain is aperiodic and has the same invariant laws
        L = 0.5 * (J + np.eye(S * S))
        for _ in range(64):
            L = L @ L
        law = np.clip(mu @ L, 0.0, None)
        return law / law.sum()

    def to_dict(self) -> dict:
        return {
            "kind": "coupled",
            "transition_a": self.transition_a.tolist(),
            "transition_b": self.transition_b.tolist(),
            "emissions": [_emission_dict(e) for e in self.emissions],
        }


def _pick(cum, u) -> int:
    return min(int(np.searchsorted(cum, u, side="right")), cum.size - 1)


def _run_chain(P, start, innovations):
    cum = np.cumsum(P, axis=1)
    S = P.shape[0]
    # next-state table: row s holds the successor of s for every innovation
    table = [np.minimum(np.searchsorted(cum[s], innovations, side="right"), S - 1).tolist() for s in range(S)]
    states = [start]
    state = start
    for t in range(innovations.size):
        state = table[state][t]
        states.append(state)
    return np.array(states, dtype=np.int64)


def _emit(lo, hi, states, v):
    return lo[states] + v * (hi[states] - lo[states])


def gen_markov(spec: MarkovSpec, n: int, seed: int, sample_id: str = "x", stream=()) -> Sample:
    """Stationary path of length ``n``.

    The random stream is keyed by ``(seed, *stream, sample_id)``.
    """
    if n < 1:
        raise InvalidParameterError("n must be positive")
    rng = rng_for(seed, *stream, sample_id)
    u0 = rng.random()
    innovations = rng.random(n - 1)
    v = rng.random(n)
    states = _run_chain(spec.transition, _pick(np.cumsum(spec.stationary), u0), innovations)
    return Sample(sample_id, _emit(spec._lo, spec._hi, states, v))


def gen_rotation(spec: RotationSpec, n: int, seed: int, sample_id: str = "x", stream=()) -> Sample:
    if n < 1:
        raise InvalidParameterError("n must be positive")
    rng = rng_for(seed, *stream, sample_id)
    x1 = rng.random()
    values = np.mod(x1 + spec.alpha * np.arange(n), 1.0)
    return Sample(sample_id, values)


def gen_coupled(spec: CoupledPair, n: int, seed: int, ids=("a", "b"), stream=()):
    """Two dependent paths sharing every uniform draw."""
    if n < 1:
        raise InvalidParameterError("n must be positive")
    rng = rng_for(seed, *stream, "/".join(ids))
    u0 = rng.random()
    innovations = rng.random(n - 1)
    v = rng.random(n)
    S = spec.transition_a.shape[0]
    pair = _pick(np.cumsum(spec.joint_stationary), u0)
    sa = _run_chain(spec.transition_a, pair // S, innovations)
    sb = _run_chain(spec.transition_b, pair % S, innovations)
    return (
        Sample(ids[0], _emit(spec._lo, spec._hi, sa, v)),
        Sample(ids[1], _emit(spec._lo, spec._hi, sb, v)),
    )


def generate(spec, n: int, seed: int, sample_id: str = "x", stream=()) -> Sample:
    """Single path from a Markov or rotation spec."""
    if isinstance(spec, MarkovSpec):
        return gen_markov(spec, n, seed, sample_id, stream)
    if isinstance(spec, RotationSpec):
        return gen_rotation(spec, n, seed, sample_id, stream)
    raise InvalidSpecError(f"cannot draw a single path from {type(spec).__name__}")


def markov_alpha_bound(spec: MarkovSpec) -> MixingBound:
    """``n -> min(1, max_i TV(P^n(i, .), pi) / 2)``, made nonincreasing.

    Uses ``2 alpha(n) <= beta(n)`` and the max-row total-variation bound on
    ``beta`` for a stationary chain.
    """
    P = spec.transition
    pi = spec.stationary
    powers = [np.eye(P.shape[0])]

    def bound(k: int) -> float:
        while len(powers) <= k:
            powers.append(powers[-1] @ P)
        tv = 0.5 * np.abs(powers[k] - pi[None, :]).sum(axis=1).max()
        return 0.5 * tv

    return MixingBound(bound, name="markov")


def spec_from_dict(d: dict):
    kind = d.get("kind")
    try:
        if kind == "markov":
            return MarkovSpec(d["transition"], d["emissions"])
        if kind == "rotation":
            return RotationSpec(d["alpha"])
        if kind == "coupled":
            return CoupledPair(d["transition_a"], d["transition_b"], d["emissions"])
    except KeyError as exc:
        raise InvalidSpecError(f"{kind} spec is missing field {exc}") from exc
    raise InvalidSpecError(f"unknown process kind {kind!r}")
