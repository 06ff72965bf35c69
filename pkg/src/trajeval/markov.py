"""Transition-matrix estimation and the BEL / ETV / ECP trajectory metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .emotion import EmotionTrajectory, StateSpace, discretize

WeightForm = Literal["matrix", "empirical"]


class MetricError(ValueError):
    """A metric is undefined for the given input."""


@dataclass(frozen=True)
class TransitionCounts:
    counts: np.ndarray  # (N, N) int64, counts[i, j] = transitions from state i+1 to j+1

    def __post_init__(self) -> None:
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise MetricError(f"transition counts must be square, got shape {c.shape}")
        if (c < 0).any():
            raise MetricError("transition counts must be non-negative")
        c = c.astype(np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_states(self) -> int:
        return self.counts.shape[0]


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic estimate; rows with no observed departures stay undefined (NaN)."""

    probs: np.ndarray
    defined: np.ndarray  # bool per row

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class SourceDistribution:
    probs: np.ndarray


@dataclass(frozen=True, slots=True)
class Centroid:
    cx: float
    cy: float

    def as_dict(self) -> dict[str, float]:
        return {"cx": self.cx, "cy": self.cy}


@dataclass(frozen=True)
class EtvWeight:
    fn: Callable[[float], float]
    form: WeightForm = "matrix"
    scale: float = field(default=1.0)

    def __call__(self, s: float) -> float:
        return self.scale * self.fn(s)

    def scaled(self, factor: float) -> EtvWeight:
        if factor <= 0:
            raise MetricError("weight scale must be positive")
        return EtvWeight(self.fn, self.form, self.scale * factor)


def _one_minus(s: float) -> float:
    return 1.0 - s


def matrix_weight() -> EtvWeight:
    """``omega(e) = 1 - e`` for the pairwise matrix form."""
    return EtvWeight(_one_minus, "matrix")


def empirical_weight(n_turns: int) -> EtvWeight:
    """``omega(s) = (1 - s) / T`` as used by the per-step empirical form."""
    if n_turns < 1:
        raise MetricError("n_turns must be >= 1")
    return EtvWeight(_one_minus, "empirical", 1.0 / n_turns)


def _require_turns(traj: EmotionTrajectory) -> None:
    if traj.n_turns < 1:
        raise MetricError("trajectory has no transitions")


def state_sequence(traj: EmotionTrajectory, space: StateSpace) -> np.ndarray:
    """0-based state indices for every score in the trajectory."""
    return np.fromiter((discretize(s, space) - 1 for s in traj.scores), dtype=np.int64, count=len(traj))


def count_transitions(traj: EmotionTrajectory, space: StateSpace) -> TransitionCounts:
    _require_turns(traj)
    states = state_sequence(traj, space)
    n = space.n_states
    counts = np.zeros((n, n), dtype=np.int64)
    np.add.at(counts, (states[:-1], states[1:]), 1)
    return TransitionCounts(counts)


def mle_normalize(counts: TransitionCounts) -> TransitionMatrix:
    f = counts.counts.astype(np.float64)
    row_sums = f.sum(axis=1)
    defined = row_sums > 0
    probs = np.full_like(f, np.nan)
    probs[defined] = f[defined] / row_sums[defined, None]
    probs.setflags(write=False)
    defined.setflags(write=False)
    return TransitionMatrix(probs, defined)


def source_distribution(counts: TransitionCounts) -> SourceDistribution:
    total = counts.total
    if total < 1:
        raise MetricError("no transitions to build a source distribution from")
    return SourceDistribution(counts.counts.sum(axis=1) / total)


def bel(traj: EmotionTrajectory) -> float:
    """Mean of ``s_1..s_T``; the initial score ``s_0`` is excluded."""
    _require_turns(traj)
    tail = traj.scores[1:]
    # shifted mean: exact for constant trajectories
    return tail[0] + math.fsum(s - tail[0] for s in tail) / len(tail)


def etv_steps(traj: EmotionTrajectory) -> list[float]:
    """Per-step contributions ``omega(s_{t-1}) * (s_t - s_{t-1})`` of the empirical ETV."""
    _require_turns(traj)
    w = empirical_weight(traj.n_turns)
    s = traj.scores
    return [w(s[t - 1]) * (s[t] - s[t - 1]) for t in range(1, len(s))]


def etv_empirical(traj: EmotionTrajectory) -> float:
    return math.fsum(etv_steps(traj))


def etv_matrix(
    m: TransitionMatrix, space: StateSpace, weight: EtvWeight | None = None
) -> float:
    """Pairwise ETV ``sum_{i<j} omega(e_i) (e_j - e_i) (m_ij - m_ji)``.

    An undefined row has no observed departures, so its entries count as zero
    probability; a pair is dropped only when both of its rows are undefined.
    """
    if m.n_states != space.n_states:
        raise MetricError(f"matrix has {m.n_states} states, space has {space.n_states}")
    if not m.defined.any():
        raise MetricError("ETV is undefined: no row of the transition matrix is defined")
    weight = weight or matrix_weight()
    p = np.where(m.defined[:, None], m.probs, 0.0)
    e = space.values
    terms = []
    n = m.n_states
    for i in range(n):
        for j in range(i + 1, n):
            if not (m.defined[i] or m.defined[j]):
                continue
            d = p[i, j] - p[j, i]
            if d != 0.0:
                terms.append(weight(e[i]) * (e[j] - e[i]) * d)
    return math.fsum(terms)


def ecp_matrix(m: TransitionMatrix, src: SourceDistribution, space: StateSpace) -> Centroid:
    p = np.asarray(src.probs, dtype=np.float64)
    if not (p.shape[0] == m.n_states == space.n_states):
        raise MetricError("matrix, source distribution and state space disagree on N")
    missing = np.flatnonzero((p > 0) & ~m.defined)
    if missing.size:
        raise MetricError(f"source states {[int(i) + 1 for i in missing]} have undefined rows")
    e = np.asarray(space.values, dtype=np.float64)
    rows = np.where(m.defined[:, None], m.probs, 0.0)
    cx = math.fsum(e * p)
    cy = math.fsum((p[:, None] * rows * e[None, :]).ravel())
    return Centroid(cx, cy)


def ecp_empirical(traj: EmotionTrajectory, space: StateSpace) -> Centroid:
    """Mean (before, after) representative over observed transitions."""
    _require_turns(traj)
    e = space.values
    states = state_sequence(traj, space)
    before = [e[i] for i in states[:-1]]
    after = [e[i] for i in states[1:]]
    return Centroid(math.fsum(before) / len(before), math.fsum(after) / len(after))


def ecp(traj: EmotionTrajectory, space: StateSpace) -> Centroid:
    counts = count_transitions(traj, space)
    return ecp_matrix(mle_normalize(counts), source_distribution(counts), space)


def singleton_etv(traj: EmotionTrajectory) -> float:
    """Matrix-form ETV with one state per distinct observed value and ``omega = (1-e)/T``."""
    space = StateSpace.singleton(traj.scores)
    m = mle_normalize(count_transitions(traj, space))
    return etv_matrix(m, space, empirical_weight(traj.n_turns))
