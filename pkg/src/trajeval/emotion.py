"""Emotion value scales, the discrete state space, and the score-to-phrase mapping.

Two scales are used. Reporting scores live on [0, 1] (0 most negative, 0.5
neutral, 1 most positive). Prior sampling works on the signed scale [-1, 1],
where a negative mean is meaningful. ``score_to_signed`` / ``signed_to_score``
bridge the two.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

DESCRIPTOR_PHRASES: tuple[str, ...] = (
    "a very negative emotion",
    "a somewhat negative emotion",
    "a neutral emotion",
    "a somewhat positive emotion",
    "a very positive emotion",
)

DEFAULT_BINS = 5


class EmotionValueError(ValueError):
    """A score or trajectory falls outside its valid range."""


def check_score(value: float) -> float:
    """Validate a reporting-scale score and return it as a float."""
    v = float(value)
    if not math.isfinite(v) or v < 0.0 or v > 1.0:
        raise EmotionValueError(f"emotion score must be a finite value in [0, 1], got {value!r}")
    return v


def check_signed(value: float) -> float:
    v = float(value)
    if not math.isfinite(v) or v < -1.0 or v > 1.0:
        raise EmotionValueError(f"signed emotion must be a finite value in [-1, 1], got {value!r}")
    return v


def score_to_signed(v: float) -> float:
    return 2.0 * check_score(v) - 1.0


def signed_to_score(s: float) -> float:
    return (check_signed(s) + 1.0) / 2.0


@dataclass(frozen=True, slots=True)
class EmotionDescriptor:
    text: str
    bucket: int  # 1..5


def descriptor(v: float) -> EmotionDescriptor:
    """Map a score to one of five equal-width phrase buckets; 1.0 falls in the top bucket."""
    v = check_score(v)
    bucket = min(int(v * 5), 4)
    return EmotionDescriptor(DESCRIPTOR_PHRASES[bucket], bucket + 1)


@dataclass(frozen=True, slots=True)
class StateSpace:
    """Ordered, disjoint bins covering [0, 1] with one representative value per bin.

    ``edges`` has ``len(values) + 1`` entries starting at 0 and ending at 1.
    Bins are half-open ``[edges[i], edges[i+1])`` except the last, which is
    closed so that 1.0 belongs to the top state.
    """

    values: tuple[float, ...]
    edges: tuple[float, ...]

    def __post_init__(self) -> None:
        n = len(self.values)
        if n < 1:
            raise EmotionValueError("state space needs at least one state")
        if len(self.edges) != n + 1:
            raise EmotionValueError("state space needs len(values) + 1 edges")
        if self.edges[0] != 0.0 or self.edges[-1] != 1.0:
            raise EmotionValueError("state space edges must span [0, 1]")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise EmotionValueError("state space edges must be strictly increasing")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise EmotionValueError("state representatives must be strictly increasing")
        for lo, v, hi in zip(self.edges, self.values, self.edges[1:]):
            if not lo <= v <= hi:
                raise EmotionValueError(f"representative {v} lies outside its bin [{lo}, {hi}]")

    @classmethod
    def uniform(cls, n_bins: int = DEFAULT_BINS) -> StateSpace:
        """Equal-width bins with midpoint representatives ``(i - 0.5) / N``."""
        if n_bins < 1:
            raise EmotionValueError(f"n_bins must be positive, got {n_bins}")
        edges = tuple(i / n_bins for i in range(n_bins + 1))
        values = tuple((i - 0.5) / n_bins for i in range(1, n_bins + 1))
        return cls(values, edges)

    @classmethod
    def singleton(cls, observed: Iterable[float]) -> StateSpace:
        """One state per distinct observed value, bins split halfway between neighbours."""
        values = tuple(sorted({check_score(v) for v in observed}))
        if not values:
            raise EmotionValueError("singleton state space needs at least one value")
        inner = tuple((a + b) / 2.0 for a, b in zip(values, values[1:]))
        return cls(values, (0.0, *inner, 1.0))

    @property
    def n_states(self) -> int:
        return len(self.values)


def discretize(v: float, space: StateSpace) -> int:
    """Return the 1-based state index whose bin contains ``v``."""
    v = check_score(v)
    idx = bisect.bisect_right(space.edges, v, 1, len(space.edges) - 1)
    return idx


@dataclass(frozen=True, slots=True)
class EmotionTrajectory:
    """Per-turn scores ``(s_0, s_1, ..., s_T)`` on the reporting scale."""

    scores: tuple[float, ...]

    def __init__(self, scores: Sequence[float]) -> None:
        checked = tuple(check_score(s) for s in scores)
        if len(checked) < 2:
            raise EmotionValueError(
                f"a trajectory needs s_0 and at least one turn, got {len(checked)} score(s)"
            )
        object.__setattr__(self, "scores", checked)

    @property
    def n_turns(self) -> int:
        return len(self.scores) - 1

    def __len__(self) -> int:
        return len(self.scores)

    def __iter__(self):
        return iter(self.scores)

    def __getitem__(self, i):
        return self.scores[i]
