"""Causally-adjusted per-turn emotion estimation.

The previous-turn emotion is not read off the observed dialogue. It is drawn
``K`` times from a turn-indexed normal prior, each draw becomes a descriptor
phrase that conditions the scoring prompt, and the scorer's positive/negative
logit pair is squashed with a temperature softmax. The turn estimate is the
mean of the ``K`` probabilities.
"""

from __future__ import annotations

import hashlib
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .emotion import EmotionTrajectory, descriptor, signed_to_score

log = logging.getLogger(__name__)

DEFAULT_HORIZON = 40
POSITIVE_ASSERTION = "The user currently feels positive."
NEGATIVE_ASSERTION = "The user currently feels negative."


class EstimationFailed(RuntimeError):
    def __init__(self, turn: int, cause: BaseException | None = None) -> None:
        detail = f": {cause}" if cause is not None else ""
        super().__init__(f"emotion estimation failed at turn {turn}{detail}")
        self.turn = turn
        self.cause = cause


class Scorer(Protocol):
    def score_assertion(self, prompt: str, assertion: str) -> float: ...


def derive_seed(master: int, *parts: object) -> int:
    """Stable 64-bit seed from a master seed and a path of identifiers."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master)).encode())
    for part in parts:
        h.update(b"\x1f")
        h.update(str(part).encode())
    return int.from_bytes(h.digest(), "big")


@dataclass(frozen=True, slots=True)
class PriorSchedule:
    mu0: float
    decay_rate: float
    var_initial: float
    var_final: float
    growth_rate: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.mu0):
            raise ValueError("mu0 must be finite")
        if self.decay_rate <= 0 or self.growth_rate <= 0:
            raise ValueError("decay and growth rates must be positive")
        if not 0 < self.var_initial <= self.var_final:
            raise ValueError("need 0 < var_initial <= var_final")

    @classmethod
    def default(cls, horizon: int = DEFAULT_HORIZON) -> PriorSchedule:
        # rates scale with the horizon: the mean reaches ~5% of mu0 and the
        # variance ~95% of its ceiling by the last turn
        rate = 3.0 / horizon
        return cls(mu0=-0.8, decay_rate=rate, var_initial=0.01, var_final=0.09, growth_rate=rate)


def _check_turn(t: int) -> None:
    if t < 1:
        raise ValueError(f"turn index must be >= 1, got {t}")


def prior_mean(schedule: PriorSchedule, t: int) -> float:
    _check_turn(t)
    return schedule.mu0 * math.exp(-schedule.decay_rate * (t - 1))


def prior_variance(schedule: PriorSchedule, t: int) -> float:
    _check_turn(t)
    # var_final - gap * exp(-r(t-1)), written so that t = 1 returns var_initial exactly
    gap = schedule.var_final - schedule.var_initial
    return schedule.var_initial + gap * -math.expm1(-schedule.growth_rate * (t - 1))


@dataclass(frozen=True, slots=True)
class EstimatorConfig:
    samples: int = 8
    temperature: float = 10.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.samples < 1:
            raise ValueError("sample count must be >= 1")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")


def sample_priors(
    schedule: PriorSchedule, t: int, config: EstimatorConfig, rng: np.random.Generator
) -> np.ndarray:
    """``K`` draws from ``Normal(mu_t, sigma_t^2)`` clamped to the signed range."""
    mu = prior_mean(schedule, t)
    sd = math.sqrt(prior_variance(schedule, t))
    return np.clip(rng.normal(mu, sd, size=config.samples), -1.0, 1.0)


@dataclass(frozen=True, slots=True)
class LogitPair:
    pos: float
    neg: float


_P_LO = sys.float_info.min
_P_HI = 1.0 - sys.float_info.epsilon / 2


def softmax_pair(logits: LogitPair, tau: float) -> float:
    """Probability of the positive assertion, ``exp(l+/tau) / (exp(l+/tau) + exp(l-/tau))``.

    Evaluated as a logistic of the scaled gap; saturated values are pulled back
    just inside (0, 1).
    """
    if not tau > 0:
        raise ValueError("temperature must be positive")
    if not (math.isfinite(logits.pos) and math.isfinite(logits.neg)):
        raise ValueError(f"non-finite logits: {logits}")
    x = (logits.pos - logits.neg) / tau
    if x >= 0:
        p = 1.0 / (1.0 + math.exp(-x))
    else:
        z = math.exp(x)
        p = z / (1.0 + z)
    return min(max(p, _P_LO), _P_HI)


def render_history(history: Sequence[tuple[str, str]]) -> str:
    blocks = []
    for i, (q, a) in enumerate(history, start=1):
        blocks.append(f"[Turn {i}]\nUser: {q}\nAssistant: {a}")
    return "\n\n".join(blocks)


def build_score_prompt(history: Sequence[tuple[str, str]], utterance: str, hypothesis: str) -> str:
    if not utterance or not utterance.strip():
        raise ValueError("current user utterance is empty")
    parts = []
    if history:
        parts.append("Conversation so far:\n" + render_history(history))
    parts.append(f"In the previous turn the user felt {hypothesis}.")
    parts.append(f"Current user message:\n{utterance}")
    parts.append("Judge the emotion the user is feeling right now, as expressed in the current message.")
    return "\n\n".join(parts)


@dataclass(frozen=True)
class TurnEstimate:
    turn: int
    score: float
    probabilities: tuple[float, ...]
    samples: tuple[float, ...]

    def as_dict(self) -> dict:
        return {
            "turn": self.turn,
            "score": self.score,
            "samples": list(self.samples),
            "probabilities": list(self.probabilities),
        }


def estimate_turn(
    history: Sequence[tuple[str, str]],
    utterance: str,
    t: int,
    schedule: PriorSchedule,
    config: EstimatorConfig,
    scorer: Scorer,
    rng: np.random.Generator | None = None,
) -> TurnEstimate:
    if rng is None:
        rng = np.random.default_rng(config.seed)
    samples = sample_priors(schedule, t, config, rng)
    probs = []
    for s in samples:
        phrase = descriptor(signed_to_score(float(s))).text
        prompt = build_score_prompt(history, utterance, phrase)
        try:
            pair = LogitPair(
                scorer.score_assertion(prompt, POSITIVE_ASSERTION),
                scorer.score_assertion(prompt, NEGATIVE_ASSERTION),
            )
            probs.append(softmax_pair(pair, config.temperature))
        except Exception as exc:
            raise EstimationFailed(t, exc) from exc
    score = math.fsum(probs) / len(probs)
    return TurnEstimate(t, score, tuple(probs), tuple(float(s) for s in samples))


@dataclass(frozen=True)
class TrajectoryEstimate:
    trajectory: EmotionTrajectory
    turns: tuple[TurnEstimate, ...]


def estimate_trajectory(
    turns: Sequence[tuple[str, str]],
    env_id: str,
    schedule: PriorSchedule,
    config: EstimatorConfig,
    scorer: Scorer,
    initial_score: float | None = None,
    parallelism: int = 1,
) -> TrajectoryEstimate:
    """Estimate ``s_1..s_T`` for a dialogue given as ``(q_i, a_i)`` pairs.

    Each turn draws from its own generator seeded by ``(seed, env_id, t)`` so
    the result does not depend on evaluation order.
    """
    if not turns:
        raise ValueError("dialogue has no turns to score")
    s0 = signed_to_score(max(-1.0, min(1.0, schedule.mu0))) if initial_score is None else initial_score

    def one(t: int) -> TurnEstimate:
        rng = np.random.default_rng(derive_seed(config.seed, env_id, t))
        return estimate_turn(turns[: t - 1], turns[t - 1][0], t, schedule, config, scorer, rng)

    idx = range(1, len(turns) + 1)
    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            estimates = list(pool.map(one, idx))
    else:
        estimates = [one(t) for t in idx]
    traj = EmotionTrajectory([s0, *(e.score for e in estimates)])
    return TrajectoryEstimate(traj, tuple(estimates))
