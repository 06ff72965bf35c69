"""Simulated-user / model-under-test interaction loop with disturbance events.

Events reach the user simulator only, as out-of-band notices placed after the
turn at which they trigger. The agent sees the shared background, its strategy
instructions and the utterances, never the event text.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .clients import ChatClient, ClientError
from .corpus import CorpusEntry, DisturbanceEvent, Strategy

log = logging.getLogger(__name__)

NOTICE_PREFIX = "[Event]"
FIXED_SCHEDULES: dict[int, tuple[int, ...]] = {0: (), 1: (21,), 3: (11, 21, 31)}

STRATEGY_INSTRUCTIONS: dict[Strategy, str] = {
    Strategy.SitSel: (
        "Strategy: Situation Selection. Help the user notice which places, people and "
        "activities set off their distress, and steer them toward settings that are "
        "more likely to support them."
    ),
    Strategy.SitMod: (
        "Strategy: Situation Modification. Help the user find small, concrete changes "
        "they can make to their surroundings or their interactions with others so the "
        "situation affects them less. Focus on what is within their control."
    ),
    Strategy.AttDep: (
        "Strategy: Attentional Deployment. When the user is stuck replaying a painful "
        "thought, gently move their focus to something neutral, absorbing or pleasant "
        "so the rumination loosens its grip."
    ),
    Strategy.CogChg: (
        "Strategy: Cognitive Change. Listen for distorted or overly harsh interpretations "
        "(all-or-nothing thinking, mind reading, catastrophizing). Name them kindly and "
        "help the user build a more balanced reading of what happened."
    ),
    Strategy.ResMod: (
        "Strategy: Response Modulation. Suggest practical ways to manage the emotional "
        "reaction itself, such as breathing exercises, movement, rest or expressing the "
        "feeling safely."
    ),
    Strategy.ERFlex: (
        "Strategy: Emotion Regulation Flexibility. Read the user's current state and the "
        "context each turn, and switch between regulation approaches as their needs change."
    ),
}


@dataclass(frozen=True)
class Environment:
    id: str
    background: str
    user_persona: str
    agent_persona: str
    strategy: Strategy
    language: str = "EN"

    def __post_init__(self) -> None:
        for name in ("id", "background", "user_persona", "agent_persona"):
            if not getattr(self, name).strip():
                raise ValueError(f"environment {name} must be non-empty")
        object.__setattr__(self, "strategy", Strategy(self.strategy))

    @classmethod
    def from_entry(cls, entry: CorpusEntry) -> Environment:
        return cls(
            id=entry.id,
            background=entry.background,
            user_persona=entry.user_persona,
            agent_persona=entry.agent_constraint,
            strategy=Strategy(entry.strategy),
            language=entry.language,
        )


@dataclass(frozen=True)
class DialogueTurn:
    i: int
    q: str
    a: str
    events_visible: tuple[str, ...]

    def as_dict(self) -> dict[str, Any]:
        return {"i": self.i, "q": self.q, "a": self.a, "events_visible": list(self.events_visible)}


@dataclass
class Transcript:
    env_id: str
    model_ids: dict[str, str]
    seed: int
    turns: list[DialogueTurn] = field(default_factory=list)
    event_log: dict[str, int] = field(default_factory=dict)
    complete: bool = False
    error: str | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def pairs(self) -> list[tuple[str, str]]:
        return [(t.q, t.a) for t in self.turns]

    def to_dict(self) -> dict[str, Any]:
        return {
            "env_id": self.env_id,
            "model_ids": dict(self.model_ids),
            "seed": self.seed,
            "turns": [t.as_dict() for t in self.turns],
            "event_log": dict(self.event_log),
            "complete": self.complete,
            "error": self.error,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Transcript:
        turns = [DialogueTurn(t["i"], t["q"], t["a"], tuple(t["events_visible"])) for t in d["turns"]]
        tr = cls(
            env_id=d["env_id"],
            model_ids=dict(d["model_ids"]),
            seed=int(d["seed"]),
            turns=turns,
            event_log={k: int(v) for k, v in d["event_log"].items()},
            complete=bool(d["complete"]),
            error=d.get("error"),
            meta=dict(d.get("meta", {})),
        )
        tr.check()
        return tr

    def check(self) -> None:
        """Raise ``ValueError`` if turn numbering or event bookkeeping is inconsistent."""
        prev: set[str] = set()
        for n, turn in enumerate(self.turns, start=1):
            if turn.i != n:
                raise ValueError(f"{self.env_id}: turn {n} is numbered {turn.i}")
            seen = set(turn.events_visible)
            if not prev <= seen:
                raise ValueError(f"{self.env_id}: events vanished at turn {n}")
            for ev in seen - prev:
                if self.event_log.get(ev) != n:
                    raise ValueError(f"{self.env_id}: event {ev} became visible at turn {n}, logged at {self.event_log.get(ev)}")
            prev = seen

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def trigger_events(events: Sequence[DisturbanceEvent], turn: int, observed: Sequence[str]) -> tuple[str, ...]:
    """``O_i = O_{i-1}`` plus every event whose trigger turn is ``turn``, in corpus order."""
    out = list(observed)
    for ev in events:
        if ev.trigger_turn == turn and ev.id not in out:
            out.append(ev.id)
    return tuple(out)


def _user_system(env: Environment) -> str:
    lang = "Reply in Chinese." if env.language == "ZH" else "Reply in English."
    return (
        "You are role-playing a person seeking emotional support. Stay in character, speak in the "
        "first person, and write only your next message to the supporter.\n\n"
        f"Your character:\n{env.user_persona}\n\n{env.background}\n\n{lang}"
    )


def render_user_context(
    env: Environment,
    history: Sequence[tuple[str, str]],
    observed: Sequence[str],
    events: Sequence[DisturbanceEvent] = (),
) -> list[dict[str, str]]:
    """Messages for the user simulator; its own utterances carry the assistant role."""
    by_turn: dict[int, list[DisturbanceEvent]] = {}
    visible = set(observed)
    for ev in events:
        if ev.id in visible:
            by_turn.setdefault(ev.trigger_turn, []).append(ev)
    messages = [{"role": "system", "content": _user_system(env)}]
    if not history:
        messages.append({"role": "user", "content": "(The session starts. Tell the supporter what is on your mind.)"})
    for j, (q, a) in enumerate(history, start=1):
        messages.append({"role": "assistant", "content": q})
        messages.append({"role": "user", "content": a})
        for ev in by_turn.get(j, ()):
            messages.append({"role": "system", "content": f"{NOTICE_PREFIX} {ev.content}"})
    return messages


def render_agent_context(
    env: Environment, history: Sequence[tuple[str, str]], utterance: str
) -> list[dict[str, str]]:
    system = f"{env.agent_persona}\n\n{STRATEGY_INSTRUCTIONS[env.strategy]}\n\n{env.background}"
    messages = [{"role": "system", "content": system}]
    for q, a in history:
        messages.append({"role": "user", "content": q})
        messages.append({"role": "assistant", "content": a})
    messages.append({"role": "user", "content": utterance})
    return messages


def fixed_schedule(events: Sequence[DisturbanceEvent]) -> list[DisturbanceEvent]:
    turns = FIXED_SCHEDULES.get(len(events))
    if turns is None:
        raise ValueError(f"no fixed schedule for {len(events)} events")
    return [DisturbanceEvent(ev.id, ev.content, t) for ev, t in zip(events, turns)]


def random_schedule(
    events: Sequence[DisturbanceEvent], horizon: int, rng: np.random.Generator
) -> list[DisturbanceEvent]:
    """Distinct trigger turns drawn uniformly from ``1..horizon-1``, assigned in ascending order."""
    if len(events) > horizon - 1:
        raise ValueError("more events than available trigger turns")
    if not events:
        return []
    turns = sorted(int(t) for t in rng.choice(np.arange(1, horizon), size=len(events), replace=False))
    return [DisturbanceEvent(ev.id, ev.content, t) for ev, t in zip(events, turns)]


def run_dialogue(
    env: Environment,
    events: Sequence[DisturbanceEvent],
    user: ChatClient,
    agent: ChatClient,
    horizon: int,
    seed: int = 0,
    model_ids: dict[str, str] | None = None,
    meta: dict[str, Any] | None = None,
    agent_log: list[list[dict[str, str]]] | None = None,
) -> Transcript:
    """Run ``horizon`` turns. A client failure stops the run and returns an incomplete transcript.

    ``agent_log``, if given, receives every agent-side context, for isolation audits.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    for ev in events:
        if not 1 <= ev.trigger_turn <= horizon:
            raise ValueError(f"event {ev.id} triggers at {ev.trigger_turn}, outside 1..{horizon}")
    tr = Transcript(
        env_id=env.id,
        model_ids=dict(model_ids or {"user": "user", "agent": "agent"}),
        seed=seed,
        meta=dict(meta or {}),
    )
    history: list[tuple[str, str]] = []
    observed: tuple[str, ...] = ()
    for i in range(1, horizon + 1):
        try:
            q = user.chat(render_user_context(env, history, observed, events))
            agent_ctx = render_agent_context(env, history, q)
            if agent_log is not None:
                agent_log.append(agent_ctx)
            a = agent.chat(agent_ctx)
        except ClientError as exc:
            tr.error = f"turn {i}: {exc}"
            log.warning("%s: dialogue aborted at turn %d: %s", env.id, i, exc)
            return tr
        if not q.strip() or not a.strip():
            tr.error = f"turn {i}: empty utterance"
            return tr
        new = trigger_events(events, i, observed)
        for ev_id in new[len(observed):]:
            tr.event_log[ev_id] = i
        observed = new
        history.append((q, a))
        tr.turns.append(DialogueTurn(i, q, a, observed))
    tr.complete = True
    return tr


def leaked_events(
    agent_contexts: Sequence[Sequence[dict[str, str]]], events: Sequence[DisturbanceEvent]
) -> list[tuple[int, str]]:
    """``(context index, event id)`` for every agent context that contains an event's text."""
    leaks = []
    for k, ctx in enumerate(agent_contexts):
        text = "\n".join(m["content"] for m in ctx)
        leaks.extend((k, ev.id) for ev in events if ev.content in text)
    return leaks


def write_transcript(tr: Transcript, root: str | Path) -> Path:
    model = safe_name(tr.model_ids.get("agent", "agent"))
    path = Path(root) / model / f"{safe_name(tr.env_id)}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(tr.dumps(), encoding="utf-8")
    return path


def read_transcript(path: str | Path) -> Transcript:
    return Transcript.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def safe_name(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name) or "_"
