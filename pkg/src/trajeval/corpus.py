"""Evaluation corpus: scenarios, regulation strategies, personas and disturbance events."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

DEFAULT_HORIZON = 40
ALLOWED_EVENT_COUNTS = (0, 1, 3)
LANGUAGES = ("EN", "ZH")


class Strategy(str, Enum):
    SitSel = "SitSel"
    SitMod = "SitMod"
    AttDep = "AttDep"
    CogChg = "CogChg"
    ResMod = "ResMod"
    ERFlex = "ERFlex"


# column order of the published strategy tables
TABLE_STRATEGIES: tuple[Strategy, ...] = (
    Strategy.CogChg,
    Strategy.SitMod,
    Strategy.AttDep,
    Strategy.ERFlex,
    Strategy.SitSel,
    Strategy.ResMod,
)

TAXONOMY: dict[str, dict[str, str]] = {
    "professional_social": {
        "occupational_stress": "Strain from workload, job pressure or burnout.",
        "interpersonal_conflict": "Disputes and friction with colleagues or acquaintances.",
        "career_insecurity": "Worry about job stability, prospects or advancement.",
        "social_comparison_identity": "Measuring oneself against others, or unsettled social identity.",
    },
    "intimate_relationships": {
        "romantic": "Love, breakups and commitment troubles.",
        "family_kinship": "Conflict or strain with parents, siblings or relatives.",
        "friendship": "Distance, tension or misunderstanding between friends.",
    },
    "personal_growth": {
        "academic_developmental": "Pressure around study, exams and expectations for the future.",
        "self_worth": "Low confidence and a shaky sense of self.",
        "psychosomatic": "Distress that shows up as fatigue, insomnia or other body symptoms.",
        "existential": "Doubts about purpose, meaning and direction in life.",
    },
    "life_circumstances": {
        "economic_pressure": "Money trouble and worry about covering basic needs.",
        "major_negative_event": "Bereavement, accidents or other serious loss.",
        "environmental_social": "Distress from surroundings, instability or discrimination.",
    },
}

SUBCATEGORY_DOMAIN: dict[str, str] = {sub: dom for dom, subs in TAXONOMY.items() for sub in subs}


class CorpusError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class DisturbanceEvent:
    id: str
    content: str
    trigger_turn: int


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    domain: str
    subcategory: str
    strategy: str
    language: str
    user_persona: str
    agent_constraint: str
    events: tuple[DisturbanceEvent, ...] = field(default=())
    weight: float = 1.0

    @property
    def background(self) -> str:
        desc = TAXONOMY.get(self.domain, {}).get(self.subcategory, "")
        label = self.subcategory.replace("_", " ")
        return f"Scenario ({self.domain.replace('_', ' ')} / {label}): {desc}".rstrip()

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["events"] = [asdict(e) for e in self.events]
        return d


def validate_entry(entry: CorpusEntry, horizon: int = DEFAULT_HORIZON) -> list[str]:
    """Return a list of violations; an empty list means the entry is valid."""
    problems: list[str] = []
    for name in ("id", "user_persona", "agent_constraint"):
        value = getattr(entry, name)
        if not isinstance(value, str) or not value.strip():
            problems.append(f"{name}: must be non-empty text")
    if entry.domain not in TAXONOMY:
        problems.append(f"domain: unknown domain {entry.domain!r}")
    elif SUBCATEGORY_DOMAIN.get(entry.subcategory) != entry.domain:
        problems.append(f"subcategory: {entry.subcategory!r} is not a subcategory of {entry.domain!r}")
    if entry.strategy not in Strategy.__members__:
        problems.append(f"strategy: unknown strategy {entry.strategy!r}")
    if entry.language not in LANGUAGES:
        problems.append(f"language: must be one of {LANGUAGES}, got {entry.language!r}")
    if len(entry.events) not in ALLOWED_EVENT_COUNTS:
        problems.append("events: event count must be 0, 1, or 3")
    seen: set[str] = set()
    for ev in entry.events:
        if not ev.content or not ev.content.strip():
            problems.append(f"events[{ev.id}].content: must be non-empty text")
        if ev.id in seen:
            problems.append(f"events[{ev.id}].id: duplicate event id")
        seen.add(ev.id)
        if not isinstance(ev.trigger_turn, int) or ev.trigger_turn < 1:
            problems.append(f"events[{ev.id}].trigger_turn: must be an integer >= 1")
        elif ev.trigger_turn > horizon:
            problems.append(f"events[{ev.id}].trigger_turn: trigger exceeds horizon ({ev.trigger_turn} > {horizon})")
    if not isinstance(entry.weight, (int, float)) or not entry.weight > 0:
        problems.append("weight: must be > 0")
    return problems


_FIELDS = ("id", "domain", "subcategory", "strategy", "language", "user_persona", "agent_constraint", "events", "weight")


def entry_from_dict(raw: dict[str, Any]) -> CorpusEntry:
    ident = raw.get("id", "<missing id>") if isinstance(raw, dict) else "<not an object>"
    if not isinstance(raw, dict):
        raise CorpusError(f"entry {ident}: expected a JSON object")
    missing = [k for k in _FIELDS if k not in raw]
    if missing:
        raise CorpusError(f"entry {ident}: missing field(s) {', '.join(missing)}")
    unknown = sorted(set(raw) - set(_FIELDS))
    if unknown:
        raise CorpusError(f"entry {ident}: unknown field(s) {', '.join(unknown)}")
    try:
        events = tuple(
            DisturbanceEvent(str(e["id"]), e["content"], e["trigger_turn"]) for e in raw["events"]
        )
    except (KeyError, TypeError) as exc:
        raise CorpusError(f"entry {ident}: field events is malformed ({exc})") from None
    return CorpusEntry(
        id=raw["id"],
        domain=raw["domain"],
        subcategory=raw["subcategory"],
        strategy=raw["strategy"],
        language=raw["language"],
        user_persona=raw["user_persona"],
        agent_constraint=raw["agent_constraint"],
        events=events,
        weight=raw["weight"],
    )


def parse_corpus(records: Any, horizon: int = DEFAULT_HORIZON) -> list[CorpusEntry]:
    if not isinstance(records, list):
        raise CorpusError("corpus file must contain a JSON array of entries")
    entries: list[CorpusEntry] = []
    ids: set[str] = set()
    for raw in records:
        entry = entry_from_dict(raw)
        problems = validate_entry(entry, horizon)
        if problems:
            raise CorpusError(f"entry {entry.id}: " + "; ".join(problems))
        if entry.id in ids:
            raise CorpusError(f"duplicate entry id {entry.id!r}")
        ids.add(entry.id)
        entries.append(entry)
    return entries


def load_corpus(path: str | Path, horizon: int = DEFAULT_HORIZON) -> list[CorpusEntry]:
    with open(path, encoding="utf-8") as fh:
        try:
            records = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}: not valid JSON ({exc})") from None
    return parse_corpus(records, horizon)


def dump_corpus(entries: Iterable[CorpusEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([e.to_dict() for e in entries], fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def sample_corpus_path() -> Path:
    return Path(str(resources.files("trajeval") / "data" / "sample_corpus.json"))


def load_sample_corpus() -> list[CorpusEntry]:
    return load_corpus(sample_corpus_path())


def sample_entries(corpus: Sequence[CorpusEntry], n: int, rng: np.random.Generator) -> list[CorpusEntry]:
    """Weighted sampling without replacement, deterministic for a seeded ``rng``."""
    if n < 0 or n > len(corpus):
        raise CorpusError(f"cannot draw {n} entries without replacement from {len(corpus)}")
    if n == 0:
        return []
    w = np.array([e.weight for e in corpus], dtype=np.float64)
    picks = rng.choice(len(corpus), size=n, replace=False, p=w / w.sum())
    return [corpus[i] for i in picks]
