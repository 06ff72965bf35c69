import json
from collections import Counter

import numpy as np
import pytest

from trajeval.corpus import (
    SUBCATEGORY_DOMAIN,
    TABLE_STRATEGIES,
    TAXONOMY,
    CorpusEntry,
    CorpusError,
    DisturbanceEvent,
    Strategy,
    dump_corpus,
    entry_from_dict,
    load_corpus,
    load_sample_corpus,
    parse_corpus,
    sample_entries,
    validate_entry,
)


def raw_entry(**kw):
    base = {
        "id": "t-01",
        "domain": "professional_social",
        "subcategory": "occupational_stress",
        "strategy": "CogChg",
        "language": "EN",
        "user_persona": "A nurse on night shifts who feels nobody notices her effort.",
        "agent_constraint": "You are a calm, supportive listener.",
        "events": [],
        "weight": 1.0,
    }
    base.update(kw)
    return base


def events(*turns):
    return [{"id": f"e{k}", "content": f"setback {k}", "trigger_turn": t} for k, t in enumerate(turns, 1)]


class TestTaxonomy:
    def test_shape(self):
        assert len(TAXONOMY) == 4
        assert sum(len(v) for v in TAXONOMY.values()) == 14
        assert len(SUBCATEGORY_DOMAIN) == 14

    def test_strategies(self):
        assert {s.name for s in Strategy} == {"SitSel", "SitMod", "AttDep", "CogChg", "ResMod", "ERFlex"}
        assert [s.name for s in TABLE_STRATEGIES] == ["CogChg", "SitMod", "AttDep", "ERFlex", "SitSel", "ResMod"]


class TestSampleCorpus:
    def test_loads(self):
        corpus = load_sample_corpus()
        assert len(corpus) == 12
        assert all(validate_entry(e) == [] for e in corpus)

    def test_coverage(self):
        corpus = load_sample_corpus()
        assert Counter(e.strategy for e in corpus) == {s.name: 2 for s in Strategy}
        assert Counter(e.language for e in corpus) == {"EN": 6, "ZH": 6}
        assert Counter(len(e.events) for e in corpus) == {0: 4, 1: 4, 3: 4}

    def test_background_mentions_subcategory(self):
        e = load_sample_corpus()[0]
        assert e.subcategory.replace("_", " ") in e.background


class TestValidation:
    def test_valid(self):
        assert validate_entry(entry_from_dict(raw_entry(events=events(11, 21, 31)))) == []

    def test_two_events(self):
        problems = validate_entry(entry_from_dict(raw_entry(events=events(5, 9))))
        assert "events: event count must be 0, 1, or 3" in problems

    def test_trigger_beyond_horizon(self):
        problems = validate_entry(entry_from_dict(raw_entry(events=events(99))))
        assert any("trigger exceeds horizon" in p for p in problems)
        assert validate_entry(entry_from_dict(raw_entry(events=events(99))), horizon=100) == []

    def test_trigger_zero(self):
        assert any("trigger_turn" in p for p in validate_entry(entry_from_dict(raw_entry(events=events(0)))))

    @pytest.mark.parametrize(
        "field, value",
        [("strategy", "Hugging"), ("language", "FR"), ("domain", "weather"), ("subcategory", "romantic"),
         ("user_persona", " "), ("weight", 0)],
    )
    def test_bad_field(self, field, value):
        problems = validate_entry(entry_from_dict(raw_entry(**{field: value})))
        assert problems and any(p.startswith(field) for p in problems)

    def test_all_violations_reported(self):
        problems = validate_entry(entry_from_dict(raw_entry(strategy="X", language="FR", events=events(1, 2))))
        assert len(problems) == 3


class TestParsing:
    def test_missing_field_names_entry(self):
        raw = raw_entry(id="zz-9")
        del raw["weight"]
        with pytest.raises(CorpusError, match="zz-9.*weight"):
            entry_from_dict(raw)

    def test_unknown_field(self):
        with pytest.raises(CorpusError, match="mood"):
            entry_from_dict(raw_entry(mood="sad"))

    def test_duplicate_ids(self):
        with pytest.raises(CorpusError, match="duplicate"):
            parse_corpus([raw_entry(), raw_entry()])

    def test_invalid_entry_rejected(self):
        with pytest.raises(CorpusError, match="t-01"):
            parse_corpus([raw_entry(events=events(3, 4))])

    def test_not_a_list(self):
        with pytest.raises(CorpusError):
            parse_corpus({"id": "x"})

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("[{", encoding="utf-8")
        with pytest.raises(CorpusError):
            load_corpus(p)

    def test_round_trip(self, tmp_path):
        corpus = load_sample_corpus()
        p = tmp_path / "c.json"
        dump_corpus(corpus, p)
        assert load_corpus(p) == corpus
        assert json.loads(p.read_text(encoding="utf-8"))[0]["id"] == corpus[0].id


def entry(ident, weight):
    return CorpusEntry(ident, "personal_growth", "self_worth", "SitSel", "EN", "p", "a", (), weight)


class TestSampling:
    def test_full_draw_is_permutation(self):
        corpus = load_sample_corpus()
        drawn = sample_entries(corpus, len(corpus), np.random.default_rng(3))
        assert sorted(e.id for e in drawn) == sorted(e.id for e in corpus)

    def test_deterministic(self):
        corpus = load_sample_corpus()
        a = sample_entries(corpus, 5, np.random.default_rng(11))
        b = sample_entries(corpus, 5, np.random.default_rng(11))
        assert a == b

    def test_too_many(self):
        with pytest.raises(CorpusError):
            sample_entries(load_sample_corpus(), 13, np.random.default_rng(0))

    def test_heavy_weight_dominates(self):
        corpus = [entry("heavy", 1000.0)] + [entry(f"light{i}", 1.0) for i in range(3)]
        hits = sum(sample_entries(corpus, 1, np.random.default_rng(s))[0].id == "heavy" for s in range(1000))
        assert hits / 1000 > 0.99

    def test_frequencies_follow_weights(self):
        corpus = [entry("a", 1.0), entry("b", 2.0), entry("c", 3.0)]
        rng = np.random.default_rng(2024)
        counts = Counter(sample_entries(corpus, 1, rng)[0].id for _ in range(10_000))
        for ident, w in (("a", 1), ("b", 2), ("c", 3)):
            assert abs(counts[ident] / 10_000 - w / 6) <= 0.02

    def test_event_dataclass(self):
        ev = DisturbanceEvent("e1", "x", 3)
        assert ev.trigger_turn == 3
