"""File-decoupled pipeline stages: simulate, score, metrics, report.

Configuration is an INI file with ``[user]``, ``[agent]``, ``[scorer]``,
``[schedule]`` and ``[estimator]`` sections. Every key is optional; omitted
backends fall back to the offline ``echo`` chat and ``synthetic`` scorer.
"""

from __future__ import annotations

import configparser
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .causal import (
    DEFAULT_HORIZON,
    EstimationFailed,
    EstimatorConfig,
    PriorSchedule,
    Scorer,
    derive_seed,
    estimate_trajectory,
)
from .clients import ChatClient, ClientConfig, ConstantScorer, EchoChat, HttpChat, HttpScorer, SyntheticScorer
from .corpus import CorpusEntry, sample_entries
from .dialogue import Environment, fixed_schedule, random_schedule, read_transcript, run_dialogue, safe_name, write_transcript
from .report import metric_record, read_jsonl, write_jsonl, write_report

log = logging.getLogger(__name__)

_HTTP_KEYS = {
    "endpoint": str,
    "model": str,
    "token_env": str,
    "timeout": float,
    "max_retries": int,
    "max_tokens": int,
    "temperature": float,
    "backoff_base": float,
    "max_in_flight": int,
    "prompt_template": str,
}


# offline default: prior-sensitive, and reacts to the echo user's setback remark
OFFLINE_SCORER = {
    "backend": "synthetic",
    "target": "0.6",
    "descriptor_shift": "0.05",
    "negative_cues": "feel worse",
    "cue_penalty": "0.3",
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    user: dict[str, str] = field(default_factory=lambda: {"backend": "echo", "model": "echo-user"})
    agent: dict[str, str] = field(default_factory=lambda: {"backend": "echo", "model": "echo-agent"})
    scorer: dict[str, str] = field(default_factory=lambda: dict(OFFLINE_SCORER))
    schedule: dict[str, str] = field(default_factory=dict)
    estimator: dict[str, str] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path | None) -> RunConfig:
        cfg = cls()
        if path is None:
            return cfg
        parser = configparser.ConfigParser(interpolation=None)
        if not parser.read(path, encoding="utf-8"):
            raise ConfigError(f"cannot read config file {path}")
        for section in parser.sections():
            if section not in ("user", "agent", "scorer", "schedule", "estimator"):
                raise ConfigError(f"unknown config section [{section}]")
            target = getattr(cfg, section)
            if section in ("user", "agent", "scorer"):
                target.clear()
            target.update(parser[section])
        return cfg

    def model_name(self, role: str) -> str:
        sec = getattr(self, role)
        return sec.get("model") or f"{sec.get('backend', 'echo')}-{role}"


def _http_config(section: dict[str, str], role: str) -> ClientConfig:
    if "endpoint" not in section or "model" not in section:
        raise ConfigError(f"[{role}] http backend needs endpoint and model")
    kwargs: dict[str, Any] = {}
    for key, value in section.items():
        if key == "backend":
            continue
        if key not in _HTTP_KEYS:
            raise ConfigError(f"[{role}] unknown key {key!r}")
        try:
            kwargs[key] = _HTTP_KEYS[key](value)
        except ValueError:
            raise ConfigError(f"[{role}] {key}: cannot parse {value!r}") from None
    return ClientConfig(**kwargs)


def build_chat(cfg: RunConfig, role: str) -> ChatClient:
    section = getattr(cfg, role)
    backend = section.get("backend", "echo")
    if backend == "echo":
        return EchoChat(role)
    if backend == "http":
        return HttpChat(_http_config(section, role))
    raise ConfigError(f"[{role}] unknown backend {backend!r}")


def build_scorer(cfg: RunConfig) -> Scorer:
    section = dict(cfg.scorer)
    backend = section.pop("backend", "synthetic")
    try:
        if backend == "constant":
            return ConstantScorer(float(section.get("logit", 0.0)))
        if backend == "synthetic":
            cues = [c.strip() for c in section.get("negative_cues", "").split(",") if c.strip()]
            return SyntheticScorer(
                target=float(section.get("target", 0.8)),
                gain=float(section.get("gain", 10.0)),
                descriptor_shift=float(section.get("descriptor_shift", 0.0)),
                negative_cues=cues,
                cue_penalty=float(section.get("cue_penalty", 0.0)),
            )
    except ValueError as exc:
        raise ConfigError(f"[scorer] {exc}") from None
    if backend == "http":
        return HttpScorer(_http_config(cfg.scorer, "scorer"))
    raise ConfigError(f"[scorer] unknown backend {backend!r}")


def build_schedule(cfg: RunConfig, horizon: int = DEFAULT_HORIZON) -> PriorSchedule:
    s = cfg.schedule
    base = PriorSchedule.default(int(s.get("horizon", horizon)))
    try:
        return PriorSchedule(
            mu0=float(s.get("mu0", base.mu0)),
            decay_rate=float(s.get("decay_rate", base.decay_rate)),
            var_initial=float(s.get("var_initial", base.var_initial)),
            var_final=float(s.get("var_final", base.var_final)),
            growth_rate=float(s.get("growth_rate", base.growth_rate)),
        )
    except ValueError as exc:
        raise ConfigError(f"[schedule] {exc}") from None


def build_estimator(cfg: RunConfig, seed: int, samples: int | None = None, tau: float | None = None) -> EstimatorConfig:
    e = cfg.estimator
    try:
        return EstimatorConfig(
            samples=samples if samples is not None else int(e.get("samples", 8)),
            temperature=tau if tau is not None else float(e.get("temperature", 10.0)),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"[estimator] {exc}") from None


@dataclass
class StageResult:
    written: list[Path] = field(default_factory=list)
    failed: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0


def _map(fn, items: Sequence, parallelism: int) -> list:
    if parallelism > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def simulate(
    corpus: Sequence[CorpusEntry],
    cfg: RunConfig,
    out_dir: str | Path,
    horizon: int = DEFAULT_HORIZON,
    seed: int = 0,
    parallelism: int = 1,
    n: int | None = None,
    schedule: str = "corpus",
) -> StageResult:
    """Run one dialogue per sampled corpus entry and write its transcript."""
    entries = sample_entries(corpus, len(corpus) if n is None else n, np.random.default_rng(derive_seed(seed, "sample")))
    user, agent = build_chat(cfg, "user"), build_chat(cfg, "agent")
    model_ids = {"user": cfg.model_name("user"), "agent": cfg.model_name("agent")}

    def one(entry: CorpusEntry):
        env_seed = derive_seed(seed, entry.id)
        events = list(entry.events)
        if schedule == "fixed":
            events = fixed_schedule(events)
        elif schedule == "random":
            events = random_schedule(events, horizon, np.random.default_rng(env_seed))
        elif schedule != "corpus":
            raise ConfigError(f"unknown schedule {schedule!r}")
        meta = {
            "strategy": entry.strategy,
            "language": entry.language,
            "domain": entry.domain,
            "subcategory": entry.subcategory,
            "n_events": len(events),
        }
        tr = run_dialogue(Environment.from_entry(entry), events, user, agent, horizon, env_seed, model_ids, meta)
        return tr, write_transcript(tr, out_dir)

    result = StageResult()
    for tr, path in _map(one, entries, parallelism):
        result.written.append(path)
        if not tr.complete:
            result.failed.append(f"{path}: {tr.error}")
    return result


def _sequence_doc(tr, est, estimator: EstimatorConfig, sched: PriorSchedule) -> dict[str, Any]:
    return {
        "env_id": tr.env_id,
        "model": tr.model_ids.get("agent", "agent"),
        "strategy": tr.meta.get("strategy"),
        "language": tr.meta.get("language"),
        "n_events": tr.meta.get("n_events", len(tr.event_log)),
        "estimator": {"samples": estimator.samples, "temperature": estimator.temperature, "seed": estimator.seed},
        "schedule": asdict(sched),
        "s0": est.trajectory.scores[0],
        "turns": [t.as_dict() for t in est.turns],
    }


def score(
    transcript_dir: str | Path,
    out_dir: str | Path,
    scorer: Scorer,
    estimator: EstimatorConfig,
    sched: PriorSchedule,
    parallelism: int = 1,
    initial_score: float | None = None,
) -> StageResult:
    """Estimate an emotion sequence for every complete transcript."""
    paths = sorted(Path(transcript_dir).rglob("*.json"))
    result = StageResult()

    def one(path: Path):
        tr = read_transcript(path)
        if not tr.complete:
            return path, None, "incomplete transcript"
        try:
            est = estimate_trajectory(tr.pairs, tr.env_id, sched, estimator, scorer, initial_score)
        except EstimationFailed as exc:
            return path, None, str(exc)
        doc = _sequence_doc(tr, est, estimator, sched)
        target = Path(out_dir) / safe_name(doc["model"]) / f"{safe_name(tr.env_id)}.json"
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(doc, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path, target, None

    for path, target, err in _map(one, paths, parallelism):
        if target is not None:
            result.written.append(target)
        elif err == "incomplete transcript":
            result.skipped.append(f"{path}: {err}")
        else:
            result.failed.append(f"{path}: {err}")
    return result


def read_sequence(path: str | Path) -> dict[str, Any]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    doc["scores"] = [doc["s0"], *(t["score"] for t in doc["turns"])]
    return doc


def metrics(sequence_dir: str | Path, out_path: str | Path, n_bins: int = 5) -> StageResult:
    result = StageResult()
    records = []
    for path in sorted(Path(sequence_dir).rglob("*.json")):
        doc = read_sequence(path)
        if len(doc["scores"]) < 2:
            result.skipped.append(f"{path}: sequence shorter than 2")
            continue
        records.append(
            metric_record(
                doc["scores"],
                n_bins,
                env_id=doc["env_id"],
                model=doc["model"],
                strategy=doc["strategy"],
                language=doc["language"],
                n_events=doc["n_events"],
            )
        )
    records.sort(key=lambda r: (r["model"], r["env_id"]))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(records, out_path)
    result.written.append(out_path)
    return result


def report(metrics_path: str | Path, out_dir: str | Path) -> StageResult:
    records = read_jsonl(metrics_path)
    return StageResult(written=write_report(records, out_dir))
