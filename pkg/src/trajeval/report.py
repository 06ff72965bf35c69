"""Per-dialogue metric records and their aggregation into report tables."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

from .corpus import LANGUAGES, TABLE_STRATEGIES
from .emotion import EmotionTrajectory, StateSpace
from .markov import bel, count_transitions, ecp, etv_empirical, etv_matrix, mle_normalize

OVERALL = "Overall"
EVENT_CONDITIONS = (0, 1, 3)
TABLE_METRICS = ("bel", "etv")


def format_report_value(value: float) -> str:
    """Render a [0, 1] metric on the x100 report scale with two decimals."""
    return f"{value * 100:.2f}"


def metric_record(
    scores: Sequence[float], n_bins: int = 5, **labels: Any
) -> dict[str, Any]:
    traj = EmotionTrajectory(scores)
    space = StateSpace.uniform(n_bins)
    m = mle_normalize(count_transitions(traj, space))
    c = ecp(traj, space)
    record = dict(labels)
    record.update(
        bel=bel(traj),
        etv_empirical=etv_empirical(traj),
        etv_matrix=etv_matrix(m, space),
        ecp=c.as_dict(),
        n_turns=traj.n_turns,
        n_bins=n_bins,
        scores=list(traj.scores),
    )
    return record


def write_jsonl(records: Iterable[dict[str, Any]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


@dataclass(frozen=True)
class AggregateRow:
    model: str
    language: str
    strategy: str
    events: str
    bel: float
    etv: float
    cx: float
    cy: float
    n_dialogues: int


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def _row(model: str, language: str, strategy: str, events: str, recs: Sequence[dict]) -> AggregateRow:
    return AggregateRow(
        model=model,
        language=language,
        strategy=strategy,
        events=events,
        bel=_mean([r["bel"] for r in recs]),
        etv=_mean([r["etv_empirical"] for r in recs]),
        cx=_mean([r["ecp"]["cx"] for r in recs]),
        cy=_mean([r["ecp"]["cy"] for r in recs]),
        n_dialogues=len(recs),
    )


def aggregate(records: Sequence[dict[str, Any]]) -> list[AggregateRow]:
    """Means per (model, language, strategy), plus Overall, for all events and per event count.

    Overall is the mean over every dialogue of the language, not a mean of strategy means.
    """
    groups: dict[tuple[str, str, str, str], list[dict]] = defaultdict(list)
    for r in records:
        for events in ("all", str(r["n_events"])):
            for strategy in (OVERALL, r["strategy"]):
                groups[(r["model"], r["language"], strategy, events)].append(r)
    order = {s: i for i, s in enumerate((OVERALL, *(s.value for s in TABLE_STRATEGIES)))}
    keys = sorted(groups, key=lambda k: (k[0], k[1], order.get(k[2], len(order)), k[2], k[3] != "all", k[3]))
    return [_row(*k, groups[k]) for k in keys]


def table_columns() -> list[str]:
    return [f"{s}_{lang}" for s in (OVERALL, *(s.value for s in TABLE_STRATEGIES)) for lang in LANGUAGES]


def metric_table(rows: Sequence[AggregateRow], metric: str) -> list[list[str]]:
    """Wide table shaped like the strategy leaderboards: one row per model."""
    cols = table_columns()
    cells: dict[str, dict[str, str]] = defaultdict(dict)
    for row in rows:
        if row.events == "all":
            cells[row.model][f"{row.strategy}_{row.language}"] = format_report_value(getattr(row, metric))
    out = [["model", *cols]]
    for model in sorted(cells):
        out.append([model, *(cells[model].get(c, "-") for c in cols)])
    return out


def centroid_rows(records: Sequence[dict[str, Any]]) -> list[list[Any]]:
    by_model: dict[str, list[dict]] = defaultdict(list)
    for r in records:
        by_model[r["model"]].append(r)
    out: list[list[Any]] = [["model", "cx", "cy_minus_cx"]]
    for model in sorted(by_model):
        recs = by_model[model]
        cx = _mean([r["ecp"]["cx"] for r in recs])
        cy = _mean([r["ecp"]["cy"] for r in recs])
        out.append([model, repr(cx), repr(cy - cx)])
    return out


def trajectory_curves(records: Sequence[dict[str, Any]], n_events: int) -> list[list[Any]]:
    """Per-turn mean score of ``s_1..s_T`` for dialogues with ``n_events`` events."""
    sums: dict[tuple[str, int], list[float]] = defaultdict(list)
    for r in records:
        if r["n_events"] != n_events:
            continue
        for t, s in enumerate(r["scores"][1:], start=1):
            sums[(r["model"], t)].append(s)
    out: list[list[Any]] = [["model", "turn", "mean_score", "n_dialogues"]]
    for model, t in sorted(sums):
        xs = sums[(model, t)]
        out.append([model, t, repr(_mean(xs)), len(xs)])
    return out


def write_csv(rows: Sequence[Sequence[Any]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def write_report(records: Sequence[dict[str, Any]], out_dir: str | Path) -> list[Path]:
    if not records:
        raise ValueError("no metric records to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = aggregate(records)
    written = []
    agg = [["model", "language", "strategy", "events", "n_dialogues", "bel", "etv", "cx", "cy"]]
    agg += [[r.model, r.language, r.strategy, r.events, r.n_dialogues, repr(r.bel), repr(r.etv), repr(r.cx), repr(r.cy)]
            for r in rows]
    targets = {"aggregate.csv": agg, "centroids.csv": centroid_rows(records)}
    for metric in TABLE_METRICS:
        targets[f"table_{metric}.csv"] = metric_table(rows, metric)
    for k in EVENT_CONDITIONS:
        targets[f"trajectory_events_{k}.csv"] = trajectory_curves(records, k)
    for name, table in targets.items():
        write_csv(table, out / name)
        written.append(out / name)
    return written
