"""Command-line entry point.

    trajeval [--seed S] [--parallelism P] [--out-dir D] [--config FILE] COMMAND ...

Commands: simulate, score, metrics, report, validate-corpus. Exit codes are
0 on success, 1 when some dialogues failed, 2 for invalid input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .causal import DEFAULT_HORIZON
from .corpus import CorpusError, entry_from_dict, load_corpus, sample_corpus_path, validate_entry
from .pipeline import ConfigError, RunConfig

EXIT_OK, EXIT_PARTIAL, EXIT_INVALID = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trajeval", description=__doc__.split("\n\n")[0])
    p.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    p.add_argument("--parallelism", type=int, default=1, help="dialogues processed concurrently")
    p.add_argument("--out-dir", type=Path, default=Path("runs"), help="root for stage outputs")
    p.add_argument("--config", type=Path, default=None, help="INI file naming backends and schedule")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run dialogues and write transcripts")
    sim.add_argument("--corpus", type=Path, default=None, help="corpus JSON (default: bundled sample)")
    sim.add_argument("--turns", type=int, default=DEFAULT_HORIZON, help="turns per dialogue (default: 40)")
    sim.add_argument("-n", "--num-entries", type=int, default=None, help="entries to sample (default: all)")
    sim.add_argument("--schedule", choices=("corpus", "fixed", "random"), default="corpus",
                     help="event trigger turns: as in the corpus, fixed 11/21/31, or seeded random")

    sc = sub.add_parser("score", help="estimate emotion sequences from transcripts")
    sc.add_argument("--transcripts", type=Path, default=None, help="default: OUT_DIR/transcripts")
    sc.add_argument("-K", "--samples", type=int, default=None, help="prior samples per turn (default: 8)")
    sc.add_argument("--tau", type=float, default=None, help="softmax temperature (default: 10)")
    sc.add_argument("--initial-score", type=float, default=None, help="s_0 on [0,1] (default: from mu0)")

    me = sub.add_parser("metrics", help="compute BEL / ETV / ECP per dialogue")
    me.add_argument("--sequences", type=Path, default=None, help="default: OUT_DIR/sequences")
    me.add_argument("-N", "--bins", type=int, default=5, help="number of emotion states (default: 5)")

    rp = sub.add_parser("report", help="aggregate tables and plot data")
    rp.add_argument("--metrics", type=Path, default=None, help="default: OUT_DIR/metrics.jsonl")

    vc = sub.add_parser("validate-corpus", help="check a corpus file")
    vc.add_argument("corpus", type=Path, nargs="?", default=None)
    vc.add_argument("--turns", type=int, default=DEFAULT_HORIZON)
    return p


def _summary(label: str, result: pipeline.StageResult) -> None:
    print(f"{label}: wrote {len(result.written)} file(s)")
    for line in result.skipped:
        print(f"  skipped {line}")
    for line in result.failed:
        print(f"  FAILED {line}", file=sys.stderr)


def _validate_corpus(path: Path, horizon: int) -> int:
    """Print every violation in the file rather than stopping at the first."""
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if not isinstance(raw, list):
        print(f"{path}: expected a JSON array of entries", file=sys.stderr)
        return EXIT_INVALID
    bad = 0
    seen: set[str] = set()
    for record in raw:
        try:
            entry = entry_from_dict(record)
        except CorpusError as exc:
            print(f"  {exc}", file=sys.stderr)
            bad += 1
            continue
        problems = validate_entry(entry, horizon)
        if entry.id in seen:
            problems.append(f"id: duplicate entry id {entry.id!r}")
        seen.add(entry.id)
        for problem in problems:
            print(f"  entry {entry.id}: {problem}", file=sys.stderr)
        bad += bool(problems)
    print(f"{path}: {len(raw) - bad} of {len(raw)} entries valid")
    return EXIT_INVALID if bad else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.out_dir
    try:
        cfg = RunConfig.load(args.config)
        if args.command == "validate-corpus":
            return _validate_corpus(args.corpus or sample_corpus_path(), args.turns)

        if args.command == "simulate":
            corpus = load_corpus(args.corpus or sample_corpus_path(), args.turns)
            result = pipeline.simulate(corpus, cfg, out / "transcripts", args.turns, args.seed,
                                       args.parallelism, args.num_entries, args.schedule)
            _summary("simulate", result)
            return result.exit_code

        if args.command == "score":
            src = args.transcripts or out / "transcripts"
            if not src.is_dir():
                print(f"no transcript directory at {src}", file=sys.stderr)
                return EXIT_INVALID
            result = pipeline.score(
                src,
                out / "sequences",
                pipeline.build_scorer(cfg),
                pipeline.build_estimator(cfg, args.seed, args.samples, args.tau),
                pipeline.build_schedule(cfg),
                args.parallelism,
                args.initial_score,
            )
            _summary("score", result)
            return result.exit_code

        if args.command == "metrics":
            src = args.sequences or out / "sequences"
            if not src.is_dir():
                print(f"no sequence directory at {src}", file=sys.stderr)
                return EXIT_INVALID
            result = pipeline.metrics(src, out / "metrics.jsonl", args.bins)
            _summary("metrics", result)
            return result.exit_code

        if args.command == "report":
            src = args.metrics or out / "metrics.jsonl"
            if not src.is_file():
                print(f"no metric records at {src}", file=sys.stderr)
                return EXIT_INVALID
            result = pipeline.report(src, out / "report")
            _summary("report", result)
            return result.exit_code
    except (ConfigError, CorpusError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
