"""Evaluation of narrative and difficulty control over generated pairs.

Narrative control is judged by ROUGE-L F1 similarity between generated
questions and same-section ground-truth questions of the requested
narrative (max over candidates, mean per cell). Difficulty control is
judged by how a respondent panel performs on the generated questions,
each pair supplying its own answer key. Linguistic side-channels (PINC
lexical novelty, lengths, initial interrogatives) round out the report.

Per-respondent accuracy is reported in two variants: ``micro`` averages
over questions, ``macro`` averages the per-narrative means, since class
imbalance can make the two tell different stories. Every cell carries
its sample count.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from qgforge.corpus import (
    Corpus,
    DataSetup,
    DifficultyLabel,
    DifficultyLabel3,
    NarrativeLabel,
)
from qgforge.genclient import AnsweringEndpoint, GeneratedPair
from qgforge.responses import score_answer
from qgforge.textmetrics import (
    INTERROGATIVES,
    initial_interrogative,
    pinc,
    rouge_l_f1,
    word_count,
)


class EvaluationError(ValueError):
    """Raised when an evaluation surface has no usable inputs."""


NO_DIFFICULTY = "all"  # difficulty key for pairs generated without one


@dataclass(frozen=True)
class Cell:
    value: float
    count: int


@dataclass(frozen=True)
class SimilarityCell:
    mean: float
    count: int
    excluded: int


@dataclass(frozen=True)
class TrendFit:
    slope: float
    intercept: float
    n_points: int


@dataclass
class EvaluationReport:
    """All quantitative result surfaces, keyed by plain strings."""

    scheme_levels: int
    narrative_similarity: dict[tuple[str, str], SimilarityCell] = field(default_factory=dict)
    difficulty_accuracy: dict[tuple[str, str, str], Cell] = field(default_factory=dict)
    difficulty_accuracy_macro: dict[tuple[str, str, str], Cell] = field(default_factory=dict)
    per_narrative_accuracy: dict[tuple[str, str, str], Cell] = field(default_factory=dict)
    trend_fits: dict[str, TrendFit] = field(default_factory=dict)
    pinc_by_difficulty: dict[tuple[str, str, str], Cell] = field(default_factory=dict)
    length_stats: dict[tuple[str, str, str], Cell] = field(default_factory=dict)
    interrogative_dist: dict[tuple[str, str, str], Cell] = field(default_factory=dict)
    plot_series: dict[tuple[str, str], list[tuple[float, float]]] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not (
            self.narrative_similarity
            or self.difficulty_accuracy
            or self.pinc_by_difficulty
            or self.length_stats
        )


def _difficulty_key(pair: GeneratedPair) -> str:
    if pair.requested_difficulty is None:
        return NO_DIFFICULTY
    return pair.requested_difficulty.value


def _scheme_order(scheme_levels: int) -> list[str]:
    scheme = DifficultyLabel if scheme_levels == 5 else DifficultyLabel3
    return [label.value for label in scheme] + [NO_DIFFICULTY]


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def narrative_similarity(
    generated: Sequence[GeneratedPair], corpus: Corpus
) -> dict[tuple[str, str], SimilarityCell]:
    """Mean max-ROUGE-L of generated questions vs same-narrative ground truth.

    Pairs generated without a narrative request (the baseline setup) are
    scored against every narrative present in their section, one
    contribution per narrative cell. Sections lacking a ground-truth
    question of the target narrative are excluded and counted.
    """
    if not generated:
        raise EvaluationError("no generated pairs to evaluate")
    gt: dict[tuple[str, str], list[str]] = {}
    section_narratives: dict[str, set[str]] = {}
    for section in corpus.sections("test"):
        for rec in section.records:
            gt.setdefault((section.section_id, rec.narrative.value), []).append(rec.question)
            section_narratives.setdefault(section.section_id, set()).add(rec.narrative.value)

    scores: dict[tuple[str, str], list[float]] = {}
    excluded: dict[tuple[str, str], int] = {}
    any_scored = False
    for pair in generated:
        if pair.requested_narrative is not None:
            narratives = [pair.requested_narrative.value]
        else:
            narratives = sorted(section_narratives.get(pair.section_id, ()))
        for narrative in narratives:
            key = (pair.setup.value, narrative)
            candidates = gt.get((pair.section_id, narrative))
            if not candidates:
                excluded[key] = excluded.get(key, 0) + 1
                continue
            any_scored = True
            best = max(rouge_l_f1(cand, pair.question) for cand in candidates)
            scores.setdefault(key, []).append(best)
    if not any_scored:
        raise EvaluationError("no generated pair shares a (section, narrative) with the corpus")

    cells = {
        key: SimilarityCell(_mean(vals), len(vals), excluded.get(key, 0))
        for key, vals in scores.items()
    }
    for key, n_excluded in excluded.items():
        if key not in cells:
            cells[key] = SimilarityCell(0.0, 0, n_excluded)
    return cells


def _panel_answers(
    generated: Sequence[GeneratedPair],
    corpus: Corpus,
    panel: Mapping[str, AnsweringEndpoint],
    jobs: int = 4,
) -> dict[tuple[str, int], int]:
    """Correctness of each (respondent, pair index), in deterministic order."""
    section_text = {s.section_id: s.text for s in corpus.sections("test")}
    missing = sorted({p.section_id for p in generated} - set(section_text))
    if missing:
        raise EvaluationError(f"generated pairs reference unknown section(s): {missing[:5]}")

    names = sorted(panel)
    tasks = [(name, idx) for name in names for idx in range(len(generated))]

    def run_task(task: tuple[str, int]) -> int:
        name, idx = task
        pair = generated[idx]
        reply = panel[name].answer(context=section_text[pair.section_id], question=pair.question)
        return score_answer(pair.answer, reply)

    out: dict[tuple[str, int], int] = {}
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        futures = [pool.submit(run_task, task) for task in tasks]
        for task, future in zip(tasks, futures):
            out[task] = future.result()
    return out


def difficulty_accuracy(
    generated: Sequence[GeneratedPair],
    corpus: Corpus,
    panel: Mapping[str, AnsweringEndpoint],
    jobs: int = 4,
) -> tuple[
    dict[tuple[str, str, str], Cell],
    dict[tuple[str, str, str], Cell],
    dict[tuple[str, str, str], Cell],
]:
    """Percent of panel answers scored correct, by difficulty level.

    Returns (micro per (setup, respondent, difficulty), macro variant
    averaging per-narrative means, pooled per (setup, narrative,
    difficulty)). Correctness compares each respondent's answer against
    the generated answer, which acts as the pair's key.
    """
    pairs = list(generated)
    if not pairs:
        raise EvaluationError("no generated pairs to evaluate")
    without = sum(1 for p in pairs if p.requested_difficulty is None)
    if without:
        raise EvaluationError(
            f"{without} generated pair(s) carry no requested difficulty"
        )
    correctness = _panel_answers(pairs, corpus, panel, jobs)

    micro_groups: dict[tuple[str, str, str], list[int]] = {}
    nar_groups: dict[tuple[str, str, str], dict[str, list[int]]] = {}
    pooled_groups: dict[tuple[str, str, str], list[int]] = {}
    for name in sorted(panel):
        for idx, pair in enumerate(pairs):
            score = correctness[(name, idx)]
            key = (pair.setup.value, name, pair.requested_difficulty.value)
            micro_groups.setdefault(key, []).append(score)
            narrative = (
                pair.requested_narrative.value if pair.requested_narrative is not None else ""
            )
            nar_groups.setdefault(key, {}).setdefault(narrative, []).append(score)
            if pair.requested_narrative is not None:
                pooled_key = (
                    pair.setup.value,
                    pair.requested_narrative.value,
                    pair.requested_difficulty.value,
                )
                pooled_groups.setdefault(pooled_key, []).append(score)

    micro = {k: Cell(100.0 * _mean(v), len(v)) for k, v in micro_groups.items()}
    macro = {
        k: Cell(100.0 * _mean([_mean(group) for group in by_nar.values()]), sum(map(len, by_nar.values())))
        for k, by_nar in nar_groups.items()
    }
    per_narrative = {k: Cell(100.0 * _mean(v), len(v)) for k, v in pooled_groups.items()}
    return micro, macro, per_narrative


def fit_linear_trend(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Ordinary least squares fit; returns (slope, intercept)."""
    if len({x for x, _ in points}) < 2:
        raise EvaluationError("trend fit needs at least 2 distinct x values")
    n = len(points)
    mean_x = sum(x for x, _ in points) / n
    mean_y = sum(y for _, y in points) / n
    sxx = sum((x - mean_x) ** 2 for x, _ in points)
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in points)
    slope = sxy / sxx
    return slope, mean_y - slope * mean_x


def pinc_by_difficulty(
    generated: Sequence[GeneratedPair], corpus: Corpus, max_n: int = 3
) -> dict[tuple[str, str, str], Cell]:
    """Mean PINC of questions and answers vs their source section, as percent."""
    if not generated:
        raise EvaluationError("no generated pairs to evaluate")
    section_text = {s.section_id: s.text for s in corpus.sections("test")}
    groups: dict[tuple[str, str, str], list[float]] = {}
    for pair in generated:
        source = section_text.get(pair.section_id)
        if source is None:
            continue
        level = _difficulty_key(pair)
        for part, text in (("Q", pair.question), ("A", pair.answer)):
            key = (pair.setup.value, part, level)
            groups.setdefault(key, []).append(100.0 * pinc(source, text, max_n))
    if not groups:
        raise EvaluationError("no generated pair shares a section with the corpus")
    return {k: Cell(_mean(v), len(v)) for k, v in groups.items()}


def length_and_interrogative_stats(
    generated: Sequence[GeneratedPair],
) -> tuple[dict[tuple[str, str, str], Cell], dict[tuple[str, str, str], Cell]]:
    """Mean word counts per part and initial-interrogative proportions."""
    if not generated:
        raise EvaluationError("no generated pairs to evaluate")
    lengths: dict[tuple[str, str, str], list[int]] = {}
    openers: dict[tuple[str, str], dict[str, int]] = {}
    for pair in generated:
        level = _difficulty_key(pair)
        lengths.setdefault((pair.setup.value, "Q", level), []).append(word_count(pair.question))
        lengths.setdefault((pair.setup.value, "A", level), []).append(word_count(pair.answer))
        cell = openers.setdefault((pair.setup.value, level), {})
        opener = initial_interrogative(pair.question)
        cell[opener] = cell.get(opener, 0) + 1

    length_cells = {k: Cell(_mean([float(n) for n in v]), len(v)) for k, v in lengths.items()}
    dist: dict[tuple[str, str, str], Cell] = {}
    for (setup, level), counts in openers.items():
        total = sum(counts.values())
        for opener, n in counts.items():
            dist[(setup, level, opener)] = Cell(n / total, n)
    return length_cells, dist


def build_report(
    generated_by_setup: Mapping[DataSetup, Sequence[GeneratedPair]],
    corpus: Corpus,
    panel: Mapping[str, AnsweringEndpoint],
    scheme_levels: int = 5,
    jobs: int = 4,
) -> EvaluationReport:
    """Assemble the full report from per-setup generation suites."""
    report = EvaluationReport(scheme_levels=scheme_levels)
    all_pairs: list[GeneratedPair] = []
    for setup in DataSetup:
        all_pairs.extend(generated_by_setup.get(setup, ()))
    if not all_pairs:
        raise EvaluationError("no generated pairs supplied")

    report.narrative_similarity = narrative_similarity(all_pairs, corpus)
    report.length_stats, report.interrogative_dist = length_and_interrogative_stats(all_pairs)
    report.pinc_by_difficulty = pinc_by_difficulty(all_pairs, corpus)

    difficulty_pairs = [p for p in all_pairs if p.requested_difficulty is not None]
    if difficulty_pairs and panel:
        micro, macro, per_narrative = difficulty_accuracy(difficulty_pairs, corpus, panel, jobs)
        report.difficulty_accuracy = micro
        report.difficulty_accuracy_macro = macro
        report.per_narrative_accuracy = per_narrative

        order = _scheme_order(scheme_levels)
        setups = sorted({p.setup.value for p in difficulty_pairs})
        names = sorted(panel)
        for setup in setups:
            for name in names:
                series = []
                for i, level in enumerate(order[:-1]):
                    cell = micro.get((setup, name, level))
                    if cell is not None:
                        series.append((i / max(1, scheme_levels - 1), cell.value))
                if series:
                    report.plot_series[(setup, name)] = series
            points: list[tuple[float, float]] = []
            for i, level in enumerate(order[:-1]):
                cells = [
                    (micro[(setup, name, level)].value, micro[(setup, name, level)].count)
                    for name in names
                    if (setup, name, level) in micro
                ]
                if cells:
                    total = sum(c for _, c in cells)
                    pooled = sum(v * c for v, c in cells) / total
                    points.append((i / max(1, scheme_levels - 1), pooled))
            if len({x for x, _ in points}) >= 2:
                slope, intercept = fit_linear_trend(points)
                report.trend_fits[setup] = TrendFit(slope, intercept, len(points))
    return report


# --- serialization -----------------------------------------------------

def report_to_json(report: EvaluationReport) -> dict:
    def rows3(cells: Mapping[tuple[str, str, str], Cell]) -> list[dict]:
        return [
            {"k1": k[0], "k2": k[1], "k3": k[2], "value": c.value, "count": c.count}
            for k, c in sorted(cells.items())
        ]

    return {
        "scheme_levels": report.scheme_levels,
        "narrative_similarity": [
            {
                "setup": k[0],
                "narrative": k[1],
                "mean": c.mean,
                "count": c.count,
                "excluded": c.excluded,
            }
            for k, c in sorted(report.narrative_similarity.items())
        ],
        "difficulty_accuracy": rows3(report.difficulty_accuracy),
        "difficulty_accuracy_macro": rows3(report.difficulty_accuracy_macro),
        "per_narrative_accuracy": rows3(report.per_narrative_accuracy),
        "trend_fits": [
            {"setup": k, "slope": t.slope, "intercept": t.intercept, "n_points": t.n_points}
            for k, t in sorted(report.trend_fits.items())
        ],
        "pinc_by_difficulty": rows3(report.pinc_by_difficulty),
        "length_stats": rows3(report.length_stats),
        "interrogative_dist": rows3(report.interrogative_dist),
        "plot_series": [
            {"setup": k[0], "respondent": k[1], "points": [[x, y] for x, y in v]}
            for k, v in sorted(report.plot_series.items())
        ],
    }


def report_from_json(data: dict) -> EvaluationReport:
    def cells3(rows: list[dict]) -> dict[tuple[str, str, str], Cell]:
        return {
            (r["k1"], r["k2"], r["k3"]): Cell(r["value"], r["count"]) for r in rows
        }

    report = EvaluationReport(scheme_levels=data["scheme_levels"])
    report.narrative_similarity = {
        (r["setup"], r["narrative"]): SimilarityCell(r["mean"], r["count"], r["excluded"])
        for r in data["narrative_similarity"]
    }
    report.difficulty_accuracy = cells3(data["difficulty_accuracy"])
    report.difficulty_accuracy_macro = cells3(data["difficulty_accuracy_macro"])
    report.per_narrative_accuracy = cells3(data["per_narrative_accuracy"])
    report.trend_fits = {
        r["setup"]: TrendFit(r["slope"], r["intercept"], r["n_points"])
        for r in data["trend_fits"]
    }
    report.pinc_by_difficulty = cells3(data["pinc_by_difficulty"])
    report.length_stats = cells3(data["length_stats"])
    report.interrogative_dist = cells3(data["interrogative_dist"])
    report.plot_series = {
        (r["setup"], r["respondent"]): [(x, y) for x, y in r["points"]]
        for r in data["plot_series"]
    }
    return report


# --- emission ----------------------------------------------------------

_SETUP_ORDER = [s.value for s in DataSetup]
_NARRATIVE_ORDER = [n.value for n in NarrativeLabel]
_OPENER_ORDER = list(INTERROGATIVES) + ["other"]


def _sort_key(order: list[str]):
    def key(value: str):
        return (order.index(value), value) if value in order else (len(order), value)

    return key


def emit_report(report: EvaluationReport, out_dir: str | Path) -> list[Path]:
    """Write the report tables and plot series with deterministic bytes."""
    if report.is_empty():
        raise EvaluationError("refusing to emit an empty report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    setup_key = _sort_key(_SETUP_ORDER)
    narrative_key = _sort_key(_NARRATIVE_ORDER)
    level_key = _sort_key(_scheme_order(report.scheme_levels))
    opener_key = _sort_key(_OPENER_ORDER)

    def write_csv(name: str, header: list[str], rows: Iterable[list]) -> None:
        path = out_dir / name
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        written.append(path)

    write_csv(
        "narrative_similarity.csv",
        ["setup", "narrative", "mean_rouge_l_f1", "count", "excluded"],
        [
            [k[0], k[1], f"{c.mean:.4f}", c.count, c.excluded]
            for k, c in sorted(
                report.narrative_similarity.items(),
                key=lambda kv: (setup_key(kv[0][0]), narrative_key(kv[0][1])),
            )
        ],
    )

    def accuracy_rows(cells: dict[tuple[str, str, str], Cell], variant: str) -> list[list]:
        return [
            [k[0], k[1], k[2], f"{c.value:.2f}", c.count, variant]
            for k, c in sorted(
                cells.items(), key=lambda kv: (setup_key(kv[0][0]), kv[0][1], level_key(kv[0][2]))
            )
        ]

    write_csv(
        "difficulty_accuracy.csv",
        ["setup", "respondent", "difficulty", "percent_correct", "count", "variant"],
        accuracy_rows(report.difficulty_accuracy, "micro")
        + accuracy_rows(report.difficulty_accuracy_macro, "macro"),
    )

    write_csv(
        "per_narrative_accuracy.csv",
        ["setup", "narrative", "difficulty", "percent_correct", "count"],
        [
            [k[0], k[1], k[2], f"{c.value:.2f}", c.count]
            for k, c in sorted(
                report.per_narrative_accuracy.items(),
                key=lambda kv: (setup_key(kv[0][0]), narrative_key(kv[0][1]), level_key(kv[0][2])),
            )
        ],
    )

    write_csv(
        "pinc.csv",
        ["setup", "part", "difficulty", "pinc_percent", "count"],
        [
            [k[0], k[1], k[2], f"{c.value:.2f}", c.count]
            for k, c in sorted(
                report.pinc_by_difficulty.items(),
                key=lambda kv: (setup_key(kv[0][0]), kv[0][1], level_key(kv[0][2])),
            )
        ],
    )

    write_csv(
        "lengths.csv",
        ["setup", "part", "difficulty", "mean_words", "count"],
        [
            [k[0], k[1], k[2], f"{c.value:.2f}", c.count]
            for k, c in sorted(
                report.length_stats.items(),
                key=lambda kv: (setup_key(kv[0][0]), kv[0][1], level_key(kv[0][2])),
            )
        ],
    )

    write_csv(
        "interrogatives.csv",
        ["setup", "difficulty", "interrogative", "proportion", "count"],
        [
            [k[0], k[1], k[2], f"{c.value:.6f}", c.count]
            for k, c in sorted(
                report.interrogative_dist.items(),
                key=lambda kv: (setup_key(kv[0][0]), level_key(kv[0][1]), opener_key(kv[0][2])),
            )
        ],
    )

    write_csv(
        "trend.csv",
        ["setup", "slope", "intercept", "n_points"],
        [
            [k, f"{t.slope:.6f}", f"{t.intercept:.6f}", t.n_points]
            for k, t in sorted(report.trend_fits.items(), key=lambda kv: setup_key(kv[0]))
        ],
    )

    plots_dir = out_dir / "plots"
    plots_dir.mkdir(exist_ok=True)
    for (setup, respondent), series in sorted(report.plot_series.items()):
        path = plots_dir / f"{setup}__{respondent}.series"
        with path.open("w", encoding="utf-8") as fh:
            for x, y in series:
                fh.write(f"{x:.4f} {y:.2f}\n")
        written.append(path)
    return written
