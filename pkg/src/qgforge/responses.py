"""Respondent answers, the correctness rule, and the binary response matrix.

A panel of respondents answers every train/val question; each answer is
scored correct iff it exactly matches the ground truth or reaches a
ROUGE-L F1 of at least 0.5. Scores assemble into a complete respondents
x questions binary matrix, the input to calibration. Partial panels are
rejected rather than imputed.

The answer log is record-per-line JSON with fields ``respondent``,
``question_id``, ``answer_text``; collection appends to it as answers
arrive so interrupted runs resume without repeating endpoint calls.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from qgforge.corpus import Corpus
from qgforge.genclient import AnsweringEndpoint
from qgforge.textmetrics import exact_match, rouge_l_f1

RespondentId = str

ROUGE_CORRECT_THRESHOLD = 0.5


class ResponseError(ValueError):
    """Raised for incomplete or inconsistent response data."""


@dataclass(frozen=True)
class AnswerRecord:
    """One respondent's answer to one question."""

    respondent: RespondentId
    question_id: str
    answer_text: str


@dataclass(frozen=True)
class ResponseMatrix:
    """Complete binary correctness matrix: respondents x questions."""

    respondents: tuple[RespondentId, ...]
    question_ids: tuple[str, ...]
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int8)
        if cells.shape != (len(self.respondents), len(self.question_ids)):
            raise ResponseError(
                f"matrix shape {cells.shape} does not match "
                f"{len(self.respondents)} respondents x {len(self.question_ids)} questions"
            )
        if cells.size and not np.isin(cells, (0, 1)).all():
            raise ResponseError("matrix cells must all be 0 or 1")
        object.__setattr__(self, "cells", cells)

    def row(self, respondent: RespondentId) -> np.ndarray:
        return self.cells[self.respondents.index(respondent)]

    def accuracy(self, respondent: RespondentId) -> float:
        return float(self.row(respondent).mean())

    def column_sums(self) -> np.ndarray:
        """Raw score per question (count of correct responses)."""
        return self.cells.sum(axis=0)

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8", newline="") as fh:
            fh.write("respondent," + ",".join(self.question_ids) + "\n")
            for name, row in zip(self.respondents, self.cells):
                fh.write(name + "," + ",".join(str(int(v)) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "ResponseMatrix":
        with Path(path).open(encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split(",")
            if not header or header[0] != "respondent":
                raise ResponseError(f"{path}: not a response matrix file")
            question_ids = tuple(header[1:])
            respondents = []
            rows = []
            for line in fh:
                parts = line.rstrip("\n").split(",")
                respondents.append(parts[0])
                rows.append([int(v) for v in parts[1:]])
        return cls(tuple(respondents), question_ids, np.array(rows, dtype=np.int8))


def score_answer(ground_truth: str, candidate: str) -> int:
    """1 iff exact match, or ROUGE-L F1 at least 0.5; else 0."""
    if exact_match(ground_truth, candidate):
        return 1
    return int(rouge_l_f1(ground_truth, candidate) >= ROUGE_CORRECT_THRESHOLD)


def build_matrix(
    corpus: Corpus,
    answers: Iterable[AnswerRecord],
    panel: list[RespondentId],
) -> ResponseMatrix:
    """Score answers against ground truth into a complete binary matrix.

    Rows follow panel order; columns are train/val question ids in
    lexicographic order. Every (respondent, question) pair must be
    answered exactly once.
    """
    question_ids = corpus.question_ids("train", "val")
    if not question_ids:
        raise ResponseError("corpus has no train/val questions")
    if len(set(panel)) != len(panel):
        raise ResponseError("panel contains duplicate respondent names")

    by_pair: dict[tuple[str, str], str] = {}
    for rec in answers:
        key = (rec.respondent, rec.question_id)
        if key in by_pair:
            raise ResponseError(f"duplicate answer for {key}")
        by_pair[key] = rec.answer_text

    qid_set = set(question_ids)
    panel_set = set(panel)
    for respondent, question_id in by_pair:
        if question_id not in qid_set and question_id not in corpus:
            raise ResponseError(f"answer references unknown question_id {question_id!r}")
        if respondent not in panel_set:
            raise ResponseError(f"answer from respondent {respondent!r} not in panel")

    cells = np.zeros((len(panel), len(question_ids)), dtype=np.int8)
    for i, respondent in enumerate(panel):
        for j, question_id in enumerate(question_ids):
            key = (respondent, question_id)
            if key not in by_pair:
                raise ResponseError(f"missing answer for {key}")
            cells[i, j] = score_answer(corpus[question_id].answer, by_pair[key])
    return ResponseMatrix(tuple(panel), tuple(question_ids), cells)


def load_answer_log(path: str | Path) -> list[AnswerRecord]:
    """Read an answer log, keeping the last entry per (respondent, question)."""
    by_pair: dict[tuple[str, str], AnswerRecord] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            rec = AnswerRecord(row["respondent"], row["question_id"], row["answer_text"])
            by_pair[(rec.respondent, rec.question_id)] = rec
    return list(by_pair.values())


def collect_answers(
    corpus: Corpus,
    endpoints: AnsweringEndpoint | Mapping[RespondentId, AnsweringEndpoint],
    panel: list[RespondentId],
    log_path: str | Path | None = None,
    jobs: int = 4,
) -> list[AnswerRecord]:
    """Collect one answer per (respondent, train/val question).

    ``endpoints`` is either one endpoint serving every respondent or a
    mapping from respondent name to endpoint. Answers already in the log
    are reused, so reruns only issue the missing calls; new answers are
    appended in deterministic (panel, question) order.
    """
    if isinstance(endpoints, Mapping):
        missing = [name for name in panel if name not in endpoints]
        if missing:
            raise ResponseError(f"no endpoint for respondent(s): {missing}")
        endpoint_of = dict(endpoints)
    else:
        endpoint_of = {name: endpoints for name in panel}

    question_ids = corpus.question_ids("train", "val")
    existing: dict[tuple[str, str], AnswerRecord] = {}
    log_file = Path(log_path) if log_path is not None else None
    if log_file is not None and log_file.exists():
        for rec in load_answer_log(log_file):
            existing[(rec.respondent, rec.question_id)] = rec

    tasks = [(name, qid) for name in panel for qid in question_ids]

    def run_task(task: tuple[str, str]) -> AnswerRecord:
        name, qid = task
        if task in existing:
            return existing[task]
        record = corpus[qid]
        answer = endpoint_of[name].answer(context=record.text, question=record.question)
        return AnswerRecord(name, qid, answer)

    results: list[AnswerRecord] = []
    append = log_file.open("a", encoding="utf-8") if log_file is not None else None
    try:
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            futures = [pool.submit(run_task, task) for task in tasks]
            for task, future in zip(tasks, futures):
                rec = future.result()
                if append is not None and task not in existing:
                    append.write(
                        json.dumps(
                            {
                                "respondent": rec.respondent,
                                "question_id": rec.question_id,
                                "answer_text": rec.answer_text,
                            },
                            ensure_ascii=False,
                            sort_keys=True,
                        )
                        + "\n"
                    )
                    append.flush()
                results.append(rec)
    finally:
        if append is not None:
            append.close()
    return results
