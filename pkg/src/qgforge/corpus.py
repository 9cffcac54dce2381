"""Narrative QA corpus: records, labels, data setups, and file formats.

A corpus is an immutable collection of question-answer records, each
tied to a story section and annotated with one of seven narrative
labels. Calibration adds a difficulty label plus its normalized value
to the train/val records; the four data setups then decide which of
the control attributes appear in a rendered model input.

Corpus files are UTF-8 with columns ``story_id, section_id, text,
question, answer, narrative, split`` plus optional ``difficulty_value,
difficulty`` (and optional ``question_id``; synthesized from position
when absent). Both delimited tables (.csv/.tsv) and record-per-line
JSON (.jsonl) are accepted.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Iterator, Mapping

if TYPE_CHECKING:
    from qgforge.irt import RaschCalibration

QU_TOKEN = "⟨QU⟩"
AN_TOKEN = "⟨AN⟩"

SPLITS = ("train", "val", "test")


class CorpusError(ValueError):
    """Raised for malformed corpus files or records."""


class LabelError(CorpusError):
    """Raised when a label string cannot be parsed."""


class NarrativeLabel(enum.Enum):
    """The seven narrative categories a question can target."""

    CHARACTER = "character"
    SETTING = "setting"
    ACTION = "action"
    FEELING = "feeling"
    CAUSAL = "causal"
    OUTCOME = "outcome"
    PREDICTION = "prediction"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, raw: str) -> "NarrativeLabel":
        """Parse a label string, accepting the long annotation forms."""
        key = raw.strip().lower().replace(" ", "").replace("_", "")
        try:
            return _NARRATIVE_ALIASES[key]
        except KeyError:
            raise LabelError(f"unknown narrative label: {raw!r}") from None


_NARRATIVE_ALIASES: dict[str, NarrativeLabel] = {
    **{label.value: label for label in NarrativeLabel},
    "causalrelationship": NarrativeLabel.CAUSAL,
    "outcomeresolution": NarrativeLabel.OUTCOME,
}


class _OrderedLabel(enum.Enum):
    """String-valued enum ordered by declaration position."""

    def __str__(self) -> str:
        return self.value

    @property
    def index(self) -> int:
        return list(type(self)).index(self)

    def __lt__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.index < other.index

    def __le__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.index <= other.index

    def __gt__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.index > other.index

    def __ge__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.index >= other.index

    @classmethod
    def parse(cls, raw: str):
        key = raw.strip().lower()
        for label in cls:
            if label.value == key:
                return label
        raise LabelError(f"unknown {cls.__name__} value: {raw!r}")


class DifficultyLabel(_OrderedLabel):
    """Five-level difficulty scale, easiest first."""

    EASY = "easy"
    MEDIUM = "medium"
    MODERATE = "moderate"
    HARD = "hard"
    EXTREME = "extreme"


class DifficultyLabel3(_OrderedLabel):
    """Three-level regrouped scale: medium absorbs moderate and hard."""

    EASY = "easy"
    MEDIUM = "medium"
    EXTREME = "extreme"


def regroup_difficulty(label: DifficultyLabel) -> DifficultyLabel3:
    """Map the five-level scale onto the three-level one."""
    if label is DifficultyLabel.EASY:
        return DifficultyLabel3.EASY
    if label is DifficultyLabel.EXTREME:
        return DifficultyLabel3.EXTREME
    return DifficultyLabel3.MEDIUM


def difficulty_scheme(levels: int):
    """The label enum for a 5- or 3-level difficulty scheme."""
    if levels == 5:
        return DifficultyLabel
    if levels == 3:
        return DifficultyLabel3
    raise ValueError(f"difficulty scheme must have 5 or 3 levels, got {levels}")


class DataSetup(enum.Enum):
    """Which control attributes a rendered model input carries."""

    TEXT_QA = "text"
    NAR_TEXT_QA = "nar"
    DIF_TEXT_QA = "dif"
    NAR_DIF_TEXT_QA = "nardif"

    def __str__(self) -> str:
        return self.value

    @property
    def uses_narrative(self) -> bool:
        return self in (DataSetup.NAR_TEXT_QA, DataSetup.NAR_DIF_TEXT_QA)

    @property
    def uses_difficulty(self) -> bool:
        return self in (DataSetup.DIF_TEXT_QA, DataSetup.NAR_DIF_TEXT_QA)

    @classmethod
    def parse(cls, raw: str) -> "DataSetup":
        key = raw.strip().lower()
        for setup in cls:
            if setup.value == key or setup.name.lower() == key:
                return setup
        raise LabelError(f"unknown data setup: {raw!r}")


@dataclass(frozen=True)
class QARecord:
    """One corpus instance: a section text with a QA pair and its labels."""

    story_id: str
    section_id: str
    text: str
    question: str
    answer: str
    narrative: NarrativeLabel
    split: str
    question_id: str
    difficulty: DifficultyLabel | None = None
    difficulty_value: float | None = None

    def validate(self) -> None:
        for field in ("text", "question", "answer"):
            if not getattr(self, field).strip():
                raise CorpusError(f"record {self.question_id!r}: empty {field}")
        if self.split not in SPLITS:
            raise CorpusError(
                f"record {self.question_id!r}: split must be one of {SPLITS}, got {self.split!r}"
            )
        if (self.difficulty is None) != (self.difficulty_value is None):
            raise CorpusError(
                f"record {self.question_id!r}: difficulty and difficulty_value "
                "must both be present or both absent"
            )
        if self.difficulty_value is not None and not 0.0 <= self.difficulty_value <= 1.0:
            raise CorpusError(
                f"record {self.question_id!r}: difficulty_value {self.difficulty_value} "
                "outside [0, 1]"
            )


@dataclass(frozen=True)
class Section:
    """A story section together with its ground-truth records."""

    story_id: str
    section_id: str
    text: str
    records: tuple[QARecord, ...]


class Corpus:
    """Immutable, validated collection of QARecords grouped by split."""

    def __init__(self, records: Iterable[QARecord]):
        self._records = tuple(records)
        seen: dict[str, QARecord] = {}
        for rec in self._records:
            rec.validate()
            if rec.question_id in seen:
                raise CorpusError(f"duplicate question_id: {rec.question_id!r}")
            seen[rec.question_id] = rec
        self._by_id = seen

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[QARecord]:
        return iter(self._records)

    @property
    def records(self) -> tuple[QARecord, ...]:
        return self._records

    def __getitem__(self, question_id: str) -> QARecord:
        try:
            return self._by_id[question_id]
        except KeyError:
            raise KeyError(f"unknown question_id: {question_id!r}") from None

    def __contains__(self, question_id: str) -> bool:
        return question_id in self._by_id

    def split(self, name: str) -> tuple[QARecord, ...]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return tuple(r for r in self._records if r.split == name)

    def question_ids(self, *splits: str) -> list[str]:
        """Sorted question ids, optionally restricted to the given splits."""
        wanted = set(splits) if splits else set(SPLITS)
        return sorted(r.question_id for r in self._records if r.split in wanted)

    def sections(self, split: str) -> list[Section]:
        """Sections of a split, ordered by (story_id, section_id)."""
        grouped: dict[tuple[str, str], list[QARecord]] = {}
        for rec in self._records:
            if rec.split == split:
                grouped.setdefault((rec.story_id, rec.section_id), []).append(rec)
        return [
            Section(story_id=k[0], section_id=k[1], text=v[0].text, records=tuple(v))
            for k, v in sorted(grouped.items())
        ]

    def label_counts(
        self, *splits: str
    ) -> dict[tuple[NarrativeLabel, DifficultyLabel | None], int]:
        """Histogram of (narrative, difficulty) cells over the given splits."""
        wanted = set(splits) if splits else set(SPLITS)
        counts: dict[tuple[NarrativeLabel, DifficultyLabel | None], int] = {}
        for rec in self._records:
            if rec.split in wanted:
                key = (rec.narrative, rec.difficulty)
                counts[key] = counts.get(key, 0) + 1
        return counts


_REQUIRED_COLUMNS = ("story_id", "section_id", "text", "question", "answer", "narrative", "split")


def _record_from_row(row: Mapping[str, object], row_no: int, fallback_id: str) -> QARecord:
    def text_field(name: str) -> str:
        value = row.get(name)
        if value is None:
            raise CorpusError(f"row {row_no}: missing field {name!r}")
        return str(value)

    try:
        narrative = NarrativeLabel.parse(text_field("narrative"))
    except LabelError as exc:
        raise CorpusError(f"row {row_no}: {exc}") from None

    difficulty_raw = row.get("difficulty")
    value_raw = row.get("difficulty_value")
    difficulty = None
    difficulty_value = None
    if difficulty_raw not in (None, ""):
        try:
            difficulty = DifficultyLabel.parse(str(difficulty_raw))
        except LabelError as exc:
            raise CorpusError(f"row {row_no}: {exc}") from None
    if value_raw not in (None, ""):
        try:
            difficulty_value = float(value_raw)  # type: ignore[arg-type]
        except (TypeError, ValueError):
            raise CorpusError(f"row {row_no}: bad difficulty_value {value_raw!r}") from None

    question_id = str(row.get("question_id") or "") or fallback_id
    record = QARecord(
        story_id=text_field("story_id"),
        section_id=text_field("section_id"),
        text=text_field("text"),
        question=text_field("question"),
        answer=text_field("answer"),
        narrative=narrative,
        split=text_field("split").strip().lower(),
        question_id=question_id,
        difficulty=difficulty,
        difficulty_value=difficulty_value,
    )
    try:
        record.validate()
    except CorpusError as exc:
        raise CorpusError(f"row {row_no}: {exc}") from None
    return record


def _iter_rows(path: Path, fmt: str) -> Iterator[Mapping[str, object]]:
    if fmt == "jsonl":
        with path.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"line {line_no}: invalid JSON ({exc.msg})") from None
                if not isinstance(row, dict):
                    raise CorpusError(f"line {line_no}: expected an object")
                yield row
    else:
        delimiter = "\t" if fmt == "tsv" else ","
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh, delimiter=delimiter)
            header = reader.fieldnames or []
            missing = [c for c in _REQUIRED_COLUMNS if c not in header]
            if missing:
                raise CorpusError(f"{path.name}: missing required columns {missing}")
            yield from reader


def detect_format(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix in (".jsonl", ".ndjson"):
        return "jsonl"
    if suffix == ".tsv":
        return "tsv"
    if suffix == ".csv":
        return "csv"
    raise CorpusError(f"cannot infer corpus format from {path.name!r}; pass format explicitly")


def load_corpus(path: str | Path, format: str = "auto") -> Corpus:
    """Load and validate a corpus file.

    ``format`` is one of ``csv``, ``tsv``, ``jsonl``, or ``auto``
    (inferred from the extension). Rows violating record invariants are
    reported with their row number; all offending rows are listed.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    fmt = detect_format(path) if format == "auto" else format
    if fmt not in ("csv", "tsv", "jsonl"):
        raise CorpusError(f"unknown corpus format {format!r}")

    records: list[QARecord] = []
    errors: list[str] = []
    for row_no, row in enumerate(_iter_rows(path, fmt), 1):
        fallback_id = f"{row.get('story_id', '?')}:{row.get('section_id', '?')}:{row_no}"
        try:
            records.append(_record_from_row(row, row_no, fallback_id))
        except CorpusError as exc:
            errors.append(str(exc))
    if errors:
        raise CorpusError(f"{path.name}: {len(errors)} bad row(s):\n  " + "\n  ".join(errors))
    try:
        return Corpus(records)
    except CorpusError as exc:
        raise CorpusError(f"{path.name}: {exc}") from None


def save_corpus(corpus: Corpus, path: str | Path) -> int:
    """Write a corpus file (format from extension); returns record count."""
    path = Path(path)
    fmt = detect_format(path)
    columns = list(_REQUIRED_COLUMNS) + ["question_id", "difficulty_value", "difficulty"]

    def row_of(rec: QARecord) -> dict[str, object]:
        return {
            "story_id": rec.story_id,
            "section_id": rec.section_id,
            "text": rec.text,
            "question": rec.question,
            "answer": rec.answer,
            "narrative": rec.narrative.value,
            "split": rec.split,
            "question_id": rec.question_id,
            "difficulty_value": "" if rec.difficulty_value is None else repr(rec.difficulty_value),
            "difficulty": "" if rec.difficulty is None else rec.difficulty.value,
        }

    if fmt == "jsonl":
        with path.open("w", encoding="utf-8") as fh:
            for rec in corpus:
                row = row_of(rec)
                if rec.difficulty is None:
                    row.pop("difficulty")
                    row.pop("difficulty_value")
                else:
                    row["difficulty_value"] = rec.difficulty_value
                fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    else:
        delimiter = "\t" if fmt == "tsv" else ","
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns, delimiter=delimiter)
            writer.writeheader()
            for rec in corpus:
                writer.writerow(row_of(rec))
    return len(corpus)


def augment_corpus(corpus: Corpus, calibration: "RaschCalibration") -> Corpus:
    """Attach calibrated difficulty labels and values to train/val records.

    Test records are left untouched. Every train/val question id must be
    present in the calibration.
    """
    needed = [r.question_id for r in corpus if r.split in ("train", "val")]
    missing = [qid for qid in needed if qid not in calibration.normalized]
    if missing:
        raise CorpusError(
            f"calibration missing {len(missing)} question id(s): {sorted(missing)[:10]}"
        )
    out = []
    for rec in corpus:
        if rec.split in ("train", "val"):
            out.append(
                replace(
                    rec,
                    difficulty_value=calibration.normalized[rec.question_id],
                    difficulty=calibration.labels[rec.question_id],
                )
            )
        else:
            out.append(rec)
    return Corpus(out)


_PROMPTS = {
    DataSetup.TEXT_QA: "Generate a question-answer pair considering the following text: {t}",
    DataSetup.NAR_TEXT_QA: (
        "Generate a question-answer pair about narrative label {n} "
        "considering the following text: {t}"
    ),
    DataSetup.DIF_TEXT_QA: (
        "Generate a {d} question-answer pair considering the following text: {t}"
    ),
    DataSetup.NAR_DIF_TEXT_QA: (
        "Generate a {d} question-answer pair about narrative label {n} "
        "considering the following text: {t}"
    ),
}


def render_prompt(
    text: str,
    setup: DataSetup,
    narrative: NarrativeLabel | None = None,
    difficulty: DifficultyLabel | DifficultyLabel3 | None = None,
) -> str:
    """Render a generation prompt for the given setup and control attributes.

    Controls must match the setup exactly: a control the setup does not
    render is rejected rather than silently dropped, so a recorded
    control always appears in the prompt that carried it.
    """
    if setup.uses_narrative and narrative is None:
        raise ValueError(f"setup {setup} requires a narrative label")
    if setup.uses_difficulty and difficulty is None:
        raise ValueError(f"setup {setup} requires a difficulty label")
    if not setup.uses_narrative and narrative is not None:
        raise ValueError(f"setup {setup} does not render a narrative control")
    if not setup.uses_difficulty and difficulty is not None:
        raise ValueError(f"setup {setup} does not render a difficulty control")
    return _PROMPTS[setup].format(
        t=text,
        n=narrative.value if narrative is not None else "",
        d=difficulty.value if difficulty is not None else "",
    )


def render_input(record: QARecord, setup: DataSetup) -> str:
    """Render the model input for a record under a data setup."""
    if setup.uses_difficulty and record.difficulty is None:
        raise ValueError(
            f"setup {setup} requires difficulty, but record {record.question_id!r} has none"
        )
    return render_prompt(
        record.text,
        setup,
        record.narrative if setup.uses_narrative else None,
        record.difficulty if setup.uses_difficulty else None,
    )


def render_target(record: QARecord) -> str:
    """Render the generation target: sentinel-delimited question and answer."""
    for field in ("question", "answer"):
        payload = getattr(record, field)
        for token in (QU_TOKEN, AN_TOKEN):
            if token in payload:
                raise CorpusError(
                    f"record {record.question_id!r}: reserved token {token} in {field}"
                )
    return f"{QU_TOKEN} {record.question} {AN_TOKEN} {record.answer}"


def export_training_file(
    corpus: Corpus, setup: DataSetup, path: str | Path, split: str = "train"
) -> int:
    """Write one JSONL line per record with ``input`` and ``target`` fields.

    Returns the number of lines written. Setups that use difficulty
    require the split's records to be augmented first.
    """
    records = corpus.split(split)
    if setup.uses_difficulty:
        missing = [r.question_id for r in records if r.difficulty is None]
        if missing:
            raise CorpusError(
                f"setup {setup} needs an augmented corpus; {len(missing)} {split} "
                f"record(s) lack difficulty (e.g. {missing[:5]})"
            )
    path = Path(path)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            line = {"input": render_input(rec, setup), "target": render_target(rec)}
            fh.write(json.dumps(line, ensure_ascii=False, sort_keys=True) + "\n")
            count += 1
    return count
