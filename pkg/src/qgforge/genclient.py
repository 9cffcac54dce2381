"""Clients for generation and answering endpoints.

Wire protocol (shared with any server that wants to join the pipeline):

* ``POST /generate`` with JSON ``{"prompt": str, "sampling": {"top_k":
  int, "top_p": number, "temperature": number}}`` returns 200 with
  ``{"raw": str}``; errors are non-200 with ``{"error": str}``.
* ``POST /answer`` with ``{"context": str, "question": str}`` returns
  ``{"answer": str}``.

The environment variable ``QGFORGE_ENDPOINT`` supplies the default base
URL. Sampling parameters are passed through to the server; the client
does no decoding of its own.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, runtime_checkable

import requests

from qgforge.corpus import (
    AN_TOKEN,
    QU_TOKEN,
    Corpus,
    DataSetup,
    DifficultyLabel,
    DifficultyLabel3,
    NarrativeLabel,
    Section,
    render_prompt,
)

ENDPOINT_ENV_VAR = "QGFORGE_ENDPOINT"


class EndpointError(RuntimeError):
    """An endpoint could not be reached or replied out of protocol."""


class GenerationParseError(ValueError):
    """Raw endpoint output did not contain a parseable QA pair."""

    def __init__(self, message: str, raw: str):
        super().__init__(f"{message}; raw output: {raw!r}")
        self.raw = raw


@dataclass(frozen=True)
class SamplingConfig:
    """Sampling parameters forwarded verbatim to the generation server."""

    top_k: int = 50
    top_p: float = 0.9
    temperature: float = 1.2

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")

    def to_json(self) -> dict:
        return {"top_k": self.top_k, "top_p": self.top_p, "temperature": self.temperature}


@dataclass(frozen=True)
class GeneratedPair:
    """A parsed generation result with the controls that requested it."""

    section_id: str
    setup: DataSetup
    question: str
    answer: str
    raw_output: str
    requested_narrative: NarrativeLabel | None = None
    requested_difficulty: DifficultyLabel | DifficultyLabel3 | None = None

    def to_json(self) -> dict:
        return {
            "section_id": self.section_id,
            "setup": self.setup.value,
            "question": self.question,
            "answer": self.answer,
            "raw_output": self.raw_output,
            "requested_narrative": (
                None if self.requested_narrative is None else self.requested_narrative.value
            ),
            "requested_difficulty": (
                None if self.requested_difficulty is None else self.requested_difficulty.value
            ),
            "difficulty_levels": (
                None
                if self.requested_difficulty is None
                else len(type(self.requested_difficulty))
            ),
        }

    @classmethod
    def from_json(cls, row: dict) -> "GeneratedPair":
        difficulty = None
        if row.get("requested_difficulty") is not None:
            scheme = DifficultyLabel3 if row.get("difficulty_levels") == 3 else DifficultyLabel
            difficulty = scheme.parse(row["requested_difficulty"])
        narrative = None
        if row.get("requested_narrative") is not None:
            narrative = NarrativeLabel.parse(row["requested_narrative"])
        return cls(
            section_id=row["section_id"],
            setup=DataSetup.parse(row["setup"]),
            question=row["question"],
            answer=row["answer"],
            raw_output=row.get("raw_output", ""),
            requested_narrative=narrative,
            requested_difficulty=difficulty,
        )


@runtime_checkable
class GenerationEndpoint(Protocol):
    def generate(self, prompt: str, sampling: SamplingConfig) -> str: ...


@runtime_checkable
class AnsweringEndpoint(Protocol):
    def answer(self, context: str, question: str) -> str: ...


def parse_generated(raw: str) -> tuple[str, str]:
    """Split raw endpoint output into (question, answer).

    The question is the text between the first question sentinel and the
    first answer sentinel after it; the answer is everything after that
    answer sentinel, verbatim (later sentinels are payload).
    """
    qu = raw.find(QU_TOKEN)
    if qu < 0:
        raise GenerationParseError(f"missing {QU_TOKEN} token", raw)
    rest = raw[qu + len(QU_TOKEN) :]
    an = rest.find(AN_TOKEN)
    if an < 0:
        raise GenerationParseError(f"missing {AN_TOKEN} token", raw)
    question = rest[:an].strip()
    answer = rest[an + len(AN_TOKEN) :].strip()
    if not question:
        raise GenerationParseError("empty question segment", raw)
    if not answer:
        raise GenerationParseError("empty answer segment", raw)
    return question, answer


def default_base_url() -> str | None:
    return os.environ.get(ENDPOINT_ENV_VAR) or None


class _HttpClient:
    def __init__(self, base_url: str | None = None, timeout: float = 60.0, attempts: int = 3):
        base = base_url or default_base_url()
        if not base:
            raise EndpointError(
                f"no endpoint URL: pass one or set {ENDPOINT_ENV_VAR}"
            )
        self.base_url = base.rstrip("/")
        self.timeout = timeout
        self.attempts = attempts
        self._session = requests.Session()

    def _post(self, route: str, body: dict) -> dict:
        url = f"{self.base_url}{route}"
        last_error: Exception | None = None
        for attempt in range(self.attempts):
            try:
                resp = self._session.post(url, json=body, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                time.sleep(min(0.2 * 2**attempt, 2.0))
                continue
            if resp.status_code == 200:
                try:
                    return resp.json()
                except ValueError:
                    raise EndpointError(f"{url}: non-JSON 200 reply") from None
            detail = ""
            try:
                detail = resp.json().get("error", "")
            except ValueError:
                detail = resp.text[:200]
            if 500 <= resp.status_code < 600 and attempt + 1 < self.attempts:
                last_error = EndpointError(f"{url}: HTTP {resp.status_code} {detail}")
                time.sleep(min(0.2 * 2**attempt, 2.0))
                continue
            raise EndpointError(f"{url}: HTTP {resp.status_code} {detail}")
        raise EndpointError(f"{url}: unreachable after {self.attempts} attempts ({last_error})")


class HttpGenerationClient(_HttpClient):
    """Generation endpoint speaking the POST /generate protocol."""

    def generate(self, prompt: str, sampling: SamplingConfig) -> str:
        reply = self._post("/generate", {"prompt": prompt, "sampling": sampling.to_json()})
        raw = reply.get("raw")
        if not isinstance(raw, str):
            raise EndpointError(f"{self.base_url}/generate: reply lacks a string 'raw' field")
        return raw


class HttpAnswerClient(_HttpClient):
    """Answering endpoint speaking the POST /answer protocol."""

    def answer(self, context: str, question: str) -> str:
        reply = self._post("/answer", {"context": context, "question": question})
        answer = reply.get("answer")
        if not isinstance(answer, str):
            raise EndpointError(f"{self.base_url}/answer: reply lacks a string 'answer' field")
        return answer


def generate_for_section(
    section: Section,
    setup: DataSetup,
    endpoint: GenerationEndpoint,
    sampling: SamplingConfig,
    narrative: NarrativeLabel | None = None,
    difficulty: DifficultyLabel | DifficultyLabel3 | None = None,
    parse_retries: int = 3,
) -> GeneratedPair:
    """Render the setup's prompt, call the endpoint, and parse the reply.

    Parse failures are retried with fresh sampling up to ``parse_retries``
    times (sampled decoding does not guarantee the output format); the
    last raw output rides along on the final error.
    """
    prompt = render_prompt(section.text, setup, narrative, difficulty)
    last: GenerationParseError | None = None
    for _ in range(max(1, parse_retries)):
        raw = endpoint.generate(prompt, sampling)
        try:
            question, answer = parse_generated(raw)
        except GenerationParseError as exc:
            last = exc
            continue
        return GeneratedPair(
            section_id=section.section_id,
            setup=setup,
            question=question,
            answer=answer,
            raw_output=raw,
            requested_narrative=narrative,
            requested_difficulty=difficulty,
        )
    assert last is not None
    raise last


def _suite_tasks(
    corpus: Corpus, setup: DataSetup, scheme
) -> list[tuple[Section, NarrativeLabel | None, object]]:
    """The deterministic (section, narrative, difficulty) request plan.

    Difficulty-bearing setups request one pair per difficulty level per
    section. Narrative controls cycle through the section's distinct
    ground-truth narratives in sorted order; the narrative-only setup
    requests one pair per distinct ground-truth narrative.
    """
    sections = corpus.sections("test")
    if not sections:
        raise ValueError("test split has no sections")
    tasks: list[tuple[Section, NarrativeLabel | None, object]] = []
    for section in sections:
        narratives = sorted({r.narrative for r in section.records}, key=lambda n: n.value)
        if setup.uses_difficulty:
            for i, level in enumerate(scheme):
                narrative = narratives[i % len(narratives)] if setup.uses_narrative else None
                tasks.append((section, narrative, level))
        elif setup.uses_narrative:
            for narrative in narratives:
                tasks.append((section, narrative, None))
        else:
            tasks.append((section, None, None))
    return tasks


def _task_key(section_id: str, setup: DataSetup, narrative, difficulty) -> tuple:
    return (
        section_id,
        setup.value,
        None if narrative is None else narrative.value,
        None if difficulty is None else difficulty.value,
    )


def load_pairs(path: str | Path) -> list[GeneratedPair]:
    """Load a generated-pairs JSONL file."""
    pairs = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                pairs.append(GeneratedPair.from_json(json.loads(line)))
    return pairs


def save_pairs(pairs: Iterable[GeneratedPair], path: str | Path) -> int:
    path = Path(path)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair.to_json(), ensure_ascii=False, sort_keys=True) + "\n")
            count += 1
    return count


def run_generation_suite(
    corpus: Corpus,
    setup: DataSetup,
    endpoint: GenerationEndpoint,
    sampling: SamplingConfig,
    scheme=DifficultyLabel,
    out_path: str | Path | None = None,
    jobs: int = 4,
    parse_retries: int = 3,
) -> list[GeneratedPair]:
    """Generate the full pair suite over the test split.

    Output order is deterministic: sections by (story_id, section_id),
    then difficulty level. Requests run on a bounded pool but results
    are committed in plan order, so an ``out_path`` log is an exact
    resumable prefix: pairs already present there are not re-requested.
    """
    tasks = _suite_tasks(corpus, setup, scheme)

    done: dict[tuple, GeneratedPair] = {}
    out_file = Path(out_path) if out_path is not None else None
    if out_file is not None and out_file.exists():
        for pair in load_pairs(out_file):
            key = _task_key(
                pair.section_id, pair.setup, pair.requested_narrative, pair.requested_difficulty
            )
            done[key] = pair

    def run_task(task) -> GeneratedPair:
        section, narrative, difficulty = task
        key = _task_key(section.section_id, setup, narrative, difficulty)
        if key in done:
            return done[key]
        return generate_for_section(
            section, setup, endpoint, sampling, narrative, difficulty, parse_retries
        )

    results: list[GeneratedPair] = []
    append = out_file.open("a", encoding="utf-8") if out_file is not None else None
    try:
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            futures = [pool.submit(run_task, task) for task in tasks]
            for task, future in zip(tasks, futures):
                pair = future.result()
                key = _task_key(pair.section_id, setup, pair.requested_narrative,
                                pair.requested_difficulty)
                if append is not None and key not in done:
                    append.write(json.dumps(pair.to_json(), ensure_ascii=False, sort_keys=True) + "\n")
                    append.flush()
                results.append(pair)
    finally:
        if append is not None:
            append.close()
    return results


def verify_wire_contract(
    base_url: str,
    check_generate: bool = True,
    check_answer: bool = True,
    sampling: SamplingConfig | None = None,
) -> list[str]:
    """Contract fixtures for any server claiming the wire protocol.

    Returns a list of human-readable failures (empty = conformant).
    Exercised against the in-process mocks in this package's own test
    suite and unchanged against external servers.
    """
    failures: list[str] = []
    sampling = sampling or SamplingConfig()
    base = base_url.rstrip("/")

    if check_generate:
        try:
            client = HttpGenerationClient(base)
            raw = client.generate(
                render_prompt(
                    "Once there were a hare and a turtle.",
                    DataSetup.NAR_DIF_TEXT_QA,
                    NarrativeLabel.CHARACTER,
                    DifficultyLabel.EASY,
                ),
                sampling,
            )
            question, answer = parse_generated(raw)
            if not question.strip() or not answer.strip():
                failures.append("generate: parsed question or answer is empty")
        except (EndpointError, GenerationParseError) as exc:
            failures.append(f"generate: {exc}")

    if check_answer:
        try:
            client = HttpAnswerClient(base)
            reply = client.answer(
                context="Once there were a hare and a turtle.",
                question="Who raced the turtle?",
            )
            if not reply.strip():
                failures.append("answer: empty answer string")
        except EndpointError as exc:
            failures.append(f"answer: {exc}")

    # Malformed bodies must yield a 4xx with a JSON error field.
    malformed: list[tuple[str, dict]] = []
    if check_generate:
        malformed.append(("/generate", {"nonsense": 1}))
    if check_answer:
        malformed.append(("/answer", {"context": "x"}))
    for route, body in malformed:
        try:
            resp = requests.post(f"{base}{route}", json=body, timeout=30)
        except requests.RequestException as exc:
            failures.append(f"{route}: unreachable ({exc})")
            continue
        if not 400 <= resp.status_code < 500:
            failures.append(f"{route}: malformed body gave HTTP {resp.status_code}, want 4xx")
            continue
        try:
            if "error" not in resp.json():
                failures.append(f"{route}: 4xx reply lacks an 'error' field")
        except ValueError:
            failures.append(f"{route}: 4xx reply is not JSON")
    return failures
