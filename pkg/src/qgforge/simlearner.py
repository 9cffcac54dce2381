"""Synthetic respondents and mock endpoints for oracle verification.

Everything here is driven by counter-based randomness: each decision is
a pure function of a seed and the entities involved (learner name,
question text, ...), so parallel schedules, reruns, and resumed runs
all see identical streams. Fidelity to real model behaviour is a
non-goal; these exist so the full pipeline and its evaluation surfaces
can be exercised and checked against closed-form expectations.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from qgforge.corpus import (
    AN_TOKEN,
    QU_TOKEN,
    Corpus,
    DifficultyLabel,
    NarrativeLabel,
    QARecord,
)
from qgforge.genclient import GeneratedPair, SamplingConfig
from qgforge.irt import rasch_prob
from qgforge.responses import ResponseMatrix

WRONG_ANSWER = "zzz unanswerable zzz"


class PromptParseError(ValueError):
    """A mock endpoint received a prompt matching none of the setups."""


@dataclass(frozen=True)
class SyntheticLearner:
    """A simulated respondent with a known ability on the logit scale."""

    name: str
    true_theta: float
    rng_seed: int = 0


def keyed_uniform(seed: int, *parts: str) -> float:
    """Deterministic uniform in [0, 1) keyed by seed and string parts."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(seed).encode())
    for part in parts:
        h.update(b"\x1f")
        h.update(part.encode())
    return int.from_bytes(h.digest(), "big") / 2.0**64


def simulate_responses(
    learners: Sequence[SyntheticLearner], true_b: Mapping[str, float]
) -> ResponseMatrix:
    """Forward-sample a complete binary matrix from the response model.

    Cell (i, j) is Bernoulli(P(correct | theta_i, b_j)), drawn from the
    keyed generator so the matrix is independent of iteration order.
    """
    if not learners or not true_b:
        raise ValueError("need at least one learner and one item")
    question_ids = sorted(true_b)
    cells = np.zeros((len(learners), len(question_ids)), dtype=np.int8)
    for i, learner in enumerate(learners):
        for j, qid in enumerate(question_ids):
            p = rasch_prob(learner.true_theta, true_b[qid])
            u = keyed_uniform(learner.rng_seed, learner.name, qid)
            cells[i, j] = 1 if u < p else 0
    return ResponseMatrix(
        tuple(l.name for l in learners), tuple(question_ids), cells
    )


class MockAnswerEngine:
    """Answering endpoint that knows the corpus ground truth.

    Replies with the ground-truth answer with probability
    P(correct | theta, b_true) and a fixed wrong string otherwise. The
    per-question difficulty comes from an explicit map, from the
    record's difficulty_value stretched onto ``value_range`` logits, or
    from a question-keyed draw when neither exists.
    """

    def __init__(
        self,
        profile: SyntheticLearner,
        corpus: Corpus,
        true_b: Mapping[str, float] | None = None,
        value_range: tuple[float, float] = (-3.0, 3.0),
        fallback_range: tuple[float, float] = (-2.0, 2.0),
    ):
        self.profile = profile
        self._by_question: dict[str, QARecord] = {}
        for rec in corpus:
            self._by_question.setdefault(rec.question, rec)
        self._true_b = dict(true_b) if true_b is not None else None
        self._value_range = value_range
        self._fallback_range = fallback_range

    def _difficulty_of(self, rec: QARecord) -> float:
        if self._true_b is not None and rec.question_id in self._true_b:
            return self._true_b[rec.question_id]
        if rec.difficulty_value is not None:
            lo, hi = self._value_range
            return lo + rec.difficulty_value * (hi - lo)
        lo, hi = self._fallback_range
        return lo + keyed_uniform(0, "item-difficulty", rec.question_id) * (hi - lo)

    def answer(self, context: str, question: str) -> str:
        rec = self._by_question.get(question)
        if rec is None:
            return WRONG_ANSWER
        p = rasch_prob(self.profile.true_theta, self._difficulty_of(rec))
        # keyed by question_id: the collect->score path then reproduces
        # simulate_responses() draw for draw
        u = keyed_uniform(self.profile.rng_seed, self.profile.name, rec.question_id)
        return rec.answer if u < p else WRONG_ANSWER


def mock_answer_engine(
    profile: SyntheticLearner, corpus: Corpus, true_b: Mapping[str, float] | None = None
) -> MockAnswerEngine:
    return MockAnswerEngine(profile, corpus, true_b)


class PairAnswerEngine:
    """Answering endpoint for generated pairs with difficulty-keyed skill.

    Correctness probability is P(correct | theta, b) with b looked up
    from the pair's requested difficulty label, so panel accuracy curves
    have closed-form expectations per level.
    """

    def __init__(
        self,
        profile: SyntheticLearner,
        pairs: Iterable[GeneratedPair],
        difficulty_logits: Mapping[str, float],
    ):
        self.profile = profile
        self._logits = dict(difficulty_logits)
        self._by_question: dict[str, GeneratedPair] = {}
        for pair in pairs:
            self._by_question.setdefault(pair.question, pair)

    def answer(self, context: str, question: str) -> str:
        pair = self._by_question.get(question)
        if pair is None or pair.requested_difficulty is None:
            return WRONG_ANSWER
        b = self._logits[pair.requested_difficulty.value]
        p = rasch_prob(self.profile.true_theta, b)
        u = keyed_uniform(self.profile.rng_seed, self.profile.name, question)
        return pair.answer if u < p else WRONG_ANSWER


def pair_answer_engine(
    profile: SyntheticLearner,
    pairs: Iterable[GeneratedPair],
    difficulty_logits: Mapping[str, float],
) -> PairAnswerEngine:
    return PairAnswerEngine(profile, pairs, difficulty_logits)


# --- mock generation ----------------------------------------------------

INTERROGATIVE_BY_NARRATIVE = {
    NarrativeLabel.CHARACTER: "Who",
    NarrativeLabel.SETTING: "Where",
    NarrativeLabel.ACTION: "What",
    NarrativeLabel.FEELING: "How",
    NarrativeLabel.CAUSAL: "Why",
    NarrativeLabel.OUTCOME: "What happened",
    NarrativeLabel.PREDICTION: "What will",
}

_FIRST_SENTENCE_NARRATIVES = frozenset(
    {NarrativeLabel.CHARACTER, NarrativeLabel.SETTING, NarrativeLabel.ACTION}
)

_PROMPT_RE = re.compile(
    r"^Generate a (?:(easy|medium|moderate|hard|extreme) )?question-answer pair"
    r"(?: about narrative label (\w+))? considering the following text: (.*)$",
    re.DOTALL,
)


def _sentences(text: str) -> list[str]:
    parts = re.split(r"(?<=[.!?])\s+", text.strip())
    return [p for p in parts if p.strip()] or [text.strip()]


def _sentence_for(text: str, narrative: NarrativeLabel) -> list[str]:
    sentences = _sentences(text)
    chosen = sentences[0] if narrative in _FIRST_SENTENCE_NARRATIVES else sentences[-1]
    return chosen.rstrip(".!?").split()


def narrative_question(text: str, narrative: NarrativeLabel, variant: int = 0) -> str:
    """Sentence-selection question template keyed by narrative class."""
    words = _sentence_for(text, narrative)
    start = variant % max(1, len(words) - 3)
    window = words[start : start + 4]
    return f"{INTERROGATIVE_BY_NARRATIVE[narrative]} {' '.join(window)}?"


def narrative_answer(text: str, narrative: NarrativeLabel, variant: int = 0) -> str:
    words = _sentence_for(text, narrative)
    take = 3 + (variant % 3)
    return " ".join(words[-take:])


def generic_question() -> str:
    return "What about this passage?"


def generic_answer(text: str) -> str:
    words = _sentences(text)[0].rstrip(".!?").split()
    return " ".join(words[-3:])


class MockGenerator:
    """Generation endpoint producing template pairs from the prompt's text.

    The requested controls are parsed back out of the prompt; the
    difficulty level shifts the excerpt windows so each level yields a
    distinct pair. An unparseable prompt is an error.
    """

    def __init__(self, corpus: Corpus | None = None):
        self._known_texts = {rec.text for rec in corpus} if corpus is not None else None
        self.calls = 0

    def generate(self, prompt: str, sampling: SamplingConfig) -> str:
        self.calls += 1
        match = _PROMPT_RE.match(prompt)
        if match is None:
            raise PromptParseError(f"prompt matches no known setup: {prompt[:80]!r}")
        difficulty_word, narrative_word, text = match.groups()
        if self._known_texts is not None and text not in self._known_texts:
            raise PromptParseError("prompt text does not belong to the corpus")

        variant = DifficultyLabel.parse(difficulty_word).index if difficulty_word else 0
        if narrative_word is not None:
            narrative = NarrativeLabel.parse(narrative_word)
        elif difficulty_word is not None:
            narrative = NarrativeLabel.ACTION  # neutral template for difficulty-only prompts
        else:
            return f"{QU_TOKEN} {generic_question()} {AN_TOKEN} {generic_answer(text)}"
        question = narrative_question(text, narrative, variant)
        answer = narrative_answer(text, narrative, variant)
        return f"{QU_TOKEN} {question} {AN_TOKEN} {answer}"


def mock_generator(corpus: Corpus | None = None) -> MockGenerator:
    return MockGenerator(corpus)


# --- synthetic corpus ---------------------------------------------------

_VOCAB = (
    "hare turtle fox wolf miller princess brook meadow castle forest "
    "lantern ribbon basket anvil orchard sparrow bridge village winter "
    "morning shepherd kettle thimble saddle chimney harvest garden "
    "raven cloak spindle mountain river daughter hunter bell loaf "
    "stone crown boat feather barrel candle mill road storm nest"
).split()

_NARRATIVE_CYCLE = tuple(NarrativeLabel)


def _synthetic_text(seed: int, section_key: str, n_sentences: int = 3, words_per: int = 11) -> str:
    sentences = []
    for si in range(n_sentences):
        words = []
        for wi in range(words_per):
            u = keyed_uniform(seed, "text", section_key, str(si), str(wi))
            words.append(_VOCAB[int(u * len(_VOCAB))])
        sentences.append(" ".join(words).capitalize() + ".")
    return " ".join(sentences)


def make_synthetic_corpus(
    n_train_sections: int = 12,
    n_val_sections: int = 4,
    n_test_sections: int = 8,
    qa_per_section: int = 3,
    seed: int = 0,
) -> Corpus:
    """A deterministic corpus whose ground truth uses the mock templates.

    Section ids are globally unique. Narrative labels cycle through all
    seven classes so every label is represented in every sizable split.
    """
    records: list[QARecord] = []
    cycle = 0
    for split, count in (("train", n_train_sections), ("val", n_val_sections),
                         ("test", n_test_sections)):
        for si in range(count):
            section_id = f"{split}-sec{si:04d}"
            story_id = f"{split}-story{si // 5:03d}"
            text = _synthetic_text(seed, section_id)
            for k in range(qa_per_section):
                narrative = _NARRATIVE_CYCLE[cycle % len(_NARRATIVE_CYCLE)]
                cycle += 1
                records.append(
                    QARecord(
                        story_id=story_id,
                        section_id=section_id,
                        text=text,
                        question=narrative_question(text, narrative),
                        answer=narrative_answer(text, narrative),
                        narrative=narrative,
                        split=split,
                        question_id=f"{section_id}-q{k}",
                    )
                )
    return Corpus(records)


def synthetic_item_difficulties(
    corpus: Corpus, seed: int = 0, spread: tuple[float, float] = (-2.5, 2.5)
) -> dict[str, float]:
    """Deterministic per-question true difficulties for train/val items."""
    lo, hi = spread
    return {
        qid: lo + keyed_uniform(seed, "true-b", qid) * (hi - lo)
        for qid in corpus.question_ids("train", "val")
    }
