"""Shared fixtures: a tiny hand-written corpus and a synthetic one."""

from __future__ import annotations

import pytest

from qgforge.corpus import Corpus, NarrativeLabel, QARecord
from qgforge.simlearner import make_synthetic_corpus


def _record(
    qid: str,
    split: str = "train",
    narrative: NarrativeLabel = NarrativeLabel.CHARACTER,
    **overrides,
) -> QARecord:
    fields = dict(
        story_id="story-1",
        section_id=f"sec-{qid}",
        text="Once there were a hare and a turtle. The hare was proud of his speed.",
        question="Who challenged the turtle to a race?",
        answer="The hare",
        narrative=narrative,
        split=split,
        question_id=qid,
    )
    fields.update(overrides)
    return QARecord(**fields)


@pytest.fixture
def record_factory():
    return _record


@pytest.fixture
def tiny_corpus() -> Corpus:
    return Corpus(
        [
            _record("q1", "train", NarrativeLabel.CHARACTER),
            _record(
                "q2",
                "train",
                NarrativeLabel.CAUSAL,
                question="Why did the hare rest?",
                answer="He was proud of his speed",
            ),
            _record(
                "q3",
                "val",
                NarrativeLabel.OUTCOME,
                question="What happened after the race?",
                answer="The turtle won the race",
            ),
            _record(
                "q4",
                "test",
                NarrativeLabel.SETTING,
                section_id="sec-test",
                question="Where did the race happen?",
                answer="On the meadow road",
            ),
        ]
    )


@pytest.fixture(scope="session")
def synthetic_corpus() -> Corpus:
    return make_synthetic_corpus(
        n_train_sections=10, n_val_sections=4, n_test_sections=6, seed=11
    )
