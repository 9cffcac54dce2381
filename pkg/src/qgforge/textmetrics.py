"""Deterministic text metrics shared by scoring and evaluation.

All metrics run on one canonical tokenization so scores are
reproducible bit-for-bit: lowercase, drop every Unicode punctuation
character, split on whitespace. ROUGE-L and exact match are therefore
lenient to casing and surrounding punctuation, matching common usage of
both metrics.
"""

from __future__ import annotations

import unicodedata

from qgforge import kernels

INTERROGATIVES = ("what", "who", "why", "how", "where", "when", "which")
_INTERROGATIVE_SET = frozenset(INTERROGATIVES)


class _PunctTable(dict):
    """Lazy str.translate table dropping Unicode punctuation (category P*)."""

    def __missing__(self, cp: int):
        repl = None if unicodedata.category(chr(cp)).startswith("P") else cp
        self[cp] = repl
        return repl


_PUNCT_TABLE = _PunctTable()


def tokenize(text: str) -> list[str]:
    """Canonical tokenizer: lowercase, strip punctuation, split on whitespace."""
    return text.lower().translate(_PUNCT_TABLE).split()


def word_count(text: str) -> int:
    """Token count under the canonical tokenizer."""
    return len(tokenize(text))


def _token_ids(ref_tokens: list[str], cand_tokens: list[str]) -> tuple[list[int], list[int]]:
    ids: dict[str, int] = {}
    for tok in ref_tokens:
        if tok not in ids:
            ids[tok] = len(ids)
    for tok in cand_tokens:
        if tok not in ids:
            ids[tok] = len(ids)
    return [ids[t] for t in ref_tokens], [ids[t] for t in cand_tokens]


def rouge_l_f1(reference: str, candidate: str) -> float:
    """ROUGE-L F1 between two strings.

    With L the LCS length over token sequences, precision is L/|cand|,
    recall is L/|ref|, and F1 = 2PR/(P+R), computed here in the
    algebraically equal form 2L/(|ref|+|cand|) so boundary cases come
    out exact in floating point. Returns 0.0 when either side is empty
    or the sequences share no subsequence.
    """
    ref_tokens = tokenize(reference)
    cand_tokens = tokenize(candidate)
    if not ref_tokens or not cand_tokens:
        return 0.0
    ref_ids, cand_ids = _token_ids(ref_tokens, cand_tokens)
    lcs = kernels.lcs_length(ref_ids, cand_ids)
    if lcs == 0:
        return 0.0
    return 2.0 * lcs / (len(ref_tokens) + len(cand_tokens))


def exact_match(reference: str, candidate: str) -> int:
    """1 iff the canonical token sequences are equal, else 0."""
    return int(tokenize(reference) == tokenize(candidate))


def _ngram_set(tokens: list[str], n: int) -> set[tuple[str, ...]]:
    return {tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)}


def pinc(source: str, generated: str, max_n: int = 3, *, only_max: bool = False) -> float:
    """PINC n-gram novelty of ``generated`` relative to ``source``.

    For each n the novelty is the fraction of the generated text's
    distinct n-grams absent from the source. The score is the mean over
    n = 1..max_n; n-levels where the generated text has no n-grams are
    skipped, and the score is 0.0 if no level contributes. With
    ``only_max=True`` only the n = max_n level is used (the alternative
    reading of "n-gram novelty at n").
    """
    if max_n < 1:
        raise ValueError(f"max_n must be >= 1, got {max_n}")
    src_tokens = tokenize(source)
    gen_tokens = tokenize(generated)
    levels = [max_n] if only_max else range(1, max_n + 1)
    novelties = []
    for n in levels:
        gen_ngrams = _ngram_set(gen_tokens, n)
        if not gen_ngrams:
            continue
        src_ngrams = _ngram_set(src_tokens, n)
        novelties.append(1.0 - len(gen_ngrams & src_ngrams) / len(gen_ngrams))
    if not novelties:
        return 0.0
    return sum(novelties) / len(novelties)


def initial_interrogative(question: str) -> str:
    """Class of the question's first token: one of INTERROGATIVES or "other"."""
    tokens = tokenize(question)
    if tokens and tokens[0] in _INTERROGATIVE_SET:
        return tokens[0]
    return "other"
