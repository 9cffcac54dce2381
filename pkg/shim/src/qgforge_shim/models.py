"""Model loading and inference backends.

Two backends cover the wire protocol: a seq2seq generator (sampled
decoding with the request's top-k/top-p/temperature) and an extractive
answerer (argmax start/end span over the context). Both load Hugging
Face models by identifier; the ``tiny-random:<seed>`` spec instead
constructs a small random-weight model with a local word-level
tokenizer so the shim runs fully offline.
"""

from __future__ import annotations

import torch

QU_TOKEN = "⟨QU⟩"
AN_TOKEN = "⟨AN⟩"

TINY_PREFIX = "tiny-random"

_TINY_WORDS = (
    "the a an and was were had has his her their once there hare turtle fox "
    "wolf miller princess brook meadow castle forest lantern ribbon basket "
    "morning winter road river mountain garden who what where when why how "
    "ran slept walked found lost kept gave took said asked answered won"
).split()


class ModelLoadError(RuntimeError):
    """A configured model could not be constructed or fetched."""


def _tiny_tokenizer():
    from tokenizers import Tokenizer, models as tok_models, pre_tokenizers
    from transformers import PreTrainedTokenizerFast

    words = ["<pad>", "</s>", "<unk>", QU_TOKEN, AN_TOKEN, *_TINY_WORDS]
    vocab = {word: i for i, word in enumerate(words)}
    tokenizer = Tokenizer(tok_models.WordLevel(vocab, unk_token="<unk>"))
    tokenizer.pre_tokenizer = pre_tokenizers.Whitespace()
    return PreTrainedTokenizerFast(
        tokenizer_object=tokenizer,
        pad_token="<pad>",
        eos_token="</s>",
        unk_token="<unk>",
    )


def _tiny_seed(spec: str) -> int:
    _, _, seed = spec.partition(":")
    return int(seed) if seed else 0


def _load_seq2seq(spec: str, device: str):
    if spec.startswith(TINY_PREFIX):
        from transformers import T5Config, T5ForConditionalGeneration

        tokenizer = _tiny_tokenizer()
        torch.manual_seed(_tiny_seed(spec))
        config = T5Config(
            vocab_size=len(tokenizer),
            d_model=32,
            d_kv=8,
            d_ff=64,
            num_layers=2,
            num_heads=2,
            decoder_start_token_id=tokenizer.pad_token_id,
            pad_token_id=tokenizer.pad_token_id,
            eos_token_id=tokenizer.eos_token_id,
        )
        model = T5ForConditionalGeneration(config)
    else:
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        try:
            tokenizer = AutoTokenizer.from_pretrained(spec)
            model = AutoModelForSeq2SeqLM.from_pretrained(spec)
        except Exception as exc:
            raise ModelLoadError(f"cannot load seq2seq model {spec!r}: {exc}") from exc
    return tokenizer, model.to(device).eval()


def _load_qa(spec: str, device: str):
    if spec.startswith(TINY_PREFIX):
        from transformers import DistilBertConfig, DistilBertForQuestionAnswering

        tokenizer = _tiny_tokenizer()
        torch.manual_seed(_tiny_seed(spec))
        config = DistilBertConfig(
            vocab_size=len(tokenizer),
            dim=32,
            hidden_dim=64,
            n_layers=2,
            n_heads=2,
            pad_token_id=tokenizer.pad_token_id,
        )
        model = DistilBertForQuestionAnswering(config)
    else:
        from transformers import AutoModelForQuestionAnswering, AutoTokenizer

        try:
            tokenizer = AutoTokenizer.from_pretrained(spec)
            model = AutoModelForQuestionAnswering.from_pretrained(spec)
        except Exception as exc:
            raise ModelLoadError(f"cannot load QA model {spec!r}: {exc}") from exc
    return tokenizer, model.to(device).eval()


class Seq2SeqGenerator:
    """Sampled seq2seq decoding with per-request sampling parameters."""

    def __init__(self, spec: str, device: str = "cpu",
                 max_input_tokens: int = 512, max_new_tokens: int = 64,
                 min_new_tokens: int = 4):
        self.tokenizer, self.model = _load_seq2seq(spec, device)
        self.device = device
        self.max_input_tokens = max_input_tokens
        self.max_new_tokens = max_new_tokens
        self.min_new_tokens = min_new_tokens

    def generate(self, prompt: str, top_k: int, top_p: float, temperature: float) -> str:
        inputs = self.tokenizer(
            prompt,
            return_tensors="pt",
            truncation=True,
            max_length=self.max_input_tokens,
        ).to(self.device)
        with torch.no_grad():
            output = self.model.generate(
                **inputs,
                do_sample=True,
                top_k=top_k,
                top_p=top_p,
                temperature=temperature,
                max_new_tokens=self.max_new_tokens,
                min_new_tokens=self.min_new_tokens,
            )
        # the QU/AN sentinels are ordinary vocabulary entries, so they
        # survive special-token stripping while pad/eos noise does not
        return self.tokenizer.decode(output[0], skip_special_tokens=True).strip()


class ExtractiveAnswerer:
    """Argmax start/end span extraction restricted to the context."""

    def __init__(self, spec: str, device: str = "cpu", max_input_tokens: int = 512):
        self.tokenizer, self.model = _load_qa(spec, device)
        self.device = device
        self.max_input_tokens = max_input_tokens

    def answer(self, context: str, question: str) -> str:
        encoded = self.tokenizer(
            question,
            context,
            return_tensors="pt",
            return_offsets_mapping=True,
            truncation=True,
            max_length=self.max_input_tokens,
        )
        offsets = encoded.pop("offset_mapping")[0].tolist()
        sequence_ids = encoded.sequence_ids(0)
        encoded = encoded.to(self.device)
        with torch.no_grad():
            result = self.model(**encoded)

        context_positions = [i for i, sid in enumerate(sequence_ids) if sid == 1]
        if not context_positions:
            return context.split()[0] if context.split() else context
        start_logits = result.start_logits[0]
        end_logits = result.end_logits[0]
        start = max(context_positions, key=lambda i: float(start_logits[i]))
        end = max(
            [i for i in context_positions if i >= start],
            key=lambda i: float(end_logits[i]),
        )
        span = context[offsets[start][0] : offsets[end][1]].strip()
        if not span:
            words = context.split()
            span = words[0] if words else context
        return span
