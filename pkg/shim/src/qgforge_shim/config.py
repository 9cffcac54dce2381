"""Shim configuration: which models to serve, where, and how."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Raised for unusable shim configuration files."""


@dataclass
class ShimConfig:
    """One shim process: one generation model plus a respondent panel.

    Model specs are Hugging Face identifiers or local paths; the special
    form ``tiny-random:<seed>`` builds a small random-weight model with
    a self-contained tokenizer, for offline smoke tests and CI.
    Respondent names must match the RespondentIds the pipeline uses;
    each respondent is served at ``/respondents/<name>/answer`` and the
    first (sorted) one also at the bare ``/answer`` route.
    """

    generation_model: str | None = None
    respondents: dict[str, str] = field(default_factory=dict)
    device: str = "cpu"
    max_input_tokens: int = 512
    max_new_tokens: int = 64
    min_new_tokens: int = 4
    port: int = 8600
    format_guard: bool = True

    def __post_init__(self):
        if self.generation_model is None and not self.respondents:
            raise ConfigError("config serves nothing: no generation model, no respondents")
        if self.max_input_tokens < 8 or self.max_new_tokens < 1:
            raise ConfigError("sequence length limits out of range")


def load_config(path: str | Path) -> ShimConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
    known = set(ShimConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")
    return ShimConfig(**data)
