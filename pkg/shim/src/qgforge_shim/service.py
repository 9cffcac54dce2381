"""FastAPI service exposing the pipeline wire protocol.

Routes:

* ``POST /generate``  {"prompt", "sampling": {"top_k", "top_p",
  "temperature"}} -> {"raw"}
* ``POST /answer``    {"context", "question"} -> {"answer"} (default
  respondent)
* ``POST /respondents/{name}/answer`` -> per-respondent answering, so a
  panel of N models is N base URLs on one server
* ``GET /health``

Malformed bodies yield 4xx with {"error"}; inference failures 5xx with
{"error"}. With ``format_guard`` on (the default), generator output
lacking the question/answer sentinels is wrapped into the expected
scaffold, so even an un-fine-tuned model satisfies the parse contract;
a fine-tuned model's output passes through untouched.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException
from pydantic import BaseModel, Field

from qgforge_shim.config import ShimConfig
from qgforge_shim.models import (
    AN_TOKEN,
    QU_TOKEN,
    ExtractiveAnswerer,
    Seq2SeqGenerator,
)


class SamplingBody(BaseModel):
    top_k: int = Field(ge=1)
    top_p: float = Field(gt=0.0, le=1.0)
    temperature: float = Field(gt=0.0)


class GenerateBody(BaseModel):
    prompt: str = Field(min_length=1)
    sampling: SamplingBody


class AnswerBody(BaseModel):
    context: str = Field(min_length=1)
    question: str = Field(min_length=1)


def ensure_sentinel_format(raw: str) -> str:
    """Wrap sentinel-less generator output into the QU/AN scaffold.

    Output already carrying a question sentinel followed by an answer
    sentinel passes through verbatim. Otherwise the decoded words are
    split in half into a question part and an answer part.
    """
    qu = raw.find(QU_TOKEN)
    if qu >= 0 and raw.find(AN_TOKEN, qu + len(QU_TOKEN)) >= 0:
        return raw
    words = [w for w in raw.replace(QU_TOKEN, " ").replace(AN_TOKEN, " ").split() if w]
    if len(words) < 2:
        raise ValueError("generator produced no usable text to format")
    half = max(1, len(words) // 2)
    question = " ".join(words[:half])
    answer = " ".join(words[half:])
    return f"{QU_TOKEN} {question}? {AN_TOKEN} {answer}"


def create_app(
    config: ShimConfig,
    generator: Seq2SeqGenerator | None = None,
    answerers: dict[str, ExtractiveAnswerer] | None = None,
) -> FastAPI:
    """Build the service, loading configured models unless injected."""
    if generator is None and config.generation_model is not None:
        generator = Seq2SeqGenerator(
            config.generation_model,
            device=config.device,
            max_input_tokens=config.max_input_tokens,
            max_new_tokens=config.max_new_tokens,
            min_new_tokens=config.min_new_tokens,
        )
    if answerers is None:
        answerers = {
            name: ExtractiveAnswerer(
                spec, device=config.device, max_input_tokens=config.max_input_tokens
            )
            for name, spec in sorted(config.respondents.items())
        }
    default_respondent = min(answerers) if answerers else None

    app = FastAPI(title="qgforge-shim")

    @app.exception_handler(RequestValidationError)
    async def validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors()[:3])})

    @app.exception_handler(StarletteHTTPException)
    async def http_error(request: Request, exc: StarletteHTTPException):
        # the wire protocol frames every error as {"error": string}
        return JSONResponse(status_code=exc.status_code, content={"error": str(exc.detail)})

    def error(status: int, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error": message})

    @app.get("/health")
    async def health():
        return {
            "status": "ok",
            "generation": generator is not None,
            "respondents": sorted(answerers),
        }

    @app.post("/generate")
    async def generate(body: GenerateBody):
        if generator is None:
            return error(404, "this shim serves no generation model")
        try:
            raw = generator.generate(
                body.prompt,
                top_k=body.sampling.top_k,
                top_p=body.sampling.top_p,
                temperature=body.sampling.temperature,
            )
            if config.format_guard:
                raw = ensure_sentinel_format(raw)
        except Exception as exc:  # noqa: BLE001 - report as inference failure
            return error(500, f"generation failed: {exc}")
        return {"raw": raw}

    def run_answer(name: str, body: AnswerBody):
        answerer = answerers.get(name)
        if answerer is None:
            return error(404, f"unknown respondent {name!r}")
        try:
            span = answerer.answer(body.context, body.question)
        except Exception as exc:  # noqa: BLE001
            return error(500, f"answering failed: {exc}")
        return {"answer": span}

    @app.post("/answer")
    async def answer(body: AnswerBody):
        if default_respondent is None:
            return error(404, "this shim serves no answering model")
        return run_answer(default_respondent, body)

    @app.post("/respondents/{name}/answer")
    async def respondent_answer(name: str, body: AnswerBody):
        return run_answer(name, body)

    return app
