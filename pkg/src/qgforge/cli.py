"""qgforge command line: one subcommand per pipeline stage.

Stages exchange files under a single output root so expensive
model-backed steps stay resumable::

    out/
      collect/answers.jsonl        respondent answers (append-only log)
      calibrate/calibration.json   difficulties, abilities, labels
      calibrate/matrix.csv         the binary response matrix
      augment/corpus_augmented.csv corpus with difficulty labels
      export/train_<setup>.jsonl   input/target training lines
      generate/pairs_<...>.jsonl   generated pairs (resumable log)
      evaluate/evaluation.json     raw evaluation cells
      report/*.csv, report/plots/  final tables and plot series

Every stage writes a manifest with config and content hashes; manifests
carry no timestamps, so identical configurations replay byte-identically.
Diagnostics go to stderr; ``simulate`` additionally prints one pass/fail
line per pipeline property.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from qgforge import corpus as corpus_mod
from qgforge import evaluation, genclient, irt, manifest, responses, simlearner

DEFAULT_MOCK_PANEL = "learner1=2,learner2=1,learner3=0,learner4=-1,learner5=-2"

DIFFICULTY_LOGITS_5 = {"easy": -4.0, "medium": -2.0, "moderate": 0.0, "hard": 2.0, "extreme": 4.0}
DIFFICULTY_LOGITS_3 = {"easy": -4.0, "medium": 0.0, "extreme": 4.0}


class StageError(RuntimeError):
    """A stage prerequisite is missing or a stage input is invalid."""


def _say(message: str) -> None:
    print(message, file=sys.stderr)


@dataclass
class RunConfig:
    """Resolved options for one stage invocation."""

    out: Path
    corpus: str | None = None
    endpoint: str | None = None
    setup: str = "nardif"
    levels: int = 5
    split: str = "train"
    top_k: int = 50
    top_p: float = 0.9
    temperature: float = 1.2
    seed: int = 0
    jobs: int = 4
    mock: bool = False
    mock_panel: str = DEFAULT_MOCK_PANEL
    respondents: tuple[str, ...] = ()
    sections: int = 200
    train_sections: int = 60
    val_sections: int = 20

    def sampling(self) -> genclient.SamplingConfig:
        return genclient.SamplingConfig(
            top_k=self.top_k, top_p=self.top_p, temperature=self.temperature
        )

    def scheme(self):
        return corpus_mod.difficulty_scheme(self.levels)

    def manifest_config(self) -> dict:
        # Execution-only knobs (out, jobs) stay out so reruns and
        # different parallelism settings produce identical manifests.
        corpus = self.corpus
        if corpus is not None:
            try:
                corpus = Path(corpus).resolve().relative_to(self.out.resolve()).as_posix()
            except ValueError:
                pass
        return {
            "corpus": corpus,
            "endpoint": self.endpoint,
            "setup": self.setup,
            "levels": self.levels,
            "split": self.split,
            "sampling": {
                "top_k": self.top_k,
                "top_p": self.top_p,
                "temperature": self.temperature,
            },
            "seed": self.seed,
            "mock": self.mock,
            "mock_panel": self.mock_panel if self.mock else None,
            "respondents": sorted(self.respondents),
            "sections": self.sections,
            "train_sections": self.train_sections,
            "val_sections": self.val_sections,
        }


def _parse_mock_panel(spec: str) -> list[simlearner.SyntheticLearner]:
    learners = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, theta = part.partition("=")
        if not theta:
            raise StageError(f"bad --mock-panel entry {part!r}; expected name=theta")
        learners.append(simlearner.SyntheticLearner(name.strip(), float(theta)))
    if not learners:
        raise StageError("empty mock panel")
    return learners


def _parse_respondents(entries: tuple[str, ...]) -> dict[str, str]:
    panel = {}
    for entry in entries:
        name, _, url = entry.partition("=")
        if not url:
            raise StageError(f"bad --respondent entry {entry!r}; expected name=url")
        panel[name.strip()] = url.strip()
    return panel


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise StageError(f"missing {path}; run `qgforge {producer}` first")
    return path


def _load_corpus(cfg: RunConfig) -> tuple[corpus_mod.Corpus, Path]:
    augmented = cfg.out / "augment" / "corpus_augmented.csv"
    if cfg.corpus:
        path = Path(cfg.corpus)
        if not path.exists():
            raise StageError(f"corpus file not found: {path}")
    elif augmented.exists():
        path = augmented
    else:
        raise StageError("no corpus: pass --corpus or run `qgforge augment` first")
    return corpus_mod.load_corpus(path), path


def _difficulty_logits(levels: int) -> dict[str, float]:
    return dict(DIFFICULTY_LOGITS_5 if levels == 5 else DIFFICULTY_LOGITS_3)


# --- stage implementations ----------------------------------------------

def run_collect(cfg: RunConfig) -> Path:
    corpus, corpus_path = _load_corpus(cfg)
    stage_dir = cfg.out / "collect"
    stage_dir.mkdir(parents=True, exist_ok=True)
    log_path = stage_dir / "answers.jsonl"

    if cfg.mock:
        learners = _parse_mock_panel(cfg.mock_panel)
        learners = [
            simlearner.SyntheticLearner(l.name, l.true_theta, rng_seed=cfg.seed)
            for l in learners
        ]
        endpoints = {l.name: simlearner.mock_answer_engine(l, corpus) for l in learners}
        panel = [l.name for l in learners]
    else:
        mapping = _parse_respondents(cfg.respondents)
        if not mapping:
            raise StageError("collect needs --respondent name=url entries (or --mock)")
        endpoints = {name: genclient.HttpAnswerClient(url) for name, url in mapping.items()}
        panel = sorted(mapping)

    answers = responses.collect_answers(corpus, endpoints, panel, log_path, jobs=cfg.jobs)
    _say(f"collect: {len(answers)} answers from {len(panel)} respondents -> {log_path}")
    manifest.write_manifest(
        stage_dir, "collect", cfg.manifest_config(), [corpus_path], [log_path], cfg.out
    )
    return log_path


def run_calibrate(cfg: RunConfig) -> Path:
    corpus, corpus_path = _load_corpus(cfg)
    log_path = _require(cfg.out / "collect" / "answers.jsonl", "collect")
    stage_dir = cfg.out / "calibrate"
    stage_dir.mkdir(parents=True, exist_ok=True)

    answers = responses.load_answer_log(log_path)
    panel = sorted({rec.respondent for rec in answers})
    matrix = responses.build_matrix(corpus, answers, panel)
    calibration = irt.calibrate(matrix, scheme=cfg.scheme())

    matrix_path = stage_dir / "matrix.csv"
    matrix.to_csv(matrix_path)
    calib_path = stage_dir / "calibration.json"
    irt.save_calibration(calibration, calib_path)
    conv = calibration.convergence
    _say(
        f"calibrate: {len(matrix.question_ids)} items, {len(panel)} respondents, "
        f"{conv.iterations} EM iterations (converged={conv.converged}) -> {calib_path}"
    )
    manifest.write_manifest(
        stage_dir,
        "calibrate",
        cfg.manifest_config(),
        [corpus_path, log_path],
        [matrix_path, calib_path],
        cfg.out,
    )
    return calib_path


def run_augment(cfg: RunConfig) -> Path:
    if not cfg.corpus:
        raise StageError("augment needs --corpus (the raw corpus file)")
    corpus, corpus_path = _load_corpus(cfg)
    calib_path = _require(cfg.out / "calibrate" / "calibration.json", "calibrate")
    stage_dir = cfg.out / "augment"
    stage_dir.mkdir(parents=True, exist_ok=True)

    calibration = irt.load_calibration(calib_path)
    augmented = corpus_mod.augment_corpus(corpus, calibration)
    out_path = stage_dir / "corpus_augmented.csv"
    corpus_mod.save_corpus(augmented, out_path)
    _say(f"augment: {len(augmented)} records -> {out_path}")
    manifest.write_manifest(
        stage_dir, "augment", cfg.manifest_config(), [corpus_path, calib_path], [out_path], cfg.out
    )
    return out_path


def run_export(cfg: RunConfig) -> Path:
    corpus, corpus_path = _load_corpus(cfg)
    setup = corpus_mod.DataSetup.parse(cfg.setup)
    stage_dir = cfg.out / "export"
    stage_dir.mkdir(parents=True, exist_ok=True)
    out_path = stage_dir / f"{cfg.split}_{setup.value}.jsonl"
    count = corpus_mod.export_training_file(corpus, setup, out_path, cfg.split)
    _say(f"export: {count} lines ({setup}, {cfg.split}) -> {out_path}")
    manifest.write_manifest(
        stage_dir, "export", cfg.manifest_config(), [corpus_path], [out_path], cfg.out
    )
    return out_path


def _pairs_filename(setup: corpus_mod.DataSetup, levels: int) -> str:
    if setup.uses_difficulty:
        return f"pairs_{setup.value}_{levels}.jsonl"
    return f"pairs_{setup.value}.jsonl"


def run_generate(cfg: RunConfig) -> Path:
    corpus, corpus_path = _load_corpus(cfg)
    setup = corpus_mod.DataSetup.parse(cfg.setup)
    stage_dir = cfg.out / "generate"
    stage_dir.mkdir(parents=True, exist_ok=True)
    out_path = stage_dir / _pairs_filename(setup, cfg.levels)

    if cfg.mock:
        endpoint = simlearner.mock_generator(corpus)
    else:
        endpoint = genclient.HttpGenerationClient(cfg.endpoint)
    pairs = genclient.run_generation_suite(
        corpus,
        setup,
        endpoint,
        cfg.sampling(),
        scheme=cfg.scheme(),
        out_path=out_path,
        jobs=cfg.jobs,
    )
    _say(f"generate: {len(pairs)} pairs ({setup}, {cfg.levels}-level) -> {out_path}")
    manifest.write_manifest(
        stage_dir, "generate", cfg.manifest_config(), [corpus_path], [out_path], cfg.out
    )
    return out_path


def _generated_by_setup(cfg: RunConfig) -> dict[corpus_mod.DataSetup, list[genclient.GeneratedPair]]:
    gen_dir = _require(cfg.out / "generate", "generate")
    grouped: dict[corpus_mod.DataSetup, list[genclient.GeneratedPair]] = {}
    for path in sorted(gen_dir.glob("pairs_*.jsonl")):
        for pair in genclient.load_pairs(path):
            if pair.requested_difficulty is not None:
                if len(type(pair.requested_difficulty)) != cfg.levels:
                    continue
            grouped.setdefault(pair.setup, []).append(pair)
    if not grouped:
        raise StageError(f"no generated pairs under {gen_dir}; run `qgforge generate` first")
    return grouped


def run_evaluate(cfg: RunConfig) -> Path:
    corpus, corpus_path = _load_corpus(cfg)
    grouped = _generated_by_setup(cfg)
    stage_dir = cfg.out / "evaluate"
    stage_dir.mkdir(parents=True, exist_ok=True)

    difficulty_pairs = [
        p for pairs in grouped.values() for p in pairs if p.requested_difficulty is not None
    ]
    panel: dict[str, genclient.AnsweringEndpoint] = {}
    if difficulty_pairs:
        if cfg.mock:
            logits = _difficulty_logits(cfg.levels)
            for learner in _parse_mock_panel(cfg.mock_panel):
                profile = simlearner.SyntheticLearner(
                    learner.name, learner.true_theta, rng_seed=cfg.seed
                )
                panel[profile.name] = simlearner.pair_answer_engine(
                    profile, difficulty_pairs, logits
                )
        else:
            mapping = _parse_respondents(cfg.respondents)
            if not mapping:
                raise StageError("evaluate needs --respondent name=url entries (or --mock)")
            panel = {name: genclient.HttpAnswerClient(url) for name, url in mapping.items()}

    report = evaluation.build_report(grouped, corpus, panel, cfg.levels, jobs=cfg.jobs)
    out_path = stage_dir / "evaluation.json"
    out_path.write_text(
        json.dumps(evaluation.report_to_json(report), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    _say(f"evaluate: {sum(len(v) for v in grouped.values())} pairs -> {out_path}")
    inputs = [corpus_path] + sorted((cfg.out / "generate").glob("pairs_*.jsonl"))
    manifest.write_manifest(
        stage_dir, "evaluate", cfg.manifest_config(), inputs, [out_path], cfg.out
    )
    return out_path


def run_report(cfg: RunConfig) -> Path:
    eval_path = _require(cfg.out / "evaluate" / "evaluation.json", "evaluate")
    stage_dir = cfg.out / "report"
    stage_dir.mkdir(parents=True, exist_ok=True)
    report = evaluation.report_from_json(json.loads(eval_path.read_text(encoding="utf-8")))
    written = evaluation.emit_report(report, stage_dir)
    _say(f"report: {len(written)} files -> {stage_dir}")
    manifest.write_manifest(
        stage_dir, "report", cfg.manifest_config(), [eval_path], written, cfg.out
    )
    return stage_dir


# --- simulate: the synthetic end-to-end oracle ---------------------------

def _check(name: str, ok: bool, detail: str = "") -> tuple[str, bool]:
    status = "PASS" if ok else "FAIL"
    line = f"{status} {name}" + (f" ({detail})" if detail else "")
    return line, ok


def run_simulate(cfg: RunConfig) -> bool:
    cfg.out.mkdir(parents=True, exist_ok=True)
    corpus = simlearner.make_synthetic_corpus(
        n_train_sections=cfg.train_sections,
        n_val_sections=cfg.val_sections,
        n_test_sections=cfg.sections,
        seed=cfg.seed,
    )
    corpus_path = cfg.out / "corpus.csv"
    corpus_mod.save_corpus(corpus, corpus_path)
    raw_cfg = RunConfig(**{**cfg.__dict__, "corpus": str(corpus_path), "mock": True})
    # after augmentation the stages pick up the augmented corpus themselves
    aug_cfg = RunConfig(**{**raw_cfg.__dict__, "corpus": None})

    learners = [
        simlearner.SyntheticLearner(l.name, l.true_theta, rng_seed=cfg.seed)
        for l in _parse_mock_panel(cfg.mock_panel)
    ]
    true_b = simlearner.synthetic_item_difficulties(corpus, cfg.seed)

    # collect (with known true difficulties so calibration is checkable)
    stage_dir = cfg.out / "collect"
    stage_dir.mkdir(exist_ok=True)
    log_path = stage_dir / "answers.jsonl"
    endpoints = {
        l.name: simlearner.mock_answer_engine(l, corpus, true_b) for l in learners
    }
    responses.collect_answers(
        corpus, endpoints, [l.name for l in learners], log_path, jobs=cfg.jobs
    )
    manifest.write_manifest(
        stage_dir, "collect", raw_cfg.manifest_config(), [corpus_path], [log_path], cfg.out
    )

    run_calibrate(raw_cfg)
    run_augment(raw_cfg)
    for setup in corpus_mod.DataSetup:
        setup_cfg = RunConfig(**{**aug_cfg.__dict__, "setup": setup.value})
        run_export(setup_cfg)
        run_generate(setup_cfg)
    run_evaluate(aug_cfg)
    run_report(aug_cfg)
    cfg = aug_cfg

    # pipeline properties
    calibration = irt.load_calibration(cfg.out / "calibrate" / "calibration.json")
    matrix = responses.ResponseMatrix.from_csv(cfg.out / "calibrate" / "matrix.csv")
    report = evaluation.report_from_json(
        json.loads((cfg.out / "evaluate" / "evaluation.json").read_text(encoding="utf-8"))
    )
    lines: list[str] = []
    all_ok = True

    m2 = simlearner.simulate_responses(
        learners, {qid: true_b[qid] for qid in matrix.question_ids}
    )
    line, ok = _check("deterministic-responses", (m2.cells == matrix.cells).all())
    lines.append(line)
    all_ok &= ok

    scores = matrix.column_sums()
    label_index = {
        qid: calibration.labels[qid].index for qid in matrix.question_ids
    }
    inversions = 0
    by_score: dict[int, set[int]] = {}
    for j, qid in enumerate(matrix.question_ids):
        by_score.setdefault(int(scores[j]), set()).add(label_index[qid])
    ordered = sorted(by_score)
    for lo_score, hi_score in zip(ordered, ordered[1:]):
        # more correct answers = easier: label index must not increase
        if min(by_score[lo_score]) < max(by_score[hi_score]):
            inversions += 1
    line, ok = _check(
        "difficulty-ordering-vs-raw-score",
        inversions == 0 and all(len(v) == 1 for v in by_score.values()),
        f"{len(ordered)} raw-score classes",
    )
    lines.append(line)
    all_ok &= ok

    # MAP abilities must mirror row accuracies: strictly higher accuracy
    # means strictly higher theta, ties in accuracy mean tied theta
    accuracy = {name: matrix.accuracy(name) for name in matrix.respondents}
    theta_hat = calibration.abilities
    ability_ok = True
    for a in matrix.respondents:
        for b in matrix.respondents:
            if accuracy[a] > accuracy[b]:
                ability_ok &= theta_hat[a] > theta_hat[b]
            elif accuracy[a] == accuracy[b]:
                ability_ok &= abs(theta_hat[a] - theta_hat[b]) < 1e-9
    ordered_names = [l.name for l in sorted(learners, key=lambda l: -l.true_theta)]
    line, ok = _check(
        "ability-ordering-matches-accuracy",
        ability_ok,
        " ".join(f"{theta_hat[n]:.2f}" for n in ordered_names),
    )
    lines.append(line)
    all_ok &= ok

    order = [label.value for label in cfg.scheme()]
    setups_with_difficulty = sorted(
        {k[0] for k in report.difficulty_accuracy}
    )
    mono_ok = True
    strict_ok = True
    for setup in setups_with_difficulty:
        for name in sorted(l.name for l in learners):
            series = [
                report.difficulty_accuracy[(setup, name, lvl)].value
                for lvl in order
                if (setup, name, lvl) in report.difficulty_accuracy
            ]
            mono_ok &= all(a >= b for a, b in zip(series, series[1:]))
            strict_ok &= all(a > b for a, b in zip(series, series[1:]))
    # the 3-level regrouping separates levels by >= 4 logits: demand strictness
    mono_property = strict_ok if cfg.levels == 3 else mono_ok
    line, ok = _check("accuracy-monotone-in-difficulty", mono_property, f"strict={strict_ok}")
    lines.append(line)
    all_ok &= ok

    dominance = True
    by_theta = sorted(learners, key=lambda l: -l.true_theta)
    for setup in setups_with_difficulty:
        overall = {}
        for name in (l.name for l in learners):
            cells = [
                report.difficulty_accuracy[(setup, name, lvl)]
                for lvl in order
                if (setup, name, lvl) in report.difficulty_accuracy
            ]
            total = sum(c.count for c in cells)
            overall[name] = sum(c.value * c.count for c in cells) / total if total else 0.0
        for hi, lo in zip(by_theta, by_theta[1:]):
            dominance &= overall[hi.name] >= overall[lo.name]
    line, ok = _check("ability-accuracy-dominance", dominance)
    lines.append(line)
    all_ok &= ok

    nar_ok = True
    detail = []
    for narrative in corpus_mod.NarrativeLabel:
        base = report.narrative_similarity.get(("text", narrative.value))
        for setup in ("nar", "nardif"):
            cell = report.narrative_similarity.get((setup, narrative.value))
            if base is not None and cell is not None and cell.count and base.count:
                if cell.mean < base.mean:
                    nar_ok = False
                    detail.append(f"{setup}/{narrative.value}")
    line, ok = _check("narrative-control-beats-baseline", nar_ok, ",".join(detail) or "all cells")
    lines.append(line)
    all_ok &= ok

    expected = cfg.sections * cfg.levels
    for setup in ("dif", "nardif"):
        path = cfg.out / "generate" / f"pairs_{setup}_{cfg.levels}.jsonl"
        count = len(genclient.load_pairs(path))
        line, ok = _check(
            f"suite-count-{setup}", count == expected, f"{count} == {cfg.sections}x{cfg.levels}"
        )
        lines.append(line)
        all_ok &= ok

    properties_path = cfg.out / "properties.txt"
    properties_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    manifest.write_manifest(
        cfg.out, "simulate", cfg.manifest_config(), [], [properties_path], cfg.out
    )
    for line in lines:
        print(line)
    return all_ok


# --- argument parsing ----------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qgforge",
        description="Difficulty calibration and controlled QA generation pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", required=True, help="pipeline output root directory")
        p.add_argument("--config", help="JSON config file mirroring the flags (flags win)")
        p.add_argument("--corpus", help="corpus file (.csv/.tsv/.jsonl)")
        p.add_argument("--endpoint", help="generation endpoint base URL "
                       f"(or ${genclient.ENDPOINT_ENV_VAR})")
        p.add_argument("--setup", choices=[s.value for s in corpus_mod.DataSetup],
                       help="data setup (default nardif)")
        p.add_argument("--levels", type=int, choices=(5, 3), help="difficulty scheme levels")
        p.add_argument("--split", choices=list(corpus_mod.SPLITS), help="split for export")
        p.add_argument("--top-k", type=int, dest="top_k", help="sampling top-k")
        p.add_argument("--top-p", type=float, dest="top_p", help="sampling top-p")
        p.add_argument("--temperature", type=float, help="sampling temperature")
        p.add_argument("--seed", type=int, help="seed for synthetic and mock components")
        p.add_argument("--jobs", type=int, help="bounded parallelism (default 4)")
        p.add_argument("--mock", action="store_true", default=None,
                       help="use deterministic in-process mock endpoints")
        p.add_argument("--mock-panel", dest="mock_panel",
                       help="mock panel spec: name=theta,name=theta,...")
        p.add_argument("--respondent", action="append", dest="respondents", default=None,
                       metavar="NAME=URL", help="answering endpoint for one panel respondent")
        p.add_argument("--sections", type=int, help="synthetic test sections (simulate)")
        p.add_argument("--train-sections", type=int, dest="train_sections",
                       help="synthetic train sections (simulate)")
        p.add_argument("--val-sections", type=int, dest="val_sections",
                       help="synthetic val sections (simulate)")
        return p

    add_command("collect", "collect respondent answers for train/val questions")
    add_command("calibrate", "estimate difficulties and abilities from the answer log")
    add_command("augment", "attach difficulty labels to the corpus")
    add_command("export", "write input/target training files for a setup")
    add_command("generate", "drive the generation endpoint over the test split")
    add_command("evaluate", "score narrative and difficulty control")
    add_command("report", "emit the report tables and plot series")
    add_command("simulate", "run the synthetic end-to-end oracle and check properties")
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    file_values: dict = {}
    if args.config:
        config_path = Path(args.config)
        if not config_path.exists():
            raise StageError(f"config file not found: {config_path}")
        file_values = json.loads(config_path.read_text(encoding="utf-8"))
        unknown = set(file_values) - {f for f in RunConfig.__dataclass_fields__}
        if unknown:
            raise StageError(f"unknown config file key(s): {sorted(unknown)}")

    defaults = RunConfig(out=Path("."))

    def pick(name: str):
        cli_value = getattr(args, name, None)
        if cli_value is not None:
            return cli_value
        if name in file_values:
            return file_values[name]
        return getattr(defaults, name)

    respondents = pick("respondents") or ()
    return RunConfig(
        out=Path(args.out),
        corpus=pick("corpus"),
        endpoint=pick("endpoint"),
        setup=pick("setup"),
        levels=int(pick("levels")),
        split=pick("split"),
        top_k=int(pick("top_k")),
        top_p=float(pick("top_p")),
        temperature=float(pick("temperature")),
        seed=int(pick("seed")),
        jobs=int(pick("jobs")),
        mock=bool(pick("mock")),
        mock_panel=pick("mock_panel"),
        respondents=tuple(respondents),
        sections=int(pick("sections")),
        train_sections=int(pick("train_sections")),
        val_sections=int(pick("val_sections")),
    )


_COMMANDS = {
    "collect": run_collect,
    "calibrate": run_calibrate,
    "augment": run_augment,
    "export": run_export,
    "generate": run_generate,
    "evaluate": run_evaluate,
    "report": run_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        if args.command == "simulate":
            return 0 if run_simulate(cfg) else 1
        _COMMANDS[args.command](cfg)
        return 0
    except (
        StageError,
        corpus_mod.CorpusError,
        responses.ResponseError,
        irt.CalibrationError,
        evaluation.EvaluationError,
        genclient.EndpointError,
        genclient.GenerationParseError,
    ) as exc:
        _say(f"error: {exc}")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
