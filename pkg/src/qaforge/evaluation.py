"""Scoring, few-shot prompting, generative evaluation, and transfer tables.

Prediction files are JSON lines {"id": ..., "prediction": "A".."E"}.
Missing predictions score as incorrect (and are counted) rather than
being skipped, so partial files cannot inflate accuracy.
"""
from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .finalize import DatasetRecord, DIFFICULTY_EASY, DIFFICULTY_HARD
from .llm import GenerationFailed, GenerationRequest, LmClient
from .prompts import PromptTemplate
from .verification import VerificationTask, parse_answer_key

logger = logging.getLogger(__name__)

VALID_KEYS = frozenset("ABCDE")


def load_predictions(
    path: str | Path, valid_ids: set[str] | None = None
) -> dict[str, str]:
    """Load {record id -> predicted key}; unknown ids and bad keys raise."""
    predictions: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            record_id = entry.get("id")
            key = entry.get("prediction")
            if not isinstance(record_id, str):
                raise ValueError(f"{path}: line {lineno}: missing id")
            if key not in VALID_KEYS:
                raise ValueError(
                    f"{path}: line {lineno}: prediction must be A-E, got {key!r}"
                )
            if valid_ids is not None and record_id not in valid_ids:
                raise ValueError(f"{path}: line {lineno}: unknown id {record_id}")
            predictions[record_id] = key
    return predictions


def save_predictions(predictions: Mapping[str, Optional[str]], path: str | Path) -> None:
    """Persist parseable predictions; unparseable entries are omitted."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record_id in sorted(predictions):
            key = predictions[record_id]
            if key is None:
                continue
            fh.write(json.dumps({"id": record_id, "prediction": key}) + "\n")


@dataclass
class ScoreReport:
    overall: float
    easy: float | None
    hard: float | None
    total: int
    correct: int
    easy_total: int = 0
    easy_correct: int = 0
    hard_total: int = 0
    hard_correct: int = 0
    missing: int = 0
    unparseable: int = 0

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "easy": self.easy,
            "hard": self.hard,
            "total": self.total,
            "correct": self.correct,
            "easy_total": self.easy_total,
            "easy_correct": self.easy_correct,
            "hard_total": self.hard_total,
            "hard_correct": self.hard_correct,
            "missing": self.missing,
            "unparseable": self.unparseable,
        }


def score(
    records: Sequence[DatasetRecord],
    predictions: Mapping[str, Optional[str]],
) -> ScoreReport:
    """Accuracy overall and restricted to the Easy and Hard subsets."""
    if not records:
        raise ValueError("cannot score an empty split")
    total = len(records)
    correct = missing = unparseable = 0
    easy_total = easy_correct = hard_total = hard_correct = 0
    for record in records:
        predicted = predictions.get(record.id)
        if record.id not in predictions:
            missing += 1
        elif predicted is None:
            unparseable += 1
        hit = predicted == record.answerKey
        correct += hit
        if record.difficulty == DIFFICULTY_EASY:
            easy_total += 1
            easy_correct += hit
        elif record.difficulty == DIFFICULTY_HARD:
            hard_total += 1
            hard_correct += hit
    if missing:
        logger.warning("%d records had no prediction and scored incorrect", missing)
    return ScoreReport(
        overall=100.0 * correct / total,
        easy=100.0 * easy_correct / easy_total if easy_total else None,
        hard=100.0 * hard_correct / hard_total if hard_total else None,
        total=total,
        correct=correct,
        easy_total=easy_total,
        easy_correct=easy_correct,
        hard_total=hard_total,
        hard_correct=hard_correct,
        missing=missing,
        unparseable=unparseable,
    )


def _render_verify(record: DatasetRecord, templates: dict[str, PromptTemplate]) -> str:
    bindings = {"question": record.question}
    for choice in record.choices:
        bindings[f"choice_{choice['label'].lower()}"] = choice["text"]
    return templates["verify"].render(bindings)


def _exemplar_block(record: DatasetRecord) -> str:
    labeled = " ".join(
        f"({c['label']}) {c['text']}" for c in record.choices
    )
    return (
        f"Q: {record.question}\n"
        f"Answer Choices: {labeled}\n"
        + json.dumps({"answer": record.answerKey})
    )


def build_fewshot_prompt(
    train: Sequence[DatasetRecord],
    k: int,
    seed: int,
    target: DatasetRecord,
    templates: dict[str, PromptTemplate],
) -> str:
    """k solved exemplar blocks followed by the verify prompt for target.

    Exemplars are drawn once per (seed, k) from the id-sorted train split,
    in sampled order, so every target sees the same exemplars; the target
    itself is excluded from the pool.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    target_prompt = _render_verify(target, templates)
    if k == 0:
        return target_prompt
    pool = sorted(
        (r for r in train if r.id != target.id), key=lambda r: r.id
    )
    if k > len(pool):
        raise ValueError(f"k={k} exceeds the {len(pool)} available exemplars")
    rng = random.Random(f"{seed}|fewshot|{k}")
    exemplars = rng.sample(pool, k)
    blocks = [_exemplar_block(r) for r in exemplars]
    return "\n\n".join(blocks) + "\n\n" + target_prompt


def run_generative_eval(
    records: Sequence[DatasetRecord],
    client: LmClient,
    templates: dict[str, PromptTemplate],
    *,
    k: int = 0,
    train: Sequence[DatasetRecord] = (),
    seed: int = 0,
    language: str = "",
    out_path: str | Path | None = None,
    resume: bool = False,
) -> tuple[dict[str, Optional[str]], ScoreReport]:
    """Answer every record with the backend and score the outcome.

    On backend exhaustion, partial predictions are persisted next to a
    .resume marker and the failure is re-raised; a later call with
    resume=True skips the finished ids.
    """
    predictions: dict[str, Optional[str]] = {}
    marker = Path(f"{out_path}.resume") if out_path else None
    if resume and out_path and Path(out_path).exists():
        predictions.update(load_predictions(out_path, {r.id for r in records}))
    ordered = sorted(records, key=lambda r: r.id)
    try:
        for record in ordered:
            if record.id in predictions:
                continue
            prompt = build_fewshot_prompt(train, k, seed, record, templates)
            request = GenerationRequest.for_stage(
                "eval", language, prompt, tag=record.id, structured_json=True
            )
            response = client.generate(request)
            predictions[record.id] = parse_answer_key(response.text)
    except GenerationFailed:
        if out_path is not None:
            save_predictions(predictions, out_path)
            assert marker is not None
            marker.write_text(
                json.dumps({"completed": len(predictions), "total": len(ordered)}),
                encoding="utf-8",
            )
        raise
    if out_path is not None:
        save_predictions(predictions, out_path)
        if marker is not None and marker.exists():
            marker.unlink()
    return predictions, score(records, predictions)


def transfer_matrix(
    grid: Mapping[str, Mapping[str, float]]
) -> dict[str, dict[str, float]]:
    """Normalize each column by its same-language diagonal (percent)."""
    languages = sorted(grid)
    for lang in languages:
        diagonal = grid.get(lang, {}).get(lang)
        if diagonal is None:
            raise ValueError(f"missing diagonal entry for language {lang!r}")
        if diagonal <= 0:
            raise ValueError(f"non-positive diagonal for language {lang!r}")
    normalized: dict[str, dict[str, float]] = {}
    for train_lang in languages:
        row = {}
        for eval_lang, value in grid[train_lang].items():
            row[eval_lang] = 100.0 * (value / grid[eval_lang][eval_lang])
        normalized[train_lang] = row
    return normalized


def delta_table(
    mono: Mapping[str, float], multi: Mapping[str, float]
) -> dict[str, float]:
    """Per-language multi minus mono accuracy, to one decimal."""
    if set(mono) != set(multi):
        diff = sorted(set(mono) ^ set(multi))
        raise ValueError(f"language keys differ: {diff}")
    return {lang: round(multi[lang] - mono[lang], 1) for lang in sorted(mono)}


def sample_for_baseline(
    records: Sequence[DatasetRecord], n: int = 100, seed: int = 0
) -> list[VerificationTask]:
    """Uniform sample of records as annotation tasks for a human baseline.

    Serve these with a majority:5 policy; the retained fraction among the
    resolved tasks is the baseline estimate.
    """
    rng = random.Random(f"{seed}|baseline")
    ordered = sorted(records, key=lambda r: r.id)
    picked = ordered if len(ordered) <= n else rng.sample(ordered, n)
    return [
        VerificationTask(
            task_id=r.id,
            question=r.question,
            choices=list(r.choices),
            gold_key=r.answerKey,
        )
        for r in sorted(picked, key=lambda r: r.id)
    ]


def baseline_accuracy(statuses: Mapping[str, str]) -> float | None:
    """Retained share of resolved baseline tasks, as a percentage."""
    resolved = [s for s in statuses.values() if s in ("retained", "removed")]
    if not resolved:
        return None
    retained = sum(1 for s in resolved if s == "retained")
    return 100.0 * retained / len(resolved)


def format_table(headers: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    """Aligned-column text table for CLI reports."""
    cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
    lines = []
    for idx, row in enumerate(cells):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
