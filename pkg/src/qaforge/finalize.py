"""Finalize verified questions into the published dataset layout.

Choice order is shuffled per record by a generator keyed on (dataset
seed, record id), labels A-E are assigned in shuffled order, and the
answer key follows the designated answer text. Splits are 80/10/10 with
floor rounding for train and dev and the remainder in test; dev and test
keep their Easy/Hard difficulty tags while train is left untagged. The
whole step is a pure function of the verified records and the seeds.
"""
from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .generation import QuestionDraft
from .llm import LedgerReport
from .textnorm import match_key

logger = logging.getLogger(__name__)

LABELS = ("A", "B", "C", "D", "E")

DIFFICULTY_EASY = "easy"
DIFFICULTY_HARD = "hard"
DIFFICULTY_UNTAGGED = "untagged"

SPLIT_TRAIN = "train"
SPLIT_DEV = "dev"
SPLIT_TEST = "test"

VERIFY_EASY = "easy"
VERIFY_NEEDS_HUMAN = "needs_human"


@dataclass
class LabeledQuestion:
    """A five-choice question with final labels, before/through verification."""

    id: str
    language: str
    question: str
    question_concept: str
    choices: list[dict]  # [{"label": "A", "text": ...}] in label order
    answer_key: str
    provenance: dict
    verification: str | None = None  # easy | needs_human

    def choice_text(self, label: str) -> str:
        for choice in self.choices:
            if choice["label"] == label:
                return choice["text"]
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "language": self.language,
            "question": self.question,
            "question_concept": self.question_concept,
            "choices": self.choices,
            "answerKey": self.answer_key,
            "provenance": self.provenance,
            "verification": self.verification,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LabeledQuestion":
        return cls(
            id=data["id"],
            language=data["language"],
            question=data["question"],
            question_concept=data["question_concept"],
            choices=list(data["choices"]),
            answer_key=data["answerKey"],
            provenance=dict(data["provenance"]),
            verification=data.get("verification"),
        )


@dataclass
class DatasetRecord:
    id: str
    question: str
    question_concept: str
    choices: list[dict]
    answerKey: str
    split: str
    difficulty: str
    provenance: dict

    def to_dict(self) -> dict:
        # Fixed key order keeps exports byte-stable.
        return {
            "id": self.id,
            "question": self.question,
            "question_concept": self.question_concept,
            "choices": self.choices,
            "answerKey": self.answerKey,
            "split": self.split,
            "difficulty": self.difficulty,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetRecord":
        try:
            return cls(
                id=data["id"],
                question=data["question"],
                question_concept=data["question_concept"],
                choices=list(data["choices"]),
                answerKey=data["answerKey"],
                split=data["split"],
                difficulty=data["difficulty"],
                provenance=dict(data["provenance"]),
            )
        except KeyError as exc:
            raise ValueError(f"record missing field {exc}") from exc


def shuffle_and_label(draft: QuestionDraft, dataset_seed: int) -> LabeledQuestion:
    """Deterministically shuffle the five choices and assign labels A-E."""
    texts = list(draft.choices)
    if len(texts) != 5:
        raise ValueError(f"draft {draft.tag} does not carry five choices")
    keys = [match_key(t, draft.language) for t in texts]
    if len(set(keys)) != 5:
        raise ValueError(f"draft {draft.tag} has duplicate choices: {texts}")
    record_id = f"{draft.qs_id}-{draft.answer_index}"
    rng = random.Random(f"{dataset_seed}|{record_id}")
    rng.shuffle(texts)
    choices = [{"label": label, "text": text} for label, text in zip(LABELS, texts)]
    answer_key = LABELS[texts.index(draft.answer)]
    return LabeledQuestion(
        id=record_id,
        language=draft.language,
        question=draft.question_text,
        question_concept=draft.query_term,
        choices=choices,
        answer_key=answer_key,
        provenance={
            "relation": draft.relation,
            "direction": draft.direction,
            "qs_id": draft.qs_id,
            "answer_index": draft.answer_index,
            "was_refined": draft.was_refined,
        },
    )


def assemble_records(
    verified: Iterable[tuple[LabeledQuestion, str]]
) -> list[DatasetRecord]:
    """Pair labeled questions with their difficulty into unsplit records.

    The raw Easy/Hard signal also lands in provenance so the train split
    keeps it for analysis even though its difficulty field is untagged.
    """
    records = []
    for labeled, difficulty in verified:
        if difficulty not in (DIFFICULTY_EASY, DIFFICULTY_HARD):
            raise ValueError(f"unverified record {labeled.id}: {difficulty}")
        provenance = dict(labeled.provenance)
        provenance["verification"] = difficulty
        records.append(
            DatasetRecord(
                id=labeled.id,
                question=labeled.question,
                question_concept=labeled.question_concept,
                choices=labeled.choices,
                answerKey=labeled.answer_key,
                split="",
                difficulty=difficulty,
                provenance=provenance,
            )
        )
    return records


def _assign(records: list[DatasetRecord], split: str) -> None:
    for record in records:
        record.split = split
        if split == SPLIT_TRAIN:
            record.difficulty = DIFFICULTY_UNTAGGED


def split_dataset(
    records: Sequence[DatasetRecord],
    seed: int,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    stratify: bool = False,
) -> list[DatasetRecord]:
    """Assign train/dev/test splits in place and return records sorted by id.

    Sizes are floor(r_train*N) and floor(r_dev*N) with the remainder in
    test. With stratify=True the floor rule applies per difficulty class,
    which keeps Easy/Hard proportions aligned between dev and test.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    items = sorted(records, key=lambda r: r.id)
    if len(items) < 10:
        logger.warning("splitting only %d records; splits will be degenerate",
                       len(items))
    rng = random.Random(f"{seed}|split")
    if stratify:
        groups = [
            [r for r in items if r.difficulty == DIFFICULTY_EASY],
            [r for r in items if r.difficulty == DIFFICULTY_HARD],
        ]
    else:
        groups = [list(items)]
    for group in groups:
        rng.shuffle(group)
        n = len(group)
        n_train = int(ratios[0] * n)
        n_dev = int(ratios[1] * n)
        _assign(group[:n_train], SPLIT_TRAIN)
        _assign(group[n_train : n_train + n_dev], SPLIT_DEV)
        _assign(group[n_train + n_dev :], SPLIT_TEST)
    return sorted(items, key=lambda r: r.id)


def export_jsonl(records: Iterable[DatasetRecord], path: str | Path) -> int:
    """One JSON object per line, UTF-8, LF endings, fixed key order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
            count += 1
    return count


def import_jsonl(path: str | Path) -> list[DatasetRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            try:
                records.append(DatasetRecord.from_dict(data))
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return records


def write_splits(records: Sequence[DatasetRecord], out_dir: str | Path) -> dict:
    """Write train/dev/test JSONL files in sorted-id order."""
    out_dir = Path(out_dir)
    counts = {}
    for split in (SPLIT_TRAIN, SPLIT_DEV, SPLIT_TEST):
        subset = sorted(
            (r for r in records if r.split == split), key=lambda r: r.id
        )
        counts[split] = export_jsonl(subset, out_dir / f"{split}.jsonl")
    return counts


def _pct(numerator: int, denominator: int) -> float | None:
    if denominator == 0:
        return None
    return round(100.0 * numerator / denominator, 2)


@dataclass
class SplitSummary:
    """Funnel, refinement, verification, split, and cost statistics."""

    funnel: dict | None = None
    refinement: dict | None = None
    verification: dict | None = None
    splits: dict | None = None
    cost: dict | None = None
    gaps: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "funnel": self.funnel,
            "refinement": self.refinement,
            "verification": self.verification,
            "splits": self.splits,
            "cost": self.cost,
            "gaps": self.gaps,
        }


def summarize(
    drafts: Sequence[QuestionDraft] | None = None,
    verified: Sequence[LabeledQuestion] | None = None,
    records: Sequence[DatasetRecord] | None = None,
    ledger: LedgerReport | None = None,
    removed: int | None = None,
    pending: int | None = None,
) -> SplitSummary:
    """Aggregate whatever run artifacts exist; missing inputs are flagged."""
    from .generation import funnel_stats  # local import avoids cycle at module load

    summary = SplitSummary()
    created = None
    if drafts is not None:
        stats = funnel_stats(drafts)
        created = stats.created
        summary.funnel = stats.to_dict()
        summary.funnel["pct_of_created"] = {
            "five_choice": _pct(stats.five_choice, created),
            "rejected": _pct(sum(stats.rejected_by_reason.values()), created),
        }
        summary.refinement = {
            "total": stats.refinement_total,
            "refined": stats.refined_changed,
            "pct": _pct(stats.refined_changed, stats.refinement_total),
        }
    else:
        summary.gaps.append("drafts")
    if verified is not None:
        easy = sum(1 for v in verified if v.verification == VERIFY_EASY)
        needs = sum(1 for v in verified if v.verification == VERIFY_NEEDS_HUMAN)
        summary.verification = {
            "easy": easy,
            "needs_human": needs,
            "removed": removed,
            "pending": pending,
        }
        if created:
            summary.verification["pct_of_created"] = {
                "easy": _pct(easy, created),
                "hard": _pct(needs - (removed or 0) - (pending or 0), created),
                "removed": _pct(removed, created) if removed is not None else None,
            }
    else:
        summary.gaps.append("verified")
    if records is not None:
        splits: dict = {}
        for split in (SPLIT_TRAIN, SPLIT_DEV, SPLIT_TEST):
            subset = [r for r in records if r.split == split]
            entry = {"total": len(subset)}
            if split != SPLIT_TRAIN:
                entry["easy"] = sum(
                    1 for r in subset if r.difficulty == DIFFICULTY_EASY
                )
                entry["hard"] = sum(
                    1 for r in subset if r.difficulty == DIFFICULTY_HARD
                )
            splits[split] = entry
        summary.splits = splits
    else:
        summary.gaps.append("records")
    if ledger is not None:
        summary.cost = ledger.to_dict()
    else:
        summary.gaps.append("ledger")
    return summary
