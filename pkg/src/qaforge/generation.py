"""Staged question generation: create, validate, refine, add distractors.

Each target concept of each Question Set yields one draft where that
concept is the designated answer. Drafts advance monotonically through

    created -> validated -> refined -> five_choice

or drop to `rejected` with a reason. Validation is pattern matching:
leakage of choice terms, terminal question mark, single sentence, then a
moderation call; the first failing rule wins.
"""
from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .llm import GenerationFailed, GenerationRequest, LmClient, extract_json_object
from .prompts import PromptTemplate
from .question_sets import QuestionSet
from .textnorm import contains_term, is_cased

logger = logging.getLogger(__name__)

STATUS_CREATED = "created"
STATUS_VALIDATED = "validated"
STATUS_REFINED = "refined"
STATUS_FIVE_CHOICE = "five_choice"
STATUS_REJECTED = "rejected"

REASON_GENERATION = "generation-error"
REASON_LEAKAGE = "leakage"
REASON_QUESTION_MARK = "no-question-mark"
REASON_MULTI_SENTENCE = "multi-sentence"
REASON_MODERATION = "moderation"
REASON_DISTRACTORS = "distractor-collision"

_TERMINALS = ".!?。！？"
_QUESTION_MARKS = ("?", "？")

# Per-language lexemes for the "don't hint at character counts" heuristic;
# a digit adjacent to one of these only warns, it never rejects.
_COUNT_LEXEMES: dict[str, tuple[str, ...]] = {
    "en": ("characters", "letters"),
    "de": ("Zeichen", "Buchstaben"),
    "pt": ("caracteres", "letras"),
    "nl": ("tekens", "letters"),
    "fr": ("caractères", "lettres"),
    "ru": ("символ", "букв"),
    "ja": ("文字",),
    "zh": ("字符", "个字"),
}

_WS = re.compile(r"\s+")


def _squash_ws(text: str) -> str:
    return _WS.sub(" ", text).strip()


@dataclass
class QuestionDraft:
    qs_id: str
    language: str
    query_term: str
    relation: str
    direction: str
    answer_index: int
    answer: str
    co_targets: tuple[str, str]
    question_text: str = ""
    extra_distractors: tuple[str, ...] = ()
    stage_status: str = STATUS_CREATED
    rejection_reason: str | None = None
    was_refined: bool = False
    passed_validation: bool = False
    superficial_warning: bool = False

    @property
    def tag(self) -> str:
        return f"{self.qs_id}:{self.answer_index}"

    @property
    def target_terms(self) -> tuple[str, str, str]:
        return (self.answer,) + self.co_targets

    @property
    def choices(self) -> tuple[str, ...]:
        """All answer choices once the draft is five_choice."""
        return self.target_terms + self.extra_distractors

    def reject(self, reason: str) -> "QuestionDraft":
        self.stage_status = STATUS_REJECTED
        self.rejection_reason = reason
        return self

    def to_dict(self) -> dict:
        return {
            "qs_id": self.qs_id,
            "language": self.language,
            "query_term": self.query_term,
            "relation": self.relation,
            "direction": self.direction,
            "answer_index": self.answer_index,
            "answer": self.answer,
            "co_targets": list(self.co_targets),
            "question_text": self.question_text,
            "extra_distractors": list(self.extra_distractors),
            "stage_status": self.stage_status,
            "rejection_reason": self.rejection_reason,
            "was_refined": self.was_refined,
            "passed_validation": self.passed_validation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QuestionDraft":
        return cls(
            qs_id=data["qs_id"],
            language=data["language"],
            query_term=data["query_term"],
            relation=data["relation"],
            direction=data["direction"],
            answer_index=data["answer_index"],
            answer=data["answer"],
            co_targets=tuple(data["co_targets"]),
            question_text=data["question_text"],
            extra_distractors=tuple(data["extra_distractors"]),
            stage_status=data["stage_status"],
            rejection_reason=data.get("rejection_reason"),
            was_refined=data.get("was_refined", False),
            passed_validation=data.get("passed_validation", False),
        )


def create_question(
    qs: QuestionSet,
    answer_index: int,
    client: LmClient,
    templates: dict[str, PromptTemplate],
) -> QuestionDraft:
    """Generate one question with targets[answer_index] as the answer."""
    if answer_index not in (0, 1, 2):
        raise ValueError("answer_index must be 0, 1, or 2")
    answer = qs.targets[answer_index]
    others = tuple(t for i, t in enumerate(qs.targets) if i != answer_index)
    draft = QuestionDraft(
        qs_id=qs.id,
        language=qs.language,
        query_term=qs.query_concept.term,
        relation=qs.relation,
        direction=qs.direction,
        answer_index=answer_index,
        answer=answer.term,
        co_targets=(others[0].term, others[1].term),
    )
    prompt = templates["create"].render(
        {
            "correct": answer.term,
            "distractor1": others[0].term,
            "distractor2": others[1].term,
        }
    )
    request = GenerationRequest.for_stage(
        "create", qs.language, prompt, tag=draft.tag
    )
    try:
        response = client.generate(request)
    except GenerationFailed:
        return draft.reject(REASON_GENERATION)
    draft.question_text = response.text.strip()
    return draft


def _single_sentence(text: str) -> bool:
    return sum(text.count(mark) for mark in _TERMINALS) == 1


def _superficial_hint(text: str, language: str) -> bool:
    if not re.search(r"\d", text):
        return False
    for lexeme in _COUNT_LEXEMES.get(language, ()):
        if re.search(rf"\d+\s*{re.escape(lexeme)}|{re.escape(lexeme)}\s*\d+", text):
            return True
    return False


def _check_rules(draft: QuestionDraft, client: LmClient) -> str | None:
    """First failing validation rule id, or None. Order: leakage, question
    mark, single sentence, moderation."""
    text = draft.question_text
    for term in draft.target_terms:
        if contains_term(text, term, draft.language):
            return REASON_LEAKAGE
    stripped = text.rstrip()
    if not stripped or not stripped.endswith(_QUESTION_MARKS):
        return REASON_QUESTION_MARK
    if not _single_sentence(stripped):
        return REASON_MULTI_SENTENCE
    verdict = client.moderate(text)
    if verdict.flagged:
        logger.warning("draft %s flagged by moderation: %s",
                       draft.tag, ", ".join(verdict.categories))
        return REASON_MODERATION
    return None


def validate_question(draft: QuestionDraft, client: LmClient) -> QuestionDraft:
    """created -> validated (re-validation keeps a refined draft refined)."""
    if draft.stage_status not in (STATUS_CREATED, STATUS_REFINED):
        raise ValueError(f"cannot validate draft in status {draft.stage_status}")
    if _superficial_hint(draft.question_text, draft.language):
        draft.superficial_warning = True
        logger.warning("draft %s hints at character counts", draft.tag)
    reason = _check_rules(draft, client)
    if reason is not None:
        return draft.reject(reason)
    draft.passed_validation = True
    if draft.stage_status == STATUS_CREATED:
        draft.stage_status = STATUS_VALIDATED
    return draft


def refine_question(
    draft: QuestionDraft,
    client: LmClient,
    templates: dict[str, PromptTemplate],
) -> QuestionDraft:
    """Ask for a fluency rewrite; re-validate whenever the text changed."""
    if draft.stage_status != STATUS_VALIDATED:
        raise ValueError(f"cannot refine draft in status {draft.stage_status}")
    prompt = templates["refine"].render({"question": draft.question_text})
    request = GenerationRequest.for_stage(
        "refine", draft.language, prompt, tag=draft.tag
    )
    try:
        response = client.generate(request)
    except GenerationFailed:
        logger.warning("refinement failed for %s, keeping original", draft.tag)
        draft.stage_status = STATUS_REFINED
        return draft
    rewritten = response.text.strip()
    if _squash_ws(rewritten) == _squash_ws(draft.question_text):
        draft.stage_status = STATUS_REFINED
        return draft
    draft.question_text = rewritten
    draft.was_refined = True
    draft.stage_status = STATUS_REFINED
    return validate_question(draft, client)


def parse_additional_choices(text: str) -> list[str] | None:
    obj = extract_json_object(text)
    if not obj:
        return None
    value = obj.get("additional_choice")
    if not isinstance(value, list) or len(value) != 2:
        return None
    if not all(isinstance(item, str) and item.strip() for item in value):
        return None
    return [item.strip() for item in value]


def add_distractors(
    draft: QuestionDraft,
    client: LmClient,
    templates: dict[str, PromptTemplate],
    max_retries: int = 3,
) -> QuestionDraft:
    """Augment to five choices with two generated distractors.

    The prompt sees only the three existing choices, never the question.
    Responses must parse to exactly two strings distinct from the existing
    choices and from each other; otherwise the call is retried up to
    max_retries times before the draft is rejected.
    """
    if draft.stage_status != STATUS_REFINED:
        raise ValueError(f"cannot add distractors in status {draft.stage_status}")
    prompt = templates["distract"].render(
        {
            "choice1": draft.answer,
            "choice2": draft.co_targets[0],
            "choice3": draft.co_targets[1],
        }
    )
    existing = {_norm_choice(t, draft.language) for t in draft.target_terms}
    for _ in range(1 + max_retries):
        request = GenerationRequest.for_stage(
            "distract", draft.language, prompt, tag=draft.tag, structured_json=True
        )
        try:
            response = client.generate(request)
        except GenerationFailed:
            return draft.reject(REASON_GENERATION)
        extras = parse_additional_choices(response.text)
        if extras is None:
            continue
        keys = [_norm_choice(e, draft.language) for e in extras]
        if keys[0] == keys[1] or any(k in existing for k in keys):
            continue
        draft.extra_distractors = (extras[0], extras[1])
        draft.stage_status = STATUS_FIVE_CHOICE
        return draft
    return draft.reject(REASON_DISTRACTORS)


def _norm_choice(text: str, language: str) -> str:
    key = _squash_ws(text)
    if is_cased(language):
        key = key.casefold()
    return key


def _run_stage(
    drafts: Iterable[QuestionDraft],
    fn: Callable[[QuestionDraft], QuestionDraft],
    max_workers: int,
) -> list[QuestionDraft]:
    items = list(drafts)
    if max_workers <= 1:
        return [fn(d) for d in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))


def _save_checkpoint(drafts: list[QuestionDraft], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for draft in drafts:
            fh.write(json.dumps(draft.to_dict(), ensure_ascii=False) + "\n")


def _load_checkpoint(path: Path) -> list[QuestionDraft]:
    drafts = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                drafts.append(QuestionDraft.from_dict(json.loads(line)))
    return drafts


def forge_questions(
    question_sets: Sequence[QuestionSet],
    client: LmClient,
    templates: dict[str, PromptTemplate],
    *,
    max_retries: int = 3,
    max_workers: int = 1,
    checkpoint_dir: str | Path | None = None,
    resume: bool = False,
) -> list[QuestionDraft]:
    """Run all four stages over every (question set, answer index) pair.

    Stage boundaries are barriers; within a stage, calls may run on a
    bounded thread pool, and output order is restored to (qs_id,
    answer_index) before the next stage. With a checkpoint directory each
    stage writes its output as JSONL; resume=True restarts after the
    latest finished stage.
    """

    def if_status(status: str, fn: Callable[[QuestionDraft], QuestionDraft]):
        return lambda d: fn(d) if d.stage_status == status else d

    stages: list[tuple[str, Callable]] = [
        (
            "stage1_created",
            lambda pairs: _run_stage(
                pairs,
                lambda p: create_question(p[0], p[1], client, templates),
                max_workers,
            ),
        ),
        (
            "stage2_validated",
            lambda drafts: _run_stage(
                drafts,
                if_status(STATUS_CREATED, lambda d: validate_question(d, client)),
                max_workers,
            ),
        ),
        (
            "stage3_refined",
            lambda drafts: _run_stage(
                drafts,
                if_status(
                    STATUS_VALIDATED,
                    lambda d: refine_question(d, client, templates),
                ),
                max_workers,
            ),
        ),
        (
            "stage4_five_choice",
            lambda drafts: _run_stage(
                drafts,
                if_status(
                    STATUS_REFINED,
                    lambda d: add_distractors(d, client, templates, max_retries),
                ),
                max_workers,
            ),
        ),
    ]

    directory = Path(checkpoint_dir) if checkpoint_dir else None
    start_index = 0
    current: list = [(qs, i) for qs in question_sets for i in range(3)]
    if resume and directory is not None:
        for index in range(len(stages) - 1, -1, -1):
            path = directory / f"{stages[index][0]}.jsonl"
            if path.exists():
                current = _load_checkpoint(path)
                start_index = index + 1
                logger.info("resuming after %s (%d drafts)",
                            stages[index][0], len(current))
                break

    for name, run in stages[start_index:]:
        current = run(current)
        current.sort(key=lambda d: (d.qs_id, d.answer_index))
        if directory is not None:
            _save_checkpoint(current, directory / f"{name}.jsonl")
    return current


@dataclass
class FunnelStats:
    """Per-language counts across the generation stages."""

    created: int = 0
    validated: int = 0
    refined_changed: int = 0
    five_choice: int = 0
    rejected_by_reason: dict[str, int] = field(default_factory=dict)

    @property
    def refinement_total(self) -> int:
        """Drafts that entered the refinement stage."""
        return self.validated

    def to_dict(self) -> dict:
        return {
            "created": self.created,
            "validated": self.validated,
            "refined_changed": self.refined_changed,
            "five_choice": self.five_choice,
            "rejected_by_reason": dict(sorted(self.rejected_by_reason.items())),
        }


def funnel_stats(drafts: Iterable[QuestionDraft]) -> FunnelStats:
    stats = FunnelStats()
    for d in drafts:
        stats.created += 1
        if d.stage_status == STATUS_REJECTED:
            reason = d.rejection_reason or "unknown"
            stats.rejected_by_reason[reason] = (
                stats.rejected_by_reason.get(reason, 0) + 1
            )
        if d.stage_status == STATUS_FIVE_CHOICE:
            stats.five_choice += 1
        if d.passed_validation:
            stats.validated += 1
            if d.was_refined:
                stats.refined_changed += 1
    return stats
