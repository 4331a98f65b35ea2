"""End-to-end orchestration: graph -> question sets -> drafts -> dataset.

The human-verification phase is pluggable: interactive runs leave it to
the annotation service, while offline runs supply a callable producing
the scripted verdicts for each task.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

from .finalize import (
    DatasetRecord,
    DIFFICULTY_EASY,
    DIFFICULTY_HARD,
    LabeledQuestion,
    SplitSummary,
    VERIFY_EASY,
    VERIFY_NEEDS_HUMAN,
    assemble_records,
    shuffle_and_label,
    split_dataset,
    summarize,
)
from .generation import STATUS_FIVE_CHOICE, QuestionDraft, forge_questions
from .kb import KnowledgeGraph
from .llm import LmClient, ledger_report
from .prompts import PromptTemplate
from .question_sets import FilterReport, QuestionSet, extract_question_sets
from .verification import (
    STATUS_RETAINED,
    TaskStore,
    VerdictPolicy,
    VerificationTask,
    lm_verify,
)

logger = logging.getLogger(__name__)

# Verdict provider: task -> sequence of (annotator_id, verdict) pairs.
VoteScript = Callable[[VerificationTask], Sequence[tuple[str, str]]]


@dataclass
class PipelineResult:
    question_sets: list[QuestionSet]
    filter_report: FilterReport
    drafts: list[QuestionDraft]
    labeled: list[LabeledQuestion]
    tasks: list[VerificationTask]
    records: list[DatasetRecord]
    summary: SplitSummary
    removed: int = 0
    pending: int = 0


def verify_labeled(
    labeled: Sequence[LabeledQuestion],
    client: LmClient,
    templates: dict[str, PromptTemplate],
) -> list[LabeledQuestion]:
    """Set verification to easy/needs_human on every labeled question."""
    for question in labeled:
        outcome, _ = lm_verify(question, client, templates)
        question.verification = outcome
    return list(labeled)


def apply_human_votes(
    tasks: Sequence[VerificationTask],
    votes: VoteScript,
    policy: VerdictPolicy,
) -> None:
    """Resolve tasks offline with scripted votes (replaces the live service)."""
    store = TaskStore(policy)
    store.add_tasks(tasks)
    for task in tasks:
        for annotator_id, verdict in votes(task):
            if task.status != "pending":
                break
            store.record_vote(task.task_id, annotator_id, verdict)


def run_pipeline(
    graph: KnowledgeGraph,
    client: LmClient,
    templates: dict[str, PromptTemplate],
    *,
    qs_count: int = 6000,
    qs_seed: int = 0,
    dataset_seed: int = 0,
    split_seed: int | None = None,
    policy: VerdictPolicy | None = None,
    human_votes: VoteScript | None = None,
    stratify: bool = False,
    max_retries: int = 3,
    max_workers: int = 1,
) -> PipelineResult:
    """Run extraction, generation, verification, and finalization."""
    if split_seed is None:
        split_seed = dataset_seed
    if policy is None:
        policy = VerdictPolicy("unanimous", 2)

    question_sets, report = extract_question_sets(graph, qs_count, qs_seed)
    logger.info("extracted %d question sets (%s)", len(question_sets),
                report.to_dict())

    drafts = forge_questions(
        question_sets, client, templates,
        max_retries=max_retries, max_workers=max_workers,
    )
    finished = [d for d in drafts if d.stage_status == STATUS_FIVE_CHOICE]
    labeled = []
    for draft in finished:
        try:
            labeled.append(shuffle_and_label(draft, dataset_seed))
        except ValueError as exc:
            # Upstream distinctness checks make this unreachable in normal
            # runs; drop only the offending record if it ever happens.
            logger.error("dropping %s: %s", draft.tag, exc)

    verify_labeled(labeled, client, templates)
    needs_human = [q for q in labeled if q.verification == VERIFY_NEEDS_HUMAN]
    tasks = [VerificationTask.from_labeled(q) for q in needs_human]
    if human_votes is not None:
        apply_human_votes(tasks, human_votes, policy)
    status_by_id = {t.task_id: t.status for t in tasks}

    verified_pairs: list[tuple[LabeledQuestion, str]] = []
    removed = pending = 0
    for question in labeled:
        if question.verification == VERIFY_EASY:
            verified_pairs.append((question, DIFFICULTY_EASY))
            continue
        status = status_by_id.get(question.id, "pending")
        if status == STATUS_RETAINED:
            verified_pairs.append((question, DIFFICULTY_HARD))
        elif status == "pending":
            pending += 1
        else:
            removed += 1
    if pending:
        logger.warning("%d questions still pending human verification; "
                       "they are excluded from the dataset", pending)

    records = assemble_records(verified_pairs)
    records = split_dataset(records, split_seed, stratify=stratify)
    summary = summarize(
        drafts=drafts,
        verified=labeled,
        records=records,
        ledger=ledger_report(client.ledger, question_count=len(records)),
        removed=removed,
        pending=pending,
    )
    return PipelineResult(
        question_sets=question_sets,
        filter_report=report,
        drafts=drafts,
        labeled=labeled,
        tasks=tasks,
        records=records,
        summary=summary,
        removed=removed,
        pending=pending,
    )
