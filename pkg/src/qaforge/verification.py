"""Two-phase quality verification.

Phase one asks the LM to answer every labeled five-choice question: a
correct answer marks the question Easy. Phase two queues everything the
LM missed for human annotators; a verdict policy (unanimous or majority)
turns their votes into retained (Hard) or removed. After both phases a
question is exactly one of Easy, Hard, or removed.
"""
from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .finalize import LabeledQuestion, VERIFY_EASY, VERIFY_NEEDS_HUMAN
from .llm import GenerationFailed, GenerationRequest, LmClient, extract_json_object
from .prompts import PromptTemplate

VALID_KEYS = ("A", "B", "C", "D", "E")

STATUS_PENDING = "pending"
STATUS_RETAINED = "retained"
STATUS_REMOVED = "removed"

VERDICT_VALID = "valid"
VERDICT_INVALID = "invalid"


class DuplicateVoteError(Exception):
    """One annotator may vote once per task."""


class TaskResolvedError(Exception):
    """Votes are only accepted while a task is pending."""


class UnknownTaskError(KeyError):
    pass


_KEY_ONLY = re.compile(r"\s*\(?\s*([A-Ea-e])\s*[\)\.]?\s*")


def parse_answer_key(text: str) -> Optional[str]:
    """Extract a single answer key A-E, or None when unparseable.

    Accepts a JSON object carrying "answer" (with surrounding prose
    tolerated) and bare variants like "(a)" or "B."; everything else is
    unparseable.
    """
    obj = extract_json_object(text)
    if obj is not None:
        value = obj.get("answer")
        if not isinstance(value, str):
            return None
        match = _KEY_ONLY.fullmatch(value)
        return match.group(1).upper() if match else None
    match = _KEY_ONLY.fullmatch(text)
    return match.group(1).upper() if match else None


@dataclass
class LmAnswer:
    question_id: str
    selected_key: Optional[str]  # None == unparseable
    raw_text: str


def lm_verify(
    question: LabeledQuestion,
    client: LmClient,
    templates: dict[str, PromptTemplate],
) -> tuple[str, LmAnswer]:
    """Returns (outcome, answer) with outcome easy | needs_human.

    Robust by construction: generation failures and unparseable outputs
    fall to needs_human, never raise.
    """
    bindings = {"question": question.question}
    for choice in question.choices:
        bindings[f"choice_{choice['label'].lower()}"] = choice["text"]
    prompt = templates["verify"].render(bindings)
    request = GenerationRequest.for_stage(
        "verify", question.language, prompt, tag=question.id, structured_json=True
    )
    try:
        response = client.generate(request)
    except GenerationFailed:
        return VERIFY_NEEDS_HUMAN, LmAnswer(question.id, None, "")
    key = parse_answer_key(response.text)
    answer = LmAnswer(question.id, key, response.text)
    if key is not None and key == question.answer_key:
        return VERIFY_EASY, answer
    return VERIFY_NEEDS_HUMAN, answer


@dataclass(frozen=True)
class AnnotationVote:
    task_id: str
    annotator_id: str
    verdict: str
    timestamp: float = field(default_factory=time.time)

    def __post_init__(self) -> None:
        if self.verdict not in (VERDICT_VALID, VERDICT_INVALID):
            raise ValueError(f"bad verdict {self.verdict!r}")

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "annotator_id": self.annotator_id,
            "verdict": self.verdict,
            "timestamp": self.timestamp,
        }


@dataclass(frozen=True)
class VerdictPolicy:
    kind: str  # unanimous | majority
    n: int

    def __post_init__(self) -> None:
        if self.kind not in ("unanimous", "majority"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("policy needs at least one vote")

    @classmethod
    def parse(cls, spec: str) -> "VerdictPolicy":
        """Parse "unanimous:2" / "majority:5"."""
        kind, _, count = spec.partition(":")
        return cls(kind, int(count or 0))

    def decide(self, votes: Iterable[AnnotationVote]) -> str:
        """pending | retained | removed given the votes so far.

        Unanimity short-circuits on the first invalid vote. Majority
        resolves as soon as the outcome cannot change; a tie at n votes
        removes (retention needs strictly more valid than invalid).
        """
        valid = sum(1 for v in votes if v.verdict == VERDICT_VALID)
        invalid = sum(1 for v in votes if v.verdict == VERDICT_INVALID)
        if self.kind == "unanimous":
            if invalid > 0:
                return STATUS_REMOVED
            if valid >= self.n:
                return STATUS_RETAINED
            return STATUS_PENDING
        remaining = self.n - valid - invalid
        if valid - invalid > remaining:
            return STATUS_RETAINED
        if invalid - valid >= remaining:
            return STATUS_REMOVED
        return STATUS_PENDING


@dataclass
class VerificationTask:
    task_id: str
    question: str
    choices: list[dict]
    gold_key: str
    status: str = STATUS_PENDING
    votes: list[AnnotationVote] = field(default_factory=list)

    @classmethod
    def from_labeled(cls, labeled: LabeledQuestion) -> "VerificationTask":
        return cls(
            task_id=labeled.id,
            question=labeled.question,
            choices=list(labeled.choices),
            gold_key=labeled.answer_key,
        )

    def has_vote_from(self, annotator_id: str) -> bool:
        return any(v.annotator_id == annotator_id for v in self.votes)

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "question": self.question,
            "choices": self.choices,
            "gold_key": self.gold_key,
            "status": self.status,
            "votes": [v.to_dict() for v in self.votes],
        }


def resolve_task(task: VerificationTask, policy: VerdictPolicy) -> str:
    """Apply the policy; resolving an already-resolved task is a no-op."""
    if task.status != STATUS_PENDING:
        return task.status
    decision = policy.decide(task.votes)
    if decision != STATUS_PENDING:
        task.status = decision
    return decision


class TaskStore:
    """Task state with per-task serialized transitions and a vote journal.

    The journal is append-only JSON lines ({"type": "vote", ...}); a
    restarted store replays it over the same task set and reaches the
    same statuses.
    """

    def __init__(
        self,
        policy: VerdictPolicy,
        journal_path: str | Path | None = None,
    ) -> None:
        self.policy = policy
        self.journal_path = Path(journal_path) if journal_path else None
        self.tasks: dict[str, VerificationTask] = {}
        self._lock = threading.Lock()

    def add_tasks(self, tasks: Iterable[VerificationTask]) -> None:
        with self._lock:
            for task in tasks:
                self.tasks[task.task_id] = task

    def load_journal(self) -> int:
        """Replay the journal over the current tasks; returns votes applied."""
        if self.journal_path is None or not self.journal_path.exists():
            return 0
        applied = 0
        with open(self.journal_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                if entry.get("type") != "vote":
                    continue
                try:
                    self._apply_vote(
                        entry["task_id"],
                        entry["annotator_id"],
                        entry["verdict"],
                        entry.get("timestamp", 0.0),
                    )
                    applied += 1
                except (DuplicateVoteError, TaskResolvedError, UnknownTaskError):
                    continue
        return applied

    def _journal(self, vote: AnnotationVote) -> None:
        if self.journal_path is None:
            return
        entry = {"type": "vote", **vote.to_dict()}
        with open(self.journal_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    def _apply_vote(
        self, task_id: str, annotator_id: str, verdict: str, timestamp: float
    ) -> VerificationTask:
        task = self.tasks.get(task_id)
        if task is None:
            raise UnknownTaskError(task_id)
        if task.has_vote_from(annotator_id):
            raise DuplicateVoteError(f"{annotator_id} already voted on {task_id}")
        if task.status != STATUS_PENDING:
            raise TaskResolvedError(f"{task_id} is already {task.status}")
        task.votes.append(AnnotationVote(task_id, annotator_id, verdict, timestamp))
        resolve_task(task, self.policy)
        return task

    def record_vote(
        self, task_id: str, annotator_id: str, verdict: str
    ) -> VerificationTask:
        if verdict not in (VERDICT_VALID, VERDICT_INVALID):
            raise ValueError(f"bad verdict {verdict!r}")
        with self._lock:
            task = self._apply_vote(task_id, annotator_id, verdict, time.time())
            self._journal(task.votes[-1])
            return task

    def next_for(self, annotator_id: str) -> Optional[VerificationTask]:
        """Lowest-id pending task this annotator has not voted on."""
        with self._lock:
            for task_id in sorted(self.tasks):
                task = self.tasks[task_id]
                if task.status == STATUS_PENDING and not task.has_vote_from(
                    annotator_id
                ):
                    return task
            return None

    def progress(self) -> dict:
        with self._lock:
            counts = {STATUS_PENDING: 0, STATUS_RETAINED: 0, STATUS_REMOVED: 0}
            for task in self.tasks.values():
                counts[task.status] += 1
            counts["total"] = len(self.tasks)
            return counts

    def statuses(self) -> dict[str, str]:
        with self._lock:
            return {tid: t.status for tid, t in self.tasks.items()}

    @classmethod
    def replay(
        cls,
        tasks: Iterable[VerificationTask],
        journal_path: str | Path,
        policy: VerdictPolicy,
    ) -> "TaskStore":
        """Fresh store with the journal applied sequentially."""
        store = cls(policy)
        store.add_tasks(
            VerificationTask(t.task_id, t.question, list(t.choices), t.gold_key)
            for t in tasks
        )
        store.journal_path = Path(journal_path)
        store.load_journal()
        store.journal_path = None
        return store
