"""Command-line interface for every pipeline stage.

Offline runs use `--backend mock`, which scripts deterministic but
plausible responses; real runs read provider settings from the
environment (QAFORGE_BASE_URL, QAFORGE_MODEL, QAFORGE_API_KEY).
"""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import evaluation, finalize
from .generation import STATUS_FIVE_CHOICE, QuestionDraft, forge_questions
from .kb import KnowledgeGraph, open_dump, parse_dump
from .llm import HttpBackend, LmClient, demo_backend, load_price_table
from .pipeline import verify_labeled
from .prompts import load_templates
from .question_sets import QuestionSet, extract_question_sets
from .verification import TaskStore, VerdictPolicy, VerificationTask

logger = logging.getLogger(__name__)


def _make_client(backend: str, price_table_path: str | None, retry_cap: int) -> LmClient:
    table = load_price_table(price_table_path) if price_table_path else None
    if backend == "mock":
        return LmClient(demo_backend(), price_table=table, retry_cap=retry_cap)
    return LmClient(HttpBackend.from_env(), price_table=table, retry_cap=retry_cap)


def _write_jsonl(path: Path, items) -> int:
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in items:
            fh.write(json.dumps(item, ensure_ascii=False) + "\n")
            count += 1
    return count


def _read_jsonl(path: Path) -> list[dict]:
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                items.append(json.loads(line))
    return items


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool) -> None:
    """Build and evaluate concept-graph multiple-choice QA datasets."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


@main.command()
@click.option("--dump", required=True, type=click.Path(exists=True))
@click.option("--lang", required=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--summary", "summary_path", type=click.Path(), default=None)
def ingest(dump: str, lang: str, out: str, summary_path: str | None) -> None:
    """Parse an assertion dump into a binary graph snapshot."""
    with open_dump(dump) as stream:
        graph = parse_dump(stream, lang)
    graph.save(out)
    info = graph.ingest_summary.to_dict()
    click.echo(json.dumps(info))
    if summary_path:
        Path(summary_path).write_text(json.dumps(info, indent=2), encoding="utf-8")


@main.command()
@click.option("--snapshot", required=True, type=click.Path(exists=True))
@click.option("--lang", default=None, help="Expected language (sanity check).")
@click.option("--n", default=6000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--report", "report_path", type=click.Path(), default=None)
def extract(snapshot: str, lang: str | None, n: int, seed: int, out: str,
            report_path: str | None) -> None:
    """Enumerate, filter, and sample question sets from a snapshot."""
    graph = KnowledgeGraph.load(snapshot)
    if lang and graph.language != lang:
        raise click.ClickException(
            f"snapshot is {graph.language}, expected {lang}"
        )
    sampled, report = extract_question_sets(graph, n, seed)
    _write_jsonl(Path(out), (qs.to_dict() for qs in sampled))
    click.echo(json.dumps(report.to_dict()))
    if report_path:
        Path(report_path).write_text(
            json.dumps(report.to_dict(), indent=2), encoding="utf-8"
        )


@main.command()
@click.option("--qs", "qs_path", required=True, type=click.Path(exists=True))
@click.option("--backend", default="mock", type=click.Choice(["mock", "http"]),
              show_default=True)
@click.option("--templates", "template_dir", type=click.Path(exists=True),
              default=None, help="Override the bundled prompt assets.")
@click.option("--out", required=True, type=click.Path())
@click.option("--checkpoint-dir", type=click.Path(), default=None)
@click.option("--resume", is_flag=True, help="Reuse finished stage checkpoints.")
@click.option("--max-retries", default=3, show_default=True)
@click.option("--retry-cap", default=3, show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--price-table", type=click.Path(exists=True), default=None)
def generate(qs_path: str, backend: str, template_dir: str | None, out: str,
             checkpoint_dir: str | None, resume: bool, max_retries: int,
             retry_cap: int, workers: int, price_table: str | None) -> None:
    """Run create/validate/refine/distract over a question set file."""
    question_sets = [QuestionSet.from_dict(d) for d in _read_jsonl(Path(qs_path))]
    if not question_sets:
        raise click.ClickException("no question sets in input")
    language = question_sets[0].language
    templates = load_templates(language, template_dir)
    client = _make_client(backend, price_table, retry_cap)
    drafts = forge_questions(
        question_sets, client, templates,
        max_retries=max_retries, max_workers=workers,
        checkpoint_dir=checkpoint_dir, resume=resume,
    )
    _write_jsonl(Path(out), (d.to_dict() for d in drafts))
    finished = sum(1 for d in drafts if d.stage_status == STATUS_FIVE_CHOICE)
    click.echo(f"{finished}/{len(drafts)} drafts reached five choices")


@main.command("verify-lm")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--backend", default="mock", type=click.Choice(["mock", "http"]),
              show_default=True)
@click.option("--templates", "template_dir", type=click.Path(exists=True), default=None)
@click.option("--dataset-seed", default=0, show_default=True,
              help="Seed for the choice shuffle applied before verification.")
@click.option("--retry-cap", default=3, show_default=True)
def verify_lm(in_path: str, out: str, backend: str, template_dir: str | None,
              dataset_seed: int, retry_cap: int) -> None:
    """Label choices, then split questions into easy / needs_human."""
    drafts = [QuestionDraft.from_dict(d) for d in _read_jsonl(Path(in_path))]
    finished = [d for d in drafts if d.stage_status == STATUS_FIVE_CHOICE]
    if not finished:
        raise click.ClickException("no five-choice drafts in input")
    language = finished[0].language
    templates = load_templates(language, template_dir)
    client = _make_client(backend, None, retry_cap)
    labeled = [finalize.shuffle_and_label(d, dataset_seed) for d in finished]
    verify_labeled(labeled, client, templates)
    _write_jsonl(Path(out), (q.to_dict() for q in labeled))
    easy = sum(1 for q in labeled if q.verification == finalize.VERIFY_EASY)
    click.echo(f"easy={easy} needs_human={len(labeled) - easy}")


def _load_labeled(path: Path) -> list[finalize.LabeledQuestion]:
    return [finalize.LabeledQuestion.from_dict(d) for d in _read_jsonl(path)]


@main.command()
@click.option("--tasks", "labeled_path", required=True, type=click.Path(exists=True),
              help="Labeled question file from verify-lm.")
@click.option("--journal", required=True, type=click.Path())
@click.option("--policy", default="unanimous:2", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--static", "static_dir", type=click.Path(exists=True), default=None)
@click.option("--hide-gold", is_flag=True, help="Human-baseline mode.")
def serve(labeled_path: str, journal: str, policy: str, port: int, host: str,
          static_dir: str | None, hide_gold: bool) -> None:
    """Serve the needs_human queue to annotators over HTTP."""
    from .service import serve as run_service

    labeled = _load_labeled(Path(labeled_path))
    queue = [
        VerificationTask.from_labeled(q)
        for q in labeled
        if q.verification == finalize.VERIFY_NEEDS_HUMAN
    ]
    store = TaskStore(VerdictPolicy.parse(policy), journal)
    store.add_tasks(queue)
    applied = store.load_journal()
    click.echo(f"serving {len(queue)} tasks ({applied} journaled votes replayed)")
    run_service(store, host=host, port=port, hide_gold=hide_gold,
                static_dir=static_dir)


@main.command("finalize")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--votes", "journal", type=click.Path(exists=True), default=None)
@click.option("--policy", default="unanimous:2", show_default=True)
@click.option("--seed", required=True, type=int)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--summary", "summary_path", type=click.Path(), default=None)
@click.option("--stratify", is_flag=True)
def finalize_cmd(in_path: str, journal: str | None, policy: str, seed: int,
                 out_dir: str, summary_path: str | None, stratify: bool) -> None:
    """Merge verification outcomes and write train/dev/test files."""
    labeled = _load_labeled(Path(in_path))
    statuses: dict[str, str] = {}
    if journal:
        queue = [
            VerificationTask.from_labeled(q)
            for q in labeled
            if q.verification == finalize.VERIFY_NEEDS_HUMAN
        ]
        store = TaskStore.replay(queue, journal, VerdictPolicy.parse(policy))
        statuses = store.statuses()

    pairs = []
    removed = pending = 0
    for question in labeled:
        if question.verification == finalize.VERIFY_EASY:
            pairs.append((question, finalize.DIFFICULTY_EASY))
        elif statuses.get(question.id) == "retained":
            pairs.append((question, finalize.DIFFICULTY_HARD))
        elif statuses.get(question.id) == "removed":
            removed += 1
        else:
            pending += 1
    if pending:
        click.echo(f"warning: {pending} questions lack a human verdict and "
                   "are excluded", err=True)

    records = finalize.assemble_records(pairs)
    records = finalize.split_dataset(records, seed, stratify=stratify)
    counts = finalize.write_splits(records, out_dir)
    summary = finalize.summarize(
        verified=labeled, records=records, removed=removed, pending=pending
    )
    if summary_path:
        Path(summary_path).write_text(
            json.dumps(summary.to_dict(), indent=2, ensure_ascii=False),
            encoding="utf-8",
        )
    click.echo(json.dumps(counts))


@main.group("eval")
def eval_group() -> None:
    """Score predictions and derive transfer analyses."""


@eval_group.command("score")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--predictions", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", type=click.Path(), default=None)
def eval_score(data: str, predictions: str, report_path: str | None) -> None:
    records = finalize.import_jsonl(data)
    preds = evaluation.load_predictions(predictions, {r.id for r in records})
    report = evaluation.score(records, preds)
    click.echo(json.dumps(report.to_dict()))

    def fmt(value):
        return "-" if value is None else f"{value:.1f}"

    click.echo(evaluation.format_table(
        ["subset", "accuracy", "n"],
        [
            ["overall", fmt(report.overall), report.total],
            ["easy", fmt(report.easy), report.easy_total],
            ["hard", fmt(report.hard), report.hard_total],
        ],
    ))
    if report_path:
        Path(report_path).write_text(
            json.dumps(report.to_dict(), indent=2), encoding="utf-8"
        )


@eval_group.command("run")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--train", "train_path", type=click.Path(exists=True), default=None)
@click.option("-k", "--shots", default=0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--lang", required=True, help="Template language for prompts.")
@click.option("--backend", default="mock", type=click.Choice(["mock", "http"]),
              show_default=True)
@click.option("--templates", "template_dir", type=click.Path(exists=True), default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--resume", is_flag=True)
def eval_run(data: str, train_path: str | None, shots: int, seed: int, lang: str,
             backend: str, template_dir: str | None, out: str, resume: bool) -> None:
    records = finalize.import_jsonl(data)
    train = finalize.import_jsonl(train_path) if train_path else []
    templates = load_templates(lang, template_dir)
    client = _make_client(backend, None, retry_cap=3)
    _, report = evaluation.run_generative_eval(
        records, client, templates,
        k=shots, train=train, seed=seed, language=lang,
        out_path=out, resume=resume,
    )
    click.echo(json.dumps(report.to_dict()))


@eval_group.command("transfer")
@click.option("--grid", required=True, type=click.Path(exists=True),
              help="JSON {train_lang: {eval_lang: accuracy}}.")
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_transfer(grid: str, out_path: str | None) -> None:
    raw = json.loads(Path(grid).read_text(encoding="utf-8"))
    normalized = evaluation.transfer_matrix(raw)
    languages = sorted(normalized)
    rows = [
        [train] + [f"{normalized[train].get(e, float('nan')):.1f}" for e in languages]
        for train in languages
    ]
    click.echo(evaluation.format_table(["train\\eval"] + languages, rows))
    if out_path:
        Path(out_path).write_text(json.dumps(normalized, indent=2), encoding="utf-8")


@eval_group.command("baseline")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--n", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(),
              help="Task file consumable by `serve` (policy majority:5).")
def eval_baseline(data: str, n: int, seed: int, out: str) -> None:
    """Sample records as human-baseline annotation tasks."""
    records = finalize.import_jsonl(data)
    tasks = evaluation.sample_for_baseline(records, n=n, seed=seed)
    by_id = {r.id: r for r in records}
    rows = []
    for task in tasks:
        record = by_id[task.task_id]
        rows.append({
            "id": record.id,
            "language": "",
            "question": record.question,
            "question_concept": record.question_concept,
            "choices": record.choices,
            "answerKey": record.answerKey,
            "provenance": record.provenance,
            "verification": finalize.VERIFY_NEEDS_HUMAN,
        })
    _write_jsonl(Path(out), rows)
    click.echo(f"wrote {len(rows)} baseline tasks; serve them with "
               "--policy majority:5 --hide-gold")


@eval_group.command("baseline-score")
@click.option("--tasks", "tasks_path", required=True, type=click.Path(exists=True))
@click.option("--journal", required=True, type=click.Path(exists=True))
@click.option("--policy", default="majority:5", show_default=True)
def eval_baseline_score(tasks_path: str, journal: str, policy: str) -> None:
    """Resolve baseline votes and report the retained share."""
    labeled = _load_labeled(Path(tasks_path))
    queue = [VerificationTask.from_labeled(q) for q in labeled]
    store = TaskStore.replay(queue, journal, VerdictPolicy.parse(policy))
    statuses = store.statuses()
    accuracy = evaluation.baseline_accuracy(statuses)
    resolved = sum(1 for s in statuses.values() if s != "pending")
    click.echo(json.dumps({
        "accuracy": accuracy,
        "resolved": resolved,
        "total": len(statuses),
    }))


@eval_group.command("delta")
@click.option("--mono", required=True, type=click.Path(exists=True))
@click.option("--multi", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_delta(mono: str, multi: str, out_path: str | None) -> None:
    mono_scores = json.loads(Path(mono).read_text(encoding="utf-8"))
    multi_scores = json.loads(Path(multi).read_text(encoding="utf-8"))
    deltas = evaluation.delta_table(mono_scores, multi_scores)
    rows = [
        [lang, f"{mono_scores[lang]:.1f}", f"{multi_scores[lang]:.1f}",
         f"{deltas[lang]:+.1f}"]
        for lang in sorted(deltas)
    ]
    click.echo(evaluation.format_table(["lang", "mono", "multi", "delta"], rows))
    if out_path:
        Path(out_path).write_text(json.dumps(deltas, indent=2), encoding="utf-8")


if __name__ == "__main__":
    main(sys.argv[1:])
