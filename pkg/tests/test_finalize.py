from __future__ import annotations

from collections import Counter

import pytest

from qaforge.finalize import (
    DIFFICULTY_EASY,
    DIFFICULTY_HARD,
    DIFFICULTY_UNTAGGED,
    LABELS,
    DatasetRecord,
    SPLIT_DEV,
    SPLIT_TEST,
    SPLIT_TRAIN,
    assemble_records,
    export_jsonl,
    import_jsonl,
    shuffle_and_label,
    split_dataset,
    summarize,
    write_splits,
)
from qaforge.generation import QuestionDraft
from qaforge.llm import CostLedger, ledger_report


def five_choice_draft(i: int = 0, language="en") -> QuestionDraft:
    return QuestionDraft(
        qs_id=f"qs{i:014d}",
        language=language,
        query_term="cake",
        relation="UsedFor",
        direction="forward",
        answer_index=i % 3,
        answer=f"answer{i:04d}",
        co_targets=(f"coa{i:04d}", f"cob{i:04d}"),
        question_text=f"Question number {i}?",
        extra_distractors=(f"exa{i:04d}", f"exb{i:04d}"),
        stage_status="five_choice",
    )


def make_record(i: int, difficulty=DIFFICULTY_EASY) -> DatasetRecord:
    labeled = shuffle_and_label(five_choice_draft(i), dataset_seed=7)
    provenance = dict(labeled.provenance)
    provenance["verification"] = difficulty
    return DatasetRecord(
        id=labeled.id,
        question=labeled.question,
        question_concept=labeled.question_concept,
        choices=labeled.choices,
        answerKey=labeled.answer_key,
        split="",
        difficulty=difficulty,
        provenance=provenance,
    )


def test_shuffle_assigns_five_labels_and_consistent_key():
    labeled = shuffle_and_label(five_choice_draft(1), dataset_seed=1)
    assert [c["label"] for c in labeled.choices] == list(LABELS)
    assert labeled.choice_text(labeled.answer_key) == "answer0001"
    assert len({c["text"] for c in labeled.choices}) == 5


def test_shuffle_deterministic_per_seed_and_id():
    one = shuffle_and_label(five_choice_draft(2), dataset_seed=5)
    two = shuffle_and_label(five_choice_draft(2), dataset_seed=5)
    other_seed = shuffle_and_label(five_choice_draft(2), dataset_seed=6)
    assert one.to_dict() == two.to_dict()
    assert [c["text"] for c in other_seed.choices] != [c["text"] for c in one.choices]


def test_shuffle_rejects_duplicate_choices():
    draft = five_choice_draft(3)
    draft.extra_distractors = ("answer0003", "exb0003")
    with pytest.raises(ValueError, match="duplicate"):
        shuffle_and_label(draft, dataset_seed=1)


def test_answer_key_histogram_roughly_uniform():
    # 1000 records; binomial(1000, 1/5) three-sigma band is about [162, 238],
    # comfortably inside the asserted [150, 250].
    counts = Counter(
        shuffle_and_label(five_choice_draft(i), dataset_seed=123).answer_key
        for i in range(1000)
    )
    assert set(counts) == set(LABELS)
    for label in LABELS:
        assert 150 <= counts[label] <= 250, counts


def test_split_exact_ratio_n10():
    records = [make_record(i) for i in range(10)]
    out = split_dataset(records, seed=1)
    by_split = Counter(r.split for r in out)
    assert by_split == {SPLIT_TRAIN: 8, SPLIT_DEV: 1, SPLIT_TEST: 1}


def test_split_empty():
    assert split_dataset([], seed=1) == []


def test_split_partition_and_difficulty_rules():
    records = [
        make_record(i, DIFFICULTY_EASY if i % 3 else DIFFICULTY_HARD)
        for i in range(97)
    ]
    out = split_dataset(records, seed=9)
    assert len(out) == 97
    by_split = Counter(r.split for r in out)
    assert by_split[SPLIT_TRAIN] == int(0.8 * 97)
    assert by_split[SPLIT_DEV] == int(0.1 * 97)
    assert by_split[SPLIT_TEST] == 97 - int(0.8 * 97) - int(0.1 * 97)
    for record in out:
        if record.split == SPLIT_TRAIN:
            assert record.difficulty == DIFFICULTY_UNTAGGED
            # raw signal preserved for analysis
            assert record.provenance["verification"] in (
                DIFFICULTY_EASY, DIFFICULTY_HARD,
            )
        else:
            assert record.difficulty in (DIFFICULTY_EASY, DIFFICULTY_HARD)


def test_split_deterministic_and_input_order_independent():
    records1 = [make_record(i) for i in range(50)]
    records2 = list(reversed([make_record(i) for i in range(50)]))
    out1 = split_dataset(records1, seed=4)
    out2 = split_dataset(records2, seed=4)
    assert [(r.id, r.split) for r in out1] == [(r.id, r.split) for r in out2]


def test_split_stratified_keeps_class_balance():
    records = [
        make_record(i, DIFFICULTY_EASY if i < 80 else DIFFICULTY_HARD)
        for i in range(100)
    ]
    out = split_dataset(records, seed=2, stratify=True)
    dev = [r for r in out if r.split == SPLIT_DEV]
    test = [r for r in out if r.split == SPLIT_TEST]
    assert Counter(r.difficulty for r in dev) == {DIFFICULTY_EASY: 8, DIFFICULTY_HARD: 2}
    assert Counter(r.difficulty for r in test) == {DIFFICULTY_EASY: 8, DIFFICULTY_HARD: 2}


def test_assemble_records_requires_verified():
    labeled = shuffle_and_label(five_choice_draft(0), dataset_seed=1)
    with pytest.raises(ValueError):
        assemble_records([(labeled, "maybe")])


def test_export_import_round_trip(tmp_path):
    records = [make_record(i) for i in range(3)]
    split_dataset(records, seed=1)
    path = tmp_path / "data.jsonl"
    assert export_jsonl(records, path) == 3
    loaded = import_jsonl(path)
    assert [r.to_dict() for r in loaded] == [r.to_dict() for r in records]


def test_export_cjk_byte_identical(tmp_path):
    record = make_record(0)
    record.question = "音を聞き分けるためには何をしますか？"
    record.choices[0]["text"] = "耳を澄ます"
    path = tmp_path / "ja.jsonl"
    export_jsonl([record], path)
    raw_first = path.read_bytes()
    reloaded = import_jsonl(path)
    export_jsonl(reloaded, path)
    assert path.read_bytes() == raw_first
    assert "耳を澄ます" in raw_first.decode("utf-8")  # not ascii-escaped


def test_import_truncated_line_names_line_number(tmp_path):
    records = [make_record(i) for i in range(2)]
    path = tmp_path / "data.jsonl"
    export_jsonl(records, path)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write('{"id": "broken"')
    with pytest.raises(ValueError, match="line 3"):
        import_jsonl(path)


def test_import_missing_field_names_line(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text('{"id": "x"}\n', encoding="utf-8")
    with pytest.raises(ValueError, match="line 1"):
        import_jsonl(path)


def test_write_splits_files(tmp_path):
    records = [make_record(i) for i in range(20)]
    split_dataset(records, seed=3)
    counts = write_splits(records, tmp_path)
    assert counts == {SPLIT_TRAIN: 16, SPLIT_DEV: 2, SPLIT_TEST: 2}
    for split in counts:
        assert (tmp_path / f"{split}.jsonl").exists()


def _refinement_fixture(total: int, refined: int) -> list[QuestionDraft]:
    drafts = []
    for i in range(total):
        draft = five_choice_draft(i)
        draft.passed_validation = True
        draft.was_refined = i < refined
        drafts.append(draft)
    return drafts


def test_summarize_refinement_percentage():
    drafts = _refinement_fixture(total=14722, refined=3654)
    summary = summarize(drafts=drafts)
    assert summary.refinement["total"] == 14722
    assert summary.refinement["refined"] == 3654
    assert abs(summary.refinement["pct"] - 24.82) <= 0.01


def test_summarize_all_easy_run():
    drafts = _refinement_fixture(total=10, refined=0)
    labeled = [shuffle_and_label(d, dataset_seed=1) for d in drafts]
    for q in labeled:
        q.verification = "easy"
    records = split_dataset(
        assemble_records([(q, DIFFICULTY_EASY) for q in labeled]), seed=1
    )
    summary = summarize(
        drafts=drafts, verified=labeled, records=records,
        ledger=ledger_report(CostLedger(), len(records)),
        removed=0, pending=0,
    )
    assert summary.verification["easy"] == 10
    assert summary.verification["needs_human"] == 0
    assert summary.verification["removed"] == 0
    assert summary.splits[SPLIT_DEV]["easy"] + summary.splits[SPLIT_DEV]["hard"] \
        == summary.splits[SPLIT_DEV]["total"]
    assert summary.gaps == []


def test_summarize_two_stage_counts_match_hand_count():
    # Hand-counted fixture: 6 drafts, 4 five_choice, 1 rejected at leakage,
    # 1 rejected at distractors; 5 passed validation.
    drafts = [five_choice_draft(i) for i in range(4)]
    leaked = five_choice_draft(4)
    leaked.stage_status = "rejected"
    leaked.rejection_reason = "leakage"
    leaked.passed_validation = False
    collided = five_choice_draft(5)
    collided.stage_status = "rejected"
    collided.rejection_reason = "distractor-collision"
    collided.passed_validation = True
    for d in drafts:
        d.passed_validation = True
    drafts += [leaked, collided]
    summary = summarize(drafts=drafts)
    assert summary.funnel["created"] == 6
    assert summary.funnel["five_choice"] == 4
    assert summary.funnel["validated"] == 5
    assert summary.funnel["rejected_by_reason"] == {
        "distractor-collision": 1,
        "leakage": 1,
    }


def test_summarize_flags_missing_inputs():
    summary = summarize()
    assert set(summary.gaps) == {"drafts", "verified", "records", "ledger"}


def test_record_cost_in_summary():
    from decimal import Decimal as D

    ledger = CostLedger({"m": (D("0.001"), D("0.002"))})
    ledger.add("create", "en", 1000, 500, "m")
    summary = summarize(ledger=ledger_report(ledger, question_count=1))
    assert summary.cost["total"] == "0.002"
    assert summary.cost["per_question"] == "0.002000"
