from __future__ import annotations

import pytest

from qaforge.prompts import (
    STAGES,
    SUPPORTED_LANGUAGES,
    PromptTemplate,
    TemplateError,
    load_template,
    load_templates,
)


def test_all_language_assets_load_and_validate():
    for language in SUPPORTED_LANGUAGES:
        templates = load_templates(language)
        assert set(templates) == set(STAGES)
        for template in templates.values():
            template.validate()


def test_create_render_inlines_choice_terms(en_templates):
    rendered = en_templates["create"].render(
        {"correct": "bake", "distractor1": "roast", "distractor2": "broil"}
    )
    assert '(a) The only correct answer is ["bake"].' in rendered
    assert '(b) The incorrect answers are ["roast", "broil"].' in rendered
    assert '(c) Do not use the words ["bake", "roast", "broil"]' in rendered
    assert "{correct}" not in rendered


def test_zero_placeholder_body_unchanged():
    template = PromptTemplate("en", "refine", "Fixed text, no slots.")
    assert template.render({}) == "Fixed text, no slots."


def test_missing_binding_names_placeholder(en_templates):
    with pytest.raises(TemplateError, match="question"):
        en_templates["refine"].render({})


def test_render_keeps_literal_format_hints(en_templates):
    rendered = en_templates["distract"].render(
        {"choice1": "marine life", "choice2": "earth", "choice3": "waves"}
    )
    assert "{'additional_choice':[]}" in rendered
    assert '["marine life", "earth", "waves"]' in rendered
    verify = en_templates["verify"].render(
        {
            "question": "How do we make a cake?",
            "choice_a": "roast",
            "choice_b": "broil",
            "choice_c": "grill",
            "choice_d": "toast",
            "choice_e": "bake",
        }
    )
    assert "{'answer': selected_answer}" in verify
    assert "(E) bake" in verify


def test_template_validate_flags_missing_required():
    broken = PromptTemplate("en", "verify", "Q: {question}")
    with pytest.raises(TemplateError, match="choice_a"):
        broken.validate()


def test_load_from_override_directory(tmp_path):
    (tmp_path / "en").mkdir()
    (tmp_path / "en" / "refine.txt").write_text("Rewrite: {question}", encoding="utf-8")
    template = load_template("en", "refine", tmp_path)
    assert template.render({"question": "Hi?"}) == "Rewrite: Hi?"
    with pytest.raises(TemplateError, match="no template asset"):
        load_template("en", "create", tmp_path)


def test_substitution_is_single_pass():
    template = PromptTemplate("en", "refine", "say {question}")
    assert template.render({"question": "{question}"}) == "say {question}"
