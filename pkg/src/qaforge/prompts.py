"""Per-language prompt templates for the generation and verification stages.

Templates live as UTF-8 text assets, one file per (language, stage).
Placeholders are bare lowercase identifiers in curly braces ({correct},
{question}, ...). Rendering is a single exact substitution pass: literal
braces that do not wrap an identifier (the JSON-format hints in the
distract and verify templates) pass through untouched.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

SUPPORTED_LANGUAGES = ("en", "ja", "zh", "de", "pt", "nl", "fr", "ru")
STAGES = ("create", "refine", "distract", "verify")

STAGE_PLACEHOLDERS: dict[str, frozenset[str]] = {
    "create": frozenset({"correct", "distractor1", "distractor2"}),
    "refine": frozenset({"question"}),
    "distract": frozenset({"choice1", "choice2", "choice3"}),
    "verify": frozenset(
        {"question", "choice_a", "choice_b", "choice_c", "choice_d", "choice_e"}
    ),
}

_PLACEHOLDER = re.compile(r"\{([a-z][a-z0-9_]*)\}")


class TemplateError(Exception):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    language: str
    stage: str
    body: str

    @property
    def placeholders(self) -> frozenset[str]:
        return frozenset(_PLACEHOLDER.findall(self.body))

    def validate(self) -> None:
        required = STAGE_PLACEHOLDERS.get(self.stage, frozenset())
        missing = required - self.placeholders
        if missing:
            raise TemplateError(
                f"{self.language}/{self.stage} template lacks placeholders: "
                + ", ".join(sorted(missing))
            )

    def render(self, bindings: Mapping[str, str]) -> str:
        """Substitute every placeholder; unknown names raise by name."""

        def repl(match: re.Match) -> str:
            name = match.group(1)
            if name not in bindings:
                raise TemplateError(f"missing binding for placeholder '{name}'")
            return str(bindings[name])

        return _PLACEHOLDER.sub(repl, self.body)


def _asset_root() -> Path:
    return Path(str(resources.files("qaforge") / "templates"))


def load_template(
    language: str, stage: str, directory: str | Path | None = None
) -> PromptTemplate:
    root = Path(directory) if directory is not None else _asset_root()
    path = root / language / f"{stage}.txt"
    if not path.is_file():
        raise TemplateError(f"no template asset at {path}")
    template = PromptTemplate(language, stage, path.read_text(encoding="utf-8"))
    template.validate()
    return template


def load_templates(
    language: str, directory: str | Path | None = None
) -> dict[str, PromptTemplate]:
    """All four stage templates for one language."""
    return {stage: load_template(language, stage, directory) for stage in STAGES}
