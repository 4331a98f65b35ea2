"""Concept-graph driven multilingual multiple-choice QA dataset toolkit."""

__version__ = "0.1.0"

from .kb import Concept, KnowledgeGraph, Triple, parse_dump
from .question_sets import (
    QuestionSet,
    enumerate_question_sets,
    extract_question_sets,
    filter_question_set,
    sample_question_sets,
    whitelist_relations,
)

__all__ = [
    "Concept",
    "KnowledgeGraph",
    "Triple",
    "QuestionSet",
    "parse_dump",
    "enumerate_question_sets",
    "extract_question_sets",
    "filter_question_set",
    "sample_question_sets",
    "whitelist_relations",
    "__version__",
]
