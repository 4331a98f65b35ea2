"""Shared fixtures: synthetic dumps, scripted backends, independent oracles."""
from __future__ import annotations

import hashlib
import itertools
import json
import random
from collections import defaultdict

from qaforge.llm import MockBackend
from qaforge.question_sets import RELATION_WHITELIST

LETTERS = "ABCDE"


def dump_line(lang: str, source: str, relation: str, target: str,
              start_suffix: str = "", end_suffix: str = "") -> str:
    """One well-formed assertion line in the 5-field tab layout."""
    return "\t".join(
        [
            f"/a/[/r/{relation}/,/c/{lang}/{source}/,/c/{lang}/{target}/]",
            f"/r/{relation}",
            f"/c/{lang}/{source}{start_suffix}",
            f"/c/{lang}/{target}{end_suffix}",
            json.dumps({"weight": 1.0}),
        ]
    )


def stable_digest(text: str) -> str:
    return hashlib.md5(text.encode("utf-8")).hexdigest()


# -- independent brute-force oracle ------------------------------------------


def _oracle_length_ok(term: str) -> bool:
    return term.count(" ") + 1 <= 4 and len(term) >= 2


def _oracle_conflict(a: str, b: str, synonyms: set[frozenset]) -> bool:
    if frozenset((a, b)) in synonyms:
        return True
    return a in b or b in a


def brute_force_retained_keys(
    triples: list[tuple[str, str, str]]
) -> set[tuple[str, str, str]]:
    """Literal re-derivation of the (query, relation, direction) keys that
    survive the three extraction rules, straight from the raw triples.

    Independent of the production path: builds its own neighbor maps and
    synonym set, and decides trio existence by exhaustive enumeration.
    """
    unique = set(triples)
    synonyms: set[frozenset] = {
        frozenset((s, t)) for s, r, t in unique if r == "Synonym"
    }
    neighbor_maps = {
        "forward": defaultdict(set),
        "backward": defaultdict(set),
    }
    for s, r, t in unique:
        neighbor_maps["forward"][(s, r)].add(t)
        neighbor_maps["backward"][(t, r)].add(s)

    keys: set[tuple[str, str, str]] = set()
    for direction, table in neighbor_maps.items():
        for (query, relation), neighbors in table.items():
            if relation not in RELATION_WHITELIST:
                continue
            if not _oracle_length_ok(query):
                continue
            pool = [
                n
                for n in neighbors
                if _oracle_length_ok(n) and not _oracle_conflict(query, n, synonyms)
            ]
            if len(pool) < 3:
                continue
            for trio in itertools.combinations(sorted(pool), 3):
                if all(
                    not _oracle_conflict(a, b, synonyms)
                    for a, b in itertools.combinations(trio, 2)
                ):
                    keys.add((query, relation, direction))
                    break
    return keys


def random_triples(rng: random.Random, max_triples: int = 500) -> list[tuple[str, str, str]]:
    """Random clustered graphs with deliberate filter bait.

    Mixes whitelisted and off-list relations, short and overlong terms,
    substring families, and synonym edges so every rule fires somewhere.
    """
    base_vocab = [
        "cat", "cats", "dog", "fish", "bird", "tree", "house", "car", "sun",
        "moon", "star", "stars", "water", "fire", "book", "music", "stone",
        "a", "b", "big", "large", "small", "cold warm mild hot extra",
        "green", "blue", "light", "lightning", "rain", "rainbow",
    ]
    vocab = base_vocab + [f"term{i:02d}" for i in range(40)]
    relations = list(RELATION_WHITELIST) + ["RelatedTo", "IsA", "FormOf"]
    n_triples = rng.randint(30, max_triples)
    triples = []
    n_hubs = max(3, n_triples // 8)
    hubs = rng.sample(vocab, min(n_hubs, len(vocab)))
    for _ in range(n_triples):
        relation = rng.choice(relations)
        if rng.random() < 0.7:
            source = rng.choice(hubs)
            target = rng.choice(vocab)
        else:
            source = rng.choice(vocab)
            target = rng.choice(hubs)
        triples.append((source, relation, target))
    # Synonym edges over pairs that also appear as neighbors somewhere.
    for _ in range(rng.randint(0, 10)):
        a, b = rng.sample(vocab, 2)
        triples.append((a, "Synonym", b))
    return triples[:max_triples]


# -- scripted pipeline backend ------------------------------------------------


def pipeline_default(request) -> str:
    """Deterministic staged behavior keyed on the request tag.

    Created questions mention only a hex token, so they can never leak a
    choice term; a quarter of refine calls rewrite; distractors never
    collide; verification answers a tag-derived letter (about one in five
    matches the shuffled gold key).
    """
    digest = stable_digest(f"{request.stage}|{request.tag}")
    if request.stage == "create":
        return f"Which candidate goes with code {digest[:8]}?"
    if request.stage == "refine":
        question = request.prompt.rsplit("\n\n", 1)[-1].strip()
        if int(digest[:8], 16) % 4 == 0:
            return f"Generally, {question[0].lower()}{question[1:]}"
        return question
    if request.stage == "distract":
        return json.dumps(
            {"additional_choice": [f"pick {digest[:6]}a", f"pick {digest[:6]}b"]}
        )
    if request.stage in ("verify", "eval"):
        return json.dumps({"answer": LETTERS[int(digest[8:16], 16) % 5]})
    raise AssertionError(f"unexpected stage {request.stage}")


def make_pipeline_backend(**overrides) -> MockBackend:
    return MockBackend(default=pipeline_default, **overrides)


def scripted_votes(task):
    """Two-annotator unanimity script: most tasks retained, some removed."""
    digest = stable_digest(task.task_id)
    if int(digest[:8], 16) % 3 == 0:
        return [("ann-a", "valid"), ("ann-b", "invalid")]
    return [("ann-a", "valid"), ("ann-b", "valid")]


def synthetic_dump_lines(lang: str = "en", hubs: int = 100, fanout: int = 5) -> list[str]:
    """hubs*fanout well-formed lines; every hub key qualifies for extraction."""
    lines = []
    relations = RELATION_WHITELIST
    for i in range(hubs):
        relation = relations[i % len(relations)]
        source = f"hub{i:03d}qu"
        for j in range(fanout):
            target = f"item{i:03d}x{j}"
            lines.append(dump_line(lang, source, relation, target))
    return lines
